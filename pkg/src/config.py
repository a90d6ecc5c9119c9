import os
from dataclasses import dataclass, replace
from dotenv import load_dotenv
from loguru import logger

# Load environment variables
load_dotenv()

# Logging / output
LOG_LEVEL = os.getenv('SUBORD_LOG_LEVEL', 'INFO')
LOG_DIR = os.getenv('SUBORD_LOG_DIR', 'logs')
OUTPUT_DIR = os.getenv('SUBORD_OUTPUT_DIR', 'runs/latest')

# Run defaults
JOBS = int(os.getenv('SUBORD_JOBS', '1'))
SEED = int(os.getenv('SUBORD_SEED', '12345'))

# Boundary-value ladder eps_j = 2^-j
EPS_MIN_EXP = int(os.getenv('SUBORD_EPS_MIN_EXP', '3'))
EPS_MAX_EXP = int(os.getenv('SUBORD_EPS_MAX_EXP', '30'))

# Thresholds
KERNEL_SV_THRESHOLD = float(os.getenv('SUBORD_KERNEL_SV_THRESHOLD', '1e-8'))
OMEGA_SV_THRESHOLD = float(os.getenv('SUBORD_OMEGA_SV_THRESHOLD', '1e-6'))
RATIO_THRESHOLD = float(os.getenv('SUBORD_RATIO_THRESHOLD', '1e-2'))
RATIO_BAND = 5.0
L_MAX = int(os.getenv('SUBORD_L_MAX', '10000'))
DIVERGENCE_SLOPE = float(os.getenv('SUBORD_DIVERGENCE_SLOPE', '0.25'))
IM_POSITIVE_TOL = 1e-6

# m-function evaluation
M_TOLERANCE = float(os.getenv('SUBORD_M_TOLERANCE', '1e-13'))
M_INITIAL_DEPTH = 64
M_GROWTH = 2
M_MAX_DEPTH = int(os.getenv('SUBORD_M_MAX_DEPTH', '1048576'))
IM_FLOOR = float(os.getenv('SUBORD_IM_FLOOR', '1e-3'))

# Solution iteration
RENORM_THRESHOLD = 1e100

# Measure tools
MEASURE_DEPTH = 512
L2_TAIL_TOLERANCE = 1e-2


@dataclass(frozen=True)
class NumericsConfig:
    """Tunables shared by the numerical modules"""
    eps_min_exp: int = EPS_MIN_EXP
    eps_max_exp: int = EPS_MAX_EXP
    kernel_sv_threshold: float = KERNEL_SV_THRESHOLD
    omega_sv_threshold: float = OMEGA_SV_THRESHOLD
    ratio_threshold: float = RATIO_THRESHOLD
    ratio_band: float = RATIO_BAND
    l_max: int = L_MAX
    evidence_window: int = 5
    theta_grid: int = 64
    divergence_slope: float = DIVERGENCE_SLOPE
    im_positive_tol: float = IM_POSITIVE_TOL
    m_tolerance: float = M_TOLERANCE
    m_initial_depth: int = M_INITIAL_DEPTH
    m_growth: int = M_GROWTH
    m_max_depth: int = M_MAX_DEPTH
    im_floor: float = IM_FLOOR
    renorm_threshold: float = RENORM_THRESHOLD
    cond_limit: float = 1e14
    l2_tail_tolerance: float = L2_TAIL_TOLERANCE
    l2_min_decay: float = 0.5
    evidence_length: int = 4096

    def with_overrides(self, **changes) -> "NumericsConfig":
        """Copy with the given fields replaced; unknown or None values are ignored"""
        known = {k: v for k, v in changes.items() if v is not None and k in self.__dataclass_fields__}
        return replace(self, **known)


def default_numerics() -> NumericsConfig:
    return NumericsConfig()


_sink_id = None


def setup_logging(level: str = None, log_dir: str = None) -> None:
    """Configure the rotating file sink (idempotent)"""
    global _sink_id
    log_dir = log_dir or LOG_DIR
    os.makedirs(log_dir, exist_ok=True)
    if _sink_id is not None:
        logger.remove(_sink_id)
    _sink_id = logger.add(
        os.path.join(log_dir, "subordinacy_{time}.log"),
        rotation="50 MB",
        retention="10 days",
        level=level or LOG_LEVEL
    )
