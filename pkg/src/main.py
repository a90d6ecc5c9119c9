import argparse
import math
import sys
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from classification import (EnergyClassification, classify_energy, evidence_length, locate_eigenvalues,
                            sample_ladder, scan, stieltjes_invert)
from config import JOBS, OUTPUT_DIR, SEED, NumericsConfig, default_numerics, setup_logging
from config_loader import load_graph_config, load_run_config
from errors import ConfigError, SubordinacyError
from extrapolation import eps_ladder
from graph_model import free_n_graph, halfline_slice_coefficients, validate
from halfline import detect_subordinate
from m_matrix import assemble, build_slices, direct_oracle, m_k
from measure_tools import build_example_5_2
from multiplicity import multiplicity_bound, star_overlap_classify
from random_graphs import random_star_like, random_upper_points
from report_store import PLOT_KINDS, RunStore

TASKS = ("scan", "classify", "multiplicity", "star-overlap", "example-5-2", "selftest")
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


@dataclass
class RunConfig:
    task: str = "scan"
    graph: Optional[str] = None
    grid: Tuple[float, float, int] = (-3.0, 3.0, 601)
    energies: Optional[List[float]] = None
    out: str = OUTPUT_DIR
    seed: int = SEED
    jobs: int = JOBS
    eps_min: Optional[float] = None
    threshold: Optional[float] = None
    plots: List[str] = field(default_factory=list)
    log_level: Optional[str] = None
    selftest_graphs: int = 50
    selftest_points: int = 10

    def energy_grid(self) -> List[float]:
        if self.energies is not None:
            return [float(E) for E in self.energies]
        lo, hi, count = self.grid
        return [float(E) for E in np.linspace(lo, hi, int(count))]

    def numerics(self) -> NumericsConfig:
        eps_max_exp = None
        if self.eps_min is not None:
            eps_max_exp = int(round(-math.log2(self.eps_min)))
        return default_numerics().with_overrides(eps_max_exp=eps_max_exp, ratio_threshold=self.threshold)

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        if self.energies is None and int(self.grid[2]) < 1:
            raise ConfigError("grid count must be >= 1")
        if self.threshold is not None and self.threshold <= 0:
            raise ConfigError("threshold must be positive")
        if self.eps_min is not None and not (0 < self.eps_min < 2.0 ** -4):
            raise ConfigError("eps-min must lie in (0, 1/16)")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        for kind in self.plots:
            if kind not in PLOT_KINDS:
                raise ConfigError(f"unknown plot kind {kind!r}")


def parse_grid(text: str) -> Tuple[float, float, int]:
    """MIN:MAX:COUNT"""
    try:
        lo, hi, count = text.split(":")
        return float(lo), float(hi), int(count)
    except ValueError:
        raise ConfigError(f"grid must look like MIN:MAX:COUNT, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Subordinacy-based spectral analysis of star-like Jacobi graphs")
    parser.add_argument("--config", help="run config JSON")
    parser.add_argument("--graph", help="graph config JSON")
    parser.add_argument("--task", choices=TASKS)
    parser.add_argument("--grid", help="energy grid MIN:MAX:COUNT")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--eps-min", type=float, dest="eps_min")
    parser.add_argument("--threshold", type=float)
    parser.add_argument("--plot", action="append", default=None, help=f"plot data kind: {', '.join(PLOT_KINDS)}")
    parser.add_argument("--log-level", dest="log_level")
    return parser


def resolve_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """Defaults and environment, then the run config file, then command-line flags"""
    args = build_parser().parse_args(argv)
    cfg = RunConfig()
    if args.config:
        data = load_run_config(args.config)
        for key, value in data.items():
            key = key.replace("-", "_")
            if key == "grid" and isinstance(value, str):
                value = parse_grid(value)
            elif key == "grid":
                value = tuple(value)
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown run config key {key!r}")
            setattr(cfg, key, value)
    for key in ("task", "graph", "out", "seed", "jobs", "eps_min", "threshold", "log_level"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    if args.grid:
        cfg.grid = parse_grid(args.grid)
        cfg.energies = None
    if args.plot:
        cfg.plots = [k for entry in args.plot for k in entry.split(",") if k]
    cfg.validate()
    return cfg


def load_graph(cfg: RunConfig):
    if cfg.task == "example-5-2" and cfg.graph is None:
        return build_example_5_2()
    if cfg.graph is None:
        logger.info("No graph given; using the free half-line")
        return free_n_graph()
    return load_graph_config(cfg.graph)


def _flags(items: Sequence[str]) -> str:
    return ";".join(items)


def classification_rows(c: EnergyClassification, extra: Optional[Dict[str, Any]] = None) -> List[Dict[str, Any]]:
    if not c.records:
        return [dict({"E": c.energy, "root": "", "status": c.verdict, "flags": _flags(c.flags)}, **(extra or {}))]
    rows = []
    for root, record in c.records.items():
        row = {
            "E": c.energy, "root": root, "status": record.status, "ac": c.ac_support_member,
            "sing": c.singular_candidate, "kernel_dim": c.kernel_dim, "flags": _flags(c.flags),
        }
        row.update(extra or {})
        rows.append(row)
    return rows


def run_scan(cfg: RunConfig, store: RunStore, graph, coeffs, numerics, detailed: bool) -> Tuple[List[dict], List[str], bool]:
    result = scan(graph, coeffs, cfg.energy_grid(), numerics, cfg.jobs)
    rows = [row for c in result.classifications for row in classification_rows(c)]
    for i, c in enumerate(result.classifications):
        payload = c.to_dict()
        if not detailed:
            payload = {k: payload[k] for k in ("E", "verdict", "records", "flags")}
        store.write_evidence(f"E_{i:04d}", payload)
    summary = [f"{k}: {v}" for k, v in result.summary.items()]
    if cfg.plots:
        emit_plot_data(store, cfg.plots, graph, coeffs, cfg.energy_grid(), numerics)
    return rows, summary, bool(result.errors)


def run_multiplicity(cfg: RunConfig, store: RunStore, graph, coeffs, numerics) -> Tuple[List[dict], List[str], bool]:
    grid = cfg.energy_grid()
    energies = set(grid)
    if len(grid) > 1:
        energies.update(locate_eigenvalues(graph, coeffs, (min(grid), max(grid)), max(len(grid), 50), numerics))
    rows, summary, failed = [], [], False
    for i, E in enumerate(sorted(energies)):
        try:
            c = classify_energy(graph, coeffs, E, numerics, check_evidence=False)
            if not c.singular_candidate:
                continue
            report = multiplicity_bound(graph, coeffs, E, numerics)
        except SubordinacyError as e:
            logger.error(f"Multiplicity failed at E={E}: {str(e)}")
            rows.append({"E": E, "status": "error", "flags": f"error:{type(e).__name__}:{str(e)}"})
            failed = True
            continue
        lo, hi = report.dim_subordinate_space
        extra = {"rank": report.omega_rank, "dimS": lo if lo == hi else f"{lo}..{hi}", "bound": report.bound}
        rows.extend(classification_rows(c, extra))
        store.write_evidence(f"multiplicity_{i:04d}", report.to_dict())
        summary.append(f"E={E:.12g}: rank={report.omega_rank} dimS={lo}..{hi} bound={report.bound} "
                       f"eigenvalue={report.eigenvalue_flag}")
    if not summary:
        summary.append("no singular energies found")
    return rows, summary, failed


def run_star_overlap(cfg: RunConfig, store: RunStore, graph, coeffs, numerics) -> Tuple[List[dict], List[str], bool]:
    rows, counts, failed = [], {}, False
    for i, E in enumerate(cfg.energy_grid()):
        try:
            overlap = star_overlap_classify(graph, coeffs, E, numerics)
        except SubordinacyError as e:
            logger.error(f"Star overlap failed at E={E}: {str(e)}")
            rows.append({"E": E, "status": "error", "flags": f"error:{type(e).__name__}:{str(e)}"})
            failed = True
            continue
        counts[overlap.kind] = counts.get(overlap.kind, 0) + 1
        for root, member in overlap.memberships.items():
            rows.append({"E": E, "root": root, "status": overlap.kind, "dimS": overlap.dim_subordinate_space,
                         "bound": overlap.bound, "flags": "dirichlet_member" if member else ""})
        if overlap.kind != "neither":
            store.write_evidence(f"star_{i:04d}", overlap.to_dict())
    return rows, [f"{k}: {v}" for k, v in sorted(counts.items())], failed


def run_triangle_example(cfg: RunConfig, store: RunStore, graph, coeffs, numerics) -> Tuple[List[dict], List[str], bool]:
    E = 0.0
    c = classify_energy(graph, coeffs, E, numerics)
    report = multiplicity_bound(graph, coeffs, E, numerics)
    lo, hi = report.dim_subordinate_space
    extra = {"rank": report.omega_rank, "dimS": lo if lo == hi else f"{lo}..{hi}", "bound": report.bound}
    rows = classification_rows(c, extra)
    store.write_evidence("triangle_example", {"classification": c.to_dict(), "multiplicity": report.to_dict()})
    psi_l2 = [e.name for e in report.basis.elements if e.is_l2]
    checks = {
        "singular_candidate": c.singular_candidate,
        "dim S(0) = 2": (lo, hi) == (2, 2),
        "omega rank = 1": report.omega_rank == 1,
        "eigenvalue flag": report.eigenvalue_flag,
        "psi is l2, psi_tilde is not": psi_l2 == ["psi"],
    }
    summary = [f"{name}: {'ok' if ok else 'FAILED'}" for name, ok in checks.items()]
    summary.append(f"bound N_J(0) <= {report.bound}")
    if cfg.plots:
        emit_plot_data(store, cfg.plots, graph, coeffs, cfg.energy_grid(), numerics)
    return rows, summary, not all(checks.values())


def run_selftest(cfg: RunConfig, store: RunStore, numerics) -> Tuple[List[dict], List[str], bool]:
    """Schur identity, symmetry and Herglotz checks on random graphs"""
    rng = np.random.default_rng(cfg.seed)
    rows, worst, failures = [], 0.0, 0
    for g in range(cfg.selftest_graphs):
        graph, coeffs = random_star_like(rng)
        slices = build_slices(graph, coeffs, numerics)
        for z in random_upper_points(rng, cfg.selftest_points):
            M = assemble(graph, coeffs, z, slices, numerics)
            gap = float(np.max(np.abs(M.entries - direct_oracle(graph, coeffs, z))))
            ok = gap <= 1e-6 and M.symmetry_error() <= 1e-12 and M.min_im_eigenvalue() >= -1e-10
            worst = max(worst, gap)
            failures += not ok
            rows.append({"E": z.real, "root": f"graph_{g}", "status": "pass" if ok else "fail",
                         "flags": f"im={z.imag:.6g};gap={gap:.3e}"})
    summary = [f"checks: {len(rows)}", f"failures: {failures}", f"worst oracle gap: {worst:.3e}"]
    return rows, summary, failures > 0


def emit_plot_data(store: RunStore, kinds: Sequence[str], graph, coeffs, energies: Sequence[float],
                   numerics: NumericsConfig) -> List[str]:
    """Two-column (E, value) files for each requested kind"""
    if not len(energies):
        raise ValueError("no energies to plot")
    paths = []
    eps_min = 2.0 ** -numerics.eps_max_exp
    slices = build_slices(graph, coeffs, numerics)
    for kind in kinds:
        if kind == "im-trace":
            pairs = [(E, assemble(graph, coeffs, E + 1j * eps_min, slices, numerics).trace().imag) for E in energies]
        elif kind == "density":
            root = graph.halfline_roots[0]
            measure = coeffs.halfline_data[root].measure
            fn = measure.spec.borel_transform if measure is not None else (
                lambda z, s=slices[graph.index(root)]: m_k(s, z))
            ladder = eps_ladder(numerics.eps_min_exp, min(numerics.eps_max_exp, 20))
            result = stieltjes_invert(energies, ladder, sample_ladder(fn, energies, ladder), numerics=numerics)
            pairs = list(zip(result.energies, result.density))
        elif kind == "ratio-evidence":
            root = graph.halfline_roots[0]
            line = halfline_slice_coefficients(graph, coeffs, root)
            L = max(100, evidence_length(line, numerics) - 1)
            pairs = [(E, detect_subordinate(line, E, L, numerics=numerics).evidence[-1][1]) for E in energies]
        else:
            raise ValueError(f"unknown plot kind {kind!r}")
        paths.append(store.write_plot_data(kind, pairs))
    return paths


def run(cfg: RunConfig) -> int:
    numerics = cfg.numerics()
    store = RunStore(cfg.out)
    store.write_meta(asdict(cfg))
    logger.info(f"Starting task {cfg.task} -> {cfg.out}")
    if cfg.task == "selftest":
        rows, summary, failed = run_selftest(cfg, store, numerics)
    else:
        graph, coeffs = load_graph(cfg)
        report = validate(graph, coeffs)
        if not report.ok:
            raise ConfigError("; ".join(report.messages()))
        if cfg.task in ("scan", "classify"):
            rows, summary, failed = run_scan(cfg, store, graph, coeffs, numerics, cfg.task == "classify")
        elif cfg.task == "multiplicity":
            rows, summary, failed = run_multiplicity(cfg, store, graph, coeffs, numerics)
        elif cfg.task == "star-overlap":
            rows, summary, failed = run_star_overlap(cfg, store, graph, coeffs, numerics)
        else:
            rows, summary, failed = run_triangle_example(cfg, store, graph, coeffs, numerics)
    store.write_results(rows)
    store.write_summary([f"task: {cfg.task}"] + summary)
    logger.info(f"Task {cfg.task} finished: {'failed' if failed else 'ok'}; results in {store.results_path}")
    return EXIT_FAILURE if failed else EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cfg = resolve_config(argv)
    except ConfigError as e:
        logger.error(f"Config error: {str(e)}")
        return EXIT_CONFIG
    setup_logging(cfg.log_level)
    try:
        return run(cfg)
    except ConfigError as e:
        logger.error(f"Config error: {str(e)}")
        return EXIT_CONFIG
    except SubordinacyError as e:
        logger.error(f"Task {cfg.task} failed: {str(e)}")
        return EXIT_FAILURE
    except Exception as e:
        logger.exception(f"Task {cfg.task} crashed: {str(e)}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
