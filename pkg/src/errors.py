class SubordinacyError(Exception):
    """Base class for failures raised by the numerical modules"""


class GraphValidationError(SubordinacyError):
    def __init__(self, report):
        self.report = report
        super().__init__("invalid star-like graph: " + "; ".join(report.messages()))


class UndefinedVectorError(SubordinacyError):
    pass


class InsufficientLengthError(SubordinacyError):
    pass


class MFunctionConvergenceError(SubordinacyError):
    def __init__(self, z, depth, last, previous):
        self.z = z
        self.depth = depth
        self.last = last
        self.previous = previous
        super().__init__(
            f"m-function did not converge at z={z} by depth {depth}: "
            f"last iterates {previous} -> {last}"
        )


class SingularSchurError(SubordinacyError):
    pass


class OracleConvergenceError(SubordinacyError):
    pass


class PreconditionError(SubordinacyError):
    pass


class QuadratureError(SubordinacyError):
    pass


class ConfigError(SubordinacyError):
    pass
