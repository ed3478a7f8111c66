from typing import Optional


class SwitchLQError(Exception):
    """Base exception for every error raised by switchlq."""
    pass


class ProblemStructureError(SwitchLQError):
    """Exception raised for shape mismatches, non-finite or asymmetric data.

    Structural errors mean the input is not a problem instance at all; they
    are distinct from failed assumption checks, which are reported through a
    ``ValidationReport``.
    """

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        self.message = f"{field}: {message}" if field else message
        super().__init__(self.message)


class SingularMatrixError(SwitchLQError):
    """Exception raised when a per-regime matrix that must be inverted is singular."""

    def __init__(self, what: str, regime: int, min_eigenvalue: float):
        self.what = what
        self.regime = regime
        self.min_eigenvalue = min_eigenvalue
        self.message = (
            f"{what} is singular in regime {regime + 1} "
            f"(smallest eigenvalue {min_eigenvalue:.3e})"
        )
        super().__init__(self.message)


class SolverError(SwitchLQError):
    """Base exception for numerical solver failures."""
    pass


class StepSizeUnderflowError(SolverError):
    """Exception raised when adaptive step control cannot meet the tolerance."""

    def __init__(self, time: float, step: float):
        self.time = time
        self.step = step
        self.message = f"step size underflow at t={time:.6g} (h={step:.3e})"
        super().__init__(self.message)


class RegularityLossError(SolverError):
    """Exception raised when R + DᵀPD stops being positive definite along a solve."""

    def __init__(self, time: float, regime: int, margin: float):
        self.time = time
        self.regime = regime
        self.margin = margin
        self.message = (
            f"regularity margin lost at t={time:.6g} in regime {regime + 1} "
            f"(lambda_min(R + D'PD) = {margin:.3e})"
        )
        super().__init__(self.message)


class HorizonCapError(SolverError):
    """Exception raised when the Riccati flow has not become stationary by t_max."""

    def __init__(self, t_max: float, residual: float):
        self.t_max = t_max
        self.residual = residual
        self.message = (
            f"horizon cap reached (t_max={t_max:.6g}) with residual {residual:.3e}; "
            "the instance may not be stabilizable"
        )
        super().__init__(self.message)


class NotStabilizingError(SolverError):
    """Exception raised when a gain does not make the closed loop mean-square stable."""

    def __init__(self, rate: float, what: str = "gain"):
        self.rate = rate
        self.message = f"{what} not stabilizing (closed-loop moment abscissa {rate:.6g} >= 0)"
        super().__init__(self.message)


class CertificateError(SwitchLQError):
    """Exception raised for malformed dissipativity certificates."""
    pass


class FitError(SwitchLQError):
    """Exception raised when an exponential rate cannot be fitted."""
    pass


class SimulationDivergedError(SwitchLQError):
    """Exception raised when a simulated trajectory overflows."""

    def __init__(self, time: float):
        self.time = time
        self.message = f"unstable simulation: state overflow at t={time:.6g}"
        super().__init__(self.message)


class ConfigError(SwitchLQError):
    """Exception raised for malformed configs and invalid run parameters."""

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        self.field = field
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}" + (f", column {column}" if column is not None else ""))
        if field:
            where.append(f"field '{field}'")
        self.message = f"{'; '.join(where)}: {message}" if where else message
        super().__init__(self.message)
