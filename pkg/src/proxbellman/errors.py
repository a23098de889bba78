"""
Exception hierarchy shared by every proxbellman module.
"""

from typing import Any, List, Optional


class ProxBellmanError(Exception):
    """Base class for all package errors"""


class DomainError(ProxBellmanError, ValueError):
    """Input outside the operator's domain (non-finite values, bad shapes, bad grids)"""


class ConfigError(ProxBellmanError, ValueError):
    """Unknown variant/agent or an invalid configuration value"""


class SolverError(ProxBellmanError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance"""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class ConjugateGradientError(SolverError):
    pass


class ProxSolverError(SolverError):
    pass


class FixedPointError(SolverError):
    pass


class StepSizeError(SolverError):
    """A proximal-gradient step increased the subproblem objective"""


class TrainingError(ProxBellmanError, RuntimeError):
    """Training aborted; carries the step and the trace collected so far"""

    def __init__(self, message: str, step: int, trace: Optional[List[Any]] = None):
        super().__init__(f"[step {step}] {message}")
        self.reason = message
        self.step = step
        self.trace = trace if trace is not None else []


class ReportError(ProxBellmanError, ValueError):
    """Nothing to aggregate, or records that cannot form a table"""
