"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument breaks the documented precondition of an operation."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class DegenerateMeasureError(RuntimeError):
    """A measure estimate has no positive mass left after clamping."""


class UnsatisfiableObjective(RuntimeError):
    """Every candidate scored as an infinite divergence."""


class TrainingDiverged(RuntimeError):
    def __init__(self, step, losses):
        parts = ", ".join(f"{k}={v!r}" for k, v in losses.items())
        super().__init__(f"non-finite loss at step {step}: {parts}")
        self.step = step
        self.losses = dict(losses)
