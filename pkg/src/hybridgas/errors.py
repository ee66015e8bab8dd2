"""Exception types shared across the solver modules."""


class HybridGasError(Exception):
    """Base class for all solver errors."""


class NonPhysicalState(HybridGasError):
    """Conserved state with rho <= 0 or temperature below tolerance."""


class InvalidProbability(HybridGasError):
    """Collision probability exceeded 1 beyond floating-point tolerance."""


class DegenerateSample(HybridGasError):
    """Velocity matching requested on a sample with vanishing variance."""


class EmptySource(HybridGasError):
    """Density matching asked to replicate particles in an empty cell."""


class UnknownScenario(HybridGasError):
    """Requested builtin scenario name does not exist."""


class ZeroDt(HybridGasError):
    """Time-step selection underflowed."""


class SimulationError(HybridGasError):
    """Wraps any solver error with the step index at which it occurred."""

    def __init__(self, step_index: int, cause: Exception):
        super().__init__(f"step {step_index}: {cause}")
        self.step_index = step_index
        self.cause = cause
