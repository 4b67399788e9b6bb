"""Exception types shared across the package."""


class InvalidModeError(ValueError):
    """Mode index outside the tensor's order."""


class InvalidShapeError(ValueError):
    """Operands whose dimensions are inconsistent with the operation."""


class RankTooLargeError(ValueError):
    """Requested rank exceeds what the tensor's unfoldings can support."""


class DivergenceError(RuntimeError):
    """A gradient update produced non-finite entries."""

    def __init__(self, mode: int, step: int):
        self.mode = mode
        self.step = step
        super().__init__(
            f"non-finite factor entries in mode {mode} after step {step}; "
            "reduce the step size"
        )
