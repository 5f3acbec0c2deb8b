class ConstraintViolation(ValueError):
    """An input breaks one of the C1..C12 feasibility constraints."""

    def __init__(self, constraint: str, message: str):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint


class GeometryError(ValueError):
    """Degenerate or unavailable link geometry (zero distance, satellite below the mask)."""


class ProjectionError(RuntimeError):
    """The feasible set is empty for the binding constraints."""

    def __init__(self, constraints, message: str = ""):
        super().__init__(f"cannot project onto feasible set ({', '.join(constraints)}) {message}".strip())
        self.constraints = tuple(constraints)


class TrainingDivergence(FloatingPointError):
    """A training loss or parameter became non-finite."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace or []
