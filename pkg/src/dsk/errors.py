"""Exception types shared across modules."""


class TheoremCheckFailed(AssertionError):
    """A proven inequality failed on concrete data; carries the clause id."""

    def __init__(self, clause: str, message: str):
        super().__init__(f"[{clause}] {message}")
        self.clause = clause


class GuaranteeViolation(TheoremCheckFailed):
    """A construction returned less than its guarantee."""
