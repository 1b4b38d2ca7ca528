"""Exception types shared across the package."""


class GraphError(ValueError):
    """Raised for malformed interference graphs or cluster partitions."""


class DesignError(ValueError):
    """Raised for invalid design parameters."""


class EnumerationTooLarge(RuntimeError):
    """Raised when an exact computation would enumerate too many assignments."""

    def __init__(self, size: int, budget: int):
        super().__init__(
            f"enumeration too large: support has {size} points, budget is {budget}"
        )
        self.size = size
        self.budget = budget


class PositivityError(ValueError):
    """Raised when a propensity score needed for H-T weighting is 0 or 1."""

    def __init__(self, violations):
        self.violations = list(violations)
        shown = ", ".join(
            f"unit {i} at (z={t.z}, e={t.e}) has pi={p!r}" for i, t, p in self.violations[:5]
        )
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(
            "positivity fails: unbiasedness requires 0 < pi_i(tau) < 1 for both "
            f"contrasted combinations; {shown}{more}"
        )


class OutcomeError(ValueError):
    """Raised when a potential-outcome table lacks a required combination."""


class ConfigError(ValueError):
    """Raised for invalid scenario configuration, with the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
