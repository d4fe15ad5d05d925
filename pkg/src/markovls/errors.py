"""Exception types shared across the package."""


class MarkovLSError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(MarkovLSError, ValueError):
    """Invalid user-supplied configuration or arguments."""


class SimulationOverflowError(MarkovLSError, FloatingPointError):
    """A simulated trajectory left double-precision range."""

    def __init__(self, rollout: int, step: int):
        self.rollout = rollout
        self.step = step
        super().__init__(
            f"non-finite value in rollout {rollout} at step {step}; "
            "the system is too unstable for this horizon"
        )


class IllConditionedError(MarkovLSError, ArithmeticError):
    """A Gram matrix breached the condition-number budget."""

    def __init__(self, what: str, cond: float, limit: float = 1e12):
        self.cond = cond
        super().__init__(f"{what} has condition number {cond:.3e} > {limit:.0e}")


class RankDeficiencyError(IllConditionedError):
    """A regression does not have enough independent samples."""

    def __init__(self, what: str):  # noqa: D107 - message carries the context
        MarkovLSError.__init__(self, what)
        self.cond = float("inf")
