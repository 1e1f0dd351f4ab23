"""
Errors raised by the round-trip functional and the arbitrage search.
"""


class StrategyError(ValueError):
    """Malformed round-trip strategy (no blocks, bad durations, not closed)."""


class InfeasibleBoundsError(ValueError):
    """Search bounds or budget that admit no strategy."""
