"""Queue-reactive order book simulation and reinforcement-learning trade execution."""

__version__ = "0.1.0"

from .intensities import (  # noqa: E402
    IntensityTable,
    NonErgodicError,
    check_ergodicity,
    default_intensities,
    invariant_distribution,
)
from .qrm import (  # noqa: E402
    DegenerateBookError,
    LobState,
    QrmParams,
    apply_event,
    apply_market_order,
    initial_state,
    mid_price,
    next_event,
    quotes,
    sample_invariant_book,
    simulate_until,
)
from .rng import stream  # noqa: E402

__all__ = [
    "IntensityTable", "NonErgodicError", "check_ergodicity", "default_intensities",
    "invariant_distribution", "DegenerateBookError", "LobState", "QrmParams", "apply_event",
    "apply_market_order", "initial_state", "mid_price", "next_event", "quotes",
    "sample_invariant_book", "simulate_until", "stream",
]
