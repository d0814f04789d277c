"""Queue-reactive order book: state, event engine and reference-price moves.

The book holds ``2K`` queues ``q_{-K} .. q_{-1}, q_1 .. q_K`` (in AES units)
around an unobservable reference price.  Level ``i`` sits at
``ref + sign(i) * (|i| - 1/2) * tick``: the reference lies halfway between
two ticks and the best quotes are half a tick away from it.  Prices are
tracked internally as integers in half-tick units.

Functions that take ``rng`` only ever call ``rng.random()``, so either a
``numpy.random.Generator`` or a :class:`~qrmexec.rng.BufferedUniform` works.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .intensities import IntensityTable, invariant_distribution


class DegenerateBookError(RuntimeError):
    """One side of the visible book is entirely empty; quotes are undefined."""


class FrozenBookError(RuntimeError):
    """Total event intensity is zero; the jump process cannot move."""


class EventKind(IntEnum):
    LIMIT = 0
    MARKET = 1
    CANCEL = 2
    TRADER = 3


@dataclass(frozen=True, eq=False)
class QrmParams:
    """Model configuration.  ``initial_ref_price`` must be an odd multiple of ``tick/2``."""

    intensities: IntensityTable
    tick: float = 0.01
    theta: float = 0.7
    theta_reinit: float = 0.85
    aes: tuple[float, ...] = (1.0, 1.0, 1.0)
    initial_ref_price: float = 100.005

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not self.tick > 0:
            raise ValueError("tick must be positive")
        for name in ("theta", "theta_reinit"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        aes = tuple(float(a) for a in np.atleast_1d(self.aes))
        if len(aes) == 1:
            aes = aes * self.K
        if len(aes) != self.K or any(not a > 0 for a in aes):
            raise ValueError(f"aes needs {self.K} positive entries")
        object.__setattr__(self, "aes", aes)
        self.ref_half_ticks(self.initial_ref_price)

    @property
    def K(self) -> int:
        return self.intensities.depth

    def ref_half_ticks(self, price: float) -> int:
        """Convert a reference price to half ticks, enforcing the half-tick grid."""
        h = price / (self.tick / 2)
        r = round(h)
        if abs(h - r) > 1e-6 or r % 2 == 0:
            raise ValueError(
                f"reference price {price} must sit halfway between ticks of size {self.tick}"
            )
        return int(r)

    @cached_property
    def invariant(self) -> tuple[np.ndarray, ...]:
        """Invariant law of each level ``1..K`` (tail mass below 1e-12)."""
        return tuple(invariant_distribution(self.intensities, lvl) for lvl in range(1, self.K + 1))

    @cached_property
    def _by_index(self) -> tuple[tuple[list[float], ...], ...]:
        # rate lists per book array index (bid levels first, as in LobState)
        lists = self.intensities._lists
        K = self.K
        return tuple(lists[(K - i if i < K else i - K + 1) - 1] for i in range(2 * K))

    @cached_property
    def _cdfs(self) -> tuple[list[float], ...]:
        out = []
        for pi in self.invariant:
            c = np.cumsum(pi)
            c[-1] = 1.0
            out.append(c.tolist())
        return tuple(out)

    @cached_property
    def _cdfs_nonempty(self) -> tuple[list[float], ...]:
        out = []
        for pi in self.invariant:
            p = pi.copy()
            p[0] = 0.0
            c = np.cumsum(p / p.sum())
            c[-1] = 1.0
            out.append(c.tolist())
        return tuple(out)


@dataclass
class LobState:
    """Queue sizes in paper order ``[q_-K .. q_-1, q_1 .. q_K]``."""

    queues: list[int]
    ref_half: int
    tick: float
    clock: float = 0.0

    @property
    def K(self) -> int:
        return len(self.queues) // 2

    @property
    def ref_price(self) -> float:
        return self.ref_half * self.tick / 2

    def queue(self, level: int) -> int:
        return self.queues[level_index(level, self.K)]

    def level_price(self, level: int) -> float:
        return (self.ref_half + _half_offset(level)) * self.tick / 2

    def copy(self) -> "LobState":
        return LobState(list(self.queues), self.ref_half, self.tick, self.clock)


class LobEvent(NamedTuple):
    kind: EventKind
    level: int
    size: int
    dt: float


@dataclass(frozen=True)
class PriceMoveOutcome:
    mid_changed: bool = False
    ref_moved: bool = False
    redraw: bool = False


NO_MOVE = PriceMoveOutcome()


class Quotes(NamedTuple):
    best_bid: float
    best_ask: float
    mid: float


class Fill(NamedTuple):
    price: float
    size: int


class LogRow(NamedTuple):
    clock: float
    kind: EventKind
    level: int
    size: int
    mid: float
    ref: float


def level_index(level: int, K: int) -> int:
    if level < 0 and -K <= level:
        return K + level
    if 0 < level <= K:
        return K + level - 1
    raise ValueError(f"level {level} outside -{K}..-1, 1..{K}")


def index_level(idx: int, K: int) -> int:
    return idx - K if idx < K else idx - K + 1


def _half_offset(level: int) -> int:
    return 2 * level - 1 if level > 0 else 2 * level + 1


def initial_state(params: QrmParams, queues=None) -> LobState:
    q = [0] * (2 * params.K) if queues is None else [int(v) for v in queues]
    if len(q) != 2 * params.K or any(v < 0 for v in q):
        raise ValueError(f"need {2 * params.K} non-negative queue sizes")
    return LobState(q, params.ref_half_ticks(params.initial_ref_price), params.tick)


# --------------------------------------------------------------------------
# quotes


def best_indices(state: LobState) -> tuple[int, int]:
    """Array indices of the best bid and best ask queues."""
    q, K = state.queues, len(state.queues) // 2
    b = K - 1
    while b >= 0 and q[b] == 0:
        b -= 1
    a = K
    while a < 2 * K and q[a] == 0:
        a += 1
    if b < 0 or a == 2 * K:
        raise DegenerateBookError(f"empty {'bid' if b < 0 else 'ask'} side: {q}")
    return b, a


def _quote_half(state: LobState) -> tuple[int, int]:
    b, a = best_indices(state)
    K = len(state.queues) // 2
    return state.ref_half + 2 * (b - K) + 1, state.ref_half + 2 * (a - K) + 1


def quotes(state: LobState) -> Quotes:
    """Best bid, best ask and mid (lowest/highest non-empty level per side)."""
    bid, ask = _quote_half(state)
    h = state.tick / 2
    return Quotes(bid * h, ask * h, (bid + ask) * h / 2)


def mid_price(state: LobState) -> float:
    bid, ask = _quote_half(state)
    return (bid + ask) * state.tick / 4


def mid_half(state: LobState) -> int:
    """Mid-price times four over the tick (exact integer; two units per half tick)."""
    bid, ask = _quote_half(state)
    return bid + ask


# --------------------------------------------------------------------------
# sampling from the invariant law


def _draw(cdf: list[float], rng) -> int:
    return bisect.bisect_right(cdf, rng.random())


def sample_invariant_book(params: QrmParams, rng, state: LobState | None = None,
                          nonempty: bool = False) -> LobState:
    """Draw every queue independently from its level's invariant law.

    ``ref`` is kept from ``state`` (or set to the initial reference price).
    With ``nonempty=True`` each queue is drawn conditionally on being
    non-empty, the typical configuration used by the impact experiments.
    """
    K = params.K
    cdfs = params._cdfs_nonempty if nonempty else params._cdfs
    q = [0] * (2 * K)
    for j in range(K):
        q[K - 1 - j] = _draw(cdfs[j], rng)
        q[K + j] = _draw(cdfs[j], rng)
    if state is None:
        return LobState(q, params.ref_half_ticks(params.initial_ref_price), params.tick)
    return LobState(q, state.ref_half, state.tick, state.clock)


def _redraw(state: LobState, params: QrmParams, rng) -> None:
    # a redraw with an entire side empty has no quotes; resample (the conditional
    # law stays bid/ask symmetric, so the mean price response is unaffected)
    K = params.K
    cdfs = params._cdfs
    q = state.queues
    while True:
        for j in range(K):
            q[K - 1 - j] = _draw(cdfs[j], rng)
            q[K + j] = _draw(cdfs[j], rng)
        if any(q[:K]) and any(q[K:]):
            return


# --------------------------------------------------------------------------
# event engine


def total_intensity(state: LobState, params: QrmParams) -> float:
    t, K = params.intensities, state.K
    return sum(sum(t.rates(index_level(i, K), n)) for i, n in enumerate(state.queues))


def _queue_totals(q: list[int], params: QrmParams) -> list[float]:
    table = params.intensities
    n_max = table.n_max
    out = []
    for i, n in enumerate(q):
        T = params._by_index[i][3]
        if n <= n_max:
            out.append(T[n])
        elif table.tail == "hold":
            out.append(T[n_max])
        else:
            lam, mu, c = table.rates(index_level(i, len(q) // 2), n)
            out.append(lam + mu + c)
    return out


def _select(q: list[int], tots: list[float], u: float, params: QrmParams) -> tuple[int, int]:
    """Queue index and event kind for a uniform ``u`` scaled by the total rate."""
    last = len(q) - 1
    i = 0
    acc = tots[0]
    while u >= acc and i < last:
        i += 1
        acc += tots[i]
    if u >= acc:
        # rounding at the upper edge: fall back to the last queue that can move
        while i > 0 and tots[i] == 0.0:
            i -= 1
        u = acc - 0.5 * tots[i]
    v = u - (acc - tots[i])
    n = q[i]
    table = params.intensities
    if n <= table.n_max or table.tail == "hold":
        nn = n if n <= table.n_max else table.n_max
        L, M, _, _ = params._by_index[i]
        lam, mu = L[nn], M[nn]
    else:
        lam, mu, _ = table.rates(index_level(i, len(q) // 2), n)
    if v < lam:
        return i, 0
    if v < lam + mu:
        return i, 1
    return i, 2


def next_event(state: LobState, params: QrmParams, rng) -> LobEvent:
    """Race of the ``6K`` exponential clocks: the winning event and its waiting time.

    Draws two uniforms: the first picks the event with probability
    proportional to its rate, the second the ``Exp(total)`` waiting time.
    Every event has size one AES unit.
    """
    q = state.queues
    tots = _queue_totals(q, params)
    total = sum(tots)
    if not total > 0.0:
        raise FrozenBookError("total event intensity is zero")
    u = rng.random() * total
    dt = -math.log(1.0 - rng.random()) / total
    i, kind = _select(q, tots, u, params)
    return LobEvent(EventKind(kind), index_level(i, len(q) // 2), 1, dt)


def _is_best(q: list[int], idx: int, K: int) -> bool:
    if idx >= K:
        return not any(q[K:idx])
    return not any(q[idx + 1:K])


def _after_depletion(state: LobState, idx: int, params: QrmParams, rng) -> PriceMoveOutcome:
    """Reference-price response once queue ``q_{+-1}`` has just been emptied."""
    q, K = state.queues, len(state.queues) // 2
    if rng.random() >= params.theta:
        return PriceMoveOutcome(True, False, False)
    up = idx >= K
    state.ref_half += 2 if up else -2
    if rng.random() < params.theta_reinit:
        _redraw(state, params, rng)
        return PriceMoveOutcome(True, True, True)
    # shift: volumes stay at their prices, indices move by one; the newly
    # visible outermost level is drawn from the level-K invariant law
    fresh = _draw(params._cdfs[K - 1], rng)
    if up:
        del q[0]
        q.append(fresh)
    else:
        q.pop()
        q.insert(0, fresh)
    return PriceMoveOutcome(True, True, False)


def _check_sides(q: list[int], K: int) -> None:
    if not any(q[:K]) or not any(q[K:]):
        raise DegenerateBookError(f"one side of the book is empty: {q}")


def apply_event(state: LobState, event: LobEvent, params: QrmParams, rng) -> tuple[LobState, PriceMoveOutcome]:
    """Apply ``event`` in place; returns the (same) state and the price response.

    Emptying ``q_1`` or ``q_-1`` moves the mid, and with probability
    ``theta`` the reference follows by one tick; then with probability
    ``theta_reinit`` the whole book is redrawn, otherwise volumes shift.
    Refills and deeper depletions change the mid without touching the
    reference price.
    """
    q, K = state.queues, len(state.queues) // 2
    idx = level_index(event.level, K)
    size = event.size
    if size < 0:
        raise ValueError("event size must be non-negative")
    if event.kind == EventKind.LIMIT:
        was_empty_best = q[idx] == 0 and _is_best(q, idx, K)
        q[idx] += size
        return state, (PriceMoveOutcome(True) if was_empty_best and size > 0 else NO_MOVE)
    if size > q[idx]:
        raise ValueError(f"cannot remove {size} units from level {event.level} holding {q[idx]}")
    if size == 0:
        return state, NO_MOVE
    best = _is_best(q, idx, K)
    q[idx] -= size
    if q[idx] > 0 or not best:
        return state, NO_MOVE
    if idx == K or idx == K - 1:
        out = _after_depletion(state, idx, params, rng)
    else:
        out = PriceMoveOutcome(True)
    _check_sides(q, K)
    return state, out


def apply_market_order(state: LobState, side: str, size: int, params: QrmParams, rng
                       ) -> tuple[LobState, Fill, PriceMoveOutcome]:
    """Exogenous market order against the best quote of ``side``.

    ``side="ask"`` buys from the best ask, ``side="bid"`` sells into the
    best bid.  The order never walks the book: ``size`` above the best
    volume is rejected.  Emptying the best queue triggers the same response
    as an endogenous depletion.
    """
    if side not in ("ask", "bid"):
        raise ValueError("side must be 'ask' or 'bid'")
    size = int(size)
    if size < 0:
        raise ValueError("order size must be non-negative")
    b, a = best_indices(state)
    idx = a if side == "ask" else b
    K = len(state.queues) // 2
    price = (state.ref_half + 2 * (idx - K) + 1) * state.tick / 2
    if size == 0:
        return state, Fill(price, 0), NO_MOVE
    if size > state.queues[idx]:
        raise ValueError(f"order of {size} exceeds best {side} volume {state.queues[idx]}")
    ev = LobEvent(EventKind.TRADER, index_level(idx, K), size, 0.0)
    state, out = apply_event(state, ev, params, rng)
    return state, Fill(price, size), out


def step(state: LobState, params: QrmParams, rng) -> tuple[int, int, float, bool]:
    """Draw and apply one endogenous event in place.

    Equivalent to :func:`next_event` followed by :func:`apply_event` (same
    uniforms, same arithmetic) without building intermediate objects.
    Returns ``(kind, queue index, dt, mid_changed)``.
    """
    q = state.queues
    tots = _queue_totals(q, params)
    total = sum(tots)
    if not total > 0.0:
        raise FrozenBookError("total event intensity is zero")
    u = rng.random() * total
    dt = -math.log(1.0 - rng.random()) / total
    i, kind = _select(q, tots, u, params)
    K = len(q) // 2
    if kind == 0:
        if q[i] == 0 and _is_best(q, i, K):
            q[i] = 1
            return kind, i, dt, True
        q[i] += 1
        return kind, i, dt, False
    best = _is_best(q, i, K)
    q[i] -= 1
    if q[i] > 0 or not best:
        return kind, i, dt, False
    if i == K or i == K - 1:
        _after_depletion(state, i, params, rng)
    _check_sides(q, K)
    return kind, i, dt, True


def simulate_until(state: LobState, duration: float, params: QrmParams, rng,
                   record: bool = True) -> tuple[LobState, list[LogRow]]:
    """Run endogenous events for ``duration`` seconds (state updated in place).

    The event whose waiting time would cross the end of the window is
    discarded (memorylessness makes this exact) and the clock lands on
    ``start + duration``.  With ``record=False`` the log stays empty.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    start = state.clock
    log: list[LogRow] = []
    if duration == 0:
        return state, log
    q = state.queues
    K = len(q) // 2
    elapsed = 0.0
    rand = rng.random
    while True:
        tots = _queue_totals(q, params)
        total = sum(tots)
        if not total > 0.0:
            raise FrozenBookError("total event intensity is zero")
        u = rand() * total
        dt = -math.log(1.0 - rand()) / total
        if elapsed + dt > duration:
            break
        elapsed += dt
        state.clock = start + elapsed
        i, kind = _select(q, tots, u, params)
        if kind == 0:
            q[i] += 1
        else:
            best = _is_best(q, i, K)
            q[i] -= 1
            if q[i] == 0 and best:
                if i == K or i == K - 1:
                    _after_depletion(state, i, params, rng)
                _check_sides(q, K)
        if record:
            log.append(LogRow(state.clock, EventKind(kind), index_level(i, K), 1,
                              mid_price(state), state.ref_price))
    state.clock = start + duration
    return state, log


def simulate_events(state: LobState, n_events: int, params: QrmParams, rng) -> LobState:
    """Apply exactly ``n_events`` endogenous events (clock advanced by their waiting times)."""
    for _ in range(n_events):
        dt = step(state, params, rng)[2]
        state.clock += dt
    return state
