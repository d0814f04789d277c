"""Queue-size dependent order-flow intensities and their stationary laws.

Each visible level ``i`` (bid and ask share the table) carries three rate
curves indexed by the current queue size ``n``: limit-order arrivals,
market orders and cancellations, all in events per second.  A queue is a
birth-death chain with birth rate ``limit(n)`` and death rate
``market(n) + cancel(n)``, so its invariant law is a product of ratios.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAIL_RULES = ("hold", "linear")


class NonErgodicError(ValueError):
    """The intensity configuration admits no invariant probability law."""


@dataclass(frozen=True, eq=False)
class IntensityTable:
    """Rate arrays of shape ``(K, n_max + 1)``; row ``i - 1`` is level ``i``.

    Beyond ``n_max`` the ``"hold"`` tail freezes every rate at its ``n_max``
    value.  ``"linear"`` continues the last increment, which is only useful
    for describing unbounded configurations to :func:`check_ergodicity`.
    """

    limit: np.ndarray
    market: np.ndarray
    cancel: np.ndarray
    tail: str = "hold"
    _lists: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arrays = []
        for name in ("limit", "market", "cancel"):
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim == 1:
                a = a[None, :]
            if a.ndim != 2:
                raise ValueError(f"{name} rates must be a (K, n_max + 1) array")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrays.append(a)
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape):
            raise ValueError("limit, market and cancel arrays must share one shape")
        if self.tail not in TAIL_RULES:
            raise ValueError(f"tail must be one of {TAIL_RULES}, got {self.tail!r}")
        for name, a in zip(("limit", "market", "cancel"), arrays):
            bad = np.argwhere(~np.isfinite(a) | (a < 0))
            if len(bad):
                lvl, n = bad[0]
                raise ValueError(f"{name} rate at level {lvl + 1}, n={n} must be finite and >= 0")
        for name, a in (("market", arrays[1]), ("cancel", arrays[2])):
            if np.any(a[:, 0] != 0):
                lvl = int(np.argmax(a[:, 0] != 0)) + 1
                raise ValueError(f"{name} rate at level {lvl} must vanish on an empty queue (n=0)")
        # plain-list copies for the event loop (numpy scalar indexing is slow)
        lists = tuple(
            (a[0].tolist(), a[1].tolist(), a[2].tolist(), (a[0] + a[1] + a[2]).tolist())
            for a in zip(arrays[0], arrays[1], arrays[2])
        )
        object.__setattr__(self, "_lists", lists)

    @property
    def depth(self) -> int:
        return self.limit.shape[0]

    @property
    def n_max(self) -> int:
        return self.limit.shape[1] - 1

    def rates(self, level: int, n: int) -> tuple[float, float, float]:
        """``(limit, market, cancel)`` at queue size ``n`` of level ``|level|``."""
        i = abs(level) - 1
        if not 0 <= i < self.depth:
            raise ValueError(f"level {level} outside 1..{self.depth}")
        if n < 0:
            raise ValueError("queue size must be non-negative")
        m = self.n_max
        if n <= m:
            return float(self.limit[i, n]), float(self.market[i, n]), float(self.cancel[i, n])
        if self.tail == "hold" or m == 0:
            return float(self.limit[i, m]), float(self.market[i, m]), float(self.cancel[i, m])
        out = []
        for a in (self.limit, self.market, self.cancel):
            slope = a[i, m] - a[i, m - 1]
            out.append(max(0.0, float(a[i, m] + slope * (n - m))))
        return tuple(out)

    def scaled(self, factor: float) -> "IntensityTable":
        """Same dynamics on a clock running ``factor`` times faster."""
        return IntensityTable(self.limit * factor, self.market * factor, self.cancel * factor, self.tail)

    def __eq__(self, other):
        if not isinstance(other, IntensityTable):
            return NotImplemented
        return (
            self.tail == other.tail
            and np.array_equal(self.limit, other.limit)
            and np.array_equal(self.market, other.market)
            and np.array_equal(self.cancel, other.cancel)
        )

    __hash__ = None


def rho(table: IntensityTable, level: int, n: int) -> float:
    """Arrival/departure ratio ``limit(n) / (cancel(n+1) + market(n+1))``."""
    lam, _, _ = table.rates(level, n)
    _, mu_m, mu_c = table.rates(level, n + 1)
    out = mu_m + mu_c
    if out == 0.0:
        if lam == 0.0:
            return 0.0
        raise NonErgodicError(
            f"level {abs(level)}: no departures from queue size {n + 1} but arrivals at {n}"
        )
    return lam / out


def _weights(table: IntensityTable, level: int, n_max: int) -> np.ndarray:
    w = np.empty(n_max + 1)
    w[0] = 1.0
    for n in range(1, n_max + 1):
        w[n] = w[n - 1] * rho(table, level, n - 1)
    return w


def tail_mass(table: IntensityTable, level: int, n_max: int) -> float:
    """Invariant mass beyond ``n_max`` (exact under the ``hold`` tail)."""
    w = _weights(table, level, n_max)
    if w[-1] == 0.0:
        return 0.0
    if table.tail == "hold" and n_max >= table.n_max:
        r = rho(table, level, n_max)
        if r >= 1.0:
            raise NonErgodicError(f"level {abs(level)}: ratio {r:.4g} >= 1 in the tail")
        return float(w[-1] * r / (1.0 - r) / (w.sum() + w[-1] * r / (1.0 - r)))
    # generic tail: sum forward until the terms are negligible
    total, term, n = w.sum(), w[-1], n_max
    extra = 0.0
    for _ in range(1_000_000):
        term *= rho(table, level, n)
        n += 1
        extra += term
        if term <= 1e-18 * (total + extra):
            return float(extra / (total + extra))
    raise NonErgodicError(f"level {abs(level)}: invariant weights are not summable")


def truncation(table: IntensityTable, level: int, tol: float = 1e-12) -> int:
    """Smallest support bound whose neglected invariant mass is below ``tol``."""
    n = max(table.n_max, 1)
    while tail_mass(table, level, n) > tol:
        n *= 2
        if n > 1_000_000:
            raise NonErgodicError(f"level {abs(level)}: invariant weights are not summable")
    lo, hi = n // 2, n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_mass(table, level, mid) > tol:
            lo = mid
        else:
            hi = mid
    return hi


def invariant_distribution(
    table: IntensityTable, level: int, n_max: int | None = None, tail_tol: float = 1e-10
) -> np.ndarray:
    """Stationary law of one queue on ``{0, ..., n_max}``.

    ``pi(n) = pi(0) * prod_{j<n} rho(j)``, normalised over the returned
    support.  With ``n_max=None`` the support is chosen so that the
    neglected tail mass is below ``1e-12``.  An explicit ``n_max`` whose
    tail exceeds ``tail_tol`` is rejected; pass ``tail_tol=1.0`` to study
    the truncated chain itself.
    """
    if n_max is None:
        n_max = truncation(table, level)
    elif n_max < 0:
        raise ValueError("n_max must be non-negative")
    else:
        mass = tail_mass(table, level, n_max)
        if mass > tail_tol:
            raise ValueError(
                f"truncation at n_max={n_max} drops invariant mass {mass:.3g} > {tail_tol:g}"
            )
    w = _weights(table, level, n_max)
    return w / w.sum()


@dataclass(frozen=True)
class ErgodicityReport:
    passes: bool
    c_bound: int | None
    delta0: float | None
    H: float | None
    violation: str | None = None


def check_ergodicity(table: IntensityTable, n_scan: int | None = None) -> ErgodicityReport:
    """Check the drift and bounded-arrival sufficient conditions.

    (i) some ``C`` and ``delta0 > 0`` with ``limit(n) - market(n) - cancel(n)
    <= -delta0`` for every level and every ``n > C``; (ii) the total arrival
    rate over all ``2K`` queues is bounded by ``H``.  Under the ``linear``
    tail the asymptotic slopes decide both conditions.
    """
    n_scan = table.n_max if n_scan is None else n_scan
    K = table.depth
    levels = range(1, K + 1)

    if table.tail == "linear" and table.n_max >= 1:
        for lvl in levels:
            i = lvl - 1
            slope_f = table.limit[i, -1] - table.limit[i, -2]
            slope_g = (table.market[i, -1] + table.cancel[i, -1]) - (
                table.market[i, -2] + table.cancel[i, -2]
            )
            if slope_f > 0:
                return ErgodicityReport(False, None, None, None,
                                        f"condition (ii): arrivals grow without bound at level {lvl}")
            if slope_f - slope_g > 0 or (slope_f == slope_g and _drift(table, lvl, table.n_max) >= 0):
                return ErgodicityReport(False, None, None, None,
                                        f"condition (i): non-negative net drift in the tail of level {lvl}")

    # drift f - g on 0..n_scan; beyond that the tail is frozen (or checked above)
    c_bound = 0
    for lvl in levels:
        d = np.array([_drift(table, lvl, n) for n in range(n_scan + 1)])
        if d[-1] >= 0:
            n_bad = int(np.flatnonzero(d >= 0)[-1])
            return ErgodicityReport(False, None, None, None,
                                    f"condition (i): drift {d[-1]:.4g} >= 0 at level {lvl}, n={n_bad}"
                                    " persists in the tail")
        nonneg = np.flatnonzero(d >= 0)
        if len(nonneg):
            c_bound = max(c_bound, int(nonneg[-1]))
    delta0 = min(
        -_drift(table, lvl, n) for lvl in levels for n in range(c_bound + 1, n_scan + 1)
    ) if c_bound < n_scan else min(-_drift(table, lvl, n_scan) for lvl in levels)
    H = 2.0 * sum(max(table.rates(lvl, n)[0] for n in range(n_scan + 1)) for lvl in levels)
    return ErgodicityReport(True, c_bound, float(delta0), float(H))


def _drift(table: IntensityTable, level: int, n: int) -> float:
    lam, mu_m, mu_c = table.rates(level, n)
    return lam - mu_m - mu_c


def stationary_event_rate(table: IntensityTable) -> float:
    """Mean total event rate of the full book (both sides) under its invariant law."""
    total = 0.0
    for lvl in range(1, table.depth + 1):
        pi = invariant_distribution(table, lvl)
        rates = np.array([sum(table.rates(lvl, n)) for n in range(len(pi))])
        total += 2.0 * float(pi @ rates)
    return total


# per level: empty-queue refill rate, limit base, limit decay amplitude,
# cancel slope, market base, market decay amplitude (before rescaling)
_DEFAULT_SHAPE = (
    (2.5, 0.20, 0.80, 0.08, 0.25, 0.35),
    (1.5, 0.20, 0.70, 0.08, 0.05, 0.10),
    (1.0, 0.20, 0.60, 0.06, 0.02, 0.00),
)


def default_intensities(n_max: int = 30, event_rate: float = 7.0) -> IntensityTable:
    """Stylised large-tick table with three levels per side.

    Limit arrivals fall with the queue size, cancellations grow linearly and
    market orders concentrate at the best level and on small queues.  An
    empty queue refills fast, strongest at the best level.  The table is
    rescaled so that the whole book produces ``event_rate`` events per
    second on average under its invariant law.
    """
    n = np.arange(n_max + 1)
    shape = (len(_DEFAULT_SHAPE), n_max + 1)
    L, M, C = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    for i, (r0, lb, la, cs, mb, ma) in enumerate(_DEFAULT_SHAPE):
        L[i] = lb + la * np.exp(-n / 15.0)
        L[i, 0] = r0
        C[i] = cs * n
        M[i, 1:] = mb + ma * np.exp(-(n[1:] - 1) / 2.0)
    table = IntensityTable(L, M, C)
    return table.scaled(event_rate / stationary_event_rate(table))
