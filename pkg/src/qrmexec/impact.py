"""Price response to an exogenous buy market order.

A book is drawn from the invariant law with every queue non-empty and the
reference equal to the mid; a buyer then consumes all (or the floor of half)
of the best ask and the book evolves endogenously.  Paths are indexed by
event count: entry 0 is the pre-trade mid, entry 1 the mid right after the
trade and entry ``j + 1`` the mid after the ``j``-th subsequent event.

The short-term quantity is the mid change at the first subsequent event
that moves the mid, which is what the closed-form next-move drift
approximates.  That event is classified as a bid refill, an ask refill or
something else (a further depletion or a redraw, for instance).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .qrm import (
    DegenerateBookError,
    EventKind,
    QrmParams,
    apply_market_order,
    index_level,
    mid_half,
    sample_invariant_book,
    simulate_until,
    step,
)
from .rng import BufferedUniform, as_uniform_source, stream

CONDITIONS = ("none", "bid-refill", "ask-refill")
# safety cap when waiting for the first mid move after the horizon
_MAX_WAIT_EVENTS = 100_000


def theoretical_jump(theta: float, theta_reinit: float, tick: float) -> float:
    """Expected mid change when a buy order empties the best ask."""
    return (1.0 + theta * theta_reinit) * tick / 2.0


def theoretical_next_drift(theta: float, theta_reinit: float, tick: float) -> float:
    """First-order expected mid move at the next quote change after the depletion.

    Positive means the price keeps moving with the trade, negative means it
    reverts.
    """
    return (theta * (2.0 - theta_reinit) - 1.0) * tick / 2.0


@dataclass(frozen=True)
class ImpactExperimentSpec:
    thetas: tuple[float, ...] = (0.7,)
    theta_reinits: tuple[float, ...] = (0.85,)
    n_sims: int = 20_000
    horizon: int = 75
    mo_fraction: float = 1.0
    conditioning: str = "none"
    theta_override: float | None = None
    lag: int = 75

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(float(v) for v in np.atleast_1d(self.thetas)))
        object.__setattr__(self, "theta_reinits", tuple(float(v) for v in np.atleast_1d(self.theta_reinits)))
        if self.n_sims < 1:
            raise ValueError("n_sims must be at least 1")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.lag < 1:
            raise ValueError("lag must be at least 1")
        if self.mo_fraction not in (0.5, 1.0):
            raise ValueError("mo_fraction must be 0.5 or 1.0")
        if self.conditioning not in CONDITIONS:
            raise ValueError(f"conditioning must be one of {CONDITIONS}")
        for v in self.thetas + self.theta_reinits:
            if not 0.5 <= v <= 1.0:
                raise ValueError(f"grid value {v} outside [0.5, 1.0]")
        if self.theta_override is not None and not 0.0 <= self.theta_override <= 1.0:
            raise ValueError("theta_override must lie in [0, 1]")


@dataclass
class ImpactResult:
    """Averages over the simulations kept by the conditioning filter.

    ``mean``/``se`` are indexed like ``grid`` (event counts, or seconds for
    the repeated-depletion experiment) and measured in price units.  The
    scalar fields summarise the trade itself and the first quote change.
    """

    grid: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n_used: int
    jump_mean: float = float("nan")
    jump_se: float = float("nan")
    next_mean: float = float("nan")
    next_se: float = float("nan")
    scenario_counts: dict = field(default_factory=dict)
    n_aborted: int = 0
    meta: dict = field(default_factory=dict)

    def lagged(self, lag: int) -> tuple[float, float]:
        """Mean and SE of ``p_{k+lag} - p_k`` (needs the per-sim accumulator)."""
        s, ss = self.meta["lag_sums"][lag]
        return _mean_se(s, ss, self.n_used)


class _Acc:
    """Running sums so partial results merge by addition."""

    def __init__(self, size: int):
        self.n = 0
        self.s = np.zeros(size)
        self.ss = np.zeros(size)

    def add(self, x: np.ndarray):
        self.n += 1
        self.s += x
        self.ss += x * x


def _mean_se(s, ss, n):
    s, ss = np.asarray(s, float), np.asarray(ss, float)
    mean = s / n
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    var = np.maximum(ss / n - mean * mean, 0.0) * n / (n - 1)
    return mean, np.sqrt(var / n)


def _classify(kind: EventKind, level: int, dmid: int) -> str:
    if kind == EventKind.LIMIT and level < 0 and dmid > 0:
        return "bid-refill"
    if kind == EventKind.LIMIT and level > 0 and dmid < 0:
        return "ask-refill"
    return "other"


def _one_depletion(params: QrmParams, spec: ImpactExperimentSpec, rng):
    """One simulated response; path in mid units of tick/4 relative to pre-trade."""
    state = sample_invariant_book(params, rng, nonempty=True)
    K = params.K
    m0 = mid_half(state)
    size = state.queues[K] if spec.mo_fraction == 1.0 else state.queues[K] // 2
    apply_market_order(state, "ask", size, params, rng)
    m1 = mid_half(state)
    path = np.empty(spec.horizon + 2)
    path[0], path[1] = 0, m1 - m0
    prev = m1
    first = None
    j = 0
    while j < spec.horizon or first is None:
        kind, idx, dt, changed = step(state, params, rng)
        state.clock += dt
        m = mid_half(state) if changed else prev
        j += 1
        if j <= spec.horizon:
            path[j + 1] = m - m0
        if first is None and m != prev:
            first = (m - prev, _classify(EventKind(kind), index_level(idx, K), m - prev))
        prev = m
        if j > _MAX_WAIT_EVENTS:
            first = (0, "other")
    return path, first


def depletion_response(spec: ImpactExperimentSpec, params: QrmParams, rng=None) -> ImpactResult:
    """Average mid path after a buy order consuming the best ask.

    Uses ``params.theta``/``theta_reinit`` (with ``spec.theta_override``
    replacing theta when set).  Runs that hit a one-sided empty book are
    dropped and counted in ``n_aborted``.
    """
    if spec.theta_override is not None:
        params = replace(params, theta=spec.theta_override)
    rng = as_uniform_source(rng)
    quarter = params.tick / 4.0
    acc = _Acc(spec.horizon + 2)
    lag_idx = min(spec.lag, spec.horizon)
    jump = [0.0, 0.0]
    nxt = [0.0, 0.0]
    lag = [0.0, 0.0]
    counts = {"bid-refill": 0, "ask-refill": 0, "other": 0}
    aborted = 0
    for _ in range(spec.n_sims):
        try:
            path, (dnext, scen) = _one_depletion(params, spec, rng)
        except DegenerateBookError:
            aborted += 1
            continue
        counts[scen] += 1
        if spec.conditioning != "none" and scen != spec.conditioning:
            continue
        path = path * quarter
        acc.add(path)
        d = path[1]
        jump[0] += d
        jump[1] += d * d
        d = dnext * quarter
        nxt[0] += d
        nxt[1] += d * d
        d = path[lag_idx + 1] - path[1]
        lag[0] += d
        lag[1] += d * d
    if acc.n == 0:
        raise ValueError(
            f"no simulation matched conditioning={spec.conditioning!r} "
            f"(scenario counts {counts}, aborted {aborted})"
        )
    mean, se = _mean_se(acc.s, acc.ss, acc.n)
    jm, js = _mean_se(*jump, acc.n)
    nm, ns = _mean_se(*nxt, acc.n)
    return ImpactResult(
        grid=np.arange(-1, spec.horizon + 1),
        mean=mean,
        se=se,
        n_used=acc.n,
        jump_mean=float(jm),
        jump_se=float(js),
        next_mean=float(nm),
        next_se=float(ns),
        scenario_counts=counts,
        n_aborted=aborted,
        meta={
            "theta": params.theta,
            "theta_reinit": params.theta_reinit,
            "mo_fraction": spec.mo_fraction,
            "conditioning": spec.conditioning,
            "pre_trade_mid": params.initial_ref_price,
            "lag_sums": {lag_idx: (lag[0], lag[1])},
        },
    )


@dataclass
class Heatmap:
    thetas: np.ndarray
    theta_reinits: np.ndarray
    short_mean: np.ndarray
    short_se: np.ndarray
    long_mean: np.ndarray
    long_se: np.ndarray
    lag: int


def impact_heatmap(spec: ImpactExperimentSpec, params: QrmParams, seed: int = 0,
                   long_term: bool = True) -> Heatmap:
    """Monte Carlo short/long-term impact on the ``(theta, theta_reinit)`` grid.

    Rows follow ``spec.thetas`` and columns ``spec.theta_reinits``; each
    cell has its own random stream derived from ``seed``.  With
    ``long_term=False`` only the first quote change is simulated.
    """
    nt, nr = len(spec.thetas), len(spec.theta_reinits)
    out = {k: np.empty((nt, nr)) for k in ("sm", "ss", "lm", "ls")}
    horizon = spec.lag if long_term else 1
    cell_spec = replace(spec, horizon=horizon, lag=horizon)
    for i, th in enumerate(spec.thetas):
        for j, tr in enumerate(spec.theta_reinits):
            p = replace(params, theta=th, theta_reinit=tr)
            rng = BufferedUniform(stream(seed, "impact-cell", i * nr + j))
            res = depletion_response(cell_spec, p, rng)
            out["sm"][i, j], out["ss"][i, j] = res.next_mean, res.next_se
            if long_term:
                out["lm"][i, j], out["ls"][i, j] = res.lagged(horizon)
            else:
                out["lm"][i, j] = out["ls"][i, j] = np.nan
    return Heatmap(np.array(spec.thetas), np.array(spec.theta_reinits),
                   out["sm"], out["ss"], out["lm"], out["ls"], spec.lag)


def repeated_depletion_path(interval: float, n_trades: int, params: QrmParams, rng=None,
                            n_sims: int = 20_000, dt: float = 1.0, tail: float | None = None
                            ) -> ImpactResult:
    """Average mid on a time grid while a buyer empties the best ask every ``interval`` s.

    Trades happen at ``0, interval, ..., (n_trades - 1) * interval``; the run
    continues for ``tail`` seconds after the last trade (default one
    interval).  The book starts from the invariant law with ``ref = mid``.
    """
    if not interval > 0:
        raise ValueError("interval must be positive")
    if n_trades < 0:
        raise ValueError("n_trades must be non-negative")
    rng = as_uniform_source(rng)
    tail = interval if tail is None else tail
    total = (n_trades - 1) * interval + tail if n_trades else tail
    grid = np.arange(0.0, total + 1e-9, dt)
    trade_times = [k * interval for k in range(n_trades)]
    acc = _Acc(len(grid))
    quarter = params.tick / 4.0
    aborted = 0
    K = params.K
    for _ in range(n_sims):
        state = sample_invariant_book(params, rng, nonempty=True)
        m0 = mid_half(state)
        path = np.empty(len(grid))
        ti = 0
        try:
            for g, t in enumerate(grid):
                if t > state.clock:
                    simulate_until(state, t - state.clock, params, rng, record=False)
                while ti < len(trade_times) and trade_times[ti] <= t + 1e-12:
                    best = _best_ask_volume(state, K)
                    apply_market_order(state, "ask", best, params, rng)
                    ti += 1
                path[g] = (mid_half(state) - m0) * quarter
        except DegenerateBookError:
            aborted += 1
            continue
        acc.add(path)
    mean, se = _mean_se(acc.s, acc.ss, max(acc.n, 1))
    return ImpactResult(
        grid=grid,
        mean=mean,
        se=se,
        n_used=acc.n,
        n_aborted=aborted,
        meta={"interval": interval, "n_trades": n_trades, "theta": params.theta,
              "theta_reinit": params.theta_reinit, "dt": dt, "tail": tail,
              "pre_trade_mid": params.initial_ref_price},
    )


def _best_ask_volume(state, K):
    q = state.queues
    for i in range(K, 2 * K):
        if q[i]:
            return q[i]
    raise DegenerateBookError("empty ask side")
