"""Optimal-execution MDP on top of the queue-reactive book.

A buyer must acquire ``X0`` AES units within ``T`` seconds.  Decisions are
taken at ``tau_k = k * T / N``; at each of them the trader first buys a
fraction of the best-ask queue (never walking the book) and then the market
evolves endogenously until the next decision time.  The reward of a trade
is ``dx * (P0 - P_ask)`` where ``P0`` is the arrival mid.  Inventory left at
``tau_N = T`` costs ``alpha`` per share in training mode; in evaluation mode
it is bought instead by a forced final trade whose cost enters the
implementation shortfall.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .qrm import (
    LobState,
    QrmParams,
    apply_market_order,
    best_indices,
    mid_price,
    sample_invariant_book,
    simulate_until,
)
from .rng import as_uniform_source

FEATURES = ("time", "inventory", "ask_price", "bid_volume", "ask_volume")
# features that are z-scored with stored statistics (the rest map to [-1, 1])
ZSCORED = ("ask_price", "bid_volume", "ask_volume")
MODES = ("train", "eval")


class EpisodeFinishedError(RuntimeError):
    """An action was sent to an environment whose episode is over."""


@dataclass(frozen=True)
class EnvConfig:
    horizon: float = 600.0
    n_intervals: int = 25
    shares: int = 25
    penalty: float = 1.0
    action_set: tuple[float, ...] = (0.0, 0.5, 1.0)
    state_features: tuple[str, ...] = FEATURES
    # spacing between decisions; None means horizon / n_intervals
    trader_step: float | None = None
    norm_warmup: int = 200

    def __post_init__(self):
        object.__setattr__(self, "action_set", tuple(float(a) for a in self.action_set))
        object.__setattr__(self, "state_features", tuple(self.state_features))
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        out = []
        if not self.horizon > 0:
            out.append(f"horizon must be > 0 (got {self.horizon})")
        if self.n_intervals < 1:
            out.append(f"n_intervals must be >= 1 (got {self.n_intervals})")
        if self.shares < 1:
            out.append(f"shares must be >= 1 (got {self.shares})")
        if not self.penalty >= 0:
            out.append(f"penalty must be >= 0 (got {self.penalty})")
        if 0.0 not in self.action_set or 1.0 not in self.action_set:
            out.append("action_set must contain 0 and 1.0")
        if any(not 0.0 <= a <= 1.0 for a in self.action_set):
            out.append("action fractions must lie in [0, 1]")
        if len(set(self.action_set)) != len(self.action_set):
            out.append("action_set has duplicates")
        unknown = [f for f in self.state_features if f not in FEATURES]
        if unknown:
            out.append(f"unknown state features {unknown}; choose from {FEATURES}")
        if "time" not in self.state_features or "inventory" not in self.state_features:
            out.append("state_features must contain time and inventory")
        if len(set(self.state_features)) != len(self.state_features):
            out.append("state_features has duplicates")
        if self.trader_step is not None and not self.trader_step > 0:
            out.append(f"trader_step must be > 0 (got {self.trader_step})")
        if self.norm_warmup < 1:
            out.append(f"norm_warmup must be >= 1 (got {self.norm_warmup})")
        return out

    @property
    def step_seconds(self) -> float:
        return self.horizon / self.n_intervals if self.trader_step is None else self.trader_step

    @property
    def end_time(self) -> float:
        return self.step_seconds * self.n_intervals


@dataclass(frozen=True)
class NormStats:
    """Mean and std of the z-scored features, in :data:`ZSCORED` order.

    The price feature is the best ask minus the arrival mid, in ticks.
    """

    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    std: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(tuple(float(v) for v in d["mean"]), tuple(float(v) for v in d["std"]))


class MdpObservation(NamedTuple):
    raw: np.ndarray          # (tau, inventory, best ask, best bid volume, best ask volume)
    normalized: np.ndarray   # config.state_features order


class StepOutcome(NamedTuple):
    observation: MdpObservation
    reward: float
    done: bool
    info: dict


class TradeRecord(NamedTuple):
    k: int
    action: float
    shares: int
    price: float
    reward: float
    inventory: int


def normalize(raw, config: EnvConfig, stats: NormStats, p0: float, tick: float) -> np.ndarray:
    """Map a raw observation to the network input."""
    tau, inv, ask, bid_vol, ask_vol = raw
    z = ((ask - p0) / tick, bid_vol, ask_vol)
    out = []
    for f in config.state_features:
        if f == "time":
            out.append(2.0 * tau / config.end_time - 1.0)
        elif f == "inventory":
            out.append(2.0 * inv / config.shares - 1.0)
        else:
            j = ZSCORED.index(f)
            out.append((z[j] - stats.mean[j]) / stats.std[j])
    return np.array(out)


class ExecutionEnv:
    """One execution episode at a time over a queue-reactive book.

    ``mode="train"`` charges ``alpha`` per residual share at ``T``;
    ``mode="eval"`` skips the penalty and expects :meth:`forced_final_trade`.
    """

    def __init__(self, config: EnvConfig, params: QrmParams, stats: NormStats | None = None,
                 mode: str = "train"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.config = config
        self.params = params
        self.stats = stats if stats is not None else NormStats()
        self.mode = mode
        self.state: LobState | None = None
        self.done = True
        self.trajectory: list[TradeRecord] = []

    # -- episode lifecycle -------------------------------------------------

    def reset(self, rng) -> MdpObservation:
        """Draw a fresh book from the invariant law and start a new episode."""
        self.rng = as_uniform_source(rng)
        self.state = sample_invariant_book(self.params, self.rng)
        self.k = 0
        self.inventory = self.config.shares
        self.p0 = mid_price(self.state)
        self.done = False
        self.trajectory = []
        self.forced = None
        return self.observe()

    @property
    def tau(self) -> float:
        return self.k * self.config.step_seconds

    def best_ask(self) -> tuple[float, int]:
        s = self.state
        _, a = best_indices(s)
        K = s.K
        return (s.ref_half + 2 * (a - K) + 1) * s.tick / 2, s.queues[a]

    def best_bid_volume(self) -> int:
        b, _ = best_indices(self.state)
        return self.state.queues[b]

    def observe(self) -> MdpObservation:
        ask, ask_vol = self.best_ask()
        raw = np.array([self.tau, self.inventory, ask, self.best_bid_volume(), ask_vol], dtype=float)
        return MdpObservation(raw, normalize(raw, self.config, self.stats, self.p0, self.params.tick))

    def shares_for(self, action: float) -> int:
        """Order size for a fraction of the best-ask queue, capped by inventory."""
        _, vol = self.best_ask()
        return min(int(math.floor(action * vol + 1e-12)), self.inventory)

    # -- transitions -------------------------------------------------------

    def step(self, action: float) -> StepOutcome:
        """Buy ``action`` times the best-ask volume, then let the market run one interval."""
        if not any(abs(action - a) < 1e-12 for a in self.config.action_set):
            raise ValueError(f"action {action} not in {self.config.action_set}")
        if self.done:
            raise EpisodeFinishedError("episode is over; call reset()")
        return self._trade_and_advance(self.shares_for(action), action)

    def step_index(self, index: int) -> StepOutcome:
        return self.step(self.config.action_set[index])

    def step_shares(self, shares: int, action: float = float("nan")) -> StepOutcome:
        """Trade an explicit number of shares (benchmarks); same clamps as :meth:`step`."""
        if self.done:
            raise EpisodeFinishedError("episode is over; call reset()")
        shares = int(shares)
        _, vol = self.best_ask()
        if shares < 0 or shares > vol or shares > self.inventory:
            raise ValueError(
                f"order of {shares} violates the clamp (best ask {vol}, inventory {self.inventory})"
            )
        return self._trade_and_advance(shares, action)

    def _trade_and_advance(self, dx: int, action: float) -> StepOutcome:
        params, cfg = self.params, self.config
        price = self.best_ask()[0]
        reward = 0.0
        if dx > 0:
            _, fill, _ = apply_market_order(self.state, "ask", dx, params, self.rng)
            price = fill.price
            reward = dx * (self.p0 - price)
            self.inventory -= dx
        self.trajectory.append(TradeRecord(self.k, action, dx, price, reward, self.inventory))
        penalty = False
        if self.inventory == 0:
            self.done = True
        else:
            simulate_until(self.state, cfg.step_seconds, params, self.rng, record=False)
            self.k += 1
            if self.k >= cfg.n_intervals:
                self.done = True
                if self.mode == "train":
                    reward -= cfg.penalty * self.inventory
                    penalty = True
        info = {"filled": dx, "price": price, "forced_final": False, "penalty": penalty}
        return StepOutcome(self.observe(), reward, self.done, info)

    def forced_final_trade(self) -> "ForcedFill":
        """Buy any residual at the best ask over extra intervals (evaluation accounting)."""
        if not self.done:
            raise RuntimeError("forced final trade only applies to a finished episode")
        fills = []
        reward = 0.0
        while self.inventory > 0:
            price, vol = self.best_ask()
            dx = min(vol, self.inventory)
            _, fill, _ = apply_market_order(self.state, "ask", dx, self.params, self.rng)
            fills.append((fill.price, dx))
            reward += dx * (self.p0 - fill.price)
            self.inventory -= dx
            if self.inventory > 0:
                simulate_until(self.state, self.config.step_seconds, self.params, self.rng,
                               record=False)
        self.forced = ForcedFill(reward, fills)
        return self.forced


@dataclass(frozen=True)
class ForcedFill:
    reward: float
    fills: list = field(default_factory=list)

    @property
    def shares(self) -> int:
        return sum(n for _, n in self.fills)


def implementation_shortfall(trajectory, forced: ForcedFill | None, p0: float, shares: int) -> float:
    """Paid amount minus the cost of buying everything at the arrival mid."""
    paid = sum(t.price * t.shares for t in trajectory)
    if forced is not None:
        paid += sum(p * n for p, n in forced.fills)
    return paid - shares * p0


def normalization_stats(params: QrmParams, config: EnvConfig, rng, n_warmup: int | None = None
                        ) -> NormStats:
    """Feature moments from rollouts of a uniform-random policy."""
    n_warmup = config.norm_warmup if n_warmup is None else n_warmup
    if n_warmup < 1:
        raise ValueError("n_warmup must be >= 1")
    rng = as_uniform_source(rng)
    env = ExecutionEnv(config, params, mode="train")
    rows = []
    n_act = len(config.action_set)
    for _ in range(n_warmup):
        obs = env.reset(rng)
        while True:
            tau, inv, ask, bv, av = obs.raw
            rows.append(((ask - env.p0) / params.tick, bv, av))
            if env.done:
                break
            a = min(int(rng.random() * n_act), n_act - 1)
            obs = env.step_index(a).observation
    data = np.array(rows)
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    for j, name in enumerate(ZSCORED):
        if not std[j] > 0:
            warnings.warn(f"feature {name} is constant during warm-up; std set to 1")
            std[j] = 1.0
    return NormStats(tuple(mean.tolist()), tuple(std.tolist()))


def write_trajectory_csv(path, trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "action", "shares", "price", "reward", "inventory"])
        for t in trajectory:
            w.writerow([t.k, t.action, t.shares, f"{t.price:.10g}", f"{t.reward:.10g}", t.inventory])
