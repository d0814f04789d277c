"""Rule-based execution schedules sharing the environment interface.

A policy object has ``reset()`` and ``act(env) -> shares``; the environment
applies the usual clamps (best-ask volume, remaining inventory).
"""
from __future__ import annotations

import math
from dataclasses import dataclass


def twap_action(k: int, X0: int, N: int, inventory: int, best_ask_volume: int | None = None) -> int:
    """Shares needed to get back on the uniform schedule after trading at step ``k``.

    The cumulative target after step ``k`` is ``floor((k + 1) * X0 / N)``;
    anything missed earlier for lack of liquidity is carried into the order.
    """
    if not 0 <= k < N:
        raise ValueError(f"step {k} outside 0..{N - 1}")
    executed = X0 - inventory
    target = ((k + 1) * X0) // N
    order = max(target - executed, 0)
    order = min(order, inventory)
    if best_ask_volume is not None:
        order = min(order, best_ask_volume)
    return order


def popv_action(k: int, period: int, fraction: float, best_ask_volume: int, inventory: int) -> int:
    """Buy ``fraction`` of the best ask every ``period`` steps, nothing in between."""
    if period < 1:
        raise ValueError("period must be >= 1")
    if k % period:
        return 0
    return min(int(math.floor(fraction * best_ask_volume + 1e-12)), inventory)


class Twap:
    name = "TWAP"

    def reset(self):
        pass

    def act(self, env) -> int:
        cfg = env.config
        return twap_action(env.k, cfg.shares, cfg.n_intervals, env.inventory, env.best_ask()[1])


@dataclass
class Popv:
    period: int
    fraction: float = 1.0

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")

    @property
    def name(self) -> str:
        return f"POPV{self.period}@{int(round(self.fraction * 100))}%"

    def reset(self):
        pass

    def act(self, env) -> int:
        return popv_action(env.k, self.period, self.fraction, env.best_ask()[1], env.inventory)


def default_benchmarks() -> list:
    return [Twap(), Popv(2, 0.5), Popv(3, 1.0), Popv(4, 1.0)]


def parse_policy(text: str):
    """``twap`` or ``popv:i:f`` (``f`` a fraction, e.g. ``popv:3:1.0``)."""
    parts = text.strip().lower().split(":")
    if parts[0] == "twap" and len(parts) == 1:
        return Twap()
    if parts[0] == "popv" and len(parts) == 3:
        return Popv(int(parts[1]), float(parts[2]))
    raise ValueError(f"cannot parse benchmark policy {text!r}")
