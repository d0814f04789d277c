"""Evaluation campaigns: test episodes, failure accounting and comparisons.

Every policy is run on the same episode seeds (episode ``i`` always starts
from the same book and sees the same random stream until the policies'
actions diverge), which keeps comparisons between strategies tight.
Residual inventory at the horizon is bought by a forced final trade whose
cost is part of the reported reward, so the reward of an episode is minus
its implementation shortfall.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .benchmarks import default_benchmarks
from .ddqn import DdqnPolicy
from .env import EnvConfig, ExecutionEnv, NormStats
from .nn import QNetwork
from .qrm import DegenerateBookError, QrmParams
from .rng import BufferedUniform, stream
from .stats import WelchResult, welch_one_sided


@dataclass
class EpisodeRecord:
    index: int
    reward: float
    shares: list[int]        # shares bought at each decision step taken
    prices: list[float]
    residual: int            # inventory left at the horizon, before the forced trade
    forced_shares: int
    forced_reward: float

    @property
    def length(self) -> int:
        return len(self.shares)

    @property
    def completed(self) -> bool:
        return self.residual == 0

    @property
    def shortfall(self) -> float:
        return -self.reward


def run_episode(policy, env: ExecutionEnv, rng, index: int = 0) -> EpisodeRecord:
    env.reset(rng)
    policy.reset()
    total = 0.0
    while not env.done:
        total += env.step_shares(policy.act(env)).reward
    residual = env.inventory
    forced = env.forced_final_trade()
    return EpisodeRecord(
        index,
        total + forced.reward,
        [t.shares for t in env.trajectory],
        [t.price for t in env.trajectory],
        residual,
        forced.shares,
        forced.reward,
    )


@dataclass
class PolicyReport:
    name: str
    records: list[EpisodeRecord]
    n_errors: int = 0

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.records])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def mean(self) -> float:
        return float(self.rewards.mean())

    @property
    def std(self) -> float:
        return float(self.rewards.std(ddof=1)) if self.n > 1 else 0.0

    @property
    def failure_rate(self) -> float:
        """Percentage of episodes that ended the horizon with inventory left."""
        return 100.0 * float(np.mean(self.residuals > 0))

    @property
    def mean_residual_on_failure(self) -> float:
        res = self.residuals
        return float(res[res > 0].mean()) if np.any(res > 0) else 0.0

    def summary(self) -> dict:
        return {"policy": self.name, "episodes": self.n, "mean_reward": self.mean,
                "std_reward": self.std, "failure_rate_pct": self.failure_rate,
                "mean_residual_on_failure": self.mean_residual_on_failure,
                "errors": self.n_errors}


def evaluate(policy, env_config: EnvConfig, params: QrmParams, n_episodes: int, seed: int = 0,
             stats: NormStats | None = None, name: str | None = None) -> PolicyReport:
    """Run ``n_episodes`` test episodes with forced-final accounting."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    env = ExecutionEnv(env_config, params, stats, mode="eval")
    records, errors = [], 0
    for i in range(n_episodes):
        try:
            records.append(run_episode(policy, env, BufferedUniform(stream(seed, "eval-episode", i)), i))
        except DegenerateBookError:
            errors += 1
    return PolicyReport(name or getattr(policy, "name", type(policy).__name__), records, errors)


@dataclass
class EvalReport:
    reports: dict[str, PolicyReport]
    best: str
    tests: dict[str, WelchResult]   # best vs each other policy

    def rows(self) -> list[dict]:
        out = []
        for name, rep in self.reports.items():
            row = rep.summary()
            w = self.tests.get(name)
            row["welch_t_vs_best"] = "" if w is None else w.t
            row["welch_p_vs_best"] = "" if w is None else w.p
            row["stars"] = "" if w is None else w.stars
            out.append(row)
        return out

    def text(self) -> str:
        lines = [f"{'policy':<14}{'mean':>10}{'std':>9}{'fail %':>9}  vs best"]
        for name, rep in self.reports.items():
            w = self.tests.get(name)
            cmp = "best" if w is None else f"t={w.t:.2f} p={w.p:.2e} {w.stars}"
            lines.append(f"{name:<14}{rep.mean:>10.4f}{rep.std:>9.4f}{rep.failure_rate:>9.3f}  {cmp}")
        return "\n".join(lines)


def compare(reports: list[PolicyReport]) -> EvalReport:
    """Pick the highest mean reward and test it against every other policy."""
    by_name = {r.name: r for r in reports}
    best = max(reports, key=lambda r: r.mean).name
    tests = {r.name: welch_one_sided(by_name[best].rewards, r.rewards)
             for r in reports if r.name != best}
    return EvalReport(by_name, best, tests)


def evaluate_all(policies, env_config: EnvConfig, params: QrmParams, n_episodes: int,
                 seed: int = 0, stats: NormStats | None = None) -> EvalReport:
    return compare([evaluate(p, env_config, params, n_episodes, seed, stats) for p in policies])


# --------------------------------------------------------------------------
# attribution


def feature_importance(net: QNetwork, states) -> np.ndarray:
    """Mean absolute input gradient, shape ``(n_actions, n_features)``."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("need at least one state")
    return np.stack([np.abs(net.input_gradient(X, a)).mean(axis=0) for a in range(net.n_out)])


def greedy_states(net: QNetwork, stats: NormStats, env_config: EnvConfig, params: QrmParams,
                  n_episodes: int, seed: int = 0) -> np.ndarray:
    """Normalised states visited by the greedy policy (fresh rollouts)."""
    policy = DdqnPolicy(net, env_config.action_set)
    env = ExecutionEnv(env_config, params, stats, mode="eval")
    out = []
    for i in range(n_episodes):
        env.reset(BufferedUniform(stream(seed, "importance", i)))
        while not env.done:
            out.append(env.observe().normalized)
            env.step_shares(policy.act(env))
    return np.array(out)


# --------------------------------------------------------------------------
# robustness


@dataclass
class SweepResult:
    thetas: np.ndarray
    theta_reinits: np.ndarray
    relative: np.ndarray            # (mean_rl - mean_best) / |mean_best|
    best_benchmark: np.ndarray      # names, same shape
    means: dict = field(default_factory=dict)   # policy -> matrix of mean rewards

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "theta_reinit", "relative_difference", "best_benchmark",
                        *[f"mean_{k}" for k in self.means]])
            for i, th in enumerate(self.thetas):
                for j, tr in enumerate(self.theta_reinits):
                    w.writerow([th, tr, f"{self.relative[i, j]:.10g}", self.best_benchmark[i, j],
                                *[f"{m[i, j]:.10g}" for m in self.means.values()]])


def robustness_sweep(policy, thetas, theta_reinits, env_config: EnvConfig, params: QrmParams,
                     n_episodes: int, seed: int = 0, stats: NormStats | None = None,
                     benchmarks=None) -> SweepResult:
    """Relative reward gap between ``policy`` and the best benchmark on a parameter grid."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    reinits = np.atleast_1d(np.asarray(theta_reinits, dtype=float))
    if np.any((thetas < 0.5) | (thetas > 1.0)) or np.any((reinits < 0.5) | (reinits > 1.0)):
        raise ValueError("sweep grid must lie in [0.5, 1.0]^2")
    benchmarks = default_benchmarks() if benchmarks is None else list(benchmarks)
    shape = (len(thetas), len(reinits))
    rel = np.empty(shape)
    best = np.empty(shape, dtype=object)
    name = getattr(policy, "name", "policy")
    means = {name: np.empty(shape), **{b.name: np.empty(shape) for b in benchmarks}}
    for i, th in enumerate(thetas):
        for j, tr in enumerate(reinits):
            p = replace(params, theta=float(th), theta_reinit=float(tr))
            cell_seed = int(stream(seed, "sweep-cell", i * len(reinits) + j).integers(2**63))
            rl = evaluate(policy, env_config, p, n_episodes, cell_seed, stats).mean
            means[name][i, j] = rl
            bench = {}
            for b in benchmarks:
                bench[b.name] = evaluate(b, env_config, p, n_episodes, cell_seed, stats).mean
                means[b.name][i, j] = bench[b.name]
            bname = max(bench, key=bench.get)
            best[i, j] = bname
            rel[i, j] = (rl - bench[bname]) / abs(bench[bname])
    return SweepResult(thetas, reinits, rel, best, means)


# --------------------------------------------------------------------------
# episode analytics


@dataclass
class GapStats:
    length: int
    count: int
    mean: float
    var: float


@dataclass
class EpisodeAnalytics:
    length_hist: dict[int, int]
    gaps: dict[int, GapStats]
    mean_trajectory: np.ndarray   # mean cumulative shares after each decision step


def execution_gaps(shares: list[int]) -> list[int]:
    """Idle steps between consecutive trades (0 means back-to-back)."""
    ks = [k for k, s in enumerate(shares) if s > 0]
    return [b - a - 1 for a, b in zip(ks[:-1], ks[1:])]


def episode_analytics(records: list[EpisodeRecord], n_intervals: int) -> EpisodeAnalytics:
    """Length histogram, per-length average-gap statistics and mean cumulative execution.

    Gap statistics use completed episodes only; each episode contributes its
    average gap to the bucket of its length.
    """
    if not records:
        raise ValueError("no episode records")
    hist: dict[int, int] = {}
    per_len: dict[int, list[float]] = {}
    traj = np.zeros((len(records), n_intervals))
    for e, r in enumerate(records):
        hist[r.length] = hist.get(r.length, 0) + 1
        cum = np.cumsum(r.shares)
        traj[e, :len(cum)] = cum
        traj[e, len(cum):] = cum[-1] if len(cum) else 0
        if r.completed:
            g = execution_gaps(r.shares)
            if g:
                per_len.setdefault(r.length, []).append(float(np.mean(g)))
    gaps = {L: GapStats(L, len(v), float(np.mean(v)), float(np.var(v))) for L, v in sorted(per_len.items())}
    return EpisodeAnalytics(dict(sorted(hist.items())), gaps, traj.mean(axis=0))


def write_records_csv(path, records: list[EpisodeRecord]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "reward", "length", "residual", "forced_shares", "forced_reward",
                    "shares"])
        for r in records:
            w.writerow([r.index, f"{r.reward:.10g}", r.length, r.residual, r.forced_shares,
                        f"{r.forced_reward:.10g}", " ".join(map(str, r.shares))])
