"""Double-DQN training on the execution environment.

Behaviour is epsilon-greedy on the main network.  Every environment step
stores a transition and, once the replay memory holds a full batch, takes
one Adam step on the masked squared TD error.  Targets pick the next
action with the main network and value it with the target network, which
is overwritten by the main network every ``target_sync`` steps.  Epsilon
falls linearly from ``eps_start`` to ``eps_end`` over the first
``eps_fraction`` of the planned environment steps and is refreshed at the
same sync points.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .env import EnvConfig, ExecutionEnv, NormStats, normalize, normalization_stats
from .nn import DEFAULT_HIDDEN, Adam, QNetwork, load_weights, save_weights
from .qrm import DegenerateBookError, QrmParams
from .rng import BufferedUniform, stream


class Transition(NamedTuple):
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity FIFO memory with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, d: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, d))
        self.s_next = np.zeros((self.capacity, d))
        self.a = np.zeros(self.capacity, dtype=np.intp)
        self.r = np.zeros(self.capacity)
        self.done = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self._head = 0

    def __len__(self) -> int:
        return self.size

    def push(self, s, a: int, r: float, s_next, done: bool) -> None:
        if not math.isfinite(r):
            raise ValueError(f"non-finite reward {r}")
        i = self._head
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = done
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add(self, t: Transition) -> None:
        self.push(t.s, t.a, t.r, t.s_next, t.done)

    def indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=n)

    def sample(self, n: int, rng: np.random.Generator):
        i = self.indices(n, rng)
        return self.s[i], self.a[i], self.r[i], self.s_next[i], self.done[i]

    def oldest(self) -> int:
        """Slot holding the oldest stored transition."""
        return self._head if self.size == self.capacity else 0


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 500_000
    batch: int = 1024
    buffer_size: int = 1_000_000
    target_sync: int = 1000
    gamma: float = 0.995
    lr: float = 1e-4
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_fraction: float = 0.03
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    slope: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        out = []
        if self.episodes < 1:
            out.append(f"episodes must be >= 1 (got {self.episodes})")
        if not 0.0 <= self.gamma < 1.0:
            out.append(f"gamma must lie in [0, 1) (got {self.gamma})")
        if self.batch < 1:
            out.append(f"batch must be >= 1 (got {self.batch})")
        if self.batch > self.buffer_size:
            out.append(f"batch {self.batch} exceeds buffer_size {self.buffer_size}")
        if self.target_sync < 1:
            out.append(f"target_sync must be >= 1 (got {self.target_sync})")
        if not self.lr > 0:
            out.append(f"lr must be > 0 (got {self.lr})")
        for name in ("eps_start", "eps_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                out.append(f"{name} must lie in [0, 1] (got {v})")
        if not 0.0 < self.eps_fraction <= 1.0:
            out.append(f"eps_fraction must lie in (0, 1] (got {self.eps_fraction})")
        if not self.hidden or any(h < 1 for h in self.hidden):
            out.append("hidden layer widths must be positive")
        if not self.slope >= 0:
            out.append(f"slope must be >= 0 (got {self.slope})")
        return out


def epsilon_at(step: int, config: TrainConfig, total_steps: int) -> float:
    """Exploration rate after ``step`` environment steps out of ``total_steps`` planned."""
    if step < 0:
        raise ValueError("step must be non-negative")
    window = config.eps_fraction * total_steps
    if step >= window:
        return config.eps_end
    return config.eps_start + (config.eps_end - config.eps_start) * step / window


def greedy(q: np.ndarray) -> int:
    # np.argmax returns the first maximum: ties go to the lowest index
    return int(np.argmax(q))


def select_action(net: QNetwork, s, eps: float, rng: np.random.Generator) -> int:
    if not 0.0 <= eps <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if eps > 0.0 and rng.random() < eps:
        return int(rng.integers(net.n_out))
    return greedy(net.forward(s))


def td_targets(main: QNetwork, target: QNetwork, r, s_next, done, gamma: float) -> np.ndarray:
    """Double-Q targets ``r + gamma * Q_tgt(s', argmax_a Q_main(s', a))``; no bootstrap at terminals."""
    r = np.asarray(r, dtype=float)
    done = np.asarray(done, dtype=bool)
    s_next = np.atleast_2d(s_next)
    a_star = np.argmax(main.forward(s_next), axis=1)
    q_next = target.forward(s_next)[np.arange(len(r)), a_star]
    return r + gamma * np.where(done, 0.0, q_next)


@dataclass
class TrainResult:
    net: QNetwork
    stats: NormStats
    episode_rewards: np.ndarray
    losses: np.ndarray
    env_steps: int
    n_updates: int
    n_aborted: int
    seconds: float
    meta: dict = field(default_factory=dict)


def train(config: TrainConfig, env_config: EnvConfig, params: QrmParams, seed: int = 0,
          stats: NormStats | None = None,
          progress: Callable[[int, TrainResult], None] | None = None,
          progress_every: int = 1000) -> TrainResult:
    """Run the Double-DQN loop and return the trained main network with its curves.

    ``progress(episode, partial_result)`` is called every ``progress_every``
    episodes.  An episode hitting a one-sided empty book is abandoned and
    counted in ``n_aborted``.
    """
    t0 = time.time()
    if stats is None:
        stats = normalization_stats(params, env_config, BufferedUniform(stream(seed, "norm-warmup")))
    d_in = len(env_config.state_features)
    n_act = len(env_config.action_set)
    agent_rng = stream(seed, "train-agent")
    main = QNetwork.create(d_in, n_act, config.hidden, stream(seed, "net-init"), config.slope)
    target = main.copy()
    opt = Adam(lr=config.lr)
    buf = ReplayBuffer(config.buffer_size, d_in)
    env = ExecutionEnv(env_config, params, stats, mode="train")
    total_steps = config.episodes * env_config.n_intervals
    gamma, batch, sync = config.gamma, config.batch, config.target_sync
    rows = np.arange(batch)

    ep_rewards = np.full(config.episodes, np.nan)
    losses: list[float] = []
    steps = 0
    aborted = 0
    eps = epsilon_at(0, config, total_steps)
    result = TrainResult(main, stats, ep_rewards, np.empty(0), 0, 0, 0, 0.0)

    for ep in range(config.episodes):
        try:
            s = env.reset(BufferedUniform(stream(seed, "train-episode", ep))).normalized
            total = 0.0
            while not env.done:
                a = select_action(main, s, eps, agent_rng)
                out = env.step_index(a)
                s2 = out.observation.normalized
                buf.push(s, a, out.reward, s2, out.done)
                total += out.reward
                s = s2
                steps += 1
                if buf.size >= batch:
                    idx = agent_rng.integers(0, buf.size, size=batch)
                    S2 = buf.s_next[idx]
                    a_star = np.argmax(main.forward(S2), axis=1)
                    q_next = target.forward(S2)[rows, a_star]
                    y = buf.r[idx] + gamma * np.where(buf.done[idx], 0.0, q_next)
                    loss, grads = main.loss_and_grad(buf.s[idx], buf.a[idx], y)
                    if not math.isfinite(loss):
                        raise FloatingPointError(
                            f"non-finite TD loss at episode {ep}, step {steps}, update {len(losses)}"
                        )
                    opt.step(main, grads)
                    losses.append(loss)
                if steps % sync == 0:
                    target.load_from(main)
                    eps = epsilon_at(steps, config, total_steps)
            ep_rewards[ep] = total
        except DegenerateBookError:
            aborted += 1
        if progress is not None and (ep + 1) % progress_every == 0:
            result.losses = np.asarray(losses)
            result.env_steps, result.n_updates, result.n_aborted = steps, len(losses), aborted
            result.seconds = time.time() - t0
            result.meta["epsilon"] = eps
            progress(ep + 1, result)

    result.losses = np.asarray(losses)
    result.env_steps, result.n_updates, result.n_aborted = steps, len(losses), aborted
    result.seconds = time.time() - t0
    result.meta.update({"epsilon": eps, "train_config": asdict(config), "seed": seed})
    return result


def checkpoint_metadata(env_config: EnvConfig, stats: NormStats, extra: dict | None = None) -> dict:
    return {
        "state_features": list(env_config.state_features),
        "action_set": list(env_config.action_set),
        "stats": stats.to_dict(),
        **(extra or {}),
    }


def save_agent(path, net: QNetwork, env_config: EnvConfig, stats: NormStats, extra=None) -> None:
    save_weights(net, path, checkpoint_metadata(env_config, stats, extra))


def load_agent(path, env_config: EnvConfig) -> tuple[QNetwork, NormStats, dict]:
    """Load a checkpoint and check it against the caller's features and actions."""
    net, meta = load_weights(path, expect_d_in=len(env_config.state_features),
                             expect_n_out=len(env_config.action_set))
    feats = tuple(meta.get("state_features", ()))
    if feats and feats != env_config.state_features:
        raise ValueError(f"checkpoint features {feats} differ from {env_config.state_features}")
    acts = tuple(meta.get("action_set", ()))
    if acts and acts != env_config.action_set:
        raise ValueError(f"checkpoint actions {acts} differ from {env_config.action_set}")
    return net, NormStats.from_dict(meta["stats"]), meta


@dataclass
class QSurface:
    times: np.ndarray
    inventories: np.ndarray
    values: np.ndarray   # (n_actions, n_times, n_inventories)

    @property
    def state_value(self) -> np.ndarray:
        return self.values.max(axis=0)


def q_surface(net: QNetwork, stats: NormStats, env_config: EnvConfig, tick: float = 0.01,
              times=None, inventories=None, p0: float = 100.005) -> QSurface:
    """Action values over (time, inventory) with every market feature at its warm-up mean."""
    if net.d_in != len(env_config.state_features):
        raise ValueError("network input size does not match the configured features")
    step = env_config.step_seconds
    times = np.arange(env_config.n_intervals) * step if times is None else np.asarray(times, float)
    inventories = (np.arange(1, env_config.shares + 1) if inventories is None
                   else np.asarray(inventories, float))
    X = []
    for t in times:
        for x in inventories:
            raw = (t, x, p0 + stats.mean[0] * tick, stats.mean[1], stats.mean[2])
            X.append(normalize(raw, env_config, stats, p0, tick))
    Q = net.forward(np.array(X)).reshape(len(times), len(inventories), net.n_out)
    return QSurface(times, inventories, np.moveaxis(Q, 2, 0))


class DdqnPolicy:
    """Greedy policy of a trained network, usable wherever benchmarks are."""

    name = "DDQN"

    def __init__(self, net: QNetwork, action_set):
        self.net = net
        self.action_set = tuple(action_set)

    def reset(self):
        pass

    def act(self, env) -> int:
        a = self.action_set[greedy(self.net.forward(env.observe().normalized))]
        return env.shares_for(a)
