"""Small fully connected action-value network written directly in numpy.

Hidden layers use a leaky ReLU, the output layer is linear.  Weights are
stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of shape
``(B, d_in)`` maps through ``X @ W + b``.

Checkpoint layout (all integers little-endian)::

    8 bytes   magic b"QNETCKP1"
    8 bytes   uint64 length of the JSON header
    n bytes   UTF-8 JSON header (dims, slope, init, extra metadata)
    blocks    W_0, b_0, W_1, b_1, ... as '<f8' in row-major order
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"QNETCKP1"
DEFAULT_HIDDEN = (30, 30, 30, 30)


class CheckpointError(ValueError):
    """A checkpoint file is malformed or does not fit the requested network."""


@dataclass
class QNetwork:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    slope: float = 0.01
    init: str = "uniform-fan-in"

    def __post_init__(self):
        if not self.slope >= 0:
            raise ValueError("leaky slope must be non-negative")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {i}: weight {W.shape} and bias {b.shape} do not match")
            if i and W.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: input size {W.shape[0]} does not chain")

    @classmethod
    def create(cls, d_in: int, n_out: int, hidden=DEFAULT_HIDDEN, rng=None, slope: float = 0.01
               ) -> "QNetwork":
        """Weights and biases uniform on ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
        rng = np.random.default_rng(rng)
        dims = [d_in, *hidden, n_out]
        Ws, bs = [], []
        for a, b in zip(dims[:-1], dims[1:]):
            lim = 1.0 / np.sqrt(a)
            Ws.append(rng.uniform(-lim, lim, size=(a, b)))
            bs.append(rng.uniform(-lim, lim, size=b))
        return cls(Ws, bs, slope)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "QNetwork":
        return QNetwork([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        self.slope, self.init)

    def load_from(self, other: "QNetwork") -> None:
        """Overwrite parameters in place (target-network sync)."""
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d_in:
            raise ValueError(f"input has {x.shape[-1]} features, network expects {self.d_in}")
        return x

    def forward(self, x) -> np.ndarray:
        """Action values for one input vector or a batch of rows."""
        h = self._check(x)
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = self._act(h)
        return h

    def _act(self, z):
        # max(z, a z) is the leaky ReLU whenever the slope a is at most 1
        if self.slope <= 1.0:
            return np.maximum(z, self.slope * z)
        return np.where(z > 0, z, self.slope * z)

    __call__ = forward

    def _forward_cache(self, X):
        acts = [X]
        pre = []
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            pre.append(z)
            h = self._act(z) if i < last else z
            acts.append(h)
        return acts, pre

    def _backprop(self, acts, pre, dout):
        grads_W, grads_b = [], []
        d = dout
        for i in range(len(self.weights) - 1, -1, -1):
            grads_W.append(acts[i].T @ d)
            grads_b.append(d.sum(axis=0))
            d = d @ self.weights[i].T
            if i > 0:
                d = d * np.where(pre[i - 1] > 0, 1.0, self.slope)
        grads_W.reverse()
        grads_b.reverse()
        return grads_W, grads_b, d

    def loss_and_grad(self, X, actions, targets) -> tuple[float, list[np.ndarray]]:
        """Masked mean squared error ``mean((y - Q(s, a))^2)`` and its exact gradient.

        Gradients are returned in :meth:`params` order.
        """
        X = np.atleast_2d(self._check(X))
        actions = np.asarray(actions, dtype=np.intp)
        targets = np.asarray(targets, dtype=float)
        B = X.shape[0]
        if B == 0:
            raise ValueError("empty batch")
        if actions.shape != (B,) or targets.shape != (B,):
            raise ValueError("actions and targets need one entry per row")
        acts, pre = self._forward_cache(X)
        rows = np.arange(B)
        err = acts[-1][rows, actions] - targets
        dout = np.zeros_like(acts[-1])
        dout[rows, actions] = 2.0 * err / B
        gW, gb, _ = self._backprop(acts, pre, dout)
        grads = []
        for a, b in zip(gW, gb):
            grads += [a, b]
        return float(np.mean(err * err)), grads

    def input_gradient(self, X, action: int) -> np.ndarray:
        """``dQ(s, action) / ds`` for each row of ``X``."""
        X = np.atleast_2d(self._check(X))
        acts, pre = self._forward_cache(X)
        dout = np.zeros_like(acts[-1])
        dout[:, action] = 1.0
        return self._backprop(acts, pre, dout)[2]


@dataclass
class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, net: QNetwork, grads: list[np.ndarray]) -> None:
        params = net.params()
        if len(grads) != len(params):
            raise ValueError("gradient list does not match the network")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        for g, p in zip(grads, params):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def save_weights(net: QNetwork, path, extra: dict | None = None) -> None:
    """Write ``net`` (plus JSON-serialisable ``extra`` metadata) to ``path``."""
    header = {"dims": net.dims, "slope": net.slope, "init": net.init, "extra": extra or {}}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in net.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_weights(path, expect_d_in: int | None = None, expect_n_out: int | None = None
                 ) -> tuple[QNetwork, dict]:
    """Read a checkpoint; returns the network and the ``extra`` metadata."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a network checkpoint (bad magic)")
    try:
        (n,) = struct.unpack("<Q", data[8:16])
        header = json.loads(data[16:16 + n].decode("utf-8"))
        dims = [int(d) for d in header["dims"]]
    except (struct.error, ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    off = 16 + n
    Ws, bs = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        for shape in ((a, b), (b,)):
            size = int(np.prod(shape)) * 8
            if off + size > len(data):
                raise CheckpointError(f"{path}: truncated parameter block")
            arr = np.frombuffer(data, dtype="<f8", count=size // 8, offset=off).reshape(shape)
            (Ws if len(shape) == 2 else bs).append(arr.astype(float))
            off += size
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    if expect_d_in is not None and dims[0] != expect_d_in:
        raise CheckpointError(f"{path}: network takes {dims[0]} features, caller has {expect_d_in}")
    if expect_n_out is not None and dims[-1] != expect_n_out:
        raise CheckpointError(f"{path}: network has {dims[-1]} actions, caller has {expect_n_out}")
    net = QNetwork(Ws, bs, float(header["slope"]), header.get("init", "uniform-fan-in"))
    return net, header.get("extra", {})
