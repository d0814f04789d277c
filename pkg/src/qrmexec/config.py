"""TOML run configuration: loading, validation, defaults and round-tripping.

Layout::

    seed = 0
    output_dir = "runs/default"

    [qrm]            # tick, theta, theta_reinit, initial_ref_price, aes, intensities
    [qrm.intensities] # optional: limit/market/cancel arrays (K rows) and tail
    [env]            # execution MDP
    [train]          # Double-DQN hyperparameters
    [experiment.simulate] / [experiment.impact] / [experiment.evaluate] / [experiment.sweep]

Every omitted key takes its default; unknown keys are errors.  All
violations are collected and reported together.
"""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
import tomli_w

from .ddqn import TrainConfig
from .env import EnvConfig
from .impact import CONDITIONS
from .intensities import IntensityTable, NonErgodicError, check_ergodicity, default_intensities
from .qrm import QrmParams


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.errors))


@dataclass(frozen=True)
class QrmSection:
    tick: float = 0.01
    theta: float = 0.7
    theta_reinit: float = 0.85
    initial_ref_price: float = 100.005
    aes: tuple[float, ...] = (1.0, 1.0, 1.0)
    # "default" or {"limit": [[..]], "market": [[..]], "cancel": [[..]], "tail": "hold"}
    intensities: object = "default"

    def table(self) -> IntensityTable:
        if self.intensities == "default":
            return default_intensities()
        d = self.intensities
        return IntensityTable(np.array(d["limit"], float), np.array(d["market"], float),
                              np.array(d["cancel"], float), d.get("tail", "hold"))

    def params(self) -> QrmParams:
        return QrmParams(self.table(), self.tick, self.theta, self.theta_reinit, self.aes,
                         self.initial_ref_price)


@dataclass(frozen=True)
class SimulateSection:
    seconds: float = 600.0


@dataclass(frozen=True)
class ImpactSection:
    thetas: tuple[float, ...] = (0.7,)
    theta_reinits: tuple[float, ...] = (0.85,)
    n_sims: int = 20_000
    horizon: int = 75
    mo_fraction: float = 1.0
    conditioning: str = "none"
    lag: int = 75
    # repeated depletion every `repeat_interval` seconds; 0 disables it
    repeat_interval: float = 0.0
    repeat_trades: int = 5


@dataclass(frozen=True)
class EvaluateSection:
    episodes: int = 20_000
    policies: tuple[str, ...] = ("ddqn", "twap", "popv:2:0.5", "popv:3:1.0", "popv:4:1.0")
    checkpoint: str = ""


@dataclass(frozen=True)
class SweepSection:
    thetas: tuple[float, ...] = (0.6, 0.7, 0.8)
    theta_reinits: tuple[float, ...] = (0.75, 0.85, 0.95)
    episodes: int = 1000


@dataclass(frozen=True)
class ExperimentSection:
    simulate: SimulateSection = field(default_factory=SimulateSection)
    impact: ImpactSection = field(default_factory=ImpactSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    sweep: SweepSection = field(default_factory=SweepSection)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    qrm: QrmSection = field(default_factory=QrmSection)
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def params(self) -> QrmParams:
        return self.qrm.params()

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(obj):
    # TOML has no tuples or None
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def _section(cls, data, where: str, errors: list[str], nested: dict | None = None):
    """Build dataclass ``cls`` from ``data`` collecting unknown keys and type errors."""
    nested = nested or {}
    if not isinstance(data, dict):
        errors.append(f"[{where}] must be a table")
        return cls()
    names = {f.name for f in fields(cls) if f.init and not f.name.startswith("_")}
    kwargs = {}
    for key, val in data.items():
        if key not in names:
            errors.append(f"[{where}] unknown key {key!r}")
            continue
        if key in nested:
            kwargs[key] = _section(nested[key], val, f"{where}.{key}", errors)
        elif key == "intensities" and isinstance(val, dict):
            kwargs[key] = val
        else:
            kwargs[key] = _tuplify(val)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.extend(f"[{where}] {msg}" for msg in str(exc).split("; "))
        return None


def _check_qrm(q: QrmSection, errors: list[str]) -> None:
    for name in ("theta", "theta_reinit"):
        v = getattr(q, name)
        if not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
            errors.append(f"[qrm] {name}={v} outside [0, 1]")
    if not isinstance(q.tick, (int, float)) or not q.tick > 0:
        errors.append(f"[qrm] tick={q.tick} must be > 0")
    if isinstance(q.intensities, str):
        if q.intensities != "default":
            errors.append(f"[qrm] intensities must be 'default' or a table, got {q.intensities!r}")
    elif isinstance(q.intensities, dict):
        extra = set(q.intensities) - {"limit", "market", "cancel", "tail"}
        if extra:
            errors.append(f"[qrm.intensities] unknown keys {sorted(extra)}")
        missing = {"limit", "market", "cancel"} - set(q.intensities)
        if missing:
            errors.append(f"[qrm.intensities] missing {sorted(missing)}")
            return
    try:
        table = q.table()
    except (ValueError, TypeError) as exc:
        errors.append(f"[qrm.intensities] {exc}")
        return
    rep = check_ergodicity(table)
    if not rep.passes:
        errors.append(f"[qrm.intensities] not ergodic: {rep.violation}")
        return
    try:
        if errors:
            return
        QrmParams(table, q.tick, q.theta, q.theta_reinit, q.aes, q.initial_ref_price)
    except (ValueError, NonErgodicError) as exc:
        errors.append(f"[qrm] {exc}")


def _check_experiment(x: ExperimentSection, errors: list[str]) -> None:
    im = x.impact
    for v in im.thetas + im.theta_reinits:
        if not 0.5 <= v <= 1.0:
            errors.append(f"[experiment.impact] grid value {v} outside [0.5, 1.0]")
    if im.n_sims < 1:
        errors.append("[experiment.impact] n_sims must be >= 1")
    if im.horizon < 1 or im.lag < 1:
        errors.append("[experiment.impact] horizon and lag must be >= 1")
    if im.mo_fraction not in (0.5, 1.0):
        errors.append("[experiment.impact] mo_fraction must be 0.5 or 1.0")
    if im.conditioning not in CONDITIONS:
        errors.append(f"[experiment.impact] conditioning must be one of {CONDITIONS}")
    if im.repeat_interval < 0 or im.repeat_trades < 0:
        errors.append("[experiment.impact] repeat_interval and repeat_trades must be >= 0")
    if not x.simulate.seconds > 0:
        errors.append("[experiment.simulate] seconds must be > 0")
    if x.evaluate.episodes < 1:
        errors.append("[experiment.evaluate] episodes must be >= 1")
    sw = x.sweep
    for v in sw.thetas + sw.theta_reinits:
        if not 0.5 <= v <= 1.0:
            errors.append(f"[experiment.sweep] grid value {v} outside [0.5, 1.0]")
    if sw.episodes < 1:
        errors.append("[experiment.sweep] episodes must be >= 1")


def config_from_dict(data: dict) -> RunConfig:
    errors: list[str] = []
    top = {"seed", "output_dir", "qrm", "env", "train", "experiment"}
    for key in data:
        if key not in top:
            errors.append(f"unknown top-level key {key!r}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        errors.append(f"seed must be a non-negative integer (got {seed!r})")
    out = data.get("output_dir", "runs/default")
    if not isinstance(out, str):
        errors.append("output_dir must be a string")
    qrm = _section(QrmSection, data.get("qrm", {}), "qrm", errors)
    env = _section(EnvConfig, data.get("env", {}), "env", errors)
    train = _section(TrainConfig, data.get("train", {}), "train", errors)
    exp = _section(ExperimentSection, data.get("experiment", {}), "experiment", errors,
                   nested={"simulate": SimulateSection, "impact": ImpactSection,
                           "evaluate": EvaluateSection, "sweep": SweepSection})
    if qrm is not None:
        _check_qrm(qrm, errors)
    if exp is not None and all(isinstance(getattr(exp, k), c) for k, c in (
            ("simulate", SimulateSection), ("impact", ImpactSection),
            ("evaluate", EvaluateSection), ("sweep", SweepSection))):
        _check_experiment(exp, errors)
    if errors:
        raise ConfigError(errors)
    return RunConfig(seed, out, qrm, env, train, exp)


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration (an empty file gives all defaults)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: TOML parse error: {exc}"]) from exc
    return config_from_dict(data)


def dump_config(config: RunConfig) -> str:
    return tomli_w.dumps(config.to_dict())


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(dump_config(config), encoding="utf-8")
