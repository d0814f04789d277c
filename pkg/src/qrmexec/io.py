"""CSV emission and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def snapshot(results_dir) -> dict:
    """``{relative path: (mtime_ns, size)}`` for the files currently in ``results_dir``."""
    results_dir = Path(results_dir)
    if not results_dir.exists():
        return {}
    return {p.relative_to(results_dir).as_posix(): (p.stat().st_mtime_ns, p.stat().st_size)
            for p in results_dir.rglob("*") if p.is_file()}


def emitted_since(results_dir, before: dict) -> list[str]:
    """Files created or rewritten after ``before = snapshot(results_dir)``."""
    now = snapshot(results_dir)
    return sorted(k for k, v in now.items() if before.get(k) != v)


def run_manifest(config, results_dir, command: str = "", extra: dict | None = None,
                 timestamp: str | None = None, files=None) -> Path:
    """Write ``manifest.json`` describing the run and its output files.

    ``files`` lists paths relative to ``results_dir`` (default: every file
    there).  Everything but the ``timestamp`` field is a deterministic
    function of the config, the command and the emitted files.
    """
    results_dir = Path(results_dir)
    results_dir.mkdir(parents=True, exist_ok=True)
    if files is None:
        names = sorted(p.relative_to(results_dir).as_posix() for p in results_dir.rglob("*")
                       if p.is_file())
    else:
        names = sorted(files)
    files = []
    for name in names:
        p = results_dir / name
        if p.is_file() and name != "manifest.json":
            files.append({"path": p.relative_to(results_dir).as_posix(),
                          "bytes": p.stat().st_size, "sha256": _sha256(p)})
    manifest = {
        "command": command,
        "seed": config.seed,
        "config": config.to_dict(),
        "versions": {"qrmexec": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "rng_scheme": "SeedSequence(entropy=seed, spawn_key=(crc32(role), index))",
        "files": files,
        "extra": extra or {},
        "timestamp": timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    out = results_dir / "manifest.json"
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out
