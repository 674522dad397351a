"""Result persistence: CSV tables, JSON summaries, the policy file and run manifests.

Floats are written with ``repr`` so that a re-run with the same seed gives
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._validation import ConfigError, InputDomainError
from .policy import LogitsPolicy, MLPPolicy


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def prepare_out_dir(path: Path) -> Path:
    """Create the output directory, failing with a config error if it is not writable."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from exc
    return path


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    started: float = field(default_factory=time.time)
    finished: float | None = None
    files: dict[str, str] = field(default_factory=dict)

    def add(self, path: Path) -> Path:
        self.files[Path(path).name] = sha256(path)
        return path

    def write(self, out_dir: Path) -> Path:
        self.finished = time.time()
        doc = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "version": self.version,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(self.started)),
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(self.finished)),
            "files": dict(sorted(self.files.items())),
        }
        return write_json(Path(out_dir) / "manifest.json", doc)


def verify_manifest(out_dir: Path) -> dict[str, bool]:
    """Recompute each listed file's hash; returns ``{name: matches}``."""
    doc = json.loads((Path(out_dir) / "manifest.json").read_text())
    return {name: sha256(Path(out_dir) / name) == digest for name, digest in doc["files"].items()}


# ---- policy file ---------------------------------------------------------
#
# Plain text, one ``key = value`` per line, '#' starts a comment:
#
#   kind = logits
#   n_heads = 3
#   n_cells = 18
#   head.0 = <18 space-separated floats>
#   ...
#
# MLP policies store ``obs_dim``, ``slope`` and each parameter as
# ``w.<i>`` / ``b.<i>`` with a ``shape`` line before the values, plus the
# reference observation as ``reference_obs``.


def write_policy(path: Path, policy, reference_obs=None) -> Path:
    lines = [f"kind = {policy.kind}", f"n_heads = {policy.n_heads}", f"n_cells = {policy.n_cells}"]
    if isinstance(policy, LogitsPolicy):
        for h, row in enumerate(policy.table):
            lines.append(f"head.{h} = " + " ".join(repr(float(v)) for v in row))
    else:
        lines += [f"obs_dim = {policy.obs_dim}", f"slope = {policy.slope!r}"]
        for i, (w, b) in enumerate(zip(policy.weights, policy.biases)):
            lines.append(f"w.{i}.shape = {w.shape[0]} {w.shape[1]}")
            lines.append(f"w.{i} = " + " ".join(repr(float(v)) for v in w.ravel()))
            lines.append(f"b.{i} = " + " ".join(repr(float(v)) for v in b))
    if reference_obs is not None:
        lines.append("reference_obs = " + " ".join(repr(float(v)) for v in np.ravel(reference_obs)))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_policy(path: Path):
    """Inverse of :func:`write_policy`; returns ``(policy, reference_obs or None)``."""
    kv = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputDomainError(f"malformed policy line: {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        kv[k] = v
    try:
        kind, n_heads, n_cells = kv["kind"], int(kv["n_heads"]), int(kv["n_cells"])
        ref = np.array(kv["reference_obs"].split(), dtype=float) if "reference_obs" in kv else None
        if kind == "logits":
            table = [np.array(kv[f"head.{h}"].split(), dtype=float) for h in range(n_heads)]
            return LogitsPolicy(n_heads, n_cells, np.stack(table)), ref
        if kind == "mlp":
            pol = MLPPolicy(n_heads, int(kv["obs_dim"]), n_cells, slope=float(kv["slope"]))
            for i in range(len(pol.weights)):
                shape = tuple(int(s) for s in kv[f"w.{i}.shape"].split())
                pol.weights[i] = np.array(kv[f"w.{i}"].split(), dtype=float).reshape(shape)
                pol.biases[i] = np.array(kv[f"b.{i}"].split(), dtype=float)
            return pol, ref
    except (KeyError, ValueError) as exc:
        raise InputDomainError(f"incomplete policy file {path}: {exc}") from exc
    raise InputDomainError(f"unknown policy kind {kind!r}")
