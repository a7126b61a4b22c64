"""Deterministic result emission: CSV tables, JSON reports, run manifests.

Byte-identical reruns are part of the contract, so all floats go out at 17
significant digits in CSV (JSON keeps the serializer's exact shortest form),
newlines are fixed to "\\n", and JSON keys are sorted.  Wall-clock timings
live only in the manifest and never inside hashed outputs.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__


def fmt_float(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def fmt_cell(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    return fmt_float(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    lines.extend(",".join(fmt_cell(c) for c in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def to_jsonable(obj):
    """Recursively coerce numpy scalars/arrays into plain Python values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8", newline="\n")
    return path


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """What ran, from which inputs, producing which bytes.

    ``outputs`` maps file names to content hashes: rerunning the same
    scenario and seed must reproduce these exactly.  Timings are informative
    only and excluded from every hash.
    """

    subcommand: str
    scenario_hash: str
    master_seed: int
    n_paths: int
    version: str = __version__
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def record(self, path) -> None:
        self.outputs[Path(path).name] = sha256_file(path)

    def write(self, out_dir) -> Path:
        body = {
            "subcommand": self.subcommand,
            "scenario_hash": self.scenario_hash,
            "master_seed": self.master_seed,
            "n_paths": self.n_paths,
            "version": self.version,
            "outputs": dict(sorted(self.outputs.items())),
            "timings": self.timings,
        }
        return write_json(Path(out_dir) / "manifest.json", body)


class Timer:
    def __init__(self, manifest: RunManifest, name: str):
        self.manifest = manifest
        self.name = name

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings[self.name] = round(time.perf_counter() - self._t0, 6)
        return False
