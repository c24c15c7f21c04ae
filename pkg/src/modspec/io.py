"""Result serialization: CSV data files, a JSON run manifest and the effective config.

Outputs depend only on the inputs: there are no timestamps or host names, floats
are written with 17 significant digits and JSON keys are sorted, so identical
configurations and seeds give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, dump_config, validate

FLOAT_FMT = "%.17g"


def _plain(obj):
    """JSON-safe copy with numpy scalars/arrays converted and non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [_plain(obj.real), _plain(obj.imag)]
    return obj


def versions() -> dict:
    return {"modspec": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_csv(path, columns: dict):
    """Write equal-length numeric columns (real parts) with a header row."""
    names = list(columns)
    data = np.column_stack([np.real(np.asarray(columns[n], dtype=complex)) for n in names])
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(names), comments="")


def write_spectrum_csv(path, result):
    cols = {"omega": result.omega, "value": np.real(result.values)}
    if result.stderr is not None:
        cols["stderr"] = result.stderr
    write_csv(path, cols)


def write_matrix_csv(path, phases, omega, values):
    """Dense ``(omega, phase)`` matrix; the header row holds the phases."""
    header = "omega," + ",".join(FLOAT_FMT % p for p in phases)
    data = np.column_stack([omega, np.asarray(values).T])
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=header, comments="")


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def manifest_dict(config: ExperimentConfig, command: str, results: dict | None = None,
                  files: list | None = None, model: dict | None = None) -> dict:
    data = config.data
    return _plain({
        "command": command,
        "config": data,
        "defaults": list(config.defaults),
        "preset_defaults": config.preset_provenance(),
        "model": model or {},
        "K": data["truncation"]["K"],
        "tolerances": {"truncation": data["truncation"]["tolerance"],
                       "equivalence": data["compare"]["equivalence_tol"],
                       "suppression": data["suppression"]["tol"]},
        "seed": data["simulator"]["seed"],
        "versions": versions(),
        "results": results or {},
        "files": files or [],
    })


def dumps_manifest(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, indent=2, allow_nan=False) + "\n"


class Emitter:
    """Collects output files under ``output.directory`` with ``output.prefix``."""

    def __init__(self, config: ExperimentConfig, command: str):
        self.config = config
        self.command = command
        out = config.data["output"]
        self.directory = out["directory"]
        self.prefix = out["prefix"]
        self.files: list = []
        os.makedirs(self.directory, exist_ok=True)

    def path(self, suffix) -> str:
        return os.path.join(self.directory, f"{self.prefix}{suffix}")

    def _record(self, path):
        self.files.append({"name": os.path.basename(path), "sha256": _sha256(path)})
        return path

    def spectrum(self, result, suffix=".csv"):
        p = self.path(suffix)
        write_spectrum_csv(p, result)
        return self._record(p)

    def table(self, columns, suffix):
        p = self.path(suffix)
        write_csv(p, columns)
        return self._record(p)

    def matrix(self, phases, omega, values, suffix=".map.csv"):
        p = self.path(suffix)
        write_matrix_csv(p, phases, omega, values)
        return self._record(p)

    def binary(self, writer, obj, suffix):
        p = self.path(suffix)
        writer(p, obj)
        return self._record(p)

    def finish(self, results=None, model=None) -> str:
        """Write the effective config and the manifest; returns the manifest path."""
        cfg = self.path(".config.toml")
        with open(cfg, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(dump_config(self.config))
        self._record(cfg)
        p = self.path(".manifest.json")
        text = dumps_manifest(manifest_dict(self.config, self.command, results, self.files, model))
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return p


def config_from_manifest(path) -> ExperimentConfig:
    """Effective configuration stored in a manifest (defaults provenance restored)."""
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    cfg = validate(manifest["config"])
    return ExperimentConfig(cfg.data, tuple(manifest.get("defaults", ())))
