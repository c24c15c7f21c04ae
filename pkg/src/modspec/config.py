"""Experiment configuration: strict TOML schema, defaults with provenance.

A configuration either names a preset (``preset = "fig2a"``, parameters under
``[preset_params]``) or declares the model explicitly under ``[modes.<name>]``
and ``[modulations.<label>]``. Every key that is not given is filled from
``DEFAULTS`` and its dotted path is recorded in ``ExperimentConfig.defaults``.
See the README for the full schema.
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ValidationError
from .model import DETUNING, G, MODE_KINDS, OMEGA_M, ModeSpec, ModulationSpec, build_fourier_series, noise_matrix
from .model import thermal_occupation
from .presets import PRESET_DEFAULTS, HybridTrapPreset, ProbePreset, fig2a, fig2c, fig3
from .spectra import DETECTION_KINDS, HETERODYNE, HOMODYNE, INTRACAVITY, DetectionSpec
from .transfer import DEFAULT_K

METHOD_NAMES = ("shifted", "floquet", "iterative", "oracle")
PRESET_NAMES = ("fig2a", "fig2c", "fig3")
SHAPES = ("static", "sine", "cosine")
FREQUENCY_UNITS = ("omega_m", "hz")

DEFAULTS = {
    "methods": ["shifted"],
    "projection": "S_yy",
    "units": {"omega_m_hz": 185e3, "frequency_unit": "omega_m", "temperature_k": 300.0},
    "grid": {"start": 0.5, "stop": 1.5, "points": 2048},
    "truncation": {"K": DEFAULT_K, "tolerance": 1e-8, "max_K": 64},
    "iterative": {"order": 3},
    "detection": {"kind": INTRACAVITY, "mode": "", "phase": 0.0, "beat": 0.0},
    "homodyne": {"phases": 65},
    "compare": {"equivalence_tol": 1e-9},
    "suppression": {"lo": 1.0, "hi": 2.0, "tol": 0.01},
    "sweep": {"parameter": "", "values": []},
    "simulator": {"dt": 0.02, "t_sim": 2.5e5, "burn_in": 7e3, "n_trajectories": 10, "seed": 0,
                  "record_every": 10, "segment_time": 2.5e4, "observables": ["y"], "band": 3.0},
    "output": {"directory": ".", "prefix": "modspec"},
}

MODE_KEYS = {"kind", "frequency", "damping", "occupation", "temperature_k"}
MODULATION_KEYS = {"target", "modes", "shape", "amplitude", "harmonic"}
TOP_KEYS = {"preset", "preset_params", "modes", "modulations", "drive"} | set(DEFAULTS)

PRESET_PARAMS = {
    "fig2a": ({"ratio": 0.9}, {f for f in HybridTrapPreset.__dataclass_fields__} - {"omega_2"}),
    "fig2c": ({"ratio": 1.4, "C": 1e3, "resolved": True},
              {f for f in HybridTrapPreset.__dataclass_fields__} - {"omega_2", "gbar", "kappa"}),
    "fig3": ({"ratio": math.sqrt(2), "standard": False},
             {f for f in ProbePreset.__dataclass_fields__} - {"omega_2", "standard"}),
}


def _fail(msg, path):
    raise ValidationError(msg, path=path)


def _check_keys(table, allowed, path):
    if not isinstance(table, dict):
        _fail("expected a table", path)
    for key in table:
        if key not in allowed:
            _fail(f"unknown key {key!r}; allowed: {sorted(allowed)}", f"{path}.{key}" if path else key)


def _number(value, path, *, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"expected a number, got {value!r}", path)
    if integer and int(value) != value:
        _fail(f"expected an integer, got {value!r}", path)
    if not math.isfinite(value):
        _fail("must be finite", path)
    if positive and value <= 0:
        _fail(f"must be > 0, got {value}", path)
    if nonneg and value < 0:
        _fail(f"must be >= 0, got {value}", path)
    return int(value) if integer else value


def _fill(data, defaults, path, record):
    """Recursively add missing default keys, recording their dotted paths."""
    for key, val in defaults.items():
        where = f"{path}.{key}" if path else key
        if isinstance(val, dict):
            data.setdefault(key, {})
            _check_keys(data[key], set(val), where)
            _fill(data[key], val, where, record)
        elif key not in data:
            data[key] = copy.deepcopy(val)
            record.append(where)


def set_path(data: dict, path: str, value):
    """Assign ``value`` at a dotted ``path`` in a nested dict, creating tables."""
    keys = path.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            _fail("is not a table", ".".join(keys[:-1]))
    node[keys[-1]] = value


def get_path(data: dict, path: str):
    node = data
    for k in path.split("."):
        if not isinstance(node, dict) or k not in node:
            _fail("no such configuration key", path)
        node = node[k]
    return node


@dataclass
class ExperimentConfig:
    """Validated effective configuration.

    ``data`` is the complete nested mapping (what :func:`dump_config` writes);
    ``defaults`` lists the dotted paths that were filled from defaults.
    """

    data: dict
    defaults: tuple = field(default_factory=tuple)

    # -- convenience accessors ---------------------------------------------------
    @property
    def preset(self) -> str | None:
        return self.data.get("preset")

    @property
    def methods(self) -> list:
        return list(self.data["methods"])

    @property
    def projection(self) -> str:
        return self.data["projection"]

    @property
    def unit_scale(self) -> float:
        """Factor converting configured frequencies to units of ``omega_M``."""
        u = self.data["units"]
        return 1.0 / u["omega_m_hz"] if u["frequency_unit"] == "hz" else 1.0

    def grid(self) -> np.ndarray:
        g = self.data["grid"]
        s = self.unit_scale
        return np.linspace(g["start"] * s, g["stop"] * s, g["points"])

    @property
    def K(self):
        return self.data["truncation"]["K"]

    @property
    def auto_K(self) -> bool:
        return self.K == "auto"

    @property
    def order(self) -> int:
        return self.data["iterative"]["order"]

    def detection(self, series=None) -> DetectionSpec:
        d = self.data["detection"]
        mode = d["mode"]
        if not mode and series is not None:
            mode = next((m.name for m in series.modes if m.kind == "optical"), "")
        return DetectionSpec(mode, d["kind"], float(d["phase"]), float(d["beat"]) * self.unit_scale)

    def build_preset(self, params_override=None):
        """Preset object (``HybridTrapPreset`` or ``ProbePreset``)."""
        params = dict(self.data["preset_params"])
        params.update(params_override or {})
        u = self.data["units"]
        name = self.preset
        if name == "fig2a":
            ratio = params.pop("ratio")
            return fig2a(ratio, omega_m_hz=u["omega_m_hz"], temperature_k=u["temperature_k"], **params)
        if name == "fig2c":
            return fig2c(params.pop("ratio"), params.pop("C"), params.pop("resolved"),
                         omega_m_hz=u["omega_m_hz"], temperature_k=u["temperature_k"], **params)
        ratio = params.pop("ratio")
        standard = params.pop("standard")
        return fig3(None if standard else ratio, **params)

    def build(self):
        """``(series, noise)`` for this configuration."""
        if self.preset:
            return self.build_preset().build()
        s = self.unit_scale
        u = self.data["units"]
        modes = []
        for name, m in self.data["modes"].items():
            occ = m.get("occupation")
            if occ is None:
                occ = thermal_occupation(m["temperature_k"], abs(m["frequency"]) * s * u["omega_m_hz"])
            modes.append(ModeSpec(name, m["kind"], m["frequency"] * s, m["damping"] * s, occ))
        mods = []
        for label, mod in self.data["modulations"].items():
            amp = mod["amplitude"] * s
            where = f"modulations.{label}"
            try:
                if mod["shape"] == "static":
                    mods.append(ModulationSpec.static(mod["target"], mod["modes"], amp))
                elif mod["shape"] == "sine":
                    mods.append(ModulationSpec.sine(mod["target"], mod["modes"], amp, mod["harmonic"]))
                else:
                    mods.append(ModulationSpec.cosine(mod["target"], mod["modes"], amp, mod["harmonic"]))
            except ValidationError as exc:
                raise ValidationError(str(exc), path=where) from None
        drive = self.data.get("drive", {}).get("frequency")
        series = build_fourier_series(modes, mods, None if drive is None else drive * s)
        return series, noise_matrix(series)

    def preset_provenance(self) -> dict:
        """Defaults that the chosen preset fills in beyond the reference values."""
        return dict(PRESET_DEFAULTS.get(self.preset, {})) if self.preset else {}


def _validate_model(data, record):
    preset = data.get("preset")
    if preset is not None:
        if preset not in PRESET_NAMES:
            _fail(f"unknown preset {preset!r}; expected one of {PRESET_NAMES}", "preset")
        for key in ("modes", "modulations", "drive"):
            if key in data:
                _fail("cannot be combined with a preset; use [preset_params]", key)
        defaults, allowed = PRESET_PARAMS[preset]
        params = data.setdefault("preset_params", {})
        _check_keys(params, set(defaults) | allowed, "preset_params")
        for key, val in defaults.items():
            if key not in params:
                params[key] = val
                record.append(f"preset_params.{key}")
        for key, val in params.items():
            where = f"preset_params.{key}"
            if key in ("resolved", "standard"):
                if not isinstance(val, bool):
                    _fail("expected true or false", where)
            else:
                _number(val, where, nonneg=key.startswith(("nbar", "gamma", "kappa", "C", "probe")))
        return
    if "preset_params" in data:
        _fail("only valid together with a preset", "preset_params")
    modes = data.get("modes")
    if not modes:
        _fail("at least one mode is required (or name a preset)", "modes")
    _check_keys(data, TOP_KEYS, "")
    for name, m in modes.items():
        where = f"modes.{name}"
        _check_keys(m, MODE_KEYS, where)
        for key in ("kind", "frequency", "damping"):
            if key not in m:
                _fail("missing required key", f"{where}.{key}")
        if m["kind"] not in MODE_KINDS:
            _fail(f"expected one of {MODE_KINDS}", f"{where}.kind")
        _number(m["frequency"], f"{where}.frequency")
        _number(m["damping"], f"{where}.damping", positive=True)
        if "occupation" in m and "temperature_k" in m:
            _fail("give occupation or temperature_k, not both", where)
        if "temperature_k" in m:
            _number(m["temperature_k"], f"{where}.temperature_k", nonneg=True)
        else:
            if "occupation" not in m:
                m["occupation"] = 0.0
                record.append(f"{where}.occupation")
            _number(m["occupation"], f"{where}.occupation", nonneg=True)
    mods = data.setdefault("modulations", {})
    needs_drive = False
    for label, mod in mods.items():
        where = f"modulations.{label}"
        _check_keys(mod, MODULATION_KEYS, where)
        for key in ("target", "modes", "shape", "amplitude"):
            if key not in mod:
                _fail("missing required key", f"{where}.{key}")
        if mod["target"] not in (G, OMEGA_M, DETUNING):
            _fail(f"expected one of {(G, OMEGA_M, DETUNING)}", f"{where}.target")
        if mod["shape"] not in SHAPES:
            _fail(f"expected one of {SHAPES}", f"{where}.shape")
        if not isinstance(mod["modes"], list) or any(n not in modes for n in mod["modes"]):
            _fail(f"must list declared modes {sorted(modes)}", f"{where}.modes")
        _number(mod["amplitude"], f"{where}.amplitude")
        if "harmonic" not in mod:
            mod["harmonic"] = 1
            record.append(f"{where}.harmonic")
        _number(mod["harmonic"], f"{where}.harmonic", positive=True, integer=True)
        needs_drive |= mod["shape"] != "static"
    if "drive" in data:
        _check_keys(data["drive"], {"frequency"}, "drive")
        _number(data["drive"].get("frequency"), "drive.frequency", positive=True)
    elif needs_drive:
        _fail("a [drive] frequency is required for time-dependent modulations", "drive.frequency")


def _validate_rest(data):
    methods = data["methods"]
    if not isinstance(methods, list) or not methods:
        _fail("at least one method is required", "methods")
    for m in methods:
        if m not in METHOD_NAMES:
            _fail(f"unknown method {m!r}; expected some of {METHOD_NAMES}", "methods")
    if len(set(methods)) != len(methods):
        _fail("duplicate methods", "methods")
    if not isinstance(data["projection"], str):
        _fail("expected a string", "projection")
    u = data["units"]
    _number(u["omega_m_hz"], "units.omega_m_hz", positive=True)
    _number(u["temperature_k"], "units.temperature_k", nonneg=True)
    if u["frequency_unit"] not in FREQUENCY_UNITS:
        _fail(f"expected one of {FREQUENCY_UNITS}", "units.frequency_unit")
    g = data["grid"]
    _number(g["start"], "grid.start")
    _number(g["stop"], "grid.stop")
    _number(g["points"], "grid.points", positive=True, integer=True)
    if not g["stop"] > g["start"]:
        _fail("grid must be increasing (stop > start)", "grid.stop")
    if g["points"] < 2:
        _fail("need at least 2 points", "grid.points")
    t = data["truncation"]
    if t["K"] != "auto":
        _number(t["K"], "truncation.K", positive=True, integer=True)
    _number(t["tolerance"], "truncation.tolerance", positive=True)
    _number(t["max_K"], "truncation.max_K", positive=True, integer=True)
    _number(data["iterative"]["order"], "iterative.order", positive=True, integer=True)
    d = data["detection"]
    if d["kind"] not in DETECTION_KINDS:
        _fail(f"expected one of {DETECTION_KINDS}", "detection.kind")
    if not isinstance(d["mode"], str):
        _fail("expected a mode name", "detection.mode")
    _number(d["phase"], "detection.phase")
    _number(d["beat"], "detection.beat")
    if d["kind"] in (HOMODYNE, HETERODYNE) and data.get("modes") is not None and d["mode"]:
        mode = data["modes"].get(d["mode"])
        if mode is None or mode["kind"] != "optical":
            _fail("must name an optical mode", "detection.mode")
    _number(data["homodyne"]["phases"], "homodyne.phases", positive=True, integer=True)
    _number(data["compare"]["equivalence_tol"], "compare.equivalence_tol", positive=True)
    s = data["suppression"]
    for key in s:
        _number(s[key], f"suppression.{key}", positive=True)
    if not s["hi"] > s["lo"]:
        _fail("hi must exceed lo", "suppression.hi")
    sw = data["sweep"]
    if not isinstance(sw["parameter"], str):
        _fail("expected a dotted key path", "sweep.parameter")
    if not isinstance(sw["values"], list):
        _fail("expected a list", "sweep.values")
    for i, v in enumerate(sw["values"]):
        _number(v, f"sweep.values[{i}]")
    if sw["values"] and not sw["parameter"]:
        _fail("sweep values given without a parameter", "sweep.parameter")
    sim = data["simulator"]
    for key in ("dt", "t_sim", "segment_time", "band"):
        _number(sim[key], f"simulator.{key}", positive=True)
    _number(sim["burn_in"], "simulator.burn_in", nonneg=True)
    for key in ("n_trajectories", "record_every"):
        _number(sim[key], f"simulator.{key}", positive=True, integer=True)
    _number(sim["seed"], "simulator.seed", nonneg=True, integer=True)
    if not isinstance(sim["observables"], list) or not sim["observables"]:
        _fail("expected a non-empty list", "simulator.observables")
    o = data["output"]
    for key in ("directory", "prefix"):
        if not isinstance(o[key], str) or not o[key]:
            _fail("expected a non-empty string", f"output.{key}")


def validate(raw: dict) -> ExperimentConfig:
    """Validate a nested mapping and fill defaults."""
    data = copy.deepcopy(raw)
    record: list = []
    _check_keys(data, TOP_KEYS, "")
    _validate_model(data, record)
    _fill(data, DEFAULTS, "", record)
    _validate_rest(data)
    return ExperimentConfig(data, tuple(sorted(record)))


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse TOML text; ``overrides`` maps dotted paths to values applied before validation."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"not valid TOML: {exc}") from None
    for path, value in (overrides or {}).items():
        set_path(raw, path, value)
    return validate(raw)


def load_config(path, overrides=None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)


def dump_config(config: ExperimentConfig) -> str:
    """TOML text of the effective configuration; ``parse_config`` of it reproduces ``config.data``."""
    import tomli_w

    return tomli_w.dumps(config.data)


def with_value(config: ExperimentConfig, path: str, value) -> ExperimentConfig:
    """Copy of ``config`` with one key replaced and re-validated."""
    data = copy.deepcopy(config.data)
    get_path(data, path)
    set_path(data, path, value)
    new = validate(data)
    return ExperimentConfig(new.data, tuple(sorted(set(config.defaults) - {path})))
