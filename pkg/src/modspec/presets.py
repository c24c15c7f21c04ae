"""Canonical parameter sets.

All frequencies are in units of the mean mechanical frequency. Values chosen
here rather than fixed by the target parameter sets are recorded as defaults
in every run manifest (``PRESET_DEFAULTS``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import ValidationError
from .model import (
    DETUNING,
    G,
    MECHANICAL,
    OMEGA_M,
    OPTICAL,
    ModeSpec,
    ModulationSpec,
    build_fourier_series,
    noise_matrix,
    thermal_occupation,
)

OMEGA_M_HZ = 185e3
TEMPERATURE_K = 300.0
GAMMA_M = 2.3e-5
OMEGA_D = 0.05
SQRT2 = float(np.sqrt(2.0))


def room_temperature_occupation(omega_m_hz=OMEGA_M_HZ, temperature_k=TEMPERATURE_K) -> float:
    return thermal_occupation(temperature_k, omega_m_hz)


@dataclass(frozen=True)
class HybridTrapPreset:
    """One optical and one mechanical mode with

    ``g(t) = 2 gbar sin(omega_d t)``, ``omega_M(t) = omega_m + 2 omega_2 cos(2 omega_d t)``
    and ``Delta(t) = detuning + 2 delta_2 cos(2 omega_d t)``.
    """

    gbar: float = 0.01
    omega_m: float = 1.0
    omega_2: float = 0.0
    omega_d: float = OMEGA_D
    detuning: float = -1.0
    delta_2: float = 0.0
    kappa: float = 1.0
    gamma_m: float = GAMMA_M
    nbar_a: float = 0.0
    nbar_b: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if not np.isfinite(getattr(self, f.name)):
                raise ValidationError(f"{f.name} must be finite", path=f"preset.{f.name}")
        if self.omega_d <= 0:
            raise ValidationError("omega_d must be positive", path="preset.omega_d")

    @property
    def modulation_ratio(self) -> float:
        return self.omega_2 / self.omega_d

    def with_ratio(self, ratio: float) -> "HybridTrapPreset":
        return replace(self, omega_2=ratio * self.omega_d)

    def modes(self):
        return [ModeSpec("a", OPTICAL, self.detuning, self.kappa, self.nbar_a),
                ModeSpec("b", MECHANICAL, self.omega_m, self.gamma_m, self.nbar_b)]

    def modulations(self):
        mods = [ModulationSpec.sine(G, ("a", "b"), 2 * self.gbar, 1)]
        if self.omega_2:
            mods.append(ModulationSpec.cosine(OMEGA_M, ("b",), 2 * self.omega_2, 2))
        if self.delta_2:
            mods.append(ModulationSpec.cosine(DETUNING, ("a",), 2 * self.delta_2, 2))
        return mods

    def build(self):
        series = build_fourier_series(self.modes(), self.modulations(), self.omega_d)
        return series, noise_matrix(series)

    @property
    def cooperativity(self) -> float:
        """``C = 4 <g^2> / (kappa Gamma_M)`` with the mean-square coupling ``<g^2> = 2 gbar^2``."""
        return 8 * self.gbar ** 2 / (self.kappa * self.gamma_m)

    def susceptibilities(self):
        from .iterative import Susceptibilities

        return Susceptibilities(self.detuning, self.kappa, self.omega_m, self.gamma_m)

    def to_dict(self) -> dict:
        return asdict(self)


def gbar_for_cooperativity(C, kappa, gamma_m) -> float:
    return float(np.sqrt(C * kappa * gamma_m / 8))


@dataclass(frozen=True)
class ProbePreset:
    """Cooling mode, on-resonance probe mode and one mechanical mode.

    ``standard=True`` gives static couplings ``gbar`` and ``probe_ratio * gbar``;
    otherwise both couplings follow ``2 gbar sin(omega_d t)`` (scaled for the
    probe) and ``omega_M`` is modulated at ``2 omega_d`` with amplitude ``omega_2``.
    """

    gbar: float = 0.1
    probe_ratio: float = 1.0
    omega_m: float = 1.0
    omega_2: float = SQRT2 * OMEGA_D
    omega_d: float = OMEGA_D
    detuning: float = -1.0
    probe_detuning: float = 0.0
    kappa: float = 1.0
    kappa_p: float = 1.0
    gamma_m: float = GAMMA_M
    nbar_a: float = 0.0
    nbar_b: float = 10.0
    standard: bool = False

    def __post_init__(self):
        if self.probe_ratio < 0:
            raise ValidationError("probe_ratio must be non-negative", path="preset.probe_ratio")
        if self.omega_d <= 0:
            raise ValidationError("omega_d must be positive", path="preset.omega_d")

    def with_ratio(self, ratio: float) -> "ProbePreset":
        return replace(self, omega_2=ratio * self.omega_d)

    def modes(self):
        return [ModeSpec("cool", OPTICAL, self.detuning, self.kappa, self.nbar_a),
                ModeSpec("probe", OPTICAL, self.probe_detuning, self.kappa_p, self.nbar_a),
                ModeSpec("b", MECHANICAL, self.omega_m, self.gamma_m, self.nbar_b)]

    def modulations(self):
        gp = self.probe_ratio * self.gbar
        if self.standard:
            return [ModulationSpec.static(G, ("cool", "b"), self.gbar),
                    ModulationSpec.static(G, ("probe", "b"), gp)]
        mods = [ModulationSpec.sine(G, ("cool", "b"), 2 * self.gbar, 1),
                ModulationSpec.sine(G, ("probe", "b"), 2 * gp, 1)]
        if self.omega_2:
            mods.append(ModulationSpec.cosine(OMEGA_M, ("b",), 2 * self.omega_2, 2))
        return mods

    def build(self):
        drive = None if self.standard else self.omega_d
        series = build_fourier_series(self.modes(), self.modulations(), drive)
        return series, noise_matrix(series)

    def to_dict(self) -> dict:
        return asdict(self)


# Chosen values, written into manifests as defaults.
PRESET_DEFAULTS = {
    "fig2a": {"gbar": 0.01, "detuning": -1.0, "kappa": 1.0, "omega_m_hz": OMEGA_M_HZ},
    "fig2c": {"detuning": -1.0, "omega_m_hz": OMEGA_M_HZ},
    "fig3": {"gbar": 0.1, "probe_ratio": 1.0, "kappa": 1.0, "kappa_p": 1.0, "nbar_b": 10.0},
}

FIG2_RATIOS = (0.05, 0.2, 0.5, 0.9, 1.4)


def fig2a(ratio: float = 0.9, **overrides) -> HybridTrapPreset:
    """Split-sideband set: ``omega_d = 0.05``, ``Delta_2 = 0``, 300 K mechanical bath."""
    omega_m_hz = overrides.pop("omega_m_hz", OMEGA_M_HZ)
    temperature_k = overrides.pop("temperature_k", TEMPERATURE_K)
    base = dict(nbar_b=room_temperature_occupation(omega_m_hz, temperature_k))
    base.update(overrides)
    return HybridTrapPreset(**base).with_ratio(ratio)


def fig2c(ratio: float, C: float, resolved: bool = True, **overrides) -> HybridTrapPreset:
    """Cooperativity sweep point; ``resolved`` selects ``omega_M/kappa = 1`` or ``0.15``."""
    kappa = 1.0 if resolved else 1.0 / 0.15
    p = fig2a(ratio, kappa=kappa, **overrides)
    return replace(p, gbar=gbar_for_cooperativity(C, kappa, p.gamma_m))


def fig3(ratio: float | None = SQRT2, **overrides) -> ProbePreset:
    """Homodyne set; ``ratio=None`` gives the unmodulated standard case."""
    if ratio is None:
        return ProbePreset(standard=True, omega_2=0.0, **overrides)
    return ProbePreset(**overrides).with_ratio(ratio)


PRESETS = {"fig2a": fig2a, "fig2c": fig2c, "fig3": fig3}
