"""Linearized n-mode optomechanical model.

The system is described by a quadratic Hamiltonian ``H(t) = 1/2 c^dag H(t) c``
in the ladder-operator vector ``c = (c_1, c_1^dag, ..., c_n, c_n^dag)``. Optical
modes always come first, mechanical modes after, each mode occupying two
consecutive rows (annihilation, creation).

All frequencies are dimensionless, in units of the mechanical reference
frequency (``omega_M = 1``).

Sign conventions
----------------
* optical modes contribute ``-Delta(t) a^dag a``; mechanical modes
  ``omega_M(t) b^dag b``; couplings ``g(t) (a + a^dag)(b + b^dag)``.
* ``H(t) = sum_k H_k exp(i k omega_d t)``; a sine drive
  ``g(t) = 2 gbar sin(omega_d t)`` therefore has ``g_{+1} = -i gbar`` and
  ``g_{-1} = +i gbar``. With this choice ``i sigma H_{+1}`` is ``+gbar`` times the
  sign pattern ``[[0, P], [P, 0]]`` with ``P = [[1, 1], [-1, -1]]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import constants

from .errors import ModeReferenceError, ValidationError

OPTICAL = "optical"
MECHANICAL = "mechanical"
MODE_KINDS = (OPTICAL, MECHANICAL)

# modulation targets
G = "g"
OMEGA_M = "omega_m"
DETUNING = "detuning"
TARGETS = (G, OMEGA_M, DETUNING)


@dataclass(frozen=True)
class ModeSpec:
    """One bosonic mode coupled to its own Markovian bath.

    ``frequency`` is the static detuning ``Delta`` for optical modes and the
    static natural frequency ``omega_M`` for mechanical ones.
    """

    name: str
    kind: str
    frequency: float
    damping: float
    occupation: float = 0.0

    def __post_init__(self):
        if self.kind not in MODE_KINDS:
            raise ValidationError(f"unknown mode kind {self.kind!r}", path=f"modes.{self.name}.kind")
        if not np.isfinite(self.frequency):
            raise ValidationError("must be finite", path=f"modes.{self.name}.frequency")
        if not (np.isfinite(self.damping) and self.damping > 0):
            raise ValidationError(f"damping must be > 0, got {self.damping}", path=f"modes.{self.name}.damping")
        if not (np.isfinite(self.occupation) and self.occupation >= 0):
            raise ValidationError(
                f"occupation must be >= 0, got {self.occupation}", path=f"modes.{self.name}.occupation"
            )


def _freeze_harmonics(harmonics: Mapping[int, complex]) -> Mapping[int, complex]:
    clean = {}
    for k, v in harmonics.items():
        if int(k) != k:
            raise ValidationError(f"harmonic index must be an integer, got {k!r}")
        v = complex(v)
        if not (np.isfinite(v.real) and np.isfinite(v.imag)):
            raise ValidationError(f"harmonic {k} amplitude is not finite")
        if v != 0:
            clean[int(k)] = v
    return MappingProxyType(dict(sorted(clean.items())))


@dataclass(frozen=True)
class ModulationSpec:
    """Fourier harmonics added to one Hamiltonian parameter.

    ``target`` is ``"g"`` (``modes = (optical, mechanical)``), ``"omega_m"`` or
    ``"detuning"`` (``modes = (mode,)``). ``harmonics`` maps the integer ``k`` to
    the complex amplitude multiplying ``exp(i k omega_d t)``; a ``k = 0`` entry is a
    static offset (this is how a constant coupling ``g`` is declared).
    """

    target: str
    modes: tuple
    harmonics: Mapping[int, complex] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "harmonics", _freeze_harmonics(self.harmonics))
        where = f"modulations.{self.target}"
        if self.target not in TARGETS:
            raise ValidationError(f"unknown target {self.target!r}; expected one of {TARGETS}", path=where)
        expected = 2 if self.target == G else 1
        if len(self.modes) != expected:
            raise ValidationError(f"target {self.target!r} takes {expected} mode name(s)", path=where)
        h = self.harmonics
        for k, v in h.items():
            partner = h.get(-k, 0j)
            if not np.isclose(partner, np.conj(v), rtol=1e-12, atol=1e-15):
                raise ValidationError(
                    f"harmonic {-k} must be the complex conjugate of harmonic {k} "
                    f"(got {partner!r} vs conj({v!r}))",
                    path=where,
                )

    @classmethod
    def static(cls, target, modes, value):
        return cls(target, modes, {0: value})

    @classmethod
    def sine(cls, target, modes, amplitude, k=1):
        """``amplitude * sin(k omega_d t)``."""
        half = amplitude / 2j
        return cls(target, modes, {k: half, -k: np.conj(half)})

    @classmethod
    def cosine(cls, target, modes, amplitude, k=1):
        """``amplitude * cos(k omega_d t)``."""
        return cls(target, modes, {k: amplitude / 2, -k: amplitude / 2})

    def combined(self, other: "ModulationSpec") -> "ModulationSpec":
        if (other.target, other.modes) != (self.target, self.modes):
            raise ValidationError("can only combine modulations of the same parameter")
        h = dict(self.harmonics)
        for k, v in other.harmonics.items():
            h[k] = h.get(k, 0j) + v
        return ModulationSpec(self.target, self.modes, h)

    def value(self, t, drive_frequency):
        """Evaluate the harmonic sum at time(s) ``t`` (real for valid specs)."""
        t = np.asarray(t, dtype=float)
        total = np.zeros(t.shape, dtype=complex)
        for k, v in self.harmonics.items():
            total += v * np.exp(1j * k * drive_frequency * t)
        return total.real


def canonical_order(modes: Iterable[ModeSpec]) -> tuple:
    """Optical modes first, then mechanical, each group in declaration order."""
    modes = tuple(modes)
    if not modes:
        raise ValidationError("at least one mode is required", path="modes")
    names = [m.name for m in modes]
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate mode names in {names}", path="modes")
    return tuple(m for m in modes if m.kind == OPTICAL) + tuple(m for m in modes if m.kind == MECHANICAL)


def symplectic_form(n_modes: int) -> np.ndarray:
    """``sigma = [c, c^dag] = diag(1, -1, ..., 1, -1)``."""
    return np.diag(np.tile([1.0, -1.0], n_modes))


def _readonly(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HamiltonianFourierSeries:
    """Harmonics ``H_k`` of the periodic Hamiltonian matrix.

    Missing harmonics are zero; indexing with any integer works.
    """

    modes: tuple
    drive_frequency: float
    harmonics: Mapping[int, np.ndarray]

    def __post_init__(self):
        frozen = {int(k): _readonly(v) for k, v in sorted(self.harmonics.items())}
        dim = 2 * len(self.modes)
        for k, v in frozen.items():
            if v.shape != (dim, dim):
                raise ValidationError(f"H_{k} has shape {v.shape}, expected {(dim, dim)}")
        if 0 not in frozen:
            frozen[0] = _readonly(np.zeros((dim, dim)))
        object.__setattr__(self, "harmonics", MappingProxyType(frozen))

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def dim(self) -> int:
        return 2 * len(self.modes)

    @property
    def max_harmonic(self) -> int:
        ks = [abs(k) for k, v in self.harmonics.items() if np.any(v != 0)]
        return max(ks, default=0)

    @property
    def is_modulated(self) -> bool:
        return self.max_harmonic > 0

    def __getitem__(self, k: int) -> np.ndarray:
        h = self.harmonics.get(int(k))
        if h is None:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return h

    def evaluate(self, t) -> np.ndarray:
        """``H(t)``; for an array of times the result has shape ``t.shape + (dim, dim)``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (self.dim, self.dim), dtype=complex)
        for k, h in self.harmonics.items():
            out += np.exp(1j * k * self.drive_frequency * t)[..., None, None] * h
        return out

    def mode_index(self, name: str) -> int:
        for i, m in enumerate(self.modes):
            if m.name == name:
                return i
        raise ModeReferenceError(f"no mode named {name!r}", path="modes")

    def mode(self, name: str) -> ModeSpec:
        return self.modes[self.mode_index(name)]

    def pair(self, name: str) -> tuple:
        """Rows of ``(c_i, c_i^dag)`` for the named mode."""
        i = self.mode_index(name)
        return 2 * i, 2 * i + 1

    def without_modulation(self) -> "HamiltonianFourierSeries":
        return HamiltonianFourierSeries(self.modes, self.drive_frequency, {0: self[0]})

    def hermiticity_defect(self) -> float:
        """``max_k max|H_{-k} - H_k^dag|``."""
        ks = set(self.harmonics) | {-k for k in self.harmonics}
        return max(float(np.max(np.abs(self[-k] - self[k].conj().T))) for k in ks)

    def particle_hole_defect(self) -> float:
        """Deviation from ``Pi H_{-k}^* Pi = H_k`` (``Pi`` swaps each c/c^dag pair)."""
        perm = np.arange(self.dim).reshape(-1, 2)[:, ::-1].ravel()
        ks = set(self.harmonics) | {-k for k in self.harmonics}
        return max(float(np.max(np.abs(self[-k].conj()[np.ix_(perm, perm)] - self[k]))) for k in ks)


def build_fourier_series(
    modes: Sequence[ModeSpec],
    modulations: Sequence[ModulationSpec] = (),
    drive_frequency: float | None = None,
) -> HamiltonianFourierSeries:
    """Assemble ``{H_k}`` from mode frequencies plus static/modulated parameters."""
    ordered = canonical_order(modes)
    index = {m.name: i for i, m in enumerate(ordered)}
    dim = 2 * len(ordered)
    harmonics: dict[int, np.ndarray] = {0: np.zeros((dim, dim), dtype=complex)}

    def slot(k):
        if k not in harmonics:
            harmonics[k] = np.zeros((dim, dim), dtype=complex)
        return harmonics[k]

    for i, m in enumerate(ordered):
        sign = -1.0 if m.kind == OPTICAL else 1.0
        harmonics[0][2 * i, 2 * i] += sign * m.frequency
        harmonics[0][2 * i + 1, 2 * i + 1] += sign * m.frequency

    needs_drive = False
    for n, mod in enumerate(modulations):
        where = f"modulations[{n}]"
        for name in mod.modes:
            if name not in index:
                raise ModeReferenceError(f"modulation refers to undeclared mode {name!r}", path=where)
        kinds = tuple(ordered[index[name]].kind for name in mod.modes)
        if mod.target == G:
            if kinds != (OPTICAL, MECHANICAL):
                raise ValidationError("coupling must name (optical, mechanical) modes", path=where)
            i, j = index[mod.modes[0]], index[mod.modes[1]]
            rows = [2 * i, 2 * i + 1]
            cols = [2 * j, 2 * j + 1]
            for k, v in mod.harmonics.items():
                h = slot(k)
                h[np.ix_(rows, cols)] += v
                h[np.ix_(cols, rows)] += v
        else:
            want = MECHANICAL if mod.target == OMEGA_M else OPTICAL
            if kinds[0] != want:
                raise ValidationError(f"target {mod.target!r} needs a {want} mode", path=where)
            i = index[mod.modes[0]]
            sign = -1.0 if mod.target == DETUNING else 1.0
            for k, v in mod.harmonics.items():
                h = slot(k)
                h[2 * i, 2 * i] += sign * v
                h[2 * i + 1, 2 * i + 1] += sign * v
        if mod.target == G and 0 in mod.harmonics and abs(mod.harmonics[0].imag) > 0:
            raise ValidationError("static coupling must be real", path=where)
        if any(k != 0 for k in mod.harmonics):
            needs_drive = True

    if needs_drive:
        if drive_frequency is None or not (np.isfinite(drive_frequency) and drive_frequency > 0):
            raise ValidationError("drive_frequency must be > 0 when harmonics k != 0 are present",
                                  path="modulations.drive_frequency")
    series = HamiltonianFourierSeries(
        ordered, float(drive_frequency) if drive_frequency else 0.0,
        {k: v for k, v in harmonics.items() if k == 0 or np.any(v != 0)},
    )
    return series


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Damping vector ``gamma`` and diagonal input-noise correlations ``N``.

    Both are stored as length-``2n`` vectors in the canonical ladder ordering;
    ``N = diag(g_1 (n_1 + 1), g_1 n_1, ...)`` for the quantum model.
    """

    damping: np.ndarray
    correlation: np.ndarray

    def __post_init__(self):
        d = np.array(self.damping, dtype=float)
        c = np.array(self.correlation, dtype=float)
        if d.shape != c.shape or d.ndim != 1 or d.size % 2:
            raise ValidationError("damping and correlation must be equal-length even vectors")
        if np.any(d <= 0) or np.any(c < 0):
            raise ValidationError("damping must be > 0 and correlations >= 0")
        d.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "damping", d)
        object.__setattr__(self, "correlation", c)

    @property
    def gamma(self) -> np.ndarray:
        return np.diag(self.damping)

    @property
    def N(self) -> np.ndarray:
        return np.diag(self.correlation)

    def semiclassical(self) -> "NoiseModel":
        """Symmetrized noise ``gamma_i (n_i + 1/2)`` on both entries of every pair."""
        pair_mean = self.correlation.reshape(-1, 2).mean(axis=1)
        return NoiseModel(self.damping, np.repeat(pair_mean, 2))


def noise_matrix(modes) -> NoiseModel:
    """Noise model for a mode list (or a series, whose mode order is reused)."""
    if isinstance(modes, HamiltonianFourierSeries):
        ordered = modes.modes
    else:
        ordered = canonical_order(modes)
    damping, corr = [], []
    for m in ordered:
        if m.occupation < 0:
            raise ValidationError("negative occupation", path=f"modes.{m.name}.occupation")
        damping += [m.damping, m.damping]
        corr += [m.damping * m.occupation + m.damping, m.damping * m.occupation]
    return NoiseModel(np.array(damping), np.array(corr))


def drift_matrix(series: HamiltonianFourierSeries, k: int, noise: NoiseModel) -> np.ndarray:
    """k-th Fourier component of the Langevin drift, ``-i sigma H_k - (gamma/2) [k == 0]``."""
    sigma = symplectic_form(series.n_modes)
    out = -1j * sigma @ series[k]
    if k == 0:
        out = out - np.diag(noise.damping) / 2
    return out


def thermal_occupation(temperature_kelvin: float, frequency_hz: float) -> float:
    """High-temperature occupation ``k_B T / (hbar omega)`` with ``omega = 2 pi f``."""
    if temperature_kelvin < 0 or frequency_hz <= 0:
        raise ValidationError("temperature must be >= 0 and frequency > 0")
    return constants.k * temperature_kelvin / (constants.hbar * 2 * np.pi * frequency_hz)
