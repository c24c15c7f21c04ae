"""Experiment orchestration: method comparison, sweeps, maps and convergence studies.

These functions take a validated :class:`~modspec.config.ExperimentConfig` (or a
``(series, noise)`` pair) and return plain result objects; writing files is
left to :mod:`modspec.io`.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ValidationError
from .iterative import iterative_spectrum
from .model import MECHANICAL, OPTICAL
from .results import SpectrumResult
from .spectra import (
    HETERODYNE,
    HOMODYNE,
    heterodyne_spectrum,
    homodyne_map,
    homodyne_spectrum,
    quadrature_vector,
    sideband_ratio,
    spectrum_floquet,
    spectrum_shifted,
)
from .transfer import DEFAULT_K, standard_spectrum_oracle

INV_PHI = (np.sqrt(5) - 1) / 2


# -- single spectra -------------------------------------------------------------------

def projection_vector(series, projection: str) -> np.ndarray:
    """Row vector for ``"S_yy"``, ``"S_xx"``, ``"quad:<mode>[:<angle>]"`` or ``"mode:<name>"``."""
    if projection in ("S_yy", "S_xx"):
        kind = OPTICAL if projection == "S_yy" else MECHANICAL
        names = [m.name for m in series.modes if m.kind == kind]
        if not names:
            raise ValidationError(f"{projection} needs a {kind} mode", path="projection")
        return quadrature_vector(series, names[0])
    head, _, rest = projection.partition(":")
    if head == "quad" and rest:
        mode, _, angle = rest.partition(":")
        return quadrature_vector(series, mode, float(angle) if angle else 0.0)
    if head == "mode" and rest:
        v = np.zeros(series.dim, dtype=complex)
        v[series.pair(rest)[0]] = 1.0
        return v
    raise ValidationError(f"unknown projection {projection!r}", path="projection")


def matrix_spectrum(series, noise, omegas, method: str, K=DEFAULT_K, order=3) -> SpectrumResult:
    if method == "shifted":
        return spectrum_shifted(series, noise, omegas, K)
    if method == "floquet":
        return spectrum_floquet(series, noise, omegas, K)
    if method == "iterative":
        return iterative_spectrum(series, noise, omegas, order)
    if method == "oracle":
        return standard_spectrum_oracle(series, noise, omegas)
    raise ValidationError(f"unknown method {method!r}", path="methods")


def scalar_spectrum(series, noise, omegas, method="shifted", *, K=DEFAULT_K, order=3,
                    projection="S_yy", detection=None) -> SpectrumResult:
    """Detected or projected scalar spectrum for one method."""
    if detection is not None and detection.kind in (HOMODYNE, HETERODYNE):
        if method != "shifted":
            raise ContractError(f"{detection.kind} detection is computed with the shifted method only")
        if detection.kind == HOMODYNE:
            return homodyne_spectrum(series, noise, detection, omegas, K)
        return heterodyne_spectrum(series, noise, detection, omegas, K)
    res = matrix_spectrum(series, noise, omegas, method, K, order)
    return res.project(projection_vector(series, projection), projection)


@dataclass
class Converged:
    result: SpectrumResult
    K: int
    change: float
    history: list = field(default_factory=list)


def relative_change(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def converge_truncation(compute, K0=DEFAULT_K, tolerance=1e-8, max_K=64) -> Converged:
    """Double ``K`` until the relative change of ``compute(K).values`` drops below ``tolerance``.

    Returns the result at the larger ``K`` of the first pair that agrees. If
    ``max_K`` is reached first the last result is returned with its change,
    and the caller decides whether that is acceptable.
    """
    K = int(K0)
    prev = compute(K)
    history = []
    while 2 * K <= max_K:
        cur = compute(2 * K)
        change = relative_change(prev.values, cur.values)
        history.append((K, 2 * K, change))
        K *= 2
        prev = cur
        if change < tolerance:
            break
    change = history[-1][2] if history else float("nan")
    prev.metadata["K_auto"] = {"K": K, "change": change, "tolerance": tolerance}
    return Converged(prev, K, change, history)


def config_spectrum(config, method=None, series_noise=None) -> SpectrumResult:
    """Spectrum of ``config`` with ``method`` (default: first configured), honouring ``K = "auto"``."""
    series, noise = series_noise or config.build()
    method = method or config.methods[0]
    omegas = config.grid()
    detection = config.detection(series)

    def compute(K):
        return scalar_spectrum(series, noise, omegas, method, K=K, order=config.order,
                               projection=config.projection, detection=detection)

    if config.auto_K and method in ("shifted", "floquet"):
        t = config.data["truncation"]
        return converge_truncation(compute, DEFAULT_K, t["tolerance"], t["max_K"]).result
    K = DEFAULT_K if config.auto_K else config.K
    return compute(K)


# -- sideband ratio --------------------------------------------------------------

def mechanical_frequency(series) -> float:
    mech = [m for m in series.modes if m.kind == MECHANICAL]
    if not mech:
        raise ContractError("sideband analysis needs a mechanical mode")
    return mech[0].frequency


def refined_sideband_ratio(series, noise, method="shifted", *, K=DEFAULT_K, order=3, projection="S_yy",
                           points=801, prominence=1e-2):
    """Sideband ratio from dense grids spanning ``+/- omega_d/2`` around each split peak."""
    wd = series.drive_frequency
    if wd <= 0:
        raise ContractError("sideband ratio needs a modulated system")
    wm = mechanical_frequency(series)
    lo = np.linspace(wm - 1.5 * wd, wm - 0.5 * wd, points)
    hi = np.linspace(wm + 0.5 * wd, wm + 1.5 * wd, points)
    spec = scalar_spectrum(series, noise, np.concatenate([lo, hi]), method, K=K, order=order,
                           projection=projection)
    return sideband_ratio(spec, wm, wd, prominence=prominence)


def golden_section(f, lo, hi, tol):
    """Minimize a unimodal ``f`` on ``[lo, hi]`` to an interval shorter than ``tol``."""
    a, b = float(lo), float(hi)
    c, d = b - INV_PHI * (b - a), a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    evals = [(c, fc), (d, fd)]
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
            evals.append((c, fc))
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
            evals.append((d, fd))
    x = (a + b) / 2
    return x, f(x), sorted(evals)


@dataclass
class Suppression:
    ratio: float
    R: float
    evaluations: list

    @property
    def offset_from_sqrt2(self) -> float:
        return self.ratio - float(np.sqrt(2))


def suppression_search(build, lo=1.0, hi=2.0, tol=0.01, *, K=16, method="shifted", order=3,
                       projection="S_yy") -> Suppression:
    """Golden-section search of the sideband-ratio minimum over ``omega_2/omega_d``.

    ``build(ratio)`` returns ``(series, noise)``.
    """
    def R(ratio):
        s, n = build(ratio)
        return refined_sideband_ratio(s, n, method, K=K, order=order, projection=projection).ratio

    x, fx, evals = golden_section(R, lo, hi, tol)
    return Suppression(x, fx, evals)


# -- method comparison ----------------------------------------------------------

@dataclass
class Comparison:
    spectra: dict
    deviations: list  # (method_a, method_b, max_rel, l2_rel)
    peaks: dict
    ratios: dict
    tolerance: float

    def equivalence_failures(self) -> list:
        """Shifted/Floquet/oracle pairs whose max relative deviation exceeds the tolerance."""
        exact = {"shifted", "floquet", "oracle"}
        return [d for d in self.deviations if {d[0], d[1]} <= exact and d[2] >= self.tolerance]


def compare_methods(config, series_noise=None, workers=None) -> Comparison:
    methods = config.methods
    if len(methods) < 2:
        raise ValidationError("compare needs at least two methods", path="methods")
    series, noise = series_noise or config.build()
    run = lambda m: (m, config_spectrum(config, m, (series, noise)))
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            spectra = dict(pool.map(run, methods))
    else:
        spectra = dict(map(run, methods))
    devs = []
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            va, vb = spectra[a].values, spectra[b].values
            devs.append((a, b, relative_change(va, vb),
                         float(np.linalg.norm(va - vb) / np.linalg.norm(vb))))
    peaks = {m: float(r.omega[np.argmax(np.real(r.values))]) for m, r in spectra.items()}
    ratios = {}
    if series.is_modulated and any(m.kind == MECHANICAL for m in series.modes):
        K = DEFAULT_K if config.auto_K else config.K
        for m in methods:
            if m == "oracle":
                continue
            ratios[m] = refined_sideband_ratio(series, noise, m, K=K, order=config.order,
                                               projection=config.projection).ratio
    return Comparison(spectra, devs, peaks, ratios, config.data["compare"]["equivalence_tol"])


# -- sweeps ---------------------------------------------------------------------------

def sweep(config, parameter=None, values=None, workers=None):
    """Spectrum and sideband ratio for each value of a dotted configuration key."""
    from .config import with_value

    parameter = parameter or config.data["sweep"]["parameter"]
    values = list(config.data["sweep"]["values"] if values is None else values)
    if not parameter or not values:
        raise ValidationError("a sweep needs a parameter and at least one value", path="sweep")

    def point(v):
        cfg = with_value(config, parameter, v)
        series, noise = cfg.build()
        spec = config_spectrum(cfg, series_noise=(series, noise))
        R = None
        if series.is_modulated and any(m.kind == MECHANICAL for m in series.modes):
            K = 16 if cfg.auto_K else max(cfg.K, 16)
            R = refined_sideband_ratio(series, noise, cfg.methods[0], K=K, order=cfg.order,
                                       projection=cfg.projection).ratio
        return v, spec, R

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(point, values))
    return [point(v) for v in values]


def cooperativity_sweep(ratios, cooperativities, resolved=True, K=16):
    """``R`` on a (ratio, C) grid for the cooperativity-sweep preset."""
    from .presets import fig2c

    table = np.empty((len(ratios), len(cooperativities)))
    for i, r in enumerate(ratios):
        for j, C in enumerate(cooperativities):
            s, n = fig2c(r, C, resolved).build()
            table[i, j] = refined_sideband_ratio(s, n, K=K).ratio
    return table


# -- homodyne maps --------------------------------------------------------------------

@dataclass
class HomodyneMap:
    phases: np.ndarray
    omega: np.ndarray
    values: np.ndarray  # (n_phase, n_omega)

    @property
    def minimum(self) -> float:
        return float(self.values.min())

    @property
    def squeezing_db(self) -> float:
        """``-10 log10(min S_hom)``; positive means below the shot-noise floor."""
        return float(-10 * np.log10(self.minimum))

    @property
    def argmin(self):
        i, j = np.unravel_index(np.argmin(self.values), self.values.shape)
        return float(self.phases[i]), float(self.omega[j])

    def summary(self) -> dict:
        phi, w = self.argmin
        return {"min_S_hom": self.minimum, "squeezing_db": self.squeezing_db, "argmin_phase": phi,
                "argmin_omega": w}


def run_homodyne_map(config, n_phases=None, series_noise=None) -> HomodyneMap:
    series, noise = series_noise or config.build()
    det = config.detection(series)
    if config.data["detection"]["kind"] != HOMODYNE:
        raise ValidationError("homodyne-map needs detection.kind = 'output-homodyne'", path="detection.kind")
    n = n_phases or config.data["homodyne"]["phases"]
    phases = np.linspace(0.0, np.pi, n)
    omegas = config.grid()
    K = DEFAULT_K if config.auto_K else config.K
    return HomodyneMap(phases, omegas, homodyne_map(series, noise, det.mode, phases, omegas, K))


# -- convergence -------------------------------------------------------------------

def convergence_table(config, Ks=(2, 4, 6, 8, 12, 16, 24, 32), method="shifted", series_noise=None):
    """``[(K, max relative change to the next K)]`` on the configured grid."""
    series, noise = series_noise or config.build()
    Ks = [K for K in Ks if K >= series.max_harmonic]
    omegas = config.grid()
    det = config.detection(series)
    spectra = [scalar_spectrum(series, noise, omegas, method, K=K, projection=config.projection,
                               detection=det) for K in Ks]
    return [(K, relative_change(a.values, b.values)) for K, a, b in zip(Ks, spectra, spectra[1:])]
