"""Stationary spectra, Fourier components and detected-field spectra.

Every routine works on the truncated transfer matrix of :mod:`modspec.transfer`
(same block labelling: index ``l`` <-> frequency ``omega - l omega_d``). Block
products ``T N T^dag`` use the conjugate transpose of each block, so that the
returned matrices are the correlators ``<c(w) c(w')^dag>``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ContractError, ValidationError
from .model import MECHANICAL, HamiltonianFourierSeries, NoiseModel
from .results import SpectrumResult
from .transfer import DEFAULT_K, TruncatedTransferMatrix, transfer_blocks

INTRACAVITY = "intracavity"
HOMODYNE = "output-homodyne"
HETERODYNE = "output-heterodyne"
DETECTION_KINDS = (INTRACAVITY, HOMODYNE, HETERODYNE)

RESONANCE_RTOL = 1e-9


@dataclass(frozen=True)
class DetectionSpec:
    """What is detected: mode, local-oscillator phase and heterodyne beat."""

    mode: str
    kind: str = HOMODYNE
    phase: float = 0.0
    beat: float = 0.0

    def __post_init__(self):
        if self.kind not in DETECTION_KINDS:
            raise ValidationError(f"unknown detection type {self.kind!r}", path="detection.kind")
        if not (np.isfinite(self.phase) and np.isfinite(self.beat)):
            raise ValidationError("phase and beat must be finite", path="detection")


def _chunked(fn, omegas, workers=None, chunk=512):
    """Evaluate ``fn`` on slices of the grid and concatenate (thread pool if ``workers > 1``)."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    pieces = [omegas[i:i + chunk] for i in range(0, omegas.size, chunk)] or [omegas]
    if workers and workers > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, pieces))
    else:
        parts = [fn(p) for p in pieces]
    return np.concatenate(parts, axis=0)


def _sandwich(left, ncorr, right):
    """``sum_l left[l] diag(ncorr) right[l]^dag`` for stacked blocks ``(W, L, a, d)``."""
    return np.einsum("wlij,j,wlkj->wik", left, ncorr, right.conj())


def _meta(series, K, **extra):
    meta = {"K": int(K), "drive_frequency": series.drive_frequency, "n_modes": series.n_modes}
    meta.update(extra)
    return meta


def spectrum_shifted(series, noise, omegas, K=DEFAULT_K, *, method="dense", workers=None) -> SpectrumResult:
    """``S(w) = sum_l T_{0l}(w) N T_{0l}(w)^dag`` from the shifted-operator system."""
    def work(w):
        rows = transfer_blocks(series, noise, w, K, row=0, method=method)
        return _sandwich(rows, noise.correlation, rows)

    vals = _chunked(work, omegas, workers)
    return SpectrumResult(np.atleast_1d(omegas), vals, "shifted", metadata=_meta(series, K))


def _unique_frequencies(points, decimals=12):
    keys = np.round(points / max(1.0, np.max(np.abs(points))), decimals)
    _, first, inverse = np.unique(keys.ravel(), return_index=True, return_inverse=True)
    return points.ravel()[first], inverse.reshape(points.shape)


def _columns_at(series, noise, freqs, K, method, chunk=256):
    """Block column 0 of ``T`` at each frequency: ``(len(freqs), 2K+1, d, d)``."""
    parts = [transfer_blocks(series, noise, freqs[i:i + chunk], K, col=0, method=method)
             for i in range(0, freqs.size, chunk)]
    return np.concatenate(parts, axis=0)


def spectrum_floquet(series, noise, omegas, K=DEFAULT_K, *, method="dense", workers=None) -> SpectrumResult:
    """``S(w) = sum_l T_{l0}(w + l w_d) N T_{l0}(w + l w_d)^dag`` from the Fourier-mode system.

    Column solves are shared between grid points whose shifted frequencies
    coincide (commensurate grids).
    """
    wd = series.drive_frequency
    shifts = np.arange(-K, K + 1)

    def work(w):
        points = w[:, None] + shifts[None, :] * wd
        freqs, inverse = _unique_frequencies(points)
        cols = _columns_at(series, noise, freqs, K, method)
        picked = cols[inverse, shifts[None, :] + K]  # (W, 2K+1, d, d): T_{l0}(w + l w_d)
        return _sandwich(picked, noise.correlation, picked)

    vals = _chunked(work, omegas, workers, chunk=128)
    return SpectrumResult(np.atleast_1d(omegas), vals, "floquet", metadata=_meta(series, K))


def _check_component_index(series, K, m):
    limit = K - series.max_harmonic
    if int(m) != m or abs(m) > limit:
        raise ContractError(
            f"Fourier index m={m} too large for truncation K={K} (|m| <= K - K_H = {limit} required)"
        )


def spectral_component(series, noise, omegas, K=DEFAULT_K, m=0, *, method="dense") -> SpectrumResult:
    """``S^(m)(w) = sum_l T_{0l}(w) N T_{-m,l}(w)^dag = <c(w) c(w + m w_d)^dag>``."""
    _check_component_index(series, K, m)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    rows0 = transfer_blocks(series, noise, omegas, K, row=0, method=method)
    rowsm = rows0 if m == 0 else transfer_blocks(series, noise, omegas, K, row=-m, method=method)
    vals = _sandwich(rows0, noise.correlation, rowsm)
    return SpectrumResult(omegas, vals, "shifted", m=int(m), metadata=_meta(series, K))


def periodic_noise_spectra(series, noise, components: Mapping[int, np.ndarray], omegas, K=DEFAULT_K,
                           *, method="dense"):
    """Stationary spectra for a periodic input noise ``sum_l c_in^(l)(t) exp(i l w_d t)``.

    ``components[l]`` is the diagonal correlation vector of the (independent,
    white) Fourier component ``l``. Returns ``(S_shifted, S_floquet)`` computed by
    the two routes:

    * shifted:  ``sum_{m,l} T_{0,m}(w) N_l T_{0,m}(w)^dag``
    * Floquet:  ``sum_{m,l} T_{m,l}(w + m w_d) N_l T_{m,l}(w + m w_d)^dag``
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    for l, vec in components.items():
        if abs(l) > K:
            raise ContractError(f"noise component {l} outside truncation K={K}")
        if np.shape(vec) != (series.dim,) or np.any(np.asarray(vec) < 0):
            raise ValidationError(f"noise component {l} must be a non-negative vector of length {series.dim}")
    total = sum(np.asarray(v, dtype=float) for v in components.values())
    rows = transfer_blocks(series, noise, omegas, K, row=0, method=method)
    s_i = _sandwich(rows, total, rows)

    wd = series.drive_frequency
    s_ii = np.zeros_like(s_i)
    for m in range(-K, K + 1):
        for l, vec in components.items():
            cols = transfer_blocks(series, noise, omegas + m * wd, K, col=l, method=method)[:, m + K]
            s_ii += np.einsum("wij,j,wkj->wik", cols, np.asarray(vec, dtype=float), cols.conj())
    meta = _meta(series, K, noise_components=sorted(components))
    return (SpectrumResult(omegas, s_i, "shifted", metadata=meta),
            SpectrumResult(omegas, s_ii, "floquet", metadata=dict(meta)))


# -- detected fields ----------------------------------------------------------------

def _detected_pair(series: HamiltonianFourierSeries, mode: str):
    m = series.mode(mode)
    if m.kind == MECHANICAL:
        raise ContractError(f"mode {mode!r} is mechanical; only optical output fields can be detected")
    return series.pair(mode), m.damping


def output_blocks(rows, series, noise, mode):
    """Output-field blocks from a stacked row ``T_{0l}``: ``(..., 2K+1, 2, d)``.

    ``a_out = a_in - sqrt(kappa) a`` expressed against the scaled inputs
    ``c_in = sqrt(gamma) c_in_raw``, i.e.
    ``O_l = delta_{l0} E / sqrt(kappa) - sqrt(kappa) T_{0l}[pair rows]``.
    """
    (i, j), kappa = _detected_pair(series, mode)
    nb = rows.shape[-3]
    K = (nb - 1) // 2
    out = -np.sqrt(kappa) * rows[..., [i, j], :]
    out = out.copy()
    out[..., K, 0, i] += 1 / np.sqrt(kappa)
    out[..., K, 1, j] += 1 / np.sqrt(kappa)
    return out


def output_transfer(tm: TruncatedTransferMatrix, noise: NoiseModel, series: HamiltonianFourierSeries, mode: str):
    """Output-field blocks ``O_l`` (shape ``(2K+1, 2, d)``) for one inverted transfer matrix."""
    from .transfer import block

    rows = np.stack([block(tm, 0, l) for l in range(-tm.K, tm.K + 1)])
    return output_blocks(rows, series, noise, mode)


def output_spectrum(series, noise, mode, omegas, K=DEFAULT_K, *, method="dense") -> SpectrumResult:
    """2x2 correlators of ``(a_out, a_out^dag)``; ``[0,0] = <a_out a_out^dag>``, ``[1,1] = <a_out^dag a_out>``."""
    _detected_pair(series, mode)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    rows = transfer_blocks(series, noise, omegas, K, row=0, method=method)
    ob = output_blocks(rows, series, noise, mode)
    vals = _sandwich(ob, noise.correlation, ob)
    return SpectrumResult(omegas, vals, "shifted", projection=None, metadata=_meta(series, K, mode=mode))


def _lo_weights(phase):
    return np.array([np.exp(1j * phase), np.exp(-1j * phase)])


def homodyne_from_output(out: SpectrumResult, phase: float) -> np.ndarray:
    w = _lo_weights(phase)
    return np.einsum("i,wij,j->w", w, out.values, w.conj()).real


def homodyne_spectrum(series, noise, detection: DetectionSpec, omegas, K=DEFAULT_K, *, method="dense"):
    """``S_hom = <a a^dag> + <a^dag a> + e^{2i phi}<a a> + e^{-2i phi}<a^dag a^dag>`` of the output field.

    The vacuum shot-noise floor is 1 in these units.
    """
    if detection.kind != HOMODYNE:
        raise ContractError(f"homodyne_spectrum needs detection kind {HOMODYNE!r}")
    out = output_spectrum(series, noise, detection.mode, omegas, K, method=method)
    w = _lo_weights(detection.phase)
    raw = np.einsum("i,wij,j->w", w, out.values, w.conj())
    scale = np.max(np.abs(raw.real))
    if np.any(np.abs(raw.imag) > 1e-10 * max(scale, 1e-300)):
        raise ContractError("homodyne spectrum has a non-negligible imaginary part")
    return SpectrumResult(out.omega, raw.real, "shifted", projection="S_hom",
                          metadata=dict(out.metadata, phase=detection.phase))


def homodyne_map(series, noise, mode, phases, omegas, K=DEFAULT_K, *, method="dense") -> np.ndarray:
    """``S_hom`` on a ``(len(phases), len(omegas))`` grid, sharing one set of solves."""
    out = output_spectrum(series, noise, mode, omegas, K, method=method)
    return np.stack([homodyne_from_output(out, p) for p in np.atleast_1d(phases)])


def resonance_index(beat, drive_frequency) -> int:
    """``n = 2 Omega / omega_d``; raises unless it is an integer."""
    if drive_frequency <= 0:
        raise ValidationError("heterodyne resonance needs a modulated system (omega_d > 0)")
    n = 2 * beat / drive_frequency
    if abs(n - round(n)) > RESONANCE_RTOL * max(1.0, abs(n)):
        raise ValidationError(
            f"2*Omega/omega_d = {n:.6g} is not an integer: delta-correlated inputs only give "
            f"non-zero cross-correlations <c(w+Omega) c(w-Omega)^dag> when 2*Omega is a "
            f"multiple of the drive frequency",
            path="detection.beat",
        )
    return int(round(n))


def _cross(left_rows, right_rows, ncorr, n):
    """``sum_l L[l] N R[l-n]^dag`` over the overlapping index range."""
    nb = left_rows.shape[1]
    if abs(n) >= nb:
        return np.zeros(left_rows.shape[:1] + (left_rows.shape[2], right_rows.shape[2]), dtype=complex)
    if n >= 0:
        L, R = left_rows[:, n:], right_rows[:, : nb - n]
    else:
        L, R = left_rows[:, : nb + n], right_rows[:, -n:]
    return _sandwich(L, ncorr, R)


def heterodyne_cross(series, noise, beat, omegas, K=DEFAULT_K, *, method="dense") -> SpectrumResult:
    """``<c(w + Omega) c(w - Omega)^dag> = sum_l T_{0l}(w+Omega) N T_{0,l-n}(w-Omega)^dag``.

    ``n = 2 Omega / omega_d`` must be an integer. Index mapping to the Fourier
    components: the result equals ``S^(-n)(w + Omega)``, and also
    ``[S^(n)(w - Omega)]^dag``.
    """
    n = resonance_index(beat, series.drive_frequency)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    up = transfer_blocks(series, noise, omegas + beat, K, row=0, method=method)
    down = transfer_blocks(series, noise, omegas - beat, K, row=0, method=method)
    vals = _cross(up, down, noise.correlation, n)
    return SpectrumResult(omegas, vals, "shifted", m=-n, metadata=_meta(series, K, beat=beat, n=n))


def heterodyne_spectrum(series, noise, detection: DetectionSpec, omegas, K=DEFAULT_K, *, method="dense"):
    """Power spectrum of ``i_het(w) = a_out(w + Omega) + a_out^dag(w - Omega)``.

    Auto terms at ``w +/- Omega`` plus, when ``2 Omega / omega_d`` is an integer,
    the resonant cross terms; otherwise those vanish.
    """
    if detection.kind != HETERODYNE:
        raise ContractError(f"heterodyne_spectrum needs detection kind {HETERODYNE!r}")
    beat = detection.beat
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    up_rows = transfer_blocks(series, noise, omegas + beat, K, row=0, method=method)
    down_rows = transfer_blocks(series, noise, omegas - beat, K, row=0, method=method)
    up = output_blocks(up_rows, series, noise, detection.mode)
    down = output_blocks(down_rows, series, noise, detection.mode)
    auto_up = _sandwich(up, noise.correlation, up)[:, 0, 0]
    auto_down = _sandwich(down, noise.correlation, down)[:, 1, 1]
    total = auto_up + auto_down
    try:
        n = resonance_index(beat, series.drive_frequency) if series.is_modulated else None
    except ValidationError:
        n = None
    if n is not None or (not series.is_modulated and beat == 0):
        cross = _cross(up, down, noise.correlation, n or 0)[:, 0, 1]
        total = total + 2 * cross.real
    return SpectrumResult(omegas, total.real, "shifted", projection="S_het",
                          metadata=_meta(series, K, beat=beat, n=n))


# -- projections and sideband analysis -------------------------------------------

def quadrature_vector(series, mode, angle=0.0) -> np.ndarray:
    """Row vector of ``(e^{-i angle} c + e^{i angle} c^dag)/sqrt(2)`` for the named mode."""
    v = np.zeros(series.dim, dtype=complex)
    i, j = series.pair(mode)
    v[i] = np.exp(-1j * angle) / np.sqrt(2)
    v[j] = np.exp(1j * angle) / np.sqrt(2)
    return v


def quadrature_spectrum(result: SpectrumResult, series, mode, angle=0.0, name=None) -> SpectrumResult:
    """Scalar spectrum of a mode quadrature; ``S_yy`` for optical, ``S_xx`` for mechanical at angle 0."""
    if name is None:
        name = "S_yy" if series.mode(mode).kind != MECHANICAL else "S_xx"
    return result.project(quadrature_vector(series, mode, angle), name)


@dataclass(frozen=True)
class SidebandRatio:
    ratio: float
    upper_height: float
    lower_height: float
    upper_omega: float
    lower_omega: float
    upper_suppressed: bool
    lower_suppressed: bool


def _peak_in_window(omega, values, center, half_width, prominence):
    sel = np.flatnonzero(np.abs(omega - center) <= half_width)
    if sel.size < 3:
        raise ContractError(f"fewer than 3 grid points within {half_width} of {center}")
    w, v = omega[sel], values[sel]
    interior = np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])) + 1
    if interior.size:
        k = interior[np.argmax(v[interior])]
        y0, y1, y2 = v[k - 1], v[k], v[k + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            delta = 0.5 * (y0 - y2) / denom
            height = y1 - 0.25 * (y0 - y2) * delta
            where = w[k] + delta * (w[k + 1] - w[k])
        else:
            height, where = y1, w[k]
        if height > (1 + prominence) * np.min(v):
            return float(height), float(where), False
    return float(np.interp(center, w, v)), float(center), True


def sideband_ratio(spec: SpectrumResult, omega_m, omega_d, *, prominence=1e-2) -> SidebandRatio:
    """Height of the ``omega_m + omega_d`` peak over the ``omega_m - omega_d`` peak.

    Peaks are the highest local maxima inside ``+/- omega_d/2`` windows, refined
    by a parabola through the three surrounding grid points. A peak that is
    missing, or rises less than ``prominence`` above the window minimum, is
    flagged as suppressed and its height taken at the nominal position.
    """
    if spec.is_matrix:
        raise ContractError("sideband_ratio needs a scalar spectrum projection")
    vals = np.real(spec.values)
    up = _peak_in_window(spec.omega, vals, omega_m + omega_d, omega_d / 2, prominence)
    lo = _peak_in_window(spec.omega, vals, omega_m - omega_d, omega_d / 2, prominence)
    return SidebandRatio(up[0] / lo[0], up[0], lo[0], up[1], lo[1], up[2], lo[2])


def cooperativity(g, kappa, gamma_m) -> float:
    return 4 * g ** 2 / (kappa * gamma_m)


@dataclass(frozen=True)
class Resolution:
    resolved: bool
    value: float
    threshold: float

    @property
    def margin(self) -> float:
        return self.threshold - self.value


def resolution_check(C, gamma_m, omega_d, threshold=0.1) -> Resolution:
    """Split sidebands are resolved when ``C Gamma_M / (2 omega_d)`` is below ``threshold``."""
    value = C * gamma_m / (2 * omega_d)
    return Resolution(bool(value < threshold), float(value), float(threshold))
