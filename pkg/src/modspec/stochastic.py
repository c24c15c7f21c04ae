"""Semiclassical stochastic Langevin simulator and spectral estimation.

Operators become complex amplitudes; ``c^dag`` components are the complex
conjugates of ``c``. The drift ``-i sigma H(t) - gamma/2`` is frozen at the
midpoint of each step and propagated exactly; the noise enters as an
Euler-Maruyama increment pushed through half a step of the same propagator.

Noise convention
----------------
``<xi_i(t) xi_i^*(t')> = NOISE_SCALE * gamma_i (n_i + 1/2) delta(t - t')`` with
``NOISE_SCALE = 2 pi``. Spectra estimated from trajectories are divided by the
same constant, so that they are directly comparable with
:func:`semiclassical_analytic`. The constant is the only calibration and is
checked against the decoupled-cavity floor in the test-suite.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal

from .errors import ContractError, NumericalError, ResolutionError, ValidationError
from .kernels import BACKEND, get_propagate
from .model import MECHANICAL, OPTICAL, HamiltonianFourierSeries, NoiseModel, symplectic_form
from .results import SpectrumResult
from .spectra import _peak_in_window, spectrum_shifted
from .transfer import DEFAULT_K

NOISE_SCALE = 2 * np.pi
DT_GUARD = 0.1


@dataclass(frozen=True)
class SdeConfig:
    """Integration and estimation settings (times in units of ``1/omega_M``)."""

    dt: float = 0.02
    t_sim: float = 2.0e4
    burn_in: float = 5.0e3
    n_trajectories: int = 8
    seed: int = 0
    record_every: int = 10
    segment_time: float = 2.0e3
    observables: tuple = ("y",)
    chunk_steps: int = 1 << 15
    backend: str | None = None

    def __post_init__(self):
        for name in ("dt", "t_sim", "segment_time"):
            if not (np.isfinite(getattr(self, name)) and getattr(self, name) > 0):
                raise ValidationError(f"{name} must be positive", path=f"simulator.{name}")
        if self.burn_in < 0:
            raise ValidationError("burn_in must be non-negative", path="simulator.burn_in")
        if self.n_trajectories < 1 or self.record_every < 1 or self.chunk_steps < 1:
            raise ValidationError("n_trajectories, record_every and chunk_steps must be >= 1", path="simulator")
        if self.segment_time > self.t_sim:
            raise ValidationError("segment_time exceeds t_sim", path="simulator.segment_time")
        if not self.observables:
            raise ValidationError("at least one observable is required", path="simulator.observables")


def check_config(series: HamiltonianFourierSeries, noise: NoiseModel, sde: SdeConfig):
    """Step-size and spectral-resolution guards."""
    rates = [abs(m.frequency) for m in series.modes] + list(noise.damping)
    fastest = max(max(rates), 1.0)
    if sde.dt * fastest >= DT_GUARD:
        raise ValidationError(
            f"dt={sde.dt} too coarse: dt * max(rate) = {sde.dt * fastest:.3g} >= {DT_GUARD}", path="simulator.dt"
        )
    if series.is_modulated:
        bin_width = 2 * np.pi / sde.segment_time
        if bin_width >= series.drive_frequency / 10:
            raise ResolutionError(
                f"segment_time={sde.segment_time} gives bin {bin_width:.3g} >= omega_d/10 "
                f"= {series.drive_frequency / 10:.3g}"
            )


def observable_vector(series: HamiltonianFourierSeries, spec) -> np.ndarray:
    """Row vector selecting an observable.

    ``"y"`` / ``"x"``: quadrature ``(c + c^*)/sqrt 2`` of the first optical /
    mechanical mode; ``"quad:<mode>"``: that quadrature for a named mode;
    ``"<mode>"``: the mode amplitude itself. Arrays are used as given.
    """
    if not isinstance(spec, str):
        v = np.asarray(spec, dtype=complex)
        if v.shape != (series.dim,):
            raise ValidationError(f"observable vector must have length {series.dim}")
        return v
    v = np.zeros(series.dim, dtype=complex)
    if spec in ("y", "x"):
        kind = OPTICAL if spec == "y" else MECHANICAL
        names = [m.name for m in series.modes if m.kind == kind]
        if not names:
            raise ValidationError(f"observable {spec!r} needs a {kind} mode")
        i, j = series.pair(names[0])
        v[i] = v[j] = 1 / np.sqrt(2)
    elif spec.startswith("quad:"):
        i, j = series.pair(spec[5:])
        v[i] = v[j] = 1 / np.sqrt(2)
    else:
        i, _ = series.pair(spec)
        v[i] = 1.0
    return v


@dataclass
class Propagators:
    """Per-phase one-step propagators ``P[j]`` and noise loadings ``L[j]``."""

    P: np.ndarray
    L: np.ndarray
    dt: float

    @property
    def n_phase(self) -> int:
        return self.P.shape[0]

    def spectral_radius(self) -> float:
        """Spectral radius of the one-period map (Floquet multipliers)."""
        mono = np.eye(self.P.shape[1], dtype=complex)
        for p in self.P:
            mono = p @ mono
        return float(np.max(np.abs(np.linalg.eigvals(mono))))


def noise_loading(series: HamiltonianFourierSeries, noise: NoiseModel, dt: float) -> np.ndarray:
    """Map from ``2 n`` real unit normals to the ladder-ordered noise increment over ``dt``.

    Mode ``i`` gets ``xi = sqrt(D_i dt) (u + i v)/sqrt 2`` in its ``c`` slot and
    the conjugate in its ``c^dag`` slot, ``D_i = NOISE_SCALE gamma_i (n_i + 1/2)``.
    """
    n = series.n_modes
    E = np.zeros((2 * n, 2 * n), dtype=complex)
    for i in range(n):
        gamma = noise.damping[2 * i]
        occ = noise.correlation[2 * i + 1] / gamma
        amp = np.sqrt(NOISE_SCALE * gamma * (occ + 0.5) * dt / 2)
        E[2 * i, 2 * i] = amp
        E[2 * i, 2 * i + 1] = 1j * amp
        E[2 * i + 1, 2 * i] = amp
        E[2 * i + 1, 2 * i + 1] = -1j * amp
    return E


def build_propagators(series, noise, dt) -> Propagators:
    if series.is_modulated:
        period = 2 * np.pi / series.drive_frequency
        n_phase = max(1, int(round(period / dt)))
        step = period / n_phase
    else:
        n_phase, step = 1, dt
    sigma = symplectic_form(series.n_modes)
    times = (np.arange(n_phase) + 0.5) * step
    H = series.evaluate(times)
    drift = -1j * sigma[None] @ H - np.diag(noise.damping)[None] / 2
    P = linalg.expm(drift * step)
    half = linalg.expm(drift * step / 2)
    L = half @ noise_loading(series, noise, step)[None]
    return Propagators(np.ascontiguousarray(P), np.ascontiguousarray(L), step)


@dataclass
class Trajectory:
    """Recorded observables, shape ``(n_records, n_trajectories, n_observables)``."""

    times: np.ndarray
    data: np.ndarray
    names: tuple
    dt_record: float
    metadata: dict = field(default_factory=dict)


def integrate(series, noise, sde: SdeConfig, c0=None, *, noiseless=False, check=True) -> Trajectory:
    """Integrate ``dc/dt = [-i sigma H(t) - gamma/2] c + c_in(t)`` for every ensemble member."""
    if check:
        check_config(series, noise, sde)
    props = build_propagators(series, noise, sde.dt)
    if props.spectral_radius() >= 1.0:
        raise NumericalError("drift is unstable (Floquet multiplier >= 1); the steady state does not exist")
    step = props.dt
    d, B = series.dim, sde.n_trajectories
    obs = np.ascontiguousarray(np.stack([observable_vector(series, o) for o in sde.observables]))
    n_burn = int(round(sde.burn_in / step))
    n_rec = int(sde.t_sim / (step * sde.record_every))
    total = n_burn + n_rec * sde.record_every
    out = np.zeros((n_rec, B, obs.shape[0]), dtype=complex)
    state = np.zeros((B, d), dtype=complex)
    if c0 is not None:
        state[:] = np.asarray(c0, dtype=complex)
    rng = np.random.default_rng(sde.seed)
    propagate = get_propagate(sde.backend)
    phase, countdown, written = 0, n_burn + sde.record_every, 0
    done = 0
    scale = np.max(np.abs(props.L)) * np.sqrt(total) + np.max(np.abs(state)) + 1.0
    while done < total:
        n = min(sde.chunk_steps, total - done)
        if noiseless:
            xi = np.zeros((n, B, d))
        else:
            xi = rng.standard_normal((n, B, d))
        phase, countdown, written = propagate(props.P, props.L, xi, state, phase, obs,
                                              sde.record_every, countdown, out, written)
        done += n
        if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > 1e6 * scale:
            raise NumericalError(f"trajectory diverged after {done} steps; reduce dt")
    times = sde.burn_in + step * sde.record_every * (np.arange(n_rec) + 1)
    meta = {"dt": step, "seed": sde.seed, "backend": sde.backend or BACKEND, "noise_scale": NOISE_SCALE,
            "n_phase": props.n_phase, "burn_in_steps": n_burn}
    return Trajectory(times, out, tuple(str(o) for o in sde.observables), step * sde.record_every, meta)


# -- spectral estimation ------------------------------------------------------------

@dataclass
class LangevinEnsemble:
    """Welch-averaged spectrum with standard errors, ``omega`` ascending."""

    omega: np.ndarray
    psd: np.ndarray
    stderr: np.ndarray
    per_trajectory: np.ndarray
    n_segments: int
    nperseg: int
    dt_record: float
    observable: str
    metadata: dict = field(default_factory=dict)

    def as_result(self) -> SpectrumResult:
        return SpectrumResult(self.omega, self.psd, "stochastic", projection=self.observable,
                              stderr=self.stderr, metadata=dict(self.metadata))

    def band(self, lo, hi):
        sel = (self.omega >= lo) & (self.omega <= hi)
        return self.omega[sel], self.psd[sel], self.stderr[sel]


def _segments(x, nperseg, step):
    view = np.lib.stride_tricks.sliding_window_view(x, nperseg, axis=0)
    return view[::step]


def estimate_psd(traj: Trajectory, segment_time=None, *, nperseg=None, observable=0,
                 window="hann", min_bin=None) -> LangevinEnsemble:
    """Welch estimate (50% overlap) of ``S(w)`` for one recorded observable.

    The periodogram of a segment is ``dt |sum_n w_n c_n e^{i w n dt}|^2 / (NOISE_SCALE sum w_n^2)``.
    Standard errors come from the spread of per-trajectory averages, or from
    the spread of segments when there is a single trajectory.
    """
    k = traj.names.index(observable) if isinstance(observable, str) else int(observable)
    x = traj.data[:, :, k]
    if nperseg is None:
        if segment_time is None:
            raise ContractError("give segment_time or nperseg")
        nperseg = int(round(segment_time / traj.dt_record))
    if nperseg < 8 or nperseg > x.shape[0]:
        raise ResolutionError(f"trajectory of {x.shape[0]} samples too short for segments of {nperseg}")
    dt = traj.dt_record
    if min_bin is not None and 2 * np.pi / (nperseg * dt) > min_bin:
        raise ResolutionError(f"frequency bin {2 * np.pi / (nperseg * dt):.3g} exceeds {min_bin:.3g}")
    win = signal.get_window(window, nperseg)
    step = nperseg // 2
    segs = _segments(x, nperseg, step)  # (n_seg, B, nperseg)
    spec = np.fft.fft(segs * win, axis=-1)
    pgram = dt * np.abs(spec) ** 2 / (NOISE_SCALE * np.sum(win ** 2))
    omega = -2 * np.pi * np.fft.fftfreq(nperseg, dt)
    order = np.argsort(omega)
    pgram = pgram[..., order]
    omega = omega[order]
    per_traj = pgram.mean(axis=0)  # (B, nfreq)
    psd = per_traj.mean(axis=0)
    B, n_seg = x.shape[1], pgram.shape[0]
    if B > 1:
        stderr = per_traj.std(axis=0, ddof=1) / np.sqrt(B)
    else:
        stderr = pgram[:, 0].std(axis=0, ddof=1) / np.sqrt(n_seg)
    meta = dict(traj.metadata, window=window, overlap=0.5)
    return LangevinEnsemble(omega, psd, stderr, per_traj, n_seg * B, nperseg, dt, traj.names[k], meta)


def window_kernel(nperseg, dt, offsets, window="hann") -> np.ndarray:
    """``dt |W(nu)|^2 / (2 pi sum w^2)`` at angular offsets ``nu``; integrates to one."""
    win = signal.get_window(window, nperseg)
    n = np.arange(nperseg)
    W = np.exp(1j * np.outer(offsets, n * dt)) @ win
    return dt * np.abs(W) ** 2 / (2 * np.pi * np.sum(win ** 2))


def welch_expectation(spectrum_fn, omega_bins, nperseg, dt, *, span_bins=48, oversample=8, window="hann"):
    """Expected Welch estimate: the analytic spectrum smoothed by the window kernel.

    ``spectrum_fn`` maps a frequency array to scalar spectrum values. Bins must
    be uniformly spaced with the estimator's resolution ``2 pi / (nperseg dt)``.
    """
    omega_bins = np.asarray(omega_bins, dtype=float)
    bin_width = 2 * np.pi / (nperseg * dt)
    h = bin_width / oversample
    half = span_bins * oversample
    offsets = np.arange(-half, half + 1) * h
    kern = window_kernel(nperseg, dt, offsets, window) * h
    start = omega_bins[0] - half * h
    n_fine = int(round((omega_bins[-1] - omega_bins[0]) / h)) + 2 * half + 1
    fine = start + np.arange(n_fine) * h
    values = np.asarray(spectrum_fn(fine), dtype=float)
    idx = np.rint((omega_bins - start) / h).astype(int)
    return np.array([np.dot(kern, values[i - half:i + half + 1][::-1]) for i in idx])


def semiclassical_analytic(series, noise, omegas, K=DEFAULT_K, **kw) -> SpectrumResult:
    """Analytic spectrum with the symmetrized noise matrix ``gamma (n + 1/2)`` on both ladder slots."""
    res = spectrum_shifted(series, noise.semiclassical(), omegas, K, **kw)
    res.metadata["semiclassical"] = True
    return res


def simulate_psd(series, noise, sde: SdeConfig, *, observable=0, segment_time=None) -> LangevinEnsemble:
    traj = integrate(series, noise, sde)
    return estimate_psd(traj, segment_time or sde.segment_time, observable=observable)


def _ratio_on_bins(omega, values, omega_m, omega_d, prominence):
    up = _peak_in_window(omega, values, omega_m + omega_d, omega_d / 2, prominence)[0]
    lo = _peak_in_window(omega, values, omega_m - omega_d, omega_d / 2, prominence)[0]
    return up / lo


def ensemble_sideband_ratio(ens: LangevinEnsemble, omega_m, omega_d, *, prominence=1e-2):
    """Sideband ratio of the ensemble mean with a leave-one-trajectory-out jackknife error."""
    R = _ratio_on_bins(ens.omega, ens.psd, omega_m, omega_d, prominence)
    pt = ens.per_trajectory
    B = pt.shape[0]
    if B < 2:
        return R, float("nan")
    jk = np.array([_ratio_on_bins(ens.omega, np.delete(pt, i, 0).mean(0), omega_m, omega_d, prominence)
                   for i in range(B)])
    return R, float(np.sqrt((B - 1) / B * np.sum((jk - jk.mean()) ** 2)))


@dataclass
class AnalyticCheck:
    """Simulated Welch spectrum against the expected estimate of the analytic spectrum."""

    omega: np.ndarray
    psd: np.ndarray
    stderr: np.ndarray
    expected: np.ndarray
    ratio_sim: float | None = None
    ratio_stderr: float | None = None
    ratio_expected: float | None = None

    @property
    def z(self) -> np.ndarray:
        return (self.psd - self.expected) / self.stderr

    def fraction_within(self, n_se=3.0) -> float:
        return float(np.mean(np.abs(self.z) < n_se))

    def ratio_agrees(self, n_se=3.0) -> bool:
        return abs(self.ratio_sim - self.ratio_expected) < n_se * self.ratio_stderr


def check_against_analytic(series, noise, ens: LangevinEnsemble, *, band=3.0, K=16,
                           observable="y") -> AnalyticCheck:
    """Compare ``ens`` with the analytic semiclassical spectrum over ``omega_M +/- band omega_d``.

    The analytic curve is passed through the same window kernel as the
    estimator, so both sides describe the same smoothed quantity. Sideband
    ratios are added when the system is modulated.
    """
    mech = [m for m in series.modes if m.kind == MECHANICAL]
    wd = series.drive_frequency
    center = mech[0].frequency if mech else 0.0
    half = band * wd if wd > 0 else band
    sel = np.abs(ens.omega - center) <= half
    om = ens.omega[sel]
    v = observable_vector(series, observable)
    expected = welch_expectation(lambda w: semiclassical_analytic(series, noise, w, K).project(v, "p").values,
                                 om, ens.nperseg, ens.dt_record)
    check = AnalyticCheck(om, ens.psd[sel], ens.stderr[sel], expected)
    if wd > 0 and mech:
        sub = LangevinEnsemble(om, ens.psd[sel], ens.stderr[sel], ens.per_trajectory[:, sel], ens.n_segments,
                               ens.nperseg, ens.dt_record, ens.observable)
        check.ratio_sim, check.ratio_stderr = ensemble_sideband_ratio(sub, center, wd)
        check.ratio_expected = _ratio_on_bins(om, expected, center, wd, 1e-2)
    return check


# -- trajectory dump ------------------------------------------------------------------

MAGIC = b"MSPTRJ01"


def write_trajectory(path, traj: Trajectory):
    """Binary columnar dump.

    Layout (little-endian): 8-byte magic ``MSPTRJ01``; ``uint32`` header length
    ``h``; ``h`` bytes of UTF-8 JSON header; the time column as ``float64[n]``;
    then one ``complex128[n]`` column per (observable, trajectory) pair, with the
    trajectory index varying fastest.
    """
    n, B, m = traj.data.shape
    header = {"n_records": n, "n_trajectories": B, "observables": list(traj.names),
              "dt_record": traj.dt_record, "time_dtype": "<f8", "value_dtype": "<c16",
              "column_order": "observable-major, trajectory-minor", "metadata": traj.metadata}
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(traj.times, dtype="<f8").tobytes())
        cols = np.transpose(traj.data, (2, 1, 0))  # (m, B, n)
        fh.write(np.ascontiguousarray(cols, dtype="<c16").tobytes())


def read_trajectory(path) -> Trajectory:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValidationError(f"{path}: not a trajectory dump")
        (h,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(h))
        n, B, m = header["n_records"], header["n_trajectories"], len(header["observables"])
        times = np.frombuffer(fh.read(8 * n), dtype="<f8")
        cols = np.frombuffer(fh.read(16 * n * B * m), dtype="<c16").reshape(m, B, n)
    return Trajectory(times.copy(), np.transpose(cols, (2, 1, 0)).copy(), tuple(header["observables"]),
                      header["dt_record"], header["metadata"])
