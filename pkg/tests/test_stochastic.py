import dataclasses
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modspec import kernels
from modspec.errors import ResolutionError, ValidationError
from modspec.model import ModeSpec, ModulationSpec, build_fourier_series, noise_matrix
from modspec.presets import fig2a
from modspec.spectra import quadrature_spectrum, spectrum_shifted
from modspec.stochastic import (
    SdeConfig,
    Trajectory,
    build_propagators,
    estimate_psd,
    integrate,
    observable_vector,
    read_trajectory,
    semiclassical_analytic,
    welch_expectation,
    window_kernel,
    write_trajectory,
)

from conftest import two_mode

CAVITY = SdeConfig(dt=0.02, t_sim=3.0e4, burn_in=20.0, n_trajectories=8, record_every=5, segment_time=50.0)


@pytest.fixture(scope="module")
def cavity_run():
    s, n = two_mode(g=0.0, nbar_a=0.0)
    return s, n, integrate(s, n, CAVITY)


def analytic_y(s, n):
    v = observable_vector(s, "y")
    return lambda w: semiclassical_analytic(s, n, w, 1).project(v, "p").values.real


def test_noiseless_decay_matches_closed_form():
    det, kappa = -1.0, 1.0
    s, n = two_mode(g=0.0, detuning=det, kappa=kappa)
    cfg = SdeConfig(dt=0.01, t_sim=20.0, burn_in=0.0, n_trajectories=1, record_every=10,
                    segment_time=10.0, observables=("a", "b"))
    tr = integrate(s, n, cfg, c0=[1.0, 1.0, 0.5j, -0.5j], noiseless=True)
    t = tr.times
    assert np.allclose(tr.data[:, 0, 0], np.exp((1j * det - kappa / 2) * t), rtol=0, atol=1e-8)
    assert np.allclose(tr.data[:, 0, 1], 0.5j * np.exp((-1j - 0.005) * t), rtol=0, atol=1e-8)


def test_noiseless_frequency_modulated_oscillator():
    wd, w2 = 0.05, 0.03
    modes = [ModeSpec("b", "mechanical", 1.0, 1e-3)]
    s = build_fourier_series(modes, [ModulationSpec.cosine("omega_m", ("b",), 2 * w2, 2)], wd)
    n = noise_matrix(s)
    cfg = SdeConfig(dt=0.01, t_sim=300.0, burn_in=0.0, n_trajectories=1, record_every=25,
                    segment_time=100.0, observables=("b",))
    tr = integrate(s, n, cfg, c0=[1.0, 1.0], noiseless=True, check=False)
    t = tr.times
    phase = t + 2 * w2 * np.sin(2 * wd * t) / (2 * wd)
    assert np.allclose(tr.data[:, 0, 0], np.exp(-1j * phase - 5e-4 * t), rtol=0, atol=1e-6)


def test_stationary_variance_equals_spectral_area(cavity_run):
    s, n, tr = cavity_run
    var = np.mean(np.abs(tr.data[:, :, 0]) ** 2)
    w = np.linspace(-2000, 2000, 2_000_001)
    area = np.trapezoid(analytic_y(s, n)(w), w)
    assert abs(var / area - 1) < 0.03


def test_decoupled_cavity_spectrum(cavity_run):
    s, n, tr = cavity_run
    ens = estimate_psd(tr, 50.0)
    assert ens.n_segments >= 100
    assert abs(abs(ens.omega[np.argmax(ens.psd)]) - 1.0) < 0.15
    for peak in (-1.0, 1.0):
        i = np.argmin(np.abs(ens.omega - peak))
        sel = slice(i - 4, i + 5)
        exp = welch_expectation(analytic_y(s, n), ens.omega[sel], ens.nperseg, ens.dt_record)
        assert abs(ens.psd[i] / exp[4] - 1) < 0.05
        z = (ens.psd[sel] - exp) / ens.stderr[sel]
        assert np.all(np.abs(z) < 4)


def test_standard_error_shrinks_with_ensemble_size():
    s, n = two_mode(g=0.0, nbar_a=0.0)
    cfg = dataclasses.replace(CAVITY, t_sim=2000.0, n_trajectories=4)
    small = estimate_psd(integrate(s, n, cfg), 50.0).stderr
    big = estimate_psd(integrate(s, n, dataclasses.replace(cfg, n_trajectories=16, seed=1)), 50.0).stderr
    assert abs(np.median(small / big) - 2.0) < 0.4


def _tone(freq_bin, nperseg=256, n_seg=9, dt=0.1, amp=1.5):
    n = nperseg * (n_seg + 1) // 2
    t = dt * np.arange(n)
    w0 = 2 * np.pi * freq_bin / (nperseg * dt)
    x = amp * np.exp(-1j * w0 * t)
    return Trajectory(t, x[:, None, None], ("s",), dt), w0, nperseg, dt, amp


def test_sinusoid_lands_in_its_bin():
    tr, w0, nperseg, dt, amp = _tone(17)
    ens = estimate_psd(tr, nperseg=nperseg)
    i = np.argmax(ens.psd)
    assert np.isclose(ens.omega[i], w0)
    bin_width = 2 * np.pi / (nperseg * dt)
    assert np.isclose(np.sum(ens.psd) * bin_width, amp ** 2, rtol=1e-12)
    # Hann leakage: neighbours carry a quarter of the centre amplitude
    assert np.allclose(ens.psd[[i - 1, i + 1]] / ens.psd[i], 0.25, rtol=1e-10)
    far = np.delete(ens.psd, [i - 1, i, i + 1])
    assert np.max(far) < 1e-20 * ens.psd[i]


@given(nperseg=st.integers(16, 256), dt=st.floats(0.01, 1.0))
def test_window_kernel_integrates_to_one(nperseg, dt):
    # periodic in 2 pi / dt: one Nyquist interval holds all the weight
    nu = np.linspace(-np.pi / dt, np.pi / dt, 40001)
    area = np.trapezoid(window_kernel(nperseg, dt, nu), nu)
    assert abs(area - 1) < 5e-3


def test_seed_determinism():
    s, n = fig2a(0.5, gbar=0.02, nbar_b=10.0).build()
    cfg = SdeConfig(dt=0.02, t_sim=200.0, burn_in=10.0, n_trajectories=2, seed=7, segment_time=100.0)
    a = integrate(s, n, cfg, check=False)
    b = integrate(s, n, cfg, check=False)
    c = integrate(s, n, dataclasses.replace(cfg, seed=8), check=False)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_chunking_does_not_change_the_path():
    s, n = fig2a(0.5, gbar=0.02, nbar_b=10.0).build()
    cfg = SdeConfig(dt=0.02, t_sim=200.0, burn_in=10.0, n_trajectories=2, seed=3, segment_time=100.0)
    a = integrate(s, n, cfg, check=False)
    b = integrate(s, n, dataclasses.replace(cfg, chunk_steps=777), check=False)
    assert np.array_equal(a.data, b.data)


@pytest.mark.skipif(kernels.compiled_propagate is None, reason="compiled kernel not built")
def test_backends_agree():
    s, n = fig2a(0.9, gbar=0.02, nbar_b=10.0).build()
    cfg = SdeConfig(dt=0.02, t_sim=400.0, burn_in=10.0, n_trajectories=3, seed=2, segment_time=100.0)
    a = integrate(s, n, dataclasses.replace(cfg, backend="compiled"), check=False)
    b = integrate(s, n, dataclasses.replace(cfg, backend="python"), check=False)
    assert np.max(np.abs(a.data - b.data)) <= 1e-12 * np.max(np.abs(b.data))


def test_trajectory_dump_round_trip(tmp_path):
    s, n = fig2a(0.5, gbar=0.02, nbar_b=10.0).build()
    cfg = SdeConfig(dt=0.02, t_sim=100.0, burn_in=0.0, n_trajectories=3, segment_time=50.0,
                    observables=("y", "x", "b"))
    tr = integrate(s, n, cfg, check=False)
    path = tmp_path / "run.traj"
    write_trajectory(path, tr)
    back = read_trajectory(path)
    assert np.array_equal(back.data, tr.data) and np.array_equal(back.times, tr.times)
    assert back.names == tr.names and back.dt_record == tr.dt_record
    bad = tmp_path / "bad.traj"
    bad.write_bytes(b"nonsense" * 4)
    with pytest.raises(ValidationError):
        read_trajectory(bad)


def test_step_size_guard():
    s, n = fig2a(0.5).build()
    with pytest.raises(ValidationError, match="dt"):
        integrate(s, n, SdeConfig(dt=0.2, segment_time=1000.0))


def test_resolution_guard():
    s, n = fig2a(0.5).build()
    with pytest.raises(ResolutionError):
        integrate(s, n, SdeConfig(dt=0.02, segment_time=500.0))


def test_config_validation():
    with pytest.raises(ValidationError):
        SdeConfig(dt=-1.0)
    with pytest.raises(ValidationError):
        SdeConfig(t_sim=10.0, segment_time=20.0)


def test_propagators_are_contracting():
    s, n = fig2a(0.9).build()
    props = build_propagators(s, n, 0.02)
    assert props.n_phase == round(2 * np.pi / 0.05 / 0.02)
    assert props.spectral_radius() < 1


def test_semiclassical_noise_differs_by_half_a_quantum():
    nb = 100.0
    s, n = two_mode(g=0.0, nbar_b=nb, gamma_m=0.01)
    w = np.linspace(0.95, 1.05, 101)
    q = quadrature_spectrum(spectrum_shifted(s, n, w, 1), s, "b").values
    sc = quadrature_spectrum(semiclassical_analytic(s, n, w, 1), s, "b").values
    d = np.abs(sc / q - 1)
    assert np.all(d < 1 / (2 * nb)) and np.all(d > 0)


def test_environment_forces_the_fallback():
    env = dict(os.environ, MODSPEC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import modspec.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
