import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modspec.errors import ContractError
from modspec.experiments import projection_vector, refined_sideband_ratio, scalar_spectrum
from modspec.iterative import DEFAULT_ORDER, Susceptibilities, iterative_spectrum, truncation_equivalence
from modspec.presets import fig2a
from modspec.transfer import diagonal_block, standard_spectrum_oracle

from conftest import two_mode

W = np.linspace(0.9, 1.1, 201)
PEAKS = np.concatenate([np.linspace(0.93, 0.97, 401), np.linspace(1.03, 1.07, 401)])


def test_order_must_be_positive(hybrid):
    for bad in (0, -1, 1.5):
        with pytest.raises(ContractError):
            iterative_spectrum(*hybrid, W, bad)


def test_default_order():
    assert DEFAULT_ORDER == 3


@given(w=st.floats(-3, 3), det=st.floats(-2, 2), wm=st.floats(0.1, 2))
def test_mu_and_eta_antisymmetry(w, det, wm):
    chi = Susceptibilities(det, 0.7, wm, 0.01)
    assert np.isclose(chi.mu(w), -np.conj(chi.mu(-w)), rtol=1e-12, atol=0)
    assert np.isclose(chi.eta(w), -np.conj(chi.eta(-w)), rtol=1e-12, atol=0)


def test_bare_block_inverts_diagonal_block():
    p = fig2a(0.5)
    s, n = p.build()
    X = diagonal_block(s, n, W)
    assert np.allclose(p.susceptibilities().bare_block(W) @ X, np.eye(4), atol=1e-12)


def test_unmodulated_matches_oracle(unmodulated):
    s, n = unmodulated
    it = iterative_spectrum(s, n, W, 2).values
    ref = standard_spectrum_oracle(s, n, W).values
    assert np.max(np.abs(it - ref)) / np.max(np.abs(ref)) < 1e-12


def test_deviation_decreases_with_order():
    s, n = fig2a(0.05).build()
    v = projection_vector(s, "S_yy")
    devs = [truncation_equivalence(s, n, W, order, K=16, project=v) for order in range(1, 6)]
    assert all(b < a for a, b in zip(devs, devs[1:]))
    assert devs[2] < 1e-3


@pytest.mark.parametrize("ratio", [0.05, 0.25, 0.5])
def test_order_three_peaks_within_five_percent(ratio):
    s, n = fig2a(ratio).build()
    it = refined_sideband_ratio(s, n, "iterative", order=3)
    full = refined_sideband_ratio(s, n, K=16)
    assert abs(it.lower_height / full.lower_height - 1) < 0.05
    assert abs(it.upper_height / full.upper_height - 1) < 0.05


def test_order_three_misses_deep_suppression():
    s, n = fig2a(1.4).build()
    it = refined_sideband_ratio(s, n, "iterative", order=3)
    full = refined_sideband_ratio(s, n, K=16)
    assert it.ratio > 3 * full.ratio


def test_first_order_matches_small_truncation_at_weak_coupling():
    s, n = fig2a(0.5, gbar=2e-4).build()
    a = scalar_spectrum(s, n, PEAKS, "iterative", order=1).values
    b = scalar_spectrum(s, n, PEAKS, "shifted", K=3).values
    for half in (slice(0, 401), slice(401, None)):
        i = np.argmax(b[half]) + half.start
        assert abs(a[i] / b[i] - 1) < 0.01


def test_equivalence_default_truncation(hybrid):
    s, n = hybrid
    assert truncation_equivalence(s, n, W, 2) == truncation_equivalence(s, n, W, 2, K=3)


def test_result_metadata(hybrid):
    r = iterative_spectrum(*hybrid, W)
    assert r.method == "iterative" and r.values.shape == (W.size, 4, 4)


def test_weak_static_coupling_two_mode_agrees():
    s, n = two_mode(g=0.003)
    it = iterative_spectrum(s, n, W, 1).values
    ref = standard_spectrum_oracle(s, n, W).values
    assert np.max(np.abs(it - ref)) / np.max(np.abs(ref)) < 1e-12


def test_dropped_resonant_shift_leaves_a_spurious_peak():
    s, n = fig2a(0.05).build()
    w = [1 - 3 * s.drive_frequency]
    it = scalar_spectrum(s, n, w, "iterative", order=3).values
    full = scalar_spectrum(s, n, w, "shifted", K=16).values
    assert it[0] > 10 * full[0]
