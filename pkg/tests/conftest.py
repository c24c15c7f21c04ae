import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from modspec.model import ModeSpec, ModulationSpec, build_fourier_series, noise_matrix
from modspec.presets import fig2a

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def two_mode(g=0.05, detuning=-1.0, kappa=1.0, omega_m=1.0, gamma_m=0.01, nbar_a=0.0, nbar_b=5.0):
    modes = [ModeSpec("a", "optical", detuning, kappa, nbar_a), ModeSpec("b", "mechanical", omega_m, gamma_m, nbar_b)]
    mods = [ModulationSpec.static("g", ("a", "b"), g)] if g else []
    s = build_fourier_series(modes, mods)
    return s, noise_matrix(s)


@pytest.fixture
def unmodulated():
    return two_mode()


@pytest.fixture
def hybrid():
    """Doubly modulated trap at moderate strength with a modest bath."""
    return fig2a(0.5, gbar=0.02, nbar_b=100.0).build()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for an acceptance criterion; returns the verdict."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def _report(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
