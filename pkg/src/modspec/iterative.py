"""Low-order iterative solution by substitution of frequency-shifted equations.

The operators at ``omega + n omega_d`` obey

    X(omega + n omega_d) c_n + sum_k A_k c_{n+k} = c_in,n

(``A_k = i sigma H_k``). The three central shifts ``n = -1, 0, 1`` carry the
quantities that appear directly in ``y(omega)`` (``y(omega)`` and
``x(omega +/- omega_d)``); they are kept as unknowns and solved exactly. Every
other operator that turns up is replaced by its own shifted equation, and the
replacement is repeated ``order`` times. Operators still unresolved after the
last pass are dropped. Expressions are kept as coefficient maps keyed by integer
shift, so each term names exactly one input noise at exactly one frequency.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ContractError
from .model import HamiltonianFourierSeries, NoiseModel
from .results import SpectrumResult
from .transfer import coupling_blocks, diagonal_block

CENTRAL = (-1, 0, 1)


@dataclass(frozen=True)
class Susceptibilities:
    """Bare optical and mechanical susceptibilities of the two-mode system."""

    detuning: float
    kappa: float
    omega_m: float
    gamma_m: float

    def chi_o(self, w):
        return 1.0 / (-1j * (np.asarray(w) + self.detuning) + self.kappa / 2)

    def chi_m(self, w):
        return 1.0 / (-1j * (np.asarray(w) - self.omega_m) + self.gamma_m / 2)

    def mu(self, w):
        return self.chi_m(w) - np.conj(self.chi_m(-np.asarray(w)))

    def eta(self, w):
        return self.chi_o(w) - np.conj(self.chi_o(-np.asarray(w)))

    def bare_block(self, w):
        """``X(w)^-1`` for the uncoupled pair ``(a, a^dag, b, b^dag)``."""
        w = np.asarray(w, dtype=float)
        out = np.zeros(w.shape + (4, 4), dtype=complex)
        out[..., 0, 0] = self.chi_o(w)
        out[..., 1, 1] = np.conj(self.chi_o(-w))
        out[..., 2, 2] = self.chi_m(w)
        out[..., 3, 3] = np.conj(self.chi_m(-w))
        return out


def _add(acc: dict, key, value):
    if key in acc:
        acc[key] = acc[key] + value
    else:
        acc[key] = value


@dataclass
class Expansion:
    """``c_n = sum_j central[j] c_j + sum_m inputs[m] c_in,m`` with ``j`` in the central set."""

    central: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    def scaled(self, left: np.ndarray) -> "Expansion":
        return Expansion({j: left @ v for j, v in self.central.items()},
                         {m: left @ v for m, v in self.inputs.items()})

    def absorb(self, other: "Expansion"):
        for j, v in other.central.items():
            _add(self.central, j, v)
        for m, v in other.inputs.items():
            _add(self.inputs, m, v)


@dataclass
class IterativeSolution:
    """Coefficients ``c_0(omega) = sum_m coefficients[m] c_in(omega + m omega_d)``."""

    omega: np.ndarray
    order: int
    coefficients: dict

    @property
    def shifts(self) -> list:
        return sorted(self.coefficients)

    def spectrum(self, noise: NoiseModel) -> np.ndarray:
        out = 0
        for coef in self.coefficients.values():
            out = out + np.einsum("wij,j,wkj->wik", coef, noise.correlation, coef.conj())
        return out


def solve_iterative(series: HamiltonianFourierSeries, noise: NoiseModel, omegas, order: int) -> IterativeSolution:
    """Build the substitution coefficients on a frequency grid."""
    if int(order) != order or order < 1:
        raise ContractError(f"iteration order must be an integer >= 1, got {order}")
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    wd = series.drive_frequency
    d = series.dim
    A = coupling_blocks(series)

    @lru_cache(maxsize=None)
    def bare(n):
        return np.linalg.inv(diagonal_block(series, noise, omegas + n * wd))

    @lru_cache(maxsize=None)
    def expand(n, depth) -> Expansion:
        prop = bare(n)
        exp = Expansion(inputs={n: prop})
        for k, a in A.items():
            m = n + k
            left = -prop @ a
            if m in CENTRAL:
                _add(exp.central, m, np.broadcast_to(left, prop.shape).copy())
            elif depth < order:
                exp.absorb(expand(m, depth + 1).scaled(left))
        return exp

    nc = len(CENTRAL)
    M = np.zeros((omegas.size, nc * d, nc * d), dtype=complex)
    rhs: dict = {}
    for p, n in enumerate(CENTRAL):
        rows = slice(p * d, (p + 1) * d)
        M[:, rows, rows] += diagonal_block(series, noise, omegas + n * wd)
        _add(rhs, n, _embed(np.eye(d), p, nc, omegas.size))
        for k, a in A.items():
            m = n + k
            if m in CENTRAL:
                q = CENTRAL.index(m)
                M[:, rows, q * d:(q + 1) * d] += a
            else:
                sub = expand(m, 1)
                for j, v in sub.central.items():
                    q = CENTRAL.index(j)
                    M[:, rows, q * d:(q + 1) * d] += a @ v
                for s, v in sub.inputs.items():
                    _add(rhs, s, _embed(-a @ v, p, nc, omegas.size))
    shifts = sorted(rhs)
    stacked = np.concatenate([rhs[s] for s in shifts], axis=2)
    sol = np.linalg.solve(M, stacked)
    c0 = CENTRAL.index(0)
    coefs = {s: sol[:, c0 * d:(c0 + 1) * d, i * d:(i + 1) * d] for i, s in enumerate(shifts)}
    return IterativeSolution(omegas, int(order), coefs)


def _embed(block, p, nc, W):
    d = block.shape[-1]
    out = np.zeros((W, nc * d, d), dtype=complex)
    out[:, p * d:(p + 1) * d, :] = block
    return out


DEFAULT_ORDER = 3


def iterative_spectrum(series, noise, omegas, order: int = DEFAULT_ORDER) -> SpectrumResult:
    """Full correlation matrix ``<c(w) c(w)^dag>`` from the iterative coefficients.

    Meant for the window ``|w - omega_M| <~ 1.5 omega_d`` around the split peaks.
    Further out, an operator at ``w + n omega_d`` with ``|n| >= 2`` can sit on the
    bare mechanical pole; its equation is truncated there, so the result shows
    spurious peaks of height ``~1/Gamma_M`` at ``omega_M - n omega_d``.
    """
    sol = solve_iterative(series, noise, omegas, order)
    vals = sol.spectrum(noise)
    meta = {"order": int(order), "drive_frequency": series.drive_frequency, "n_modes": series.n_modes,
            "shifts": [int(s) for s in sol.shifts]}
    return SpectrumResult(sol.omega, vals, "iterative", metadata=meta)


def truncation_equivalence(series, noise, omegas, order: int, K: int | None = None, project=None) -> float:
    """Max relative deviation between the iterative result and the truncated matrix solution.

    ``K`` defaults to ``order + 1``. ``project`` is an optional row vector; by
    default the full matrices are compared.
    """
    from .spectra import spectrum_shifted

    K = order + 1 if K is None else K
    K = max(K, series.max_harmonic)
    it = iterative_spectrum(series, noise, omegas, order)
    sh = spectrum_shifted(series, noise, omegas, K)
    if project is not None:
        it, sh = it.project(project, "p"), sh.project(project, "p")
    return float(np.max(np.abs(it.values - sh.values)) / np.max(np.abs(sh.values)))
