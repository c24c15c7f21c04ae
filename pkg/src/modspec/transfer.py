"""Truncated frequency-coupling transfer matrix.

Block index convention
----------------------
The big matrix has ``2K + 1`` block rows/columns labelled by the signed index
``s = -K..K``. Index ``s`` carries the operators at frequency ``omega - s*omega_d``,
so storage position ``p = s + K`` runs from the highest frequency
(``omega + K omega_d``, top-left) down to the lowest. With this labelling the
inverse transfer matrix reads

    [T^-1]_{ss} = X(omega - s omega_d) = -i(omega - s omega_d) I + i sigma H_0 + gamma/2
    [T^-1]_{sl} = A_{s-l} = i sigma H_{s-l}                     (s != l)

and ``c(omega) = sum_l T_{0l}(omega) c_in(omega - l omega_d)``. Blocks obey the
translation identity ``T_{ab}(omega) = T_{a+n, b+n}(omega + n omega_d)`` exactly
for the infinite matrix and up to truncation error for finite ``K``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .errors import ContractError, NumericalError
from .model import HamiltonianFourierSeries, NoiseModel, symplectic_form
from .results import SpectrumResult

DEFAULT_K = 8
MAX_CONDITION = 1e12


def _check_K(series: HamiltonianFourierSeries, K: int):
    if int(K) != K or K < 0:
        raise ContractError(f"truncation K must be a non-negative integer, got {K}")
    if K < series.max_harmonic:
        raise ContractError(f"truncation K={K} is smaller than the highest harmonic {series.max_harmonic}")


def coupling_blocks(series: HamiltonianFourierSeries) -> dict:
    """``{k: A_k = i sigma H_k}`` for the nonzero harmonics ``k != 0``."""
    sigma = symplectic_form(series.n_modes)
    return {k: 1j * sigma @ h for k, h in series.harmonics.items() if k != 0 and np.any(h != 0)}


def diagonal_block(series: HamiltonianFourierSeries, noise: NoiseModel, omega) -> np.ndarray:
    """``X(omega)``; broadcasts over an array of frequencies."""
    omega = np.asarray(omega, dtype=float)
    sigma = symplectic_form(series.n_modes)
    base = 1j * sigma @ series[0] + np.diag(noise.damping) / 2
    eye = np.eye(series.dim)
    return base - 1j * omega[..., None, None] * eye


def assemble_batch(series, noise, omegas, K) -> np.ndarray:
    """Dense ``T^-1`` for every frequency in ``omegas``: shape ``(len, D, D)``."""
    _check_K(series, K)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    d = series.dim
    nb = 2 * K + 1
    out = np.zeros((omegas.size, nb * d, nb * d), dtype=complex)
    shifts = np.arange(-K, K + 1)
    diag = diagonal_block(series, noise, omegas[:, None] - shifts[None, :] * series.drive_frequency)
    for p in range(nb):
        out[:, p * d:(p + 1) * d, p * d:(p + 1) * d] = diag[:, p]
    for k, a in coupling_blocks(series).items():
        for p in range(nb):
            q = p - k  # s - l = k
            if 0 <= q < nb:
                out[:, p * d:(p + 1) * d, q * d:(q + 1) * d] = a
    return out


@dataclass(eq=False)
class TruncatedTransferMatrix:
    """``T^-1`` restricted to block indices ``-K..K`` at one frequency, plus ``T`` once inverted."""

    omega: float
    drive_frequency: float
    K: int
    n_modes: int
    inverse: np.ndarray
    T: np.ndarray | None = None
    condition: float | None = None

    @property
    def dim(self) -> int:
        return 2 * self.n_modes

    @property
    def n_blocks(self) -> int:
        return 2 * self.K + 1

    def _slice(self, s: int) -> slice:
        if abs(s) > self.K:
            raise IndexError(f"block index {s} outside -{self.K}..{self.K}")
        p = s + self.K
        return slice(p * self.dim, (p + 1) * self.dim)

    def inverse_block(self, s: int, l: int) -> np.ndarray:
        return self.inverse[self._slice(s), self._slice(l)]

    def frequency_of(self, s: int) -> float:
        """Frequency carried by block index ``s``."""
        return self.omega - s * self.drive_frequency


def assemble_inverse(series, noise, omega: float, K: int = DEFAULT_K) -> TruncatedTransferMatrix:
    """Build ``T^-1(omega)`` truncated to ``|s|, |l| <= K``."""
    if not np.isfinite(omega):
        raise ContractError("omega must be finite")
    m = assemble_batch(series, noise, [omega], K)[0]
    return TruncatedTransferMatrix(float(omega), series.drive_frequency, int(K), series.n_modes, m)


def invert(tm: TruncatedTransferMatrix, max_condition: float = MAX_CONDITION) -> TruncatedTransferMatrix:
    """Return a copy with ``T = (T^-1)^-1`` populated.

    Raises :class:`NumericalError` when the 1-norm condition number exceeds
    ``max_condition`` or the residual check fails.
    """
    m = tm.inverse
    try:
        lu, piv = linalg.lu_factor(m, check_finite=True)
        t = linalg.lu_solve((lu, piv), np.eye(m.shape[0], dtype=complex))
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"transfer matrix singular at omega={tm.omega}", omega=tm.omega) from exc
    cond = np.linalg.norm(m, 1) * np.linalg.norm(t, 1)
    if not np.isfinite(cond) or cond > max_condition:
        raise NumericalError(
            f"transfer matrix ill-conditioned at omega={tm.omega} (cond ~ {cond:.3g})",
            omega=tm.omega, condition=cond,
        )
    resid = np.max(np.abs(m @ t - np.eye(m.shape[0])))
    if resid > 1e-10 * max(1.0, np.max(np.abs(m))):
        raise NumericalError(
            f"inversion residual {resid:.3g} too large at omega={tm.omega}", omega=tm.omega, condition=cond
        )
    return replace(tm, T=t, condition=float(cond))


def block(tm: TruncatedTransferMatrix, s: int, l: int) -> np.ndarray:
    """``T_{sl}(omega)``."""
    if tm.T is None:
        raise ContractError("transfer matrix has not been inverted yet")
    return tm.T[tm._slice(s), tm._slice(l)]


def transfer_matrix(series, noise, omega, K=DEFAULT_K) -> TruncatedTransferMatrix:
    return invert(assemble_inverse(series, noise, omega, K))


def translation_residual(series, noise, omega, K=DEFAULT_K, shift=1, margin=None) -> float:
    """``max |T_{l l'}(omega) - T_{l+n, l'+n}(omega + n omega_d)|`` over interior blocks.

    A block pair is compared when ``l, l', l+n, l'+n`` all lie at least
    ``margin`` blocks from the truncation edge (default ``K_H + 2``).
    """
    if margin is None:
        margin = series.max_harmonic + 2
    inner = K - margin
    n = int(shift)
    idx = [l for l in range(-inner, inner + 1) if abs(l + n) <= inner]
    if not idx:
        raise ContractError(f"no interior blocks for K={K}, shift={n}, margin={margin}")
    t0 = transfer_matrix(series, noise, omega, K)
    t1 = transfer_matrix(series, noise, omega + n * series.drive_frequency, K)
    worst = 0.0
    for l in idx:
        for lp in idx:
            worst = max(worst, float(np.max(np.abs(block(t0, l, lp) - block(t1, l + n, lp + n)))))
    return worst


# -- batched solves used by the spectrum routines ---------------------------------

def _bandwidth(series, K) -> int:
    return series.dim * (series.max_harmonic + 1) - 1


def _solve(mats: np.ndarray, rhs: np.ndarray, bandwidth: int, method: str) -> np.ndarray:
    """Solve ``mats[i] @ x[i] = rhs`` for each frequency; ``rhs`` has shape ``(D, r)``."""
    if method == "dense" or bandwidth >= mats.shape[1] - 1:
        b = np.broadcast_to(rhs, mats.shape[:1] + rhs.shape)
        return np.linalg.solve(mats, b)
    D = mats.shape[1]
    u = bandwidth
    rows = np.arange(D)
    out = np.empty(mats.shape[:1] + rhs.shape, dtype=complex)
    ab = np.zeros((2 * u + 1, D), dtype=complex)
    # banded storage: ab[u + i - j, j] = a[i, j]
    offs = np.arange(-u, u + 1)
    for w in range(mats.shape[0]):
        ab[:] = 0
        a = mats[w]
        for o in offs:
            if o >= 0:
                ab[u - o, o:] = a[rows[: D - o], rows[: D - o] + o]
            else:
                ab[u - o, : D + o] = a[rows[-o:], rows[-o:] + o]
        out[w] = linalg.solve_banded((u, u), ab, rhs, check_finite=False)
    return out


def _guard(mats, sol, omegas, rhs_rows, max_condition):
    # lower bound of the 1-norm condition number from the columns we solved for
    norm_m = np.abs(mats).sum(axis=1).max(axis=1)
    norm_part = np.abs(sol).sum(axis=1).max(axis=1)
    cond = norm_m * norm_part
    bad = ~np.isfinite(cond) | (cond > max_condition)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NumericalError(
            f"transfer matrix ill-conditioned at omega={omegas[i]} (cond >= {cond[i]:.3g})",
            omega=float(omegas[i]), condition=float(cond[i]),
        )


def transfer_blocks(series, noise, omegas, K=DEFAULT_K, *, row=None, col=None,
                    method="dense", max_condition=MAX_CONDITION) -> np.ndarray:
    """Block row ``T_{row, l}`` or block column ``T_{s, col}`` for every frequency.

    Returns shape ``(len(omegas), 2K+1, d, d)``; axis 1 runs over ``l`` (or ``s``)
    from ``-K`` to ``K``.
    """
    if (row is None) == (col is None):
        raise ContractError("give exactly one of row= or col=")
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    d = series.dim
    nb = 2 * K + 1
    which = row if row is not None else col
    if abs(which) > K:
        raise IndexError(f"block index {which} outside -{K}..{K}")
    mats = assemble_batch(series, noise, omegas, K)
    if row is not None:
        mats = np.swapaxes(mats, 1, 2)
    e = np.zeros((nb * d, d), dtype=complex)
    p = which + K
    e[p * d:(p + 1) * d] = np.eye(d)
    sol = _solve(mats, e, _bandwidth(series, K), method)
    _guard(mats, sol, omegas, e, max_condition)
    blocks = sol.reshape(omegas.size, nb, d, d)
    if row is not None:
        blocks = np.swapaxes(blocks, 2, 3)
    return blocks


def standard_spectrum_oracle(series, noise, omegas) -> SpectrumResult:
    """Closed-form stationary spectrum ``T N T^dag`` with ``T = X(omega)^-1`` (no modulation)."""
    if series.is_modulated:
        raise ContractError("standard_spectrum_oracle only accepts unmodulated systems")
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    t = np.linalg.inv(diagonal_block(series, noise, omegas))
    s = (t * noise.correlation[None, None, :]) @ np.conj(np.swapaxes(t, 1, 2))
    return SpectrumResult(omegas, s, "oracle", metadata={"K": 0})
