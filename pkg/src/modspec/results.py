"""Container for computed spectra."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

METHODS = ("shifted", "floquet", "iterative", "stochastic", "oracle")


@dataclass(eq=False)
class SpectrumResult:
    """Spectral values on a frequency grid.

    ``values`` is either ``(len(omega), d, d)`` (full correlation matrix
    ``<c(w) c(w + m w_d)^dag>``) or ``(len(omega),)`` for a named scalar
    projection such as ``"S_yy"`` or ``"S_hom"``.
    """

    omega: np.ndarray
    values: np.ndarray
    method: str
    m: int = 0
    projection: str | None = None
    stderr: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.values = np.asarray(self.values)
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")
        if self.values.shape[0] != self.omega.shape[0]:
            raise ValueError("values and omega grid lengths differ")

    @property
    def is_matrix(self) -> bool:
        return self.values.ndim == 3

    def project(self, vector, name: str) -> "SpectrumResult":
        """Scalar spectrum ``v S v^dag`` of the operator ``v . c``."""
        if not self.is_matrix:
            raise ValueError("spectrum is already a scalar projection")
        v = np.asarray(vector, dtype=complex)
        vals = np.einsum("i,wij,j->w", v, self.values, v.conj())
        if self.m == 0:
            vals = vals.real
        return replace(self, values=vals, projection=name, metadata=dict(self.metadata))

    def entry(self, i: int, j: int, name: str | None = None) -> "SpectrumResult":
        vals = self.values[:, i, j]
        return replace(self, values=vals, projection=name or f"S[{i},{j}]", metadata=dict(self.metadata))

    def real_part(self) -> np.ndarray:
        return np.real(self.values)
