"""Symmetric-matrix numerics shared by the bound kernels.

Everything here works with the spectrum of ``B**2`` rather than with ``B``
itself: the deviation bounds only see ``tr(B^2)``, ``tr(B^4)``, the top
eigenvalue and ``log det(I - mu B^2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    AsymmetryExceedsTol,
    EigenFailure,
    EmptySpectrum,
    InputError,
    MuTooLarge,
    NonFiniteEntry,
    NonSquare,
)

DEFAULT_SYMMETRY_TOL = 1e-9
# B^2 is PSD exactly; anything more negative than this is not roundoff.
NEGATIVE_EIG_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SymmetricMatrix:
    entries: np.ndarray
    max_asymmetry: float = 0.0

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class Spectrum:
    """Descending eigenvalues of ``B**2``.

    ``basis`` optionally holds the matching orthonormal eigenvectors as
    columns. Bounds never use it; Monte Carlo does, for non-rotation-invariant
    noise.
    """

    eigenvalues: np.ndarray
    basis: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @property
    def source_dim(self) -> int:
        return self.eigenvalues.shape[0]

    @classmethod
    def from_values(cls, values: Sequence[float], basis: Optional[np.ndarray] = None) -> "Spectrum":
        a = np.asarray(values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(a)):
            raise NonFiniteEntry("spectrum contains non-finite values")
        if a.size and a.min() < -NEGATIVE_EIG_TOL:
            raise InputError(f"eigenvalue {a.min():.3g} of B^2 is negative beyond roundoff")
        order = np.argsort(-a, kind="stable")
        a = np.clip(a[order], 0.0, None)
        if basis is not None:
            basis = _frozen(np.asarray(basis, dtype=float)[:, order])
        return cls(_frozen(a), basis)

    def scaled(self, factor: float) -> "Spectrum":
        return Spectrum(_frozen(self.eigenvalues * factor), self.basis)


@dataclass(frozen=True)
class QuadFormSpec:
    """Spectral functionals of ``B``: ``tr B^2``, ``2 tr B^4`` and ``lambda_max(B^2)``."""

    spectrum: Spectrum
    p_eff: float
    v_sq: float
    lambda_star: float

    @property
    def v(self) -> float:
        return float(np.sqrt(self.v_sq))

    @property
    def dim(self) -> int:
        return self.spectrum.source_dim


def symmetrize_and_validate(raw, tol: float = DEFAULT_SYMMETRY_TOL) -> SymmetricMatrix:
    m = np.asarray(raw, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteEntry("matrix has non-finite entries")
    diff = np.abs(m - m.T)
    allowed = tol * np.maximum(1.0, np.abs(m))
    if np.any(diff > allowed):
        i, j = np.unravel_index(np.argmax(diff - allowed), diff.shape)
        raise AsymmetryExceedsTol(
            f"|M[{i},{j}] - M[{j},{i}]| = {diff[i, j]:.3g} exceeds tolerance {allowed[i, j]:.3g}"
        )
    sym = 0.5 * (m + m.T)
    return SymmetricMatrix(_frozen(sym), float(diff.max()) if diff.size else 0.0)


def spectrum_of_square(B: Union[SymmetricMatrix, np.ndarray]) -> Spectrum:
    """Eigenvalues of ``B @ B`` obtained by squaring the eigenvalues of ``B``."""
    if not isinstance(B, SymmetricMatrix):
        B = symmetrize_and_validate(B)
    try:
        lam, vecs = np.linalg.eigh(B.entries)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    return Spectrum.from_values(lam**2, basis=vecs)


def quadform_spec(s: Spectrum) -> QuadFormSpec:
    a = s.eigenvalues
    if a.size == 0:
        raise EmptySpectrum("zero-dimensional spectrum")
    return QuadFormSpec(
        spectrum=s,
        p_eff=float(a.sum()),
        v_sq=float(2.0 * np.dot(a, a)),
        lambda_star=float(a[0]),
    )


def spec_from_matrix(B, tol: float = DEFAULT_SYMMETRY_TOL) -> QuadFormSpec:
    return quadform_spec(spectrum_of_square(symmetrize_and_validate(B, tol)))


def spec_from_eigenvalues(values: Sequence[float]) -> QuadFormSpec:
    return quadform_spec(Spectrum.from_values(values))


def log_det_complement(s: Union[Spectrum, QuadFormSpec], mu: float) -> float:
    """``log det(I - mu B^2)``; requires ``mu * lambda_max(B^2) < 1``."""
    if isinstance(s, QuadFormSpec):
        s = s.spectrum
    a = s.eigenvalues
    top = a[0] if a.size else 0.0
    if mu * top >= 1.0:
        raise MuTooLarge(f"mu * lambda_max = {mu * top:.6g} >= 1; the exponential moment does not exist")
    return float(np.sum(np.log1p(-mu * a)))


def read_matrix_csv(path: Union[str, Path], tol: float = DEFAULT_SYMMETRY_TOL) -> SymmetricMatrix:
    """Read a headerless ``p x p`` CSV of plain decimals."""
    try:
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path}: cannot parse matrix CSV ({exc})") from exc
    return symmetrize_and_validate(raw, tol)
