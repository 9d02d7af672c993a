"""Linear-regression front end: effective sample size and Wilks critical values.

Observations ``Y_i = Psi_i' theta + eps_i`` with independent noise satisfying
``log E exp(l eps_i / s_i) <= nu0^2 l^2 / 2`` for ``|l| <= g1``. The score
``V0^-1 sum_i Psi_i eps_i`` then satisfies the vector moment condition with
radius ``g1 sqrt(N)``, where ``N^-1/2 = max_i s_i ||V0^-1 Psi_i||``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular

from .bounds import (
    MomentProfile,
    TailBound,
    gaussian_bform_quantile,
    gaussian_quantile,
    l2_quantile,
    normalize_lambda,
    rescaled_bound,
    rescaled_spec,
)
from .errors import BadArgs, GTooSmall, InputError, NonFiniteEntry, RankDeficientDesign
from .matrix import SymmetricMatrix, symmetrize_and_validate


@dataclass(frozen=True)
class DesignModel:
    psi: np.ndarray
    scales: np.ndarray
    nu0: float = 1.0
    g1: float = math.inf

    def __post_init__(self):
        psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        scales = np.asarray(self.scales, dtype=float).reshape(-1)
        if psi.shape[1] != scales.size:
            raise BadArgs(f"psi has {psi.shape[1]} columns but {scales.size} scales were given")
        if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(scales))):
            raise NonFiniteEntry("design contains non-finite values")
        if np.any(scales <= 0):
            raise BadArgs("all noise scales must be positive")
        if psi.shape[0] > psi.shape[1]:
            raise RankDeficientDesign(f"p = {psi.shape[0]} exceeds n = {psi.shape[1]}")
        if not self.nu0 >= 1:
            raise BadArgs(f"nu0 must be >= 1, got {self.nu0}")
        if not self.g1 > 0:
            raise BadArgs(f"g1 must be positive, got {self.g1}")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "scales", scales)

    @property
    def p(self) -> int:
        return self.psi.shape[0]

    @property
    def n(self) -> int:
        return self.psi.shape[1]


@dataclass(frozen=True)
class EffectiveSampleInfo:
    n_eff: float
    g_derived: float
    v0: SymmetricMatrix


def _v0_squared(model: DesignModel) -> np.ndarray:
    weighted = model.psi * model.scales
    return weighted @ weighted.T


def _v0_cholesky(model: DesignModel) -> np.ndarray:
    v2 = _v0_squared(model)
    try:
        chol = np.linalg.cholesky(v2)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientDesign("V0^2 = sum s_i^2 Psi_i Psi_i' is not positive definite") from exc
    d = np.diag(chol)
    if d.min() <= 1e-12 * d.max():
        raise RankDeficientDesign("V0^2 is numerically singular")
    return chol


def effective_sample_size(model: DesignModel) -> EffectiveSampleInfo:
    """``N`` from ``N^-1/2 = max_i s_i ||V0^-1 Psi_i||`` and ``g = g1 sqrt(N)``.

    ``||V0^-1 Psi_i|| = ||L^-1 Psi_i||`` for the Cholesky factor ``L L' = V0^2``,
    for whichever square root ``V0`` is taken.
    """
    chol = _v0_cholesky(model)
    cols = solve_triangular(chol, model.psi, lower=True)
    lev = model.scales * np.linalg.norm(cols, axis=0)
    n_eff = 1.0 / float(lev.max()) ** 2
    v2 = _v0_squared(model)
    lam, vecs = np.linalg.eigh(v2)
    v0 = symmetrize_and_validate((vecs * np.sqrt(np.clip(lam, 0, None))) @ vecs.T, tol=1e-6)
    return EffectiveSampleInfo(n_eff, model.g1 * math.sqrt(n_eff), v0)


@dataclass(frozen=True)
class CriticalRow:
    x: float
    bound: TailBound

    def as_row(self) -> dict:
        return {"x": self.x, **self.bound.as_row()}


def wilks_critical_values(
    model: DesignModel,
    x_grid: Sequence[float],
    D0: Optional[Union[SymmetricMatrix, np.ndarray]] = None,
) -> List[CriticalRow]:
    """Critical values for ``||xi||^2`` (or ``||D0^-1 zeta||^2`` when ``D0`` is given).

    Gaussian errors (``g1 = inf``, ``nu0 = 1``) use the exact Gaussian bounds.
    Otherwise the moment profile ``(nu0, g1 sqrt(N))`` is fed to the l2 or the
    rescaled quantile bound.
    """
    if len(x_grid) == 0:
        raise BadArgs("x grid is empty")
    info = effective_sample_size(model)
    gaussian = math.isinf(model.g1)
    profile = MomentProfile(model.nu0, info.g_derived)
    rows = []
    if D0 is None:
        for x in x_grid:
            if gaussian:
                tb = gaussian_quantile(model.p, x)
                if model.nu0 != 1.0:
                    s = model.nu0**2
                    tb = TailBound(s * tb.threshold, tb.prob_bound, tb.regime, tb.source)
            else:
                try:
                    tb = l2_quantile(profile, model.p, x)
                except GTooSmall as exc:
                    raise _needs_more_samples(exc, model, info, model.p) from exc
            rows.append(CriticalRow(float(x), tb))
        return rows
    spec = rescaled_spec(info.v0, D0)
    for x in x_grid:
        if gaussian and model.nu0 == 1.0:
            tb = gaussian_bform_quantile(spec, x)
        else:
            try:
                tb = rescaled_bound(info.v0, D0, profile, x)
            except GTooSmall as exc:
                p_bar = normalize_lambda(spec)[0].p_eff
                raise _needs_more_samples(exc, model, info, 2.0 * p_bar) from exc
        rows.append(CriticalRow(float(x), tb))
    return rows


def _needs_more_samples(exc: GTooSmall, model: DesignModel, info: EffectiveSampleInfo,
                        g_sq_needed: float) -> GTooSmall:
    # nu0^2 g1^2 N >= g_sq_needed
    n_needed = g_sq_needed / (model.nu0 * model.g1) ** 2
    return GTooSmall(f"{exc}; effective sample size N = {info.n_eff:.6g}, need N >= {n_needed:.6g}")


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_design_csv(path: Union[str, Path], nu0: float = 1.0, g1: float = math.inf) -> DesignModel:
    """Read ``n`` rows of ``Psi_i' , s_i``; a non-numeric first row is taken as a header."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read design file {path}: {exc.strerror}") from exc
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise InputError(f"{path}: design file has no data rows")
    width = len(rows[0])
    if width < 2 or any(len(r) != width for r in rows):
        raise InputError(f"{path}: every row needs the same number (>= 2) of columns")
    try:
        data = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from exc
    return DesignModel(data[:, :-1].T, data[:, -1], nu0, g1)
