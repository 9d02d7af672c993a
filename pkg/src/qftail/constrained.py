"""Bounds under a moment condition stated in a non-Euclidean norm.

The vector satisfies ``log E exp(gamma' xi) <= ||gamma||^2 / 2`` only for
``||gamma||_s <= g_s`` (typically the sup-norm), and the events are
intersected with ``||xi||_s <= u_s``. The Bernstein specialization and the
comparison bound from the literature live here too.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bounds import Regime, Source, TailBound, _check_x, _kappa_deviation, phi
from .errors import (
    AssumptionViolated,
    BadArgs,
    BadConstraint,
    DimTooSmall,
    MuTooLarge,
    SpectrumNotSubProjector,
    ZNotAbovePDim,
)
from .matrix import QuadFormSpec, log_det_complement, spec_from_matrix, symmetrize_and_validate
from .roots import bisect_monotone

SUBPROJECTOR_TOL = 1e-10


class NormKind(str, enum.Enum):
    SUP = "SupNorm"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class NormConstraint:
    g_s: float
    r_star: float
    u_s: float
    norm_kind: NormKind = NormKind.SUP

    def __post_init__(self):
        for name in ("g_s", "r_star", "u_s"):
            v = getattr(self, name)
            if not v > 0:
                raise BadConstraint(f"{name} must be positive, got {v}")


@dataclass(frozen=True)
class ConstrainedCriticals:
    """Root of the truncation equation; ``mu_s`` is None when ``z_s`` is infinite."""

    z_s: float
    mu_s: Optional[float]
    x_s: float

    @property
    def infinite(self) -> bool:
        return math.isinf(self.z_s)


@dataclass(frozen=True)
class BernsteinProfile:
    """Independent coordinates with ``log E e^{l z_i} <= l^2 sigma^2 / (1 - c|l|)``."""

    sigma: float
    c: float
    ambient_dim: int
    subspace_dim: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise BadArgs(f"sigma must be positive, got {self.sigma}")
        if not self.c >= 0:
            raise BadArgs(f"c must be nonnegative, got {self.c}")
        if not 1 <= self.subspace_dim <= self.ambient_dim:
            raise BadArgs(
                f"need 1 <= subspace_dim <= ambient_dim, got {self.subspace_dim}, {self.ambient_dim}"
            )

    @property
    def g_s(self) -> float:
        return math.inf if self.c == 0 else self.sigma / self.c

    @property
    def xi_scale(self) -> float:
        """Factor turning ``zeta`` into the normalized vector ``xi``."""
        return 1.0 / (2.0 * self.sigma)


def mu_of_z(p: int, z: float) -> float:
    if not z > p:
        raise ZNotAbovePDim(f"need z > p, got z={z}, p={p}")
    return (z - p) / z


def _truncation_radius(c: NormConstraint, mu: float) -> float:
    return c.g_s / mu - c.r_star / math.sqrt(mu)


def solve_z_s(constraint: NormConstraint, p: int) -> ConstrainedCriticals:
    """Largest ``z`` whose truncation radius ``g_s/mu(z) - r*/sqrt(mu(z))`` still covers ``u_s``."""
    if p < 1:
        raise BadArgs(f"p must be >= 1, got {p}")
    c = constraint
    if c.u_s <= c.g_s - c.r_star:
        return ConstrainedCriticals(math.inf, None, math.inf)
    # the radius is strictly decreasing in mu on (0, 1): +inf at 0+, g_s - r* at 1
    mu = bisect_monotone(
        lambda m: _truncation_radius(c, m) - c.u_s,
        1e-300,
        1.0,
        atol=1e-11 * max(1.0, c.u_s),
        fprime=lambda m: -c.g_s / (m * m) + 0.5 * c.r_star * m**-1.5,
    )
    z = p / (1.0 - mu)
    x_s = 0.5 * (mu * z + p * math.log1p(-mu))
    return ConstrainedCriticals(z, mu, x_s)


def constrained_tail(constraint: NormConstraint, p: int, z: float) -> TailBound:
    """Bound on ``P(||xi||^2 > z, ||xi||_s <= u_s)``.

    Up to ``z_s`` this is ``2 exp{-(p/2) phi((z-p)/p)}``; beyond it the
    exponential Markov bound at the fixed ``mu_s``. ``details`` also reports the
    same bound written with slope ``mu_s/2`` from ``x_s`` and the variant with
    slope ``g_s/2``.
    """
    if not z > p:
        raise ZNotAbovePDim(f"need z > p, got z={z}, p={p}")
    cr = solve_z_s(constraint, p)
    if z <= cr.z_s:
        u = z - p
        regime = Regime.SUB_GAUSSIAN if u <= p else Regime.SUB_EXPONENTIAL
        bound = 2.0 * math.exp(-0.5 * p * phi(u / p))
        return TailBound(z, bound, regime, Source.CONSTRAINED, details={"z_s": cr.z_s})
    mu = cr.mu_s
    markov = 2.0 * math.exp(-0.5 * mu * z - 0.5 * p * math.log1p(-mu))
    details = {
        "z_s": cr.z_s,
        "x_s": cr.x_s,
        "linear_mu_slope": 2.0 * math.exp(-cr.x_s - 0.5 * mu * (z - cr.z_s)),
        "linear_gs_slope": 2.0 * math.exp(-cr.x_s - 0.5 * constraint.g_s * (z - cr.z_s)),
    }
    return TailBound(z, markov, Regime.LARGE_DEVIATION, Source.CONSTRAINED, details=details)


def subprojector_spec(Pi) -> QuadFormSpec:
    """Spectral functionals of a symmetric ``Pi`` with ``Pi^2 <= Pi`` (eigenvalues in [0, 1])."""
    m = symmetrize_and_validate(Pi)
    lam = np.linalg.eigvalsh(m.entries)
    if lam.min() < -SUBPROJECTOR_TOL or lam.max() > 1.0 + SUBPROJECTOR_TOL:
        raise SpectrumNotSubProjector(
            f"eigenvalues of Pi must lie in [0, 1], got [{lam.min():.3g}, {lam.max():.3g}]"
        )
    return spec_from_matrix(m.entries)


def _check_subprojector(spec_pi: QuadFormSpec) -> None:
    a = spec_pi.spectrum.eigenvalues
    if a.size and a[0] > 1.0 + SUBPROJECTOR_TOL:
        raise SpectrumNotSubProjector(f"lambda_max(Pi^2) = {a[0]:.6g} exceeds 1")


def subprojector_exp_moment_bound(spec_pi: QuadFormSpec, mu_s: float) -> float:
    """``2 exp(mu_s^2 v^2 / 4)``, bounding the truncated moment of ``(mu_s/2)(||Pi xi||^2 - p)``.

    The caller is responsible for ``g_s/mu_s - r*/sqrt(mu_s) >= u_s``.
    """
    _check_subprojector(spec_pi)
    if mu_s > 2.0 / 3.0:
        raise MuTooLarge(f"mu_s must be <= 2/3, got {mu_s}")
    if mu_s < 0:
        raise BadArgs(f"mu_s must be nonnegative, got {mu_s}")
    return 2.0 * math.exp(mu_s * mu_s * spec_pi.v_sq / 4.0)


def neg_log_det_chain(spec_pi: QuadFormSpec, mu_s: float) -> tuple:
    """Both sides of ``-log det(I - mu Pi^2) <= mu p + mu^2 v^2 / 2``."""
    lhs = -log_det_complement(spec_pi.spectrum, mu_s)
    rhs = mu_s * spec_pi.p_eff + mu_s * mu_s * spec_pi.v_sq / 2.0
    return lhs, rhs


def subprojector_quantile(spec_pi: QuadFormSpec, constraint: NormConstraint, x: float) -> TailBound:
    """Threshold for ``||Pi xi||^2`` on the event ``||Pi^2 xi||_s <= u_s``; needs ``g_s >= r* + u_s``."""
    _check_subprojector(spec_pi)
    x = _check_x(x)
    c = constraint
    if c.g_s < c.r_star + c.u_s:
        raise AssumptionViolated(
            f"need g_s >= r* + u_s, got g_s={c.g_s:.6g} < {c.r_star + c.u_s:.6g}"
        )
    root = 2.0 * spec_pi.v * math.sqrt(x)
    lin = 6.0 * x
    regime = Regime.SUB_GAUSSIAN if root >= lin else Regime.SUB_EXPONENTIAL
    return TailBound(spec_pi.p_eff + max(root, lin), 2.0 * math.exp(-x), regime, Source.SUBPROJECTOR)


def sup_norm_r_star(m: int) -> float:
    """Radius ``sqrt(2 log m)`` containing a standard normal m-vector in sup-norm with probability >= 1/2."""
    if m < 2:
        raise DimTooSmall(f"sup-norm radius needs m >= 2, got {m}")
    return math.sqrt(2.0 * math.log(m))


def bernstein_quantile(profile: BernsteinProfile, u_s: float, x: float) -> TailBound:
    """Threshold for ``(4 sigma^2)^-1 ||Pi_S zeta||^2`` on ``||Pi_S zeta||_inf <= 2 sigma u_s``.

    ``r*`` is taken in the ambient dimension, where the sup-norm constraint is
    imposed. ``details['unscaled_threshold']`` applies to ``||Pi_S zeta||^2``.
    """
    x = _check_x(x)
    if not u_s > 0:
        raise BadArgs(f"u_s must be positive, got {u_s}")
    r_star = sup_norm_r_star(profile.ambient_dim)
    if profile.g_s < u_s + r_star:
        raise AssumptionViolated(
            f"need g_s = sigma/c >= u_s + r* = {u_s + r_star:.6g}, got {profile.g_s:.6g}"
        )
    p = profile.subspace_dim
    dev, regime = _kappa_deviation(x, p)
    scaled = p + dev
    return TailBound(
        scaled,
        2.0 * math.exp(-x),
        regime,
        Source.BERNSTEIN,
        details={"unscaled_threshold": 4.0 * profile.sigma**2 * scaled, "r_star": r_star,
                 "g_s": profile.g_s},
    )


def baraud_quantile(profile: BernsteinProfile, u_level: float, x: float) -> TailBound:
    """Comparison bound ``P(||Pi_S zeta|| > (3 sigma v sqrt(6 c u)) sqrt(x + 3p)) <= e^-x``.

    ``threshold`` is on the norm; ``details['squared_threshold']`` on its square.
    """
    x = _check_x(x)
    if not u_level > 0:
        raise BadArgs(f"u_level must be positive, got {u_level}")
    a = 3.0 * profile.sigma
    b = math.sqrt(6.0 * profile.c * u_level)
    factor = max(a, b)
    t = factor * math.sqrt(x + 3.0 * profile.subspace_dim)
    return TailBound(
        t,
        math.exp(-x),
        Regime.SUB_GAUSSIAN if a >= b else Regime.SUB_EXPONENTIAL,
        Source.BARAUD,
        squared=False,
        details={"squared_threshold": t * t, "branch_sigma": float(a >= b)},
    )


def bernstein_comparison(profile: BernsteinProfile, u_s: float, x: float,
                         u_level: Optional[float] = None) -> dict:
    """One row comparing both squared thresholds on ``||Pi_S zeta||^2``.

    ``u_level`` defaults to ``2 sigma u_s``, the sup-norm level of the event.
    """
    if u_level is None:
        u_level = 2.0 * profile.sigma * u_s
    ours = bernstein_quantile(profile, u_s, x)
    theirs = baraud_quantile(profile, u_level, x)
    ours_sq = ours.details["unscaled_threshold"]
    theirs_sq = theirs.details["squared_threshold"]
    return {
        "x": x,
        "threshold": ours_sq,
        "baraud_threshold": theirs_sq,
        "ratio": theirs_sq / ours_sq,
        "baraud_branch": "3sigma" if theirs.details["branch_sigma"] else "sqrt(6cu)",
    }

