"""Deviation bounds for ``||xi||^2`` and ``||B xi||^2``.

The random vector is assumed to satisfy

    log E exp(gamma' xi) <= nu0^2 ||gamma||^2 / 2   for ||gamma|| <= g,

described by :class:`MomentProfile`. Every entry point accepts either a bare
moment radius ``g`` (meaning ``nu0 = 1``) or a profile; profiles are reduced to
``nu0 = 1`` by rescaling ``xi`` and ``g`` before any formula is evaluated, and
thresholds are mapped back at the end.

Quantile functions return the threshold on the squared norm; large-deviation
tail functions take the threshold on the norm itself.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.linalg import cho_solve

from .errors import (
    BadArgs,
    D0NotPD,
    GTooSmall,
    MuInvalid,
    NegativeArgument,
    NonFinite,
    NotNormalized,
    YBelowCritical,
    ZeroMatrix,
)
from .matrix import (
    QuadFormSpec,
    Spectrum,
    SymmetricMatrix,
    log_det_complement,
    quadform_spec,
    symmetrize_and_validate,
)
from .roots import bisect_monotone

KAPPA = 6.6
SLICING_CONST = 8.4
MU_CAP = 2.0 / 3.0


class Regime(str, enum.Enum):
    SUB_GAUSSIAN = "SubGaussian"
    SUB_EXPONENTIAL = "SubExponential"
    LARGE_DEVIATION = "LargeDeviation"


class Source(str, enum.Enum):
    GAUSSIAN_L2 = "gaussian_l2"
    GAUSSIAN_BFORM = "gaussian_bform"
    L2_MODERATE = "l2_moderate"
    L2_LARGE_DEVIATION = "l2_large_deviation"
    BFORM_MODERATE = "bform_moderate"
    BFORM_LARGE_DEVIATION = "bform_large_deviation"
    RESCALED = "rescaled"
    CONSTRAINED = "constrained"
    SUBPROJECTOR = "subprojector"
    BERNSTEIN = "bernstein"
    BARAUD = "baraud"


@dataclass(frozen=True)
class MomentProfile:
    nu0: float = 1.0
    g: float = math.inf

    def __post_init__(self):
        if not self.nu0 >= 1.0:
            raise BadArgs(f"nu0 must be >= 1, got {self.nu0}")
        if not self.g > 0:
            raise BadArgs(f"moment radius g must be positive, got {self.g}")

    def normalized(self) -> "MomentProfile":
        return MomentProfile(1.0, self.nu0 * self.g)


@dataclass(frozen=True)
class CriticalQuantities:
    w0: float
    w_c: float
    mu_c: float
    y_c: float
    x_c: float
    g_c: float


@dataclass(frozen=True)
class TailBound:
    """An evaluated deviation bound ``P(statistic > threshold) <= prob_bound``.

    ``squared`` says whether ``threshold`` applies to a squared norm or to the
    norm itself. ``prob_bound`` is not clamped to 1; use :attr:`clamped`.
    ``details`` carries alternative forms of the same bound.
    """

    threshold: float
    prob_bound: float
    regime: Regime
    source: Source
    squared: bool = True
    details: Dict[str, float] = field(default_factory=dict, compare=False)

    @property
    def clamped(self) -> float:
        return min(1.0, self.prob_bound)

    def as_row(self) -> dict:
        return {
            "threshold": self.threshold,
            "prob_bound": self.prob_bound,
            "regime": self.regime.value,
            "source": self.source.value,
        }


GLike = Union[float, MomentProfile]


def _reduce(g: GLike) -> Tuple[float, float]:
    """Return ``(g, nu0)`` in reduced coordinates where ``nu0 = 1``."""
    if isinstance(g, MomentProfile):
        return g.nu0 * g.g, g.nu0
    g = float(g)
    if not g > 0:
        raise BadArgs(f"moment radius g must be positive, got {g}")
    return g, 1.0


def nu0_reduce(profile: MomentProfile, threshold_y: float) -> Tuple[MomentProfile, float]:
    return profile.normalized(), threshold_y / profile.nu0


# ---------------------------------------------------------------------------
# Gaussian baseline


def phi(t: float) -> float:
    if t < 0:
        raise NegativeArgument(f"phi needs t >= 0, got {t}")
    return t - math.log1p(t)


def phi_inverse(u: float) -> float:
    if u < 0:
        raise NegativeArgument(f"phi_inverse needs u >= 0, got {u}")
    if u == 0:
        return 0.0
    hi = u + 2.0 + 2.0 * math.sqrt(u)
    return bisect_monotone(
        lambda t: phi(t) - u,
        0.0,
        hi,
        atol=1e-12 * max(1.0, u),
        fprime=lambda t: t / (1.0 + t),
    )


def _check_p(p) -> int:
    if isinstance(p, bool) or int(p) != p or p < 1:
        raise BadArgs(f"dimension p must be a positive integer, got {p!r}")
    return int(p)


def _check_x(x: float) -> float:
    x = float(x)
    if not (x > 0 and math.isfinite(x)):
        raise BadArgs(f"deviation level x must be positive and finite, got {x}")
    return x


def _kappa_deviation(x: float, p: float) -> Tuple[float, Regime]:
    """``sqrt(kappa x p) v (kappa x)`` with the branch split at ``x = p/kappa``."""
    if x <= p / KAPPA:
        return math.sqrt(KAPPA * x * p), Regime.SUB_GAUSSIAN
    return KAPPA * x, Regime.SUB_EXPONENTIAL


def _bform_deviation(x: float, v: float, a_star: float = 1.0) -> Tuple[float, Regime]:
    """``(2 v sqrt(x)) v (6 a* x)``; the branches cross at ``x = v^2 / (9 a*^2)``."""
    root = 2.0 * v * math.sqrt(x)
    lin = 6.0 * a_star * x
    if root >= lin:
        return root, Regime.SUB_GAUSSIAN
    return lin, Regime.SUB_EXPONENTIAL


def gaussian_tail(p: int, u: float) -> TailBound:
    p = _check_p(p)
    if not u > 0:
        raise BadArgs(f"u must be positive, got {u}")
    bound = math.exp(-0.5 * p * phi(u / p))
    regime = Regime.SUB_GAUSSIAN if u <= p else Regime.SUB_EXPONENTIAL
    return TailBound(p + u, bound, regime, Source.GAUSSIAN_L2)


def gaussian_quantile(p: int, x: float) -> TailBound:
    p = _check_p(p)
    x = _check_x(x)
    dev, regime = _kappa_deviation(x, p)
    return TailBound(p + dev, math.exp(-x), regime, Source.GAUSSIAN_L2)


def gaussian_bform_quantile(spec: QuadFormSpec, x: float) -> TailBound:
    x = _check_x(x)
    dev, regime = _bform_deviation(x, spec.v, spec.lambda_star)
    return TailBound(spec.p_eff + dev, math.exp(-x), regime, Source.GAUSSIAN_BFORM)


# ---------------------------------------------------------------------------
# critical quantities


def _wc_map(w: float) -> float:
    return w * (1.0 + w) / math.sqrt(1.0 + w * w)


def _wc_map_prime(w: float) -> float:
    return (1.0 + 2.0 * w + w**3) / (1.0 + w * w) ** 1.5


def solve_w_c(g: float, p_eff: float) -> float:
    """Solve ``w (1 + w) / sqrt(1 + w^2) = g / sqrt(p_eff)`` for ``w``.

    The left side is strictly increasing and the root lies in
    ``[w0 / sqrt(2), w0]`` with ``w0 = g / sqrt(p_eff)``.
    """
    if not (math.isfinite(g) and math.isfinite(p_eff)):
        raise NonFinite("solve_w_c needs finite g and p_eff; g = inf is the Gaussian limit")
    if not (g > 0 and p_eff > 0):
        raise BadArgs(f"need g > 0 and p_eff > 0, got g={g}, p_eff={p_eff}")
    w0 = g / math.sqrt(p_eff)
    return bisect_monotone(
        lambda w: _wc_map(w) - w0,
        w0 / math.sqrt(2.0),
        w0,
        atol=1e-12,
        fprime=_wc_map_prime,
    )


def critical_quantities_l2(g: float, p: int) -> CriticalQuantities:
    p = _check_p(p)
    w0 = g / math.sqrt(p)
    w = solve_w_c(g, p)
    w2 = w * w
    mu_c = w2 / (1.0 + w2)
    y_c = math.sqrt((1.0 + w2) * p)
    x_c = 0.5 * p * (w2 - math.log1p(w2))
    g_c = g - math.sqrt(mu_c * p)
    g_c_alt = g * w / (1.0 + w)
    if not math.isclose(g_c, g_c_alt, rel_tol=1e-9, abs_tol=1e-300):
        raise ArithmeticError(f"g_c forms disagree: {g_c!r} vs {g_c_alt!r}")
    return CriticalQuantities(w0, w, mu_c, y_c, x_c, g_c)


def normalize_lambda(spec: QuadFormSpec) -> Tuple[QuadFormSpec, float]:
    lam = spec.lambda_star
    if not lam > 0:
        raise ZeroMatrix("B^2 has no positive eigenvalue")
    if lam == 1.0:
        return spec, 1.0
    return quadform_spec(spec.spectrum.scaled(1.0 / lam)), lam


def _require_normalized(spec: QuadFormSpec) -> None:
    if abs(spec.lambda_star - 1.0) > 1e-12:
        raise NotNormalized(f"lambda_star = {spec.lambda_star!r}; call normalize_lambda first")


def critical_quantities_bform(g: float, spec: QuadFormSpec) -> CriticalQuantities:
    _require_normalized(spec)
    p = spec.p_eff
    w0 = g / math.sqrt(p)
    w = solve_w_c(g, p)
    w2 = w * w
    mu_c = min(w2 / (1.0 + w2), MU_CAP)
    y_c2 = (1.0 + w2) * p
    x_c = 0.5 * (mu_c * y_c2 + log_det_complement(spec.spectrum, mu_c))
    g_c = g - math.sqrt(mu_c * p)
    return CriticalQuantities(w0, w, mu_c, math.sqrt(y_c2), x_c, g_c)


def _zc_threshold(cq: CriticalQuantities, x: float) -> float:
    return (cq.y_c + 2.0 * (x - cq.x_c) / cq.g_c) ** 2


# ---------------------------------------------------------------------------
# l2 norm


def l2_quantile(g: GLike, p: int, x: float) -> TailBound:
    """Threshold ``z`` with ``P(||xi||^2 >= z)`` bounded, by zone of ``x``.

    Requires ``g^2 >= p`` (in reduced coordinates). With ``g = inf`` the
    moderate-deviation zone is unbounded and the bound is ``2 exp(-x)``.
    """
    p = _check_p(p)
    x = _check_x(x)
    g, nu0 = _reduce(g)
    scale = nu0 * nu0
    if math.isinf(g):
        dev, regime = _kappa_deviation(x, p)
        return TailBound(scale * (p + dev), 2.0 * math.exp(-x), regime, Source.L2_MODERATE)
    # g = sqrt(p) itself must pass despite roundoff in the square
    if g * g < p * (1.0 - 1e-12):
        raise GTooSmall(
            f"g^2 >= p required for the l2 quantile bound (g^2 = {g * g:.6g}, p = {p})"
        )
    cq = critical_quantities_l2(g, p)
    if x <= cq.x_c:
        dev, regime = _kappa_deviation(x, p)
        bound = 2.0 * math.exp(-x) + SLICING_CONST * math.exp(-cq.x_c)
        return TailBound(scale * (p + dev), bound, regime, Source.L2_MODERATE,
                         details={"x_c": cq.x_c})
    return TailBound(
        scale * _zc_threshold(cq, x),
        SLICING_CONST * math.exp(-x),
        Regime.LARGE_DEVIATION,
        Source.L2_LARGE_DEVIATION,
        details={"x_c": cq.x_c},
    )


def l2_large_dev_tail(g: GLike, p: int, y: float, mu0: Optional[float] = None) -> TailBound:
    """Bound on ``P(||xi|| > y)`` for ``y`` past the truncation radius.

    ``prob_bound`` is the sharp form ``8.4 exp(-g0 y/2) (1 - g0/y)^(-p/2)``;
    ``details['linearized']`` is its linear-in-``y`` relaxation anchored at
    ``y0``. ``details['log_prob']`` and ``details['log_linearized']`` hold the
    natural logs, which stay informative after the bounds underflow to zero.
    """
    p = _check_p(p)
    g, nu0 = _reduce(g)
    if math.isinf(g):
        raise NonFinite("g = inf: the large-deviation zone is empty")
    y = float(y) / nu0
    if mu0 is None:
        mu0 = critical_quantities_l2(g, p).mu_c
    if not (0.0 < mu0 < 1.0) or mu0 * p >= g * g:
        raise MuInvalid(f"need 0 < mu0 < 1 and mu0 * p < g^2, got mu0={mu0}")
    y0 = g / mu0 - math.sqrt(p / mu0)
    g0 = g - math.sqrt(mu0 * p)
    # y0 carries roundoff from two different expressions; allow a few ulps.
    if y < y0 * (1.0 - 1e-14):
        raise YBelowCritical(f"y = {y:.6g} is below the critical radius {y0:.6g}")
    y = max(y, y0)
    log_sharp = math.log(SLICING_CONST) - 0.5 * g0 * y - 0.5 * p * math.log1p(-g0 / y)
    x0 = 0.5 * (mu0 * y0 * y0 + p * math.log1p(-mu0))
    log_linear = math.log(SLICING_CONST) - x0 - 0.5 * g0 * (y - y0)
    sharp, linear = math.exp(log_sharp), math.exp(log_linear)
    return TailBound(
        y * nu0,
        sharp,
        Regime.LARGE_DEVIATION,
        Source.L2_LARGE_DEVIATION,
        squared=False,
        details={"linearized": linear, "x0": x0, "y0": y0 * nu0, "g0": g0,
                 "log_prob": log_sharp, "log_linearized": log_linear},
    )


# ---------------------------------------------------------------------------
# general quadratic form


def bform_quantile(g: GLike, spec: QuadFormSpec, x: float) -> TailBound:
    """Threshold for ``||B xi||^2``; needs ``g^2 >= 2 p`` after normalizing ``lambda_max(B^2)`` to 1.

    The moderate-zone threshold is ``p + (2 v sqrt(x)) v (6 x)``, so the regime
    tag switches where the two branches cross, at ``x = v^2 / 9``.
    """
    x = _check_x(x)
    g, nu0 = _reduce(g)
    norm, lam = normalize_lambda(spec)
    scale = nu0 * nu0 * lam
    if math.isinf(g):
        dev, regime = _bform_deviation(x, norm.v)
        return TailBound(scale * (norm.p_eff + dev), 2.0 * math.exp(-x), regime,
                         Source.BFORM_MODERATE)
    if g * g < 2.0 * norm.p_eff * (1.0 - 1e-12):
        raise GTooSmall(
            "g^2 >= 2 p required for the quadratic-form quantile bound "
            f"(g^2 = {g * g:.6g}, p = tr(B^2)/lambda_max = {norm.p_eff:.6g})"
        )
    cq = critical_quantities_bform(g, norm)
    if x <= cq.x_c:
        dev, regime = _bform_deviation(x, norm.v)
        bound = 2.0 * math.exp(-x) + SLICING_CONST * math.exp(-cq.x_c)
        return TailBound(scale * (norm.p_eff + dev), bound, regime, Source.BFORM_MODERATE,
                         details={"x_c": cq.x_c})
    return TailBound(
        scale * _zc_threshold(cq, x),
        SLICING_CONST * math.exp(-x),
        Regime.LARGE_DEVIATION,
        Source.BFORM_LARGE_DEVIATION,
        details={"x_c": cq.x_c},
    )


def bform_large_dev_tail(g: GLike, spec: QuadFormSpec, y: float) -> TailBound:
    """Bound on ``P(||B xi|| > y)`` for ``y >= y_c`` (``y`` on the original scale).

    ``details['linearized']`` is ``8.4 exp(-x_c - g_c (y - y_c)/2)``. The
    determinant form is valid from ``y0 = g_c / mu_c``, which equals ``y_c``
    unless ``mu_c`` hit its 2/3 cap; below ``y0`` only the linearized form is
    available and ``details['sharp']`` is NaN. ``details['log_prob']``,
    ``details['log_sharp']`` and ``details['log_linearized']`` hold natural logs.
    """
    g, nu0 = _reduce(g)
    if math.isinf(g):
        raise NonFinite("g = inf: the large-deviation zone is empty")
    norm, lam = normalize_lambda(spec)
    yn = float(y) / (nu0 * math.sqrt(lam))
    cq = critical_quantities_bform(g, norm)
    if yn < cq.y_c * (1.0 - 1e-14):
        raise YBelowCritical(f"y = {y:.6g} is below the critical radius")
    yn = max(yn, cq.y_c)
    log_linear = math.log(SLICING_CONST) - cq.x_c - 0.5 * cq.g_c * (yn - cq.y_c)
    y0 = cq.g_c / cq.mu_c
    log_sharp = math.nan
    if yn >= y0 * (1.0 - 1e-14):
        yy = max(yn, y0)
        ld = log_det_complement(norm.spectrum, cq.g_c / yy)
        log_sharp = math.log(SLICING_CONST) - 0.5 * cq.g_c * yy - 0.5 * ld
    log_prob = log_linear if math.isnan(log_sharp) else log_sharp
    linear, sharp = math.exp(log_linear), math.exp(log_sharp)
    return TailBound(
        yn * nu0 * math.sqrt(lam),
        math.exp(log_prob),
        Regime.LARGE_DEVIATION,
        Source.BFORM_LARGE_DEVIATION,
        squared=False,
        details={"linearized": linear, "sharp": sharp, "y_c": cq.y_c, "x_c": cq.x_c,
                 "g_c": cq.g_c, "y0": y0, "log_prob": log_prob, "log_sharp": log_sharp,
                 "log_linearized": log_linear},
    )


# ---------------------------------------------------------------------------
# rescaled vectors


def rescaled_spec(V0, D0) -> QuadFormSpec:
    """Spectrum of ``B^2 = D0^-1 V0^2 D0^-1``.

    With ``M = D0^-1 V0`` the statistic is ``||M xi||^2``; the eigenvalues of
    ``B^2 = M M'`` are the squared singular values of ``M``, and the basis kept
    is that of ``M' M`` so that ``||M xi||^2 = sum_i a_i (u_i' xi)^2``.
    """
    V0 = V0 if isinstance(V0, SymmetricMatrix) else symmetrize_and_validate(V0)
    D0 = D0 if isinstance(D0, SymmetricMatrix) else symmetrize_and_validate(D0)
    if V0.dim != D0.dim:
        raise BadArgs(f"V0 is {V0.dim}x{V0.dim} but D0 is {D0.dim}x{D0.dim}")
    try:
        chol = np.linalg.cholesky(D0.entries)
    except np.linalg.LinAlgError as exc:
        raise D0NotPD("D0 must be positive definite") from exc
    if np.min(np.linalg.eigvalsh(V0.entries)) < -1e-10 * max(1.0, np.abs(V0.entries).max()):
        raise BadArgs("V0 must be positive semidefinite")
    M = cho_solve((chol, True), V0.entries)
    _, s, vt = np.linalg.svd(M)
    return quadform_spec(Spectrum.from_values(s**2, basis=vt.T))


def rescaled_bound(V0, D0, g: GLike, x: float) -> TailBound:
    """Quantile bound for ``||D0^-1 zeta||^2`` where ``V0^-1 zeta`` obeys the moment condition."""
    tb = bform_quantile(g, rescaled_spec(V0, D0), x)
    return TailBound(tb.threshold, tb.prob_bound, tb.regime, Source.RESCALED, details=tb.details)
