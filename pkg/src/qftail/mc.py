"""Monte Carlo certification of the deviation bounds.

Noise models are chosen so that they provably satisfy the moment conditions:

* ``gaussian``: equality in the exponential moment condition, ``g = inf``;
* ``rademacher``: ``log cosh t <= t^2/2`` per coordinate, ``g = inf``;
* ``centered-exp``: ``X - 1`` with ``X ~ Exp(1)``, which satisfies the
  Bernstein condition with ``sigma = 1, c = 1``.

Samples come in fixed-size chunks; chunk ``k`` is drawn from Philox substream
``k`` of the model seed, so results do not depend on how chunks are spread
over workers.
"""
from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterator, List, Optional

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import BadArgs, MuTooLarge, SpecMissing
from .matrix import QuadFormSpec, Spectrum, quadform_spec

CHUNK_ROWS = 50_000
MIN_TAIL_SAMPLES = 1000
# substream id reserved for drawing audit directions
_AUDIT_STREAM = 2**31


class NoiseKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    CENTERED_EXP = "centered-exp"


class Statistic(str, enum.Enum):
    L2_SQ = "L2Sq"
    BFORM_SQ = "BFormSq"
    PROJECTED_SQ = "ProjectedSq"


class Verdict(str, enum.Enum):
    CERTIFIED = "Certified"
    INCONCLUSIVE = "Inconclusive"
    VIOLATED = "Violated"


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind
    dim: int
    seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.dim < 1:
            raise BadArgs(f"dim must be >= 1, got {self.dim}")
        if not 0 <= self.seed < 2**64:
            raise BadArgs(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class McCertificate:
    n_samples: int
    n_exceed: int
    point_estimate: float
    upper_conf: float
    lower_conf: float
    conf_level: float
    theoretical_bound: float
    verdict: Verdict

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


def substream(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))


def _draw(model: NoiseModel, rng: np.random.Generator, rows: int) -> np.ndarray:
    shape = (rows, model.dim)
    if model.kind is NoiseKind.GAUSSIAN:
        x = rng.standard_normal(shape)
    elif model.kind is NoiseKind.RADEMACHER:
        x = rng.integers(0, 2, size=shape, dtype=np.int8).astype(float) * 2.0 - 1.0
    else:
        x = rng.standard_exponential(shape) - 1.0
    if model.scale != 1.0:
        x *= model.scale
    return x


def _chunk_sizes(n: int) -> List[int]:
    full, rest = divmod(n, CHUNK_ROWS)
    return [CHUNK_ROWS] * full + ([rest] if rest else [])


def sample_chunk(model: NoiseModel, n: int, k: int) -> np.ndarray:
    """Chunk ``k`` of the stream of ``n`` vectors."""
    return _draw(model, substream(model.seed, k), _chunk_sizes(n)[k])


def sample_vectors(model: NoiseModel, n: int) -> Iterator[np.ndarray]:
    """Yield the ``n`` sample vectors as consecutive ``(rows, dim)`` chunks."""
    if n < 1:
        raise BadArgs(f"n must be >= 1, got {n}")
    for k, rows in enumerate(_chunk_sizes(n)):
        yield _draw(model, substream(model.seed, k), rows)


def _coords(x: np.ndarray, spec: QuadFormSpec) -> np.ndarray:
    basis = spec.spectrum.basis
    return x if basis is None else x @ basis


def _check_spec_dim(model: NoiseModel, spec: QuadFormSpec) -> None:
    if spec.dim != model.dim:
        raise BadArgs(f"spec has dimension {spec.dim} but the model has {model.dim}")


def statistic_values(x: np.ndarray, statistic: Statistic, spec: Optional[QuadFormSpec] = None,
                     sup_level: Optional[float] = None) -> np.ndarray:
    """Per-row statistic; rows failing the sup-norm constraint on ``B^2 x`` get ``-inf``."""
    statistic = Statistic(statistic)
    if statistic is Statistic.L2_SQ:
        vals = np.einsum("ij,ij->i", x, x)
        if sup_level is not None:
            vals[np.abs(x).max(axis=1) > sup_level] = -np.inf
        return vals
    if spec is None:
        raise SpecMissing(f"statistic {statistic.value} needs a QuadFormSpec")
    a = spec.spectrum.eigenvalues
    y = _coords(x, spec)
    vals = (y * y) @ a
    if sup_level is not None:
        basis = spec.spectrum.basis
        b2x = y * a if basis is None else (y * a) @ basis.T
        vals[np.abs(b2x).max(axis=1) > sup_level] = -np.inf
    return vals


def clopper_pearson(k: int, n: int, conf: float):
    """Exact two-sided binomial interval at level ``conf``."""
    alpha = 1.0 - conf
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def verdict_for(point: float, lower: float, upper: float, bound: float) -> Verdict:
    if lower > bound:
        return Verdict.VIOLATED
    if upper <= bound:
        return Verdict.CERTIFIED
    return Verdict.INCONCLUSIVE


def certify(n_exceed: int, n: int, conf: float, bound: float) -> McCertificate:
    point = n_exceed / n
    lo, hi = clopper_pearson(n_exceed, n, conf)
    return McCertificate(n, n_exceed, point, hi, lo, conf, bound, verdict_for(point, lo, hi, bound))


def estimate_tail(
    model: NoiseModel,
    statistic: Statistic,
    threshold: float,
    n: int,
    *,
    bound: float,
    conf: float = 0.99,
    spec: Optional[QuadFormSpec] = None,
    sup_level: Optional[float] = None,
    workers: int = 1,
) -> McCertificate:
    """Count ``statistic > threshold`` (jointly with the sup-norm constraint if given) and certify against ``bound``."""
    statistic = Statistic(statistic)
    if n < MIN_TAIL_SAMPLES:
        raise BadArgs(f"tail estimation needs n >= {MIN_TAIL_SAMPLES}, got {n}")
    if math.isnan(threshold) or threshold == math.inf:
        raise BadArgs(f"threshold must be finite or -inf, got {threshold}")
    if statistic is not Statistic.L2_SQ:
        if spec is None:
            raise SpecMissing(f"statistic {statistic.value} needs a QuadFormSpec")
        _check_spec_dim(model, spec)
    sizes = _chunk_sizes(n)

    def count(k: int) -> int:
        x = _draw(model, substream(model.seed, k), sizes[k])
        return int(np.count_nonzero(statistic_values(x, statistic, spec, sup_level) > threshold))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            n_exceed = sum(pool.map(count, range(len(sizes))))
    else:
        n_exceed = sum(count(k) for k in range(len(sizes)))
    return certify(n_exceed, n, conf, bound)


def estimate_truncated_mgf(
    model: NoiseModel,
    spec: QuadFormSpec,
    mu: float,
    truncation_radius: float,
    n: int,
):
    """Mean of ``exp(mu ||B xi||^2 / 2) 1{||B^2 xi|| <= radius}`` and its standard error.

    Exponents are shifted by their maximum before exponentiating.
    """
    _check_spec_dim(model, spec)
    if mu * spec.lambda_star >= 1.0:
        raise MuTooLarge(f"mu * lambda_star = {mu * spec.lambda_star:.6g} >= 1")
    a = spec.spectrum.eigenvalues
    parts = []
    for x in sample_vectors(model, n):
        y = _coords(x, spec)
        e = 0.5 * mu * ((y * y) @ a)
        if math.isfinite(truncation_radius):
            e[np.linalg.norm(y * a, axis=1) > truncation_radius] = -np.inf
        parts.append(e)
    e = np.concatenate(parts)
    top = e.max()
    if top == -np.inf:
        return 0.0, 0.0
    w = np.exp(e - top)
    m1 = w.mean()
    var = w.var(ddof=1) if n > 1 else 0.0
    scale = math.exp(top) if top < 709 else math.inf
    return float(scale * m1), float(scale * math.sqrt(var / n))


def log_mean_exp(e: np.ndarray) -> float:
    return float(logsumexp(e) - math.log(e.shape[0]))


def jackknife_log_mean_exp(e: np.ndarray):
    """``log mean exp(e)`` with its leave-one-out jackknife standard error."""
    n = e.shape[0]
    top = e.max()
    w = np.exp(e - top)
    total = w.sum()
    est = top + math.log(total / n)
    loo = top + np.log(np.maximum(total - w, np.finfo(float).tiny) / (n - 1))
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return est, se


@dataclass(frozen=True)
class AuditRow:
    radius: float
    estimate: float
    std_error: float
    bound: float
    flagged: bool


@dataclass(frozen=True)
class AuditReport:
    norm: str
    g: float
    n_samples: int
    rows: List[AuditRow] = field(default_factory=list)

    @property
    def n_flagged(self) -> int:
        return sum(r.flagged for r in self.rows)


def _draw_matrix(model: NoiseModel, n: int) -> np.ndarray:
    return np.concatenate(list(sample_vectors(model, n)), axis=0)


def audit_moment_condition(model: NoiseModel, g: float, n_gamma: int, n_samples: int,
                           norm: str = "l2") -> AuditReport:
    """Check ``log E exp(gamma' xi) <= ||gamma||^2 / 2`` on random directions.

    Directions are uniform on the sphere, rescaled so that the chosen norm
    (``'l2'`` or ``'sup'``) is uniform in ``(0, g]``. A direction is flagged when
    the estimate exceeds the bound by more than three jackknife standard errors.
    """
    if not (0 < g < math.inf):
        raise BadArgs(f"audit needs a finite positive radius, got {g}")
    if norm not in ("l2", "sup"):
        raise BadArgs(f"norm must be 'l2' or 'sup', got {norm!r}")
    rng = substream(model.seed, _AUDIT_STREAM)
    dirs = rng.standard_normal((n_gamma, model.dim))
    if norm == "l2":
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    else:
        dirs /= np.abs(dirs).max(axis=1, keepdims=True)
    radii = g * (1.0 - rng.random(n_gamma))
    x = _draw_matrix(model, n_samples)
    rows = []
    for r, d in zip(radii, dirs):
        gamma = r * d
        est, se = jackknife_log_mean_exp(x @ gamma)
        bound = 0.5 * float(gamma @ gamma)
        rows.append(AuditRow(float(r), est, se, bound, est > bound + 3.0 * se))
    return AuditReport(norm, g, n_samples, rows)


@dataclass(frozen=True)
class MomentCheck:
    mean: float
    variance: float
    p_eff: float
    v_sq: float
    mean_ok: bool
    variance_ok: bool


def mean_variance_identity_check(spec: QuadFormSpec, n: int, seed: int = 0) -> MomentCheck:
    """Gaussian check of ``E ||B xi||^2 = tr B^2`` and ``Var ||B xi||^2 = 2 tr B^4``."""
    model = NoiseModel(NoiseKind.GAUSSIAN, spec.dim, seed)
    a = spec.spectrum.eigenvalues
    q = np.concatenate([(x * x) @ a for x in sample_vectors(model, n)])
    mean = float(q.mean())
    var = float(q.var(ddof=1)) if n > 1 else 0.0
    mean_ok = abs(mean - spec.p_eff) <= 4.0 * math.sqrt(spec.v_sq / n)
    if spec.v_sq == 0:
        var_ok = var == 0.0
    else:
        var_ok = abs(var - spec.v_sq) <= 0.1 * spec.v_sq
    return MomentCheck(mean, var, spec.p_eff, spec.v_sq, mean_ok, var_ok)


def random_subprojector(eigenvalues, seed: int = 0):
    """``Pi = Q diag(eigenvalues) Q'`` for a Haar-random orthogonal ``Q``.

    Returns the matrix and the spectral spec of ``Pi`` (eigenvalues of ``Pi^2``,
    basis ``Q``).
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.min() < 0 or lam.max() > 1:
        raise BadArgs("sub-projector eigenvalues must lie in [0, 1]")
    m = lam.size
    rng = substream(seed, 0)
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    q *= np.sign(np.diag(r))
    Pi = (q * lam) @ q.T
    return 0.5 * (Pi + Pi.T), quadform_spec(Spectrum.from_values(lam**2, basis=q))


def sup_norm_median_fraction(m: int, r_star: float, n: int, seed: int = 0) -> float:
    """Fraction of standard normal ``m``-vectors with sup-norm at most ``r_star``."""
    model = NoiseModel(NoiseKind.GAUSSIAN, m, seed)
    inside = sum(int(np.count_nonzero(np.abs(x).max(axis=1) <= r_star)) for x in sample_vectors(model, n))
    return inside / n
