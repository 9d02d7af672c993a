"""Sharp deviation bounds for quadratic forms of random vectors, with Monte Carlo certification."""
from .bounds import (
    KAPPA,
    SLICING_CONST,
    CriticalQuantities,
    MomentProfile,
    Regime,
    Source,
    TailBound,
    bform_large_dev_tail,
    bform_quantile,
    critical_quantities_bform,
    critical_quantities_l2,
    gaussian_bform_quantile,
    gaussian_quantile,
    gaussian_tail,
    l2_large_dev_tail,
    l2_quantile,
    nu0_reduce,
    phi,
    phi_inverse,
    rescaled_bound,
    rescaled_spec,
    solve_w_c,
)
from .constrained import (
    BernsteinProfile,
    NormConstraint,
    baraud_quantile,
    bernstein_comparison,
    bernstein_quantile,
    constrained_tail,
    solve_z_s,
    subprojector_quantile,
    subprojector_spec,
)
from .errors import DomainError, InputError, QFTailError
from .matrix import QuadFormSpec, Spectrum, SymmetricMatrix, spec_from_eigenvalues, spec_from_matrix
from .mc import McCertificate, NoiseKind, NoiseModel, Statistic, Verdict, estimate_tail
from .regression import DesignModel, effective_sample_size, wilks_critical_values

__version__ = "0.1.0"
