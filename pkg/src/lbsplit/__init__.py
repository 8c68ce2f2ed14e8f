"""Safeguarded operator splitting with a pluggable data-driven step.

The package solves composite problems min f(x) + sum_n g_n(x_n) by block
proximal iterations that may consult a learned operator, falling back to
plain model based steps whenever a residual optimality certificate
rejects the learned proposal.  Classical splitting baselines, a from
scratch residual denoiser and two imaging applications are included.
"""

__version__ = "0.1.0"

from .core import BlockVector, SeededRng, axpy, block_norm2, gaussian_noise, inner
from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    InputError,
    NumericalError,
    SolverFault,
    TrainingFault,
)
from .geometry import DiagonalMahalanobis, bregman, bregman_grad_x
from .problem import SplitProblem
from .prox import BoxIndicator, LpPower, lp_threshold, prox_lp, prox_lp_scalar
from .solver import DenoiserOp, LbsConfig, lbs_solve, roc_check, t_f_step, ucus
from .baselines import (
    SolverConfig,
    admm_solve,
    drs_solve,
    estimate_lipschitz,
    fbs_solve,
    fista_solve,
    km_step,
    prs_solve,
)
from .trace import SolverTrace, trace_diagnostics
from .imaging import QualityReport, build_completion, build_deblur, psnr, ssim

__all__ = [
    "__version__",
    "BlockVector",
    "SeededRng",
    "axpy",
    "block_norm2",
    "gaussian_noise",
    "inner",
    "ConfigError",
    "DimensionError",
    "DomainError",
    "InputError",
    "NumericalError",
    "SolverFault",
    "TrainingFault",
    "DiagonalMahalanobis",
    "bregman",
    "bregman_grad_x",
    "SplitProblem",
    "BoxIndicator",
    "LpPower",
    "lp_threshold",
    "prox_lp",
    "prox_lp_scalar",
    "DenoiserOp",
    "LbsConfig",
    "lbs_solve",
    "roc_check",
    "t_f_step",
    "ucus",
    "SolverConfig",
    "admm_solve",
    "drs_solve",
    "estimate_lipschitz",
    "fbs_solve",
    "fista_solve",
    "km_step",
    "prs_solve",
    "SolverTrace",
    "trace_diagnostics",
    "QualityReport",
    "build_completion",
    "build_deblur",
    "psnr",
    "ssim",
]
