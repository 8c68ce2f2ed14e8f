"""The two imaging applications and their quality metrics.

Sparse wavelet completion: recover an image from a random subset of its
pixels by minimizing

    (1/(2 rho)) || M (B a) - y ||^2 + sum_i |a_i|^p

over Haar coefficients a (B is the orthonormal synthesis map, M the
sampling mask).  Deblurring with a nonconvex gradient prior, written in
half quadratic three block form over (u, v_h, v_v):

    (1/(2 rho)) || k * u - y ||^2 + ||v_h||_p^p + ||v_v||_p^p
      + box(u) + (1/(2 eta)) (||D_h u - v_h||^2 + ||D_v u - v_v||^2)

Both builders return a SplitProblem plus the domain plumbing (initial
point, image extraction, reconstruction error, denoiser adapters).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .baselines import estimate_lipschitz
from .core import BlockVector, SeededRng, gaussian_noise
from .errors import DimensionError, DomainError
from .geometry import DiagonalMahalanobis
from .operators import (
    CircularConv,
    ConvKernel,
    FiniteDiff,
    HaarWavelet,
    Mask,
)
from .problem import SplitProblem
from .prox import BoxIndicator, LpPower
from .solver import DenoiserOp

__all__ = [
    "QualityReport",
    "psnr",
    "ssim",
    "quality",
    "random_mask",
    "masked_observation",
    "blurred_observation",
    "CompletionProblem",
    "build_completion",
    "DeblurProblem",
    "build_deblur",
]

PSNR_CAP = 99.0


def psnr(x: np.ndarray, ref: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal to noise ratio in dB, capped at 99 for exact matches."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise DimensionError("psnr: shapes %s and %s differ" % (x.shape, ref.shape))
    if peak <= 0:
        raise DomainError("peak must be positive")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(peak * peak / mse), PSNR_CAP)


def ssim(x: np.ndarray, ref: np.ndarray, peak: float = 1.0, window: int = 8) -> float:
    """Mean structural similarity over all sliding 8x8 windows.

    Uniform window statistics with the standard stabilizing constants
    (0.01 peak)^2 and (0.03 peak)^2.
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise DimensionError("ssim: shapes %s and %s differ" % (x.shape, ref.shape))
    if x.ndim != 2:
        raise DimensionError("ssim expects 2-D images")
    if min(x.shape) < window:
        raise DimensionError(
            "image %s smaller than the %dx%d window" % ((x.shape,), window, window)
        )
    if peak <= 0:
        raise DomainError("peak must be positive")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    win = (window, window)
    wx = np.lib.stride_tricks.sliding_window_view(x, win)
    wr = np.lib.stride_tricks.sliding_window_view(ref, win)
    mu_x = wx.mean(axis=(2, 3))
    mu_r = wr.mean(axis=(2, 3))
    var_x = (wx * wx).mean(axis=(2, 3)) - mu_x * mu_x
    var_r = (wr * wr).mean(axis=(2, 3)) - mu_r * mu_r
    cov = (wx * wr).mean(axis=(2, 3)) - mu_x * mu_r
    num = (2 * mu_x * mu_r + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_r * mu_r + c1) * (var_x + var_r + c2)
    return float(np.mean(num / den))


@dataclass
class QualityReport:
    psnr: float
    ssim: float


def quality(x: np.ndarray, ref: np.ndarray, peak: float = 1.0) -> QualityReport:
    return QualityReport(psnr=psnr(x, ref, peak), ssim=ssim(x, ref, peak))


def random_mask(rng: SeededRng, shape, missing: float) -> np.ndarray:
    """Boolean keep-mask with an exact count of missing pixels."""
    if not (0.0 <= missing < 1.0):
        raise DomainError("missing fraction must lie in [0, 1), got %g" % missing)
    H, W = shape
    total = H * W
    n_missing = int(round(missing * total))
    keep = np.ones(total, dtype=bool)
    drop = rng.permutation(total)[:n_missing]
    keep[drop] = False
    return keep.reshape(H, W)


def masked_observation(gt: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Zero out the missing pixels of a ground truth image."""
    return np.where(np.asarray(keep, dtype=bool), np.asarray(gt, dtype=np.float64), 0.0)


def blurred_observation(
    gt: np.ndarray, kernel: ConvKernel, sigma: float, rng: Optional[SeededRng] = None
) -> np.ndarray:
    """Circularly blur and add Gaussian noise (sigma = 0 needs no rng)."""
    conv = CircularConv(kernel, gt.shape)
    y = conv.forward(np.asarray(gt, dtype=np.float64))
    if sigma > 0:
        if rng is None:
            raise DomainError("rng required for sigma > 0")
        y = y + gaussian_noise(rng, y.shape, sigma)
    return y


def _log10_rel(a: np.ndarray, b: np.ndarray) -> float:
    num = float(np.sqrt(np.sum((a - b) ** 2)))
    den = float(np.sqrt(np.sum(b * b)))
    rel = num if den <= 1e-12 else num / den
    return math.log10(max(rel, 1e-300))


@dataclass
class CompletionProblem:
    """Sparse coding completion instance over Haar coefficients."""

    problem: SplitProblem
    wavelet: HaarWavelet
    mask: Mask
    y: np.ndarray
    rho_fidelity: float
    p: float
    mu: float

    def initial_point(self) -> BlockVector:
        """Analysis coefficients of the zero filled observation."""
        return BlockVector([self.wavelet.adjoint(self.y)], labels=("a",))

    def image_of(self, x: BlockVector) -> np.ndarray:
        return self.wavelet.forward(x.blocks[0])

    def rec_error_fn(self, gt_image: np.ndarray):
        def rec(x: BlockVector) -> float:
            return _log10_rel(self.image_of(x), gt_image)

        return rec

    def denoiser_op(self, image_denoiser) -> DenoiserOp:
        """Run an image denoiser inside the coefficient domain.

        The variable lives in the orthonormal wavelet domain, so the
        learned operator is conjugated: synthesize, denoise, analyze.
        """
        wav = self.wavelet

        def apply(x: BlockVector) -> BlockVector:
            img = wav.forward(x.blocks[0])
            return BlockVector([wav.adjoint(image_denoiser(img))], x.labels)

        name = getattr(image_denoiser, "name", "custom")
        return DenoiserOp(name, apply, {"domain": "wavelet"})


def build_completion(
    y: np.ndarray,
    keep: np.ndarray,
    rho_fidelity: float = 0.02,
    p: float = 0.8,
    mu: float = 0.01,
    levels: int = 3,
    rng: Optional[SeededRng] = None,
) -> CompletionProblem:
    """Assemble the completion problem for a masked observation y.

    y is forced to zero on missing pixels so the stored observation
    satisfies y = M y exactly.  The Lipschitz modulus of the smooth term
    is estimated by power iteration on a' -> B' M B a / rho.
    """
    if rho_fidelity <= 0:
        raise DomainError("rho_fidelity must be positive")
    y = np.asarray(y, dtype=np.float64)
    mask = Mask(keep)
    if y.shape != mask.in_shape:
        raise DimensionError("observation and mask shapes differ")
    y = mask.forward(y)
    wav = HaarWavelet(y.shape, levels)

    def f_value(x: BlockVector) -> float:
        r = mask.forward(wav.forward(x.blocks[0])) - y
        return 0.5 / rho_fidelity * float(np.sum(r * r))

    def f_grad_full(x: BlockVector) -> BlockVector:
        r = mask.forward(wav.forward(x.blocks[0])) - y
        return BlockVector([wav.adjoint(mask.adjoint(r)) / rho_fidelity], x.labels)

    def f_grad_block(x: BlockVector, n: int) -> np.ndarray:
        return f_grad_full(x).blocks[0]

    def f_prox(x: BlockVector, sigma: float) -> BlockVector:
        # exact through the isometry: the quadratic decouples pixelwise in
        # the image domain, (M/rho + I/sigma) w = M y / rho + (B a) / sigma
        img = wav.forward(x.blocks[0])
        denom = np.where(mask.keep, 1.0 / rho_fidelity + 1.0 / sigma, 1.0 / sigma)
        numer = np.where(mask.keep, y / rho_fidelity, 0.0) + img / sigma
        return BlockVector([wav.adjoint(numer / denom)], x.labels)

    if rng is None:
        rng = SeededRng(0)

    def normal_op(x: BlockVector) -> BlockVector:
        r = mask.forward(wav.forward(x.blocks[0]))
        return BlockVector([wav.adjoint(r) / rho_fidelity], x.labels)

    template = BlockVector([np.zeros(y.shape)], labels=("a",))
    L = estimate_lipschitz(normal_op, template, rng.substream("lipschitz"))

    problem = SplitProblem(
        f_value=f_value,
        f_grad_block=f_grad_block,
        g=(LpPower(p),),
        geometry=DiagonalMahalanobis((mu,)),
        lipschitz=L,
        f_grad_full=f_grad_full,
        f_prox=f_prox,
        labels=("a",),
    )
    return CompletionProblem(
        problem=problem,
        wavelet=wav,
        mask=mask,
        y=y,
        rho_fidelity=rho_fidelity,
        p=p,
        mu=mu,
    )


_DEBLUR_ROLES = ("u", "vh", "vv")


@dataclass
class DeblurProblem:
    """Three block half quadratic deblurring instance."""

    problem: SplitProblem
    conv: CircularConv
    y: np.ndarray
    rho_fidelity: float
    eta: float
    p: float
    order: tuple

    def initial_point(self) -> BlockVector:
        """Observed image (clipped into the box) and its finite differences."""
        from .operators import grad_h, grad_v

        u0 = np.clip(self.y, 0.0, 1.0)
        blocks = {"u": u0, "vh": grad_h(u0), "vv": grad_v(u0)}
        return BlockVector([blocks[r] for r in self.order], labels=self.order)

    def _u_index(self) -> int:
        return self.order.index("u")

    def image_of(self, x: BlockVector) -> np.ndarray:
        return x.blocks[self._u_index()]

    def rec_error_fn(self, gt_image: np.ndarray):
        def rec(x: BlockVector) -> float:
            return _log10_rel(self.image_of(x), gt_image)

        return rec

    def denoiser_op(self, image_denoiser) -> DenoiserOp:
        """Apply an image denoiser to the image block, identity elsewhere."""
        u_idx = self._u_index()

        def apply(x: BlockVector) -> BlockVector:
            return x.with_block(u_idx, image_denoiser(x.blocks[u_idx]))

        name = getattr(image_denoiser, "name", "custom")
        return DenoiserOp(name, apply, {"block": "u"})


def build_deblur(
    y: np.ndarray,
    kernel: ConvKernel,
    rho_fidelity: float = 0.005,
    eta: float = 0.02,
    p: float = 0.8,
    weights: Sequence[float] = (0.01, 0.001, 0.001),
    block_order: Sequence[str] = _DEBLUR_ROLES,
    rng: Optional[SeededRng] = None,
) -> DeblurProblem:
    """Assemble the deblurring problem for a blurry observation y.

    weights are the Bregman geometry weights for (u, v_h, v_v) in role
    order regardless of block_order.  The Lipschitz modulus covers the
    full coupled quadratic (blur plus both difference couplings).
    """
    if rho_fidelity <= 0 or eta <= 0:
        raise DomainError("rho_fidelity and eta must be positive")
    order = tuple(block_order)
    if sorted(order) != sorted(_DEBLUR_ROLES):
        raise DomainError(
            "block_order must be a permutation of %s, got %s" % (_DEBLUR_ROLES, order)
        )
    y = np.asarray(y, dtype=np.float64)
    conv = CircularConv(kernel, y.shape)
    dh = FiniteDiff(y.shape, axis=1)
    dv = FiniteDiff(y.shape, axis=0)
    idx = {role: order.index(role) for role in _DEBLUR_ROLES}
    role_weights = dict(zip(_DEBLUR_ROLES, (float(w) for w in weights)))

    def parts(x: BlockVector):
        return x.blocks[idx["u"]], x.blocks[idx["vh"]], x.blocks[idx["vv"]]

    def f_value(x: BlockVector) -> float:
        u, vh, vv = parts(x)
        r = conv.forward(u) - y
        rh = dh.forward(u) - vh
        rv = dv.forward(u) - vv
        return float(
            0.5 / rho_fidelity * np.sum(r * r)
            + 0.5 / eta * (np.sum(rh * rh) + np.sum(rv * rv))
        )

    def f_grad_full(x: BlockVector) -> BlockVector:
        u, vh, vv = parts(x)
        r = conv.forward(u) - y
        rh = dh.forward(u) - vh
        rv = dv.forward(u) - vv
        gu = conv.adjoint(r) / rho_fidelity + (dh.adjoint(rh) + dv.adjoint(rv)) / eta
        out = [None, None, None]
        out[idx["u"]] = gu
        out[idx["vh"]] = -rh / eta
        out[idx["vv"]] = -rv / eta
        return BlockVector(out, x.labels)

    def f_grad_block(x: BlockVector, n: int) -> np.ndarray:
        u, vh, vv = parts(x)
        role = order[n]
        if role == "u":
            r = conv.forward(u) - y
            rh = dh.forward(u) - vh
            rv = dv.forward(u) - vv
            return conv.adjoint(r) / rho_fidelity + (dh.adjoint(rh) + dv.adjoint(rv)) / eta
        if role == "vh":
            return (vh - dh.forward(u)) / eta
        return (vv - dv.forward(u)) / eta

    def hessian(x: BlockVector) -> BlockVector:
        u, vh, vv = parts(x)
        rh = dh.forward(u) - vh
        rv = dv.forward(u) - vv
        gu = conv.adjoint(conv.forward(u)) / rho_fidelity + (
            dh.adjoint(rh) + dv.adjoint(rv)
        ) / eta
        out = [None, None, None]
        out[idx["u"]] = gu
        out[idx["vh"]] = -rh / eta
        out[idx["vv"]] = -rv / eta
        return BlockVector(out, x.labels)

    if rng is None:
        rng = SeededRng(0)
    template = BlockVector([np.zeros(y.shape)] * 3, labels=order)
    L = estimate_lipschitz(hessian, template, rng.substream("lipschitz"))

    g_by_role = {
        "u": BoxIndicator(0.0, 1.0),
        "vh": LpPower(p),
        "vv": LpPower(p),
    }
    geometry = DiagonalMahalanobis(tuple(role_weights[r] for r in order))
    problem = SplitProblem(
        f_value=f_value,
        f_grad_block=f_grad_block,
        g=tuple(g_by_role[r] for r in order),
        geometry=geometry,
        lipschitz=L,
        f_grad_full=f_grad_full,
        f_prox=None,
        labels=order,
    )
    return DeblurProblem(
        problem=problem,
        conv=conv,
        y=y,
        rho_fidelity=rho_fidelity,
        eta=eta,
        p=p,
        order=order,
    )
