"""Linear maps for the imaging problems.

Masks, circular convolution, forward finite differences and the
orthonormal Haar wavelet transform.  Boundary handling is circular
everywhere, which keeps every map exactly diagonal (or block diagonal)
in the 2-D Fourier basis and makes adjoints cheap and exact.
"""

from __future__ import annotations

import numpy as np

from .core import SeededRng, inner
from .errors import DimensionError, DomainError, InputError

__all__ = [
    "LinearMap",
    "Mask",
    "ConvKernel",
    "CircularConv",
    "FiniteDiff",
    "HaarWavelet",
    "fft2",
    "ifft2",
    "convolve",
    "grad_h",
    "grad_v",
    "grad_h_adj",
    "grad_v_adj",
    "haar_dwt",
    "haar_idwt",
    "load_kernel",
    "save_kernel",
    "adjoint_mismatch",
]


def fft2(x: np.ndarray) -> np.ndarray:
    """2-D discrete Fourier transform (unnormalized forward)."""
    return np.fft.fft2(x)


def ifft2(X: np.ndarray) -> np.ndarray:
    """Inverse 2-D discrete Fourier transform."""
    return np.fft.ifft2(X)


class LinearMap:
    """A linear operator with an explicit adjoint.

    Subclasses set `in_shape` / `out_shape` and implement `_forward` and
    `_adjoint`.  Inputs are shape checked so silent broadcasting bugs
    cannot creep into the solvers.
    """

    in_shape: tuple
    out_shape: tuple

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.in_shape:
            raise DimensionError(
                "%s.forward expects shape %s, got %s"
                % (type(self).__name__, self.in_shape, x.shape)
            )
        return self._forward(x)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != self.out_shape:
            raise DimensionError(
                "%s.adjoint expects shape %s, got %s"
                % (type(self).__name__, self.out_shape, y.shape)
            )
        return self._adjoint(y)

    def __call__(self, x):
        return self.forward(x)

    def _forward(self, x):
        raise NotImplementedError

    def _adjoint(self, y):
        raise NotImplementedError


class Mask(LinearMap):
    """Pointwise sampling mask.  Self adjoint and idempotent.

    `keep` is a boolean array, True where a pixel is observed.
    """

    def __init__(self, keep: np.ndarray):
        keep = np.asarray(keep)
        if keep.dtype != np.bool_:
            keep = keep != 0
        self.keep = keep
        self.in_shape = keep.shape
        self.out_shape = keep.shape

    @property
    def kept_fraction(self) -> float:
        return float(np.mean(self.keep))

    def _forward(self, x):
        return np.where(self.keep, x, 0.0)

    def _adjoint(self, y):
        return np.where(self.keep, y, 0.0)


class ConvKernel:
    """A 2-D convolution kernel with an anchor tap.

    The anchor is the tap that sits on the output pixel; for the usual
    odd-sized point spread functions this is the central tap.  Even side
    lengths are allowed, in which case the anchor rounds down.
    """

    def __init__(self, taps, anchor=None, was_normalized=False):
        taps = np.asarray(taps, dtype=np.float64)
        if taps.ndim != 2:
            raise DimensionError("kernel taps must be 2-D, got ndim=%d" % taps.ndim)
        if taps.size == 0:
            raise DimensionError("kernel taps are empty")
        if anchor is None:
            anchor = (taps.shape[0] // 2, taps.shape[1] // 2)
        self.taps = taps
        self.anchor = (int(anchor[0]), int(anchor[1]))
        self.was_normalized = bool(was_normalized)

    @property
    def shape(self):
        return self.taps.shape

    def normalized(self) -> "ConvKernel":
        """Return a unit-sum copy; raises if the tap sum is numerically zero."""
        s = float(self.taps.sum())
        if abs(s) < 1e-12:
            raise DomainError("kernel tap sum is zero, cannot normalize")
        if abs(s - 1.0) < 1e-12:
            return ConvKernel(self.taps.copy(), self.anchor, self.was_normalized)
        return ConvKernel(self.taps / s, self.anchor, was_normalized=True)

    def otf(self, shape) -> np.ndarray:
        """Optical transfer function: FFT of the kernel embedded on `shape`.

        The taps are placed at the top left corner and rolled so the
        anchor lands on index (0, 0), the circular convolution identity
        position.
        """
        kh, kw = self.taps.shape
        H, W = shape
        if kh > H or kw > W:
            raise DimensionError(
                "kernel %dx%d larger than image %dx%d" % (kh, kw, H, W)
            )
        padded = np.zeros((H, W), dtype=np.float64)
        padded[:kh, :kw] = self.taps
        padded = np.roll(padded, (-self.anchor[0], -self.anchor[1]), axis=(0, 1))
        return fft2(padded)


class CircularConv(LinearMap):
    """Circular convolution with a fixed kernel on a fixed grid.

    Forward multiplies by the transfer function in the Fourier domain;
    the adjoint multiplies by its complex conjugate (circular
    correlation).
    """

    def __init__(self, kernel: ConvKernel, shape):
        self.kernel = kernel
        self.in_shape = tuple(shape)
        self.out_shape = tuple(shape)
        self._otf = kernel.otf(shape)
        self._otf_conj = np.conj(self._otf)

    def _forward(self, x):
        return np.real(ifft2(fft2(x) * self._otf))

    def _adjoint(self, y):
        return np.real(ifft2(fft2(y) * self._otf_conj))


def convolve(kernel: ConvKernel, u: np.ndarray) -> np.ndarray:
    """One-off circular convolution of u with the kernel."""
    return CircularConv(kernel, u.shape).forward(u)


def grad_h(u: np.ndarray) -> np.ndarray:
    """Forward difference along the horizontal axis with wraparound."""
    return np.roll(u, -1, axis=1) - u


def grad_v(u: np.ndarray) -> np.ndarray:
    """Forward difference along the vertical axis with wraparound."""
    return np.roll(u, -1, axis=0) - u


def grad_h_adj(v: np.ndarray) -> np.ndarray:
    """Adjoint of grad_h, the negative horizontal divergence."""
    return np.roll(v, 1, axis=1) - v


def grad_v_adj(v: np.ndarray) -> np.ndarray:
    """Adjoint of grad_v, the negative vertical divergence."""
    return np.roll(v, 1, axis=0) - v


class FiniteDiff(LinearMap):
    """Forward-difference operator along one axis, circular boundary."""

    def __init__(self, shape, axis: int):
        if axis not in (0, 1):
            raise DomainError("axis must be 0 (vertical) or 1 (horizontal)")
        self.axis = axis
        self.in_shape = tuple(shape)
        self.out_shape = tuple(shape)

    def _forward(self, x):
        return np.roll(x, -1, axis=self.axis) - x

    def _adjoint(self, y):
        return np.roll(y, 1, axis=self.axis) - y


def _haar_fwd_1d(a: np.ndarray, axis: int) -> np.ndarray:
    even = np.take(a, range(0, a.shape[axis], 2), axis=axis)
    odd = np.take(a, range(1, a.shape[axis], 2), axis=axis)
    approx = (even + odd) / np.sqrt(2.0)
    detail = (even - odd) / np.sqrt(2.0)
    return np.concatenate([approx, detail], axis=axis)


def _haar_inv_1d(c: np.ndarray, axis: int) -> np.ndarray:
    half = c.shape[axis] // 2
    approx = np.take(c, range(half), axis=axis)
    detail = np.take(c, range(half, c.shape[axis]), axis=axis)
    even = (approx + detail) / np.sqrt(2.0)
    odd = (approx - detail) / np.sqrt(2.0)
    out = np.empty_like(c)
    even_idx = [slice(None)] * c.ndim
    odd_idx = [slice(None)] * c.ndim
    even_idx[axis] = slice(0, None, 2)
    odd_idx[axis] = slice(1, None, 2)
    out[tuple(even_idx)] = even
    out[tuple(odd_idx)] = odd
    return out


def haar_dwt(u: np.ndarray, levels: int) -> np.ndarray:
    """Orthonormal 2-D Haar analysis, `levels` stages, packed layout.

    Each stage rewrites the current low-pass quadrant as four sub-bands
    (approximation top left, details elsewhere), so coefficients occupy
    an array of the same shape as the image.
    """
    u = np.asarray(u, dtype=np.float64)
    _check_haar_shape(u.shape, levels)
    c = u.copy()
    h, w = u.shape
    for _ in range(levels):
        sub = _haar_fwd_1d(_haar_fwd_1d(c[:h, :w], 1), 0)
        c[:h, :w] = sub
        h //= 2
        w //= 2
    return c


def haar_idwt(c: np.ndarray, levels: int) -> np.ndarray:
    """Inverse of haar_dwt (exact, the transform is orthonormal)."""
    c = np.asarray(c, dtype=np.float64)
    _check_haar_shape(c.shape, levels)
    u = c.copy()
    H, W = c.shape
    sizes = [(H >> l, W >> l) for l in range(levels)]
    for h, w in reversed(sizes):
        u[:h, :w] = _haar_inv_1d(_haar_inv_1d(u[:h, :w], 0), 1)
    return u


def _check_haar_shape(shape, levels):
    if levels < 1:
        raise DomainError("levels must be >= 1, got %d" % levels)
    H, W = shape
    div = 1 << levels
    if H % div or W % div:
        raise DimensionError(
            "image %dx%d not divisible by 2^%d along both axes" % (H, W, levels)
        )


class HaarWavelet(LinearMap):
    """Orthonormal Haar synthesis operator on a fixed grid.

    `forward` maps packed coefficients to an image (synthesis, the
    dictionary direction), `adjoint` maps an image to coefficients
    (analysis).  Being orthonormal, the adjoint is also the inverse.
    """

    def __init__(self, shape, levels: int = 3):
        _check_haar_shape(shape, levels)
        self.levels = int(levels)
        self.in_shape = tuple(shape)
        self.out_shape = tuple(shape)

    def _forward(self, c):
        return haar_idwt(c, self.levels)

    def _adjoint(self, u):
        return haar_dwt(u, self.levels)

    def approx_slice(self):
        """Index of the final approximation band in the packed layout."""
        h = self.in_shape[0] >> self.levels
        w = self.in_shape[1] >> self.levels
        return (slice(0, h), slice(0, w))


def load_kernel(path) -> ConvKernel:
    """Read a kernel from the plain text format: 'H W' then H rows of W floats.

    Kernels are normalized to unit tap sum on load; if that rescaling was
    needed the returned kernel carries was_normalized=True.
    """
    try:
        with open(path, "r", encoding="ascii") as fh:
            tokens = fh.read().split()
    except OSError as exc:
        raise InputError("cannot read kernel file %s: %s" % (path, exc)) from exc
    if len(tokens) < 2:
        raise InputError("kernel file %s: missing 'H W' header" % path)
    try:
        h, w = int(tokens[0]), int(tokens[1])
        values = [float(t) for t in tokens[2:]]
    except ValueError as exc:
        raise InputError("kernel file %s: %s" % (path, exc)) from exc
    if h <= 0 or w <= 0:
        raise InputError("kernel file %s: nonpositive size %dx%d" % (path, h, w))
    if len(values) != h * w:
        raise InputError(
            "kernel file %s: expected %d taps, found %d" % (path, h * w, len(values))
        )
    taps = np.array(values, dtype=np.float64).reshape(h, w)
    try:
        return ConvKernel(taps).normalized()
    except DomainError as exc:
        raise InputError("kernel file %s: %s" % (path, exc)) from exc


def save_kernel(path, kernel: ConvKernel):
    """Write kernel taps in the plain text format read by load_kernel."""
    h, w = kernel.taps.shape
    lines = ["%d %d" % (h, w)]
    for row in kernel.taps:
        lines.append(" ".join("%.17g" % v for v in row))
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise InputError("cannot write kernel file %s: %s" % (path, exc)) from exc


def adjoint_mismatch(op: LinearMap, rng: SeededRng, n_pairs: int = 20) -> float:
    """Largest relative defect of <Ax, y> = <x, A'y> over random pairs.

    Used by the test suite and the self test to certify adjoint
    implementations.
    """
    worst = 0.0
    for _ in range(n_pairs):
        x = rng.generator.standard_normal(op.in_shape)
        y = rng.generator.standard_normal(op.out_shape)
        lhs = inner(op.forward(x), y)
        rhs = inner(x, op.adjoint(y))
        scale = max(abs(lhs), abs(rhs), 1e-30)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst
