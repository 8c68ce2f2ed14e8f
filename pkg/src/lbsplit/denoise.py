"""Small residual convolutional denoiser trained from scratch.

The network predicts the noise content of its input and subtracts it, so
a network with all-zero weights is exactly the identity map.  Forward
and backward passes are written directly in numpy (circular padding,
same as every other operator in the package); plain SGD on the mean
squared error against the injected noise is enough at this scale.

Also provides the hand crafted denoisers (median, wavelet shrinkage) and
the versioned binary weight format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .core import SeededRng, gaussian_noise
from .errors import DimensionError, DomainError, InputError, NumericalError, TrainingFault
from .operators import haar_dwt, haar_idwt
from .prox import soft_threshold

__all__ = [
    "conv2d_forward",
    "conv2d_backward",
    "ResidualConvNet",
    "TrainConfig",
    "TrainResult",
    "train",
    "synthetic_corpus",
    "sample_patches",
    "save_weights",
    "load_weights",
    "IdentityDenoiser",
    "MedianFilter3x3",
    "WaveletShrink",
    "HashNoise",
    "builtin_denoisers",
]

WEIGHT_MAGIC = b"LBSW"
WEIGHT_VERSION = 1


def conv2d_forward(weights: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Batched 2-D convolution with circular padding.

    weights: (out_c, in_c, kh, kw) with odd kh, kw; bias: (out_c,);
    x: (batch, in_c, H, W).  Output keeps the spatial size.
    """
    out_c, in_c, kh, kw = weights.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError("kernel sides must be odd, got %dx%d" % (kh, kw))
    if x.ndim != 4 or x.shape[1] != in_c:
        raise DimensionError(
            "input must be (batch, %d, H, W), got %s" % (in_c, (x.shape,))
        )
    B, _, H, W = x.shape
    y = np.tile(bias.reshape(1, out_c, 1, 1), (B, 1, H, W))
    cr, cc = kh // 2, kw // 2
    for a in range(kh):
        for b in range(kw):
            shifted = np.roll(x, (-(a - cr), -(b - cc)), axis=(2, 3))
            y += np.einsum("oi,bihw->bohw", weights[:, :, a, b], shifted)
    return y


def conv2d_backward(weights: np.ndarray, x: np.ndarray, dy: np.ndarray):
    """Gradients of conv2d_forward.

    Returns (d_weights, d_bias, d_x) for upstream gradient dy of the
    same shape as the forward output.
    """
    out_c, in_c, kh, kw = weights.shape
    cr, cc = kh // 2, kw // 2
    d_w = np.zeros_like(weights)
    d_b = dy.sum(axis=(0, 2, 3))
    d_x = np.zeros_like(x)
    for a in range(kh):
        for b in range(kw):
            shifted = np.roll(x, (-(a - cr), -(b - cc)), axis=(2, 3))
            d_w[:, :, a, b] = np.einsum("bohw,bihw->oi", dy, shifted)
            d_x += np.roll(
                np.einsum("oi,bohw->bihw", weights[:, :, a, b], dy),
                (a - cr, b - cc),
                axis=(2, 3),
            )
    return d_w, d_b, d_x


class ResidualConvNet:
    """conv-relu stacks that estimate noise; denoising subtracts it.

    channels, e.g. (1, 8, 8, 1), lists the channel counts through the
    layers; every hidden transition is followed by a ReLU, the last one
    is linear.
    """

    def __init__(self, channels: Sequence[int] = (1, 8, 8, 1), kernel: int = 3):
        channels = tuple(int(c) for c in channels)
        if len(channels) < 2:
            raise DimensionError("need at least one conv layer")
        if channels[0] != channels[-1]:
            raise DimensionError("input and output channel counts must match")
        if kernel % 2 == 0 or kernel < 1:
            raise DomainError("kernel side must be odd and positive")
        self.channels = channels
        self.kernel = int(kernel)
        self.weights: List[np.ndarray] = [
            np.zeros((channels[l + 1], channels[l], kernel, kernel))
            for l in range(len(channels) - 1)
        ]
        self.biases: List[np.ndarray] = [
            np.zeros(channels[l + 1]) for l in range(len(channels) - 1)
        ]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def init_uniform(self, rng: SeededRng):
        """Centered uniform init scaled by fan-in, biases zero."""
        for l, w in enumerate(self.weights):
            fan_in = w.shape[1] * w.shape[2] * w.shape[3]
            a = 1.0 / np.sqrt(fan_in)
            self.weights[l] = rng.substream("init/w%d" % l).uniform(-a, a, w.shape)
            self.biases[l] = np.zeros(w.shape[0])
        return self

    def forward(self, x: np.ndarray):
        """Noise estimate for a batch (B, C, H, W), with caches for backward."""
        caches = []
        a = x
        for l in range(self.n_layers):
            z = conv2d_forward(self.weights[l], self.biases[l], a)
            caches.append((a, z))
            a = np.maximum(z, 0.0) if l < self.n_layers - 1 else z
        return a, caches

    def backward(self, caches, d_out: np.ndarray):
        """Parameter gradients given the loss gradient at the output."""
        d_w = [None] * self.n_layers
        d_b = [None] * self.n_layers
        da = d_out
        for l in reversed(range(self.n_layers)):
            a_in, z = caches[l]
            dz = da if l == self.n_layers - 1 else da * (z > 0.0)
            d_w[l], d_b[l], da = conv2d_backward(self.weights[l], a_in, dz)
        return d_w, d_b

    def predict_noise(self, image: np.ndarray) -> np.ndarray:
        out, _ = self.forward(image[None, None, :, :])
        return out[0, 0]

    def denoise(self, image: np.ndarray) -> np.ndarray:
        """Residual application: input minus predicted noise."""
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 2:
            raise DimensionError("denoise expects a 2-D image")
        out = image - self.predict_noise(image)
        if not np.all(np.isfinite(out)):
            raise NumericalError("denoiser produced non-finite values")
        return out

    __call__ = denoise

    @property
    def name(self) -> str:
        return "residual_cnn"


@dataclass
class TrainConfig:
    sigma: float = 0.1
    epochs: int = 20
    batches_per_epoch: int = 40
    batch_size: int = 16
    patch_size: int = 35
    learning_rate: float = 0.5
    divergence_factor: float = 10.0


@dataclass
class TrainResult:
    losses: List[float]
    initial_loss: float
    final_loss: float
    val_input_mse: float
    val_output_mse: float


def synthetic_corpus(rng: SeededRng, n_images: int = 24, size: int = 96) -> List[np.ndarray]:
    """Procedural piecewise smooth images in [0, 1].

    Constant background, a handful of hard edged rectangles and soft
    disks, plus a low frequency intensity field, which together cover the
    edge/flat/gradient statistics the denoiser needs to see.
    """
    images = []
    for k in range(n_images):
        r = rng.substream("corpus/%d" % k).generator
        img = np.full((size, size), r.uniform(0.2, 0.8))
        for _ in range(r.integers(3, 9)):
            h = int(r.integers(size // 8, size // 2))
            w = int(r.integers(size // 8, size // 2))
            top = int(r.integers(0, size - h + 1))
            left = int(r.integers(0, size - w + 1))
            img[top : top + h, left : left + w] = r.uniform(0.0, 1.0)
        yy, xx = np.mgrid[0:size, 0:size]
        for _ in range(r.integers(0, 3)):
            cy, cx = r.uniform(0, size, 2)
            rad = r.uniform(size / 12, size / 4)
            soft = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * rad * rad)))
            img += r.uniform(-0.4, 0.4) * soft
        phase = r.uniform(0, 2 * np.pi, 2)
        img += 0.1 * np.cos(2 * np.pi * yy / size + phase[0]) * np.cos(
            2 * np.pi * xx / size + phase[1]
        )
        images.append(np.clip(img, 0.0, 1.0))
    return images


def sample_patches(
    rng: SeededRng, corpus: Sequence[np.ndarray], patch: int, count: int
) -> np.ndarray:
    """Draw `count` patches with circular wrap, shape (count, 1, patch, patch)."""
    gen = rng.generator
    out = np.empty((count, 1, patch, patch))
    for i in range(count):
        img = corpus[int(gen.integers(0, len(corpus)))]
        H, W = img.shape
        top = int(gen.integers(0, H))
        left = int(gen.integers(0, W))
        rows = (top + np.arange(patch)) % H
        cols = (left + np.arange(patch)) % W
        out[i, 0] = img[np.ix_(rows, cols)]
    return out


def train(
    net: ResidualConvNet,
    corpus: Sequence[np.ndarray],
    config: TrainConfig,
    rng: SeededRng,
) -> TrainResult:
    """Plain SGD on the mean squared error against the injected noise.

    Deterministic for a fixed rng: batching, noise and initialization all
    come from labeled substreams.  Raises TrainingFault if the loss blows
    past divergence_factor times the first recorded value or goes
    non-finite.
    """
    if config.sigma < 0:
        raise DomainError("sigma must be nonnegative")
    if config.learning_rate <= 0:
        raise DomainError("learning_rate must be positive")
    batch_rng = rng.substream("batches")
    noise_rng = rng.substream("noise")
    losses: List[float] = []
    lr = config.learning_rate
    for epoch in range(config.epochs):
        for step in range(config.batches_per_epoch):
            clean = sample_patches(
                batch_rng, corpus, config.patch_size, config.batch_size
            )
            noise = gaussian_noise(noise_rng, clean.shape, config.sigma)
            pred, caches = net.forward(clean + noise)
            resid = pred - noise
            loss = float(np.mean(resid**2))
            if not np.isfinite(loss):
                raise TrainingFault("loss became non-finite at epoch %d" % epoch)
            if losses and loss > config.divergence_factor * losses[0]:
                raise TrainingFault(
                    "loss %.3g exceeded %g times the initial %.3g"
                    % (loss, config.divergence_factor, losses[0])
                )
            losses.append(loss)
            d_out = 2.0 * resid / resid.size
            d_w, d_b = net.backward(caches, d_out)
            for l in range(net.n_layers):
                net.weights[l] -= lr * d_w[l]
                net.biases[l] -= lr * d_b[l]
    val_rng = rng.substream("validation")
    clean = sample_patches(val_rng, corpus, config.patch_size, 32)
    noise = gaussian_noise(val_rng, clean.shape, config.sigma)
    noisy = clean + noise
    pred, _ = net.forward(noisy)
    denoised = noisy - pred
    return TrainResult(
        losses=losses,
        initial_loss=losses[0] if losses else float("nan"),
        final_loss=losses[-1] if losses else float("nan"),
        val_input_mse=float(np.mean((noisy - clean) ** 2)),
        val_output_mse=float(np.mean((denoised - clean) ** 2)),
    )


def save_weights(path, net: ResidualConvNet):
    """Versioned binary weight file; raw little-endian float64 payload."""
    try:
        with open(path, "wb") as fh:
            fh.write(WEIGHT_MAGIC)
            fh.write(struct.pack("<II", WEIGHT_VERSION, net.n_layers))
            for w, b in zip(net.weights, net.biases):
                fh.write(struct.pack("<IIII", *w.shape))
                fh.write(np.ascontiguousarray(w, "<f8").tobytes())
                fh.write(np.ascontiguousarray(b, "<f8").tobytes())
    except OSError as exc:
        raise InputError("cannot write weights %s: %s" % (path, exc)) from exc


def load_weights(path) -> ResidualConvNet:
    """Read a weight file written by save_weights; exact round trip."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise InputError("cannot read weights %s: %s" % (path, exc)) from exc

    def take(n, what):
        nonlocal offset
        if offset + n > len(blob):
            raise InputError("weight file %s truncated in %s" % (path, what))
        piece = blob[offset : offset + n]
        offset = offset + n
        return piece

    offset = 0
    if take(4, "magic") != WEIGHT_MAGIC:
        raise InputError("weight file %s: bad magic" % path)
    version, n_layers = struct.unpack("<II", take(8, "header"))
    if version != WEIGHT_VERSION:
        raise InputError("weight file %s: unsupported version %d" % (path, version))
    if not (1 <= n_layers <= 64):
        raise InputError("weight file %s: implausible layer count %d" % (path, n_layers))
    weights = []
    biases = []
    for l in range(n_layers):
        out_c, in_c, kh, kw = struct.unpack("<IIII", take(16, "layer %d shape" % l))
        if min(out_c, in_c, kh, kw) < 1 or max(out_c, in_c) > 4096 or max(kh, kw) > 99:
            raise InputError("weight file %s: implausible layer %d shape" % (path, l))
        w = np.frombuffer(
            take(8 * out_c * in_c * kh * kw, "layer %d weights" % l), "<f8"
        ).reshape(out_c, in_c, kh, kw)
        b = np.frombuffer(take(8 * out_c, "layer %d bias" % l), "<f8")
        weights.append(w.copy())
        biases.append(b.copy())
    if offset != len(blob):
        raise InputError("weight file %s: %d trailing bytes" % (path, len(blob) - offset))
    channels = [weights[0].shape[1]] + [w.shape[0] for w in weights]
    for l in range(1, n_layers):
        if weights[l].shape[1] != channels[l]:
            raise InputError("weight file %s: layer %d channel mismatch" % (path, l))
        if weights[l].shape[2:] != weights[0].shape[2:]:
            raise InputError("weight file %s: mixed kernel sizes" % path)
    net = ResidualConvNet(channels, kernel=weights[0].shape[2])
    net.weights = weights
    net.biases = biases
    return net


class IdentityDenoiser:
    """Returns its input unchanged."""

    name = "identity"

    def __call__(self, image: np.ndarray) -> np.ndarray:
        return np.asarray(image, dtype=np.float64).copy()


class MedianFilter3x3:
    """3x3 median with circular boundary."""

    name = "median3x3"

    def __call__(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        stack = np.stack(
            [
                np.roll(image, (dr, dc), axis=(0, 1))
                for dr in (-1, 0, 1)
                for dc in (-1, 0, 1)
            ]
        )
        return np.median(stack, axis=0)


class WaveletShrink:
    """Soft threshold of the detail bands of an orthonormal Haar transform."""

    def __init__(self, tau: float = 0.05, levels: int = 3):
        if tau < 0:
            raise DomainError("tau must be nonnegative")
        self.tau = float(tau)
        self.levels = int(levels)
        self.name = "wavelet_shrink"

    def __call__(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        c = haar_dwt(image, self.levels)
        h = image.shape[0] >> self.levels
        w = image.shape[1] >> self.levels
        approx = c[:h, :w].copy()
        c = soft_threshold(c, self.tau)
        c[:h, :w] = approx
        return haar_idwt(c, self.levels)


class HashNoise:
    """Adversarial test operator: deterministic noise keyed by the input.

    Equal inputs give equal outputs (the key is a hash of the input
    bytes), yet the output carries no useful structure at all.
    """

    def __init__(self, sigma: float = 0.5, seed: int = 0):
        if sigma < 0:
            raise DomainError("sigma must be nonnegative")
        self.sigma = float(sigma)
        self.seed = int(seed)
        self.name = "hash_noise"

    def __call__(self, image: np.ndarray) -> np.ndarray:
        import hashlib

        image = np.asarray(image, dtype=np.float64)
        digest = hashlib.blake2b(
            image.tobytes() + self.seed.to_bytes(8, "little", signed=True),
            digest_size=8,
        ).digest()
        gen = np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))
        return image + self.sigma * gen.standard_normal(image.shape)


def builtin_denoisers(tau: float = 0.05, levels: int = 3) -> dict:
    """The hand crafted image denoisers, keyed by name."""
    return {
        "identity": IdentityDenoiser(),
        "median3x3": MedianFilter3x3(),
        "wavelet_shrink": WaveletShrink(tau, levels),
    }
