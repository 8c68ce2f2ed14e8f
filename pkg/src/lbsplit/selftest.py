"""Built-in invariant checks, runnable without the test suite.

Each check is small and self contained: operator adjoints, transform
round trips, prox optimality against a brute force grid, denoiser
gradients against finite differences, monotone descent of the
safeguarded solver, and end to end determinism.
"""

from __future__ import annotations

import os
import tempfile
import traceback

import numpy as np

from .baselines import estimate_lipschitz
from .core import BlockVector, SeededRng
from .denoise import (
    HashNoise,
    ResidualConvNet,
    load_weights,
    save_weights,
    synthetic_corpus,
)
from .errors import InputError
from .imaging import build_completion, masked_observation, random_mask
from .operators import (
    CircularConv,
    ConvKernel,
    FiniteDiff,
    HaarWavelet,
    Mask,
    adjoint_mismatch,
    fft2,
    ifft2,
)
from .prox import lp_threshold, prox_lp_scalar
from .solver import LbsConfig, lbs_solve
from .trace import trace_diagnostics

__all__ = ["run_selftest"]


def _check_rng():
    a = SeededRng(7).normal((64,))
    b = SeededRng(7).normal((64,))
    assert np.array_equal(a, b), "same seed must reproduce draws"
    c = SeededRng(7).substream("other").normal((64,))
    assert not np.array_equal(a, c), "substreams must differ"


def _check_adjoints():
    rng = SeededRng(11)
    shape = (16, 24)
    keep = random_mask(rng.substream("mask"), shape, 0.3)
    kernel = ConvKernel(rng.substream("kern").uniform(-1, 1, (5, 3)))
    ops = [
        Mask(keep),
        CircularConv(kernel, shape),
        FiniteDiff(shape, axis=0),
        FiniteDiff(shape, axis=1),
        HaarWavelet((16, 24), levels=2),
    ]
    for op in ops:
        err = adjoint_mismatch(op, rng.substream(type(op).__name__), 20)
        assert err <= 1e-10, "%s adjoint defect %g" % (type(op).__name__, err)


def _check_fft():
    rng = SeededRng(3)
    x = rng.normal((12, 20))
    back = ifft2(fft2(x))
    assert np.max(np.abs(back - x)) <= 1e-10, "fft round trip"
    X = fft2(x)
    lhs = np.sum(np.abs(X) ** 2)
    rhs = x.size * np.sum(x * x)
    assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(rhs)), "Parseval"


def _check_haar():
    rng = SeededRng(5)
    x = rng.normal((32, 32))
    from .operators import haar_dwt, haar_idwt

    c = haar_dwt(x, 3)
    assert np.max(np.abs(haar_idwt(c, 3) - x)) <= 1e-12, "haar round trip"
    assert abs(np.sum(c * c) - np.sum(x * x)) <= 1e-10 * np.sum(x * x), "haar isometry"
    const = np.full((8, 8), 0.37)
    c1 = haar_dwt(const, 1)
    assert abs(c1[0, 0] - 2 * 0.37) <= 1e-14, "constant scaling"
    assert np.max(np.abs(c1[4:, :])) <= 1e-14 and np.max(np.abs(c1[:, 4:])) <= 1e-14


def _check_prox():
    for x, rho, p in [(1.7, 0.5, 0.5), (-2.3, 0.8, 0.8), (0.9, 1.2, 0.8), (3.0, 1.0, 1.0)]:
        u = prox_lp_scalar(x, rho, p)
        grid = np.linspace(-2 * abs(x), 2 * abs(x), 40001)
        obj = np.abs(grid) ** p + (grid - x) ** 2 / (2 * rho)
        obj_u = abs(u) ** p + (u - x) ** 2 / (2 * rho)
        assert obj_u <= obj.min() + 1e-9, "prox beat by grid at x=%g" % x
        tau = lp_threshold(rho, p)
        assert prox_lp_scalar(0.999 * tau, rho, p) == 0.0, "below threshold must be 0"


def _check_conv_direct():
    rng = SeededRng(9)
    u = rng.normal((7, 6))
    taps = rng.substream("taps").uniform(-1, 1, (3, 4))
    kernel = ConvKernel(taps)
    out = CircularConv(kernel, u.shape).forward(u)
    ref = np.zeros_like(u)
    cr, cc = kernel.anchor
    for a in range(taps.shape[0]):
        for b in range(taps.shape[1]):
            ref += taps[a, b] * np.roll(u, (a - cr, b - cc), axis=(0, 1))
    assert np.max(np.abs(out - ref)) <= 1e-10, "fft conv vs direct"


def _check_denoiser_grads():
    rng = SeededRng(21)
    net = ResidualConvNet((1, 4, 1)).init_uniform(rng)
    x = rng.substream("x").normal((2, 1, 6, 6))
    target = rng.substream("t").normal((2, 1, 6, 6))

    def loss_value():
        out, _ = net.forward(x)
        return float(np.mean((out - target) ** 2))

    out, caches = net.forward(x)
    d_out = 2.0 * (out - target) / out.size
    d_w, d_b = net.backward(caches, d_out)
    eps = 1e-6
    for l in (0, net.n_layers - 1):
        flat = net.weights[l].ravel()
        for k in (0, flat.size // 2, flat.size - 1):
            keep = flat[k]
            flat[k] = keep + eps
            plus = loss_value()
            flat[k] = keep - eps
            minus = loss_value()
            flat[k] = keep
            fd = (plus - minus) / (2 * eps)
            an = d_w[l].ravel()[k]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-12)
            assert rel < 1e-4, "weight grad mismatch layer %d idx %d: %g" % (l, k, rel)


def _check_weight_io():
    rng = SeededRng(33)
    net = ResidualConvNet((1, 8, 8, 1)).init_uniform(rng)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "w.bin")
        save_weights(path, net)
        back = load_weights(path)
        for a, b in zip(net.weights, back.weights):
            assert np.array_equal(a, b), "weight round trip must be exact"
        with open(path, "r+b") as fh:
            fh.seek(0)
            fh.write(b"XXXX")
        try:
            load_weights(path)
        except InputError:
            pass
        else:
            raise AssertionError("corrupt file must raise InputError")


def _completion_instance(seed, size=24, missing=0.4):
    rng = SeededRng(seed)
    gt = synthetic_corpus(rng.substream("gt"), 1, size)[0]
    keep = random_mask(rng.substream("mask"), gt.shape, missing)
    y = masked_observation(gt, keep)
    app = build_completion(y, keep, rho_fidelity=0.05, levels=2, rng=rng.substream("L"))
    return app, gt


def _check_monotone():
    app, _ = _completion_instance(101)
    for td in (None, app.denoiser_op(HashNoise(sigma=0.5, seed=4))):
        cfg = LbsConfig(max_iters=60, descent_check=True)
        _, trace = lbs_solve(app.problem, app.initial_point(), td, cfg)
        summary = trace_diagnostics(trace)
        assert not summary.monotone_violations, (
            "descent violations with T_d=%s" % ("identity" if td is None else td.name)
        )


def _check_determinism():
    rows = []
    csvs = []
    for _ in range(2):
        app, gt = _completion_instance(202)
        cfg = LbsConfig(max_iters=40)
        x, trace = lbs_solve(
            app.problem, app.initial_point(), None, cfg, app.rec_error_fn(gt)
        )
        rows.append([r.psi for r in trace.rows])
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "trace.csv")
            trace.to_csv(path)
            with open(path, "rb") as fh:
                csvs.append(fh.read())
    assert rows[0] == rows[1], "objective sequences differ between identical runs"
    assert csvs[0] == csvs[1], "trace files differ between identical runs"


def _check_lipschitz():
    rng = SeededRng(55)
    diag = np.array([4.0, 1.0, 0.5])

    def apply(x: BlockVector) -> BlockVector:
        return BlockVector([diag * x.blocks[0]], x.labels)

    template = BlockVector([np.zeros(3)])
    est = estimate_lipschitz(apply, template, rng, safety=1.0)
    assert abs(est - 4.0) <= 1e-4, "power iteration on a diagonal matrix"


CHECKS = [
    ("seeded rng reproducibility", _check_rng),
    ("operator adjoints", _check_adjoints),
    ("fft round trip and Parseval", _check_fft),
    ("haar transform", _check_haar),
    ("prox against brute force grid", _check_prox),
    ("fft convolution against direct sum", _check_conv_direct),
    ("denoiser gradients against finite differences", _check_denoiser_grads),
    ("weight file round trip and corruption", _check_weight_io),
    ("power iteration", _check_lipschitz),
    ("monotone descent with adversarial operator", _check_monotone),
    ("end to end determinism", _check_determinism),
]


def run_selftest(verbose: bool = True) -> int:
    """Run every check; print one line each; return the failure count."""
    failures = 0
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - report and continue
            failures += 1
            if verbose:
                print("[FAIL] %s: %s" % (name, exc))
                traceback.print_exc()
        else:
            if verbose:
                print("[ok]   %s" % name)
    return failures
