import numpy as np
import pytest

from lbsplit.baselines import SolverConfig, fbs_solve
from lbsplit.core import BlockVector, SeededRng
from lbsplit.denoise import HashNoise
from lbsplit.errors import DomainError
from lbsplit.geometry import DiagonalMahalanobis, bregman
from lbsplit.problem import SplitProblem
from lbsplit.prox import LpPower, ZeroFn
from lbsplit.solver import (
    DenoiserOp,
    LbsConfig,
    descent_margin,
    lbs_solve,
    penalized_objective,
    roc_check,
    t_f_step,
    ucus,
)
from lbsplit.trace import trace_diagnostics


def bv(*arrays):
    return BlockVector(tuple(np.asarray(a, dtype=float) for a in arrays))


def lasso_1d(target=3.0):
    def f_value(x):
        return 0.5 * float((x.blocks[0][0] - target) ** 2)

    def f_grad_block(x, n):
        return x.blocks[0] - target

    return SplitProblem(
        f_value=f_value,
        f_grad_block=f_grad_block,
        g=(LpPower(1.0),),
        geometry=DiagonalMahalanobis((0.01,)),
        lipschitz=1.0,
    )


def quadratic_two_block(mu=(0.5, 0.25)):
    """f = 0.5 ||x_0 - 1||^2 + 0.5 ||x_1 + 2||^2 with g = 0."""
    targets = (np.array([1.0, 1.0]), np.array([-2.0]))

    def f_value(x):
        return 0.5 * sum(float(np.sum((b - t) ** 2)) for b, t in zip(x.blocks, targets))

    def f_grad_block(x, n):
        return x.blocks[n] - targets[n]

    return SplitProblem(
        f_value=f_value,
        f_grad_block=f_grad_block,
        g=(ZeroFn(), ZeroFn()),
        geometry=DiagonalMahalanobis(mu),
        lipschitz=1.0,
    )


class TestPenalizedObjective:
    def test_anchor_at_point(self):
        prob = lasso_1d()
        x = bv([1.5])
        assert penalized_objective(prob, x, x, 1.0) == prob.objective(x)

    def test_decreases_in_lam(self):
        prob = lasso_1d()
        x, anchor = bv([1.5]), bv([0.5])
        vals = [penalized_objective(prob, x, anchor, lam) for lam in (0.5, 1.0, 4.0, 100.0)]
        assert all(vals[i] > vals[i + 1] for i in range(3))
        assert abs(vals[-1] - prob.objective(x)) < 0.01 * bregman(prob.geometry, x, anchor)

    def test_closed_form(self):
        prob = quadratic_two_block()
        x = bv([2.0, 0.0], [1.0])
        anchor = bv([0.0, 0.0], [0.0])
        lam = 2.0
        f = 0.5 * ((2.0 - 1.0) ** 2 + 1.0**2) + 0.5 * (1.0 + 2.0) ** 2
        breg = 0.5 * 0.5 * (2.0**2 + 0.0) + 0.5 * 0.25 * 1.0**2
        assert abs(penalized_objective(prob, x, anchor, lam) - (f + breg / lam)) < 1e-12


class TestTfStep:
    def test_stationary_fixed(self):
        prob = quadratic_two_block()
        x = bv([1.0, 1.0], [-2.0])
        out = t_f_step(prob, x, x, lam=1.0, rho=0.3)
        assert (out - x).norm() == 0.0

    def test_isotropic_shrink(self):
        """f = h = same quadratic, anchor = point: step is x - rho x."""

        def f_value(x):
            return 0.5 * float(np.sum(x.blocks[0] ** 2))

        def f_grad_block(x, n):
            return x.blocks[0].copy()

        prob = SplitProblem(
            f_value=f_value,
            f_grad_block=f_grad_block,
            g=(ZeroFn(),),
            geometry=DiagonalMahalanobis((1.0,)),
            lipschitz=1.0,
        )
        x = bv([2.0, -4.0])
        out = t_f_step(prob, x, x, lam=1.0, rho=0.1)
        assert np.allclose(out.blocks[0], 0.9 * x.blocks[0], atol=1e-15)

    def test_bad_parameters(self):
        prob = lasso_1d()
        x = bv([0.0])
        with pytest.raises(DomainError):
            t_f_step(prob, x, x, lam=0.0, rho=0.1)
        with pytest.raises(DomainError):
            t_f_step(prob, x, x, lam=1.0, rho=-0.1)


class TestRocCheck:
    def test_stationary_point_passes(self):
        prob = lasso_1d()
        # u = x_prev = 2 is the lasso solution: gradient -1, subgradient 1
        x_prev = bv([2.0])
        rho = 0.5
        z = x_prev.blocks[0] - rho * prob.f_grad_block(x_prev, 0)
        u = prob.g[0].prox(z, rho)
        ok, err = roc_check(prob, bv(u), z, x_prev, 0, lam=1.0, rho=rho, c=1e-9)
        assert ok
        assert err < 1e-12

    def test_zero_c_rejects_nonzero_error(self):
        prob = lasso_1d()
        x_prev = bv([0.0])
        z = np.array([2.5])
        u = np.array([1.0])  # not the prox of z: residual strictly positive
        ok, err = roc_check(prob, bv(u), z, x_prev, 0, lam=1.0, rho=0.5, c=0.0)
        assert err > 0.0
        assert not ok

    def test_quadratic_subproblem_minimizer(self):
        """u minimizing f + Bregman/lam + (quadratic prox term implicitly 0 via g=0)."""

        def f_value(x):
            return 0.5 * float(np.sum((x.blocks[0] - 3.0) ** 2))

        def f_grad_block(x, n):
            return x.blocks[0] - 3.0

        prob = SplitProblem(
            f_value=f_value,
            f_grad_block=f_grad_block,
            g=(ZeroFn(),),
            geometry=DiagonalMahalanobis((0.4,)),
            lipschitz=1.0,
        )
        lam, rho = 2.0, 0.7
        x_prev = bv([1.0])
        # u solving min f(u) + breg(u, x_prev)/lam has zero penalized
        # gradient, and the forward step at u then returns z = u, so the
        # residual is exactly zero
        w = 0.4 / lam
        u = (3.0 + w * 1.0) / (1.0 + w)
        z = np.array([u])
        ok, err = roc_check(prob, bv([u]), z, x_prev, 0, lam=lam, rho=rho, c=1e-8)
        assert ok
        assert err < 1e-10


class TestUcus:
    def test_gamma_one_returns_v(self):
        prob = lasso_1d()
        base = bv([0.5])
        out, tag = ucus(prob, base, 0, np.array([2.0]), np.array([0.5]), 1.0)
        assert out[0] == 2.0
        assert tag == "w"

    def test_result_never_worse_than_v(self):
        prob = lasso_1d()
        rng = SeededRng(3)
        base = bv([0.0])

        def psi(s):
            return prob.f_value(base.with_block(0, np.array([s]))) + prob.g[0].value(
                np.array([s])
            )

        for _ in range(40):
            v = float(rng.normal((1,))[0]) * 3
            xp = float(rng.normal((1,))[0]) * 3
            out, _ = ucus(prob, base, 0, np.array([v]), np.array([xp]), 0.5)
            assert psi(float(out[0])) <= psi(v) + 1e-12

    def test_nonconvex_bump_keeps_v(self):
        """Block objective with a hill between x_prev and v: averaging hurts."""

        def f_value(x):
            s = x.blocks[0][0]
            return float((s**2 - 1.0) ** 2)  # minima at -1 and 1, bump at 0

        def f_grad_block(x, n):
            s = x.blocks[0]
            return 4.0 * s * (s**2 - 1.0)

        prob = SplitProblem(
            f_value=f_value,
            f_grad_block=f_grad_block,
            g=(ZeroFn(),),
            geometry=DiagonalMahalanobis((0.01,)),
            lipschitz=10.0,
        )
        out, tag = ucus(prob, bv([0.0]), 0, np.array([1.0]), np.array([-1.0]), 0.5)
        # midpoint w = 0 sits on the bump (value 1 > 0), so v must win
        assert out[0] == 1.0
        assert tag == "v"


class TestDescentMargin:
    def test_reference_constants(self):
        assert descent_margin(0.01, 1.0, 0.001, 0.5, 1.0) == 0.5

    def test_roc_term_dominates(self):
        # mu/(2 lam) - c = 0.004 vs 1/(2 rho) - L/2 = -0.25
        assert abs(descent_margin(0.01, 1.0, 0.001, 2.0, 1.0) - 0.004) < 1e-15


class TestLbsSolve:
    def test_lasso_matches_fbs(self):
        prob = lasso_1d()
        x0 = bv([0.0])
        xl, _ = lbs_solve(prob, x0, None, LbsConfig(rho=1.0, tol=1e-9, max_iters=400))
        xf, _ = fbs_solve(prob, x0, SolverConfig(rho=1.0, tol=1e-9, max_iters=400))
        assert abs(xl.blocks[0][0] - 2.0) < 1e-5
        assert abs(xl.blocks[0][0] - xf.blocks[0][0]) < 1e-5

    def test_identity_denoiser_same_path(self):
        prob = lasso_1d()
        x0 = bv([0.0])
        cfg = LbsConfig(rho=0.8, tol=1e-10, max_iters=300)
        x1, t1 = lbs_solve(prob, x0, None, cfg)
        x2, t2 = lbs_solve(
            prob, x0, DenoiserOp("identity", lambda x: x), cfg
        )
        assert np.array_equal(x1.blocks[0], x2.blocks[0])
        assert t1.psi_values() == t2.psi_values()

    def test_adversarial_denoiser_monotone(self):
        prob = lasso_1d()
        x0 = bv([0.0])
        noise = HashNoise(sigma=0.8, seed=5)
        td = DenoiserOp("hash_noise", lambda x: bv(noise(x.blocks[0].reshape(1, 1)).ravel()
                                                   if x.blocks[0].size == 1 else x.blocks[0]))
        x, trace = lbs_solve(prob, x0, td, LbsConfig(rho=0.8, tol=1e-10, max_iters=300))
        report = trace_diagnostics(trace)
        assert report.monotone_violations == []
        assert abs(x.blocks[0][0] - 2.0) < 1e-5
        branches = [r.branch for r in trace.rows[1:]]
        assert "f" in "".join(branches)

    def test_multiblock_converges(self):
        prob = quadratic_two_block()
        x0 = bv([0.0, 0.0], [0.0])
        x, trace = lbs_solve(prob, x0, None, LbsConfig(rho=0.9, tol=1e-10, max_iters=500))
        assert np.max(np.abs(x.blocks[0] - np.array([1.0, 1.0]))) < 1e-6
        assert abs(x.blocks[1][0] + 2.0) < 1e-6
        # per-block trace strings cover both blocks
        assert all(len(r.branch) == 2 for r in trace.rows[1:])

    def test_tail_increments_vanish(self):
        prob = quadratic_two_block()
        x0 = bv([5.0, -3.0], [4.0])
        _, trace = lbs_solve(prob, x0, None, LbsConfig(rho=0.9, tol=1e-8, max_iters=2000))
        steps = [r.step_norm2 for r in trace.rows[1:]]
        assert steps[-1] < 1e-8
        report = trace_diagnostics(trace)
        assert report.monotone_violations == []
        assert report.cumulative_step_norm2 >= steps[0]

    def test_single_iteration_cumulative(self):
        prob = lasso_1d()
        _, trace = lbs_solve(prob, bv([0.0]), None, LbsConfig(rho=1.0, tol=1e-12, max_iters=1))
        report = trace_diagnostics(trace)
        assert abs(report.cumulative_step_norm2 - trace.rows[1].step_norm2) < 1e-15

    def test_config_validation(self):
        prob = lasso_1d()
        with pytest.raises(DomainError):
            lbs_solve(prob, bv([0.0]), None, LbsConfig(rho=1.0, gamma=1.5))
        with pytest.raises(DomainError):
            lbs_solve(prob, bv([0.0]), None, LbsConfig(rho=1.0, lam=0.0))
        with pytest.raises(DomainError):
            lbs_solve(prob, bv([0.0]), None, LbsConfig(rho=1.0, c=-0.5))


class TestTraceCsv:
    def test_schema_single_block(self, tmp_path):
        prob = lasso_1d()
        _, trace = lbs_solve(prob, bv([0.0]), None, LbsConfig(rho=1.0, max_iters=5))
        path = tmp_path / "t.csv"
        trace.to_csv(str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == "iter,psi,step_norm2,roc_blocks,branch,ucus_choice,iter_error,rec_error,time_ms"
        assert lines[1].startswith("0,")
        assert lines[1].rstrip().endswith(",0")

    def test_schema_multi_block(self, tmp_path):
        prob = quadratic_two_block()
        _, trace = lbs_solve(prob, bv([0.0, 0.0], [0.0]), None, LbsConfig(rho=0.9, max_iters=4))
        path = tmp_path / "t.csv"
        trace.to_csv(str(path))
        header = path.read_text().splitlines()[0].split(",")
        assert header[2] == "step_norm2"
        assert header[3].startswith("step_norm2_")
        assert header[4].startswith("step_norm2_")

    def test_rerun_bytes_identical(self, tmp_path):
        prob = lasso_1d()
        paths = []
        for k in range(2):
            _, trace = lbs_solve(prob, bv([0.0]), None, LbsConfig(rho=1.0, max_iters=30))
            p = tmp_path / ("r%d.csv" % k)
            trace.to_csv(str(p))
            paths.append(p.read_bytes())
        assert paths[0] == paths[1]
