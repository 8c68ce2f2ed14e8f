"""Classical splitting baselines over the shared problem interface.

Forward-backward, its inertial variant with adaptive restart,
Peaceman-Rachford / Douglas-Rachford, and a consensus ADMM.  All of them
run the same stopping rule (relative change of the primal iterate) and
emit the shared SolverTrace, so iteration counts are directly comparable
across solvers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import BlockVector, SeededRng, axpy
from .errors import ConfigError, DomainError, NumericalError
from .problem import SplitProblem
from .trace import IterationRecord, SolverTrace

__all__ = [
    "SolverConfig",
    "FixedPointOperator",
    "km_step",
    "estimate_lipschitz",
    "fbs_operator",
    "fbs_solve",
    "fista_solve",
    "prs_operator",
    "prs_solve",
    "drs_solve",
    "admm_solve",
]

NORM_GUARD = 1e-12


@dataclass
class SolverConfig:
    """Knobs shared by the baseline solvers.

    rho = None picks 0.95 / L from the problem's Lipschitz modulus.
    """

    rho: Optional[float] = None
    gamma: float = 1.0
    tol: float = 1e-4
    max_iters: int = 500

    def validate(self):
        if self.rho is not None and not self.rho > 0:
            raise DomainError("rho must be positive, got %g" % self.rho)
        if not (0.0 < self.gamma <= 1.0):
            raise DomainError("gamma must lie in (0, 1], got %g" % self.gamma)
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")

    def resolve_rho(self, problem: SplitProblem) -> float:
        if self.rho is not None:
            return float(self.rho)
        L = problem.lipschitz
        if not L or L <= 0:
            raise ConfigError("rho not set and problem has no Lipschitz modulus")
        return 0.95 / L


@dataclass
class FixedPointOperator:
    """A named deterministic map on block vectors."""

    name: str
    apply: Callable[[BlockVector], BlockVector]

    def __call__(self, x: BlockVector) -> BlockVector:
        return self.apply(x)


def km_step(T, x: BlockVector, gamma: float) -> BlockVector:
    """Krasnoselskii-Mann relaxation (1 - gamma) x + gamma T(x)."""
    if not (0.0 < gamma <= 1.0):
        raise DomainError("gamma must lie in (0, 1], got %g" % gamma)
    return axpy(gamma, T(x) - x, x)


def estimate_lipschitz(
    apply_fn: Callable[[BlockVector], BlockVector],
    template: BlockVector,
    rng: SeededRng,
    tol: float = 1e-6,
    max_iters: int = 10000,
    safety: float = 1.05,
) -> float:
    """Largest eigenvalue of a symmetric PSD operator by power iteration.

    The result is inflated by `safety` (5 percent by default) so that
    step sizes chosen as 1/L stay on the stable side of estimation error.
    Raises NumericalError if the Rayleigh quotient has not settled after
    max_iters applications.
    """
    b = BlockVector(
        [rng.generator.standard_normal(blk.shape) for blk in template.blocks],
        template.labels,
    )
    nrm = b.norm()
    if nrm <= NORM_GUARD:
        raise NumericalError("degenerate start vector in power iteration")
    b = b.scale(1.0 / nrm)
    lam_prev = None
    for _ in range(max_iters):
        Hb = apply_fn(b)
        lam = sum(
            float(np.dot(u.ravel(), v.ravel()))
            for u, v in zip(b.blocks, Hb.blocks)
        )
        nrm = Hb.norm()
        if nrm <= NORM_GUARD:
            return 0.0
        b = Hb.scale(1.0 / nrm)
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(abs(lam), NORM_GUARD):
            return safety * max(lam, 0.0)
        lam_prev = lam
    raise NumericalError("power iteration did not converge in %d iterations" % max_iters)


def _rel_change(step_norm: float, base_norm: float) -> float:
    if base_norm <= NORM_GUARD:
        return step_norm
    return step_norm / base_norm


def _log10_or_none(value: float) -> Optional[float]:
    if value <= 0.0:
        return None
    return math.log10(value)


def _step_record(
    t: int,
    x_new: BlockVector,
    x_old: BlockVector,
    psi: float,
    rec_error_fn,
    t_start: float,
    n_blocks: int,
) -> tuple:
    block_steps = tuple(
        float(np.sum((a - b) ** 2)) for a, b in zip(x_new.blocks, x_old.blocks)
    )
    step2 = float(sum(block_steps))
    rel = _rel_change(math.sqrt(step2), x_old.norm())
    rec = rec_error_fn(x_new) if rec_error_fn is not None else None
    record = IterationRecord(
        t=t,
        psi=psi,
        step_norm2=step2,
        block_step_norm2=block_steps,
        v_step_norm2=block_steps,
        roc="-" * n_blocks,
        branch="-" * n_blocks,
        ucus="-" * n_blocks,
        iter_error=_log10_or_none(rel),
        rec_error=rec,
        time_ms=(time.perf_counter() - t_start) * 1e3,
    )
    return record, rel


def _initial_record(x0: BlockVector, psi: float, rec_error_fn, n_blocks: int) -> IterationRecord:
    return IterationRecord(
        t=0,
        psi=psi,
        step_norm2=0.0,
        block_step_norm2=(0.0,) * n_blocks,
        v_step_norm2=(0.0,) * n_blocks,
        roc="-" * n_blocks,
        branch="-" * n_blocks,
        ucus="-" * n_blocks,
        iter_error=None,
        rec_error=rec_error_fn(x0) if rec_error_fn is not None else None,
        time_ms=0.0,
    )


def _check_finite_psi(psi: float, t: int):
    if math.isnan(psi) or psi == float("-inf"):
        raise NumericalError("objective became undefined at iteration %d" % t)


def fbs_operator(f_grad, prox_g, rho: float) -> FixedPointOperator:
    """Forward-backward map x -> prox_{rho g}(x - rho grad f(x))."""
    if not rho > 0:
        raise DomainError("rho must be positive, got %g" % rho)

    def apply(x: BlockVector) -> BlockVector:
        return prox_g(axpy(-rho, f_grad(x), x), rho)

    return FixedPointOperator("fbs", apply)


def _labels(problem: SplitProblem, x0: BlockVector):
    return problem.labels if problem.labels is not None else x0.labels


def fbs_solve(
    problem: SplitProblem,
    x0: BlockVector,
    config: SolverConfig,
    rec_error_fn=None,
):
    """Proximal gradient iteration with KM relaxation."""
    config.validate()
    problem.check_point(x0)
    rho = config.resolve_rho(problem)
    op = fbs_operator(problem.f_grad, problem.prox_all, rho)
    trace = SolverTrace(_labels(problem, x0), solver="fbs")
    x = x0.copy()
    trace.append(_initial_record(x, problem.objective(x), rec_error_fn, problem.n_blocks))
    for t in range(1, config.max_iters + 1):
        t_start = time.perf_counter()
        x_new = km_step(op, x, config.gamma)
        psi = problem.objective(x_new)
        _check_finite_psi(psi, t)
        record, rel = _step_record(
            t, x_new, x, psi, rec_error_fn, t_start, problem.n_blocks
        )
        trace.append(record)
        x = x_new
        if rel <= config.tol:
            break
    return x, trace


def fista_solve(
    problem: SplitProblem,
    x0: BlockVector,
    config: SolverConfig,
    rec_error_fn=None,
):
    """Inertial forward-backward with restart on objective increase.

    The restart discards the momentum and retakes the step from the
    current iterate whenever the extrapolated step raised the objective,
    which keeps the method usable on nonconvex problems.
    """
    config.validate()
    problem.check_point(x0)
    rho = config.resolve_rho(problem)

    def fb(point: BlockVector) -> BlockVector:
        return problem.prox_all(axpy(-rho, problem.f_grad(point), point), rho)

    trace = SolverTrace(_labels(problem, x0), solver="fista")
    trace.extra = {"restarts": 0}
    x = x0.copy()
    psi_x = problem.objective(x)
    trace.append(_initial_record(x, psi_x, rec_error_fn, problem.n_blocks))
    x_prev = x
    t_momentum = 1.0
    for t in range(1, config.max_iters + 1):
        t_start = time.perf_counter()
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_momentum * t_momentum))
        beta = (t_momentum - 1.0) / t_next
        y = axpy(beta, x - x_prev, x)
        x_new = fb(y)
        psi_new = problem.objective(x_new)
        if psi_new > psi_x:
            # extrapolation overshot; retake a plain step from x
            trace.extra["restarts"] += 1
            t_next = 1.0
            x_new = fb(x)
            psi_new = problem.objective(x_new)
        _check_finite_psi(psi_new, t)
        record, rel = _step_record(
            t, x_new, x, psi_new, rec_error_fn, t_start, problem.n_blocks
        )
        trace.append(record)
        x_prev = x
        x = x_new
        psi_x = psi_new
        t_momentum = t_next
        if rel <= config.tol:
            break
    return x, trace


def _require_f_prox(problem: SplitProblem, solver: str):
    if problem.f_prox is None:
        raise ConfigError(
            "%s needs a proximal map for the smooth term; this problem does not provide one"
            % solver
        )


def prs_operator(prox_f, prox_g, rho: float) -> FixedPointOperator:
    """Peaceman-Rachford map: compose the two reflections R = 2 prox - id."""
    if not rho > 0:
        raise DomainError("rho must be positive, got %g" % rho)

    def apply(s: BlockVector) -> BlockVector:
        xf = prox_f(s, rho)
        rf = axpy(2.0, xf - s, s)
        xg = prox_g(rf, rho)
        return axpy(2.0, xg - rf, rf)

    return FixedPointOperator("prs", apply)


def _reflection_solve(
    problem: SplitProblem,
    x0: BlockVector,
    config: SolverConfig,
    rec_error_fn,
    averaging: float,
    name: str,
):
    config.validate()
    problem.check_point(x0)
    _require_f_prox(problem, name)
    rho = config.resolve_rho(problem)
    op = prs_operator(problem.f_prox, problem.prox_all, rho)
    trace = SolverTrace(_labels(problem, x0), solver=name)
    s = x0.copy()
    x = problem.f_prox(s, rho)
    trace.append(_initial_record(x, problem.objective(x), rec_error_fn, problem.n_blocks))
    for t in range(1, config.max_iters + 1):
        t_start = time.perf_counter()
        s = km_step(op, s, averaging)
        x_new = problem.f_prox(s, rho)
        psi = problem.objective(x_new)
        _check_finite_psi(psi, t)
        record, rel = _step_record(
            t, x_new, x, psi, rec_error_fn, t_start, problem.n_blocks
        )
        trace.append(record)
        x = x_new
        if rel <= config.tol:
            break
    return x, trace


def prs_solve(problem, x0, config, rec_error_fn=None):
    """Unrelaxed Peaceman-Rachford; the primal iterate is prox_f of the state."""
    return _reflection_solve(problem, x0, config, rec_error_fn, 1.0, "prs")


def drs_solve(problem, x0, config, rec_error_fn=None):
    """Douglas-Rachford, the half-averaged Peaceman-Rachford iteration."""
    return _reflection_solve(problem, x0, config, rec_error_fn, 0.5, "drs")


def admm_solve(
    problem: SplitProblem,
    x0: BlockVector,
    config: SolverConfig,
    rec_error_fn=None,
):
    """Consensus ADMM in scaled form for min f(x) + g(z), x = z.

    The resolvent scale is config.rho (the augmented penalty is its
    reciprocal).  Primal and dual residual norms are logged per iteration
    in trace.extra.
    """
    config.validate()
    problem.check_point(x0)
    _require_f_prox(problem, "admm")
    rho = config.resolve_rho(problem)
    trace = SolverTrace(_labels(problem, x0), solver="admm")
    trace.extra = {"primal_residual": [], "dual_residual": []}
    x = x0.copy()
    z = x0.copy()
    w = x0.scale(0.0)
    trace.append(_initial_record(x, problem.objective(x), rec_error_fn, problem.n_blocks))
    for t in range(1, config.max_iters + 1):
        t_start = time.perf_counter()
        x_new = problem.f_prox(z - w, rho)
        z_new = problem.prox_all(x_new + w, rho)
        w = w + (x_new - z_new)
        trace.extra["primal_residual"].append(math.sqrt((x_new - z_new).norm2()))
        trace.extra["dual_residual"].append(math.sqrt((z_new - z).norm2()) / rho)
        psi = problem.objective(x_new)
        _check_finite_psi(psi, t)
        record, rel = _step_record(
            t, x_new, x, psi, rec_error_fn, t_start, problem.n_blocks
        )
        trace.append(record)
        x = x_new
        z = z_new
        if rel <= config.tol:
            break
    return x, trace
