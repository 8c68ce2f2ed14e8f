"""Safeguarded splitting with a pluggable data-driven operator.

One outer iteration, given the current point x and a learned operator
T_d, first forms a full-point proposal

    z = t_f_step(T_d(x), anchor=x)

(a gradient step on the smooth term plus a Bregman pull toward x), then
sweeps the blocks in order.  Block n proxes its proposal, u_n =
prox_{rho g_n}(z_n), and accepts it only if the prox residual certificate
passes the relative optimality check

    || d_n + grad_n f + (1/lam)(grad h_n(u_n) - grad h_n(x_n)) ||
        <= c || u_n - x_n ||

with d_n = (z_n - u_n)/rho a subgradient of g_n at u_n.  Rejected blocks
fall back to a plain proximal gradient step from the current mixed point,
which decreases the block objective whenever rho < 1/L.  A final
averaging test (ucus) compares the relaxed point against the candidate
and keeps whichever has the lower block objective, so relaxation can
never hurt.

With descent_check on, a learned candidate must additionally not raise
its block objective (otherwise it is replaced by the fallback step), and
the full objective is asserted non increasing once per iteration; a
violation raises SolverFault, which with correctly set constants
(c < mu/(2 lam), rho < 1/L) indicates a broken problem definition rather
than bad luck.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .core import BlockVector
from .errors import DimensionError, DomainError, NumericalError, SolverFault
from .geometry import bregman
from .problem import SplitProblem
from .trace import IterationRecord, SolverTrace

__all__ = [
    "LbsConfig",
    "DenoiserOp",
    "identity_denoiser_op",
    "penalized_objective",
    "t_f_step",
    "t_f_step_block",
    "roc_check",
    "ucus",
    "descent_margin",
    "lbs_solve",
]

NORM_GUARD = 1e-12

Schedule = Union[float, Callable[[int], float]]


def _as_schedule(value: Schedule, name: str) -> Callable[[int], float]:
    if callable(value):
        return value

    v = float(value)

    def constant(t: int) -> float:
        return v

    constant.__name__ = "%s_const" % name
    return constant


@dataclass
class DenoiserOp:
    """A deterministic learned (or hand crafted) map on block vectors."""

    name: str
    apply: Callable[[BlockVector], BlockVector]
    metadata: dict = field(default_factory=dict)

    def __call__(self, x: BlockVector) -> BlockVector:
        return self.apply(x)


def identity_denoiser_op() -> DenoiserOp:
    return DenoiserOp("identity", lambda x: x.copy())


@dataclass
class LbsConfig:
    """Configuration for lbs_solve.

    rho = None resolves to 0.95 / L.  c = None resolves to 0.9 * mu /
    (2 lam(0)), the largest value still covered by the sufficient descent
    argument; larger values admit more learned steps and rely on the
    operational descent safeguard instead.  gamma and lam accept either a
    constant or a callable of the iteration index.
    """

    rho: Optional[float] = None
    gamma: Schedule = 1.0
    lam: Schedule = 1.0
    c: Optional[float] = None
    tol: float = 1e-4
    max_iters: int = 500
    descent_check: bool = True
    descent_slack: float = 1e-10
    instrument: bool = False

    def validate(self):
        if self.rho is not None and not self.rho > 0:
            raise DomainError("rho must be positive, got %g" % self.rho)
        if self.c is not None and self.c < 0:
            raise DomainError("c must be nonnegative, got %g" % self.c)
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")

    def resolve_rho(self, problem: SplitProblem) -> float:
        if self.rho is not None:
            return float(self.rho)
        L = problem.lipschitz
        if not L or L <= 0:
            raise DomainError("rho not set and problem has no Lipschitz modulus")
        return 0.95 / L

    def resolve_c(self, problem: SplitProblem) -> float:
        if self.c is not None:
            return float(self.c)
        lam0 = _as_schedule(self.lam, "lam")(0)
        if not lam0 > 0:
            raise DomainError("lam must be positive, got %g" % lam0)
        return 0.9 * problem.geometry.mu / (2.0 * lam0)


def penalized_objective(
    problem: SplitProblem, x: BlockVector, anchor: BlockVector, lam: float
) -> float:
    """Objective plus the scaled Bregman pull toward the anchor point."""
    if not lam > 0:
        raise DomainError("lam must be positive, got %g" % lam)
    return problem.objective(x) + bregman(problem.geometry, x, anchor) / lam


def t_f_step_block(
    problem: SplitProblem,
    point: BlockVector,
    anchor: BlockVector,
    n: int,
    lam: float,
    rho: float,
) -> np.ndarray:
    """Block n of the smooth-plus-Bregman gradient step at `point`."""
    if not lam > 0:
        raise DomainError("lam must be positive, got %g" % lam)
    if not rho > 0:
        raise DomainError("rho must be positive, got %g" % rho)
    geom = problem.geometry
    gn = problem.f_grad_block(point, n)
    pull = geom.grad_block(point.blocks[n], n) - geom.grad_block(anchor.blocks[n], n)
    return point.blocks[n] - rho * (gn + pull / lam)


def t_f_step(
    problem: SplitProblem,
    point: BlockVector,
    anchor: BlockVector,
    lam: float,
    rho: float,
) -> BlockVector:
    """Gradient step on f plus the Bregman penalty anchored at `anchor`.

    Computed with the fused full gradient when the problem provides one.
    """
    if not lam > 0:
        raise DomainError("lam must be positive, got %g" % lam)
    if not rho > 0:
        raise DomainError("rho must be positive, got %g" % rho)
    problem.check_point(point)
    if not point.same_structure(anchor):
        raise DimensionError("point and anchor structures differ")
    geom = problem.geometry
    grad = problem.f_grad(point)
    blocks = []
    for n in range(problem.n_blocks):
        pull = geom.grad_block(point.blocks[n], n) - geom.grad_block(anchor.blocks[n], n)
        blocks.append(point.blocks[n] - rho * (grad.blocks[n] + pull / lam))
    return BlockVector(blocks, point.labels)


def roc_check(
    problem: SplitProblem,
    point_with_u: BlockVector,
    z_n: np.ndarray,
    x_prev: BlockVector,
    n: int,
    lam: float,
    rho: float,
    c: float,
) -> tuple:
    """Relative optimality check for the proxed proposal in block n.

    `point_with_u` is the mixed point holding already updated blocks
    before n, the candidate u_n in slot n, and previous-iterate blocks
    after n.  Returns (satisfied, error_norm).  The error is the
    stationarity residual of the Bregman penalized objective at u_n, so
    it vanishes exactly when u_n solves the block subproblem.
    """
    if not lam > 0:
        raise DomainError("lam must be positive, got %g" % lam)
    if not rho > 0:
        raise DomainError("rho must be positive, got %g" % rho)
    if c < 0:
        raise DomainError("c must be nonnegative, got %g" % c)
    geom = problem.geometry
    u_n = point_with_u.blocks[n]
    x_n = x_prev.blocks[n]
    if u_n.shape != z_n.shape:
        raise DimensionError("z_n and u_n shapes differ")
    d = (z_n - u_n) / rho
    grad_f = problem.f_grad_block(point_with_u, n)
    pull = (geom.grad_block(u_n, n) - geom.grad_block(x_n, n)) / lam
    e = d + grad_f + pull
    e_norm = float(np.sqrt(np.sum(e * e)))
    threshold = c * float(np.sqrt(np.sum((u_n - x_n) ** 2)))
    return e_norm <= threshold, e_norm


def _psi_block(problem: SplitProblem, base: BlockVector, n: int, s: np.ndarray) -> float:
    """Block objective psi_n(s): f at the mixed point plus g_n(s)."""
    return float(problem.f_value(base.with_block(n, s))) + float(problem.g[n].value(s))


def ucus(
    problem: SplitProblem,
    base: BlockVector,
    n: int,
    v_n: np.ndarray,
    x_n_prev: np.ndarray,
    gamma: float,
) -> tuple:
    """Uniform averaging with a block objective comparison.

    Forms w = x_prev - gamma (x_prev - v) and keeps it only if it does
    not lose to v on psi_n; ties go to w.  Returns (block, 'w' or 'v').
    The result never exceeds psi_n(v).
    """
    if not (0.0 < gamma <= 1.0):
        raise DomainError("gamma must lie in (0, 1], got %g" % gamma)
    w_n = x_n_prev - gamma * (x_n_prev - v_n)
    psi_w = _psi_block(problem, base, n, w_n)
    psi_v = _psi_block(problem, base, n, v_n)
    if psi_w <= psi_v:
        return w_n, "w"
    return v_n, "v"


def descent_margin(mu: float, lam: float, c: float, rho: float, lipschitz: float) -> float:
    """Sufficient descent modulus max(mu/(2 lam) - c, 1/(2 rho) - L/2)."""
    if not lam > 0 or not rho > 0:
        raise DomainError("lam and rho must be positive")
    return max(mu / (2.0 * lam) - c, 1.0 / (2.0 * rho) - lipschitz / 2.0)


def _check_structure(x: BlockVector, ref: BlockVector, what: str):
    if not x.same_structure(ref):
        raise DimensionError("%s changed the block structure" % what)


def lbs_solve(
    problem: SplitProblem,
    x0: BlockVector,
    denoiser: Optional[DenoiserOp] = None,
    config: Optional[LbsConfig] = None,
    rec_error_fn=None,
):
    """Run the safeguarded learned splitting loop.

    Parameters
    ----------
    problem : SplitProblem
    x0 : BlockVector
        Starting point; must be structurally compatible with the problem.
    denoiser : DenoiserOp, optional
        The data-driven operator T_d; identity when omitted.
    config : LbsConfig, optional
    rec_error_fn : callable, optional
        Maps an iterate to a scalar reconstruction error for the trace.

    Returns
    -------
    (x, trace) : final iterate and the iteration trace.
    """
    if config is None:
        config = LbsConfig()
    config.validate()
    problem.check_point(x0)
    if not x0.is_finite():
        raise NumericalError("non-finite entries in the starting point")
    if denoiser is None:
        denoiser = identity_denoiser_op()
    rho = config.resolve_rho(problem)
    c = config.resolve_c(problem)
    gamma_at = _as_schedule(config.gamma, "gamma")
    lam_at = _as_schedule(config.lam, "lam")
    n_blocks = problem.n_blocks
    labels = problem.labels if problem.labels is not None else x0.labels

    trace = SolverTrace(labels, solver="lbs")
    trace.extra = {
        "rho": rho,
        "c": c,
        "denoiser": denoiser.name,
    }
    if config.instrument:
        trace.extra["block_psi"] = []

    x = x0.copy()
    psi_prev = problem.objective(x)
    if math.isnan(psi_prev):
        raise NumericalError("objective undefined at the starting point")
    trace.append(
        IterationRecord(
            t=0,
            psi=psi_prev,
            step_norm2=0.0,
            block_step_norm2=(0.0,) * n_blocks,
            v_step_norm2=(0.0,) * n_blocks,
            roc="-" * n_blocks,
            branch="-" * n_blocks,
            ucus="-" * n_blocks,
            iter_error=None,
            rec_error=rec_error_fn(x) if rec_error_fn is not None else None,
            time_ms=0.0,
        )
    )

    for t in range(1, config.max_iters + 1):
        t_start = time.perf_counter()
        lam = lam_at(t - 1)
        gamma = gamma_at(t - 1)
        if not lam > 0:
            raise DomainError("lam schedule produced %g at t=%d" % (lam, t - 1))
        if not (0.0 < gamma <= 1.0):
            raise DomainError("gamma schedule produced %g at t=%d" % (gamma, t - 1))

        y = denoiser.apply(x)
        _check_structure(y, x, "denoiser")
        if not y.is_finite():
            raise NumericalError("denoiser produced non-finite values at iteration %d" % t)
        z = t_f_step(problem, y, x, lam, rho)
        if not z.is_finite():
            raise NumericalError("gradient step produced non-finite values at iteration %d" % t)

        current = x
        roc_chars = []
        branch_chars = []
        ucus_chars = []
        roc_errors = []
        v_steps = []
        block_psi_rows = []
        for n in range(n_blocks):
            x_n = x.blocks[n]
            u_n = problem.g[n].prox(z.blocks[n], rho)
            mixed_u = current.with_block(n, u_n)
            ok, e_norm = roc_check(problem, mixed_u, z.blocks[n], x, n, lam, rho, c)
            roc_chars.append("1" if ok else "0")
            roc_errors.append(e_norm)

            branch = "l" if ok else "f"
            v_n = u_n
            psi_x_n = None
            if branch == "l" and config.descent_check:
                psi_x_n = _psi_block(problem, current, n, x_n)
                psi_v = _psi_block(problem, current, n, v_n)
                if psi_v > psi_x_n:
                    # learned candidate raises the block objective; use the
                    # model step instead of trusting it
                    branch = "f"
            if branch == "f":
                base = current.with_block(n, x_n)
                tf_n = t_f_step_block(problem, base, x, n, lam, rho)
                v_n = problem.g[n].prox(tf_n, rho)
            branch_chars.append(branch)
            v_steps.append(float(np.sum((v_n - x_n) ** 2)))

            chosen, choice = ucus(problem, current, n, v_n, x_n, gamma)
            ucus_chars.append(choice)
            if config.instrument:
                if psi_x_n is None:
                    psi_x_n = _psi_block(problem, current, n, x_n)
                block_psi_rows.append(
                    (
                        psi_x_n,
                        _psi_block(problem, current, n, v_n),
                        _psi_block(problem, current, n, chosen),
                    )
                )
            current = current.with_block(n, chosen)

        x_new = current
        if not x_new.is_finite():
            raise NumericalError("iterate became non-finite at iteration %d" % t)
        psi = problem.objective(x_new)
        if math.isnan(psi):
            raise NumericalError("objective undefined at iteration %d" % t)
        if config.descent_check and psi > psi_prev + config.descent_slack:
            raise SolverFault(
                "objective increased from %.17g to %.17g at iteration %d; "
                "check c, rho and lam against the descent conditions" % (psi_prev, psi, t),
                iteration=t,
            )

        block_steps = tuple(
            float(np.sum((a - b) ** 2)) for a, b in zip(x_new.blocks, x.blocks)
        )
        step2 = float(sum(block_steps))
        base_norm = x.norm()
        rel = math.sqrt(step2) if base_norm <= NORM_GUARD else math.sqrt(step2) / base_norm
        if config.instrument:
            trace.extra["block_psi"].append(tuple(block_psi_rows))
        trace.append(
            IterationRecord(
                t=t,
                psi=psi,
                step_norm2=step2,
                block_step_norm2=block_steps,
                v_step_norm2=tuple(v_steps),
                roc="".join(roc_chars),
                branch="".join(branch_chars),
                ucus="".join(ucus_chars),
                iter_error=math.log10(rel) if rel > 0 else None,
                rec_error=rec_error_fn(x_new) if rec_error_fn is not None else None,
                time_ms=(time.perf_counter() - t_start) * 1e3,
            )
        )
        x = x_new
        psi_prev = psi
        if rel <= config.tol:
            break
    return x, trace
