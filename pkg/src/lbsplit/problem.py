"""Composite problem container shared by every solver in the package.

A problem is  min_x f(x) + sum_n g_n(x_n)  with f smooth on the whole
block vector and each g_n proximable on its own block.  Solvers only see
this interface, so the imaging applications and the toy test problems
plug into the same machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import BlockVector
from .errors import DimensionError, DomainError
from .geometry import BregmanGeometry
from .prox import ProxFn

__all__ = ["SplitProblem"]


@dataclass
class SplitProblem:
    """Smooth plus block separable nonsmooth objective.

    f_value        full objective smooth part, BlockVector -> float
    f_grad_block   partial gradient of f in block n at an assembled point
    g              one ProxFn per block
    geometry       Bregman geometry used by the proximal penalty
    lipschitz      Lipschitz modulus of the full gradient of f
    f_grad_full    optional fused full gradient (defaults to stacking
                   f_grad_block over all blocks)
    f_prox         optional proximal map of f itself, needed only by the
                   reflection based baselines
    """

    f_value: Callable[[BlockVector], float]
    f_grad_block: Callable[[BlockVector, int], np.ndarray]
    g: Sequence[ProxFn]
    geometry: BregmanGeometry
    lipschitz: float
    f_grad_full: Optional[Callable[[BlockVector], BlockVector]] = None
    f_prox: Optional[Callable[[BlockVector, float], BlockVector]] = None
    labels: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.g = tuple(self.g)
        if not self.g:
            raise DimensionError("need at least one block term g_n")
        if self.lipschitz is not None and self.lipschitz < 0:
            raise DomainError("lipschitz must be nonnegative")
        if self.labels is not None:
            self.labels = tuple(self.labels)
            if len(self.labels) != len(self.g):
                raise DimensionError("labels and g lengths differ")

    @property
    def n_blocks(self) -> int:
        return len(self.g)

    def check_point(self, x: BlockVector):
        if x.n_blocks != self.n_blocks:
            raise DimensionError(
                "point has %d blocks, problem has %d" % (x.n_blocks, self.n_blocks)
            )

    def g_value(self, x: BlockVector) -> float:
        self.check_point(x)
        return float(sum(gn.value(b) for gn, b in zip(self.g, x.blocks)))

    def objective(self, x: BlockVector) -> float:
        """Full objective f(x) + sum_n g_n(x_n)."""
        return float(self.f_value(x)) + self.g_value(x)

    def f_grad(self, x: BlockVector) -> BlockVector:
        self.check_point(x)
        if self.f_grad_full is not None:
            return self.f_grad_full(x)
        return BlockVector(
            [self.f_grad_block(x, n) for n in range(self.n_blocks)], x.labels
        )

    def prox_all(self, x: BlockVector, rho: float) -> BlockVector:
        """Apply each block prox at parameter rho (the product space prox)."""
        self.check_point(x)
        return BlockVector(
            [gn.prox(b, rho) for gn, b in zip(self.g, x.blocks)], x.labels
        )
