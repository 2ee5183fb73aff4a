"""Finsler metrics L(theta) in frame components: jets, homogeneity, Hessian rank analysis."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BlockSingular,
    DomainError,
    NotHomogeneous,
    NullDirection,
    ParseError,
    RankUnstable,
)
from .expr import Expression, eval_float, eval_jet, parse
from .frame import coordinate_names, frame_names

DEFAULT_RANK_TOL = 1e-9
NULL_EPS = 1e-12


@dataclass(frozen=True)
class FinslerMetric:
    """``L`` as an expression in the frame components ``th0..th{n}`` only."""

    L: Expression

    @classmethod
    def from_string(cls, text: str, dim: int) -> "FinslerMetric":
        try:
            expr = parse(text, frame_names(dim))
        except ParseError as exc:
            coords = set(coordinate_names(dim))
            if any(f"'{name}'" in str(exc) for name in coords):
                raise ParseError(f"metric must depend on th0..th{dim - 1} only: {exc}", exc.offset) from None
            raise
        return cls(expr)

    @property
    def dim(self) -> int:
        return len(self.L.variables)

    def __call__(self, theta) -> float:
        return eval_float(self.L, theta)


def _check_L(value, theta, eps=NULL_EPS):
    if not np.isfinite(value):
        raise DomainError(f"metric is not finite at theta={list(theta)}")
    if not abs(value) > eps * np.linalg.norm(theta):
        raise NullDirection(f"L(theta)={value:.3g} vanishes at theta={list(theta)}")


def metric_taylor(metric: FinslerMetric, theta, order: int):
    """Taylor jet of L around ``theta`` in all frame components."""
    theta = np.asarray(theta, dtype=float)
    # plain value first: on the null cone the derivatives blow up before L does
    _check_L(metric(theta), theta)
    jet = eval_jet(metric.L, theta, list(range(metric.dim)), order)
    _check_L(jet.value, theta)
    if not jet.is_finite():
        raise DomainError(f"metric derivatives are not finite at theta={theta.tolist()}")
    return jet


def metric_jet(metric: FinslerMetric, theta):
    """``(L, L_a, L_ab)`` at ``theta``."""
    jet = metric_taylor(metric, theta, 2)
    return jet.value, jet.grad(), jet.hess()


def homogeneity_check(metric: FinslerMetric, theta, lambdas: Sequence[float] = (0.5, 2.0, 3.0)) -> float:
    """Largest ``|L(lam*theta) - lam*L(theta)| / |lam*L(theta)|`` over ``lambdas``."""
    theta = np.asarray(theta, dtype=float)
    base = metric(theta)
    worst = 0.0
    for lam in lambdas:
        if lam <= 0:
            raise ValueError("homogeneity is only required for positive scalings")
        ref = lam * base
        worst = max(worst, abs(metric(lam * theta) - ref) / max(abs(ref), np.finfo(float).tiny))
    return worst


@dataclass(frozen=True)
class Partition:
    """Index split of the frame components.

    ``bold``: indices whose Hessian block is inverted; ``null``: the constraint
    labels I (one per null vector); ``zero``: the remaining distinguished index.
    """

    bold: tuple
    null: tuple
    zero: int


@dataclass(frozen=True)
class MetricAnalysis:
    theta: np.ndarray
    L: float
    La: np.ndarray
    Lab: np.ndarray
    partition: Partition
    Linv_BB: np.ndarray
    v: np.ndarray  # (D, dim), rows are null vectors v_I
    ell: np.ndarray  # (n - D, dim), rows are ell_b for b in bold
    tol: float
    singular_values: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return len(self.theta)

    @property
    def rank(self):
        return len(self.partition.bold)

    @property
    def D(self):
        return len(self.partition.null)

    @property
    def bold(self):
        return self.partition.bold

    @property
    def null(self):
        return self.partition.null

    def basis_matrix(self) -> np.ndarray:
        """Rows ``theta/L, ell_b, v_I``; full rank by construction of the split."""
        return np.vstack([self.theta / self.L, self.ell, self.v])


def _best_subset(candidates, size, score):
    best, best_val = None, -1.0
    for subset in itertools.combinations(candidates, size):
        val = score(subset)
        if val > best_val:
            best, best_val = subset, val
    return best, best_val


def _numerical_rank(s, tol):
    smax = s[0] if len(s) else 0.0
    if smax == 0.0:
        return 0
    r = int(np.sum(s > tol * smax))
    if 0 < r < len(s) and s[r] > 0.0 and s[r - 1] / s[r] < 10.0:
        raise RankUnstable(
            f"singular values {s[r - 1]:.3g} and {s[r]:.3g} straddle the rank threshold {tol * smax:.3g}"
        )
    return r


def rank_analysis(
    L: float,
    La,
    Lab,
    theta,
    tol: float = DEFAULT_RANK_TOL,
    partition: Optional[Partition] = None,
) -> MetricAnalysis:
    """Rank/null-space analysis of the Hessian ``L_ab``.

    The Hessian of a degree-one metric always annihilates ``theta``; ``D`` counts
    the extra zero modes.  Null vectors are projected off ``theta`` along ``L_a``,
    then normalised so that ``v[:, null]`` is upper triangular with positive
    diagonal (``v_I = delta_I`` whenever that is possible), and made orthonormal.
    Pass ``partition`` to reuse a split chosen elsewhere instead of re-pivoting.
    """
    theta = np.asarray(theta, dtype=float)
    La = np.asarray(La, dtype=float)
    Lab = np.asarray(Lab, dtype=float)
    dim = len(theta)
    _check_L(L, theta)

    _, s, vt = np.linalg.svd(Lab)
    r = _numerical_rank(s, tol)
    if r >= dim:
        raise NotHomogeneous("Hessian has full rank; L is not positively homogeneous of degree one")
    D = dim - 1 - r

    if D > 0:
        basis = vt[r:]
        projected = basis - np.outer(basis @ La / L, theta)
        _, ps, pvt = np.linalg.svd(projected)
        V = pvt[:D]
    else:
        V = np.zeros((0, dim))

    smax = s[0] if len(s) else 0.0
    if partition is None:
        bold, best = _best_subset(range(dim), r, lambda sub: abs(np.linalg.det(Lab[np.ix_(sub, sub)])) if sub else 1.0)
        if r > 0 and not best > tol * smax**r:
            raise BlockSingular(f"no {r}x{r} principal block of the Hessian is invertible")
        rest = [i for i in range(dim) if i not in bold]
        null, _ = _best_subset(rest, D, lambda sub: abs(np.linalg.det(V[:, list(sub)])) if sub else 1.0)
        zero = [i for i in rest if i not in null][0]
        partition = Partition(tuple(bold), tuple(null), zero)
    elif len(partition.bold) != r:
        raise RankUnstable(f"Hessian rank {r} differs from the frozen partition's {len(partition.bold)}")

    bold = list(partition.bold)
    block = Lab[np.ix_(bold, bold)]
    if r > 0 and not abs(np.linalg.det(block)) > tol * smax**r:
        raise BlockSingular(f"Hessian block {bold} is singular")
    Linv = np.linalg.inv(block) if r > 0 else np.zeros((0, 0))

    if D > 0:
        VI = V[:, list(partition.null)]
        V = np.linalg.solve(VI, V)
        q, rr = np.linalg.qr(V.T)
        V = (q * np.sign(np.diag(rr))).T

    ell = np.eye(dim)[bold] - np.outer(La[bold], theta) / L
    return MetricAnalysis(theta, L, La, Lab, partition, Linv, V, ell, tol, s)


def analyze(metric: FinslerMetric, theta, tol: float = DEFAULT_RANK_TOL, partition=None) -> MetricAnalysis:
    L, La, Lab = metric_jet(metric, theta)
    return rank_analysis(L, La, Lab, theta, tol, partition)
