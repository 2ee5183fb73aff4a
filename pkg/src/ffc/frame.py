"""Charts with a vielbein (moving coframe) and the frame structure coefficients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, SingularFrame
from .expr import Expression, eval_jet, parse


def coordinate_names(dim):
    return [f"x{i}" for i in range(dim)]


def frame_names(dim):
    return [f"th{i}" for i in range(dim)]


@dataclass(frozen=True)
class Chart:
    """A coordinate chart of dimension ``dim`` with coframe entries ``vielbein[a][mu] = e^a_mu(x)``."""

    dim: int
    vielbein: tuple  # tuple of tuples of Expression

    def __post_init__(self):
        if len(self.vielbein) != self.dim or any(len(row) != self.dim for row in self.vielbein):
            raise ValueError(f"vielbein must be {self.dim}x{self.dim}")

    @classmethod
    def from_strings(cls, rows):
        dim = len(rows)
        names = coordinate_names(dim)
        return cls(dim, tuple(tuple(parse(str(s), names) for s in row) for row in rows))

    @classmethod
    def identity(cls, dim):
        return cls.from_strings([["1" if a == mu else "0" for mu in range(dim)] for a in range(dim)])

    @property
    def coordinates(self):
        return coordinate_names(self.dim)


@dataclass(frozen=True)
class FramePoint:
    """Coframe ``E[a, mu]``, frame ``Einv[mu, a]`` and ``dE[a, mu, nu] = d e^a_mu / d x^nu`` at ``x``."""

    x: np.ndarray
    E: np.ndarray
    Einv: np.ndarray
    dE: np.ndarray

    @property
    def dim(self):
        return len(self.x)

    def dEinv(self):
        """``dEinv[mu, a, nu] = d e_a^mu / d x^nu`` from d(E^-1) = -E^-1 (dE) E^-1."""
        return -np.einsum("mb,bsn,sa->man", self.Einv, self.dE, self.Einv)


def frame_point(chart: Chart, x, singular_tol: float = 1e-12) -> FramePoint:
    x = np.asarray(x, dtype=float)
    n = chart.dim
    if x.shape != (n,):
        raise ValueError(f"expected {n} coordinates, got shape {x.shape}")
    E = np.empty((n, n))
    dE = np.empty((n, n, n))
    seeds = list(range(n))
    for a in range(n):
        for mu in range(n):
            jet = eval_jet(chart.vielbein[a][mu], x, seeds, 1)
            if not jet.is_finite():
                raise DomainError(f"vielbein entry [{a}][{mu}] is not finite at x={x.tolist()}")
            E[a, mu] = jet.value
            dE[a, mu, :] = jet.grad()
    norm = np.linalg.norm(E, 2)
    det = np.linalg.det(E)
    if not abs(det) >= singular_tol * norm**n or norm == 0.0:
        raise SingularFrame(f"coframe is singular at x={x.tolist()} (det={det:.3g})")
    lu = scipy.linalg.lu_factor(E)
    Einv = scipy.linalg.lu_solve(lu, np.eye(n))
    return FramePoint(x, E, Einv, dE)


def structure_coefficients(fp: FramePoint) -> np.ndarray:
    """``c[a, b, c] = theta^a([e_b, e_c])``, antisymmetric in (b, c)."""
    F = fp.Einv
    dF = fp.dEinv()
    # e_b(e_c^rho) = e_b^nu d_nu e_c^rho
    deriv = np.einsum("nb,rcn->bcr", F, dF)
    bracket = deriv - deriv.transpose(1, 0, 2)  # [e_b, e_c]^rho
    c = np.einsum("ar,bcr->abc", fp.E, bracket)
    return 0.5 * (c - c.transpose(0, 2, 1))


def theta_of(fp: FramePoint, dx) -> np.ndarray:
    return fp.E @ np.asarray(dx, dtype=float)


def velocity_of(fp: FramePoint, theta) -> np.ndarray:
    """Coordinate velocity dx^mu = e_a^mu theta^a."""
    return fp.Einv @ np.asarray(theta, dtype=float)


def vielbein_depends_on(chart: Chart) -> set:
    used = set()
    for row in chart.vielbein:
        for e in row:
            used |= e.uses()
    return used
