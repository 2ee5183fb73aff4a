"""Berwald functions, the nonlinear connection and its defining conditions.

Notation: ``c[a, b, c] = theta^a([e_b, e_c])`` are the frame structure
coefficients, ``M[g] = -1/2 L_f c[f, b, g] theta^b``.  For a Hessian of rank
``n - D`` with invertible block on the ``bold`` indices the Berwald functions are

    G^a = (delta^a_b - theta^a L_b / L) L^{bc} M_c + lambda^I v_I^a      (b, c bold)

subject to the constraints ``C_I = -2 (M_I - L_{Ib} L^{bc} M_c)``.  The connection
is ``N^a_c = dG^a/dtheta^c - 1/2 c[a, b, c] theta^b``.

The theta-derivatives are exact: the same closed formula is run in Taylor-jet
arithmetic with the index split frozen at the base point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NotBlockForm, NotRegular
from .expr import evaluate
from .frame import Chart, frame_point, structure_coefficients
from .jet import Jet
from .metric import (
    DEFAULT_RANK_TOL,
    FinslerMetric,
    MetricAnalysis,
    _best_subset,
    _check_L,
    _numerical_rank,
    metric_taylor,
    rank_analysis,
)

BLOCK_FORM_TOL = 1e-10


def _val(x):
    return x.value if isinstance(x, Jet) else float(x)


def _inverse(A):
    """Gauss-Jordan inverse of a small square list-of-lists; works for floats and Jets."""
    n = len(A)
    M = [list(row) + [1.0 if i == j else 0.0 for j in range(n)] for i, row in enumerate(A)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(_val(M[r][col])))
        M[col], M[piv] = M[piv], M[col]
        p = M[col][col]
        M[col] = [x / p for x in M[col]]
        for r in range(n):
            if r != col:
                f = M[r][col]
                if _val(f) != 0.0 or isinstance(f, Jet):
                    M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return [row[n:] for row in M]


def _m_vector(La, c, theta):
    """M[g] = -1/2 L_f c[f, b, g] theta^b."""
    n = len(theta)
    M = []
    for g in range(n):
        total = 0.0
        for f in range(n):
            inner = 0.0
            for b in range(n):
                coef = c[f, b, g]
                if coef != 0.0:
                    inner = inner + coef * theta[b]
            if not (isinstance(inner, float) and inner == 0.0):
                total = total + La[f] * inner
        M.append(-0.5 * total)
    return M


def _berwald_core(L, La, Lab, theta, c, partition, Linv=None, lam=None, v0=None, L0=None):
    """Closed-form G^a and C_I, generic over floats and Jets.

    ``lam``/``v0`` are multiplier values and null vectors at the base point; the
    multipliers are extended with degree two (``lam * (L/L0)^2``) and the null
    vectors with degree zero (projection of ``v0`` onto the null space at theta).
    """
    n = len(theta)
    bold = list(partition.bold)
    M = _m_vector(La, c, theta)
    if Linv is None:
        Linv = _inverse([[Lab[b][d] for d in bold] for b in bold])
    Mb = [M[d] for d in bold]
    lam_bold = [sum((Linv[i][j] * Mb[j] for j in range(len(bold))), 0.0) for i in range(len(bold))]
    along = sum((La[b] * lb for b, lb in zip(bold, lam_bold)), 0.0)
    G = []
    for a in range(n):
        g = -(theta[a] * along) / L
        if a in bold:
            g = g + lam_bold[bold.index(a)]
        G.append(g)

    C = []
    for I in partition.null:
        acc = M[I]
        for b, lb in zip(bold, lam_bold):
            acc = acc - Lab[I][b] * lb
        C.append(-2.0 * acc)

    if lam is not None and v0 is not None and np.any(np.asarray(lam) != 0.0):
        scale = (L / L0) * (L / L0)
        for lamI, w in zip(lam, v0):
            if lamI == 0.0:
                continue
            vec = _project_null(L, La, Lab, theta, bold, Linv, w)
            for a in range(n):
                G[a] = G[a] + lamI * scale * vec[a]
    return G, C


def _project_null(L, La, Lab, theta, bold, Linv, w):
    """Map ``w`` into ker(L_ab) with L_a v^a = 0; the identity on vectors already there."""
    n = len(theta)
    Lw = sum((La[a] * w[a] for a in range(n) if w[a] != 0.0), 0.0)
    u = [w[a] - theta[a] * Lw / L for a in range(n)]
    y = [sum((Lab[b][d] * u[d] for d in range(n)), 0.0) for b in bold]
    z = [sum((Linv[i][j] * y[j] for j in range(len(bold))), 0.0) for i in range(len(bold))]
    Lz = sum((La[b] * zb for b, zb in zip(bold, z)), 0.0)
    out = []
    for a in range(n):
        va = u[a] + theta[a] * Lz / L
        if a in bold:
            va = va - z[bold.index(a)]
        out.append(va)
    return out


def _lambda_vector(ma, lambdaI):
    if lambdaI is None:
        return np.zeros(ma.D)
    lam = np.asarray(lambdaI, dtype=float).reshape(-1)
    if lam.shape != (ma.D,):
        raise ValueError(f"expected {ma.D} multipliers, got {lam.size}")
    return lam


def berwald_general(ma: MetricAnalysis, c, lambdaI=None) -> np.ndarray:
    """Berwald functions ``G^a`` at the analysed point (general split formula)."""
    lam = _lambda_vector(ma, lambdaI)
    G, _ = _berwald_core(ma.L, ma.La, ma.Lab, ma.theta, c, ma.partition, Linv=ma.Linv_BB)
    return np.array(G) + lam @ ma.v


def constraints(ma: MetricAnalysis, c) -> np.ndarray:
    _, C = _berwald_core(ma.L, ma.La, ma.Lab, ma.theta, c, ma.partition, Linv=ma.Linv_BB)
    return np.array(C, dtype=float)


def m_vector(ma: MetricAnalysis, c) -> np.ndarray:
    return np.array(_m_vector(ma.La, c, ma.theta), dtype=float)


def block_form_indices(ma: MetricAnalysis, tol: float = BLOCK_FORM_TOL):
    """Null labels I if the Hessian splits with ``L_I = 0`` and vanishing I rows; else raise."""
    for I in ma.null:
        if abs(ma.La[I]) > tol or np.max(np.abs(ma.Lab[I])) > tol:
            raise NotBlockForm(f"index {I}: |L_I|={abs(ma.La[I]):.3g}, max|L_I.|={np.max(np.abs(ma.Lab[I])):.3g}")
    return ma.null


def reduced_inverse(ma: MetricAnalysis) -> np.ndarray:
    """The matrix ``Ltilde^{ab}`` (zero on the null rows/columns)."""
    n = ma.dim
    th, L, La = ma.theta, ma.L, ma.La
    bold = list(ma.bold)
    zero = ma.partition.zero
    W = ma.Linv_BB
    w = W @ La[bold]
    q = float(La[bold] @ w)
    t0 = th[zero] / L
    tb = th[bold]
    out = np.zeros((n, n))
    out[zero, zero] = t0 * t0 * q
    row = -t0 * (w - q * tb / L)
    out[zero, bold] = row
    out[bold, zero] = row
    out[np.ix_(bold, bold)] = W - np.outer(w, tb) / L - np.outer(tb, w) / L + q * np.outer(tb, tb) / L**2
    return out


def berwald_simple(ma: MetricAnalysis, c, lambdaI=None) -> np.ndarray:
    """Berwald functions via the reduced inverse; requires the block form of the Hessian."""
    null = block_form_indices(ma)
    lam = _lambda_vector(ma, lambdaI)
    M = m_vector(ma, c)
    G = reduced_inverse(ma) @ M
    for I, lamI in zip(null, lam):
        G[I] = lamI
    return G


@dataclass(frozen=True)
class ConnectionData:
    x: np.ndarray
    theta: np.ndarray
    G: np.ndarray
    N: np.ndarray  # N[a, c]
    dN: np.ndarray  # dN[a, c, b] = d N^a_c / d theta^b
    C: np.ndarray
    lambdaI: np.ndarray
    cartan_residual: np.ndarray  # [a, b, c]
    metricity_residual: np.ndarray  # [c]
    analysis: MetricAnalysis
    c: np.ndarray

    @property
    def D(self):
        return self.analysis.D


def connection_at(
    chart: Chart,
    metric: FinslerMetric,
    x,
    theta,
    lambdaI=None,
    *,
    rank_tol: float = DEFAULT_RANK_TOL,
    singular_tol: float = 1e-12,
) -> ConnectionData:
    """G, N, dN/dtheta, constraints and both residuals at ``(x, theta)``."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n = chart.dim
    if metric.dim != n:
        raise ValueError(f"metric has {metric.dim} frame components, chart has dimension {n}")
    fp = frame_point(chart, x, singular_tol)
    c = structure_coefficients(fp)

    L4 = metric_taylor(metric, theta, 4)
    ma = rank_analysis(L4.value, L4.grad(), L4.hess(), theta, rank_tol)
    lam = _lambda_vector(ma, lambdaI)

    Lj = L4.truncate(2)
    La1 = [L4.partial(a) for a in range(n)]
    Laj = [j.truncate(2) for j in La1]
    Labj = [[La1[a].partial(b) for b in range(n)] for a in range(n)]
    thj = [Jet.variable(theta[a], a, n, 2) for a in range(n)]
    Gj, Cj = _berwald_core(Lj, Laj, Labj, thj, c, ma.partition, lam=lam, v0=ma.v, L0=ma.L)

    G = np.array([_val(g) for g in Gj])
    grads = np.array([g.grad() if isinstance(g, Jet) else np.zeros(n) for g in Gj])
    hesses = np.array([g.hess() if isinstance(g, Jet) else np.zeros((n, n)) for g in Gj])
    twist = 0.5 * np.einsum("abc,b->ac", c, theta)
    N = grads - twist
    dN = hesses - 0.5 * c.transpose(0, 2, 1)  # dN[a, c, b]
    cartan = dN.transpose(0, 2, 1) - dN + c  # dN^a_c/dth^b - dN^a_b/dth^c + c^a_bc
    metricity = ma.La @ N
    C = np.array([_val(v) for v in Cj])
    return ConnectionData(x, theta, G, N, dN, C, lam, cartan, metricity, ma, c)


def nonlinear_connection(chart, metric, x, theta, lambdaI=None, **kw) -> np.ndarray:
    return connection_at(chart, metric, x, theta, lambdaI, **kw).N


def verify(chart, metric, x, theta, lambdaI=None, **kw):
    """``(cartan_residual, metricity_residual)`` at ``(x, theta)``."""
    cd = connection_at(chart, metric, x, theta, lambdaI, **kw)
    return cd.cartan_residual, cd.metricity_residual


def holonomic_oracle(chart: Chart, metric: FinslerMetric, x, dx, rank_tol: float = DEFAULT_RANK_TOL):
    """Berwald functions from the coordinate formula, for regular metrics only.

    Builds ``L(x, dx) = L(E(x) dx)`` and evaluates

        G^mu = 1/2 (dx^r dL/dx^r) dx^mu / L + L^{ab} M_b (delta^mu_a - dx^mu L_a / L),
        M_mu = 1/2 (-dL/dx^mu + dx^r d2L/ddx^mu dx^r)

    with the Hessian in ``dx`` inverted on a pivoted (n)-block.  Returns
    ``(G^mu, G^a)``, the latter converted to the frame as
    ``G^a = e^a_mu (G^mu + 1/2 theta^b dx^r d_r e_b^mu)``.
    """
    x = np.asarray(x, dtype=float)
    dx = np.asarray(dx, dtype=float)
    n = chart.dim
    m = 2 * n
    xj = [Jet.variable(x[i], i, m, 2) for i in range(n)]
    dxj = [Jet.variable(dx[i], n + i, m, 2) for i in range(n)]
    E = [[evaluate(chart.vielbein[a][mu], xj) for mu in range(n)] for a in range(n)]
    theta = [sum((E[a][mu] * dxj[mu] for mu in range(n)), 0.0) for a in range(n)]
    Lj = evaluate(metric.L, theta)
    if not isinstance(Lj, Jet):
        Lj = Jet.constant(float(Lj), m, 2)
    L = Lj.value
    _check_L(L, dx)
    grad, hess = Lj.grad(), Lj.hess()
    Lx, Ldx = grad[:n], grad[n:]
    Hdd = hess[n:, n:]
    Hdx = hess[n:, :n]  # d2L / d(dx^mu) d(x^rho)
    Mvec = 0.5 * (-Lx + Hdx @ dx)

    _, s, _ = np.linalg.svd(Hdd)
    r = _numerical_rank(s, rank_tol)
    if r != n - 1:
        raise NotRegular(f"holonomic Hessian has rank {r}, need {n - 1}")
    bold, _ = _best_subset(range(n), r, lambda sub: abs(np.linalg.det(Hdd[np.ix_(sub, sub)])))
    bold = list(bold)
    W = np.linalg.inv(Hdd[np.ix_(bold, bold)])
    lam_bold = W @ Mvec[bold]
    G_mu = 0.5 * (dx @ Lx) * dx / L
    G_mu[bold] += lam_bold
    G_mu -= dx * (Ldx[bold] @ lam_bold) / L

    fp = frame_point(chart, x)
    th = fp.E @ dx
    dF = fp.dEinv()
    G_a = fp.E @ (G_mu + 0.5 * np.einsum("b,r,mbr->m", th, dx, dF))
    return G_mu, G_a
