"""Auto-parallel integration of the Euler-Lagrange equations in frame form.

The state is ``(x, Theta)`` with ``Theta^a = theta^a(c')``; the flow is

    dx^mu/ds    = e_a^mu(x) Theta^a
    dTheta^a/ds = -2 G^a(x, Theta) + lambda0 Theta^a / L(Theta)

``lambda0`` fixes the parametrisation (0 gives constant L); multipliers
``lambda^I`` enter through ``G``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

from .connection import berwald_general, constraints
from .errors import StepFailure, TooFewSamples
from .expr import Expression, eval_float, parse
from .frame import Chart, coordinate_names, frame_names, frame_point, structure_coefficients
from .metric import DEFAULT_RANK_TOL, FinslerMetric, analyze, metric_jet

SVD_CUTOFF = 1e-8


@dataclass(frozen=True)
class GeodesicState:
    s: float
    x: np.ndarray
    Theta: np.ndarray

    def as_vector(self):
        return np.concatenate([self.x, self.Theta])


def gauge_expression(text: str, dim: int) -> Expression:
    """Parse a lambda0 rule; it may use x0..x{n} and th0..th{n}."""
    return parse(text, coordinate_names(dim) + frame_names(dim))


@dataclass
class IntegrationConfig:
    method: str = "rk45"  # "rk45" (adaptive) or "rk4" (fixed step)
    s_max: float = 1.0
    step: float = 1e-2
    rtol: float = 1e-10
    atol: float = 1e-12
    samples: int = 101
    lambda0: Optional[Expression] = None
    lambdaI: Union[str, Sequence[float]] = "zero"  # "zero", "solve" or fixed values
    drift_threshold: float = 1e-6
    rank_tol: float = DEFAULT_RANK_TOL
    singular_tol: float = 1e-12

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.step > 0 and self.rtol > 0 and self.atol > 0 and self.s_max > 0):
            raise ValueError("steps, tolerances and s_max must be positive")
        if self.samples < 2:
            raise ValueError("need at least two output samples")
        if isinstance(self.lambdaI, str) and self.lambdaI not in ("zero", "solve"):
            raise ValueError(f"unknown lambdaI rule {self.lambdaI!r}")


@dataclass(frozen=True)
class MultiplierSolve:
    values: np.ndarray
    rank: int  # number of multipliers fixed by the constraints (second class)

    @property
    def first_class(self):
        return len(self.values) - self.rank


def _local(chart, metric, x, Theta, config, partition=None):
    fp = frame_point(chart, x, config.singular_tol)
    c = structure_coefficients(fp)
    ma = analyze(metric, Theta, config.rank_tol, partition)
    return fp, c, ma


def _flow(fp, c, ma, lam, lambda0):
    G = berwald_general(ma, c, lam)
    dTheta = -2.0 * G
    if lambda0:
        dTheta = dTheta + lambda0 * ma.theta / ma.L
    return fp.Einv @ ma.theta, dTheta


def _lambda0(config, x, Theta):
    if config.lambda0 is None:
        return 0.0
    return eval_float(config.lambda0, np.concatenate([x, Theta]))


def solve_second_class(chart: Chart, metric: FinslerMetric, state: GeodesicState, config: IntegrationConfig) -> MultiplierSolve:
    """Multipliers making the constraints stationary along the flow.

    ``dC/ds`` is affine in ``lambda^I``; its offset and slope are obtained by
    central differences of ``C`` along the flow (index split frozen).  The
    slope is inverted with a truncated SVD; directions it does not see are first
    class and their multipliers are left at zero.
    """
    x, Theta = np.asarray(state.x, float), np.asarray(state.Theta, float)
    fp, c, ma = _local(chart, metric, x, Theta, config)
    D = ma.D
    if D == 0:
        return MultiplierSolve(np.zeros(0), 0)
    lambda0 = _lambda0(config, x, Theta)
    h = 1e-6 * (1.0 + np.linalg.norm(np.concatenate([x, Theta])))

    def C_at(xx, tt):
        fp2, c2, ma2 = _local(chart, metric, xx, tt, config, ma.partition)
        return constraints(ma2, c2)

    def dC(lam):
        dx, dT = _flow(fp, c, ma, lam, lambda0)
        return (C_at(x + h * dx, Theta + h * dT) - C_at(x - h * dx, Theta - h * dT)) / (2.0 * h)

    offset = dC(np.zeros(D))
    slope = np.column_stack([dC(np.eye(D)[k]) - offset for k in range(D)])
    u, s, vt = np.linalg.svd(slope)
    keep = s > SVD_CUTOFF * max(1.0, s[0] if len(s) else 0.0)
    rank = int(np.sum(keep))
    lam = -(vt[:rank].T @ ((u[:, :rank].T @ offset) / s[:rank]))
    return MultiplierSolve(lam, rank)


def _multipliers(chart, metric, state, config, ma):
    rule = config.lambdaI
    if ma.D == 0:
        return None
    if isinstance(rule, str):
        if rule == "zero":
            return None
        return solve_second_class(chart, metric, state, config).values
    return np.asarray(rule, dtype=float)


def rhs(chart: Chart, metric: FinslerMetric, state: GeodesicState, config: IntegrationConfig):
    """``(dx/ds, dTheta/ds)`` at ``state``."""
    x, Theta = np.asarray(state.x, float), np.asarray(state.Theta, float)
    fp, c, ma = _local(chart, metric, x, Theta, config)
    lam = _multipliers(chart, metric, state, config, ma)
    return _flow(fp, c, ma, lam, _lambda0(config, x, Theta))


def initial_state(chart: Chart, x, *, Theta=None, dx=None, s: float = 0.0) -> GeodesicState:
    """Build a state from frame components or from a coordinate velocity."""
    x = np.asarray(x, dtype=float)
    if (Theta is None) == (dx is None):
        raise ValueError("give exactly one of Theta or dx")
    if Theta is None:
        Theta = frame_point(chart, x).E @ np.asarray(dx, dtype=float)
    return GeodesicState(s, x, np.asarray(Theta, dtype=float))


@dataclass
class GeodesicResult:
    states: list
    diagnostics: dict = field(default_factory=dict)

    @property
    def s(self):
        return np.array([st.s for st in self.states])

    @property
    def x(self):
        return np.array([st.x for st in self.states])

    @property
    def Theta(self):
        return np.array([st.Theta for st in self.states])


def _rk4(fun, s0, y0, s_max, step):
    nsteps = max(1, int(math.ceil((s_max - s0) / step - 1e-12)))
    h = (s_max - s0) / nsteps
    ss = s0 + h * np.arange(nsteps + 1)
    ys = [np.asarray(y0, dtype=float)]
    y = ys[0]
    for k in range(nsteps):
        s = ss[k]
        k1 = fun(s, y)
        k2 = fun(s + h / 2, y + h / 2 * k1)
        k3 = fun(s + h / 2, y + h / 2 * k2)
        k4 = fun(s + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys.append(y)
    return ss, np.array(ys)


def integrate(chart: Chart, metric: FinslerMetric, init: GeodesicState, config: IntegrationConfig) -> GeodesicResult:
    """Integrate from ``init`` over ``[init.s, init.s + s_max]``.

    ``rk45`` reports ``config.samples`` equally spaced states; ``rk4`` reports
    every step.  Diagnostics: L drift, constraint values and their drift from
    the initial point, EL residuals.
    """
    n = chart.dim

    def fun(s, y):
        dx, dT = rhs(chart, metric, GeodesicState(s, y[:n], y[n:]), config)
        return np.concatenate([dx, dT])

    s0 = float(init.s)
    y0 = init.as_vector()
    if config.method == "rk45":
        grid = np.linspace(s0, s0 + config.s_max, config.samples)
        sol = solve_ivp(fun, (s0, s0 + config.s_max), y0, method="RK45", t_eval=grid,
                        rtol=config.rtol, atol=config.atol, first_step=min(config.step, config.s_max))
        if not sol.success:
            raise StepFailure(sol.message)
        ss, ys = sol.t, sol.y.T
    else:
        ss, ys = _rk4(fun, s0, y0, s0 + config.s_max, config.step)

    states = [GeodesicState(float(s), y[:n].copy(), y[n:].copy()) for s, y in zip(ss, ys)]
    result = GeodesicResult(states)
    result.diagnostics = diagnostics(chart, metric, result, config)
    return result


def diagnostics(chart, metric, result: GeodesicResult, config: IntegrationConfig) -> dict:
    Ls, maxC, Cs = [], [], []
    first = None
    for st in result.states:
        fp, c, ma = _local(chart, metric, st.x, st.Theta, config, first)
        first = first or ma.partition
        C = constraints(ma, c) if ma.D else np.zeros(0)
        Ls.append(ma.L)
        Cs.append(C)
        maxC.append(float(np.max(np.abs(C))) if C.size else 0.0)
    Ls = np.array(Ls)
    Cs = np.array(Cs)
    out = {
        "L": Ls,
        "L_drift": float(np.max(np.abs(Ls - Ls[0]))),
        "max_C": np.array(maxC),
        "max_abs_C": float(max(maxC)),
        "C_drift": float(np.max(np.abs(Cs - Cs[0]))) if Cs.size else 0.0,
    }
    out["constraint_drift_exceeded"] = out["C_drift"] > config.drift_threshold
    if len(result.states) >= 5:
        r = el_residual(chart, metric, result, config.singular_tol)
        out["el_residual"] = r
        out["max_el_residual"] = float(np.max(np.abs(r)))
    return out


def _d_ds(values, h):
    """Fourth-order finite-difference derivative along axis 0 of uniformly spaced samples."""
    f = np.asarray(values, dtype=float)
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return d


def el_residual(chart: Chart, metric: FinslerMetric, trajectory, singular_tol: float = 1e-12) -> np.ndarray:
    """``r_a(s) = d/ds L_a(Theta) + L_b c^b_{ac} Theta^c`` at every sample (rows)."""
    states = trajectory.states if isinstance(trajectory, GeodesicResult) else list(trajectory)
    if len(states) < 5:
        raise TooFewSamples(f"need at least 5 samples, got {len(states)}")
    s = np.array([st.s for st in states])
    steps = np.diff(s)
    h = steps.mean()
    if not np.allclose(steps, h, rtol=1e-9, atol=0.0):
        raise ValueError("el_residual needs equally spaced samples")
    La, twist = [], []
    for st in states:
        c = structure_coefficients(frame_point(chart, st.x, singular_tol))
        _, la, _ = metric_jet(metric, st.Theta)
        La.append(la)
        twist.append(np.einsum("b,bac,c->a", la, c, st.Theta))
    return _d_ds(np.array(La), h) + np.array(twist)
