import math

import numpy as np
import pytest

from ffc.config import BUILTINS, ProblemConfig
from ffc.errors import TooFewSamples
from ffc.frame import Chart
from ffc.geodesic import (
    GeodesicState,
    IntegrationConfig,
    el_residual,
    gauge_expression,
    initial_state,
    integrate,
    rhs,
    solve_second_class,
)
from ffc.metric import FinslerMetric

SPHERE = Chart.from_strings([["1", "0"], ["0", "sin(x0)"]])
EUCLID = FinslerMetric.from_string("sqrt(th0^2 + th1^2)", 2)
CONTACT = Chart.from_strings([["1", "0", "0.5*x1^2"], ["0", "1", "0"], ["0", "0", "1"]])
LINEAR3 = FinslerMetric.from_string("th0", 3)


def great_circle(theta0, s):
    """Unit sphere, start at (pi/2, 0) with unit frame velocity theta0; returns (polar, azimuth)."""
    p = np.array([1.0, 0.0, 0.0])
    t = theta0[0] * np.array([0.0, 0.0, -1.0]) + theta0[1] * np.array([0.0, 1.0, 0.0])
    q = np.outer(np.cos(s), p) + np.outer(np.sin(s), t)
    return np.column_stack([np.arccos(q[:, 2]), np.arctan2(q[:, 1], q[:, 0])])


def test_flat_straight_line():
    res = integrate(Chart.identity(2), EUCLID, initial_state(Chart.identity(2), [0, 0], Theta=[1, 2]), IntegrationConfig())
    np.testing.assert_allclose(res.x[-1], [1, 2], atol=1e-14)
    assert res.diagnostics["max_el_residual"] <= 1e-12


def test_equator_is_stationary_direction():
    dx, dT = rhs(SPHERE, EUCLID, GeodesicState(0.0, np.array([math.pi / 2, 0.0]), np.array([0.0, 1.0])), IntegrationConfig())
    np.testing.assert_allclose(dT, 0, atol=1e-15)
    np.testing.assert_allclose(dx, [0, 1], atol=1e-15)


def test_equator_quarter_turn():
    cfg = IntegrationConfig(s_max=math.pi / 2, rtol=1e-10)
    res = integrate(SPHERE, EUCLID, initial_state(SPHERE, [math.pi / 2, 0], Theta=[0, 1]), cfg)
    np.testing.assert_allclose(res.x[-1], [math.pi / 2, math.pi / 2], atol=1e-6)


def test_tilted_great_circle_matches_closed_form():
    th0 = np.array([0.6, 0.8])
    cfg = IntegrationConfig(s_max=math.pi / 2, rtol=1e-10, samples=101)
    res = integrate(SPHERE, EUCLID, initial_state(SPHERE, [math.pi / 2, 0], Theta=th0), cfg)
    np.testing.assert_allclose(res.x, great_circle(th0, res.s), atol=1e-6)
    d = res.diagnostics
    assert d["L_drift"] <= 1e-8
    assert d["max_el_residual"] <= 1e-6


def test_perturbed_curve_is_detected():
    cfg = IntegrationConfig(s_max=1.0, samples=101)
    res = integrate(SPHERE, EUCLID, initial_state(SPHERE, [math.pi / 2, 0], Theta=[0.6, 0.8]), cfg)
    bent = [GeodesicState(st.s, st.x, st.Theta * (1 + 0.1 * st.s)) for st in res.states]
    assert np.abs(el_residual(SPHERE, EUCLID, res)).max() <= 1e-6
    assert np.abs(el_residual(SPHERE, EUCLID, bent)).max() > 1e-3


def test_el_residual_input_checks():
    states = [GeodesicState(s, np.array([1.0, 0.0]), np.array([0.0, 1.0])) for s in (0, 0.1, 0.2, 0.3)]
    with pytest.raises(TooFewSamples):
        el_residual(SPHERE, EUCLID, states)
    states.append(GeodesicState(0.7, np.array([1.0, 0.0]), np.array([0.0, 1.0])))
    with pytest.raises(ValueError):
        el_residual(SPHERE, EUCLID, states)


def test_reparameterisation_gauge():
    kappa = 0.5
    th0 = np.array([0.6, 0.8])
    cfg = IntegrationConfig(s_max=1.0, lambda0=gauge_expression(f"{kappa}*sqrt(th0^2 + th1^2)", 2))
    res = integrate(SPHERE, EUCLID, initial_state(SPHERE, [math.pi / 2, 0], Theta=th0), cfg)
    np.testing.assert_allclose(res.diagnostics["L"], np.exp(kappa * res.s), rtol=1e-8)
    sigma = (np.exp(kappa * res.s) - 1) / kappa
    np.testing.assert_allclose(res.x, great_circle(th0, sigma), atol=1e-7)


def test_geodesic_does_not_depend_on_frame_choice():
    # same metric, frame rotated by an x-dependent angle
    a = "0.3*x0 + 0.2*x1"
    rotated = Chart.from_strings([[f"cos({a})", f"-sin({a})*sin(x0)"], [f"sin({a})", f"cos({a})*sin(x0)"]])
    x0, dx0 = [1.1, 0.4], [0.5, -0.7]
    cfg = IntegrationConfig(s_max=1.0, samples=21)
    ref = integrate(SPHERE, EUCLID, initial_state(SPHERE, x0, dx=dx0), cfg)
    alt = integrate(rotated, EUCLID, initial_state(rotated, x0, dx=dx0), cfg)
    np.testing.assert_allclose(alt.x, ref.x, atol=1e-8)


def test_rk4_is_fourth_order():
    polar = Chart.from_strings([["1", "0"], ["0", "x0"]])
    th0 = np.array([0.3, 1.0])

    def error(step):
        cfg = IntegrationConfig(method="rk4", step=step, s_max=1.0)
        res = integrate(polar, EUCLID, initial_state(polar, [1.0, 0.0], Theta=th0), cfg)
        p = np.array([1.0 + th0[0], th0[1]])  # straight line in Cartesian coordinates
        exact = np.array([np.hypot(*p), math.atan2(p[1], p[0])])
        return np.abs(res.x[-1] - exact).max(), len(res.states)

    e1, n1 = error(0.1)
    e2, n2 = error(0.05)
    assert (n1, n2) == (11, 21)
    assert 12 <= e1 / e2 <= 20


def test_degenerate_coordinate_frame_is_a_straight_line():
    chart = Chart.identity(3)
    metric = FinslerMetric.from_string("sqrt(th0^2 - th1^2)", 3)
    res = integrate(chart, metric, initial_state(chart, [0, 0, 0], Theta=[1, 0.5, 0.3]), IntegrationConfig())
    np.testing.assert_allclose(res.x[-1], [1, 0.5, 0.3], atol=1e-14)
    assert res.diagnostics["max_abs_C"] == 0.0


def test_second_class_multipliers_are_solved():
    state = GeodesicState(0.0, np.array([0.1, 0.8, 0.3]), np.array([1.0, 0.3, -0.2]))
    sol = solve_second_class(CONTACT, LINEAR3, state, IntegrationConfig())
    assert sol.rank == 2 and sol.first_class == 0
    # closed form: Theta1^2 / (2 x1) and Theta1 Theta2 / (2 x1)
    np.testing.assert_allclose(sol.values, [0.3**2 / 1.6, -0.06 / 1.6], atol=1e-8)


def test_second_class_solve_holds_constraints():
    init = initial_state(CONTACT, [0.1, 0.8, 0.3], Theta=[1.0, 0.3, -0.2])
    held = integrate(CONTACT, LINEAR3, init, IntegrationConfig(lambdaI="solve"))
    free = integrate(CONTACT, LINEAR3, init, IntegrationConfig(lambdaI="zero"))
    assert held.diagnostics["C_drift"] <= 1e-6
    assert not held.diagnostics["constraint_drift_exceeded"]
    assert free.diagnostics["C_drift"] > 1e-2
    assert free.diagnostics["constraint_drift_exceeded"]


def test_twisted_example_is_first_class():
    cfg = ProblemConfig.load("builtin:degenerate3d-twisted")
    state = GeodesicState(0.0, np.array([0.2, 0.1, 0.3]), np.array([1.4, 0.3, 0.5]))
    sol = solve_second_class(cfg.chart, cfg.metric, state, cfg.integration_config())
    assert sol.rank == 0 and sol.first_class == 1
    np.testing.assert_array_equal(sol.values, [0.0])
    res = integrate(cfg.chart, cfg.metric, cfg.initial_state(), cfg.integration_config())
    assert res.diagnostics["max_abs_C"] <= 1e-6


def test_regular_and_trivial_solves():
    state = GeodesicState(0.0, np.array([1.0, 0.0]), np.array([0.3, 0.4]))
    assert solve_second_class(SPHERE, EUCLID, state, IntegrationConfig()).values.size == 0
    chart = Chart.identity(3)
    metric = FinslerMetric.from_string("sqrt(th0^2 - th1^2)", 3)
    state = GeodesicState(0.0, np.zeros(3), np.array([1.5, 0.2, 0.1]))
    sol = solve_second_class(chart, metric, state, IntegrationConfig())
    assert sol.rank == 0 and sol.values.tolist() == [0.0]


@pytest.mark.parametrize("name", list(BUILTINS))
def test_builtin_geodesics_conserve_L(name):
    cfg = ProblemConfig.load(f"builtin:{name}")
    res = integrate(cfg.chart, cfg.metric, cfg.initial_state(), cfg.integration_config())
    assert res.diagnostics["L_drift"] <= 1e-8
    assert res.diagnostics["max_el_residual"] <= 1e-6


def test_config_validation():
    with pytest.raises(ValueError):
        IntegrationConfig(method="euler")
    with pytest.raises(ValueError):
        IntegrationConfig(step=0)
    with pytest.raises(ValueError):
        IntegrationConfig(lambdaI="guess")
