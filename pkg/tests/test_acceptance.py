"""The ten acceptance criteria, each at its stated tolerance.

Every test records one ``PASS``/``FAIL`` line (shown in the terminal summary)
before asserting, so a failing criterion is still reported with its measured value.
"""

import math
from functools import lru_cache

import numpy as np
import pytest

from ffc.config import BUILTINS, ProblemConfig
from ffc.connection import berwald_general, berwald_simple, connection_at, holonomic_oracle
from ffc.expr import eval_float, eval_jet2, parse
from ffc.frame import frame_point, structure_coefficients
from ffc.geodesic import GeodesicState, IntegrationConfig, el_residual, initial_state, integrate
from ffc.metric import analyze, metric_jet

from .conftest import ACCEPTANCE_LINES
from .corpus import expression_corpus, fd_grad, fd_hess, relative_error
from .oracles import spin_connection_N
from .test_geodesic import great_circle

REGULAR = ["flat2d", "sphere2d", "hyperbolic2d", "rindler2d", "randers-sphere"]


def report(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


@lru_cache(maxsize=None)
def cfg(name):
    return ProblemConfig.load(f"builtin:{name}")


@lru_cache(maxsize=None)
def connection_sample(name, count=100):
    c = cfg(name)
    return [connection_at(c.chart, c.metric, x, th) for x, th in c.sample_points(count=count)]


def test_criterion_01_cartan():
    worst = {n: max(np.abs(cd.cartan_residual).max() for cd in connection_sample(n)) for n in BUILTINS}
    top = max(worst.values())
    report(1, "Cartan residual, 100 points x 6 builtins", top <= 1e-8, f"max {top:.3g} (tol 1e-8)")


def test_criterion_02_metricity():
    worst = {n: max(np.abs(cd.metricity_residual).max() for cd in connection_sample(n)) for n in BUILTINS}
    top = max(worst.values())
    report(2, "metricity |L_a N^a_c|, same sample", top <= 1e-8, f"max {top:.3g} (tol 1e-8)")


def test_criterion_03_spin_connection():
    top = 0.0
    for name in ("sphere2d", "hyperbolic2d"):
        c = cfg(name)
        for x, th in c.sample_points(count=50):
            N = connection_at(c.chart, c.metric, x, th).N
            top = max(top, np.abs(N - spin_connection_N(c.raw["vielbein"], (1, 1), x, th)).max())
    report(3, "spin connection vs Levi-Civita oracle, 50 points x 2", top <= 1e-8, f"max {top:.3g} (tol 1e-8)")


def test_criterion_04_holonomic_oracle():
    top = 0.0
    for name in REGULAR:
        c = cfg(name)
        for x, th in c.sample_points(count=50):
            fp = frame_point(c.chart, x)
            G = berwald_general(analyze(c.metric, th), structure_coefficients(fp))
            _, G_oracle = holonomic_oracle(c.chart, c.metric, x, fp.Einv @ th)
            top = max(top, np.abs(G - G_oracle).max())
    report(4, "frame G vs holonomic oracle, 50 points x 5 regular", top <= 1e-8, f"max {top:.3g} (tol 1e-8)")


def test_criterion_05_simple_vs_general():
    top, count = 0.0, 0
    cases = [(cfg(n), lambda th: th) for n in BUILTINS]
    # twisted variant: block form holds everywhere, compared on its constraint surface th1 = 0
    cases.append((cfg("degenerate3d-twisted"), lambda th: th * np.array([1.0, 0.0, 1.0])))
    for c, restrict in cases:
        for x, th in c.sample_points(count=100):
            th = restrict(th)
            ma = analyze(c.metric, th)
            cc = structure_coefficients(frame_point(c.chart, x))
            lam = np.full(ma.D, 0.25)
            top = max(top, np.abs(berwald_simple(ma, cc, lam) - berwald_general(ma, cc, lam)).max())
            count += 1
    report(5, f"simplified vs general Berwald formula, {count} block-form points", top <= 1e-10,
           f"max {top:.3g} (tol 1e-10)")


def test_criterion_06_scaling():
    top = 0.0
    for name in BUILTINS:
        c = cfg(name)
        for x, th in c.sample_points(count=20):
            base = connection_at(c.chart, c.metric, x, th)
            sG = max(1.0, np.abs(base.G).max())
            sN = max(1.0, np.abs(base.N).max())
            for lam in (0.5, 2.0, 3.0):
                cd = connection_at(c.chart, c.metric, x, lam * th)
                top = max(top, np.abs(cd.G - lam**2 * base.G).max() / (lam**2 * sG),
                          np.abs(cd.N - lam * base.N).max() / (lam * sN))
    report(6, "G(l th) = l^2 G, N(l th) = l N for l in {0.5, 2, 3}", top <= 1e-9, f"max rel {top:.3g} (tol 1e-9)")


def test_criterion_07_geodesics():
    sphere = cfg("sphere2d")
    conf = IntegrationConfig(s_max=math.pi / 2, rtol=1e-10)
    res = integrate(sphere.chart, sphere.metric, initial_state(sphere.chart, [math.pi / 2, 0], Theta=[0, 1]), conf)
    endpoint = np.abs(res.x[-1] - [math.pi / 2, math.pi / 2]).max()
    th0 = np.array([0.6, 0.8])
    res = integrate(sphere.chart, sphere.metric, initial_state(sphere.chart, [math.pi / 2, 0], Theta=th0), conf)
    endpoint = max(endpoint, np.abs(res.x[-1] - great_circle(th0, res.s[-1:])[0]).max())

    drift, el = 0.0, 0.0
    for name in BUILTINS:
        c = cfg(name)
        r = integrate(c.chart, c.metric, c.initial_state(), c.integration_config())
        drift = max(drift, r.diagnostics["L_drift"])
        el = max(el, r.diagnostics["max_el_residual"])

    tilted = integrate(sphere.chart, sphere.metric, initial_state(sphere.chart, [math.pi / 2, 0], Theta=[0.6, 0.8]),
                       IntegrationConfig(s_max=1.0))
    el = max(el, tilted.diagnostics["max_el_residual"])
    bent = [GeodesicState(s.s, s.x, s.Theta * (1 + 0.1 * s.s)) for s in tilted.states]
    bent_res = np.abs(el_residual(sphere.chart, sphere.metric, bent)).max()

    ok = endpoint <= 1e-6 and drift <= 1e-8 and el <= 1e-6 and bent_res > 1e-3
    report(7, "geodesics", ok, f"endpoint err {endpoint:.3g} (1e-6), L drift {drift:.3g} (1e-8), "
           f"EL residual {el:.3g} (1e-6), perturbed {bent_res:.3g} (>1e-3)")


def test_criterion_08_degenerate():
    c = cfg("degenerate3d")
    flat_ok = all(cd.D == 1 and not cd.C.any() and not cd.G.any() for cd in connection_sample("degenerate3d"))
    tw = cfg("degenerate3d-twisted")
    worst = 0.0
    for x, th in tw.sample_points(count=5):
        th = th * np.array([1.0, 0.0, 1.0])  # start on the constraint surface
        r = integrate(tw.chart, tw.metric, initial_state(tw.chart, x, Theta=th), tw.integration_config())
        worst = max(worst, r.diagnostics["max_abs_C"])
    # a second-class case: the solved multipliers must hold C at its initial value
    ct = cfg("contact3d")
    held = integrate(ct.chart, ct.metric, ct.initial_state(), ct.integration_config())
    contact = held.diagnostics["C_drift"]
    ok = flat_ok and worst <= 1e-6 and contact <= 1e-6
    report(8, "degenerate metric", ok, f"coordinate frame D=1, C=0, G=0: {flat_ok}; "
           f"twisted re-integration max|C| {worst:.3g} (tol 1e-6); second-class C drift {contact:.3g} (tol 1e-6)")


def test_criterion_09_basis_identities():
    worst_id, worst_cond = 0.0, np.inf
    for name in BUILTINS:
        c = cfg(name)
        for _, th in c.sample_points(count=100):
            ma = analyze(c.metric, th)
            worst_id = max(worst_id, abs(ma.La @ th / ma.L - 1), np.abs(ma.ell @ ma.La).max(initial=0),
                           np.abs(ma.v @ ma.La).max(initial=0))
            s = np.linalg.svd(ma.basis_matrix(), compute_uv=False)
            worst_cond = min(worst_cond, s[-1] / s[0])
    ok = worst_id <= 1e-10 and worst_cond > 1e-8
    report(9, "basis identities and independence, 100 theta x 6", ok,
           f"identity residual {worst_id:.3g} (1e-10), min sigma ratio {worst_cond:.3g} (>1e-8)")


def test_criterion_10_autodiff():
    worst = 0.0
    corpus = expression_corpus(seed=12345, count=200)
    for text, p in corpus:
        e = parse(text, ["x0", "x1", "x2"])
        j = eval_jet2(e, p, [0, 1, 2])
        f = lambda q: eval_float(e, q)  # noqa: E731
        worst = max(worst, relative_error(j.grad, fd_grad(f, p)), relative_error(j.hess, fd_hess(f, p)))
    report(10, f"forward-mode derivatives vs finite differences, {len(corpus)} expressions", worst <= 1e-6,
           f"max rel {worst:.3g} (tol 1e-6)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
