import numpy as np
import pytest
from scipy.optimize import minimize

from envforge.conic import (ConicProblem, available_backends, dumps_problem, get_backend, load_problem,
                            dump_problem, loads_problem, solve, solve_lp)
from envforge.rdoe import RdoeConfig, build_rdoe_problem, default_anchors

from conftest import box_region, brute_vertices, random_region

BACKENDS = available_backends()


def _lp_max_x():
    prob = ConicProblem("max")
    x = prob.add_variable("x", 1)
    prob.add_rows([0], x, [1.0], [3.0])
    prob.set_objective(x, [1.0])
    return prob


@pytest.mark.parametrize("backend", BACKENDS)
def test_lp_through_conic_backend(backend):
    rep = solve(_lp_max_x(), backend=backend)
    assert rep.status == "optimal" and rep["x"][0] == pytest.approx(3.0, abs=1e-7)


def test_lp_fast_path():
    rep = solve_lp(_lp_max_x())
    assert rep.status == "optimal" and rep.objective == pytest.approx(3.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_three_four_five(backend):
    prob = ConicProblem("min")
    t = prob.add_variable("t", 1)
    prob.add_cones([0], t, [1.0], [0.0, 3.0, 4.0], dim=3)
    prob.set_objective(t, [1.0])
    rep = solve(prob, backend=backend)
    assert rep.status == "optimal" and rep.objective == pytest.approx(5.0, abs=1e-7)


def test_unit_box_lp():
    prob = ConicProblem("max")
    p = prob.add_variable("p", 2, lb=-1, ub=1)
    prob.set_objective(p, [1.0, 1.0])
    assert solve_lp(prob).objective == pytest.approx(2.0)


def test_infeasible_pair():
    prob = ConicProblem("min")
    x = prob.add_variable("x", 1)
    prob.add_rows([0, 1], [x[0], x[0]], [1.0, -1.0], [0.0, -1.0])
    prob.set_objective(x, [1.0])
    assert solve_lp(prob).status == "infeasible"
    for b in BACKENDS:
        assert solve(prob, backend=b).status == "infeasible"


def test_unbounded_reported():
    prob = ConicProblem("max")
    x = prob.add_variable("x", 1, lb=0.0)
    prob.set_objective(x, [1.0])
    assert solve_lp(prob).status == "unbounded"
    for b in BACKENDS:
        assert solve(prob, backend=b).status == "unbounded"


@pytest.mark.parametrize("seed", range(5))
def test_lp_equals_best_vertex(seed):
    rng = np.random.default_rng(seed)
    fr = random_region(rng, 3)
    c = rng.normal(size=3)
    prob = ConicProblem("max")
    x = prob.add_variable("x", 3)
    r, k = np.nonzero(np.ones_like(fr.G_p))
    prob.add_rows(r, x[k], fr.G_p[r, k], fr.h)
    prob.set_objective(x, c)
    best = max(brute_vertices(fr.G_p, fr.h) @ c)
    assert solve_lp(prob).objective == pytest.approx(best, abs=1e-7)


def _random_socp(rng, n):
    """min c.x, box |x| <= 1 and two cones ||A x + b|| <= d.x + e feasible at 0."""
    c = rng.normal(size=n)
    cones = []
    for _ in range(2):
        m = rng.integers(2, 4)
        A = rng.normal(size=(m, n))
        b = rng.normal(size=m) * 0.3
        d = rng.normal(size=n) * 0.3
        e = np.linalg.norm(b) + rng.uniform(0.2, 1.0)
        cones.append((A, b, d, e))
    prob = ConicProblem("min")
    x = prob.add_variable("x", n, lb=-1.0, ub=1.0)
    for A, b, d, e in cones:
        m = A.shape[0]
        rows = np.concatenate([np.zeros(n, int), 1 + np.repeat(np.arange(m), n)])
        cols = np.concatenate([x, np.tile(x, m)])
        vals = np.concatenate([d, A.ravel()])
        prob.add_cones(rows, cols, vals, np.concatenate([[e], b]), dim=m + 1)
    prob.set_objective(x, c)
    return prob, c, cones


def _projected_search(c, cones, n, rng):
    cons = [{"type": "ineq", "fun": (lambda z, A=A, b=b, d=d, e=e: d @ z + e - np.linalg.norm(A @ z + b))}
            for A, b, d, e in cones]
    best = np.inf
    for start in [np.zeros(n)] + list(rng.uniform(-0.2, 0.2, size=(6, n))):
        res = minimize(lambda z: c @ z, start, method="SLSQP", bounds=[(-1, 1)] * n, constraints=cons,
                       options={"ftol": 1e-12, "maxiter": 500})
        if res.success and all(f["fun"](res.x) >= -1e-7 for f in cons):
            best = min(best, res.fun)
    return best


@pytest.mark.parametrize("seed", range(8))
def test_random_socp_against_search(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 11))
    prob, c, cones = _random_socp(rng, n)
    rep = solve(prob)
    assert rep.status == "optimal"
    oracle = _projected_search(c, cones, n, np.random.default_rng(seed + 50))
    assert rep.objective == pytest.approx(oracle, abs=1e-3)
    lin, cone = prob.residuals(rep.x)
    assert lin <= 1e-7 and cone <= 1e-7


def _regression_suite():
    rng = np.random.default_rng(11)
    out = []
    for v, K in [(2, 1), (2, 3), (3, 2), (4, 4)]:
        fr = random_region(rng, v)
        out.append(build_rdoe_problem(fr, RdoeConfig(K=K, anchors=default_anchors(fr))))
    fr = box_region([3.0, 1.0])
    out.append(build_rdoe_problem(fr, RdoeConfig(K=7, anchors=default_anchors(fr))))
    return out


@pytest.mark.skipif(len(BACKENDS) < 2, reason="needs two conic backends")
def test_backends_agree_on_regression_suite():
    for prob in _regression_suite():
        a = solve(prob, backend="clarabel")
        b = solve(prob, backend="cvxopt")
        assert a.status == b.status == "optimal"
        assert a.objective == pytest.approx(b.objective, rel=1e-5, abs=1e-6)


def test_tolerance_settings_agree():
    for prob in _regression_suite():
        a = solve(prob, tol=1e-11)
        b = solve(prob, tol=1e-9)
        assert a.objective == pytest.approx(b.objective, rel=1e-5, abs=1e-6)


def test_solves_are_deterministic():
    prob = _regression_suite()[2]
    a, b = solve(prob), solve(prob)
    assert a.status == b.status and a.objective == b.objective


def test_dual_bound_reported():
    prob = _regression_suite()[1]
    rep = solve(prob)
    assert rep.dual_objective is not None
    assert abs(rep.objective - rep.dual_objective) <= 1e-6 * max(1.0, abs(rep.objective))


def test_dump_round_trip(tmp_path):
    prob = _regression_suite()[3]
    text = dumps_problem(prob)
    again = loads_problem(text)
    assert dumps_problem(again) == text
    assert again.cone_counts() == prob.cone_counts()
    assert again.row_counts() == prob.row_counts()
    assert solve(again).objective == pytest.approx(solve(prob).objective, rel=1e-9)
    path = tmp_path / "p.txt"
    dump_problem(prob, str(path))
    assert dumps_problem(load_problem(str(path))) == text


def test_malformed_problems_rejected():
    prob = ConicProblem("min")
    x = prob.add_variable("x", 2)
    with pytest.raises(ValueError):
        prob.add_rows([0], [5], [1.0], [1.0])
    with pytest.raises(ValueError):
        prob.add_variable("x", 1)
    with pytest.raises(ValueError):
        prob.add_cones([0], [x[0]], [1.0], [0.0, 0.0], dim=3)
    prob.add_rows([0], [x[0]], [np.nan], [1.0])
    with pytest.raises(ValueError):
        solve(prob)
    with pytest.raises(ValueError):
        get_backend("nope")


def test_backend_from_environment(monkeypatch):
    monkeypatch.setenv("ENVFORGE_BACKEND", BACKENDS[-1])
    assert get_backend().name == BACKENDS[-1]
    rep = solve(_lp_max_x())
    assert rep.backend == BACKENDS[-1]
