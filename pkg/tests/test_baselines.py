import numpy as np
import pytest

from envforge.baselines import deterministic_doe, ellipsoid_rdoe, so_enumeration
from envforge.exceptions import SolverError, TooManyCustomersError
from envforge.rdoe import RdoeConfig, default_anchors, extract_envelopes, solve_rdoe
from envforge.region import FeasibleRegion
from envforge.superellipsoid import select_K
from envforge.validation import certify_box_in_polyhedron

from conftest import box_region, random_region, triangle_region


def _box_worst_row(fr, alloc, q=None):
    """Max over the box of each row minus its bound (closed-form LP over a box)."""
    q = alloc.q if q is None else q
    lhs = np.maximum(fr.G_p * alloc.lower, fr.G_p * alloc.upper).sum(axis=1)
    if fr.n_q:
        lhs = lhs + fr.G_q @ q
    return lhs - fr.h


def test_dmtd_unit_box_importers():
    alloc = deterministic_doe(box_region([1.0, 1.0], statuses=[1, 1]))
    np.testing.assert_allclose(alloc.lower, 0.0, atol=1e-9)
    np.testing.assert_allclose(alloc.upper, 1.0, atol=1e-9)
    assert alloc.total_doe == pytest.approx(2.0)
    assert "assumption" in alloc.meta


def test_dmtd_exporters_and_unknown():
    alloc = deterministic_doe(box_region([1.0, 2.0], statuses=[-1, 0]))
    np.testing.assert_allclose(alloc.lower, [-1.0, -2.0], atol=1e-9)
    np.testing.assert_allclose(alloc.upper, [0.0, 2.0], atol=1e-9)


def test_triangle_totals():
    fr = triangle_region(14.0)
    dm = deterministic_doe(fr)
    so = so_enumeration(fr)
    assert dm.total_doe == pytest.approx(14.0)
    # any box [0, a] x [0, b] with a + b = c is optimal for the total
    assert so.total_doe == pytest.approx(14.0, abs=1e-7)
    np.testing.assert_allclose(so.lower, 0.0, atol=1e-9)


def test_triangle_so_matches_grid():
    c = 14.0
    a = np.linspace(0, c, 1401)
    A, B = np.meshgrid(a, a)
    best = np.max(np.where(A + B <= c + 1e-12, A + B, -np.inf))
    assert so_enumeration(triangle_region(c)).total_doe == pytest.approx(best, abs=1e-7)


def test_dmtd_unbounded():
    fr = FeasibleRegion(G_p=[[-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], h=[0.0, 1.0, 1.0], statuses=[1, 1])
    with pytest.raises(SolverError) as info:
        deterministic_doe(fr)
    assert info.value.status == "unbounded"


def test_so_unit_box_importers():
    alloc = so_enumeration(box_region([1.0, 1.0], statuses=[1, 1]))
    np.testing.assert_allclose(alloc.lower, 0.0, atol=1e-9)
    np.testing.assert_allclose(alloc.upper, 1.0, atol=1e-9)


def test_so_cap():
    fr = box_region(np.ones(17))
    with pytest.raises(TooManyCustomersError, match="2\\^17"):
        so_enumeration(fr)
    assert so_enumeration(box_region(np.ones(3)), cap=3).total_doe == pytest.approx(6.0)


def test_so_infeasible():
    fr = FeasibleRegion(G_p=[[1.0], [-1.0]], h=[-1.0, -1.0])
    with pytest.raises(SolverError):
        so_enumeration(fr)


@pytest.mark.parametrize("seed", range(4))
def test_so_is_best_box_and_robust(seed):
    rng = np.random.default_rng(seed)
    fr = random_region(rng, 2)
    so = so_enumeration(fr)
    assert np.all(_box_worst_row(fr, so) <= 1e-7)
    # unknown statuses pin the box center at 0: search symmetric boxes
    g = np.linspace(0, 6, 601)
    A1, A2 = np.meshgrid(g, g)
    inside = np.ones_like(A1, dtype=bool)
    for (g1, g2), h in zip(fr.G_p, fr.h):
        inside &= abs(g1) * A1 + abs(g2) * A2 <= h
    best = np.max(np.where(inside, 2 * (A1 + A2), 0.0))
    assert so.total_doe >= best - 1e-9


def _disk(r, n=720, a=None, b=None):
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    a = r if a is None else a
    b = r if b is None else b
    G = np.column_stack([np.cos(th) / a, np.sin(th) / b])
    return FeasibleRegion(G_p=G, h=np.ones(n), statuses=np.zeros(2, dtype=int))


def test_ellipsoid_in_disk():
    r = 4.0
    alloc = ellipsoid_rdoe(_disk(r))
    slack = r * (1 - np.cos(np.pi / 720))  # polygon vs true circle
    np.testing.assert_allclose(alloc.upper, r / np.sqrt(2), atol=slack + 1e-6)
    np.testing.assert_allclose(alloc.lower, -r / np.sqrt(2), atol=slack + 1e-6)


def test_ellipsoid_in_ellipse():
    a, b = 5.0, 2.0
    alloc = ellipsoid_rdoe(_disk(None, a=a, b=b))
    semi = np.array(alloc.meta["ellipsoid"]["semi_axes"])
    np.testing.assert_allclose(semi, [a, b], rtol=2e-4)
    np.testing.assert_allclose(alloc.upper, [a / np.sqrt(2), b / np.sqrt(2)], rtol=2e-4)


def _totals(fr):
    K = select_K(fr.v, 0.01)
    sesd = {k: extract_envelopes(solve_rdoe(fr, RdoeConfig(K=k, anchors=default_anchors(fr)))).total_doe
            for k in (2, K)}
    return (ellipsoid_rdoe(fr).total_doe, sesd[2], sesd[K], so_enumeration(fr).total_doe,
            deterministic_doe(fr).total_doe)


@pytest.mark.parametrize("statuses", [None, (1, 1), (-1, -1), (0, 0), (1, -1)])
def test_ordering_on_bundled_fixture(twobus_region, statuses):
    fr = twobus_region if statuses is None else twobus_region.with_statuses(statuses)
    ell, k2, ks, so, dm = _totals(fr)
    assert ell <= k2 + 1e-6 <= ks + 2e-6 <= so + 3e-6 <= dm + 4e-6


@pytest.mark.parametrize("seed", range(4))
def test_robust_methods_below_so_below_dmtd(seed):
    # volume, not total, is what sESD maximizes, so only the SO and Dmtd
    # bounds are guaranteed on arbitrary regions
    rng = np.random.default_rng(seed + 40)
    fr = random_region(rng, int(rng.integers(2, 5)))
    ell, k2, ks, so, dm = _totals(fr)
    assert max(ell, k2, ks) <= so + 1e-6 <= dm + 2e-6


@pytest.mark.parametrize("statuses", [None, (1, 1), (-1, -1), (0, 0)])
def test_dmtd_not_robust_on_fixture(twobus_region, statuses):
    fr = twobus_region if statuses is None else twobus_region.with_statuses(statuses)
    dm = deterministic_doe(fr)
    assert np.max(_box_worst_row(fr, dm)) > 1e-6
    assert not certify_box_in_polyhedron(fr, dm).holds(1e-6)


def test_dmtd_box_robust_on_down_closed_triangle():
    # every corner of [0, p] is dominated by p itself, which the LP keeps feasible
    fr = triangle_region(14.0)
    dm = deterministic_doe(fr)
    np.testing.assert_allclose(dm.upper, [7.0, 7.0], atol=1e-7)
    assert np.max(_box_worst_row(fr, dm)) <= 1e-9


def test_so_vertices_certified(twobus_region):
    so = so_enumeration(twobus_region)
    assert certify_box_in_polyhedron(twobus_region, so).holds(1e-6)
