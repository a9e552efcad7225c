import json

import numpy as np
import pytest
from sklearn.base import clone

from envforge import io as eio
from envforge.estimators import (METHODS, DeterministicEnvelope, EllipsoidEnvelope, SuperellipsoidEnvelope,
                                 VertexEnumerationEnvelope, check_region)
from envforge.rdoe import EnvelopeAllocation

from conftest import box_region

G_BOX = np.vstack([np.eye(2), -np.eye(2)])
H_BOX = np.array([3.0, 1.0, 3.0, 1.0])


def test_check_region_accepts_matrix_and_region():
    fr = check_region(G_BOX, H_BOX)
    assert fr.M == 4 and fr.v == 2
    assert check_region(fr) is fr
    with pytest.raises(ValueError):
        check_region(G_BOX)
    with pytest.raises(ValueError):
        check_region(G_BOX, H_BOX[:3])
    with pytest.raises(ValueError):
        check_region(fr, H_BOX)


def test_check_region_overrides():
    fr = check_region(G_BOX, H_BOX, statuses=[1, -1])
    assert list(fr.statuses) == [1, -1]


@pytest.mark.parametrize("name", sorted(METHODS))
def test_estimators_fit_and_clone(name, twobus_region):
    est = METHODS[name]()
    params = est.get_params()
    assert clone(est).get_params() == params
    est.fit(twobus_region)
    assert est.lower_.shape == (2,) and np.all(est.lower_ <= est.upper_)
    assert est.total_doe_ == pytest.approx(float(np.sum(est.upper_ - est.lower_)))
    assert est.n_features_in_ == 2


def test_superellipsoid_picks_K_from_theta():
    est = SuperellipsoidEnvelope().fit(G_BOX, H_BOX)
    assert est.K_ == 7
    est.set_params(theta=0.2)
    assert est.fit(G_BOX, H_BOX).K_ == 2
    assert SuperellipsoidEnvelope(K=3).fit(G_BOX, H_BOX).K_ == 3


def test_predict_and_transform():
    est = VertexEnumerationEnvelope().fit(G_BOX, H_BOX)
    pts = np.array([[0.0, 0.0], [3.5, 0.0], [-1.0, -2.0]])
    assert est.predict(pts).tolist() == [True, False, False]
    np.testing.assert_allclose(est.transform(pts), [[0, 0], [3, 0], [-1, -1]], atol=1e-8)
    with pytest.raises(ValueError):
        est.predict(np.zeros((1, 3)))
    with pytest.raises(TypeError):
        est.fit_transform(G_BOX, H_BOX)


def test_unfitted_estimator_raises():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        DeterministicEnvelope().predict([[0.0, 0.0]])


def test_ellipsoid_estimator_on_box():
    est = EllipsoidEnvelope().fit(G_BOX, H_BOX)
    np.testing.assert_allclose(est.upper_, np.array([3.0, 1.0]) / np.sqrt(2), atol=1e-6)


def test_allocation_round_trip(tmp_path, twobus_region):
    alloc = SuperellipsoidEnvelope().fit(twobus_region).allocation_
    path = tmp_path / "a.json"
    eio.save_allocation(alloc, str(path))
    data = json.loads(path.read_text())
    assert set(data) >= {"method", "customers", "q_dispatch", "total_doe_kw", "objective",
                         "solve_time_s", "solver_status"}
    again = eio.load_allocation(str(path))
    assert again.customer_ids == alloc.customer_ids and again.method == alloc.method
    assert np.array_equal(again.lower, alloc.lower) and np.array_equal(again.upper, alloc.upper)
    assert np.array_equal(again.q, alloc.q) and again.total_doe == alloc.total_doe
    assert again.objective == alloc.objective and again.meta["K"] == 7


def test_malformed_allocation_rejected():
    with pytest.raises(ValueError):
        eio.allocation_from_dict({"method": "x"})
    bad = {"method": "x", "customers": [{"id": "1", "lower_kw": 2.0, "upper_kw": 1.0}]}
    with pytest.raises(ValueError):
        eio.allocation_from_dict(bad)


def test_region_round_trip(tmp_path, twobus_region):
    path = tmp_path / "r.json"
    eio.save_region(twobus_region, str(path))
    again = eio.load_region(str(path))
    for name in ("G_p", "G_q", "h", "statuses", "q_lower", "q_upper", "q_base"):
        assert np.array_equal(getattr(again, name), getattr(twobus_region, name)), name
    assert again.labels == twobus_region.labels and again.customer_ids == twobus_region.customer_ids
    fr = box_region([1.0, 2.0])
    assert eio.region_from_dict(eio.region_to_dict(fr)).n_q == 0


def test_violation_report_files(tmp_path, twobus_net):
    from envforge.validation import monte_carlo_validate

    alloc = EnvelopeAllocation(("1", "3"), [0.0, 0.0], [7.0, 7.0], [0.0, 0.0], method="dmtd")
    rep = monte_carlo_validate(twobus_net, alloc, draws=20, seed=1)
    j, c = tmp_path / "r.json", tmp_path / "r.csv"
    eio.save_violation_report(rep, str(j), str(c))
    summary = json.loads(j.read_text())
    assert summary["draws"] == 20 and summary["violations"] == rep.violations
    lines = c.read_text().splitlines()
    assert lines[0] == "draw,worst_v_pu,bus,phase,violated" and len(lines) == 21
