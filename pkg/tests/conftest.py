import itertools
import json

import numpy as np
import pytest

import envforge
from envforge.network import network_from_dict
from envforge.region import FeasibleRegion


def brute_vertices(G, h, tol=1e-9):
    """Vertices of {x : G x <= h} by solving every d-subset of rows."""
    G, h = np.asarray(G, float), np.asarray(h, float)
    d = G.shape[1]
    out = []
    for idx in itertools.combinations(range(G.shape[0]), d):
        A = G[list(idx)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, h[list(idx)])
        if np.all(G @ x <= h + tol) and not any(np.allclose(x, y, atol=1e-7) for y in out):
            out.append(x)
    return np.array(out)


def same_point_set(a, b, atol=1e-6):
    if len(a) != len(b):
        return False
    return all(np.any(np.all(np.abs(b - x) <= atol, axis=1)) for x in a)


def box_region(half_widths, statuses=None):
    hw = np.asarray(half_widths, float)
    v = hw.size
    G = np.vstack([np.eye(v), -np.eye(v)])
    return FeasibleRegion(G_p=G, h=np.concatenate([hw, hw]), statuses=statuses)


def triangle_region(c, statuses=(1, 1)):
    G = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]])
    return FeasibleRegion(G_p=G, h=np.array([0.0, 0.0, c]), statuses=np.array(statuses))


def random_region(rng, v, n_extra=None, statuses=None):
    """Bounded polytope around the origin: random cuts plus a loose box."""
    n_extra = n_extra or 3 * v
    dirs = rng.normal(size=(n_extra, v))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    h = rng.uniform(1.0, 5.0, n_extra)
    G = np.vstack([dirs, np.eye(v), -np.eye(v)])
    h = np.concatenate([h, np.full(2 * v, 6.0)])
    st = np.zeros(v, dtype=int) if statuses is None else statuses
    return FeasibleRegion(G_p=G, h=h, statuses=st)


def single_phase_net(z_pu, passive_p_pu=0.0, passive_q_pu=0.0, base_kva=10.0, base_v=230.0,
                     v_min=0.9, v_max=1.1):
    zb = base_v ** 2 / (base_kva * 1e3)
    z = np.zeros((3, 3, 2))
    z[0, 0] = [z_pu.real * zb, z_pu.imag * zb]
    customers = [
        {"id": "a1", "bus": "2", "phase": "a", "kind": "active",
         "p_limits_kw": [-5, 5], "q_limits_kvar": [-1, 1], "status": 0},
    ]
    if passive_p_pu or passive_q_pu:
        customers.append({"id": "L", "bus": "2", "phase": "a", "kind": "passive",
                          "p_kw": passive_p_pu * base_kva, "q_kvar": passive_q_pu * base_kva})
    data = {
        "source": {"bus": "1", "base_voltage_v": base_v, "base_kva": base_kva},
        "buses": [{"id": "1", "phases": "a"}, {"id": "2", "phases": "a"}],
        "lines": [{"from": "1", "to": "2", "z_ohm": z.tolist()}],
        "customers": customers,
        "limits": {"v_min_pu": v_min, "v_max_pu": v_max},
    }
    return network_from_dict(data)


def closed_form_v2(z, P, Q=0.0, V1=1.0):
    """|V2| for a load P + jQ (p.u.) at the end of one line from a stiff source."""
    R, X = z.real, z.imag
    b = V1 ** 2 - 2 * (R * P + X * Q)
    disc = b * b - 4 * abs(z) ** 2 * (P * P + Q * Q)
    if disc < 0:
        return np.nan
    return np.sqrt((b + np.sqrt(disc)) / 2)


@pytest.fixture(scope="session")
def twobus_net():
    return envforge.load_network(envforge.example_network_path())


@pytest.fixture(scope="session")
def twobus_region(twobus_net):
    return envforge.feasible_region_from_network(twobus_net)


@pytest.fixture
def twobus_dict():
    with open(envforge.example_network_path()) as fh:
        return json.load(fh)
