"""Comparison allocations: deterministic point, vertex enumeration, ellipsoid."""
from __future__ import annotations

import copy
import time

import numpy as np

from .conic import ConicProblem, require_optimal, solve_lp
from .exceptions import SolverError, TooManyCustomersError
from .rdoe import (DEFAULT_EPS_MD, EnvelopeAllocation, RdoeConfig, default_anchors,
                   extract_envelopes, solve_rdoe)
from .superellipsoid import corner_factor

SO_CAP = 16


def _q_bounds(fr, q_lower, q_upper):
    ql = fr.q_lower if q_lower is None else np.asarray(q_lower, dtype=float)
    qu = fr.q_upper if q_upper is None else np.asarray(q_upper, dtype=float)
    return ql, qu


def _add_dense(prob, G, cols, rhs, tag=""):
    r, c = np.nonzero(G)
    prob.add_rows(r, cols[c], G[r, c], rhs, tag=tag)


def _lp_or_raise(prob, what):
    rep = solve_lp(prob)
    if rep.status in ("infeasible", "unbounded"):
        raise SolverError(f"{what} is {rep.status}", status=rep.status)
    return require_optimal(rep, what)


def deterministic_doe(fr, statuses=None, q_lower=None, q_upper=None):
    """Non-robust allocation from a single operating point.

    Importers (+1) and exporters (-1) get ``[0, p_i]`` / ``[p_i, 0]`` with
    ``p`` maximising the signed sum over the region.  Customers with unknown
    status get ``[-a_i, a_i]`` where the two points with all unknowns at
    ``+a`` and at ``-a`` must each be feasible.
    """
    lam = fr.statuses if statuses is None else np.asarray(statuses, dtype=int)
    ql, qu = _q_bounds(fr, q_lower, q_upper)
    unknown = np.flatnonzero(lam == 0)
    signed = np.flatnonzero(lam != 0)
    prob = ConicProblem("max")
    p = prob.add_variable("p", fr.v)
    a = prob.add_variable("a", unknown.size, lb=0.0)
    q = prob.add_variable("q", fr.n_q, lb=ql, ub=qu)
    # signed customers stay on their side of zero
    if signed.size:
        prob.add_rows(np.arange(signed.size), p[signed], -lam[signed], np.zeros(signed.size), tag="sign")
    if unknown.size:
        prob.add_rows(np.arange(unknown.size), p[unknown], 1.0, np.zeros(unknown.size), relation="=", tag="pin")
    G = np.hstack([fr.G_p, fr.G_q])
    cols = np.concatenate([p, q])
    _add_dense(prob, G, cols, fr.h, tag="point")
    if unknown.size:
        Gu = fr.G_p[:, unknown]
        for sign in (1.0, -1.0):
            _add_dense(prob, np.hstack([G, sign * Gu]), np.concatenate([cols, a]), fr.h, tag="point")
    obj_cols = np.concatenate([p[signed], a])
    obj_vals = np.concatenate([lam[signed].astype(float), 2.0 * np.ones(unknown.size)])
    prob.set_objective(obj_cols, obj_vals)
    t0 = time.perf_counter()
    rep = _lp_or_raise(prob, "deterministic allocation LP")
    # the optimal face is often an edge; among its points take the one whose
    # smallest per-customer allocation is largest, so the choice does not
    # depend on which vertex the LP solver happens to return
    prob_tb = _balanced_tiebreak(prob, obj_cols, obj_vals, rep.objective, p, a, signed, unknown, lam)
    rep_tb = solve_lp(prob_tb)
    if rep_tb.status == "optimal":
        rep = rep_tb
    elapsed = time.perf_counter() - t0
    pv, av = rep["p"], rep["a"]
    lower = np.minimum(pv, 0.0)
    upper = np.maximum(pv, 0.0)
    lower[unknown] = -av
    upper[unknown] = av
    return EnvelopeAllocation(fr.customer_ids, lower, upper, rep["q"], method="dmtd",
                              objective=rep.objective, solve_time=elapsed,
                              meta={"point": pv.tolist(), "assumption": "single operating point, signed sum"})


def _balanced_tiebreak(prob, obj_cols, obj_vals, best, p, a, signed, unknown, lam):
    tb = copy.deepcopy(prob)
    t = tb.add_variable("floor", 1)
    n_obj = obj_cols.size
    # keep the first-stage total: -obj . x <= -(best - slack)
    slack = 1e-9 * max(1.0, abs(best))
    tb.add_rows(np.zeros(n_obj, dtype=int), obj_cols, -obj_vals, [-(best - slack)], tag="total")
    # floor <= lam_i p_i and floor <= a_j
    k = signed.size + unknown.size
    rows = np.concatenate([np.arange(k), np.arange(k)])
    cols = np.concatenate([p[signed], a, np.full(k, t[0])])
    vals = np.concatenate([-lam[signed].astype(float), -np.ones(unknown.size), np.ones(k)])
    tb.add_rows(rows, cols, vals, np.zeros(k), tag="floor")
    tb.set_objective(t, [1.0], sense="max")
    return tb


def so_enumeration(fr, statuses=None, eps_md=DEFAULT_EPS_MD, q_lower=None, q_upper=None, cap=SO_CAP):
    """Globally optimal box: every box vertex is a constraint (``M * 2^v`` rows)."""
    v = fr.v
    if v > cap:
        raise TooManyCustomersError(
            f"vertex enumeration needs M*2^v = {fr.M}*2^{v} rows; v={v} exceeds the cap of {cap}")
    lam = fr.statuses if statuses is None else np.asarray(statuses, dtype=int)
    ql, qu = _q_bounds(fr, q_lower, q_upper)
    prob = ConicProblem("max")
    lo = prob.add_variable("lower", v)
    up = prob.add_variable("upper", v)
    q = prob.add_variable("q", fr.n_q, lb=ql, ub=qu)
    delta = prob.add_variable("delta", v, lb=0.0)
    iv = np.arange(v)
    prob.add_rows(np.concatenate([iv, iv]), np.concatenate([lo, up]),
                  np.concatenate([np.ones(v), -np.ones(v)]), np.zeros(v), tag="order")

    bits = ((np.arange(2 ** v)[:, None] >> iv) & 1).astype(bool)  # (2^v, v)
    nvert, M = bits.shape[0], fr.M
    # row (s, m): sum_i G[m,i] * (up_i if bit else lo_i) + Gq[m] q <= h[m]
    ss, mm, ii = np.meshgrid(np.arange(nvert), np.arange(M), iv, indexing="ij")
    row = (ss * M + mm).ravel()
    col = np.where(bits[ss, ii], up[ii], lo[ii]).ravel()
    val = fr.G_p[mm, ii].ravel()
    rows, cols, vals = [row], [col], [val]
    if fr.n_q:
        ss2, mm2, jj = np.meshgrid(np.arange(nvert), np.arange(M), np.arange(fr.n_q), indexing="ij")
        rows.append((ss2 * M + mm2).ravel())
        cols.append(q[jj.ravel()])
        vals.append(fr.G_q[mm2, jj].ravel())
    row, col, val = (np.concatenate(x) for x in (rows, cols, vals))
    keep = val != 0
    prob.add_rows(row[keep], col[keep], val[keep], np.tile(fr.h, nvert), tag="vertex")

    # status penalties on the side that should sit at zero
    wl = np.where(lam == 1, 1.0, np.where(lam == 0, 0.5, 0.0))
    wu = np.where(lam == -1, 1.0, np.where(lam == 0, 0.5, 0.0))
    for sgn, r0 in ((1.0, 0), (-1.0, v)):
        prob.add_rows(np.concatenate([iv, iv, iv]) + 0, np.concatenate([lo, up, delta]),
                      np.concatenate([sgn * wl, sgn * wu, -np.ones(v)]), np.zeros(v), tag="status")
    prob.set_objective(np.concatenate([up, lo, delta]),
                       np.concatenate([np.ones(v), -np.ones(v), -eps_md * np.ones(v)]))
    t0 = time.perf_counter()
    rep = _lp_or_raise(prob, "vertex-enumeration LP")
    elapsed = time.perf_counter() - t0
    return EnvelopeAllocation(fr.customer_ids, rep["lower"], rep["upper"], rep["q"], method="so",
                              objective=rep.objective, solve_time=elapsed,
                              meta={"vertex_rows": int(nvert * M), "delta": rep["delta"].tolist()})


def ellipsoid_rdoe(fr, statuses=None, eps_md=DEFAULT_EPS_MD, q_lower=None, q_upper=None,
                   anchors=None, backend=None):
    """Maximum inscribed axis-aligned ellipsoid and its inscribed box (``K = 1``)."""
    cfg = RdoeConfig(K=1, eps_md=eps_md, statuses=statuses, q_lower=q_lower, q_upper=q_upper,
                     anchors=default_anchors(fr) if anchors is None else anchors)
    sol = solve_rdoe(fr, cfg, backend=backend)
    alloc = extract_envelopes(sol, fr.v, 1, fr.customer_ids, method="ellipsoid")
    alloc.meta["ellipsoid"] = {"center": sol.center.tolist(), "semi_axes": sol.scale.tolist(),
                               "corner_factor": corner_factor(fr.v, 1)}
    return alloc
