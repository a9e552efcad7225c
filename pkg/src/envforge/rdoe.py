"""Robust envelopes via a superellipsoid inscribed in the feasible region.

The superellipsoid ``{u + L w : ||w||_{2^K} <= 1}`` must lie inside every
row ``g_m . p <= h_m - gq_m . q``.  The worst case of ``g_m . L w`` over the
``2^K``-norm ball is the value of a small SOC program whose dual gives, per
row ``m``::

    a_top[m] + sum_{k,i} t[m,k,i] + g_m . u + gq_m . q <= h_m
    (g_mi L_i)^2        <= 4 a[m,1,i] t[m,1,i]
    a[m,k-1,i]^2        <= 4 a[m,k,i] t[m,k,i]        k = 2..K-1
    ||a[m,K-1,:]||_2    <= a_top[m]

Each ``x^2 <= 4 y z`` is the cone ``||(x, y - z)||_2 <= y + z``.  For
``K = 1`` the tower disappears and the row becomes the inscribed-ellipsoid
condition ``||g_m * L||_2 <= a_top[m]``.  The log-determinant objective is
replaced by tangent cuts of ``log`` at a set of anchors per axis.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .conic import ConicProblem, require_optimal, solve, solve_lp
from .exceptions import SolverError
from .superellipsoid import K_MAX, corner_factor, relative_gap

log = logging.getLogger(__name__)

DEFAULT_EPS_MD = 1e3
DEFAULT_PWL_POINTS = 15
DEFAULT_PWL_MIN = 0.05


@dataclass
class RdoeConfig:
    K: int = 2
    eps_md: float = DEFAULT_EPS_MD
    anchors: np.ndarray | None = None  # (v, n_anchors) tangent points, kW
    q_lower: np.ndarray | None = None
    q_upper: np.ndarray | None = None
    statuses: np.ndarray | None = None
    prune_zero: bool = False  # drop towers whose coefficient G_p[m, i] is zero

    def validate(self, fr):
        if int(self.K) != self.K or not 1 <= self.K <= K_MAX:
            raise ValueError(f"K must be an integer in [1, {K_MAX}]")
        if not self.eps_md > 0:
            raise ValueError("eps_md must be positive")
        anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        if anchors.shape[0] != fr.v:
            raise ValueError("need one anchor row per customer")
        if anchors.shape[1] < 2:
            raise ValueError("piecewise-linear log needs at least 2 anchors")
        if np.any(anchors <= 0) or np.any(np.diff(anchors, axis=1) <= 0):
            raise ValueError("anchors must be positive and strictly increasing")
        return anchors


@dataclass
class RdoeSolution:
    center: np.ndarray
    scale: np.ndarray  # diagonal of L
    q: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    status: str
    objective: float
    K: int
    solve_time: float = 0.0
    iterations: int = 0
    report: object = field(default=None, repr=False)


@dataclass
class EnvelopeAllocation:
    """Per-customer ``[lower, upper]`` import limits in kW."""

    customer_ids: tuple
    lower: np.ndarray
    upper: np.ndarray
    q: np.ndarray
    method: str
    objective: float = float("nan")
    solve_time: float = 0.0
    status: str = "optimal"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.customer_ids = tuple(self.customer_ids)

    @property
    def total_doe(self):
        return float(np.sum(self.upper - self.lower))

    @property
    def v(self):
        return self.lower.shape[0]

    def vertices(self):
        """All ``2^v`` corners of the envelope box."""
        bits = (np.arange(2 ** self.v)[:, None] >> np.arange(self.v)) & 1
        return np.where(bits == 1, self.upper, self.lower)


# -- building blocks ------------------------------------------------------

def soc_encode(x, y, z):
    """Cone tuple ``(y + z, x, y - z)`` for ``x^2 <= 4 y z``, ``y, z >= 0``."""
    return np.array([y + z, x, y - z], dtype=float)


def in_soc(tup, tol=0.0):
    tup = np.asarray(tup, dtype=float)
    return bool(np.linalg.norm(tup[1:]) <= tup[0] + tol)


def pwl_log(anchors):
    """Tangent cuts of ``log`` at the anchors: ``gamma <= slope * L + intercept``.

    Returns ``(slopes, intercepts)``.
    """
    a = np.asarray(anchors, dtype=float)
    if a.shape[-1] < 2:
        raise ValueError("piecewise-linear log needs at least 2 anchors")
    if np.any(a <= 0) or np.any(np.diff(a, axis=-1) <= 0):
        raise ValueError("anchors must be positive and strictly increasing")
    return 1.0 / a, np.log(a) - 1.0


def pwl_surrogate(L, anchors):
    slopes, icpt = pwl_log(anchors)
    L = np.asarray(L, dtype=float)
    return np.min(np.multiply.outer(L, slopes) + icpt, axis=-1)


def pwl_gap(L, anchors):
    """Overestimate ``surrogate(L) - log(L)`` (non-negative by concavity)."""
    return pwl_surrogate(L, anchors) - np.log(L)


def default_anchors(fr, n_points=DEFAULT_PWL_POINTS, low=DEFAULT_PWL_MIN, q_mode="free"):
    """Log-spaced anchors per axis over ``[low, extent]``.

    ``extent`` is the width of the region along the axis (two LPs); the
    lower end is reduced to ``extent / 100`` for regions narrower than
    ``100 * low``.
    """
    ext = axis_extents(fr, q_mode=q_mode)
    rows = []
    for e in ext:
        # unbounded axes get a nominal range; the solve then reports unbounded
        hi = max(e, 1e-6) if np.isfinite(e) else 1e3
        lo = min(low, hi / 100.0)
        rows.append(np.geomspace(lo, hi, n_points))
    return np.array(rows)


def axis_extents(fr, q_mode="free"):
    """Width of the region along each customer axis (``inf`` if unbounded)."""
    prob = ConicProblem("max")
    p = prob.add_variable("p", fr.v)
    G, h, cols = fr.G_p, fr.h, p
    if fr.n_q and q_mode == "free":
        q = prob.add_variable("q", fr.n_q, lb=fr.q_lower, ub=fr.q_upper)
        G = np.hstack([fr.G_p, fr.G_q])
        cols = np.concatenate([p, q])
    elif fr.n_q:
        h = fr.h - fr.G_q @ fr.q_base
    r, c = np.nonzero(G)
    prob.add_rows(r, cols[c], G[r, c], h)
    # one constraint system, 2v objectives: call HiGHS directly to skip re-assembly
    A_le, b_le, _, _ = prob.linear_system()
    lb, ub = prob.bounds()
    bounds = np.column_stack([np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None)])
    out = np.empty(fr.v)
    for i in range(fr.v):
        ends = []
        for sign in (-1.0, 1.0):  # max p_i, then min p_i
            obj = np.zeros(prob.n)
            obj[p[i]] = sign
            res = linprog(obj, A_ub=A_le, b_ub=b_le, bounds=bounds, method="highs")
            if res.status == 3:
                ends.append(-sign * np.inf)
            elif res.status == 0:
                ends.append(sign * res.fun)
            else:
                raise SolverError(f"extent LP for customer {i} failed: {res.message}", status="numerical-limit")
        out[i] = ends[0] - ends[1]
    return out


def _normalize_rows(fr):
    """Scale rows so each ``G_p`` row has unit infinity norm (keeps the set)."""
    s = np.max(np.abs(fr.G_p), axis=1)
    s = np.where(s > 0, s, np.maximum(np.max(np.abs(fr.G_q), axis=1, initial=0.0), 1.0))
    s = np.where(s > 0, s, 1.0)
    return fr.G_p / s[:, None], fr.G_q / s[:, None], fr.h / s


def _add_balls(prob, M, pm, top, cols, coefs):
    """``||coefs * x[cols of row m]||_2 <= top[m]``; ``pm`` sorted, grouped by size."""
    counts = np.bincount(pm, minlength=M)
    offs = np.concatenate([[0], np.cumsum(counts)])
    for c in np.unique(counts):
        ms = np.flatnonzero(counts == c)
        j = np.arange(ms.size)
        rows = [j * (c + 1)]
        cc = [top[ms]]
        vals = [np.ones(ms.size)]
        if c:
            jj, rr = np.meshgrid(j, np.arange(c), indexing="ij")
            pair = (offs[ms][:, None] + rr).ravel()
            rows.append((jj * (c + 1) + 1 + rr).ravel())
            cc.append(cols[pair])
            vals.append(coefs[pair])
        prob.add_cones(np.concatenate(rows), np.concatenate(cc), np.concatenate(vals),
                       np.zeros(ms.size * (c + 1)), dim=int(c) + 1, tag="ball")


def build_rdoe_problem(fr, cfg):
    """Robust-counterpart SOC program for the superellipsoid envelope."""
    anchors = cfg.validate(fr)
    K = int(cfg.K)
    M, v, nq = fr.M, fr.v, fr.n_q
    Gp, Gq, h = _normalize_rows(fr)
    lam = fr.statuses if cfg.statuses is None else np.asarray(cfg.statuses, dtype=int)
    ql = fr.q_lower if cfg.q_lower is None else np.asarray(cfg.q_lower, dtype=float)
    qu = fr.q_upper if cfg.q_upper is None else np.asarray(cfg.q_upper, dtype=float)
    w = corner_factor(v, K)

    prob = ConicProblem("max")
    u = prob.add_variable("center", v)
    L = prob.add_variable("scale", v, lb=0.0)
    q = prob.add_variable("q", nq, lb=ql, ub=qu)
    delta = prob.add_variable("delta", v, lb=0.0)
    gamma = prob.add_variable("gamma", v)
    a_top = prob.add_variable("alpha_top", M, lb=0.0)
    # one tower per (row, customer) pair; a zero coefficient gives a tower
    # whose optimal multipliers are all zero, so pruning it is exact
    if cfg.prune_zero:
        pm, pi = np.nonzero(Gp)
    else:
        pm, pi = np.repeat(np.arange(M), v), np.tile(np.arange(v), M)
    npair = pm.size
    nt = npair * (K - 1)
    a = prob.add_variable("alpha", nt, lb=0.0).reshape(npair, K - 1) if K > 1 else None
    t = prob.add_variable("t", nt, lb=0.0).reshape(npair, K - 1) if K > 1 else None

    # robust rows: a_top + sum t + Gp u + Gq q <= h
    rr, rc, rv = [], [], []
    mi = np.arange(M)
    rr.append(mi); rc.append(a_top); rv.append(np.ones(M))
    if K > 1:
        rr.append(np.repeat(pm, K - 1)); rc.append(t.ravel()); rv.append(np.ones(nt))
    nz_r, nz_c = np.nonzero(Gp)
    rr.append(nz_r); rc.append(u[nz_c]); rv.append(Gp[nz_r, nz_c])
    if nq:
        qz_r, qz_c = np.nonzero(Gq)
        rr.append(qz_r); rc.append(q[qz_c]); rv.append(Gq[qz_r, qz_c])
    prob.add_rows(np.concatenate(rr), np.concatenate(rc), np.concatenate(rv), h, tag="robust")

    if K == 1:
        # ||Gp[m] * L||_2 <= a_top[m]
        _add_balls(prob, M, pm, a_top, L[pi], Gp[pm, pi])
    else:
        # rotated cones (y + z, x, y - z) for each (pair, level)
        pp, kk = np.meshgrid(np.arange(npair), np.arange(K - 1), indexing="ij")
        pp, kk = pp.ravel(), kk.ravel()
        blk = np.arange(nt) * 3
        y = a[pp, kk]
        z = t[pp, kk]
        first = kk == 0
        rows = [blk, blk, blk + 2, blk + 2]
        cols = [y, z, y, z]
        vals = [np.ones(nt), np.ones(nt), np.ones(nt), -np.ones(nt)]
        # x entries: Gp[m, i] * L_i on the first level, a[pair, k-1] above it
        rows.append(blk[first] + 1); cols.append(L[pi[pp[first]]]); vals.append(Gp[pm[pp[first]], pi[pp[first]]])
        up = ~first
        rows.append(blk[up] + 1); cols.append(a[pp[up], kk[up] - 1]); vals.append(np.ones(int(up.sum())))
        prob.add_cones(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                       np.zeros(3 * nt), dim=3, tag="rotated")
        # ||a[pairs of m, K-1]||_2 <= a_top[m]
        _add_balls(prob, M, pm, a_top, a[:, K - 2], np.ones(npair))

    # status rows: |u_i - lam_i w L_i| <= delta_i
    iv = np.arange(v)
    rows = np.concatenate([iv, iv, iv, v + iv, v + iv, v + iv])
    cols = np.concatenate([u, L, delta, u, L, delta])
    vals = np.concatenate([np.ones(v), -lam * w, -np.ones(v), -np.ones(v), lam * w, -np.ones(v)])
    prob.add_rows(rows, cols, vals, np.zeros(2 * v), tag="status")

    # tangent cuts: gamma_i - L_i / a_k <= log a_k - 1
    slopes, icpt = pwl_log(anchors)
    na = anchors.shape[1]
    ri = np.arange(v * na)
    ii = np.repeat(iv, na)
    prob.add_rows(np.concatenate([ri, ri]), np.concatenate([gamma[ii], L[ii]]),
                  np.concatenate([np.ones(v * na), -slopes.ravel()]), icpt.ravel(), tag="pwl")

    prob.set_objective(np.concatenate([gamma, delta]),
                       np.concatenate([np.ones(v), -cfg.eps_md * np.ones(v)]), sense="max")
    return prob


def solve_rdoe(fr, cfg, backend=None, tol=None, max_iter=200, time_limit=None):
    """Build and solve; raises :class:`SolverError` unless optimal."""
    prob = build_rdoe_problem(fr, cfg)
    t0 = time.perf_counter()
    rep = solve(prob, backend=backend, tol=tol, max_iter=max_iter, time_limit=time_limit)
    elapsed = time.perf_counter() - t0
    if rep.status == "infeasible":
        raise SolverError("envelope program is infeasible (empty feasible region?)", status="infeasible")
    if rep.status == "unbounded":
        raise SolverError("envelope program is unbounded (feasible region is unbounded)", status="unbounded")
    require_optimal(rep, "envelope program")
    sol = RdoeSolution(
        center=rep["center"], scale=np.maximum(rep["scale"], 0.0), q=rep["q"],
        delta=np.maximum(rep["delta"], 0.0), gamma=rep["gamma"], status=rep.status,
        objective=rep.objective, K=int(cfg.K), solve_time=elapsed, iterations=rep.iterations, report=rep,
    )
    big = np.flatnonzero(sol.delta > 1e-3)
    if big.size:
        ids = [fr.customer_ids[i] for i in big]
        warnings.warn(f"status rows could not be met for customers {ids} (slack up to {sol.delta.max():.3g} kW)",
                      RuntimeWarning, stacklevel=2)
    return sol


def extract_envelopes(sol, v=None, K=None, customer_ids=None, method="sesd"):
    """Limits ``u_i -/+ L_ii v^(-1/2^K)`` and their total."""
    v = sol.center.shape[0] if v is None else v
    K = sol.K if K is None else K
    w = corner_factor(v, K)
    half = sol.scale * w
    ids = customer_ids if customer_ids is not None else tuple(str(i + 1) for i in range(v))
    return EnvelopeAllocation(
        customer_ids=ids, lower=sol.center - half, upper=sol.center + half, q=sol.q,
        method=method, objective=sol.objective, solve_time=sol.solve_time, status=sol.status,
        meta={"K": K, "relative_gap": relative_gap(v, K), "corner_factor": w,
              "scale": sol.scale.tolist(), "center": sol.center.tolist()},
    )
