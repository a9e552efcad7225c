"""Linearised feasible region for active-customer powers.

Voltage magnitudes are linearised around an exact base power flow with
active customers at zero active power and passive customers at forecast::

    |V| ~= v0 - S_p p - S_q (q - q0)

where ``S_p``/``S_q`` are injection sensitivities (p.u. per kW / kvar) and
``p``/``q`` are active-customer imports.  With voltage variables ``v``
eliminated (``C = -I``) the region is the polyhedron::

    G_p p + G_q q <= h,   G_p = E A,  G_q = E B,  h = f + E d,

with ``A = -S_p``, ``B = -S_q``, ``d = -(v0 + S_q q0)``, ``E = [I; -I]``
and ``f = [v_max; -v_min]``.  Active-power limits of active customers are
appended as plain rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .conic import ConicProblem, require_optimal, solve_lp
from .exceptions import InfeasibleRegionError, PowerFlowError
from .powerflow import _injection_map, _Sweep, customer_powers


@dataclass(frozen=True)
class VoltageSensitivity:
    nodes: list  # monitored (bus, phase)
    v0: np.ndarray  # base magnitudes
    dv_dp: np.ndarray  # p.u. per kW of injection, (n_nodes, v)
    dv_dq: np.ndarray  # p.u. per kvar of injection, (n_nodes, v)
    q0: np.ndarray  # base reactive imports of active customers


@dataclass(frozen=True)
class FeasibleRegion:
    """Polyhedron ``G_p p + G_q q <= h`` over active imports ``p`` and reactive ``q``."""

    G_p: np.ndarray
    h: np.ndarray
    G_q: np.ndarray = None
    labels: tuple = ()
    customer_ids: tuple = ()
    statuses: np.ndarray = None
    q_lower: np.ndarray = None
    q_upper: np.ndarray = None
    q_base: np.ndarray = None
    linear_map: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        G_p = np.atleast_2d(np.asarray(self.G_p, dtype=float))
        h = np.asarray(self.h, dtype=float).ravel()
        M, v = G_p.shape
        if h.shape[0] != M:
            raise ValueError("h must have one entry per row of G_p")
        if v < 1:
            raise ValueError("feasible region needs at least one customer")
        G_q = np.zeros((M, 0)) if self.G_q is None else np.asarray(self.G_q, dtype=float).reshape(M, -1)
        nq = G_q.shape[1]
        if not (np.all(np.isfinite(G_p)) and np.all(np.isfinite(G_q)) and np.all(np.isfinite(h))):
            raise ValueError("feasible region coefficients must be finite")
        labels = tuple(self.labels) if len(self.labels) else tuple(f"row{m}" for m in range(M))
        if len(labels) != M:
            raise ValueError("one label per row required")
        ids = tuple(self.customer_ids) if len(self.customer_ids) else tuple(str(i + 1) for i in range(v))
        if len(ids) != v:
            raise ValueError("one customer id per column required")
        st = np.zeros(v, dtype=int) if self.statuses is None else np.asarray(self.statuses, dtype=int).ravel()
        if st.shape[0] != v or np.any(~np.isin(st, (-1, 0, 1))):
            raise ValueError("statuses must be one of -1, 0, +1 per customer")
        ql = np.full(nq, -np.inf) if self.q_lower is None else np.asarray(self.q_lower, dtype=float).ravel()
        qu = np.full(nq, np.inf) if self.q_upper is None else np.asarray(self.q_upper, dtype=float).ravel()
        if ql.shape[0] != nq or qu.shape[0] != nq or np.any(ql > qu):
            raise ValueError("q bounds must match G_q columns with lower <= upper")
        qb = np.clip(np.zeros(nq), ql, qu) if self.q_base is None else np.asarray(self.q_base, dtype=float).ravel()
        for name, val in (("G_p", G_p), ("h", h), ("G_q", G_q), ("labels", labels), ("customer_ids", ids),
                          ("statuses", st), ("q_lower", ql), ("q_upper", qu), ("q_base", qb)):
            object.__setattr__(self, name, val)

    @property
    def M(self):
        return self.G_p.shape[0]

    @property
    def v(self):
        return self.G_p.shape[1]

    @property
    def n_q(self):
        return self.G_q.shape[1]

    def slack(self, p, q=None):
        """``h - G_p p - G_q q`` for one point or a stack of points."""
        p = np.asarray(p, dtype=float)
        q = self.q_base if q is None else np.asarray(q, dtype=float)
        return self.h - p @ self.G_p.T - q @ self.G_q.T

    def contains(self, p, q=None, tol=1e-9):
        return np.all(self.slack(p, q) >= -tol, axis=-1)

    def fix_q(self, q=None):
        """Region over ``p`` alone with reactive dispatch folded into ``h``."""
        q = self.q_base if q is None else np.asarray(q, dtype=float)
        return replace(self, G_q=np.zeros((self.M, 0)), h=self.h - self.G_q @ q,
                       q_lower=None, q_upper=None, q_base=None, linear_map=None)

    def subset(self, rows):
        rows = np.asarray(rows, dtype=int)
        return replace(self, G_p=self.G_p[rows], G_q=self.G_q[rows], h=self.h[rows],
                       labels=tuple(self.labels[i] for i in rows), linear_map=None)

    def with_statuses(self, statuses):
        return replace(self, statuses=np.broadcast_to(np.asarray(statuses, dtype=int), (self.v,)).copy())


def monitored_nodes(net, which="customers"):
    if which == "all":
        return net.nodes()
    if which != "customers":
        raise ValueError("monitored must be 'customers' or 'all'")
    seen = []
    for c in net.customers:
        nd = (c.bus, c.phase)
        if nd not in seen:
            seen.append(nd)
    return seen


def build_voltage_sensitivities(net, base=None, step_kw=0.1, step_kvar=0.1, monitored="customers",
                                tol=1e-10, max_iter=100):
    """Central-difference voltage-magnitude sensitivities to active-customer injections.

    The base point has active customers at zero active power and their
    scheduled reactive power (``q_kvar`` in the network file), passive
    customers at forecast.  Entries are positive when exporting more raises
    the voltage.
    """
    sweep = _Sweep(net)
    act = net.active_customers
    q0 = np.array([c.q_kvar for c in act])
    p0 = np.zeros(len(act))
    nodes = monitored_nodes(net, monitored) if isinstance(monitored, str) else list(monitored)
    idx = np.array([sweep.index[nd] for nd in nodes])

    def mags(p, q):
        op = sweep.run(_injection_map(net, customer_powers(net, p, q)), tol=tol, max_iter=max_iter)
        return np.abs(op.voltages[idx])

    if base is None:
        v0 = mags(p0, q0)
    else:
        v0 = np.abs(np.array([base.voltage(*nd) for nd in nodes]))
    dv_dp = np.empty((len(nodes), len(act)))
    dv_dq = np.empty((len(nodes), len(act)))
    for j in range(len(act)):
        e = np.zeros(len(act))
        e[j] = 1.0
        try:
            # load convention: +step is more import, so the injection derivative flips sign
            dv_dp[:, j] = -(mags(p0 + step_kw * e, q0) - mags(p0 - step_kw * e, q0)) / (2 * step_kw)
            dv_dq[:, j] = -(mags(p0, q0 + step_kvar * e) - mags(p0, q0 - step_kvar * e)) / (2 * step_kvar)
        except PowerFlowError as exc:
            raise PowerFlowError(f"perturbed power flow failed for customer {act[j].id!r}: {exc}") from exc
    return VoltageSensitivity(nodes, v0, dv_dp, dv_dq, q0)


def assemble_feasible_region(net, sens=None, include_p_limits=True, monitored="customers", **sens_kw):
    """Assemble the reduced polyhedron from voltage sensitivities."""
    if sens is None:
        sens = build_voltage_sensitivities(net, monitored=monitored, **sens_kw)
    act = net.active_customers
    n = len(sens.nodes)
    A = -sens.dv_dp
    B = -sens.dv_dq
    d = -(sens.v0 + sens.dv_dq @ sens.q0)
    E = np.vstack([np.eye(n), -np.eye(n)])
    f = np.concatenate([np.full(n, net.v_max), np.full(n, -net.v_min)])
    G_p = E @ A
    G_q = E @ B
    h = f + E @ d
    labels = [(bus, ph, "upper") for bus, ph in sens.nodes] + [(bus, ph, "lower") for bus, ph in sens.nodes]
    slack = h - G_q @ sens.q0
    bad = np.flatnonzero(slack <= 0)
    if bad.size:
        lab = labels[bad[0]]
        raise InfeasibleRegionError(
            f"base operating point violates voltage limit at bus {lab[0]} phase {lab[1]} ({lab[2]})", label=lab)
    if include_p_limits:
        rows, rhs = [], []
        for j, c in enumerate(act):
            lo, hi = c.p_limits_kw
            if np.isfinite(hi):
                r = np.zeros(len(act)); r[j] = 1.0
                rows.append(r); rhs.append(hi); labels.append((c.id, "p", "upper"))
            if np.isfinite(lo):
                r = np.zeros(len(act)); r[j] = -1.0
                rows.append(r); rhs.append(-lo); labels.append((c.id, "p", "lower"))
        if rows:
            G_p = np.vstack([G_p, np.array(rows)])
            G_q = np.vstack([G_q, np.zeros((len(rows), len(act)))])
            h = np.concatenate([h, rhs])
    return FeasibleRegion(
        G_p=G_p, G_q=G_q, h=h, labels=tuple(labels),
        customer_ids=tuple(c.id for c in act),
        statuses=np.array([c.status for c in act]),
        q_lower=np.array([c.q_limits_kvar[0] for c in act]),
        q_upper=np.array([c.q_limits_kvar[1] for c in act]),
        q_base=sens.q0,
        linear_map={"A": A, "B": B, "d": d, "E": E, "f": f, "rows": 2 * n},
    )


def feasible_region_from_network(net, monitored="customers", include_p_limits=True, **sens_kw):
    """Power flow, sensitivities and polyhedron in one call."""
    return assemble_feasible_region(net, None, include_p_limits=include_p_limits, monitored=monitored, **sens_kw)


def remove_redundant_rows(fr, q="fixed", tol=1e-9):
    """Drop rows implied by the others (one LP per row).

    ``q`` is a reactive dispatch vector, ``"fixed"`` for the region's base
    dispatch, or ``"free"`` to keep ``q`` as a variable within its bounds.
    A row is kept iff maximising its left-hand side over the remaining
    kept rows exceeds its bound by more than ``tol``.
    """
    if isinstance(q, str) and q == "free":
        G = np.hstack([fr.G_p, fr.G_q])
        lb = np.concatenate([np.full(fr.v, -np.inf), fr.q_lower])
        ub = np.concatenate([np.full(fr.v, np.inf), fr.q_upper])
        h = fr.h
    else:
        qv = fr.q_base if (isinstance(q, str) and q == "fixed") else np.asarray(q, dtype=float)
        G = fr.G_p
        h = fr.h - fr.G_q @ qv
        lb = np.full(fr.v, -np.inf)
        ub = np.full(fr.v, np.inf)
    keep = list(range(fr.M))
    for i in range(fr.M):
        others = [k for k in keep if k != i]
        prob = ConicProblem("max")
        x = prob.add_variable("x", G.shape[1], lb=lb, ub=ub)
        if others:
            sub = G[others]
            r, c = np.nonzero(np.ones_like(sub, dtype=bool))
            prob.add_rows(r, x[c], sub[r, c], h[others])
        # cap the row itself so the LP stays bounded when row i is essential
        prob.add_rows(np.zeros(G.shape[1]), x, G[i], [h[i] + 1.0])
        prob.set_objective(x, G[i])
        rep = require_optimal(solve_lp(prob), f"redundancy LP for row {fr.labels[i]}")
        if rep.objective <= h[i] + tol:
            keep.remove(i)
    out = fr.subset(keep)
    if not (isinstance(q, str) and q == "free"):
        out = replace(out, h=out.h - out.G_q @ (fr.q_base if isinstance(q, str) else np.asarray(q, dtype=float)),
                      G_q=np.zeros((len(keep), 0)), q_lower=None, q_upper=None, q_base=None)
    return out
