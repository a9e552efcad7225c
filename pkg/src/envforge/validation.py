"""Checks of allocations against the exact power flow and the polyhedron."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .exceptions import PowerFlowError
from .powerflow import _injection_map, _Sweep, customer_powers
from .region import monitored_nodes


@dataclass
class ViolationReport:
    draws: int
    violations: int
    diverged: int
    worst_voltage: np.ndarray  # per draw, the |V| furthest outside (or closest to) the band
    worst_location: list  # per draw, (bus, phase)
    violated: np.ndarray  # per draw, bool
    max_overshoot: float
    seed: int
    v_min: float
    v_max: float
    tolerance: float = 0.0
    samples: np.ndarray = field(default=None, repr=False)

    def rows(self):
        """Flat per-draw table: index, worst |V|, bus, phase, violated."""
        for k in range(self.draws):
            loc = self.worst_location[k] or ("", "")
            yield k, float(self.worst_voltage[k]), loc[0], loc[1], bool(self.violated[k])

    def summary(self):
        return {
            "draws": self.draws,
            "violations": self.violations,
            "diverged": self.diverged,
            "max_overshoot_pu": self.max_overshoot,
            "min_voltage_pu": float(np.nanmin(self.worst_voltage)) if self.draws else None,
            "seed": self.seed,
            "v_min_pu": self.v_min,
            "v_max_pu": self.v_max,
            "tolerance_pu": self.tolerance,
        }


def monte_carlo_validate(net, allocation, draws=10_000, seed=0, tolerance=0.0, monitored="all"):
    """Sample active powers uniformly in the envelopes and run the exact power flow.

    Reactive powers stay at the allocation's dispatch and passive customers
    at forecast.  A draw is a violation when some monitored node voltage
    leaves ``[v_min - tolerance, v_max + tolerance]``.
    """
    if draws < 1:
        raise ValueError("draws must be at least 1")
    act = net.active_customers
    if len(act) != allocation.v:
        raise ValueError("allocation does not cover every active customer")
    ids = [c.id for c in act]
    if tuple(ids) != tuple(allocation.customer_ids):
        order = [list(allocation.customer_ids).index(i) for i in ids]
        lower, upper = allocation.lower[order], allocation.upper[order]
        q = allocation.q[order] if allocation.q.size else np.zeros(len(act))
    else:
        lower, upper = allocation.lower, allocation.upper
        q = allocation.q if allocation.q.size else np.zeros(len(act))
    rng = np.random.default_rng(seed)
    samples = lower + (upper - lower) * rng.random((draws, len(act)))

    sweep = _Sweep(net)
    nodes = monitored_nodes(net, monitored)
    idx = np.array([sweep.index[nd] for nd in nodes])
    worst_v = np.full(draws, np.nan)
    worst_loc = [None] * draws
    violated = np.zeros(draws, dtype=bool)
    diverged = 0
    overshoot = 0.0
    for k in range(draws):
        try:
            op = sweep.run(_injection_map(net, customer_powers(net, samples[k], q)))
        except PowerFlowError:
            diverged += 1
            violated[k] = True
            continue
        mag = np.abs(op.voltages[idx])
        excess = np.maximum(net.v_min - mag, mag - net.v_max)
        j = int(np.argmax(excess))
        worst_v[k] = mag[j]
        worst_loc[k] = nodes[j]
        if excess[j] > tolerance:
            violated[k] = True
            overshoot = max(overshoot, float(excess[j]))
    return ViolationReport(
        draws=draws, violations=int(violated.sum()), diverged=diverged, worst_voltage=worst_v,
        worst_location=worst_loc, violated=violated, max_overshoot=overshoot, seed=seed,
        v_min=net.v_min, v_max=net.v_max, tolerance=tolerance, samples=samples,
    )


@dataclass
class CertificateReport:
    min_slack: float
    worst_point: np.ndarray
    worst_row: object
    points_checked: int
    exhaustive: bool

    def holds(self, tol=1e-6):
        return self.min_slack >= -tol


def certify_box_in_polyhedron(fr, allocation, q=None, samples=10_000, seed=0, exhaustive_max=10):
    """Minimum row slack over the envelope box corners.

    All ``2^v`` corners are checked for ``v <= exhaustive_max``.  Larger
    boxes are checked on ``samples`` corners drawn by Latin-hypercube
    rounding plus, for every row, the corner that maximises that row.
    """
    q = allocation.q if q is None else np.asarray(q, dtype=float)
    if fr.n_q == 0:
        q = np.zeros(0)
    lo, up = allocation.lower, allocation.upper
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
        raise ValueError("allocation limits must be finite")
    v = fr.v
    if v <= exhaustive_max:
        pts = allocation.vertices()
        exhaustive = True
    else:
        u = qmc.LatinHypercube(d=v, seed=seed).random(samples)
        sampled = np.where(u < 0.5, lo, up)
        worst = np.where(fr.G_p > 0, up, lo)
        pts = np.unique(np.vstack([sampled, worst]), axis=0)
        exhaustive = False
    slack = fr.slack(pts, q)
    k, m = np.unravel_index(np.argmin(slack), slack.shape)
    return CertificateReport(float(slack[k, m]), pts[k], fr.labels[m], int(pts.shape[0]), exhaustive)


def tower_primal_max(x, K, grid=None):
    """Maximum of ``x . y`` over ``sum |y_i|^(2^K) <= 1``.

    The tower constraints project exactly to this ``2^K``-norm ball, so the
    maximum is the dual norm ``||x||_r`` with ``1/r + 1/2^K = 1`` computed
    here by a direct search over the ball's boundary (grid in 1-D/2-D,
    Nelder-Mead restarts otherwise) rather than by the closed form.
    """
    x = np.asarray(x, dtype=float)
    n = 2 ** K
    d = x.shape[0]
    if not np.any(x):
        return 0.0
    if d == 1:
        return float(abs(x[0]))
    if d == 2:
        th = np.linspace(0.0, 2 * np.pi, grid or 200_001)
        c, s = np.cos(th), np.sin(th)
        r = (np.abs(c) ** n + np.abs(s) ** n) ** (-1.0 / n)
        return float(np.max(r * (x[0] * c + x[1] * s)))
    best = 0.0
    rng = np.random.default_rng(0)

    def neg(z):
        nz = (np.sum(np.abs(z) ** n)) ** (1.0 / n)
        return -(x @ z) / nz if nz > 0 else 0.0

    for start in [np.sign(x) * np.abs(x) ** (1.0 / (n - 1))] + list(rng.normal(size=(8, d))):
        res = minimize(neg, start, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20_000})
        best = max(best, -res.fun)
    return float(best)


def tower_dual_objective(x, alphas, alpha_top):
    """Dual objective ``alpha_top + sum x_i^2/(4 a_1i) + sum a_{k-1,i}^2/(4 a_ki)``."""
    x = np.asarray(x, dtype=float)
    val = alpha_top + np.sum(x ** 2 / (4 * alphas[0]))
    for k in range(1, len(alphas)):
        val += np.sum(alphas[k - 1] ** 2 / (4 * alphas[k]))
    return float(val)


def tower_dual_min(x, K):
    """Numerically minimise the dual objective over ``alpha > 0``.

    ``alpha_top`` is eliminated at its optimum ``||alpha_{K-1}||_2`` and the
    remaining multipliers are optimised in log coordinates.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    if K == 1:
        # no links: the dual is min alpha_top s.t. ||x|| <= alpha_top
        return float(np.linalg.norm(x))
    if not np.any(x):
        # infimum approached as alpha -> 0+
        z = np.full((K - 1) * d, -30.0)
        return _dual_from_logs(z, x, K)
    xs = np.where(x == 0, 1e-300, x)
    best = np.inf
    rng = np.random.default_rng(1)
    starts = [np.zeros((K - 1) * d)] + [rng.normal(size=(K - 1) * d) for _ in range(4)]
    for z0 in starts:
        res = minimize(_dual_from_logs, z0, args=(xs, K), method="BFGS", options={"gtol": 1e-12})
        res = minimize(_dual_from_logs, res.x, args=(xs, K), method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 50_000})
        best = min(best, res.fun)
    return float(best)


def _dual_from_logs(z, x, K):
    d = x.shape[0]
    alphas = list(np.exp(np.clip(z, -300, 300)).reshape(K - 1, d))
    return tower_dual_objective(x, alphas, float(np.linalg.norm(alphas[-1])))


def dual_gap_probe(x, K):
    """``(primal max, dual min)`` for the worst case of ``x . y`` over the tower set."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] > 4 or K > 3:
        raise ValueError("dual_gap_probe is meant for dim <= 4 and K <= 3")
    return tower_primal_max(x, K), tower_dual_min(x, K)
