"""Exact unbalanced three-phase power flow (backward/forward sweep).

Radial fixed-point iteration on phase currents with constant-power wye
loads.  Convergence is declared when the load currents recomputed from the
latest voltages differ from the ones used in the sweep by at most ``tol``
p.u. at every node; at that point the sweep solution satisfies nodal
current balance to the same tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import PowerFlowError
from .network import PHASES


@dataclass(frozen=True)
class BaseOperatingPoint:
    nodes: list  # (bus, phase)
    voltages: np.ndarray  # complex p.u., aligned with nodes
    residual: float
    iterations: int

    def magnitudes(self):
        return np.abs(self.voltages)

    def voltage(self, bus, phase):
        return self.voltages[self.nodes.index((bus, phase))]


def _injection_map(net, injections):
    """Complex load (p.u.) per node from per-customer ``(p_kw, q_kvar)``."""
    load = {}
    base = net.source.base_kva
    for c in net.customers:
        p, q = injections.get(c.id, (c.p_kw, c.q_kvar) if not c.active else (None, None))
        if p is None:
            raise ValueError(f"missing injection for active customer {c.id!r}")
        key = (c.bus, c.phase)
        load[key] = load.get(key, 0.0) + complex(p, q) / base
    return load


def customer_powers(net, p_active=None, q_active=None):
    """Per-customer powers: passive at forecast, active from the given vectors."""
    act = net.active_customers
    p_active = np.zeros(len(act)) if p_active is None else np.asarray(p_active, dtype=float)
    q_active = np.zeros(len(act)) if q_active is None else np.asarray(q_active, dtype=float)
    out = {c.id: (c.p_kw, c.q_kvar) for c in net.passive_customers}
    for c, p, q in zip(act, p_active, q_active):
        out[c.id] = (float(p), float(q))
    return out


class _Sweep:
    """Precomputed topology for repeated sweeps on one network."""

    def __init__(self, net):
        self.net = net
        self.nodes = net.nodes()
        self.index = {nd: i for i, nd in enumerate(self.nodes)}
        self.order = net.bus_order
        zb = net.source.z_base
        self.branches = []
        for bus in self.order[1:]:
            par, ln = net.parent_line(bus)
            phs = net.bus(bus).phases
            sel = [PHASES.index(ph) for ph in phs]
            z = ln.z_ohm[np.ix_(sel, sel)] / zb
            child_idx = np.array([self.index[(bus, ph)] for ph in phs])
            par_idx = np.array([self.index[(par, ph)] for ph in phs])
            self.branches.append((bus, par, z, child_idx, par_idx))
        src = net.source.bus
        self.src_idx = np.array([self.index[(src, ph)] for ph in net.bus(src).phases])
        self.src_v = np.array([net.source.voltage_pu[PHASES.index(ph)] for ph in net.bus(src).phases])
        node_v0 = np.empty(len(self.nodes), dtype=complex)
        for i, (_, ph) in enumerate(self.nodes):
            node_v0[i] = net.source.voltage_pu[PHASES.index(ph)]
        self.v_init = node_v0

    def run(self, load, tol=1e-8, max_iter=100):
        s = np.zeros(len(self.nodes), dtype=complex)
        for nd, val in load.items():
            s[self.index[nd]] += val
        V = self.v_init.copy()
        V[self.src_idx] = self.src_v
        I_load = np.conj(s / V)
        for it in range(1, max_iter + 1):
            # backward: branch current = loads downstream
            I_node = I_load.copy()
            I_branch = {}
            for bus, par, z, ci, pi in reversed(self.branches):
                I_branch[bus] = I_node[ci]
                I_node[pi] += I_node[ci]
            # forward
            for bus, par, z, ci, pi in self.branches:
                V[ci] = V[pi] - z @ I_branch[bus]
            if not np.all(np.isfinite(V)) or np.any(np.abs(V) < 1e-6):
                raise PowerFlowError(f"power flow diverged at iteration {it} (voltage collapse)")
            I_new = np.conj(s / V)
            residual = float(np.max(np.abs(I_new - I_load), initial=0.0))
            I_load = I_new
            if residual <= tol:
                return BaseOperatingPoint(list(self.nodes), V.copy(), residual, it)
        raise PowerFlowError(
            f"power flow did not converge in {max_iter} iterations (residual {residual:.3e} p.u.); "
            "loading may exceed the network's transfer limit"
        )


def solve_exact_power_flow(net, injections, tol=1e-8, max_iter=100, _sweep=None):
    """Solve the unbalanced power flow.

    ``injections`` maps customer id to ``(p_kw, q_kvar)`` in load convention.
    Passive customers missing from the map keep their forecast powers.
    """
    sweep = _sweep or _Sweep(net)
    return sweep.run(_injection_map(net, injections), tol=tol, max_iter=max_iter)
