"""Network model and JSON schema loader.

Customer powers use the load convention: positive ``p``/``q`` is power
drawn from the network (import), negative is export.

Schema (JSON)::

    {
      "name": "twobus",
      "source": {"bus": "1", "base_voltage_v": 230.0, "base_kva": 10.0,
                 "voltage_pu": [[1.0, 0.0], [-0.5, -0.866], [-0.5, 0.866]]},
      "buses": [{"id": "1", "phases": "abc"}, ...],
      "lines": [{"from": "1", "to": "2", "z_ohm": [[[r, x], [r, x], [r, x]], ...]}],
      "customers": [
        {"id": "1", "bus": "2", "phase": "b", "kind": "active",
         "p_limits_kw": [-7, 7], "q_limits_kvar": [-3, 3], "status": 1},
        {"id": "2", "bus": "2", "phase": "a", "kind": "passive",
         "p_kw": 2.0, "q_kvar": 0.5}
      ],
      "limits": {"v_min_pu": 0.95, "v_max_pu": 1.05}
    }

``base_voltage_v`` is phase-to-neutral and ``base_kva`` is per phase.
``voltage_pu`` is optional and defaults to a balanced 1.0 p.u. set.
``z_ohm`` is always 3x3 in phase order a, b, c; rows and columns of
phases absent at the receiving bus are ignored.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NetworkError

PHASES = "abc"
_BALANCED = np.exp(-2j * np.pi / 3 * np.arange(3))


@dataclass(frozen=True)
class Bus:
    id: str
    phases: tuple[str, ...]


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    z_ohm: np.ndarray  # 3x3 complex


@dataclass(frozen=True)
class Source:
    bus: str
    voltage_pu: np.ndarray  # 3 complex
    base_voltage_v: float
    base_kva: float

    @property
    def z_base(self):
        return self.base_voltage_v ** 2 / (self.base_kva * 1e3)


@dataclass(frozen=True)
class Customer:
    id: str
    bus: str
    phase: str
    kind: str  # "active" | "passive"
    p_kw: float = 0.0
    q_kvar: float = 0.0
    p_limits_kw: tuple[float, float] = (-np.inf, np.inf)
    q_limits_kvar: tuple[float, float] = (0.0, 0.0)
    status: int = 0

    @property
    def active(self):
        return self.kind == "active"


@dataclass
class NetworkModel:
    buses: list[Bus]
    lines: list[Line]
    source: Source
    customers: list[Customer]
    v_min: float = 0.95
    v_max: float = 1.05
    name: str = ""
    _order: list[str] = field(default_factory=list, repr=False)
    _parent: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.validate()

    @property
    def active_customers(self):
        return [c for c in self.customers if c.active]

    @property
    def passive_customers(self):
        return [c for c in self.customers if not c.active]

    def bus(self, bus_id):
        return self._bus_map[bus_id]

    def nodes(self):
        """All ``(bus, phase)`` pairs in breadth-first bus order."""
        return [(b, ph) for b in self._order for ph in self._bus_map[b].phases]

    @property
    def bus_order(self):
        return list(self._order)

    def parent_line(self, bus_id):
        return self._parent.get(bus_id)

    def validate(self):
        self._bus_map = {}
        for b in self.buses:
            if b.id in self._bus_map:
                raise NetworkError(f"buses: duplicate bus id {b.id!r}")
            if not b.phases or any(ph not in PHASES for ph in b.phases):
                raise NetworkError(f"buses[{b.id}].phases: unknown phase in {b.phases!r}")
            self._bus_map[b.id] = b
        if self.source.bus not in self._bus_map:
            raise NetworkError(f"source.bus: unknown bus {self.source.bus!r}")
        if not self.v_min < self.v_max:
            raise NetworkError("limits: v_min must be below v_max")
        if self.source.base_voltage_v <= 0 or self.source.base_kva <= 0:
            raise NetworkError("source: base voltage and base power must be positive")

        adj: dict[str, list[Line]] = {b: [] for b in self._bus_map}
        for ln in self.lines:
            for end in (ln.from_bus, ln.to_bus):
                if end not in self._bus_map:
                    raise NetworkError(f"lines: unknown bus {end!r}")
            if ln.from_bus == ln.to_bus:
                raise NetworkError(f"lines: self-loop at bus {ln.from_bus!r}")
            if np.asarray(ln.z_ohm).shape != (3, 3):
                raise NetworkError("lines.z_ohm: expected a 3x3 matrix")
            adj[ln.from_bus].append(ln)
            adj[ln.to_bus].append(ln)

        if len(self.lines) > len(self.buses) - 1:
            raise NetworkError("lines: meshed network (more lines than a tree); only radial networks are supported")
        order, parent = [self.source.bus], {}
        seen = {self.source.bus}
        queue = deque(order)
        while queue:
            b = queue.popleft()
            for ln in adj[b]:
                other = ln.to_bus if ln.from_bus == b else ln.from_bus
                if other in seen:
                    continue
                seen.add(other)
                parent[other] = (b, ln)
                order.append(other)
                queue.append(other)
        if len(seen) != len(self.buses):
            missing = sorted(set(self._bus_map) - seen)
            raise NetworkError(f"lines: network is disconnected; unreachable buses {missing}")
        for child, (par, _) in parent.items():
            extra = set(self._bus_map[child].phases) - set(self._bus_map[par].phases)
            if extra:
                raise NetworkError(f"buses[{child}]: phases {sorted(extra)} not present upstream at {par!r}")
        self._order, self._parent = order, parent

        ids = set()
        for c in self.customers:
            if c.id in ids:
                raise NetworkError(f"customers: duplicate id {c.id!r}")
            ids.add(c.id)
            if c.bus not in self._bus_map:
                raise NetworkError(f"customers[{c.id}].bus: unknown bus {c.bus!r}")
            if c.phase not in self._bus_map[c.bus].phases:
                raise NetworkError(f"customers[{c.id}].phase: unknown phase {c.phase!r} at bus {c.bus!r}")
            if c.kind not in ("active", "passive"):
                raise NetworkError(f"customers[{c.id}].kind: expected 'active' or 'passive'")
            if c.q_limits_kvar[0] > c.q_limits_kvar[1]:
                raise NetworkError(f"customers[{c.id}].q_limits_kvar: lower above upper")
            if c.p_limits_kw[0] > c.p_limits_kw[1]:
                raise NetworkError(f"customers[{c.id}].p_limits_kw: lower above upper")
            if c.status not in (-1, 0, 1):
                raise NetworkError(f"customers[{c.id}].status: expected -1, 0 or 1")
        if not self.active_customers:
            raise NetworkError("customers: at least one active customer is required")


def _complex(pair, where):
    try:
        re, im = pair
        return complex(float(re), float(im))
    except (TypeError, ValueError):
        raise NetworkError(f"{where}: expected a [re, im] pair") from None


def _require(d, key, where):
    if key not in d:
        raise NetworkError(f"{where}.{key}: missing field")
    return d[key]


def network_from_dict(data):
    """Build a validated :class:`NetworkModel` from a schema dictionary."""
    src = _require(data, "source", "network")
    if "voltage_pu" in src:
        vs = src["voltage_pu"]
        if len(vs) != 3:
            raise NetworkError("source.voltage_pu: expected three [re, im] pairs")
        v0 = np.array([_complex(x, "source.voltage_pu") for x in vs])
    else:
        v0 = _BALANCED.copy()
    source = Source(
        bus=str(_require(src, "bus", "source")),
        voltage_pu=v0,
        base_voltage_v=float(_require(src, "base_voltage_v", "source")),
        base_kva=float(_require(src, "base_kva", "source")),
    )
    buses = []
    for i, b in enumerate(_require(data, "buses", "network")):
        ph = b.get("phases", "abc")
        buses.append(Bus(str(_require(b, "id", f"buses[{i}]")), tuple(ph)))
    lines = []
    for i, ln in enumerate(data.get("lines", [])):
        z = _require(ln, "z_ohm", f"lines[{i}]")
        try:
            zm = np.array([[_complex(e, f"lines[{i}].z_ohm") for e in row] for row in z])
        except TypeError:
            raise NetworkError(f"lines[{i}].z_ohm: expected a 3x3 array of [re, im] pairs") from None
        if zm.shape != (3, 3):
            raise NetworkError(f"lines[{i}].z_ohm: expected a 3x3 array of [re, im] pairs")
        lines.append(Line(str(_require(ln, "from", f"lines[{i}]")),
                          str(_require(ln, "to", f"lines[{i}]")), zm))
    customers = []
    for i, c in enumerate(_require(data, "customers", "network")):
        where = f"customers[{i}]"
        kind = _require(c, "kind", where)
        kw = dict(
            id=str(_require(c, "id", where)),
            bus=str(_require(c, "bus", where)),
            phase=str(_require(c, "phase", where)),
            kind=kind,
        )
        if kind == "passive":
            kw["p_kw"] = float(c.get("p_kw", 0.0))
            kw["q_kvar"] = float(c.get("q_kvar", 0.0))
        else:
            kw["p_limits_kw"] = tuple(float(x) for x in c.get("p_limits_kw", (-np.inf, np.inf)))
            kw["q_limits_kvar"] = tuple(float(x) for x in c.get("q_limits_kvar", (0.0, 0.0)))
            kw["status"] = int(c.get("status", 0))
            kw["q_kvar"] = float(c.get("q_kvar", 0.0))
        customers.append(Customer(**kw))
    limits = data.get("limits", {})
    return NetworkModel(
        buses=buses,
        lines=lines,
        source=source,
        customers=customers,
        v_min=float(limits.get("v_min_pu", 0.95)),
        v_max=float(limits.get("v_max_pu", 1.05)),
        name=str(data.get("name", "")),
    )


def load_network(path):
    """Read and validate a network file."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkError(f"{path}: not valid JSON ({exc})") from None
    return network_from_dict(data)


def network_to_dict(net):
    def pairs(z):
        return [[[float(e.real), float(e.imag)] for e in row] for row in z]

    out = {
        "name": net.name,
        "source": {
            "bus": net.source.bus,
            "base_voltage_v": net.source.base_voltage_v,
            "base_kva": net.source.base_kva,
            "voltage_pu": [[float(v.real), float(v.imag)] for v in net.source.voltage_pu],
        },
        "buses": [{"id": b.id, "phases": "".join(b.phases)} for b in net.buses],
        "lines": [{"from": ln.from_bus, "to": ln.to_bus, "z_ohm": pairs(ln.z_ohm)} for ln in net.lines],
        "customers": [],
        "limits": {"v_min_pu": net.v_min, "v_max_pu": net.v_max},
    }
    for c in net.customers:
        d = {"id": c.id, "bus": c.bus, "phase": c.phase, "kind": c.kind}
        if c.active:
            d.update(p_limits_kw=list(c.p_limits_kw), q_limits_kvar=list(c.q_limits_kvar), status=c.status)
        else:
            d.update(p_kw=c.p_kw, q_kvar=c.q_kvar)
        out["customers"].append(d)
    return out
