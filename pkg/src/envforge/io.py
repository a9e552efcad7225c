"""Result and region files (JSON) and the per-draw validation table (CSV)."""
from __future__ import annotations

import csv
import json
import math

import numpy as np

from .rdoe import EnvelopeAllocation
from .region import FeasibleRegion


def _num(x):
    x = float(x)
    return None if math.isnan(x) else x


def allocation_to_dict(alloc):
    return {
        "method": alloc.method,
        "customers": [
            {"id": cid, "lower_kw": float(lo), "upper_kw": float(up)}
            for cid, lo, up in zip(alloc.customer_ids, alloc.lower, alloc.upper)
        ],
        "q_dispatch": [float(x) for x in alloc.q],
        "total_doe_kw": alloc.total_doe,
        "objective": _num(alloc.objective),
        "solve_time_s": float(alloc.solve_time),
        "solver_status": alloc.status,
        "meta": _jsonable(alloc.meta),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return _num(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def allocation_from_dict(data):
    try:
        cust = data["customers"]
        alloc = EnvelopeAllocation(
            customer_ids=tuple(str(c["id"]) for c in cust),
            lower=np.array([c["lower_kw"] for c in cust], dtype=float),
            upper=np.array([c["upper_kw"] for c in cust], dtype=float),
            q=np.array(data.get("q_dispatch", []), dtype=float),
            method=data["method"],
            objective=float("nan") if data.get("objective") is None else float(data["objective"]),
            solve_time=float(data.get("solve_time_s", 0.0)),
            status=data.get("solver_status", "optimal"),
            meta=data.get("meta", {}),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed envelope result: {exc}") from None
    if np.any(alloc.lower > alloc.upper):
        raise ValueError("malformed envelope result: lower_kw above upper_kw")
    return alloc


def save_allocation(alloc, path):
    with open(path, "w") as fh:
        json.dump(allocation_to_dict(alloc), fh, indent=2)


def load_allocation(path):
    with open(path) as fh:
        return allocation_from_dict(json.load(fh))


def region_to_dict(fr):
    return {
        "G_p": fr.G_p.tolist(),
        "G_q": fr.G_q.tolist(),
        "h": fr.h.tolist(),
        "labels": [list(l) if isinstance(l, tuple) else l for l in fr.labels],
        "customer_ids": list(fr.customer_ids),
        "statuses": fr.statuses.tolist(),
        "q_lower": fr.q_lower.tolist(),
        "q_upper": fr.q_upper.tolist(),
        "q_base": fr.q_base.tolist(),
    }


def region_from_dict(data):
    M = len(data["h"])
    G_q = data.get("G_q")
    if G_q is not None and len(G_q) == 0:
        G_q = None
    return FeasibleRegion(
        G_p=np.array(data["G_p"], dtype=float).reshape(M, -1),
        h=data["h"],
        G_q=None if G_q is None else np.array(G_q, dtype=float).reshape(M, -1),
        labels=tuple(tuple(l) if isinstance(l, list) else l for l in data.get("labels", ())),
        customer_ids=tuple(str(c) for c in data.get("customer_ids", ())),
        statuses=data.get("statuses"),
        q_lower=data.get("q_lower"),
        q_upper=data.get("q_upper"),
        q_base=data.get("q_base"),
    )


def save_region(fr, path):
    with open(path, "w") as fh:
        json.dump(region_to_dict(fr), fh)


def load_region(path):
    with open(path) as fh:
        return region_from_dict(json.load(fh))


def save_violation_report(report, json_path, csv_path):
    with open(json_path, "w") as fh:
        json.dump(_jsonable(report.summary()), fh, indent=2)
    with open(csv_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["draw", "worst_v_pu", "bus", "phase", "violated"])
        for row in report.rows():
            wr.writerow([row[0], repr(row[1]), row[2], row[3], int(row[4])])
