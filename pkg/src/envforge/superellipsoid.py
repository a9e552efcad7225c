"""Superellipsoid geometry.

The superellipsoid with centre ``u_c``, positive diagonal scale ``L`` and
squareness ``K`` is ``{u_c + L w : sum_i |w_i|^n <= 1}`` with ``n = 2**K``.
Its largest inscribed axis-aligned box has half-widths ``L_ii * v**(-1/n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

K_MAX = 16


@dataclass(frozen=True)
class Superellipsoid:
    center: np.ndarray
    scale: np.ndarray  # diagonal of L
    K: int

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        scale = np.atleast_1d(np.asarray(self.scale, dtype=float))
        if center.shape != scale.shape:
            raise ValueError("center and scale must have the same length")
        if np.any(scale <= 0):
            raise ValueError("scale entries must be positive")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "K", int(self.K))

    @property
    def dim(self):
        return self.center.shape[0]

    @property
    def exponent(self):
        return 2 ** self.K


def _power_sum(w, n):
    """``sum |w_i|**n`` evaluated in log space so huge ``n`` stays finite."""
    a = np.abs(np.asarray(w, dtype=float))
    with np.errstate(divide="ignore"):
        logs = n * np.log(a)
    top = np.max(logs, axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    return np.squeeze(np.exp(top) * np.sum(np.exp(logs - top), axis=-1, keepdims=True), -1)


def membership(p, s):
    """Return ``(inside, sum_i |(p_i - u_c_i) / L_ii|**n)``.

    ``p`` may be a single point or a stack of points (last axis = dim).
    """
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != s.dim:
        raise ValueError("point dimension does not match the superellipsoid")
    total = _power_sum((p - s.center) / s.scale, s.exponent)
    return total <= 1.0, total


def corner_factor(v, K):
    """Optimal per-axis multiplier ``v**(-1/2**K)`` of the inscribed box."""
    if v < 1 or K < 1:
        raise ValueError("need v >= 1 and K >= 1")
    return float(v) ** (-1.0 / 2 ** K)


def inscribed_box(s):
    """Largest-volume axis-aligned box inside ``s``.

    Returns ``(lower, upper, volume)``; volume is ``(2 w*)^v det(L)``.
    """
    w = corner_factor(s.dim, s.K)
    half = s.scale * w
    n = s.exponent
    # rounding in u +/- L w is amplified by n; pull the faces in until the
    # worst corner is numerically inside
    for _ in range(64):
        lo, up = s.center - half, s.center + half
        worst = np.maximum(np.abs((lo - s.center) / s.scale), np.abs((up - s.center) / s.scale))
        if _power_sum(worst, n) <= 1.0:
            break
        half = np.nextafter(half, 0.0)
    volume = float(np.prod(2.0 * half))
    return lo, up, volume


def relative_gap(v, K):
    """``1 - S_h / S_h_max``: shortfall of the total envelope against ``K -> inf``."""
    # expm1 keeps precision when the factor is within 1e-16 of one
    return -math.expm1(-math.log(v) / 2 ** K)


def select_K(v, theta, K_cap=K_MAX):
    """Smallest ``K >= 1`` with ``relative_gap(v, K) <= theta``."""
    if v < 2:
        raise ValueError("select_K needs v >= 2")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    bound = (math.log(math.log(v)) - math.log(-math.log1p(-theta))) / math.log(2)
    K = max(1, math.ceil(bound - 1e-12))
    # guard the ceiling against rounding on either side
    while K > 1 and relative_gap(v, K - 1) <= theta:
        K -= 1
    while relative_gap(v, K) > theta:
        K += 1
    if K > K_cap:
        raise ValueError(f"theta={theta} needs K={K}, above the cap K={K_cap}")
    return K


def tower_constraint_count(dim, K):
    """Scalar quadratic links plus the terminal ball in the tower for ``dim``."""
    return dim * (K - 1) + 1


def tower_lift(y1, K):
    """Tightest tower ``y_1..y_K`` for ``y1`` (``y_{k+1} = y_k**2``)."""
    ys = [np.asarray(y1, dtype=float)]
    for _ in range(K - 1):
        ys.append(ys[-1] ** 2)
    return ys


def tower_feasible(ys, tol=1e-12):
    """Check the quadratic links and the terminal ball of a tower."""
    for k in range(len(ys) - 1):
        if np.any(ys[k] ** 2 > ys[k + 1] + tol):
            return False
    return bool(np.linalg.norm(ys[-1]) <= 1.0 + tol)
