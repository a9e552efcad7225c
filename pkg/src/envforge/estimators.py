"""Estimator-style front end.

Each envelope method is a scikit-learn compatible estimator: hyper-parameters
go to ``__init__`` (so ``get_params``/``set_params``/``clone`` work), ``fit``
takes a :class:`~envforge.region.FeasibleRegion` or the pair ``(G, h)`` of
the polyhedron ``G p <= h``, and the fitted envelopes are exposed as
``lower_``/``upper_``.  ``predict`` tells whether operating points respect
the envelopes and ``transform`` curtails them onto the envelopes.

>>> import numpy as np
>>> est = SuperellipsoidEnvelope(K=7).fit(np.vstack([np.eye(2), -np.eye(2)]), [3, 1, 3, 1])
>>> est.upper_.round(3)
array([2.984, 0.995])
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .baselines import SO_CAP, deterministic_doe, ellipsoid_rdoe, so_enumeration
from .rdoe import (DEFAULT_EPS_MD, DEFAULT_PWL_MIN, DEFAULT_PWL_POINTS, RdoeConfig,
                   default_anchors, extract_envelopes, solve_rdoe)
from .region import FeasibleRegion
from .superellipsoid import select_K


def check_region(X, y=None, statuses=None, q_bounds=None):
    """Coerce ``X`` (and ``y``) into a :class:`FeasibleRegion`.

    Accepts a region, or a constraint matrix ``X`` with right-hand side
    ``y``.  ``statuses`` and ``q_bounds`` override the region's own values.
    """
    if isinstance(X, FeasibleRegion):
        if y is not None:
            raise ValueError("y must be None when X is a FeasibleRegion")
        fr = X
    else:
        if y is None:
            raise ValueError("pass the right-hand side h as y when X is a constraint matrix")
        G, h = check_X_y(X, y, dtype=float, y_numeric=True, ensure_min_samples=1)
        fr = FeasibleRegion(G_p=G, h=h)
    if statuses is not None:
        fr = fr.with_statuses(statuses)
    if q_bounds is not None:
        from dataclasses import replace

        lo, hi = q_bounds
        fr = replace(fr, q_lower=np.broadcast_to(lo, (fr.n_q,)).copy(),
                     q_upper=np.broadcast_to(hi, (fr.n_q,)).copy(), q_base=None)
    return fr


class _EnvelopeEstimator(TransformerMixin, BaseEstimator):
    def _store(self, fr, alloc):
        self.region_ = fr
        self.allocation_ = alloc
        self.lower_ = alloc.lower
        self.upper_ = alloc.upper
        self.q_ = alloc.q
        self.total_doe_ = alloc.total_doe
        self.n_features_in_ = fr.v
        return self

    def _points(self, P):
        check_is_fitted(self, "allocation_")
        P = check_array(P, dtype=float)
        if P.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} customers per row, got {P.shape[1]}")
        return P

    def predict(self, P, tol=1e-9):
        """True where every customer's power lies within its envelope (up to ``tol`` kW)."""
        P = self._points(P)
        return np.all((P >= self.lower_ - tol) & (P <= self.upper_ + tol), axis=1)

    def transform(self, P):
        """Curtail requested powers onto the envelopes."""
        return np.clip(self._points(P), self.lower_, self.upper_)

    def fit_transform(self, X, y=None, **fit_params):
        raise TypeError("fit takes a feasible region while transform takes operating points; "
                        "call fit and transform separately")


class SuperellipsoidEnvelope(_EnvelopeEstimator):
    """Robust envelopes from a superellipsoid of squareness ``K``.

    ``K=None`` picks the smallest ``K`` whose total-envelope shortfall
    ``1 - v^(-1/2^K)`` is at most ``theta``.
    """

    def __init__(self, K=None, theta=0.01, eps_md=DEFAULT_EPS_MD, pwl_points=DEFAULT_PWL_POINTS,
                 pwl_min=DEFAULT_PWL_MIN, statuses=None, q_bounds=None, backend=None):
        self.K = K
        self.theta = theta
        self.eps_md = eps_md
        self.pwl_points = pwl_points
        self.pwl_min = pwl_min
        self.statuses = statuses
        self.q_bounds = q_bounds
        self.backend = backend

    def _resolve_K(self, v):
        if self.K is not None:
            return int(self.K)
        return 1 if v < 2 else select_K(v, self.theta)

    def fit(self, X, y=None):
        fr = check_region(X, y, self.statuses, self.q_bounds)
        K = self._resolve_K(fr.v)
        cfg = RdoeConfig(K=K, eps_md=self.eps_md,
                         anchors=default_anchors(fr, self.pwl_points, self.pwl_min))
        self.solution_ = solve_rdoe(fr, cfg, backend=self.backend)
        self.K_ = K
        return self._store(fr, extract_envelopes(self.solution_, fr.v, K, fr.customer_ids, method="sesd"))


class EllipsoidEnvelope(_EnvelopeEstimator):
    """Box inscribed in the maximum axis-aligned inscribed ellipsoid (``K = 1``)."""

    def __init__(self, eps_md=DEFAULT_EPS_MD, pwl_points=DEFAULT_PWL_POINTS, pwl_min=DEFAULT_PWL_MIN,
                 statuses=None, q_bounds=None, backend=None):
        self.eps_md = eps_md
        self.pwl_points = pwl_points
        self.pwl_min = pwl_min
        self.statuses = statuses
        self.q_bounds = q_bounds
        self.backend = backend

    def fit(self, X, y=None):
        fr = check_region(X, y, self.statuses, self.q_bounds)
        alloc = ellipsoid_rdoe(fr, eps_md=self.eps_md, backend=self.backend,
                               anchors=default_anchors(fr, self.pwl_points, self.pwl_min))
        return self._store(fr, alloc)


class VertexEnumerationEnvelope(_EnvelopeEstimator):
    """Largest-total box with every corner imposed as a constraint (small ``v`` only)."""

    def __init__(self, eps_md=DEFAULT_EPS_MD, statuses=None, q_bounds=None, cap=SO_CAP):
        self.eps_md = eps_md
        self.statuses = statuses
        self.q_bounds = q_bounds
        self.cap = cap

    def fit(self, X, y=None):
        fr = check_region(X, y, self.statuses, self.q_bounds)
        return self._store(fr, so_enumeration(fr, eps_md=self.eps_md, cap=self.cap))


class DeterministicEnvelope(_EnvelopeEstimator):
    """Non-robust envelopes read off a single feasible operating point."""

    def __init__(self, statuses=None, q_bounds=None):
        self.statuses = statuses
        self.q_bounds = q_bounds

    def fit(self, X, y=None):
        fr = check_region(X, y, self.statuses, self.q_bounds)
        return self._store(fr, deterministic_doe(fr))


METHODS = {
    "sesd": SuperellipsoidEnvelope,
    "ellipsoid": EllipsoidEnvelope,
    "so": VertexEnumerationEnvelope,
    "dmtd": DeterministicEnvelope,
}
