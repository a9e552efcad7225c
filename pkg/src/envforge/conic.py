"""Solver-agnostic conic problem representation and backends.

A :class:`ConicProblem` holds named variable blocks, a linear objective,
tagged groups of linear rows (``<=`` or ``=``) and tagged groups of
second-order cones.  Every cone group stores ``N`` cones of the same
dimension ``d`` as an affine map ``A x + c`` with ``N * d`` rows; rows
``j*d .. j*d + d - 1`` form the tuple ``(t, z)`` constrained by
``||z||_2 <= t``.

Two native conic backends are provided (Clarabel and CVXOPT), plus
:func:`solve_lp`, a HiGHS fast path for problems without cones.
"""
from __future__ import annotations

import io
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import SolverError

__all__ = [
    "ConicProblem",
    "SolveReport",
    "solve",
    "solve_lp",
    "available_backends",
    "dump_problem",
    "load_problem",
    "dumps_problem",
    "loads_problem",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical-limit"


@dataclass
class _VarBlock:
    name: str
    size: int
    offset: int
    lb: np.ndarray
    ub: np.ndarray


@dataclass
class _LinearGroup:
    tag: str
    relation: str
    matrix: sp.coo_matrix  # local rows, global columns (width fixed at assembly)
    rhs: np.ndarray


@dataclass
class _ConeGroup:
    tag: str
    dim: int
    matrix: sp.coo_matrix
    const: np.ndarray

    @property
    def count(self):
        return self.const.shape[0] // self.dim


def _coo(rows, cols, vals, nrows):
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.broadcast_to(np.asarray(vals, dtype=float), rows.shape).copy()
    return rows, cols, vals, nrows


class ConicProblem:
    """Linear objective over linear rows and second-order cones."""

    def __init__(self, sense="min"):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.sense = sense
        self._vars: dict[str, _VarBlock] = {}
        self._n = 0
        self._linear: list[_LinearGroup] = []
        self._cones: list[_ConeGroup] = []
        self._obj_cols = np.zeros(0, dtype=np.int64)
        self._obj_vals = np.zeros(0)
        self.objective_constant = 0.0

    # -- building -------------------------------------------------------
    def add_variable(self, name, size, lb=-np.inf, ub=np.inf):
        """Declare a variable block and return its global column indices."""
        if name in self._vars:
            raise ValueError(f"duplicate variable {name!r}")
        size = int(size)
        if size < 0:
            raise ValueError("variable size must be non-negative")
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (size,)).copy()
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (size,)).copy()
        if np.any(lb > ub):
            raise ValueError(f"variable {name!r} has lb > ub")
        self._vars[name] = _VarBlock(name, size, self._n, lb, ub)
        self._n += size
        return np.arange(self._n - size, self._n)

    def index(self, name):
        blk = self._vars[name]
        return np.arange(blk.offset, blk.offset + blk.size)

    def add_rows(self, rows, cols, vals, rhs, relation="<=", tag=""):
        """Add linear rows given in COO form with row indices local to the group."""
        if relation not in ("<=", "="):
            raise ValueError("relation must be '<=' or '='")
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float)).copy()
        r, c, v, m = _coo(rows, cols, vals, rhs.shape[0])
        self._check_cols(c)
        mat = sp.coo_matrix((v, (r, c)), shape=(m, max(self._n, 1)))
        self._linear.append(_LinearGroup(tag, relation, mat, rhs))

    def add_cones(self, rows, cols, vals, const, dim, tag=""):
        """Add ``len(const) // dim`` second-order cones of dimension ``dim``."""
        const = np.atleast_1d(np.asarray(const, dtype=float)).copy()
        if dim < 1 or const.shape[0] % dim:
            raise ValueError("cone rows must be a multiple of the cone dimension")
        r, c, v, m = _coo(rows, cols, vals, const.shape[0])
        self._check_cols(c)
        mat = sp.coo_matrix((v, (r, c)), shape=(m, max(self._n, 1)))
        self._cones.append(_ConeGroup(tag, int(dim), mat, const))

    def set_objective(self, cols, vals, sense=None, constant=0.0):
        if sense is not None:
            if sense not in ("min", "max"):
                raise ValueError("sense must be 'min' or 'max'")
            self.sense = sense
        cols = np.asarray(cols, dtype=np.int64).ravel()
        self._check_cols(cols)
        self._obj_cols = cols
        self._obj_vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape).copy()
        self.objective_constant = float(constant)

    def _check_cols(self, cols):
        if cols.size and (cols.min() < 0 or cols.max() >= self._n):
            raise ValueError("linear expression references an unknown variable")

    # -- inspection -----------------------------------------------------
    @property
    def n(self):
        return self._n

    @property
    def variables(self):
        return [(b.name, b.size) for b in self._vars.values()]

    def bounds(self):
        lb = np.full(self._n, -np.inf)
        ub = np.full(self._n, np.inf)
        for b in self._vars.values():
            lb[b.offset:b.offset + b.size] = b.lb
            ub[b.offset:b.offset + b.size] = b.ub
        return lb, ub

    def objective_vector(self):
        c = np.zeros(self._n)
        np.add.at(c, self._obj_cols, self._obj_vals)
        return c

    def row_counts(self):
        counts: dict[str, int] = {}
        for g in self._linear:
            counts[g.tag] = counts.get(g.tag, 0) + g.rhs.shape[0]
        return counts

    def cone_counts(self):
        counts: dict[str, int] = {}
        for g in self._cones:
            counts[g.tag] = counts.get(g.tag, 0) + g.count
        return counts

    @property
    def n_cones(self):
        return sum(g.count for g in self._cones)

    @property
    def n_rows(self):
        return sum(g.rhs.shape[0] for g in self._linear)

    def _stack(self, groups):
        if not groups:
            return sp.csr_matrix((0, self._n)), np.zeros(0)
        mats = [sp.csr_matrix((g.matrix.data, (g.matrix.row, g.matrix.col)),
                              shape=(g.matrix.shape[0], self._n)) for g in groups]
        vec = np.concatenate([g.rhs if hasattr(g, "rhs") else g.const for g in groups])
        return sp.vstack(mats, format="csr"), vec

    def linear_system(self):
        """Return ``(A_le, b_le, A_eq, b_eq)`` over the full variable vector."""
        A_le, b_le = self._stack([g for g in self._linear if g.relation == "<="])
        A_eq, b_eq = self._stack([g for g in self._linear if g.relation == "="])
        return A_le, b_le, A_eq, b_eq

    def cone_system(self):
        """Return ``(A, c, dims)`` with cones stacked in declaration order."""
        A, c = self._stack(self._cones)
        dims = []
        for g in self._cones:
            dims.extend([g.dim] * g.count)
        return A, c, dims

    def validate(self):
        for g in self._linear:
            if not (np.all(np.isfinite(g.matrix.data)) and np.all(np.isfinite(g.rhs))):
                raise ValueError(f"non-finite coefficient in row group {g.tag!r}")
        for g in self._cones:
            if not (np.all(np.isfinite(g.matrix.data)) and np.all(np.isfinite(g.const))):
                raise ValueError(f"non-finite coefficient in cone group {g.tag!r}")
        if not np.all(np.isfinite(self._obj_vals)):
            raise ValueError("non-finite objective coefficient")

    def unpack(self, x):
        return {b.name: np.array(x[b.offset:b.offset + b.size]) for b in self._vars.values()}

    def residuals(self, x):
        """Max violation of linear rows, bounds and cones at ``x``."""
        A_le, b_le, A_eq, b_eq = self.linear_system()
        lb, ub = self.bounds()
        lin = 0.0
        if A_le.shape[0]:
            lin = max(lin, float(np.max(A_le @ x - b_le)))
        if A_eq.shape[0]:
            lin = max(lin, float(np.max(np.abs(A_eq @ x - b_eq))))
        lin = max(lin, float(np.max(lb - x, initial=0.0)), float(np.max(x - ub, initial=0.0)))
        cone = 0.0
        A, c, dims = self.cone_system()
        if dims:
            s = A @ x + c
            for g_start, d in _cone_starts(dims):
                cone = max(cone, float(np.linalg.norm(s[g_start + 1:g_start + d]) - s[g_start]))
        return max(lin, 0.0), max(cone, 0.0)


def _cone_starts(dims):
    start = 0
    for d in dims:
        yield start, d
        start += d


@dataclass
class SolveReport:
    status: str
    x: np.ndarray | None = None
    values: dict = field(default_factory=dict)
    objective: float = float("nan")
    dual_objective: float | None = None
    iterations: int = 0
    solve_time: float = 0.0
    backend: str = ""

    @property
    def optimal(self):
        return self.status == OPTIMAL

    def __getitem__(self, name):
        return self.values[name]


# -- backends -------------------------------------------------------------

def _bound_rows(problem):
    lb, ub = problem.bounds()
    up = np.flatnonzero(np.isfinite(ub))
    lo = np.flatnonzero(np.isfinite(lb))
    n = problem.n
    G = sp.vstack([
        sp.csr_matrix((np.ones(up.size), (np.arange(up.size), up)), shape=(up.size, n)),
        sp.csr_matrix((-np.ones(lo.size), (np.arange(lo.size), lo)), shape=(lo.size, n)),
    ], format="csr")
    return G, np.concatenate([ub[up], -lb[lo]])


def _standard_form(problem):
    """Rows ``G x + s = h`` with ``s`` in (nonneg, soc...) and ``A x = b``."""
    A_le, b_le, A_eq, b_eq = problem.linear_system()
    G_b, h_b = _bound_rows(problem)
    A_c, c_c, dims = problem.cone_system()
    G = sp.vstack([A_le, G_b, -A_c], format="csc")
    h = np.concatenate([b_le, h_b, c_c])
    n_lin = A_le.shape[0] + G_b.shape[0]
    c = problem.objective_vector()
    if problem.sense == "max":
        c = -c
    return c, G, h, n_lin, dims, A_eq.tocsc(), b_eq


class ClarabelBackend:
    name = "clarabel"
    # Clarabel measures residuals on its rescaled data; at 1e-8 the status
    # rows can come back ~1e-8 short, which the 1e3 penalty weight turns into
    # a 1e-5 objective error.  Two more digits cost two or three iterations.
    default_tol = 1e-10

    def solve(self, problem, tol=None, max_iter=200, verbose=False, time_limit=None):
        import clarabel

        tol = self.default_tol if tol is None else tol
        c, G, h, n_lin, dims, A_eq, b_eq = _standard_form(problem)
        A = sp.vstack([A_eq, G], format="csc")
        b = np.concatenate([b_eq, h])
        cones = []
        if A_eq.shape[0]:
            cones.append(clarabel.ZeroConeT(A_eq.shape[0]))
        if n_lin:
            cones.append(clarabel.NonnegativeConeT(n_lin))
        # consecutive cones of equal dimension are merged by clarabel internally
        cones.extend(clarabel.SecondOrderConeT(d) for d in dims)
        settings = clarabel.DefaultSettings()
        settings.verbose = verbose
        settings.tol_feas = tol
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.max_iter = max_iter
        if time_limit is not None:
            settings.time_limit = float(time_limit)
        P = sp.csc_matrix((problem.n, problem.n))
        t0 = time.perf_counter()
        solver = clarabel.DefaultSolver(P, c, A, b, cones, settings)
        sol = solver.solve()
        elapsed = time.perf_counter() - t0
        st = str(sol.status)
        if st in ("Solved", "AlmostSolved"):
            status = OPTIMAL
        elif st in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            status = INFEASIBLE
        elif st in ("DualInfeasible", "AlmostDualInfeasible"):
            status = UNBOUNDED
        else:
            status = NUMERICAL
        rep = SolveReport(status=status, iterations=int(sol.iterations),
                          solve_time=elapsed, backend=self.name)
        if status == OPTIMAL:
            x = np.asarray(sol.x, dtype=float)
            sign = -1.0 if problem.sense == "max" else 1.0
            rep.x = x
            rep.values = problem.unpack(x)
            rep.objective = float(problem.objective_vector() @ x) + problem.objective_constant
            rep.dual_objective = sign * float(sol.obj_val_dual) + problem.objective_constant
        return rep


class CvxoptBackend:
    name = "cvxopt"
    default_tol = 1e-8

    def solve(self, problem, tol=None, max_iter=200, verbose=False, time_limit=None):
        import cvxopt
        from cvxopt import solvers

        tol = self.default_tol if tol is None else tol
        c, G, h, n_lin, dims, A_eq, b_eq = _standard_form(problem)

        def spm(M):
            M = M.tocoo()
            return cvxopt.spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), M.shape)

        opts = {"show_progress": verbose, "abstol": tol, "reltol": tol,
                "feastol": tol, "maxiters": max_iter}
        args = [cvxopt.matrix(c), spm(G), cvxopt.matrix(h)]
        cone_dims = {"l": n_lin, "q": list(dims), "s": []}
        kwargs = {}
        if A_eq.shape[0]:
            kwargs = {"A": spm(A_eq), "b": cvxopt.matrix(b_eq)}
        t0 = time.perf_counter()
        try:
            sol = solvers.conelp(*args, dims=cone_dims, options=opts, **kwargs)
        except (ValueError, ArithmeticError):
            return SolveReport(status=NUMERICAL, backend=self.name,
                               solve_time=time.perf_counter() - t0)
        elapsed = time.perf_counter() - t0
        st = sol["status"]
        if st == "optimal":
            status = OPTIMAL
        elif st == "primal infeasible":
            status = INFEASIBLE
        elif st == "dual infeasible":
            status = UNBOUNDED
        else:
            status = NUMERICAL
        rep = SolveReport(status=status, iterations=int(sol.get("iterations", 0)),
                          solve_time=elapsed, backend=self.name)
        if status == OPTIMAL:
            x = np.asarray(sol["x"], dtype=float).ravel()
            sign = -1.0 if problem.sense == "max" else 1.0
            rep.x = x
            rep.values = problem.unpack(x)
            rep.objective = float(problem.objective_vector() @ x) + problem.objective_constant
            rep.dual_objective = sign * float(sol["dual objective"]) + problem.objective_constant
        return rep


_BACKENDS = {"clarabel": ClarabelBackend, "cvxopt": CvxoptBackend}


def available_backends():
    out = []
    for name in _BACKENDS:
        try:
            __import__(name)
        except ImportError:
            continue
        out.append(name)
    return out


def get_backend(name=None):
    """Backend by name; falls back to ``$ENVFORGE_BACKEND`` then Clarabel."""
    if name is None:
        name = os.environ.get("ENVFORGE_BACKEND", "clarabel")
    if not isinstance(name, str):
        return name
    try:
        return _BACKENDS[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown conic backend {name!r}; choose from {sorted(_BACKENDS)}") from None


def solve(problem, backend=None, tol=None, max_iter=200, verbose=False, time_limit=None):
    """Solve ``problem`` with a conic backend and return a :class:`SolveReport`.

    ``tol=None`` uses the backend's own default (1e-10 for Clarabel, 1e-8
    for CVXOPT).
    """
    problem.validate()
    return get_backend(backend).solve(problem, tol=tol, max_iter=max_iter,
                                      verbose=verbose, time_limit=time_limit)


def solve_lp(problem, tol=1e-9):
    """HiGHS fast path for problems with linear rows only."""
    from scipy.optimize import linprog

    if problem.n_cones:
        raise ValueError("solve_lp only accepts problems without cones")
    problem.validate()
    A_le, b_le, A_eq, b_eq = problem.linear_system()
    lb, ub = problem.bounds()
    c = problem.objective_vector()
    if problem.sense == "max":
        c = -c
    t0 = time.perf_counter()
    res = linprog(
        c,
        A_ub=A_le if A_le.shape[0] else None,
        b_ub=b_le if A_le.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=np.column_stack([np.where(np.isfinite(lb), lb, None),
                                np.where(np.isfinite(ub), ub, None)]),
        method="highs",
        options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol},
    )
    elapsed = time.perf_counter() - t0
    status = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, NUMERICAL)
    rep = SolveReport(status=status, iterations=int(getattr(res, "nit", 0) or 0),
                      solve_time=elapsed, backend="highs")
    if status == OPTIMAL:
        rep.x = np.asarray(res.x, dtype=float)
        rep.values = problem.unpack(rep.x)
        rep.objective = float(problem.objective_vector() @ rep.x) + problem.objective_constant
    return rep


def require_optimal(report, what="problem"):
    if report.status != OPTIMAL:
        raise SolverError(f"{what} ended with status {report.status}", status=report.status)
    return report


# -- plain-text dump ------------------------------------------------------
#
# ENVFORGE-CONIC 1
# SENSE <min|max> <objective constant>
# VAR <name> <size>
# BOUND <global index> <lb> <ub>          (only non-default bounds)
# OBJ <global index> <coef>
# ROWS <tag> <relation> <nrows> <nnz>     followed by nrows "RHS <value>" and nnz "A <i> <j> <v>"
# CONES <tag> <dim> <nrows> <nnz>         followed by nrows "C <value>" and nnz "A <i> <j> <v>"
# END

def _fmt(x):
    return repr(float(x))


def dumps_problem(problem):
    out = io.StringIO()
    out.write("ENVFORGE-CONIC 1\n")
    out.write(f"SENSE {problem.sense} {_fmt(problem.objective_constant)}\n")
    for b in problem._vars.values():
        out.write(f"VAR {b.name} {b.size}\n")
    lb, ub = problem.bounds()
    for j in np.flatnonzero(np.isfinite(lb) | np.isfinite(ub)):
        out.write(f"BOUND {j} {_fmt(lb[j])} {_fmt(ub[j])}\n")
    for j, v in zip(problem._obj_cols, problem._obj_vals):
        out.write(f"OBJ {j} {_fmt(v)}\n")
    for g in problem._linear:
        m = g.matrix
        out.write(f"ROWS {g.tag or '-'} {g.relation} {g.rhs.shape[0]} {m.nnz}\n")
        for v in g.rhs:
            out.write(f"RHS {_fmt(v)}\n")
        for i, j, v in zip(m.row, m.col, m.data):
            out.write(f"A {i} {j} {_fmt(v)}\n")
    for g in problem._cones:
        m = g.matrix
        out.write(f"CONES {g.tag or '-'} {g.dim} {g.const.shape[0]} {m.nnz}\n")
        for v in g.const:
            out.write(f"C {_fmt(v)}\n")
        for i, j, v in zip(m.row, m.col, m.data):
            out.write(f"A {i} {j} {_fmt(v)}\n")
    out.write("END\n")
    return out.getvalue()


def loads_problem(text):
    lines = iter(text.splitlines())
    header = next(lines).split()
    if header[:2] != ["ENVFORGE-CONIC", "1"]:
        raise ValueError("not an ENVFORGE-CONIC 1 dump")
    prob = None
    bounds = []
    obj = []

    def take(n, key):
        vals = []
        for _ in range(n):
            tok = next(lines).split()
            if tok[0] != key:
                raise ValueError(f"expected {key} line, got {tok[0]}")
            vals.append(tok[1:])
        return vals

    for line in lines:
        tok = line.split()
        if not tok:
            continue
        kind = tok[0]
        if kind == "SENSE":
            prob = ConicProblem(tok[1])
            prob.objective_constant = float(tok[2])
        elif kind == "VAR":
            prob.add_variable(tok[1], int(tok[2]))
        elif kind == "BOUND":
            bounds.append((int(tok[1]), float(tok[2]), float(tok[3])))
        elif kind == "OBJ":
            obj.append((int(tok[1]), float(tok[2])))
        elif kind in ("ROWS", "CONES"):
            tag = "" if tok[1] == "-" else tok[1]
            nrows, nnz = int(tok[3]), int(tok[4])
            vec = [float(v[0]) for v in take(nrows, "RHS" if kind == "ROWS" else "C")]
            trip = np.array(take(nnz, "A"), dtype=float).reshape(-1, 3)
            r, c, v = trip[:, 0].astype(int), trip[:, 1].astype(int), trip[:, 2]
            if kind == "ROWS":
                prob.add_rows(r, c, v, vec, relation=tok[2], tag=tag)
            else:
                prob.add_cones(r, c, v, vec, dim=int(tok[2]), tag=tag)
        elif kind == "END":
            break
        else:
            raise ValueError(f"unknown record {kind!r}")
    for j, lo, hi in bounds:
        for b in prob._vars.values():
            if b.offset <= j < b.offset + b.size:
                b.lb[j - b.offset] = lo
                b.ub[j - b.offset] = hi
    if obj:
        cols, vals = zip(*obj)
        prob.set_objective(list(cols), list(vals), constant=prob.objective_constant)
    return prob


def dump_problem(problem, path):
    with open(path, "w") as fh:
        fh.write(dumps_problem(problem))


def load_problem(path):
    with open(path) as fh:
        return loads_problem(fh.read())
