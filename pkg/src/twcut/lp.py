"""Equality-form linear programs and an exact rational simplex.

Every program here has the shape ``min c.x  s.t.  A x = b,  x >= 0``.

Backends of :func:`solve_linear_program`:

``exact`` (default)
    Revised primal simplex in exact rational arithmetic with Bland's rule.
    Programs above ``warm_threshold`` nonzeros start from a HiGHS optimal
    basis; that basis is re-solved exactly, checked for primal and dual
    feasibility, and pivoted further with Bland's rule whenever the check
    fails.  The answer is exact either way.
``exact-cold``
    The same simplex started from the all-artificial basis, no float help.
``float``
    HiGHS alone, values converted to ``Fraction`` from binary floats.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, TextIO

import flint
import highspy
import numpy as np
import scipy.sparse
import scipy.sparse.linalg

log = logging.getLogger(__name__)

FLOAT_TOL = 1e-9


class LPError(RuntimeError):
    pass


@dataclass
class LinearProgram:
    names: list[str]
    objective: dict[int, Fraction | int]
    rows: list[dict[int, Fraction | int]]
    rhs: list[Fraction | int]
    row_names: list[str] = field(default_factory=list)

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @property
    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)

    def add_row(self, coefs: Mapping[int, Fraction | int], rhs: Fraction | int = 0, name: str = "") -> None:
        self.rows.append({j: c for j, c in coefs.items() if c != 0})
        self.rhs.append(rhs)
        self.row_names.append(name or f"r{len(self.rows)}")

    def residuals(self, values: list[Fraction]) -> list[Fraction]:
        return [sum((c * values[j] for j, c in row.items()), Fraction(0)) - b
                for row, b in zip(self.rows, self.rhs)]

    def is_feasible(self, values: list[Fraction]) -> bool:
        return all(v >= 0 for v in values) and not any(self.residuals(values))

    def objective_value(self, values: list[Fraction]) -> Fraction:
        return sum((c * values[j] for j, c in self.objective.items()), Fraction(0))


@dataclass
class LPResult:
    status: str  # optimal | infeasible | unbounded
    values: list[Fraction] | None = None
    objective: Fraction | None = None
    backend: str = ""
    pivots: int = 0
    warm_certified: bool | None = None


# ------------------------------------------------------------------ HiGHS


def _highs(lp: LinearProgram):
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("primal_feasibility_tolerance", FLOAT_TOL)
    h.setOptionValue("dual_feasibility_tolerance", FLOAT_TOL)
    h.setOptionValue("presolve", "off")
    inf = highspy.kHighsInf
    n = lp.num_vars
    cost = np.zeros(n)
    for j, c in lp.objective.items():
        cost[j] = float(c)
    h.addVars(n, np.zeros(n), np.full(n, inf))
    h.changeColsCost(n, np.arange(n, dtype=np.int32), cost)
    for row, b in zip(lp.rows, lp.rhs):
        idx = np.fromiter(row.keys(), dtype=np.int32, count=len(row))
        val = np.fromiter((float(v) for v in row.values()), dtype=np.float64, count=len(row))
        h.addRow(float(b), float(b), len(row), idx, val)
    h.run()
    status = h.modelStatusToString(h.getModelStatus())
    return h, status


def _float_solve(lp: LinearProgram) -> LPResult:
    h, status = _highs(lp)
    if status == "Infeasible":
        return LPResult("infeasible", backend="float")
    if status == "Unbounded":
        return LPResult("unbounded", backend="float")
    if status != "Optimal":
        raise LPError(f"HiGHS returned status {status!r}")
    sol = h.getSolution()
    values = [Fraction(max(v, 0.0)) for v in sol.col_value]
    return LPResult("optimal", values, lp.objective_value(values), backend="float")


# --------------------------------------------------------- exact simplex


class _Block:
    """Square sparse rational matrix with exact solves.

    A sparse float LU proposes a solution that is refined against exact
    residuals; denominators are then recovered by continued fractions and
    the candidate is checked exactly.  A dense rational solve is the last
    resort and is refused above ``DENSE_LIMIT`` rows.
    """

    DENOMINATOR_BOUNDS = (10**6, 10**12, 10**24)
    REFINEMENTS = 6
    DENSE_LIMIT = 2500

    def __init__(self, k: int, entries: list[tuple[int, int, Fraction]]):
        self.k = k
        self.entries = entries
        self._lu = None
        self._dense = None
        self.dense_fallbacks = 0

    def _float_lu(self):
        if self._lu is None:
            rows, cols, vals = zip(*self.entries)
            mat = scipy.sparse.csc_matrix((np.array([float(v) for v in vals]), (rows, cols)), shape=(self.k, self.k))
            self._lu = scipy.sparse.linalg.splu(mat)
        return self._lu

    def _exact_matrix(self) -> flint.fmpq_mat:
        if self._dense is None:
            mat = flint.fmpq_mat(self.k, self.k)
            for r, c, a in self.entries:
                mat[r, c] = flint.fmpq(a.numerator, a.denominator)
            self._dense = mat
        return self._dense

    def _apply(self, x: list[Fraction], transpose: bool) -> list[Fraction]:
        acc = [Fraction(0)] * self.k
        for r, c, a in self.entries:
            if transpose:
                r, c = c, r
            if x[c]:
                acc[r] += a * x[c]
        return acc

    def _refined(self, rhs: list[Fraction], transpose: bool) -> list[Fraction] | None:
        lu = self._float_lu()
        trans = "T" if transpose else "N"
        x = [Fraction(0)] * self.k
        resid = list(rhs)
        for _ in range(self.REFINEMENTS):
            step = lu.solve(np.array([float(v) for v in resid]), trans=trans)
            if not np.all(np.isfinite(step)):
                return None
            x = [a + Fraction(float(d)) for a, d in zip(x, step)]
            for bound in self.DENOMINATOR_BOUNDS:
                cand = [v.limit_denominator(bound) for v in x]
                if self._apply(cand, transpose) == rhs:
                    return cand
            resid = [b - a for b, a in zip(rhs, self._apply(x, transpose))]
            if not any(resid):
                return x
        return None

    def solve(self, rhs: list[Fraction], transpose: bool = False) -> list[Fraction]:
        if self.k == 0:
            return []
        rhs = [Fraction(v) for v in rhs]
        try:
            x = self._refined(rhs, transpose)
        except RuntimeError:  # singular in floating point
            x = None
        if x is not None:
            return x
        if self.k > self.DENSE_LIMIT:
            raise LPError(f"exact solve of a {self.k}-row basis block failed to converge")
        self.dense_fallbacks += 1
        mat = self._exact_matrix()
        if transpose:
            mat = mat.transpose()
        vec = flint.fmpq_mat(self.k, 1)
        for i, a in enumerate(rhs):
            if a:
                vec[i, 0] = flint.fmpq(a.numerator, a.denominator)
        sol = mat.solve(vec)
        return [Fraction(int(sol[i, 0].p), int(sol[i, 0].q)) for i in range(self.k)]


class _Revised:
    """Two-phase revised simplex over exact rationals.

    Columns ``0..n-1`` are structural, ``n..n+m-1`` artificial unit columns.
    Artificials never re-enter; a basic artificial blocks any step that
    would move it away from zero during phase two.
    """

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        self.m, self.n = lp.num_rows, lp.num_vars
        # flip rows so every right-hand side is nonnegative
        self.sign = [(-1 if b < 0 else 1) for b in lp.rhs]
        self.b = [Fraction(b) * s for b, s in zip(lp.rhs, self.sign)]
        cols: list[list[tuple[int, Fraction]]] = [[] for _ in range(self.n)]
        for i, row in enumerate(lp.rows):
            for j, a in row.items():
                cols[j].append((i, Fraction(a) * self.sign[i]))
        self.cols = cols
        self.cost = [Fraction(lp.objective.get(j, 0)) for j in range(self.n)]
        self.pivots = 0

    def column(self, j: int) -> list[tuple[int, Fraction]]:
        return self.cols[j] if j < self.n else [(j - self.n, Fraction(1))]

    def _factor(self, basis: list[int]) -> tuple:
        """Reduce ``B`` to its structural block.

        Basic artificials are unit columns, so ``B`` is square-solvable through
        the rows they do not cover restricted to the structural basic columns.
        """
        n = self.n
        struct = [j for j in basis if j < n]
        covered = {j - n for j in basis if j >= n}
        free_rows = [i for i in range(self.m) if i not in covered]
        pos = {i: r for r, i in enumerate(free_rows)}
        entries = [(pos[i], s, a) for s, j in enumerate(struct) for i, a in self.cols[j] if i in pos]
        return basis, struct, free_rows, _Block(len(struct), entries)

    def _solve(self, fac, rhs: list[Fraction]) -> list[Fraction]:
        """``B^-1 rhs`` in basis-position order."""
        basis, struct, free_rows, mat = fac
        xs = mat.solve([rhs[i] for i in free_rows])
        val = dict(zip(struct, xs))
        resid = list(rhs)
        for j, x in val.items():
            if x:
                for i, a in self.cols[j]:
                    resid[i] -= a * x
        return [val[j] if j < self.n else resid[j - self.n] for j in basis]

    def _solve_t(self, fac, cb: list[Fraction]) -> list[Fraction]:
        """Row prices ``pi`` with ``B^T pi = c_B``."""
        basis, struct, free_rows, mat = fac
        pi = [Fraction(0)] * self.m
        cost = dict(zip(basis, cb))
        for j in basis:
            if j >= self.n:
                pi[j - self.n] = cost[j]
        rhs = []
        for j in struct:
            r = cost[j]
            for i, a in self.cols[j]:
                if pi[i]:
                    r -= a * pi[i]
            rhs.append(r)
        if rhs:
            for i, v in zip(free_rows, mat.solve(rhs, transpose=True)):
                pi[i] = v
        return pi

    def run(self, basis: list[int], phase_costs, allow_artificial_entry: bool) -> tuple[str, list[int], list[Fraction]]:
        """Iterate from a primal feasible basis; returns (status, basis, x_B)."""
        m, n = self.m, self.n
        while True:
            fac = self._factor(basis)
            xb = self._solve(fac, self.b)
            cb = [phase_costs(j) for j in basis]
            pi = self._solve_t(fac, cb)
            in_basis = set(basis)
            entering = None
            limit = n + m if allow_artificial_entry else n
            for j in range(limit):
                if j in in_basis:
                    continue
                d = phase_costs(j) - sum((pi[i] * a for i, a in self.column(j)), Fraction(0))
                if d < 0:
                    entering = j
                    break
            if entering is None:
                return "optimal", basis, xb
            direction = self._solve(fac, self._dense(entering))
            leave_k, best = None, None
            for k, (dk, xk) in enumerate(zip(direction, xb)):
                j = basis[k]
                if j >= n and not allow_artificial_entry and dk != 0:
                    ratio = Fraction(0)
                elif dk > 0:
                    ratio = xk / dk
                else:
                    continue
                key = (ratio, j)
                if best is None or key < best:
                    best, leave_k = key, k
            if leave_k is None:
                return "unbounded", basis, xb
            basis = basis[:leave_k] + [entering] + basis[leave_k + 1:]
            self.pivots += 1

    def _dense(self, j: int) -> list[Fraction]:
        v = [Fraction(0)] * self.m
        for i, a in self.column(j):
            v[i] = a
        return v

    def phase_one(self, basis: list[int] | None = None) -> tuple[str, list[int], list[Fraction]]:
        n = self.n
        basis = list(range(n, n + self.m)) if basis is None else basis
        status, basis, xb = self.run(basis, lambda j: Fraction(1) if j >= n else Fraction(0), True)
        infeas = sum((x for j, x in zip(basis, xb) if j >= n), Fraction(0))
        if infeas > 0:
            return "infeasible", basis, xb
        return "feasible", basis, xb

    def phase_two(self, basis: list[int]) -> tuple[str, list[int], list[Fraction]]:
        n = self.n
        return self.run(basis, lambda j: self.cost[j] if j < n else Fraction(0), False)

    def values(self, basis: list[int], xb: list[Fraction]) -> list[Fraction]:
        x = [Fraction(0)] * self.n
        for j, v in zip(basis, xb):
            if j < self.n:
                x[j] = v
        return x


def _warm_basis(lp: LinearProgram) -> list[int] | None:
    """Optimal basis from HiGHS, as column indices (artificial ``n+i`` for a basic row)."""
    h, status = _highs(lp)
    if status != "Optimal":
        return None
    basis = h.getBasis()
    n = lp.num_vars
    cols = [j for j, s in enumerate(basis.col_status) if s == highspy.HighsBasisStatus.kBasic]
    rows = [n + i for i, s in enumerate(basis.row_status) if s == highspy.HighsBasisStatus.kBasic]
    out = cols + rows
    if len(out) != lp.num_rows:
        return None
    return out


def _exact_solve(lp: LinearProgram, warm: bool) -> LPResult:
    rs = _Revised(lp)
    backend = "exact" if warm else "exact-cold"
    certified = None
    basis = _warm_basis(lp) if warm else None
    if basis is not None:
        try:
            xb = rs._solve(rs._factor(basis), rs.b)
        except (ZeroDivisionError, ValueError):
            xb = None
        ok = xb is not None and all(v >= 0 for v in xb) and all(
            v == 0 for j, v in zip(basis, xb) if j >= rs.n)
        if ok:
            start_pivots = rs.pivots
            status, basis, xb = rs.phase_two(basis)
            certified = rs.pivots == start_pivots
            if status != "optimal":
                return LPResult(status, backend=backend, pivots=rs.pivots, warm_certified=False)
            x = rs.values(basis, xb)
            return LPResult("optimal", x, lp.objective_value(x), backend, rs.pivots, certified)
        log.info("warm basis not primal feasible in exact arithmetic; cold start")
        certified = False
    status, basis, xb = rs.phase_one()
    if status == "infeasible":
        return LPResult("infeasible", backend=backend, pivots=rs.pivots, warm_certified=certified)
    status, basis, xb = rs.phase_two(basis)
    if status != "optimal":
        return LPResult(status, backend=backend, pivots=rs.pivots, warm_certified=certified)
    x = rs.values(basis, xb)
    return LPResult("optimal", x, lp.objective_value(x), backend, rs.pivots, certified)


def solve_linear_program(lp: LinearProgram, backend: str = "exact", warm_threshold: int = 400) -> LPResult:
    """Solve ``min c.x, Ax = b, x >= 0``; deterministic for a given program."""
    if backend == "float":
        return _float_solve(lp)
    if backend == "exact":
        return _exact_solve(lp, warm=lp.nnz > warm_threshold)
    if backend == "exact-cold":
        return _exact_solve(lp, warm=False)
    raise ValueError(f"unknown LP backend {backend!r}")


# -------------------------------------------------------------- LP output


def _fmt_coef(c) -> str:
    c = Fraction(c)
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _terms(coefs: Mapping[int, Fraction | int], names: list[str]) -> str:
    parts = []
    for j, c in sorted(coefs.items()):
        c = Fraction(c)
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        coef = "" if mag == 1 else f"{float(mag):.17g} " if mag.denominator != 1 else f"{mag} "
        parts.append(f"{sign} {coef}{names[j]}")
    text = " ".join(parts) if parts else "0 " + names[0]
    return text[2:] if text.startswith("+ ") else text


def write_cplex_lp(lp: LinearProgram, fh: TextIO) -> None:
    """CPLEX LP text: objective, ``st`` rows, ``bounds``, ``end``."""
    fh.write("minimize\n obj: " + _terms(lp.objective, lp.names) + "\n")
    fh.write("st\n")
    for name, row, b in zip(lp.row_names, lp.rows, lp.rhs):
        b = Fraction(b)
        rhs = str(b.numerator) if b.denominator == 1 else f"{float(b):.17g}"
        fh.write(f" {name}: {_terms(row, lp.names)} = {rhs}\n")
    fh.write("bounds\n")
    for name in lp.names:
        fh.write(f" {name} >= 0\n")
    fh.write("end\n")
