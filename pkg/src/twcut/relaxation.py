"""The decomposition-driven fractional LP and its linearization.

Variables ``x(S, A)`` exist for every ``S`` in the downward closure of the
ground-set family and every ``A`` subset of ``S``; ``y({u, v})`` for every
node pair inside some ground set.  Constraints::

    x({u,v},{u}) + x({u,v},{v}) = y({u,v})        cut indicator
    sum_A x(S, A) = 1                               probability measure
    x(S, A) >= 0
    x(S+u, A) + x(S+u, A+u) = x(S, A)              consistency

objective ``sum cap*y / sum dem*y``.

The full system is described implicitly (counts plus row generators);
materializing it costs ``sum_S 2^|S|`` variables, which is only done for
small instances or when dumping.  The solver normally works on the
*projected* program: one distribution per maximal ground set, tied together
by marginal-consistency rows on pairwise intersections.  Every feasible
point of one maps to a feasible point of the other with the same objective,
because each closure set ``S`` sits inside a maximal ground set and
``x(S, .)`` is then the marginal of that set's distribution.

Both programs are homogenized with a scale variable ``t``: ``x' = t x``,
constant right-hand sides become multiples of ``t``, the demand term is
pinned to one and the capacity term is minimized.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from .bits import members, popcount, submasks
from .decomposition import GroundSetFamily
from .instance import Instance
from .lp import LinearProgram, LPResult

DEFAULT_MEMORY_GUARD = 5_000_000
FULL_FORM_LIMIT = 4_000


class RelaxationError(RuntimeError):
    pass


class MemoryGuardError(RelaxationError):
    def __init__(self, predicted: dict[str, int], guard: int):
        self.predicted = predicted
        self.guard = guard
        sizes = ", ".join(f"{k}={v}" for k, v in predicted.items())
        super().__init__(f"LP exceeds memory guard {guard} variables (predicted {sizes})")


def _pair(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass
class FractionalLP:
    inst: Instance
    gsf: GroundSetFamily
    closure: tuple[int, ...]  # distinct S, ordered by (|S|, mask); closure[0] is the empty set
    pairs: tuple[tuple[int, int], ...]  # pairs carrying a y-variable
    _sid: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._sid = {s: i for i, s in enumerate(self.closure)}

    @property
    def maximal(self) -> tuple[int, ...]:
        return self.gsf.maximal

    def sid(self, s: int) -> int:
        return self._sid[s]

    @property
    def x_var_count(self) -> int:
        return sum(1 << popcount(s) for s in self.closure)

    @property
    def y_var_count(self) -> int:
        return len(self.pairs)

    def row_counts(self) -> dict[str, int]:
        return {
            "cut_indicator": len(self.pairs),
            "measure": len(self.closure),
            "consistency": sum(popcount(s) << (popcount(s) - 1) for s in self.closure if s),
        }

    def objective_terms(self) -> tuple[dict[tuple[int, int], int], dict[tuple[int, int], int]]:
        num = {(u, v): c for u, v, c in self.inst.supply}
        den = {(u, v): d for u, v, d in self.inst.demand}
        return num, den

    def iter_rows(self) -> Iterator[tuple[str, dict[tuple, int], int]]:
        """Rows of the (non-homogenized) system as ``(kind, {var: coef}, rhs)``.

        Variable keys are ``("x", S, A)`` and ``("y", u, v)`` with masks.
        """
        for u, v in self.pairs:
            e = (1 << u) | (1 << v)
            yield "cut_indicator", {("x", e, 1 << u): 1, ("x", e, 1 << v): 1, ("y", u, v): -1}, 0
        for s in self.closure:
            yield "measure", {("x", s, a): 1 for a in submasks(s)}, 1
        for big in self.closure:
            for u in members(big):
                s = big & ~(1 << u)
                for a in submasks(s):
                    yield "consistency", {("x", big, a): 1, ("x", big, a | 1 << u): 1, ("x", s, a): -1}, 0


def build_fractional_lp(inst: Instance, gsf: GroundSetFamily, memory_guard: int = DEFAULT_MEMORY_GUARD) -> FractionalLP:
    bound = sum(1 << popcount(g) for g in gsf.maximal)
    if bound > memory_guard:
        raise MemoryGuardError({"projected_columns": bound}, memory_guard)
    closure_set: set[int] = set()
    for g in gsf.maximal:
        closure_set.update(submasks(g))
    closure = tuple(sorted(closure_set, key=lambda m: (popcount(m), m)))
    pairs = sorted({_pair(u, v) for g in gsf.maximal for u, v in itertools.combinations(members(g), 2)})
    for kind, edges in (("supply", inst.supply), ("demand", inst.demand)):
        for u, v, _ in edges:
            if ((1 << u) | (1 << v)) not in closure_set:
                raise RelaxationError(f"{kind} edge ({u}, {v}) lies in no ground set")
    flp = FractionalLP(inst, gsf, closure, tuple(pairs))
    x_count = flp.x_var_count
    if x_count + len(pairs) > memory_guard:
        raise MemoryGuardError({"x_vars": x_count, "y_vars": len(pairs), **flp.row_counts()}, memory_guard)
    return flp


# ------------------------------------------------------------ linearization


@dataclass
class HomogenizedProgram:
    """A Charnes-Cooper linear program plus the map back to ``x``/``y``."""

    lp: LinearProgram
    form: str  # "full" or "projected"
    t_index: int
    x_index: dict[tuple[int, int], int] = field(default_factory=dict)  # full form: (S, A) -> column
    y_index: dict[tuple[int, int], int] = field(default_factory=dict)  # full form
    blocks: list[tuple[int, int, list[int]]] = field(default_factory=list)  # projected: (G, offset, local->global)


def to_linear_program(flp: FractionalLP, form: str = "full", limit: int = FULL_FORM_LIMIT) -> HomogenizedProgram:
    """Charnes-Cooper homogenization of the fractional program.

    ``form="full"`` is the literal program over every ``x(S, A)``;
    ``form="projected"`` uses one block per maximal ground set.
    """
    if form == "full":
        return _full_program(flp, limit)
    if form == "projected":
        return _projected_program(flp)
    raise ValueError(f"unknown LP form {form!r}")


def _full_program(flp: FractionalLP, limit: int) -> HomogenizedProgram:
    size = flp.x_var_count + flp.y_var_count + 1
    if size > limit:
        raise RelaxationError(f"full program has {size} variables; use the projected form")
    names: list[str] = []
    x_index: dict[tuple[int, int], int] = {}
    for s in flp.closure:
        sid = flp.sid(s)
        for a in submasks(s):
            x_index[(s, a)] = len(names)
            names.append(f"x_{sid}_{a}")
    y_index = {}
    for u, v in flp.pairs:
        y_index[(u, v)] = len(names)
        names.append(f"y_{u}_{v}")
    t = len(names)
    names.append("t")
    num, den = flp.objective_terms()
    lp = LinearProgram(names, {y_index[e]: c for e, c in num.items()}, [], [])
    counters: dict[str, int] = {}
    for kind, terms, rhs in flp.iter_rows():
        coefs = {}
        for key, c in terms.items():
            col = x_index[key[1:]] if key[0] == "x" else y_index[key[1:]]
            coefs[col] = coefs.get(col, 0) + c
        if rhs:
            coefs[t] = coefs.get(t, 0) - rhs
        counters[kind] = counters.get(kind, 0) + 1
        lp.add_row(coefs, 0, f"{kind}_{counters[kind]}")
    lp.add_row({y_index[e]: d for e, d in den.items()}, 1, "normalize")
    return HomogenizedProgram(lp, "full", t, x_index, y_index)


def consistency_pairs(maximal: tuple[int, ...]) -> list[tuple[int, int]]:
    """Pairs of maximal sets whose intersections must be made consistent.

    A pair is skipped when its endpoints are already joined by kept pairs
    whose intersections all contain this pair's intersection: marginals
    then agree along that path.
    """
    cand = [(i, j, maximal[i] & maximal[j]) for i, j in itertools.combinations(range(len(maximal)), 2)]
    cand = [c for c in cand if c[2]]
    cand.sort(key=lambda c: (-popcount(c[2]), c[0], c[1]))
    kept: list[tuple[int, int, int]] = []
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(len(maximal))}
    for i, j, inter in cand:
        seen, stack = {i}, [i]
        while stack:
            k = stack.pop()
            for l, lab in adj[k]:
                if l not in seen and inter & ~lab == 0:
                    seen.add(l)
                    stack.append(l)
        if j in seen:
            continue
        kept.append((i, j, inter))
        adj[i].append((j, inter))
        adj[j].append((i, inter))
    return [(i, j) for i, j, _ in kept]


def _projected_program(flp: FractionalLP) -> HomogenizedProgram:
    maximal = flp.maximal
    names: list[str] = []
    blocks = []
    for gid, g in enumerate(maximal):
        glob = list(submasks(g))
        blocks.append((g, len(names), glob))
        names.extend(f"p_{gid}_{a}" for a in glob)
    t = len(names)
    names.append("t")

    def home(e: int) -> int:
        return next(k for k, (g, _, _) in enumerate(blocks) if e & ~g == 0)

    def cut_terms(edges) -> dict[int, int]:
        coefs: dict[int, int] = {}
        for u, v, w in edges:
            e = (1 << u) | (1 << v)
            g, off, glob = blocks[home(e)]
            for a, big in enumerate(glob):
                if big & e not in (0, e):
                    coefs[off + a] = coefs.get(off + a, 0) + w
        return coefs

    lp = LinearProgram(names, cut_terms(flp.inst.supply), [], [])
    for gid, (g, off, glob) in enumerate(blocks):
        row = {off + a: 1 for a in range(len(glob))}
        row[t] = -1
        lp.add_row(row, 0, f"measure_{gid}")
    for i, j in consistency_pairs(maximal):
        inter = maximal[i] & maximal[j]
        rows: dict[int, dict[int, int]] = {}
        for sign, (g, off, glob) in ((1, blocks[i]), (-1, blocks[j])):
            for a, big in enumerate(glob):
                key = big & inter
                if key != inter:  # implied by the two measure rows
                    rows.setdefault(key, {})[off + a] = sign
        for key in sorted(rows):
            lp.add_row(rows[key], 0, f"marg_{i}_{j}_{key}")
    lp.add_row(cut_terms(flp.inst.demand), 1, "normalize")
    return HomogenizedProgram(lp, "projected", t, blocks=blocks)


# ----------------------------------------------------------------- solution


class XYSolution:
    """Exact ``x``/``y`` values backed by one distribution per maximal ground set.

    ``x(S, A)`` for any closure set ``S`` is the marginal of the smallest
    maximal set containing ``S``; marginals are cached per ``S``.
    """

    def __init__(self, gsf: GroundSetFamily, dists: dict[int, dict[int, Fraction]], opt_lp: Fraction):
        self.gsf = gsf
        self.dists = dists
        self.opt_lp = opt_lp
        self._marg: dict[int, dict[int, Fraction]] = {}
        self._y: dict[tuple[int, int], Fraction] = {}

    def _home(self, s: int) -> int:
        best = None
        for g in self.dists:
            if s & ~g == 0 and (best is None or (popcount(g), g) < (popcount(best), best)):
                best = g
        if best is None:
            raise KeyError(f"set {members(s)} is outside every ground set")
        return best

    def marginal(self, s: int) -> dict[int, Fraction]:
        """Nonzero entries of ``x(S, .)`` keyed by the global mask of ``A``."""
        cached = self._marg.get(s)
        if cached is None:
            cached = {}
            for a, w in self.dists[self._home(s)].items():
                k = a & s
                cached[k] = cached.get(k, 0) + w
            cached = {k: w for k, w in cached.items() if w}
            self._marg[s] = cached
        return cached

    def x(self, s: int, a: int) -> Fraction:
        if a & ~s:
            raise ValueError("A must be a subset of S")
        return self.marginal(s).get(a, Fraction(0))

    def y(self, u: int, v: int) -> Fraction:
        key = _pair(u, v)
        val = self._y.get(key)
        if val is None:
            e = (1 << u) | (1 << v)
            val = self.x(e, 1 << u) + self.x(e, 1 << v)
            self._y[key] = val
        return val

    def ratio(self, inst: Instance) -> tuple[Fraction, Fraction]:
        num = sum((c * self.y(u, v) for u, v, c in inst.supply), Fraction(0))
        den = sum((d * self.y(u, v) for u, v, d in inst.demand), Fraction(0))
        return num, den

    def check(self, inst: Instance) -> None:
        """Exact re-verification of the measure and pairwise-consistency conditions."""
        for g, dist in self.dists.items():
            if any(w < 0 or a & ~g for a, w in dist.items()):
                raise RelaxationError("negative or out-of-range x entry")
            if sum(dist.values()) != 1:
                raise RelaxationError(f"x({members(g)}, .) does not sum to 1")
        gs = list(self.dists)
        for g, h in itertools.combinations(gs, 2):
            inter = g & h
            mg: dict[int, Fraction] = {}
            mh: dict[int, Fraction] = {}
            for a, w in self.dists[g].items():
                mg[a & inter] = mg.get(a & inter, 0) + w
            for a, w in self.dists[h].items():
                mh[a & inter] = mh.get(a & inter, 0) + w
            if {k: w for k, w in mg.items() if w} != {k: w for k, w in mh.items() if w}:
                raise RelaxationError(f"marginals of {members(g)} and {members(h)} disagree")
        num, den = self.ratio(inst)
        if den <= 0 or num / den != self.opt_lp:
            raise RelaxationError("objective ratio does not reproduce opt_lp")


def extract_solution(flp: FractionalLP, prog: HomogenizedProgram, result: LPResult) -> XYSolution:
    """De-homogenize an optimal primal and verify it exactly."""
    if result.status != "optimal":
        raise RelaxationError(f"LP solve ended with status {result.status}")
    vals = result.values
    t = vals[prog.t_index]
    if t <= 0:
        raise RelaxationError("scale variable t is zero at the optimum (no demand can be separated)")
    dists: dict[int, dict[int, Fraction]] = {}
    if prog.form == "projected":
        for g, off, glob in prog.blocks:
            dists[g] = {big: vals[off + a] / t for a, big in enumerate(glob) if vals[off + a]}
    else:
        residual = prog.lp.residuals(vals)
        if any(residual):
            raise RelaxationError("full-form primal violates a row")
        for g in flp.maximal:
            dists[g] = {a: vals[prog.x_index[(g, a)]] / t for a in submasks(g) if vals[prog.x_index[(g, a)]]}
    xy = XYSolution(flp.gsf, dists, Fraction(result.objective))
    if prog.form == "full":
        for (s, a), col in prog.x_index.items():
            if vals[col] / t != xy.x(s, a):
                raise RelaxationError("full-form x disagrees with its maximal-set marginal")
    xy.check(flp.inst)
    return xy


def solution_from_point(flp: FractionalLP, x_of, opt_lp: Fraction | None = None) -> XYSolution:
    """Wrap an arbitrary feasible assignment ``x_of(S, A)`` (e.g. an integral point)."""
    dists = {}
    for g in flp.maximal:
        dists[g] = {a: Fraction(x_of(g, a)) for a in submasks(g) if x_of(g, a)}
    xy = XYSolution(flp.gsf, dists, Fraction(0))
    num, den = xy.ratio(flp.inst)
    xy.opt_lp = num / den if opt_lp is None and den else (opt_lp if opt_lp is not None else Fraction(0))
    return xy


def projected_program_size(flp: FractionalLP) -> dict[str, int]:
    cols = sum(1 << popcount(g) for g in flp.maximal) + 1
    rows = len(flp.maximal) + 1 + sum(
        (1 << popcount(flp.maximal[i] & flp.maximal[j])) - 1 for i, j in consistency_pairs(flp.maximal))
    return {"columns": cols, "rows": rows}


def write_full_lp(flp: FractionalLP, fh) -> dict[str, int]:
    """Stream the homogenized full program in CPLEX LP format; returns row/column counts."""

    def name(key) -> str:
        if key[0] == "x":
            return f"x_{flp.sid(key[1])}_{key[2]}"
        return f"y_{key[1]}_{key[2]}"

    def terms(pairs) -> str:
        out = []
        for nm, c in pairs:
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            out.append(f"{sign} {nm}" if mag == 1 else f"{sign} {mag} {nm}")
        text = " ".join(out)
        return text[2:] if text.startswith("+ ") else text

    num, den = flp.objective_terms()
    fh.write("minimize\n obj: " + terms((f"y_{u}_{v}", c) for (u, v), c in sorted(num.items())) + "\n")
    fh.write("st\n")
    counts: dict[str, int] = {}
    for kind, row, rhs in flp.iter_rows():
        counts[kind] = counts.get(kind, 0) + 1
        pairs = [(name(k), c) for k, c in row.items()]
        if rhs:
            pairs.append(("t", -rhs))
        fh.write(f" {kind}_{counts[kind]}: {terms(pairs)} = 0\n")
    fh.write(" normalize: " + terms((f"y_{u}_{v}", d) for (u, v), d in sorted(den.items())) + " = 1\n")
    fh.write("bounds\n")
    for s in flp.closure:
        sid = flp.sid(s)
        for a in submasks(s):
            fh.write(f" x_{sid}_{a} >= 0\n")
    for u, v in flp.pairs:
        fh.write(f" y_{u}_{v} >= 0\n")
    fh.write(" t >= 0\nend\n")
    return {"rows": sum(counts.values()) + 1, "columns": flp.x_var_count + flp.y_var_count + 1}
