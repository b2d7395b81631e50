"""Top-down randomized rounding over a grouped decomposition and its derandomization.

Bags are visited in id order (ids are BFS numbers).  The root samples
``B_R`` from ``x(R, .)``; every other bag ``Y`` samples the nodes it
introduces, ``Y \\ mu(Y)``, from

    f^{H,Y}(A) = x(V^Y | Y, H | A) / x(V^Y, H),     H = B & V^Y.

Conditional separation probabilities
------------------------------------
Fix a prefix of the first ``t`` bags and an assignment ``T`` of the nodes
they cover (``U``).  For a node ``a`` outside ``U`` let ``C_a`` be the first
bag on its root path that lies outside the prefix and ``h = T & V^{C_a}``.
The subtree below ``C_a`` is sampled from ``h`` alone, so

    g_a = P(a in B | B & U = T) = x(V^C + a, h + a) / x(V^C, h).

The same number is a sum over H-extensions, provided every term is divided
by ``x(V^C, h)`` rather than by ``x(V^X, M)``; the latter drops the weight of
the intermediate assignment ``M``.  For an edge ``{u, v}``:

* both ends in ``U``: 0 or 1;
* one end ``u`` in ``U``: ``g_v`` if ``u`` is outside ``T``, else ``1 - g_v``;
* ``C_u != C_v``: the two subtrees are independent, ``g_u(1-g_v) + g_v(1-g_u)``;
* ``C_u == C_v``: condition on the whole scope of ``W = lca(X_u, X_v)``:
  ``sum_{H,K} x(scope W, h|H|K) / x(V^C, h) * [gamma_u(1-gamma_v) + gamma_v(1-gamma_u)]``.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Iterator

from .bits import members, submasks
from .decomposition import KLDecomposition
from .instance import Instance, sparsity
from .relaxation import XYSolution

FALLBACK_SAMPLES = 64


class RoundingError(RuntimeError):
    pass


class ZeroProbabilityCondition(RoundingError):
    pass


# ------------------------------------------------------------ distributions


@dataclass(frozen=True)
class BagDistribution:
    bag: int
    condition: int | None  # mask T within V^Y; None for the root
    weights: dict[int, Fraction]  # A within Y \ mu(Y) -> probability (support only)

    def __post_init__(self):
        if sum(self.weights.values()) != 1:
            raise RoundingError(f"bag {self.bag} distribution does not sum to 1")


def bag_distribution(xy: XYSolution, kd: KLDecomposition, bag: int, condition: int = 0) -> BagDistribution:
    new = kd.new_mask[bag]
    if kd.parent[bag] == -1:
        weights = {a: w for a, w in xy.marginal(kd.bag_mask[bag]).items()}
        return BagDistribution(bag, None, weights)
    prefix = kd.prefix_mask[bag]
    if condition & ~prefix:
        raise ValueError("condition must lie inside the prefix set of the bag")
    denom = xy.marginal(prefix).get(condition, Fraction(0))
    if denom == 0:
        raise ZeroProbabilityCondition(f"x(V^Y, T) = 0 at bag {bag}")
    weights = {}
    for key, w in xy.marginal(kd.scope_mask[bag]).items():
        if key & prefix == condition:
            weights[key & new] = w / denom
    return BagDistribution(bag, condition, weights)


class _Sampler:
    """Cached integer-exact sampling tables per (bag, condition)."""

    def __init__(self, xy: XYSolution, kd: KLDecomposition):
        self.xy, self.kd = xy, kd
        self._tables: dict[tuple[int, int], tuple[int, list[int], list[int]]] = {}

    def table(self, bag: int, condition: int):
        key = (bag, condition)
        tab = self._tables.get(key)
        if tab is None:
            dist = bag_distribution(self.xy, self.kd, bag, condition)
            outcomes = sorted(dist.weights)
            scale = lcm(*(w.denominator for w in dist.weights.values()))
            cum, acc = [], 0
            for a in outcomes:
                acc += dist.weights[a].numerator * (scale // dist.weights[a].denominator)
                cum.append(acc)
            tab = (scale, outcomes, cum)
            self._tables[key] = tab
        return tab

    def draw(self, bag: int, condition: int, rng: random.Random) -> int:
        scale, outcomes, cum = self.table(bag, condition)
        r = rng.randrange(scale)
        lo, hi = 0, len(cum) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cum[mid] > r:
                hi = mid
            else:
                lo = mid + 1
        return outcomes[lo]


@dataclass
class RoundingState:
    assigned: dict[int, int] = field(default_factory=dict)  # bag -> B_Y mask
    histories: dict[int, int] = field(default_factory=dict)  # bag -> H_Y mask
    result: int = 0

    def cut_members(self) -> list[int]:
        return members(self.result)


def randomized_round(xy: XYSolution, kd: KLDecomposition, seed: int | random.Random,
                     sampler: _Sampler | None = None) -> RoundingState:
    """One run of the top-down sampler; reproducible for a given integer seed."""
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    sampler = sampler or _Sampler(xy, kd)
    state = RoundingState()
    for bag in range(len(kd.bags)):
        par = kd.parent[bag]
        if par == -1:
            history = 0
        else:
            history = state.histories[par] | (state.assigned[par] & kd.bag_mask[bag] & kd.bag_mask[par])
        state.histories[bag] = history
        pick = sampler.draw(bag, history, rng)
        state.assigned[bag] = pick
        state.result |= pick
    return state


# ----------------------------------------------------------- H-extensions


@dataclass(frozen=True)
class HExtension:
    node: int
    top: int  # least-depth bag X containing the node
    anchor: int | None  # Z on the root path of X; None for the empty prefix
    condition: int
    pairs: tuple[tuple[int, int], ...]  # (M, N) masks

    def __len__(self) -> int:
        return len(self.pairs)


def _anchor_scope(kd: KLDecomposition, anchor: int | None) -> int:
    return 0 if anchor is None else kd.scope_mask[anchor]


def h_extensions(kd: KLDecomposition, condition: int, node: int, anchor: int | None) -> HExtension:
    """All pairs ``(M, N)`` with ``N`` inside ``X \\ V^X`` containing ``node`` and
    ``M = (H & V^X) | L`` for ``L`` inside ``V^X`` but outside ``V^Z | Z``.

    ``anchor=None`` stands for an empty prefix (``V^Z | Z`` empty).
    """
    top = kd.top_bag[node]
    if anchor is not None and anchor not in kd.root_path[top]:
        raise ValueError(f"bag {anchor} is not on the root path of bag {top}")
    base = _anchor_scope(kd, anchor)
    if condition & ~base:
        raise ValueError("condition must lie inside V^Z | Z")
    prefix = kd.prefix_mask[top]
    m0 = condition & prefix
    l_space = prefix & ~base
    n_space = kd.bag_mask[top] & ~prefix
    bit = 1 << node
    pairs = [(m0 | l, n) for l in submasks(l_space) for n in submasks(n_space) if n & bit]
    pairs.sort()
    return HExtension(node, top, anchor, condition, tuple(pairs))


def extension_probability(xy: XYSolution, kd: KLDecomposition, condition: int, node: int, anchor: int | None) -> Fraction:
    """``P(node in B | B & (V^Z | Z) = condition)`` as a sum over H-extensions."""
    ext = h_extensions(kd, condition, node, anchor)
    scope = kd.scope_mask[ext.top]
    shared = scope & _anchor_scope(kd, anchor)
    target = condition & shared
    denom = xy.x(shared, target)
    if denom == 0:
        raise ZeroProbabilityCondition(f"zero-probability condition for node {node}")
    total = Fraction(0)
    for m, n in ext.pairs:
        if (m | n) & shared == target:
            total += xy.x(scope, m | n)
    return total / denom


# ------------------------------------------------ conditional probabilities


class ConditionalProbabilities:
    """Exact ``P(|e & B| = 1 | B & U_t = T)`` with memoization.

    ``method="marginal"`` uses the closed form above; ``method="extensions"``
    evaluates the same numbers through H-extension sums (slower, used to
    cross-check).
    """

    def __init__(self, xy: XYSolution, kd: KLDecomposition, method: str = "marginal"):
        if method not in ("marginal", "extensions"):
            raise ValueError(f"unknown method {method!r}")
        self.xy, self.kd, self.method = xy, kd, method
        covered = []
        acc = 0
        for b in range(len(kd.bags)):
            acc |= kd.bag_mask[b]
            covered.append(acc)
        self.covered = [0] + covered  # covered[t] = nodes inside the first t bags
        self._g: dict[tuple[int, int, int], Fraction] = {}
        self._pair: dict[tuple[int, int, int, int], Fraction] = {}

    def entry_bag(self, node: int, t: int) -> int:
        """First bag outside the prefix on the root path of the node's top bag."""
        path = self.kd.root_path[self.kd.top_bag[node]]
        for b in reversed(path):
            if b >= t:
                return b
        raise ValueError(f"node {node} is covered by the first {t} bags")

    def node_probability(self, node: int, bag: int, cond: int) -> Fraction:
        """``P(node in B | B & V^bag = cond)`` for ``node`` introduced in ``bag``'s subtree."""
        key = (node, bag, cond)
        val = self._g.get(key)
        if val is None:
            kd, xy = self.kd, self.xy
            pre = kd.prefix_mask[bag]
            if self.method == "marginal":
                denom = xy.x(pre, cond)
                if denom == 0:
                    raise ZeroProbabilityCondition(f"x(V^C, h) = 0 for node {node}")
                val = xy.x(pre | 1 << node, cond | 1 << node) / denom
            else:
                par = kd.parent[bag]
                anchor = None if par == -1 else par
                val = extension_probability(xy, kd, cond, node, anchor)
            self._g[key] = val
        return val

    def _scope_node_probability(self, node: int, w: int, assignment: int) -> Fraction:
        """``P(node in B | B & scope(W) = assignment)`` for ``node`` in ``W``'s subtree."""
        kd = self.kd
        if kd.bag_mask[w] >> node & 1:
            return Fraction(assignment >> node & 1)
        child = kd.child_toward(w, kd.top_bag[node])
        if self.method == "marginal":
            return self.node_probability(node, child, assignment & kd.prefix_mask[child])
        return extension_probability(self.xy, kd, assignment, node, w)

    def _same_entry(self, u: int, v: int, c: int, cond: int) -> Fraction:
        key = (u, v, c, cond)
        val = self._pair.get(key)
        if val is not None:
            return val
        kd, xy = self.kd, self.xy
        w = kd.lca(kd.top_bag[u], kd.top_bag[v])
        pre_c = kd.prefix_mask[c]
        denom = xy.x(pre_c, cond)
        if denom == 0:
            raise ZeroProbabilityCondition("x(V^C, h) = 0")
        total = Fraction(0)
        for key_w, weight in xy.marginal(kd.scope_mask[w]).items():
            if key_w & pre_c != cond:
                continue
            gu = self._scope_node_probability(u, w, key_w)
            gv = self._scope_node_probability(v, w, key_w)
            total += weight * (gu * (1 - gv) + gv * (1 - gu))
        val = total / denom
        self._pair[key] = val
        return val

    def separation(self, u: int, v: int, t: int, assignment: int) -> Fraction:
        cov = self.covered[t]
        in_u, in_v = cov >> u & 1, cov >> v & 1
        if in_u and in_v:
            return Fraction((assignment >> u & 1) ^ (assignment >> v & 1))
        if in_u or in_v:
            fixed, free = (u, v) if in_u else (v, u)
            c = self.entry_bag(free, t)
            g = self.node_probability(free, c, assignment & self.kd.prefix_mask[c])
            return 1 - g if assignment >> fixed & 1 else g
        cu, cv = self.entry_bag(u, t), self.entry_bag(v, t)
        if cu != cv:
            gu = self.node_probability(u, cu, assignment & self.kd.prefix_mask[cu])
            gv = self.node_probability(v, cv, assignment & self.kd.prefix_mask[cv])
            return gu * (1 - gv) + gv * (1 - gu)
        a, b = min(u, v), max(u, v)
        return self._same_entry(a, b, cu, assignment & self.kd.prefix_mask[cu])


def conditional_separation_probability(xy: XYSolution, kd: KLDecomposition, pair: tuple[int, int],
                                       prefix_bags: int, assignment: int, method: str = "marginal") -> Fraction:
    """``P(|e & B| = 1 | B & (Y_1 | ... | Y_t) = T)`` with ``t = prefix_bags``."""
    cp = ConditionalProbabilities(xy, kd, method)
    cov = cp.covered[prefix_bags]
    if assignment & ~cov:
        raise ValueError("assignment must lie inside the prefix bags")
    return cp.separation(pair[0], pair[1], prefix_bags, assignment)


# ---------------------------------------------------------- derandomization


@dataclass
class DerandomizationStep:
    bag: int
    chosen: int
    expectation: Fraction
    candidates: int


@dataclass
class DerandomizedCut:
    members: int
    initial_expectation: Fraction
    steps: list[DerandomizationStep]
    fallback: bool = False
    fallback_source: str | None = None

    @property
    def invariant_held(self) -> bool:
        return self.initial_expectation <= 0 and all(s.expectation <= 0 for s in self.steps)


def _subtree_nodes(kd: KLDecomposition) -> list[int]:
    """Nodes introduced anywhere in each bag's subtree."""
    out = list(kd.new_mask)
    for b in reversed(range(len(kd.bags))):
        p = kd.parent[b]
        if p != -1:
            out[p] |= out[b]
    return out


def gamma_expectation(inst: Instance, cp: ConditionalProbabilities, opt_lp: Fraction, t: int, assignment: int) -> Fraction:
    """``E[C - 2 D opt_lp | B & U_t = T]``."""
    cap = sum((c * cp.separation(u, v, t, assignment) for u, v, c in inst.supply), Fraction(0))
    dem = sum((d * cp.separation(u, v, t, assignment) for u, v, d in inst.demand), Fraction(0))
    return cap - 2 * opt_lp * dem


def derandomize(inst: Instance, xy: XYSolution, kd: KLDecomposition, opt_lp: Fraction | None = None,
                method: str = "marginal") -> DerandomizedCut:
    """Greedy conditional expectations over the bags in BFS order.

    Raises :class:`RoundingError` if ``E[Gamma | prefix] <= 0`` ever fails.
    """
    opt_lp = xy.opt_lp if opt_lp is None else opt_lp
    cp = ConditionalProbabilities(xy, kd, method)
    sub = _subtree_nodes(kd)
    edges = [(u, v, c, 0) for u, v, c in inst.supply] + [(u, v, 0, d) for u, v, d in inst.demand]

    def weight(c, d):
        return c - 2 * opt_lp * d

    initial = sum((weight(c, d) * cp.separation(u, v, 0, 0) for u, v, c, d in edges), Fraction(0))
    if initial > 0:
        raise RoundingError(f"E[Gamma] = {initial} > 0 before any bag is fixed")
    steps = []
    assignment = 0
    for bag in range(len(kd.bags)):
        touched = sub[bag]
        moving = [e for e in edges if (touched >> e[0] | touched >> e[1]) & 1]
        fixed = sum((weight(c, d) * cp.separation(u, v, bag, assignment)
                     for u, v, c, d in edges if not (touched >> u | touched >> v) & 1), Fraction(0))
        if kd.parent[bag] == -1:
            support = bag_distribution(cp.xy, kd, bag).weights
        else:
            support = bag_distribution(cp.xy, kd, bag, assignment & kd.prefix_mask[bag]).weights
        best = None
        for cand in sorted(support):
            if support[cand] == 0:
                continue
            trial = assignment | cand
            value = fixed + sum((weight(c, d) * cp.separation(u, v, bag + 1, trial) for u, v, c, d in moving), Fraction(0))
            if best is None or value < best[0]:
                best = (value, cand)
        value, cand = best
        if value > 0:
            raise RoundingError(f"E[Gamma | prefix] = {value} > 0 after bag {bag}")
        assignment |= cand
        steps.append(DerandomizationStep(bag, cand, value, len(support)))
    return DerandomizedCut(assignment, initial, steps)


# ----------------------------------------------------------------- fallback


def is_degenerate(inst: Instance, cut: int) -> bool:
    if cut == 0 or cut == inst.full_mask:
        return True
    return inst.crossing(cut)[1] == 0


def _key(inst: Instance, mask: int):
    phi = sparsity(inst, mask)
    return (phi, members(mask))


def fallback_cut(inst: Instance, xy: XYSolution, kd: KLDecomposition, seed: int = 0,
                 samples: int = FALLBACK_SAMPLES) -> tuple[int, str]:
    """Best defined-sparsity cut among all single-node cuts and fresh samples."""
    candidates: list[tuple[int, str]] = [(1 << v, "single-node") for v in range(inst.n)]
    sampler = _Sampler(xy, kd)
    rng = random.Random(seed)
    for _ in range(samples):
        candidates.append((randomized_round(xy, kd, rng, sampler).result, "sample"))
    best = None
    for mask, source in candidates:
        if is_degenerate(inst, mask):
            continue
        key = _key(inst, mask)
        if best is None or key < best[0]:
            best = (key, mask, source)
    if best is None:
        raise RoundingError("no candidate cut separates any demand")
    return best[1], best[2]


def iter_prefix_assignments(kd: KLDecomposition, xy: XYSolution, t: int) -> Iterator[tuple[int, Fraction]]:
    """Every positive-probability assignment of the first ``t`` bags with its probability."""
    def walk(bag: int, assignment: int, prob: Fraction):
        if bag == t:
            yield assignment, prob
            return
        cond = 0 if kd.parent[bag] == -1 else assignment & kd.prefix_mask[bag]
        for a, w in sorted(bag_distribution(xy, kd, bag, cond).weights.items()):
            if w:
                yield from walk(bag + 1, assignment | a, prob * w)
    yield from walk(0, 0, Fraction(1))

