"""Tree decompositions: validation, construction, balancing and level grouping.

Pipeline used by the solver::

    td = heuristic_tree_decomposition(inst)      # min-fill, any shape
    bal = balance_tree_decomposition(td)         # binary, log depth, bags <= 3(w+1)
    kd = build_kl_decomposition(bal, ell)        # grouped bags, adhesions, prefix sets
    gsf = build_ground_sets(kd)                  # index family of the LP

Bags of a ``TreeDecomposition`` are frozensets; the grouped decomposition also
carries bitmasks because everything downstream enumerates subsets.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import networkx as nx
from networkx.algorithms.approximation import treewidth_min_fill_in

from .bits import mask_of, popcount
from .instance import Instance


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class TreeDecomposition:
    """Rooted tree of bags; ``parent[i] == -1`` marks the root."""

    bags: tuple[frozenset[int], ...]
    parent: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bags", tuple(frozenset(b) for b in self.bags))
        object.__setattr__(self, "parent", tuple(self.parent))
        if len(self.bags) != len(self.parent) or not self.bags:
            raise DecompositionError("need one parent entry per bag and at least one bag")
        roots = [i for i, p in enumerate(self.parent) if p == -1]
        if len(roots) != 1:
            raise DecompositionError(f"expected exactly one root, found {len(roots)}")
        # every bag must reach the root
        order = self.bfs_order
        if len(order) != len(self.bags):
            raise DecompositionError("parent links do not form a tree")

    @property
    def root(self) -> int:
        return self.parent.index(-1)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        ch: list[list[int]] = [[] for _ in self.bags]
        for i, p in enumerate(self.parent):
            if p != -1:
                if not 0 <= p < len(self.bags):
                    raise DecompositionError(f"bag {i} has invalid parent {p}")
                ch[p].append(i)
        return tuple(tuple(sorted(c)) for c in ch)

    @cached_property
    def bfs_order(self) -> tuple[int, ...]:
        order = []
        seen = set()
        queue = deque([self.parent.index(-1)])
        while queue:
            i = queue.popleft()
            if i in seen:
                break
            seen.add(i)
            order.append(i)
            queue.extend(self.children[i])
        return tuple(order)

    @cached_property
    def level(self) -> tuple[int, ...]:
        lev = [0] * len(self.bags)
        for i in self.bfs_order:
            if self.parent[i] != -1:
                lev[i] = lev[self.parent[i]] + 1
        return tuple(lev)

    @property
    def width(self) -> int:
        return max(len(b) for b in self.bags) - 1

    @property
    def depth(self) -> int:
        return max(self.level)

    @property
    def is_binary(self) -> bool:
        return all(len(c) <= 2 for c in self.children)

    @property
    def nodes(self) -> frozenset[int]:
        return frozenset().union(*self.bags)


@dataclass(frozen=True)
class Violation:
    axiom: int  # 1 node coverage, 2 edge coverage, 3 connectivity
    witness: tuple[int, ...]
    message: str


@dataclass(frozen=True)
class Validation:
    width: int | None
    violation: Violation | None = None

    @property
    def ok(self) -> bool:
        return self.violation is None


def validate_tree_decomposition(inst: Instance, td: TreeDecomposition) -> Validation:
    """Check the three tree-decomposition axioms against the supply graph of ``inst``."""
    for i, bag in enumerate(td.bags):
        bad = [v for v in bag if not 0 <= v < inst.n]
        if bad:
            return Validation(None, Violation(1, (bad[0],), f"bag {i} holds unknown node {bad[0]}"))
    covered = td.nodes
    for v in inst.nodes:
        if v not in covered:
            return Validation(None, Violation(1, (v,), f"node {v} is in no bag"))
    for u, v, _ in inst.supply:
        if not any(u in b and v in b for b in td.bags):
            return Validation(None, Violation(2, (u, v), f"edge ({u}, {v}) is in no bag"))
    for v in inst.nodes:
        holding = {i for i, b in enumerate(td.bags) if v in b}
        # connected iff exactly one holding bag has its parent outside the set
        tops = [i for i in holding if td.parent[i] == -1 or td.parent[i] not in holding]
        if len(tops) != 1:
            return Validation(None, Violation(3, (v,), f"bags holding node {v} are disconnected"))
    return Validation(td.width)


def _check(inst: Instance, td: TreeDecomposition) -> None:
    res = validate_tree_decomposition(inst, td)
    if not res.ok:
        raise DecompositionError(f"invalid tree decomposition: axiom ({res.violation.axiom}) {res.violation.message}")


def _rooted(bags: Sequence[frozenset[int]], edges: Sequence[tuple[int, int]], root: int) -> TreeDecomposition:
    """Root an undirected bag tree and renumber bags in BFS order (children by old id)."""
    adj: dict[int, list[int]] = {i: [] for i in range(len(bags))}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    order, parent_old = [root], {root: -1}
    queue = deque([root])
    while queue:
        i = queue.popleft()
        for j in sorted(adj[i]):
            if j not in parent_old:
                parent_old[j] = i
                order.append(j)
                queue.append(j)
    if len(order) != len(bags):
        raise DecompositionError("bag graph is not connected")
    new_id = {old: k for k, old in enumerate(order)}
    return TreeDecomposition(
        tuple(bags[old] for old in order),
        tuple(-1 if parent_old[old] == -1 else new_id[parent_old[old]] for old in order),
    )


def heuristic_tree_decomposition(inst: Instance) -> TreeDecomposition:
    """Min-fill elimination decomposition of the supply graph (no optimality claim)."""
    g = nx.Graph()
    g.add_nodes_from(inst.nodes)
    g.add_edges_from((u, v) for u, v, _ in inst.supply)
    if not nx.is_connected(g):
        raise DecompositionError("supply graph is disconnected; decompose each component separately")
    _, tree = treewidth_min_fill_in(g)
    bags = sorted(tree.nodes, key=lambda b: (len(b), sorted(b)), reverse=True)
    index = {b: i for i, b in enumerate(bags)}
    edges = [(index[a], index[b]) for a, b in tree.edges]
    return _rooted(bags, edges, 0)


# ---------------------------------------------------------------- balancing


class _Balancer:
    """Centroid recursion over pieces of the bag tree with at most two boundary edges."""

    def __init__(self, td: TreeDecomposition):
        self.bags = td.bags
        self.adj: list[list[int]] = [list(td.children[i]) for i in range(len(td.bags))]
        for i, p in enumerate(td.parent):
            if p != -1:
                self.adj[i].append(p)
        for a in self.adj:
            a.sort()
        self.out_bags: list[frozenset[int]] = []
        self.out_parent: list[int] = []

    def _emit(self, bag: frozenset[int], parent: int) -> int:
        self.out_bags.append(bag)
        self.out_parent.append(parent)
        return len(self.out_bags) - 1

    def boundary_nodes(self, boundary: list[tuple[int, int]]) -> frozenset[int]:
        out: frozenset[int] = frozenset()
        for p, o in boundary:
            out |= self.bags[p] & self.bags[o]
        return out

    def _components(self, piece: frozenset[int], cut: int) -> list[frozenset[int]]:
        comps = []
        seen = {cut}
        for start in self.adj[cut]:
            if start not in piece or start in seen:
                continue
            comp, stack = [], [start]
            seen.add(start)
            while stack:
                i = stack.pop()
                comp.append(i)
                for j in self.adj[i]:
                    if j in piece and j not in seen:
                        seen.add(j)
                        stack.append(j)
            comps.append(frozenset(comp))
        return comps

    def _centroid(self, piece: frozenset[int]) -> int:
        start = min(piece)
        order, par = [start], {start: -1}
        for i in order:
            for j in self.adj[i]:
                if j in piece and j not in par:
                    par[j] = i
                    order.append(j)
        size = {i: 1 for i in piece}
        for i in reversed(order):
            if par[i] != -1:
                size[par[i]] += size[i]
        total = len(piece)
        best, best_val = start, total
        for i in order:
            worst = total - size[i]
            for j in self.adj[i]:
                if j in piece and par.get(j) == i:
                    worst = max(worst, size[j])
            if worst < best_val or (worst == best_val and i < best):
                best, best_val = i, worst
        return best

    def _path(self, piece: frozenset[int], a: int, b: int) -> list[int]:
        par = {a: -1}
        queue = deque([a])
        while queue:
            i = queue.popleft()
            if i == b:
                break
            for j in self.adj[i]:
                if j in piece and j not in par:
                    par[j] = i
                    queue.append(j)
        path = [b]
        while path[-1] != a:
            path.append(par[path[-1]])
        return path[::-1]

    def build(self, piece: frozenset[int], boundary: list[tuple[int, int]], parent: int) -> int:
        bnodes = self.boundary_nodes(boundary)
        if len(piece) == 1:
            (only,) = piece
            return self._emit(self.bags[only] | bnodes, parent)
        centroid = self._centroid(piece)
        attach = sorted({p for p, _ in boundary})
        if len(attach) <= 1:
            cut = centroid
        else:
            # project the centroid onto the path joining the two attachment bags
            on_path = set(self._path(piece, attach[0], attach[1]))
            cut = next(i for i in self._path(piece, centroid, attach[0]) if i in on_path)
        node = self._emit(self.bags[cut] | bnodes, parent)
        parts = []
        for comp in self._components(piece, cut):
            bnd = [(p, o) for p, o in boundary if p in comp]
            bnd += [(j, cut) for j in self.adj[cut] if j in comp]
            parts.append((comp, bnd))
        self._attach(parts, node)
        return node

    def _attach(self, parts, node: int) -> None:
        if len(parts) <= 2:
            for comp, bnd in parts:
                self.build(comp, bnd, node)
            return
        # more than two components: weight-balanced binary tree of connector bags
        parts = sorted(parts, key=lambda p: (-len(p[0]), min(p[0])))
        groups: list[list] = [[], []]
        weight = [0, 0]
        for part in parts:
            k = 0 if weight[0] <= weight[1] else 1
            groups[k].append(part)
            weight[k] += len(part[0])
        for group in groups:
            if len(group) == 1:
                self.build(group[0][0], group[0][1], node)
            else:
                bag = frozenset().union(*(self.boundary_nodes(bnd) for _, bnd in group))
                self._attach(group, self._emit(bag, node))


def balance_tree_decomposition(td: TreeDecomposition, inst: Instance | None = None) -> TreeDecomposition:
    """Binary decomposition of logarithmic depth with bags of at most ``3(w+1)`` nodes.

    If ``inst`` is given the input is validated against it first.
    """
    if inst is not None:
        _check(inst, td)
    if len(td.bags) == 1:
        return td
    bal = _Balancer(td)
    bal.build(frozenset(range(len(td.bags))), [], -1)
    edges = [(i, p) for i, p in enumerate(bal.out_parent) if p != -1]
    return _rooted(bal.out_bags, edges, 0)


def balanced_depth_bound(num_bags: int) -> int:
    return 2 * math.ceil(math.log2(num_bags + 1)) + 1


# ------------------------------------------------------------ (k, l) grouping


@dataclass(frozen=True)
class KLDecomposition:
    """Level-grouped decomposition with adhesions, root paths and prefix sets.

    Bag ids follow BFS order, so bag 0 is the root and a BFS visit with
    children in ascending id order is just ``range(len(bags))``.
    """

    bags: tuple[frozenset[int], ...]
    parent: tuple[int, ...]
    ell: int
    source_width: int
    source_depth: int
    anchors: tuple[int, ...] = ()
    adhesion: tuple[frozenset[int], ...] = field(init=False)
    root_path: tuple[tuple[int, ...], ...] = field(init=False)
    prefix: tuple[frozenset[int], ...] = field(init=False)

    def __post_init__(self):
        td = self.tree
        if td.bfs_order != tuple(range(len(self.bags))):
            raise DecompositionError("grouped bags must be numbered in BFS order")
        adhesion, paths, prefix = [], [], []
        for i, p in enumerate(self.parent):
            if p == -1:
                adhesion.append(frozenset())
                paths.append((i,))
                prefix.append(frozenset())
            else:
                adhesion.append(self.bags[i] & self.bags[p])
                paths.append((i,) + paths[p])
                prefix.append(prefix[p] | adhesion[i])
        object.__setattr__(self, "adhesion", tuple(adhesion))
        object.__setattr__(self, "root_path", tuple(paths))
        object.__setattr__(self, "prefix", tuple(prefix))

    @cached_property
    def tree(self) -> TreeDecomposition:
        return TreeDecomposition(self.bags, self.parent)

    @property
    def depth(self) -> int:
        return self.tree.depth

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        return self.tree.children

    @cached_property
    def level(self) -> tuple[int, ...]:
        return self.tree.level

    @cached_property
    def bag_mask(self) -> tuple[int, ...]:
        return tuple(mask_of(b) for b in self.bags)

    @cached_property
    def prefix_mask(self) -> tuple[int, ...]:
        return tuple(mask_of(b) for b in self.prefix)

    @cached_property
    def new_mask(self) -> tuple[int, ...]:
        """Nodes first introduced at each bag: ``Y \\ mu(Y)`` (the whole root bag)."""
        out = []
        for i, p in enumerate(self.parent):
            out.append(self.bag_mask[i] if p == -1 else self.bag_mask[i] & ~self.bag_mask[p])
        return tuple(out)

    @cached_property
    def scope_mask(self) -> tuple[int, ...]:
        """``Y | V^Y`` for every bag."""
        return tuple(b | v for b, v in zip(self.bag_mask, self.prefix_mask))

    @cached_property
    def top_bag(self) -> dict[int, int]:
        """Least-depth bag containing each node."""
        top = {}
        for i in range(len(self.bags)):
            for v in self.bags[i]:
                top.setdefault(v, i)
        return top

    def is_ancestor(self, a: int, b: int) -> bool:
        """True when ``a`` lies on the root path of ``b`` (``a == b`` included)."""
        return a in self.root_path[b]

    def child_toward(self, ancestor: int, bag: int) -> int:
        path = self.root_path[bag]
        k = path.index(ancestor)
        if k == 0:
            raise DecompositionError(f"bag {ancestor} is not a proper ancestor of {bag}")
        return path[k - 1]

    def lca(self, a: int, b: int) -> int:
        on_a = set(self.root_path[a])
        return next(z for z in self.root_path[b] if z in on_a)


def build_kl_decomposition(td: TreeDecomposition, ell: int) -> KLDecomposition:
    """Group ``ell`` consecutive levels below every anchor at level ``i(ell-1)``."""
    if ell < 2:
        raise DecompositionError("ell must be at least 2")
    step = ell - 1
    level = td.level
    anchors = [i for i in td.bfs_order if level[i] % step == 0]
    index = {x: k for k, x in enumerate(anchors)}
    bags, parent = [], []
    for x in anchors:
        union = set(td.bags[x])
        frontier = [x]
        for _ in range(step):
            frontier = [c for f in frontier for c in td.children[f]]
            for c in frontier:
                union |= td.bags[c]
        bags.append(frozenset(union))
        up = x
        for _ in range(step):
            if td.parent[up] == -1:
                break
            up = td.parent[up]
        parent.append(-1 if level[x] == 0 else index[up])
    # anchors come in BFS order of td, which is already BFS order of the grouped tree
    return KLDecomposition(tuple(bags), tuple(parent), ell, td.width, td.depth, tuple(anchors))


# ---------------------------------------------------------------- ground sets


@dataclass(frozen=True)
class GroundSetFamily:
    """Deduplicated sets ``(Y | V^Y) | (Z | V^Z)`` over all unordered bag pairs."""

    ground_sets: tuple[int, ...]
    pair_index: dict[tuple[int, int], int]

    def contains(self, mask: int) -> bool:
        """Whether ``mask`` belongs to the downward-closed family."""
        return any(mask & ~g == 0 for g in self.ground_sets)

    def ground_for(self, mask: int) -> int:
        """Smallest ground set containing ``mask`` (ties by numeric value)."""
        best = None
        for g in self.ground_sets:
            if mask & ~g == 0 and (best is None or (popcount(g), g) < (popcount(best), best)):
                best = g
        if best is None:
            raise KeyError(f"set {mask:#x} is outside every ground set")
        return best

    @cached_property
    def maximal(self) -> tuple[int, ...]:
        """Ground sets not strictly contained in another one."""
        gs = self.ground_sets
        return tuple(g for g in gs if not any(h != g and g & ~h == 0 for h in gs))

    @property
    def max_size(self) -> int:
        return max(popcount(g) for g in self.ground_sets)


def build_ground_sets(kd: KLDecomposition) -> GroundSetFamily:
    scope = kd.scope_mask
    raw = {}
    for y in range(len(scope)):
        for z in range(y, len(scope)):
            raw[(y, z)] = scope[y] | scope[z]
    canonical = sorted(set(raw.values()), key=lambda m: (popcount(m), m))
    ids = {m: i for i, m in enumerate(canonical)}
    pairs = {yz: ids[m] for yz, m in raw.items()}
    return GroundSetFamily(tuple(canonical), pairs)


# ------------------------------------------------------------------ PACE I/O


def write_td(td: TreeDecomposition, n: int) -> str:
    """PACE 2017 ``.td`` text; bags numbered from 1, graph vertices written 1-based."""
    lines = [f"s td {len(td.bags)} {td.width + 1} {n}"]
    root = td.root
    if root != 0:
        lines.append(f"c root {root + 1}")
    for i, bag in enumerate(td.bags):
        lines.append(" ".join(["b", str(i + 1)] + [str(v + 1) for v in sorted(bag)]))
    for i, p in enumerate(td.parent):
        if p != -1:
            lines.append(f"{p + 1} {i + 1}")
    return "\n".join(lines) + "\n"


def parse_td(text: str) -> tuple[TreeDecomposition, int]:
    """Parse a PACE ``.td`` file; returns the decomposition (0-based) and declared ``n``."""
    header = None
    bags: dict[int, frozenset[int]] = {}
    edges: list[tuple[int, int]] = []
    root = 1
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "c":
            if len(parts) == 3 and parts[1] == "root":
                root = int(parts[2])
            continue
        if parts[0] == "s":
            if len(parts) != 5 or parts[1] != "td":
                raise DecompositionError(f"line {lineno}: malformed header")
            header = tuple(int(p) for p in parts[2:])
        elif parts[0] == "b":
            if header is None:
                raise DecompositionError(f"line {lineno}: bag before header")
            bid = int(parts[1])
            if not 1 <= bid <= header[0] or bid in bags:
                raise DecompositionError(f"line {lineno}: bad or repeated bag id {bid}")
            verts = [int(v) - 1 for v in parts[2:]]
            if any(not 0 <= v < header[2] for v in verts):
                raise DecompositionError(f"line {lineno}: vertex out of range")
            bags[bid] = frozenset(verts)
        else:
            if header is None or len(parts) != 2:
                raise DecompositionError(f"line {lineno}: malformed tree edge")
            edges.append((int(parts[0]), int(parts[1])))
    if header is None:
        raise DecompositionError("missing 's td' header")
    nbags, _, n = header
    if len(bags) != nbags:
        raise DecompositionError(f"header declares {nbags} bags, found {len(bags)}")
    if len(edges) != nbags - 1:
        raise DecompositionError(f"expected {nbags - 1} tree edges, found {len(edges)}")
    if not 1 <= root <= nbags:
        raise DecompositionError(f"root bag {root} out of range")
    ordered = [bags[i + 1] for i in range(nbags)]
    td = _rooted(ordered, [(a - 1, b - 1) for a, b in edges], root - 1)
    return td, n
