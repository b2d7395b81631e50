"""Sparsest-cut instances, cuts, and the ``p sc`` text format.

An instance is a supply graph and a demand graph on the node set
``{0, ..., n-1}``, both carrying positive integer weights.  The sparsity of a
node subset ``S`` is

    phi(S) = cap(delta_G(S)) / dem(delta_D(S))

and is undefined (``None``) when no demand edge crosses ``S``.

File format (line oriented, ``#`` or ``c`` starts a comment)::

    p sc <n> <m_G> <m_D>
    s <u> <v> <cap>
    d <u> <v> <dem>
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .bits import mask_of


class InstanceError(ValueError):
    """Invalid instance data or malformed instance file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


Edge = tuple[int, int, int]


def _normalize(edges: Iterable[Edge]) -> tuple[Edge, ...]:
    return tuple(sorted((min(u, v), max(u, v), w) for u, v, w in edges))


def _check_edges(n: int, edges: tuple[Edge, ...], kind: str) -> None:
    seen = set()
    for u, v, w in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise InstanceError(f"{kind} edge ({u}, {v}) has endpoint outside 0..{n - 1}")
        if u == v:
            raise InstanceError(f"{kind} edge ({u}, {v}) is a self-loop")
        if (u, v) in seen:
            raise InstanceError(f"duplicate {kind} edge ({u}, {v})")
        if not isinstance(w, int) or w < 1:
            raise InstanceError(f"{kind} edge ({u}, {v}) has nonpositive weight {w}")
        seen.add((u, v))


@dataclass(frozen=True)
class Instance:
    n: int
    supply: tuple[Edge, ...]
    demand: tuple[Edge, ...]
    _supply_masks: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)
    _demand_masks: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        supply = _normalize(self.supply)
        demand = _normalize(self.demand)
        object.__setattr__(self, "supply", supply)
        object.__setattr__(self, "demand", demand)
        if self.n < 1:
            raise InstanceError("instance needs at least one node")
        _check_edges(self.n, supply, "supply")
        _check_edges(self.n, demand, "demand")
        if not demand:
            raise InstanceError("instance has no demand edges")
        object.__setattr__(self, "_supply_masks", tuple(((1 << u) | (1 << v), c) for u, v, c in supply))
        object.__setattr__(self, "_demand_masks", tuple(((1 << u) | (1 << v), d) for u, v, d in demand))

    @property
    def nodes(self) -> range:
        return range(self.n)

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    def supply_adjacency(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {v: set() for v in self.nodes}
        for u, v, _ in self.supply:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def crossing(self, members: int) -> tuple[int, int]:
        """Crossing capacity and crossing demand of the node bitmask ``members``."""
        cap = 0
        for e, c in self._supply_masks:
            if (members & e) not in (0, e):
                cap += c
        dem = 0
        for e, d in self._demand_masks:
            if (members & e) not in (0, e):
                dem += d
        return cap, dem


@dataclass(frozen=True)
class Cut:
    members: frozenset[int]
    crossing_capacity: int
    crossing_demand: int

    @classmethod
    def of(cls, inst: Instance, members: Iterable[int]) -> "Cut":
        members = frozenset(members)
        cap, dem = inst.crossing(mask_of(members))
        return cls(members, cap, dem)

    @property
    def phi(self) -> Fraction | None:
        if self.crossing_demand == 0:
            return None
        return Fraction(self.crossing_capacity, self.crossing_demand)

    def is_proper(self, inst: Instance) -> bool:
        return 0 < len(self.members) < inst.n

    def matches(self, inst: Instance) -> bool:
        return Cut.of(inst, self.members) == self


def sparsity(inst: Instance, members: Iterable[int] | int) -> Fraction | None:
    """Exact sparsity of a nonempty proper node subset; ``None`` if no demand is cut."""
    mask = members if isinstance(members, int) else mask_of(members)
    if mask & ~inst.full_mask:
        raise InstanceError("subset contains nodes outside the instance")
    if mask == 0 or mask == inst.full_mask:
        raise InstanceError("sparsity needs a nonempty proper subset")
    cap, dem = inst.crossing(mask)
    if dem == 0:
        return None
    return Fraction(cap, dem)


def parse_instance(text: str) -> Instance:
    header = None
    supply: list[Edge] = []
    demand: list[Edge] = []
    seen: dict[str, dict[tuple[int, int], int]] = {"s": {}, "d": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("c"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "p":
            if header is not None:
                raise InstanceError("second header line", lineno)
            if len(parts) != 5 or parts[1] != "sc":
                raise InstanceError("malformed header, expected 'p sc <n> <m_G> <m_D>'", lineno)
            try:
                header = tuple(int(p) for p in parts[2:])
            except ValueError:
                raise InstanceError("non-integer header field", lineno) from None
            if header[0] < 1 or min(header[1:]) < 0:
                raise InstanceError("header counts out of range", lineno)
            continue
        if tag not in ("s", "d"):
            raise InstanceError(f"unknown line tag {tag!r}", lineno)
        if header is None:
            raise InstanceError("edge line before header", lineno)
        if len(parts) != 4:
            raise InstanceError(f"malformed edge line, expected '{tag} <u> <v> <weight>'", lineno)
        try:
            u, v, w = (int(p) for p in parts[1:])
        except ValueError:
            raise InstanceError("non-integer edge field", lineno) from None
        n = header[0]
        if not (0 <= u < n and 0 <= v < n):
            raise InstanceError(f"node id out of range 0..{n - 1}", lineno)
        if u == v:
            raise InstanceError(f"self-loop at node {u}", lineno)
        if w < 1:
            raise InstanceError(f"nonpositive weight {w}", lineno)
        key = (min(u, v), max(u, v))
        if key in seen[tag]:
            raise InstanceError(f"duplicate edge {key} (first on line {seen[tag][key]})", lineno)
        seen[tag][key] = lineno
        (supply if tag == "s" else demand).append((u, v, w))
    if header is None:
        raise InstanceError("missing 'p sc' header")
    n, m_g, m_d = header
    if len(supply) != m_g:
        raise InstanceError(f"header declares {m_g} supply edges, found {len(supply)}")
    if len(demand) != m_d:
        raise InstanceError(f"header declares {m_d} demand edges, found {len(demand)}")
    if m_d == 0:
        raise InstanceError("instance has no demand edges")
    return Instance(n, tuple(supply), tuple(demand))


def serialize_instance(inst: Instance) -> str:
    lines = [f"p sc {inst.n} {len(inst.supply)} {len(inst.demand)}"]
    lines += [f"s {u} {v} {c}" for u, v, c in inst.supply]
    lines += [f"d {u} {v} {d}" for u, v, d in inst.demand]
    return "\n".join(lines) + "\n"


def read_instance(path) -> Instance:
    with open(path) as fh:
        return parse_instance(fh.read())


def merge_parallel(edges: Iterable[Edge]) -> list[Edge]:
    """Sum the weights of parallel edges; the explicit preprocessing step the parser refuses to do."""
    acc: dict[tuple[int, int], int] = {}
    for u, v, w in edges:
        key = (min(u, v), max(u, v))
        acc[key] = acc.get(key, 0) + w
    return [(u, v, w) for (u, v), w in sorted(acc.items())]
