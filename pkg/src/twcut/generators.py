"""Random bounded-treewidth instances for tests and experiments."""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

import networkx as nx

from .decomposition import TreeDecomposition, heuristic_tree_decomposition
from .instance import Instance


@dataclass(frozen=True)
class CorpusConfig:
    count: int = 100
    n_min: int = 8
    n_max: int = 14
    k_min: int = 1
    k_max: int = 3
    keep: float = 0.6
    demand_min: int = 2
    demand_max: int = 5
    max_weight: int = 5
    seed: int = 2024
    max_width: int | None = 3  # reject instances whose min-fill width exceeds this


def partial_ktree_edges(n: int, k: int, rng: random.Random, keep: float = 0.6) -> list[tuple[int, int]]:
    """Edges of a connected random partial k-tree on ``n`` nodes (treewidth at most ``k``)."""
    k = min(k, n - 1)
    edges = set(itertools.combinations(range(k + 1), 2))
    cliques = [tuple(range(k + 1))]
    for v in range(k + 1, n):
        base = rng.choice(cliques)
        edges.update((u, v) for u in base)
        cliques.extend(tuple(sorted([x for x in base if x != drop] + [v])) for drop in base)
    order = sorted(edges)
    rng.shuffle(order)
    g = nx.Graph(order)
    out = {tuple(sorted(e)) for e in nx.minimum_spanning_tree(g).edges}
    out.update(e for e in order if rng.random() < keep)
    return sorted(out)


def random_instance(rng: random.Random, n: int, k: int, keep: float = 0.6,
                    num_demands: int = 3, max_weight: int = 5) -> Instance:
    supply = [(u, v, rng.randint(1, max_weight)) for u, v in partial_ktree_edges(n, k, rng, keep)]
    pairs: set[tuple[int, int]] = set()
    limit = n * (n - 1) // 2
    while len(pairs) < min(num_demands, limit):
        a, b = rng.sample(range(n), 2)
        pairs.add((min(a, b), max(a, b)))
    demand = [(u, v, rng.randint(1, max_weight)) for u, v in sorted(pairs)]
    return Instance(n, tuple(supply), tuple(demand))


def corpus(cfg: CorpusConfig = CorpusConfig()) -> list[Instance]:
    rng = random.Random(cfg.seed)
    out = []
    while len(out) < cfg.count:
        n = rng.randint(cfg.n_min, cfg.n_max)
        k = rng.randint(cfg.k_min, cfg.k_max)
        d = rng.randint(cfg.demand_min, cfg.demand_max)
        inst = random_instance(rng, n, k, cfg.keep, d, cfg.max_weight)
        if cfg.max_width is None or heuristic_tree_decomposition(inst).width <= cfg.max_width:
            out.append(inst)
    return out


def random_tree_decomposition(rng: random.Random, num_bags: int, width: int, n: int | None = None) -> tuple[TreeDecomposition, Instance]:
    """A random valid decomposition plus a supply graph it decomposes.

    Bags are grown along a random tree; each node's bag set is a connected
    subtree by construction.  The supply graph gets one edge per node pair
    sharing a bag (so every bag is a clique, the worst case for balancing).
    """
    parent = [-1] + [rng.randrange(i) for i in range(1, num_bags)]
    bags: list[set[int]] = []
    next_node = 0
    for i in range(num_bags):
        size = rng.randint(1, width + 1)
        if i == 0:
            bag = set(range(size))
            next_node = size
        else:
            par = sorted(bags[parent[i]])
            keep = rng.randint(1 if num_bags > 1 else 0, min(len(par), size))
            bag = set(rng.sample(par, keep))
            while len(bag) < size:
                bag.add(next_node)
                next_node += 1
        bags.append(bag)
    edges = {(u, v) for b in bags for u, v in itertools.combinations(sorted(b), 2)}
    n_nodes = next_node
    if not edges:
        edges = {(0, 1)}
        n_nodes = max(n_nodes, 2)
        bags[0] |= {0, 1}
    inst = Instance(n_nodes, tuple((u, v, 1) for u, v in sorted(edges)), ((0, n_nodes - 1, 1),))
    td = TreeDecomposition(tuple(frozenset(b) for b in bags), tuple(parent))
    return td, inst
