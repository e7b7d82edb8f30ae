"""Directed communication topologies and crash-resilience detectability checks.

Nodes are labeled 1..n. An edge (j, i) means "j sends to i"; self-loops are
implicit (every agent always hears itself) and never stored. The central
object is the *reduced graph*: what survives after every node drops up to f
of its in-links and up to f sinks of the resulting graph are deleted. A
topology tolerates f crashes exactly when every reduced graph keeps a single
source component, and that structural test is equivalent to a quantifier over
two-sided partitions; both routes are implemented and cross-asserted.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Mapping

import numpy as np

DEFAULT_ENUMERATION_CAP = 1_000_000
PARTITION_NODE_LIMIT = 12
_SCAN_CHUNK = 1 << 15


class BudgetExceededError(RuntimeError):
    """An enumeration would exceed its configured candidate cap."""


class EquivalenceViolationError(AssertionError):
    """Independent detectability routes disagree: implementation defect."""


@dataclass(frozen=True)
class DirectedGraph:
    """Static directed topology on nodes 1..n without explicit self-loops."""

    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"need at least one node, got n={self.n}")
        for j, i in self.edges:
            if not (1 <= j <= self.n and 1 <= i <= self.n):
                raise ValueError(f"edge ({j}, {i}) outside 1..{self.n}")
            if j == i:
                raise ValueError(f"self-loop ({j}, {i}) is implicit; do not list it")

    @classmethod
    def from_edge_list(cls, n: int, edges: Iterable[tuple[int, int]]) -> DirectedGraph:
        return cls(n=n, edges=frozenset((int(j), int(i)) for j, i in edges))

    @classmethod
    def complete(cls, n: int) -> DirectedGraph:
        return cls.from_edge_list(n, ((j, i) for j in range(1, n + 1)
                                      for i in range(1, n + 1) if j != i))

    @classmethod
    def cycle(cls, n: int) -> DirectedGraph:
        return cls.from_edge_list(n, ((i, i % n + 1) for i in range(1, n + 1)))

    @classmethod
    def from_dict(cls, payload: Mapping) -> DirectedGraph:
        """Parse {"n": int, "edges": [[j, i], ...]}; rejects duplicates and self-loops."""
        n = int(payload["n"])
        raw = payload.get("edges", [])
        seen: set[tuple[int, int]] = set()
        for item in raw:
            j, i = int(item[0]), int(item[1])
            if (j, i) in seen:
                raise ValueError(f"duplicate edge ({j}, {i})")
            seen.add((j, i))
        return cls(n=n, edges=frozenset(seen))

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_json(cls, text: str) -> DirectedGraph:
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @cached_property
    def nodes(self) -> frozenset[int]:
        return frozenset(range(1, self.n + 1))

    @cached_property
    def in_neighbors(self) -> dict[int, frozenset[int]]:
        acc: dict[int, set[int]] = {i: set() for i in range(1, self.n + 1)}
        for j, i in self.edges:
            acc[i].add(j)
        return {i: frozenset(s) for i, s in acc.items()}

    @cached_property
    def out_neighbors(self) -> dict[int, frozenset[int]]:
        acc: dict[int, set[int]] = {i: set() for i in range(1, self.n + 1)}
        for j, i in self.edges:
            acc[j].add(i)
        return {i: frozenset(s) for i, s in acc.items()}

    @cached_property
    def max_in_degree(self) -> int:
        return max(len(self.in_neighbors[i]) for i in range(1, self.n + 1))

    @cached_property
    def min_in_degree(self) -> int:
        return min(len(self.in_neighbors[i]) for i in range(1, self.n + 1))

    def influence_floor(self) -> Fraction:
        """Smallest positive weight any update row can assign: 1/(1 + max in-degree)."""
        return Fraction(1, 1 + self.max_in_degree)


@dataclass(frozen=True)
class SourceDecomposition:
    """Strongly connected components plus the ones with no incoming edge."""

    components: tuple[frozenset[int], ...]
    source_components: tuple[frozenset[int], ...]

    @property
    def unique_source(self) -> bool:
        return len(self.source_components) == 1


def _tarjan_components(nodes: list[int], out: dict[int, list[int]]) -> list[frozenset[int]]:
    # Iterative Tarjan; recursion depth would be unsafe for long chains.
    index_of: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    components: list[frozenset[int]] = []
    counter = 0

    for root in nodes:
        if root in index_of:
            continue
        work: list[tuple[int, Iterator[int]]] = [(root, iter(out[root]))]
        index_of[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index_of:
                    index_of[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(out[w])))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index_of[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index_of[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                components.append(frozenset(comp))
    return components


def source_decomposition(nodes: Iterable[int],
                         edges: Iterable[tuple[int, int]]) -> SourceDecomposition:
    """SCCs of an arbitrary node/edge set and the components with no inbound edge."""
    node_list = sorted(set(nodes))
    node_set = set(node_list)
    out: dict[int, list[int]] = {v: [] for v in node_list}
    edge_list = []
    for j, i in edges:
        if j not in node_set or i not in node_set:
            raise ValueError(f"edge ({j}, {i}) references a missing node")
        out[j].append(i)
        edge_list.append((j, i))
    for v in node_list:
        out[v].sort()
    comps = _tarjan_components(node_list, out)
    comp_of = {v: k for k, comp in enumerate(comps) for v in comp}
    has_inbound = [False] * len(comps)
    for j, i in edge_list:
        if comp_of[j] != comp_of[i]:
            has_inbound[comp_of[i]] = True
    ordered = sorted(comps, key=min)
    sources = tuple(c for c in ordered if not has_inbound[comp_of[min(c)]])
    return SourceDecomposition(components=tuple(ordered), source_components=sources)


def strongly_connected_components(g: DirectedGraph) -> SourceDecomposition:
    return source_decomposition(g.nodes, g.edges)


@dataclass(frozen=True)
class ReducedGraph:
    """Survivor of dropping <=f in-links per node, then <=f sinks of the result.

    Identity for deduplication is the surviving (nodes, edges) pair; the
    removal metadata records one way of producing it.
    """

    base: DirectedGraph
    f: int
    removed_in_links: tuple[tuple[int, frozenset[int]], ...]
    removed_sinks: frozenset[int]
    nodes: frozenset[int]
    edges: frozenset[tuple[int, int]]

    @classmethod
    def build(cls, base: DirectedGraph, f: int,
              removed_in_links: Mapping[int, Iterable[int]],
              removed_sinks: Iterable[int] = ()) -> ReducedGraph:
        removal = {i: frozenset(removed_in_links.get(i, ())) for i in base.nodes}
        for i, dropped in removal.items():
            if not dropped <= base.in_neighbors[i]:
                raise ValueError(f"node {i} cannot drop non-in-links {sorted(dropped)}")
            if len(dropped) > f:
                raise ValueError(f"node {i} drops {len(dropped)} in-links, budget is {f}")
        kept = frozenset((j, i) for j, i in base.edges if j not in removal[i])
        has_out = {j for j, _ in kept}
        sinks = base.nodes - has_out
        removed = frozenset(int(v) for v in removed_sinks)
        if not removed <= sinks:
            raise ValueError(f"{sorted(removed - sinks)} are not sinks after link removal")
        if len(removed) > f:
            raise ValueError(f"removing {len(removed)} sinks, budget is {f}")
        if removed == base.nodes:
            raise ValueError("sink removal may not delete every node")
        nodes = base.nodes - removed
        edges = frozenset((j, i) for j, i in kept if j in nodes and i in nodes)
        return cls(base=base, f=f,
                   removed_in_links=tuple(sorted((i, removal[i]) for i in removal)),
                   removed_sinks=removed, nodes=nodes, edges=edges)

    @property
    def key(self) -> tuple[frozenset[int], frozenset[tuple[int, int]]]:
        return (self.nodes, self.edges)

    def source_decomposition(self) -> SourceDecomposition:
        return source_decomposition(self.nodes, self.edges)

    def adjacency(self) -> np.ndarray:
        """0/1 matrix with H[i-1, j-1] = 1 iff j feeds i, including implicit self-loops."""
        n = self.base.n
        h = np.zeros((n, n), dtype=np.int64)
        for v in self.nodes:
            h[v - 1, v - 1] = 1
        for j, i in self.edges:
            h[i - 1, j - 1] = 1
        return h


def _link_removal_counts(g: DirectedGraph, f: int) -> list[int]:
    return [sum(math.comb(len(g.in_neighbors[i]), k)
                for k in range(min(f, len(g.in_neighbors[i])) + 1))
            for i in range(1, g.n + 1)]


def enumerate_reduced_graphs(g: DirectedGraph, f: int,
                             max_candidates: int = DEFAULT_ENUMERATION_CAP,
                             ) -> tuple[ReducedGraph, ...]:
    """All distinct reduced graphs, deduplicated on (surviving nodes, edges).

    Raises BudgetExceededError when the link-removal choice space alone
    exceeds max_candidates.
    """
    if f < 0:
        raise ValueError("f must be nonnegative")
    total = math.prod(_link_removal_counts(g, f))
    if total > max_candidates:
        raise BudgetExceededError(
            f"{total} link-removal candidates exceed the cap {max_candidates}")

    per_node: list[list[frozenset[int]]] = []
    for i in range(1, g.n + 1):
        nbrs = sorted(g.in_neighbors[i])
        opts = [frozenset(c)
                for k in range(min(f, len(nbrs)) + 1)
                for c in itertools.combinations(nbrs, k)]
        per_node.append(opts)

    seen: dict[tuple, ReducedGraph] = {}
    for choice in itertools.product(*per_node):
        removal = {i + 1: choice[i] for i in range(g.n)}
        kept = [(j, i) for j, i in g.edges if j not in removal[i]]
        has_out = {j for j, _ in kept}
        sinks = sorted(g.nodes - has_out)
        for size in range(min(f, len(sinks)) + 1):
            if size == g.n:
                continue  # never delete every node
            for subset in itertools.combinations(sinks, size):
                dropped = frozenset(subset)
                nodes = g.nodes - dropped
                edges = frozenset((j, i) for j, i in kept
                                  if j in nodes and i in nodes)
                key = (nodes, edges)
                if key not in seen:
                    seen[key] = ReducedGraph(
                        base=g, f=f,
                        removed_in_links=tuple(sorted(removal.items())),
                        removed_sinks=dropped, nodes=nodes, edges=edges)
    ordered = sorted(seen.values(),
                     key=lambda rg: (sorted(rg.nodes), sorted(rg.edges)))
    return tuple(ordered)


def _maximal_removal_scan(g: DirectedGraph, f: int,
                          max_candidates: int) -> tuple[bool, ReducedGraph | None]:
    """Unique-source test over all maximal link-removal patterns (vectorized).

    Source-component uniqueness is monotone in the edge set and insensitive to
    sink removal, so scanning the edge-minimal patterns decides the property
    for every reduced graph.
    """
    n = g.n
    combos: list[list[tuple[int, ...]]] = []
    masks: list[np.ndarray] = []
    for i in range(1, n + 1):
        nbrs = sorted(g.in_neighbors[i])
        k = min(f, len(nbrs))
        node_combos = list(itertools.combinations(nbrs, k))
        combos.append(node_combos)
        full = 0
        for j in nbrs:
            full |= 1 << (j - 1)
        vals = []
        for combo in node_combos:
            m = full
            for j in combo:
                m &= ~(1 << (j - 1))
            vals.append(m)
        masks.append(np.asarray(vals, dtype=np.uint32))
    counts = [len(c) for c in combos]
    total = math.prod(counts)
    if total > max_candidates:
        raise BudgetExceededError(
            f"{total} maximal-removal candidates exceed the cap {max_candidates}")

    strides = [1] * n
    for i in range(n - 2, -1, -1):
        strides[i] = strides[i + 1] * counts[i + 1]
    steps = max(1, (max(n - 1, 1)).bit_length())

    for start in range(0, total, _SCAN_CHUNK):
        idx = np.arange(start, min(start + _SCAN_CHUNK, total), dtype=np.int64)
        reach = np.empty((idx.size, n), dtype=np.uint32)
        for i in range(n):
            sel = (idx // strides[i]) % counts[i]
            reach[:, i] = masks[i][sel] | np.uint32(1 << i)
        # reach[c, i] = bitmask of nodes with a path into i; squared each step
        for _ in range(steps):
            grown = reach.copy()
            for i in range(n):
                col = reach[:, i]
                for u in range(n):
                    if u == i:
                        continue
                    hit = (col >> np.uint32(u)) & np.uint32(1)
                    grown[:, i] |= reach[:, u] * hit
            reach = grown
        everywhere = reach[:, 0].copy()
        for i in range(1, n):
            everywhere &= reach[:, i]
        bad = np.nonzero(everywhere == 0)[0]
        if bad.size:
            c = int(idx[bad[0]])
            removal = {i + 1: frozenset(combos[i][(c // strides[i]) % counts[i]])
                       for i in range(n)}
            witness = ReducedGraph.build(g, f, removal)
            return False, witness
    return True, None


def check_condition1(g: DirectedGraph, f: int,
                     max_candidates: int = DEFAULT_ENUMERATION_CAP,
                     ) -> tuple[bool, ReducedGraph | None]:
    """True iff every reduced graph has exactly one source component.

    On failure the witness is a reduced graph with two or more source
    components (no sinks removed; sink removal cannot affect uniqueness).
    """
    if f < 0:
        raise ValueError("f must be nonnegative")
    return _maximal_removal_scan(g, f, max_candidates)


def check_condition2(g: DirectedGraph, f: int,
                     node_limit: int = PARTITION_NODE_LIMIT,
                     ) -> tuple[bool, tuple[frozenset[int], frozenset[int], frozenset[int]] | None]:
    """Partition route: every two-sided split is bridged by f+1 outside in-links.

    For each partition of the nodes into nonempty L, R and a rest C, some node
    in L must have at least f+1 in-links from R union C, or some node in R at
    least f+1 from L union C. Returns a violating (L, R, C) as witness.
    """
    if f < 0:
        raise ValueError("f must be nonnegative")
    n = g.n
    if n > node_limit:
        raise BudgetExceededError(
            f"partition scan is 3^{n}; limit is {node_limit} nodes")
    in_mask = [0] * (n + 1)
    for i in range(1, n + 1):
        m = 0
        for j in g.in_neighbors[i]:
            m |= 1 << (j - 1)
        in_mask[i] = m
    need = f + 1
    for assign in itertools.product((0, 1, 2), repeat=n):
        left = right = rest = 0
        for i, a in enumerate(assign):
            if a == 0:
                left |= 1 << i
            elif a == 1:
                right |= 1 << i
            else:
                rest |= 1 << i
        if left == 0 or right == 0:
            continue
        ok = False
        opp = right | rest
        for i in range(1, n + 1):
            if (left >> (i - 1)) & 1 and (in_mask[i] & opp).bit_count() >= need:
                ok = True
                break
        if not ok:
            opp = left | rest
            for i in range(1, n + 1):
                if (right >> (i - 1)) & 1 and (in_mask[i] & opp).bit_count() >= need:
                    ok = True
                    break
        if not ok:
            to_set = lambda m: frozenset(i + 1 for i in range(n) if (m >> i) & 1)
            return False, (to_set(left), to_set(right), to_set(rest))
    return True, None


def random_link_removal_subgraph(g: DirectedGraph, f: int, rng: np.random.Generator,
                                 ) -> tuple[frozenset[int], frozenset[tuple[int, int]]]:
    """Sample one <=f-per-node in-link removal pattern; returns (nodes, kept edges)."""
    kept: set[tuple[int, int]] = set()
    for i in range(1, g.n + 1):
        nbrs = sorted(g.in_neighbors[i])
        k = int(rng.integers(0, min(f, len(nbrs)) + 1))
        dropped = set(rng.choice(nbrs, size=k, replace=False)) if k else set()
        kept.update((j, i) for j in nbrs if j not in dropped)
    return g.nodes, frozenset(kept)


@dataclass(frozen=True)
class DetectabilityReport:
    """Structural crash-tolerance summary for a (graph, f) pair."""

    n: int
    f: int
    condition1_holds: bool
    condition2_holds: bool
    chi: int                       # number of distinct reduced graphs
    gamma: int                     # minimum source-component size
    xi: Fraction                   # influence floor 1/(1 + max in-degree)
    witness: object = None

    def to_dict(self) -> dict:
        witness = self.witness
        if isinstance(witness, ReducedGraph):
            witness = {"nodes": sorted(witness.nodes),
                       "edges": [list(e) for e in sorted(witness.edges)]}
        elif isinstance(witness, tuple):
            witness = {"L": sorted(witness[0]), "R": sorted(witness[1]),
                       "C": sorted(witness[2])}
        return {
            "n": self.n, "f": self.f,
            "condition1_holds": self.condition1_holds,
            "condition2_holds": self.condition2_holds,
            "chi": self.chi, "gamma": self.gamma,
            "xi": str(self.xi), "xi_float": float(self.xi),
            "witness": witness,
        }


def detectability_report(g: DirectedGraph, f: int,
                         max_candidates: int = DEFAULT_ENUMERATION_CAP,
                         ) -> DetectabilityReport:
    """Full enumeration route plus both condition checks, cross-asserted.

    Raises EquivalenceViolationError if any two routes disagree (that would be
    an implementation defect, not a property of the input).
    """
    reduced = enumerate_reduced_graphs(g, f, max_candidates=max_candidates)
    literal_unique = True
    witness: object = None
    gamma = g.n
    for rg in reduced:
        decomp = rg.source_decomposition()
        if not decomp.unique_source and literal_unique:
            literal_unique = False
            witness = rg
        gamma = min(gamma, min(len(c) for c in decomp.source_components))
    fast_holds, fast_witness = check_condition1(g, f, max_candidates=max_candidates)
    c2_holds, c2_witness = check_condition2(g, f)
    if not (literal_unique == fast_holds == c2_holds):
        raise EquivalenceViolationError(
            f"detectability routes disagree: literal={literal_unique} "
            f"maximal-scan={fast_holds} partition={c2_holds}")
    if witness is None:
        witness = fast_witness if fast_witness is not None else c2_witness
    return DetectabilityReport(
        n=g.n, f=f,
        condition1_holds=literal_unique,
        condition2_holds=c2_holds,
        chi=len(reduced), gamma=gamma,
        xi=g.influence_floor(),
        witness=witness)
