"""Independent brute-force oracles for cross-checking the package.

Everything here is deliberately naive and written without reference to the
package internals: literal set-based enumeration, reachability by repeated
expansion, and plain-float probability math. Small n only.
"""

from __future__ import annotations

import itertools
import math


def reach_sets(nodes, edges):
    """node -> set of nodes reachable from it (including itself)."""
    out = {v: set() for v in nodes}
    for j, i in edges:
        out[j].add(i)
    reach = {v: {v} | out[v] for v in nodes}
    changed = True
    while changed:
        changed = False
        for v in nodes:
            extra = set()
            for w in reach[v]:
                extra |= reach[w]
            if not extra <= reach[v]:
                reach[v] |= extra
                changed = True
    return reach


def components_and_sources(nodes, edges):
    """SCCs by mutual reachability; sources have no inbound edge from outside."""
    nodes = set(nodes)
    reach = reach_sets(nodes, edges)
    comps = []
    assigned = set()
    for v in sorted(nodes):
        if v in assigned:
            continue
        comp = {w for w in nodes if w in reach[v] and v in reach[w]}
        comps.append(frozenset(comp))
        assigned |= comp
    comp_of = {v: c for c in comps for v in c}
    sources = []
    for c in comps:
        inbound = any(comp_of[j] is not c and i in c for j, i in edges)
        if not inbound:
            sources.append(c)
    return comps, sources


def brute_reduced_graphs(n, edges, f):
    """Every distinct reduced graph as a frozen (nodes, edges) pair.

    Removal pattern: each node drops any subset of its in-links of size <= f,
    then any subset of the sinks of the result, of size <= f and never all
    nodes, is deleted together with its incident edges.
    """
    edges = set(edges)
    nodes = frozenset(range(1, n + 1))
    in_links = {i: sorted(j for j, k in edges if k == i) for i in nodes}
    per_node = []
    for i in sorted(nodes):
        opts = []
        for k in range(min(f, len(in_links[i])) + 1):
            opts.extend(itertools.combinations(in_links[i], k))
        per_node.append(opts)
    found = set()
    for choice in itertools.product(*per_node):
        dropped_links = {(j, i + 1) for i, combo in enumerate(choice) for j in combo}
        kept = edges - dropped_links
        senders = {j for j, _ in kept}
        sinks = sorted(nodes - senders)
        for size in range(min(f, len(sinks)) + 1):
            if size == n:
                continue
            for subset in itertools.combinations(sinks, size):
                alive = nodes - set(subset)
                surv = frozenset((j, i) for j, i in kept if j in alive and i in alive)
                found.add((frozenset(alive), surv))
    return found


def brute_condition1(n, edges, f):
    """Literal quantifier: every reduced graph has exactly one source component."""
    for alive, surv in brute_reduced_graphs(n, edges, f):
        _, sources = components_and_sources(alive, surv)
        if len(sources) != 1:
            return False
    return True


def brute_condition2(n, edges, f):
    """Literal partition quantifier over all (L, R, C) with L, R nonempty."""
    nodes = list(range(1, n + 1))
    in_links = {i: {j for j, k in edges if k == i} for i in nodes}
    for assign in itertools.product((0, 1, 2), repeat=n):
        L = {nodes[i] for i in range(n) if assign[i] == 0}
        R = {nodes[i] for i in range(n) if assign[i] == 1}
        C = {nodes[i] for i in range(n) if assign[i] == 2}
        if not L or not R:
            continue
        ok = any(len(in_links[i] & (R | C)) >= f + 1 for i in L) or \
             any(len(in_links[i] & (L | C)) >= f + 1 for i in R)
        if not ok:
            return False
    return True


def brute_gamma(n, edges, f):
    """Smallest source-component size over every distinct reduced graph."""
    best = n
    for alive, surv in brute_reduced_graphs(n, edges, f):
        _, sources = components_and_sources(alive, surv)
        best = min(best, min(len(c) for c in sources))
    return best


def kl(p, q):
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q))


def bayes_log_posterior(log_prior, per_step_log_likelihoods):
    """Batch Bayes: normalize(log prior + sum of per-step log-likelihood rows)."""
    m = len(log_prior)
    acc = list(log_prior)
    for row in per_step_log_likelihoods:
        acc = [a + b for a, b in zip(acc, row)]
    mx = max(acc)
    z = mx + math.log(sum(math.exp(a - mx) for a in acc))
    return [a - z for a in acc]


def geometric_tail_sum_direct(xi_float, n, chi, f, tiny=1e-15, max_terms=10_000_000):
    """Direct summation of min(1, (1-xi^(n chi))^(floor(u/(n chi)) - f)); small cases only."""
    block = n * chi
    base = 1.0 - xi_float ** block
    total = 0.0
    u = 0
    while u < max_terms:
        term = min(1.0, base ** (u // block - f))
        if term < tiny:
            break
        total += term
        u += 1
    else:
        raise RuntimeError("direct summation did not terminate")
    return total
