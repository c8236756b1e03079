"""Brute-force references: exhaustive enumeration of short strings.

Deliberately slow and simple. The test-suite checks the dynamic-programming
code against these functions, so nothing here may call into ``intersect``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import defaultdict
from collections.abc import Sequence
from typing import NamedTuple

from .grammar import Cfg, DerivationTree, linearize
from .intersect import NextSymbolDistribution, ZeroMassError
from .wcfg import Wcfg

MAX_ITEMS = 2_000_000


class WeightedString(NamedTuple):
    seq: tuple[str, ...]
    weight: float


class BruteConditional(NamedTuple):
    dist: NextSymbolDistribution
    tail_mass: float
    bound: float


class ExplosionError(RuntimeError):
    pass


def _min_lengths(g: Wcfg) -> dict[str, float]:
    best: dict[str, float] = defaultdict(lambda: math.inf)
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            n = sum(1 if x in g.terminals else best[x] for x in r.rhs)
            if n < best[r.lhs]:
                best[r.lhs] = n
                changed = True
    return best


def enumerate_wcfg(g: Wcfg, max_len: int, cap: int = MAX_ITEMS) -> list[WeightedString]:
    """Every string of length <= max_len with its weight summed over all derivations.

    Leftmost expansion, smallest lower bound on final length first.
    """
    minlen = _min_lengths(g)
    totals: dict[tuple[str, ...], list[float]] = defaultdict(list)
    tick = itertools.count()
    # item: (length bound, tie, emitted, pending symbols with the leftmost last, weight)
    heap = [(minlen[g.start], next(tick), (), (g.start,), 1.0)]
    popped = 0
    while heap:
        _, _, emitted, pending, w = heapq.heappop(heap)
        popped += 1
        if popped > cap:
            raise ExplosionError(f"enumeration exceeded {cap} items")
        # shift leading terminals
        while pending and pending[-1] in g.terminals:
            emitted = emitted + (pending[-1],)
            pending = pending[:-1]
        if not pending:
            totals[emitted].append(w)
            continue
        top, rest = pending[-1], pending[:-1]
        base = len(emitted) + sum(1 if x in g.terminals else minlen[x] for x in rest)
        for r in g.by_lhs.get(top, ()):
            if r.weight == 0:
                continue
            bound = base + sum(1 if x in g.terminals else minlen[x] for x in r.rhs)
            if bound > max_len:
                continue
            heapq.heappush(heap, (bound, next(tick), emitted, rest + tuple(reversed(r.rhs)), w * r.weight))
    out = [WeightedString(s, math.fsum(ws)) for s, ws in totals.items()]
    out.sort(key=lambda x: (len(x.seq), x.seq))
    return out


def brute_conditional(
    g: Wcfg,
    prefix: Sequence[str],
    max_len: int,
    total: float,
    strings: Sequence[WeightedString] | None = None,
) -> BruteConditional:
    """Next-symbol distribution from enumerated mass ratios.

    ``total`` is the grammar's full mass; ``total - enumerated`` is the mass
    the truncation missed. ``bound`` = tail / enumerated prefix mass bounds the
    error of every component (and of ``end_prob``). ``strings`` may pass in
    ``enumerate_wcfg(g, max_len)`` when many prefixes share one grammar.
    """
    prefix = tuple(prefix)
    k = len(prefix)
    if strings is None:
        strings = enumerate_wcfg(g, max_len)
    enumerated = math.fsum(w for _, w in strings)
    tail = max(0.0, total - enumerated)
    after: dict[str, list[float]] = defaultdict(list)
    end = []
    for s, w in strings:
        if s[:k] != prefix:
            continue
        if len(s) == k:
            end.append(w)
        else:
            after[s[k]].append(w)
    mass = math.fsum(end) + sum(math.fsum(v) for v in after.values())
    if mass == 0:
        raise ZeroMassError(f"no enumerated string extends {prefix!r}")
    probs = {x: math.fsum(v) / mass for x, v in after.items() if math.fsum(v) > 0}
    return BruteConditional(NextSymbolDistribution(probs, math.fsum(end) / mass), tail, tail / mass)


def enumerate_trees(g: Cfg, max_nodes: int) -> list[DerivationTree]:
    """All derivation trees of a base grammar with at most ``max_nodes`` rule applications."""

    memo: dict[tuple[str, int], list] = {}

    def trees(nt: str, budget: int) -> list:
        if budget <= 0:
            return []
        key = (nt, budget)
        if key not in memo:
            memo[key] = [
                DerivationTree(rule.label, kids)
                for rule in g.by_lhs[nt]
                for kids in forests(rule.nonterminals, budget - 1)
            ]
        return memo[key]

    def forests(nts, budget: int):
        if not nts:
            yield ()
            return
        for t in trees(nts[0], budget):
            for rest in forests(nts[1:], budget - _size(t)):
                yield (t, *rest)

    return sorted(trees(g.start, max_nodes), key=lambda t: (_size(t), str(t)))


def _size(tree) -> int:
    return 1 + sum(_size(c) for c in tree.children)


def all_derivation_sequences(g: Cfg, max_len: int) -> list[tuple[str, ...]]:
    """All complete derivation sequences of a base grammar up to ``max_len`` labels."""

    return [linearize(t) for t in enumerate_trees(g, max_len)]
