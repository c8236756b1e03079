"""Grammar/automaton intersection, inside weights, normalization and prefix conditionals."""

from __future__ import annotations

import math
from collections import defaultdict, deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .wcfg import Pcfg, WRule, Wcfg
from .wfsa import Wfsa, prefix_automaton

TOL = 1e-12
MAX_ITER = 10000
OVERFLOW_GUARD = 1e12


class DivergenceError(ArithmeticError):
    """The inside fixed point is infinite or was not reached."""

    def __init__(self, message: str, nonterminals: Sequence[str], table: InsideTable):
        self.nonterminals = list(nonterminals)
        self.table = table
        super().__init__(f"{message}: {', '.join(self.nonterminals[:10])}")


class ZeroMassError(ValueError):
    """A query was made about a set of strings with total weight zero."""


@dataclass(frozen=True)
class InsideTable:
    values: Mapping[str, float]
    iterations: int
    converged: bool

    def __getitem__(self, nt: str) -> float:
        return self.values.get(nt, 0.0)


@dataclass(frozen=True)
class NextSymbolDistribution:
    probs: Mapping[str, float]
    end_prob: float

    def __getitem__(self, sym: str) -> float:
        return self.probs.get(sym, 0.0)

    def total(self) -> float:
        return math.fsum(self.probs.values()) + self.end_prob


def _state_name(nt: str, q: int, r: int) -> str:
    return f"{nt}[{q},{r}]"


def _first_sets(g: Wcfg) -> tuple[set[str], dict[str, set[str]]]:
    """Nullable nonterminals and, for each nonterminal, the terminals its strings can start with."""
    rules = [r for r in g.rules if r.weight > 0]
    nullable: set[str] = set()
    changed = True
    while changed:
        changed = False
        for r in rules:
            if r.lhs not in nullable and all(x in nullable for x in r.rhs):
                nullable.add(r.lhs)
                changed = True
    first: dict[str, set[str]] = defaultdict(set)
    changed = True
    while changed:
        changed = False
        for r in rules:
            acc = first[r.lhs]
            size = len(acc)
            for x in r.rhs:
                if x in g.terminals:
                    acc.add(x)
                    break
                acc |= first[x]
                if x not in nullable:
                    break
            changed |= len(acc) != size
    return nullable, first


def intersect(g: Wcfg, a: Wfsa) -> Wcfg:
    """Weighted Bar-Hillel construction, built top-down from the start symbol and trimmed.

    The result gives every string the product of its weight under ``g`` and
    under ``a``. The automaton's exit weights sit on the rules of a fresh
    start symbol.
    """
    if a.alphabet != g.terminals:
        raise ValueError("automaton alphabet differs from the grammar's terminals")
    reach = a.reachable()
    start = g.start + "'"
    rules: list[WRule] = []
    seen: set[tuple[str, int, int]] = set()
    agenda: deque[tuple[str, int, int]] = deque()
    nullable, first = _first_sets(g)
    # symbols leaving each state with positive weight
    leaving = [{s for s, outs in a.arcs.get(q, {}).items() if any(w > 0 for w, _ in outs)} for q in range(a.n_states)]

    def viable(nt: str, q: int) -> bool:
        # a span starting at q must begin with a symbol the automaton can read there
        return nt in nullable or not first[nt].isdisjoint(leaving[q])

    start_states: dict[str, list[int]] = {}

    def starts(sym: str) -> list[int]:
        # states, in increasing order, where a span of ``sym`` can begin
        hit = start_states.get(sym)
        if hit is None:
            ok = (lambda q: sym in leaving[q]) if sym in g.terminals else (lambda q: viable(sym, q))
            hit = start_states[sym] = [q for q in range(a.n_states) if ok(q)]
        return hit

    def visit(nt: str, q: int, r: int) -> str:
        key = (nt, q, r)
        if key not in seen:
            seen.add(key)
            agenda.append(key)
        return _state_name(nt, q, r)

    for r in range(a.n_states):
        e = a.exit(r)
        if e > 0 and r in reach[0] and viable(g.start, 0):
            rules.append(WRule(start, (visit(g.start, 0, r),), e))

    terminals = g.terminals
    arcs = a.arcs
    # per rule: weight and (is_terminal, symbol) for each right-hand-side item
    shapes = {
        nt: [(r.weight, [(x in terminals, x) for x in r.rhs]) for r in rs if r.weight > 0]
        for nt, rs in g.by_lhs.items()
    }
    while agenda:
        nt, q0, last = agenda.popleft()
        lhs = _state_name(nt, q0, last)
        for weight, items in shapes.get(nt, ()):
            n = len(items)
            # partial expansions: (automaton state, weight, rhs so far)
            partial = [(q0, weight, ())]
            for i, (is_term, sym) in enumerate(items):
                final = i + 1 == n
                grown = []
                for q, w, out in partial:
                    if is_term:
                        for aw, r in arcs.get(q, {}).get(sym, ()):
                            if aw > 0 and (r == last if final else last in reach[r]):
                                grown.append((r, w * aw, out + (sym,)))
                    elif not viable(sym, q):
                        continue
                    elif final:
                        if last in reach[q]:
                            grown.append((last, w, out + (visit(sym, q, last),)))
                    else:
                        # the next item has to be able to start where this one ends
                        from_q = reach[q]
                        for r in starts(items[i + 1][1]):
                            if r in from_q and last in reach[r]:
                                grown.append((r, w, out + (visit(sym, q, r),)))
                partial = grown
                if not partial:
                    break
            rules.extend(WRule(lhs, out, w) for _, w, out in partial)
    return trim(Wcfg(start, tuple(rules), g.terminals))


def trim(g: Wcfg) -> Wcfg:
    """Drop zero-weight rules and nonterminals that are unproductive or unreachable."""
    rules = [r for r in g.rules if r.weight > 0]
    # productive nonterminals by counting unresolved RHS occurrences
    pending = []
    waiting: dict[str, list[int]] = defaultdict(list)
    productive: set[str] = set()
    queue = []
    for i, r in enumerate(rules):
        nts = [x for x in r.rhs if x not in g.terminals]
        pending.append(len(nts))
        for x in nts:
            waiting[x].append(i)
        if not nts:
            queue.append(r.lhs)
    while queue:
        nt = queue.pop()
        if nt in productive:
            continue
        productive.add(nt)
        for i in waiting[nt]:
            pending[i] -= 1
            if pending[i] == 0:
                queue.append(rules[i].lhs)
    useful = [r for i, r in enumerate(rules) if pending[i] == 0]
    by_lhs: dict[str, list[WRule]] = defaultdict(list)
    for r in useful:
        by_lhs[r.lhs].append(r)
    reachable = {g.start} if g.start in productive else set()
    todo = list(reachable)
    while todo:
        for r in by_lhs[todo.pop()]:
            for x in r.rhs:
                if x not in g.terminals and x not in reachable:
                    reachable.add(x)
                    todo.append(x)
    return Wcfg(g.start, tuple(r for r in useful if r.lhs in reachable), g.terminals)


def inside_weights(
    g: Wcfg,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
    init: Mapping[str, float] | None = None,
    strict: bool = True,
) -> InsideTable:
    """Least fixed point of Z(A) = sum over A-rules of weight * product of child Z.

    Iterates from Z = 0 (or from ``init``). A sweep counts as converged when
    every change is below ``tol * min(1, Z)``, which is the absolute ``tol``
    for Z >= 1 and relative for the small masses of heavily penalized
    grammars. ``iterations`` counts sweeps before the confirming one.
    """
    nts = sorted(g.nonterminals)
    index = {nt: i for i, nt in enumerate(nts)}
    n = len(nts)
    one = n
    arity = max((sum(1 for x in r.rhs if x not in g.terminals) for r in g.rules), default=0)
    children = np.full((len(g.rules), max(arity, 1)), one, dtype=np.intp)
    lhs = np.empty(len(g.rules), dtype=np.intp)
    weights = np.empty(len(g.rules), dtype=np.float64)
    for i, r in enumerate(g.rules):
        lhs[i] = index[r.lhs]
        weights[i] = r.weight
        kids = [index[x] for x in r.rhs if x not in g.terminals]
        children[i, : len(kids)] = kids

    z = np.zeros(n + 1)
    z[one] = 1.0
    if init is not None:
        for nt, v in init.items():
            if nt in index:
                z[index[nt]] = v

    def table(converged: bool, it: int) -> InsideTable:
        return InsideTable(dict(zip(nts, z[:n].tolist())), it, converged)

    for it in range(1, max_iter + 1):
        new = np.bincount(lhs, weights=weights * z[children].prod(axis=1), minlength=n)
        delta = np.abs(new - z[:n])
        z[:n] = new
        bad = ~np.isfinite(new) | (new > OVERFLOW_GUARD)
        if bad.any():
            z[:n][bad] = math.inf
            t = table(False, it)
            if strict:
                raise DivergenceError("inside weights diverge", [nts[i] for i in np.flatnonzero(bad)], t)
            return t
        if np.all(delta <= tol * np.minimum(1.0, new)):
            return table(True, it - 1)
    t = table(False, max_iter)
    if strict:
        moving = np.flatnonzero(delta > tol * np.minimum(1.0, z[:n]))
        raise DivergenceError(
            f"inside weights not converged after {max_iter} sweeps", [nts[i] for i in moving], t
        )
    return t


def total_mass(g: Wcfg) -> float:
    g = trim(g)
    if not g.rules:
        return 0.0
    return inside_weights(g)[g.start]


def normalize(g: Wcfg) -> Pcfg:
    """Reweight rules to w * prod Z(children) / Z(lhs); string probabilities become weight / Z(start)."""
    g = trim(g)
    if not g.rules:
        raise ZeroMassError("grammar has zero total mass")
    z = inside_weights(g)
    scored = []
    for r in g.rules:
        s = r.weight
        for x in r.rhs:
            if x not in g.terminals:
                s *= z[x]
        scored.append(s)
    # normalize by the exact row sums so each nonterminal sums to one to rounding
    sums: dict[str, list[float]] = defaultdict(list)
    for r, s in zip(g.rules, scored):
        sums[r.lhs].append(s)
    totals = {k: math.fsum(v) for k, v in sums.items()}
    for k, v in totals.items():
        if not v > 0:
            raise ZeroMassError(f"zero partition function for {k!r}")
    rules = tuple(WRule(r.lhs, r.rhs, s / totals[r.lhs]) for r, s in zip(g.rules, scored))
    return Pcfg(g.start, rules, g.terminals)


def sequence_weight(g: Wcfg, seq: Sequence[str]) -> float:
    """Total weight of one complete string, summed over its derivations."""
    if any(s not in g.terminals for s in seq):
        return 0.0
    return total_mass(intersect(g, prefix_automaton(seq, g.terminals, exact=True)))


def prefix_mass(g: Wcfg, prefix: Sequence[str]) -> float:
    """Total weight of the strings starting with ``prefix``."""
    if any(s not in g.terminals for s in prefix):
        return 0.0
    return total_mass(intersect(g, prefix_automaton(prefix, g.terminals)))


def _continuation_automaton(prefix: Sequence[str], alphabet: frozenset[str]) -> tuple[Wfsa, dict[int, str | None]]:
    """Accepts ``prefix`` alone and ``prefix x anything`` for every x, in separate final states.

    Returns the automaton and a map from final state to the next symbol it
    records (None for the state that stops right after the prefix).
    """
    n = len(prefix)
    arcs = [(i, s, 1.0, i + 1) for i, s in enumerate(prefix)]
    finals: dict[int, str | None] = {n: None}
    for j, x in enumerate(sorted(alphabet)):
        q = n + 1 + j
        finals[q] = x
        arcs.append((n, x, 1.0, q))
        arcs += [(q, s, 1.0, q) for s in sorted(alphabet)]
    return Wfsa(n + 1 + len(alphabet), tuple(arcs), {q: 1.0 for q in finals}, alphabet), finals


def next_symbol_distribution(g: Wcfg, prefix: Sequence[str]) -> NextSymbolDistribution:
    """Conditional distribution of the symbol after ``prefix`` (or of stopping there).

    One intersection with an automaton that reads ``prefix`` and then records
    the following symbol in its final state. The inside weight of the start
    symbol spanning to each final state is the mass of that continuation.
    """
    prefix = tuple(prefix)
    if any(s not in g.terminals for s in prefix):
        raise ZeroMassError(f"prefix {' '.join(prefix)!r} uses unknown symbols")
    a, finals = _continuation_automaton(prefix, g.terminals)
    gi = intersect(g, a)
    if not gi.rules:
        raise ZeroMassError(f"prefix {' '.join(prefix)!r} has zero mass")
    z = inside_weights(gi)
    masses = {x: z[_state_name(g.start, 0, q)] for q, x in finals.items()}
    mass = math.fsum(masses.values())
    if not mass > 0:
        raise ZeroMassError(f"prefix {' '.join(prefix)!r} has zero mass")
    probs = {x: m / mass for x, m in masses.items() if x is not None and m > 0}
    return NextSymbolDistribution(probs, masses[None] / mass)
