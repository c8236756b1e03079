"""Weighted finite-state automata over rule labels.

States are the integers ``0 .. n_states-1`` and state 0 is initial with
weight 1. A string's weight sums, over its accepting paths, the product of
transition weights times the exit weight of the last state.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_DELTA = 0.001
ETA_GRID = (0.0, 0.0001, 0.01)


@dataclass(frozen=True)
class PriorConfig:
    eta: float = 0.01
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if self.eta < 0 or self.delta < 0:
            raise ValueError("eta and delta must be nonnegative")


@dataclass(frozen=True)
class Wfsa:
    n_states: int
    transitions: tuple[tuple[int, str, float, int], ...]
    exits: Mapping[int, float]
    alphabet: frozenset[str]
    arcs: dict[int, dict[str, tuple[tuple[float, int], ...]]] = field(
        init=False, compare=False, repr=False
    )

    def __post_init__(self):
        if self.n_states < 1:
            raise ValueError("an automaton needs at least the initial state")
        index: dict[int, dict[str, list]] = defaultdict(lambda: defaultdict(list))
        for q, sym, w, r in self.transitions:
            if not (0 <= q < self.n_states and 0 <= r < self.n_states):
                raise ValueError(f"transition {(q, sym, w, r)} uses an unknown state")
            if sym not in self.alphabet:
                raise ValueError(f"transition symbol {sym!r} outside the alphabet")
            if not (w >= 0 and math.isfinite(w)):
                raise ValueError(f"transition {(q, sym, w, r)} has a bad weight")
            index[q][sym].append((w, r))
        for q, w in self.exits.items():
            if not (0 <= q < self.n_states) or not (w >= 0 and math.isfinite(w)):
                raise ValueError(f"bad exit weight {w!r} on state {q}")
        object.__setattr__(
            self,
            "arcs",
            {q: {s: tuple(v) for s, v in d.items()} for q, d in index.items()},
        )

    def exit(self, q: int) -> float:
        return self.exits.get(q, 0.0)

    def out(self, q: int, sym: str) -> tuple[tuple[float, int], ...]:
        return self.arcs.get(q, {}).get(sym, ())

    def reachable(self) -> list[set[int]]:
        """reach[q]: states reachable from q by zero or more positive-weight arcs."""
        succ: dict[int, set[int]] = defaultdict(set)
        for q, _, w, r in self.transitions:
            if w > 0:
                succ[q].add(r)
        reach = []
        for q in range(self.n_states):
            seen = {q}
            todo = [q]
            while todo:
                for r in succ[todo.pop()]:
                    if r not in seen:
                        seen.add(r)
                        todo.append(r)
            reach.append(seen)
        return reach

    def dumps(self) -> str:
        lines = [f"states {self.n_states}", "initial 0", "alphabet " + " ".join(sorted(self.alphabet))]
        lines += [f"arc {q} {s} {w!r} {r}" for q, s, w, r in self.transitions]
        lines += [f"exit {q} {w!r}" for q, w in sorted(self.exits.items())]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def loads_wfsa(text: str) -> Wfsa:
    n_states = None
    alphabet: frozenset[str] = frozenset()
    transitions = []
    exits = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        kind = parts[0]
        try:
            if kind == "states":
                n_states = int(parts[1])
            elif kind == "initial":
                if int(parts[1]) != 0:
                    raise ValueError("initial state must be 0")
            elif kind == "alphabet":
                alphabet = frozenset(parts[1:])
            elif kind == "arc":
                transitions.append((int(parts[1]), parts[2], float(parts[3]), int(parts[4])))
            elif kind == "exit":
                exits[int(parts[1])] = float(parts[2])
            else:
                raise ValueError(f"unknown record {kind!r}")
        except (IndexError, ValueError) as e:
            raise ValueError(f"line {lineno}: {e}") from None
    if n_states is None:
        raise ValueError("missing 'states' record")
    return Wfsa(n_states, tuple(transitions), exits, alphabet)


def read_wfsa(path: str | Path) -> Wfsa:
    return loads_wfsa(Path(path).read_text(encoding="utf-8"))


def string_weight(a: Wfsa, seq: Sequence[str]) -> float:
    forward = {0: 1.0}
    for sym in seq:
        if sym not in a.alphabet:
            raise ValueError(f"symbol {sym!r} outside the automaton alphabet")
        nxt: dict[int, float] = defaultdict(float)
        for q, v in forward.items():
            for w, r in a.out(q, sym):
                nxt[r] += v * w
        forward = nxt
        if not forward:
            return 0.0
    return math.fsum(v * a.exit(q) for q, v in forward.items())


def _check_member(sym: str, alphabet: frozenset[str]) -> None:
    if sym not in alphabet:
        raise ValueError(f"symbol {sym!r} outside the alphabet")


def universal_automaton(alphabet: Iterable[str]) -> Wfsa:
    """One state, weight 1 on every string: the identity for ``product``."""
    alphabet = frozenset(alphabet)
    return Wfsa(1, tuple((0, s, 1.0, 0) for s in sorted(alphabet)), {0: 1.0}, alphabet)


def penalize_automaton(sym: str, delta: float, alphabet: Iterable[str]) -> Wfsa:
    """Weight delta**k for a string with k occurrences of ``sym``."""
    alphabet = frozenset(alphabet)
    _check_member(sym, alphabet)
    arcs = tuple((0, s, delta if s == sym else 1.0, 0) for s in sorted(alphabet))
    return Wfsa(1, arcs, {0: 1.0}, alphabet)


def require_automaton(sym: str, eta: float, alphabet: Iterable[str]) -> Wfsa:
    """Weight 1 if ``sym`` occurs, eta otherwise."""
    alphabet = frozenset(alphabet)
    _check_member(sym, alphabet)
    arcs = [(0, s, 1.0, 0) for s in sorted(alphabet) if s != sym]
    arcs.append((0, sym, 1.0, 1))
    arcs += [(1, s, 1.0, 1) for s in sorted(alphabet)]
    return Wfsa(2, tuple(arcs), {0: eta, 1: 1.0}, alphabet)


def unigram_automaton(probs: Mapping[str, float], alphabet: Iterable[str]) -> Wfsa:
    alphabet = frozenset(alphabet)
    missing = alphabet - set(probs)
    if missing:
        raise ValueError(f"no unigram weight for {sorted(missing)}")
    return Wfsa(1, tuple((0, s, float(probs[s]), 0) for s in sorted(alphabet)), {0: 1.0}, alphabet)


def prefix_automaton(prefix: Sequence[str], alphabet: Iterable[str], exact: bool = False) -> Wfsa:
    """Weight 1 on ``prefix`` followed by anything (or on ``prefix`` alone if ``exact``)."""
    alphabet = frozenset(alphabet)
    for s in prefix:
        _check_member(s, alphabet)
    n = len(prefix)
    arcs = [(i, s, 1.0, i + 1) for i, s in enumerate(prefix)]
    if not exact:
        arcs += [(n, s, 1.0, n) for s in sorted(alphabet)]
    return Wfsa(n + 1, tuple(arcs), {n: 1.0}, alphabet)


def product(a1: Wfsa, a2: Wfsa) -> Wfsa:
    """Intersection: weights multiply. Only pair states reachable from (0, 0) are kept."""
    if a1.alphabet != a2.alphabet:
        raise ValueError("automata have different alphabets")
    ids = {(0, 0): 0}
    todo = deque([(0, 0)])
    arcs = []
    exits = {}
    while todo:
        q1, q2 = pair = todo.popleft()
        src = ids[pair]
        e = a1.exit(q1) * a2.exit(q2)
        if e:
            exits[src] = e
        for sym, outs1 in a1.arcs.get(q1, {}).items():
            for w1, r1 in outs1:
                for w2, r2 in a2.out(q2, sym):
                    dst = ids.get((r1, r2))
                    if dst is None:
                        dst = ids[(r1, r2)] = len(ids)
                        todo.append((r1, r2))
                    arcs.append((src, sym, w1 * w2, dst))
    return Wfsa(len(ids), tuple(arcs), exits, a1.alphabet)


def product_all(automata: Sequence[Wfsa], alphabet: Iterable[str]) -> Wfsa:
    result = universal_automaton(alphabet)
    for a in automata:
        result = product(result, a)
    return result
