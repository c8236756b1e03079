"""Weighted grammars over derivation-sequence symbols.

Text format, one rule per line, terminals double quoted::

    %start s
    %terminals "s0" "np0" ...
    np -> "np0" np cp @ 0.5

Weights are written with ``repr`` so a dump/load cycle is bit-exact.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

PCFG_TOL = 1e-9


@dataclass(frozen=True)
class WRule:
    lhs: str
    rhs: tuple[str, ...]
    weight: float


@dataclass(frozen=True)
class Wcfg:
    """A weighted CFG. A symbol in a right-hand side is terminal iff it is in ``terminals``."""

    start: str
    rules: tuple[WRule, ...]
    terminals: frozenset[str]
    by_lhs: dict[str, tuple[WRule, ...]] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        for r in self.rules:
            if not (r.weight >= 0 and math.isfinite(r.weight)):
                raise ValueError(f"rule {r} has a negative or non-finite weight")
            if r.lhs in self.terminals:
                raise ValueError(f"terminal {r.lhs!r} used as a left-hand side")
        index: dict[str, list[WRule]] = defaultdict(list)
        for r in self.rules:
            index[r.lhs].append(r)
        object.__setattr__(self, "by_lhs", {k: tuple(v) for k, v in index.items()})

    @property
    def nonterminals(self) -> frozenset[str]:
        nts = {self.start}
        for r in self.rules:
            nts.add(r.lhs)
            nts.update(x for x in r.rhs if x not in self.terminals)
        return frozenset(nts)

    def is_terminal(self, symbol: str) -> bool:
        return symbol in self.terminals

    def dumps(self) -> str:
        lines = [f"%start {self.start}", "%terminals " + " ".join(f'"{t}"' for t in sorted(self.terminals))]
        for r in self.rules:
            rhs = " ".join(f'"{x}"' if x in self.terminals else x for x in r.rhs)
            lines.append(f"{r.lhs} -> {rhs} @ {r.weight!r}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


class Pcfg(Wcfg):
    """A Wcfg whose rule weights sum to one for every nonterminal."""

    def __post_init__(self):
        super().__post_init__()
        for lhs, rules in self.by_lhs.items():
            total = math.fsum(r.weight for r in rules)
            if abs(total - 1.0) > PCFG_TOL:
                raise ValueError(f"rules of {lhs!r} sum to {total!r}, not 1")

    @classmethod
    def from_wcfg(cls, g: Wcfg) -> Pcfg:
        return cls(g.start, g.rules, g.terminals)


def loads(text: str) -> Wcfg:
    start = None
    terminals: set[str] | None = None
    rules = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("%start"):
            start = line.split()[1]
            continue
        if line.startswith("%terminals"):
            terminals = {t.strip('"') for t in line.split()[1:]}
            continue
        body, at, weight = line.rpartition("@")
        lhs, arrow, rhs = body.partition("->")
        if not at or not arrow:
            raise ValueError(f"line {lineno}: malformed weighted rule {line!r}")
        items = rhs.split()
        quoted = {x.strip('"') for x in items if x.startswith('"')}
        if terminals is None:
            raise ValueError(f"line {lineno}: rules before the %terminals header")
        if not quoted <= terminals:
            raise ValueError(f"line {lineno}: undeclared terminals {sorted(quoted - terminals)}")
        rules.append(WRule(lhs.strip(), tuple(x.strip('"') for x in items), float(weight)))
    if start is None or terminals is None:
        raise ValueError("missing %start or %terminals header")
    return Wcfg(start, tuple(rules), frozenset(terminals))


def read_wcfg(path: str | Path) -> Wcfg:
    return loads(Path(path).read_text(encoding="utf-8"))
