"""Base grammar, derivation trees and derivation sequences.

A grammar file holds one rule per line::

    label: lhs -> item1 item2 ... | lf_template

Nonterminals are bare lowercase identifiers, surface tokens are double
quoted (a quoted string may hold several whitespace-separated tokens) and the
LF template refers to the RHS nonterminals as ``$1 .. $k``.
"""

from __future__ import annotations

import re
from collections import defaultdict
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .wcfg import WRule, Wcfg

IDENT = re.compile(r"[a-z_][a-z0-9_']*\Z")
_ITEM = re.compile(r'"[^"]*"|\||[^\s"|]+')
_PLACEHOLDER = re.compile(r"\$(\d+)")


class GrammarError(ValueError):
    """A grammar file violates one or more well-formedness conditions."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DerivationError(ValueError):
    """A derivation sequence does not encode a complete derivation tree."""

    def __init__(self, kind: str, position: int, detail: str):
        self.kind = kind
        self.position = position
        super().__init__(f"{kind} at position {position}: {detail}")


class SymbolTable:
    """Injective interning of strings to dense integer ids."""

    def __init__(self, names: Iterable[str] = ()):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []
        for name in names:
            self.intern(name)

    def intern(self, name: str) -> int:
        idx = self._ids.get(name)
        if idx is None:
            idx = len(self._names)
            self._ids[name] = idx
            self._names.append(name)
        return idx

    def id(self, name: str) -> int:
        return self._ids[name]

    def resolve(self, idx: int) -> str:
        return self._names[idx]

    def __contains__(self, name: object) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)


@dataclass(frozen=True)
class Terminal:
    """A surface token in a rule's right-hand side."""

    token: str


@dataclass(frozen=True)
class Rule:
    label: str
    lhs: str
    rhs: tuple[str | Terminal, ...]
    lf_template: str

    @property
    def nonterminals(self) -> tuple[str, ...]:
        return tuple(x for x in self.rhs if isinstance(x, str))

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(x.token for x in self.rhs if isinstance(x, Terminal))

    def __str__(self) -> str:
        items = []
        i = 0
        while i < len(self.rhs):
            item = self.rhs[i]
            if isinstance(item, str):
                items.append(item)
                i += 1
                continue
            # re-join adjacent tokens into one quoted string
            run = []
            while i < len(self.rhs) and isinstance(self.rhs[i], Terminal):
                run.append(self.rhs[i].token)
                i += 1
            items.append('"' + " ".join(run) + '"')
        return f"{self.label}: {self.lhs} -> {' '.join(items)} | {self.lf_template}"


@dataclass(frozen=True)
class Cfg:
    start: str
    rules: tuple[Rule, ...]
    by_lhs: dict[str, tuple[Rule, ...]] = field(compare=False, repr=False)
    by_label: dict[str, Rule] = field(compare=False, repr=False)
    symbols: SymbolTable = field(compare=False, repr=False)

    @classmethod
    def from_rules(cls, rules: Sequence[Rule], start: str | None = None) -> Cfg:
        problems = _check_rules(rules, start)
        if problems:
            raise GrammarError(problems)
        start = rules[0].lhs if start is None else start
        by_lhs: dict[str, list[Rule]] = defaultdict(list)
        for r in rules:
            by_lhs[r.lhs].append(r)
        symbols = SymbolTable()
        for r in rules:
            symbols.intern(r.lhs)
            symbols.intern(r.label)
            for item in r.rhs:
                symbols.intern(item if isinstance(item, str) else item.token)
        return cls(
            start=start,
            rules=tuple(rules),
            by_lhs={k: tuple(v) for k, v in by_lhs.items()},
            by_label={r.label: r for r in rules},
            symbols=symbols,
        )

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(r.label for r in self.rules)

    @property
    def nonterminals(self) -> tuple[str, ...]:
        return tuple(self.by_lhs)

    def dumps(self) -> str:
        return "".join(str(r) + "\n" for r in self.rules)


def _check_rules(rules: Sequence[Rule], start: str | None) -> list[str]:
    problems: list[str] = []
    if not rules:
        return ["grammar has no rules"]
    lhs_set = {r.lhs for r in rules}
    if start is not None and start not in lhs_set:
        problems.append(f"start symbol {start!r} has no rule")
    seen: set[str] = set()
    for r in rules:
        if r.label in seen:
            problems.append(f"duplicate rule label {r.label!r}")
        seen.add(r.label)
        if r.label in lhs_set:
            problems.append(f"rule label {r.label!r} collides with a nonterminal")
        if not r.rhs:
            problems.append(f"rule {r.label!r} has an empty right-hand side")
        for nt in r.nonterminals:
            if nt not in lhs_set:
                problems.append(f"undefined nonterminal {nt!r} in rule {r.label!r}")
        k = len(r.nonterminals)
        slots = sorted(int(m) for m in _PLACEHOLDER.findall(r.lf_template))
        if slots != list(range(1, k + 1)):
            problems.append(
                f"placeholder/arity mismatch in rule {r.label!r}: "
                f"{k} nonterminals but placeholders {['$%d' % s for s in slots]}"
            )
    if not problems:
        productive: set[str] = set()
        changed = True
        while changed:
            changed = False
            for r in rules:
                if r.lhs not in productive and all(nt in productive for nt in r.nonterminals):
                    productive.add(r.lhs)
                    changed = True
        for nt in sorted(lhs_set - productive):
            problems.append(f"unproductive nonterminal {nt!r} derives no finite tree")
    return problems


def load_grammar(text: str) -> Cfg:
    """Parse grammar-file contents; every violation is reported at once."""
    rules: list[Rule] = []
    problems: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rules.append(_parse_line(line))
        except ValueError as e:
            problems.append(f"line {lineno}: {e}")
    if problems:
        raise GrammarError(problems)
    return Cfg.from_rules(rules)


def read_grammar(path: str | Path) -> Cfg:
    return load_grammar(Path(path).read_text(encoding="utf-8"))


def _parse_line(line: str) -> Rule:
    label, sep, rest = line.partition(":")
    label = label.strip()
    if not sep or not IDENT.match(label):
        raise ValueError(f"malformed rule label in {line!r}")
    lhs, arrow, body = rest.partition("->")
    lhs = lhs.strip()
    if not arrow or not IDENT.match(lhs):
        raise ValueError(f"malformed left-hand side in {line!r}")
    rhs: list[str | Terminal] = []
    template = None
    for m in _ITEM.finditer(body):
        item = m.group()
        if item == "|":
            template = body[m.end():].strip()
            break
        if item.startswith('"'):
            toks = item[1:-1].lower().split()
            if not toks:
                raise ValueError(f"empty surface string in rule {label!r}")
            rhs.extend(Terminal(t) for t in toks)
        elif IDENT.match(item):
            rhs.append(item)
        else:
            raise ValueError(f"bad nonterminal name {item!r} in rule {label!r}")
    if template is None:
        raise ValueError(f"missing '| lf_template' in rule {label!r}")
    return Rule(label, lhs, tuple(rhs), template)


@dataclass(frozen=True)
class DerivationTree:
    rule: str
    children: tuple[DerivationTree, ...] = ()

    def __str__(self) -> str:
        if not self.children:
            return self.rule
        return f"{self.rule}({','.join(str(c) for c in self.children)})"

    @classmethod
    def from_string(cls, text: str) -> DerivationTree:
        """Read the bracketed notation ``s0(np1(typenp0))``."""
        tokens = re.findall(r"[^(),\s]+|[(),]", text)
        pos = 0

        def node() -> DerivationTree:
            nonlocal pos
            label = tokens[pos]
            pos += 1
            kids = []
            if pos < len(tokens) and tokens[pos] == "(":
                pos += 1
                kids.append(node())
                while tokens[pos] == ",":
                    pos += 1
                    kids.append(node())
                if tokens[pos] != ")":
                    raise ValueError(f"expected ')' in {text!r}")
                pos += 1
            return cls(label, tuple(kids))

        tree = node()
        if pos != len(tokens):
            raise ValueError(f"trailing input in {text!r}")
        return tree


def linearize(tree: DerivationTree) -> tuple[str, ...]:
    """Preorder (leftmost) traversal of the rule labels."""
    out: list[str] = []
    stack = [tree]
    while stack:
        node = stack.pop()
        out.append(node.rule)
        stack.extend(reversed(node.children))
    return tuple(out)


def parse_ds(ds: Sequence[str], g: Cfg) -> DerivationTree:
    """Rebuild the unique derivation tree whose preorder traversal is ``ds``."""
    pos = 0

    def build(expected: str) -> DerivationTree:
        nonlocal pos
        if pos >= len(ds):
            raise DerivationError("incomplete", pos, f"missing expansion of {expected!r}")
        label = ds[pos]
        rule = g.by_label.get(label)
        if rule is None:
            raise DerivationError("unknown label", pos, repr(label))
        if rule.lhs != expected:
            raise DerivationError(
                "lhs mismatch", pos, f"{label!r} expands {rule.lhs!r}, expected {expected!r}"
            )
        pos += 1
        return DerivationTree(label, tuple(build(nt) for nt in rule.nonterminals))

    tree = build(g.start)
    if pos != len(ds):
        raise DerivationError("trailing labels", pos, f"{len(ds) - pos} labels after a complete tree")
    return tree


def pending_after(prefix: Sequence[str], g: Cfg) -> list[str] | None:
    """Stack of nonterminals still to expand after ``prefix`` (top last), or None if invalid."""
    stack = [g.start]
    for label in prefix:
        rule = g.by_label.get(label)
        if not stack or rule is None or rule.lhs != stack[-1]:
            return None
        stack.pop()
        stack.extend(reversed(rule.nonterminals))
    return stack


def is_valid_prefix(prefix: Sequence[str], g: Cfg) -> bool:
    # every nonterminal is productive (checked at load), so reconstructing
    # without a mismatch is enough for the prefix to be extendable
    return pending_after(prefix, g) is not None


def yield_cf(tree: DerivationTree, g: Cfg) -> list[str]:
    rule = g.by_label[tree.rule]
    kids = iter(tree.children)
    out: list[str] = []
    for item in rule.rhs:
        if isinstance(item, Terminal):
            out.append(item.token)
        else:
            out.extend(yield_cf(next(kids), g))
    return out


def compose_lf(tree: DerivationTree, g: Cfg) -> str:
    rule = g.by_label[tree.rule]
    parts = [compose_lf(c, g) for c in tree.children]
    return _PLACEHOLDER.sub(lambda m: parts[int(m.group(1)) - 1], rule.lf_template)


def build_ds_grammar(g: Cfg) -> Wcfg:
    """The derivation-sequence grammar: ``A -> r B1..Bk`` at weight 1/n_A for each rule r."""
    rules = []
    for r in g.rules:
        n = len(g.by_lhs[r.lhs])
        rules.append(WRule(r.lhs, (r.label, *r.nonterminals), 1.0 / n))
    return Wcfg(g.start, tuple(rules), frozenset(g.labels))
