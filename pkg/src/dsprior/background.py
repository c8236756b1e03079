"""Input-dependent backgrounds: entity detection, require automata, and conditional queries."""

from __future__ import annotations

import logging
import threading
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol

from .grammar import Cfg, Terminal, build_ds_grammar
from .intersect import NextSymbolDistribution, ZeroMassError, intersect, next_symbol_distribution, normalize
from .wcfg import Pcfg
from .wfsa import PriorConfig, Wfsa, product_all, require_automaton

log = logging.getLogger(__name__)

ENTITY_NONTERMINALS = frozenset({"entitynp"})


class InfeasibleBackgroundError(ValueError):
    """The requirements leave no string with positive weight."""


def tokenize(text: str) -> tuple[str, ...]:
    return tuple(text.lower().split())


@dataclass(frozen=True)
class AliasTable:
    """Token-sequence rewrites applied to an utterance before entity matching."""

    mapping: Mapping[tuple[str, ...], tuple[str, ...]]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> AliasTable:
        mapping: dict[tuple[str, ...], tuple[str, ...]] = {}
        for variant, canonical in pairs:
            v, c = tokenize(variant), tokenize(canonical)
            if not v or not c:
                raise ValueError(f"empty alias entry {variant!r} => {canonical!r}")
            if mapping.get(v, c) != c:
                raise ValueError(f"alias {variant!r} maps to both {mapping[v]} and {c}")
            mapping[v] = c
        return cls(mapping)

    @classmethod
    def loads(cls, text: str) -> AliasTable:
        pairs = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            variant, sep, canonical = line.partition("=>")
            if not sep:
                raise ValueError(f"line {lineno}: expected 'variant => canonical'")
            pairs.append((variant, canonical))
        return cls.from_pairs(pairs)

    @classmethod
    def read(cls, path: str | Path) -> AliasTable:
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def months(cls) -> AliasTable:
        return cls.loads(resources.files("dsprior").joinpath("data/months.aliases").read_text())

    def merged(self, other: AliasTable) -> AliasTable:
        return AliasTable.from_pairs(
            (" ".join(k), " ".join(v)) for k, v in [*self.mapping.items(), *other.mapping.items()]
        )

    def canonicalize(self, tokens: Sequence[str]) -> tuple[str, ...]:
        return tuple(_rewrite(tokens, self.mapping))


@dataclass(frozen=True)
class EntityLexicon:
    """Lowercase token sequences that signal a grammar's entity rules."""

    variants: Mapping[tuple[str, ...], str]

    @classmethod
    def from_grammar(
        cls,
        g: Cfg,
        entity_nonterminals: Iterable[str] = ENTITY_NONTERMINALS,
        extra: Mapping[str, str] | None = None,
    ) -> EntityLexicon:
        """Entity rules are those whose lhs is in ``entity_nonterminals``; ``extra`` maps variants to labels."""
        wanted = set(entity_nonterminals)
        variants: dict[tuple[str, ...], str] = {}

        def add(v: tuple[str, ...], label: str) -> None:
            if label not in g.by_label:
                raise ValueError(f"lexicon target {label!r} is not a rule of the grammar")
            if variants.get(v, label) != label:
                raise ValueError(f"variant {' '.join(v)!r} points to {variants[v]!r} and {label!r}")
            variants[v] = label

        for r in g.rules:
            if r.lhs in wanted and not r.nonterminals:
                add(tuple(x.token for x in r.rhs if isinstance(x, Terminal)), r.label)
        for variant, label in (extra or {}).items():
            add(tokenize(variant), label)
        return cls(variants)

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(self.variants.values())


def _rewrite(tokens, table):
    """Greedy left-to-right longest-match replacement."""
    longest = max((len(k) for k in table), default=0)
    i = 0
    out = []
    while i < len(tokens):
        for n in range(min(longest, len(tokens) - i), 0, -1):
            key = tuple(tokens[i : i + n])
            if key in table:
                out.extend(table[key])
                i += n
                break
        else:
            out.append(tokens[i])
            i += 1
    return out


def detect_entities(utterance: Sequence[str], lex: EntityLexicon, dates: AliasTable) -> frozenset[str]:
    tokens = dates.canonicalize([t.lower() for t in utterance])
    found: list[str] = []
    longest = max((len(k) for k in lex.variants), default=0)
    i = 0
    while i < len(tokens):
        for n in range(min(longest, len(tokens) - i), 0, -1):
            label = lex.variants.get(tuple(tokens[i : i + n]))
            if label is not None:
                found.append(label)
                i += n
                break
        else:
            i += 1
    return frozenset(found)


class Conditional(Protocol):
    def conditional(self, prefix: Sequence[str]) -> NextSymbolDistribution: ...


@dataclass(frozen=True)
class Background:
    utterance: tuple[str, ...]
    labels: frozenset[str]
    grammar: Pcfg
    prior: PriorConfig
    fallback: bool = False
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def conditional(self, prefix: Sequence[str]) -> NextSymbolDistribution:
        key = tuple(prefix)
        dist = self._cache.get(key)
        if dist is None:
            dist = self._cache.setdefault(key, next_symbol_distribution(self.grammar, key))
        return dist

    def with_utterance(self, utterance: Sequence[str]) -> Background:
        # shares the grammar and the conditional cache
        return Background(tuple(utterance), self.labels, self.grammar, self.prior, self.fallback, self._cache)


def background_conditional(b: Conditional, prefix: Sequence[str]) -> NextSymbolDistribution:
    return b.conditional(prefix)


def factor_automaton(labels: Iterable[str], eta: float, alphabet: frozenset[str]) -> Wfsa:
    return product_all([require_automaton(x, eta, alphabet) for x in sorted(labels)], alphabet)


def _background_grammar(gw0, labels: frozenset[str], prior: PriorConfig) -> Pcfg:
    if not labels or prior.eta == 1.0:
        return normalize(gw0)
    try:
        return normalize(intersect(gw0, factor_automaton(labels, prior.eta, gw0.terminals)))
    except ZeroMassError as e:
        raise InfeasibleBackgroundError(
            f"no derivation contains all of {sorted(labels)} (eta={prior.eta})"
        ) from e


def build_background(
    g: Cfg,
    utterance: Sequence[str],
    lex: EntityLexicon,
    dates: AliasTable,
    prior: PriorConfig,
) -> Background:
    """Raises InfeasibleBackgroundError; BackgroundBuilder applies the fallback."""
    labels = detect_entities(utterance, lex, dates)
    return Background(tuple(utterance), labels, _background_grammar(build_ds_grammar(g), labels, prior), prior)


class BackgroundBuilder:
    """Builds backgrounds for many utterances, sharing one grammar per (labels, eta).

    Infeasible requirement sets fall back to the grammar-only background with
    a warning.
    """

    def __init__(self, g: Cfg, lex: EntityLexicon, dates: AliasTable, prior: PriorConfig):
        self.g = g
        self.lex = lex
        self.dates = dates
        self.prior = prior
        self.gw0 = build_ds_grammar(g)
        self._lock = threading.Lock()
        self._cache: dict[tuple[frozenset[str], float], Background] = {}

    def for_labels(self, labels: Iterable[str]) -> Background:
        key = (frozenset(labels), self.prior.eta)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        try:
            b = Background((), key[0], _background_grammar(self.gw0, key[0], self.prior), self.prior)
        except InfeasibleBackgroundError as e:
            log.warning("%s; falling back to the grammar-only background", e)
            base = self.grammar_only()
            b = Background((), key[0], base.grammar, self.prior, True, base._cache)
        with self._lock:
            return self._cache.setdefault(key, b)

    def grammar_only(self) -> Background:
        return self.for_labels(())

    def build(self, utterance: Sequence[str]) -> Background:
        labels = detect_entities(utterance, self.lex, self.dates)
        return self.for_labels(labels).with_utterance(utterance)


@dataclass(frozen=True)
class UniformBackground:
    """b = 1 on every label and on END: no prior knowledge at all."""

    labels: tuple[str, ...]

    def conditional(self, prefix: Sequence[str]) -> NextSymbolDistribution:
        p = 1.0 / (len(self.labels) + 1)
        return NextSymbolDistribution({x: p for x in self.labels}, p)
