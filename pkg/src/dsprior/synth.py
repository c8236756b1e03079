"""Synthetic (utterance, derivation sequence) corpora with held-out entities.

Derivation sequences are sampled from the normalized derivation-sequence
grammar, rendered to their canonical form, and paraphrased with a small
phrase table. Some entity rules never occur in the training split; part of
the test split is forced to use them.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .background import ENTITY_NONTERMINALS
from .grammar import Cfg, build_ds_grammar, parse_ds, yield_cf
from .intersect import normalize
from .wcfg import Pcfg
from .scorer import TrainingExample

# phrase -> alternatives; "" drops the phrase
PARAPHRASES: dict[str, tuple[str, ...]] = {
    "article": ("article", "articles", "paper", "papers"),
    "book": ("book", "books", "volumes"),
    "whose": ("whose", "with", "that has"),
    "is": ("is", "", "equal to"),
    "publication date": ("publication date", "date", "publish date", "year"),
    "author": ("author", "writer", "written by"),
    "venue": ("venue", "conference", "published at"),
    "title": ("title", "name"),
    "that cites": ("that cites", "citing", "which cite", "referencing"),
    "january 2": ("january 2", "jan 2"),
}
OPENERS = ("", "", "show me", "find", "list", "what are the")


@dataclass(frozen=True)
class SynthCorpus:
    train: list[TrainingExample]
    test: list[TrainingExample]
    heldout: frozenset[str]


def entity_labels(g: Cfg, entity_nonterminals=ENTITY_NONTERMINALS) -> frozenset[str]:
    return frozenset(r.label for r in g.rules if r.lhs in entity_nonterminals)


def sample_ds(pcfg: Pcfg, rng: np.random.Generator, max_len: int = 14) -> tuple[str, ...]:
    """One string of a derivation-sequence PCFG, rejecting those longer than ``max_len``."""
    while True:
        out: list[str] = []
        stack = [pcfg.start]
        while stack and len(out) <= max_len:
            rules = pcfg.by_lhs[stack.pop()]
            r = rules[rng.choice(len(rules), p=[x.weight for x in rules])]
            out.append(r.rhs[0])
            stack.extend(reversed(r.rhs[1:]))
        if not stack and len(out) <= max_len:
            return tuple(out)


def paraphrase(tokens: Sequence[str], rng: np.random.Generator, table: Mapping[str, Sequence[str]] = PARAPHRASES) -> tuple[str, ...]:
    keys = {tuple(k.split()): v for k, v in table.items()}
    longest = max(len(k) for k in keys)
    out: list[str] = []
    opener = OPENERS[rng.integers(len(OPENERS))]
    out.extend(opener.split())
    i = 0
    while i < len(tokens):
        for n in range(min(longest, len(tokens) - i), 0, -1):
            alts = keys.get(tuple(tokens[i : i + n]))
            if alts is not None:
                out.extend(alts[rng.integers(len(alts))].split())
                i += n
                break
        else:
            out.append(tokens[i])
            i += 1
    return tuple(out)


def synthesize(
    g: Cfg,
    n_train: int = 500,
    n_test: int = 100,
    holdout_fraction: float = 0.15,
    heldout: Sequence[str] | None = None,
    heldout_share: float = 0.5,
    seed: int = 42,
    max_len: int = 11,
) -> SynthCorpus:
    """Build train/test splits. At least one entity rule is held out of training.

    The default ``max_len`` admits at most two filter clauses on the
    publications fixture.
    """
    rng = np.random.default_rng(seed)
    entities = sorted(entity_labels(g))
    if len(entities) < 2:
        raise ValueError("need at least two entity rules to hold one out")
    if heldout is None:
        k = min(len(entities) - 1, max(1, round(holdout_fraction * len(entities))))
        heldout = [entities[i] for i in sorted(rng.choice(len(entities), k, replace=False))]
    held = frozenset(heldout)
    if not held <= set(entities):
        raise ValueError(f"held-out labels {sorted(held - set(entities))} are not entity rules")

    pcfg = normalize(build_ds_grammar(g))

    def example(ds: tuple[str, ...]) -> TrainingExample:
        return TrainingExample(paraphrase(yield_cf(parse_ds(ds, g), g), rng), ds)

    train = []
    while len(train) < n_train:
        ds = sample_ds(pcfg, rng, max_len)
        if not held & set(ds):
            train.append(example(ds))
    want_held = round(heldout_share * n_test)
    with_held: list[TrainingExample] = []
    without: list[TrainingExample] = []
    while len(with_held) < want_held or len(without) < n_test - want_held:
        ds = sample_ds(pcfg, rng, max_len)
        bucket, cap = (with_held, want_held) if held & set(ds) else (without, n_test - want_held)
        if len(bucket) < cap:
            bucket.append(example(ds))
    test = with_held + without
    test = [test[i] for i in rng.permutation(len(test))]
    return SynthCorpus(train, test, held)
