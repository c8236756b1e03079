"""Exhaustive decode oracle over independently enumerated derivation sequences."""

from __future__ import annotations

import functools

import numpy as np

from dsprior.background import AliasTable, BackgroundBuilder, EntityLexicon
from dsprior.decode import sequence_logprob
from dsprior.oracle import all_derivation_sequences
from dsprior.scorer import NgramVocab, Scorer, ScorerParams, TrainConfig
from dsprior.wfsa import PriorConfig

SMALL = TrainConfig(embed_dim=3, hidden_dim=4, unigram_dim=3, bigram_dim=3, head_dim=5, init_scale=1.0)
UTTERANCES = (("papers", "citing", "acl"), ("books", "from", "1984"), ("show", "me", "articles"))


@functools.cache
def builder(g, eta=0.01):
    # backgrounds do not depend on the scorer, so one builder (and its caches) serves every case
    return BackgroundBuilder(g, EntityLexicon.from_grammar(g), AliasTable.months(), PriorConfig(eta=eta))


@functools.cache
def sequences(g, max_len):
    return all_derivation_sequences(g, max_len)


def exhaustive_argmax(g, scorer, bg, utterance, max_len=10):
    """(log p, ds) of the most probable complete sequence of at most ``max_len`` labels.

    Ties go to the lexicographically smallest sequence, matching the decoder.
    """
    scored = [(sequence_logprob(scorer, bg, utterance, ds), ds) for ds in sequences(g, max_len)]
    best = max(lp for lp, _ in scored)
    return best, min(ds for lp, ds in scored if lp == best)


def random_case(g, seed):
    """A randomly initialized scorer and one of the fixed utterances."""
    rng = np.random.default_rng(seed)
    vocab = NgramVocab.build([list(u) for u in UTTERANCES])
    s = Scorer(ScorerParams.init(len(g.labels), vocab, SMALL, rng), g.labels, vocab)
    return s, list(UTTERANCES[seed % len(UTTERANCES)])
