from __future__ import annotations

import math

import numpy as np
import pytest

from dsprior.background import UniformBackground, tokenize
from dsprior.decode import (
    SearchBudgetError,
    SearchNode,
    decode,
    entity_step_kl,
    evaluate,
    kl_to_uniform,
    sequence_logprob,
)
from dsprior.grammar import load_grammar, parse_ds
from dsprior.intersect import NextSymbolDistribution
from dsprior.synth import synthesize
from dsprior.scorer import END, NgramVocab, Scorer, ScorerParams, TrainConfig, TrainingExample

from decode_oracle import builder, exhaustive_argmax, random_case

SMALL = TrainConfig(embed_dim=3, hidden_dim=4, unigram_dim=3, bigram_dim=3, head_dim=5, init_scale=1.0)


def test_zero_scorer_defers_to_background(fig1):
    s = Scorer.zeros(fig1.labels)
    utt = tokenize("article whose publication date is 1950")
    bg = builder(fig1).build(utt)
    ds = decode(s, bg, utt)
    assert ds == exhaustive_argmax(fig1, s, bg, utt)[1]
    assert "entitynp0" in ds or "cp0" not in ds


def test_deterministic_grammar():
    g = load_grammar('s0: s -> a b | $1 $2\na0: a -> "x" | x\nb0: b -> "y" | y')
    vocab = NgramVocab.build([["x"]])
    s = Scorer(ScorerParams.init(len(g.labels), vocab, SMALL, np.random.default_rng(0)), g.labels, vocab)
    assert decode(s, builder(g).build(["x"]), ["x"]) == ("s0", "a0", "b0")


@pytest.mark.parametrize("seed", range(8))
def test_capped_decode_matches_exhaustive_argmax(fig1x, seed):
    s, utt = random_case(fig1x, seed)
    bg = builder(fig1x).build(utt) if seed % 2 else builder(fig1x).grammar_only()
    ds = decode(s, bg, utt, max_len=10)
    assert ds == exhaustive_argmax(fig1x, s, bg, utt)[1]
    parse_ds(ds, fig1x)


@pytest.mark.parametrize("seed", range(8))
def test_uncapped_decode_dominates_short_argmax(fig1x, seed):
    s, utt = random_case(fig1x, seed)
    bg = builder(fig1x).build(utt)
    ds = decode(s, bg, utt)
    best, short = exhaustive_argmax(fig1x, s, bg, utt)
    if len(ds) <= 10:
        assert ds == short
    else:
        assert sequence_logprob(s, bg, utt, ds) >= best
    parse_ds(ds, fig1x)


def test_search_node_order():
    assert SearchNode(1.0, ("b",)) < SearchNode(1.0, ("c",)) < SearchNode(2.0, ("a",))


def test_budget(fig1):
    s = Scorer.zeros(fig1.labels)
    with pytest.raises(SearchBudgetError):
        decode(s, UniformBackground(fig1.labels), ["x"], budget=0)
    # with a uniform background the empty sequence is already optimal
    assert decode(s, UniformBackground(fig1.labels), ["x"], budget=3) == ()


class PointMass:
    """Background that puts all mass on one gold sequence."""

    def __init__(self, ds):
        self.ds = tuple(ds)

    def conditional(self, prefix):
        k = len(prefix)
        if k < len(self.ds):
            return NextSymbolDistribution({self.ds[k]: 1.0}, 0.0)
        return NextSymbolDistribution({}, 1.0)


def test_oracle_background_gives_perfect_accuracy(pubs):
    corpus = synthesize(pubs, n_train=10, n_test=10, seed=5)
    rep = evaluate(corpus.test, Scorer.zeros(pubs.labels), pubs, lambda ex: PointMass(ex.ds))
    assert rep.n == 10 and rep.accuracy == 1.0


def test_empty_evaluation(pubs):
    rep = evaluate([], Scorer.zeros(pubs.labels), pubs, lambda ex: PointMass(ex.ds))
    assert rep.n == 0 and rep.accuracy == 0.0


def test_failed_decodes_count_as_wrong(fig1):
    ex = TrainingExample(("article",), ("s0", "np1", "typenp0"))
    rep = evaluate([ex], Scorer.zeros(fig1.labels), fig1, lambda e: UniformBackground(fig1.labels), budget=2)
    assert rep.correct == 0 and rep.outcomes[0].predicted is None


def test_kl_to_uniform():
    assert kl_to_uniform(np.full(4, 0.25)) == pytest.approx(0.0, abs=1e-15)
    assert kl_to_uniform(np.array([1.0, 0, 0, 0])) == pytest.approx(math.log(4))


def test_entity_step_kl_zero_model(pubs):
    data = [TrainingExample(("papers", "citing", "acl"), ("s0", "np0", "np1", "typenp0", "cp1", "entitynp5"))]
    kl, n = entity_step_kl(Scorer.zeros(pubs.labels), data, frozenset({"entitynp5"}))
    assert n == 1 and kl == pytest.approx(0.0, abs=1e-15)
    assert math.isnan(entity_step_kl(Scorer.zeros(pubs.labels), data, frozenset())[0])
