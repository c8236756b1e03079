from __future__ import annotations

import logging

import pytest

from dsprior.background import (
    AliasTable,
    BackgroundBuilder,
    EntityLexicon,
    InfeasibleBackgroundError,
    UniformBackground,
    build_background,
    detect_entities,
    factor_automaton,
    tokenize,
)
from dsprior.grammar import build_ds_grammar, load_grammar
from dsprior.intersect import next_symbol_distribution, normalize
from dsprior.wfsa import PriorConfig

MONTHS = AliasTable.months()
P = PriorConfig(eta=0.01)


def lex(g):
    return EntityLexicon.from_grammar(g)


def test_detect_fixture(fig1):
    assert detect_entities(tokenize("articles published in 1950"), lex(fig1), MONTHS) == {"entitynp0"}
    assert detect_entities(tokenize("hello world"), lex(fig1), MONTHS) == frozenset()


def test_detect_date_alias(pubs):
    assert detect_entities(tokenize("jan 2 meeting"), lex(pubs), MONTHS) == {"entitynp4"}
    assert detect_entities(tokenize("January 2 meeting"), lex(pubs), MONTHS) == {"entitynp4"}


def test_detect_longest_match(pubs):
    found = detect_entities(tokenize("papers by alice smith citing shaq oneal"), lex(pubs), MONTHS)
    assert found == {"entitynp2", "entitynp6"}


def test_lexicon_extra_variants(pubs):
    lx = EntityLexicon.from_grammar(pubs, extra={"shaq": "entitynp6"})
    assert detect_entities(tokenize("shaq papers"), lx, MONTHS) == {"entitynp6"}
    with pytest.raises(ValueError):
        EntityLexicon.from_grammar(pubs, extra={"x": "nope"})


def test_alias_table():
    t = AliasTable.loads("# comment\nfeb => february\n")
    assert t.canonicalize(["feb", "3"]) == ("february", "3")
    with pytest.raises(ValueError):
        AliasTable.from_pairs([("a", "b"), ("a", "c")])
    with pytest.raises(ValueError):
        AliasTable.loads("feb february")
    assert MONTHS.merged(t).canonicalize(["jan", "feb"]) == ("january", "february")


def test_no_entities_is_grammar_only(fig1, gw0):
    b = build_background(fig1, tokenize("hello"), lex(fig1), MONTHS, P)
    assert b.labels == frozenset()
    assert b.conditional(["s0"]).probs == pytest.approx(next_symbol_distribution(normalize(gw0), ["s0"]).probs)


def test_entity_background_worked_value(fig1):
    b = build_background(fig1, tokenize("articles published in 1950"), lex(fig1), MONTHS, P)
    d = b.conditional(["s0"])
    assert d["np0"] == pytest.approx(0.5 / 0.505, abs=1e-9)
    assert d["np1"] == pytest.approx(0.005 / 0.505, abs=1e-9)
    assert b.conditional([]).probs == pytest.approx({"s0": 1.0})
    d = b.conditional(["s0", "np0", "np1", "typenp0", "cp0", "relnp0"])
    assert d.probs == pytest.approx({"entitynp0": 1.0})
    assert b.conditional(["s0", "np1", "typenp0"]).end_prob == pytest.approx(1.0)


def test_two_entities_product_has_four_states(pubs):
    a = factor_automaton({"entitynp0", "entitynp1"}, 0.01, frozenset(pubs.labels))
    assert a.n_states == 4


def test_entity_lift(fig1x):
    prefix = ["s0", "np0", "np1", "typenp0", "cp0", "relnp0"]
    plain = build_background(fig1x, tokenize("papers"), lex(fig1x), MONTHS, P).conditional(prefix)
    for eta in (0.0, 0.0001, 0.01, 0.5):
        b = build_background(fig1x, tokenize("papers from 1984"), lex(fig1x), MONTHS, PriorConfig(eta=eta))
        assert b.conditional(prefix)["entitynp1"] > plain["entitynp1"]


def test_eta_one_is_identity(fig1x):
    b = build_background(fig1x, tokenize("papers from 1984"), lex(fig1x), MONTHS, PriorConfig(eta=1.0))
    assert b.grammar.rules == normalize(build_ds_grammar(fig1x)).rules


def test_infeasible_falls_back(caplog):
    # the entity rule is never reachable from the start symbol
    g2 = load_grammar('s0: s -> "x" | x\ne0: entitynp -> "b" | b')
    with pytest.raises(InfeasibleBackgroundError):
        build_background(g2, tokenize("b"), lex(g2), MONTHS, PriorConfig(eta=0.0))
    builder = BackgroundBuilder(g2, lex(g2), MONTHS, PriorConfig(eta=0.0))
    with caplog.at_level(logging.WARNING):
        b = builder.build(tokenize("b"))
    assert b.fallback and "falling back" in caplog.text
    assert b.conditional([]).probs == {"s0": 1.0}


def test_builder_caches_by_label_set(pubs):
    builder = BackgroundBuilder(pubs, lex(pubs), MONTHS, P)
    a = builder.build(tokenize("papers citing acl"))
    b = builder.build(tokenize("books by acl"))
    assert a.grammar is b.grammar and a.utterance != b.utterance
    a.conditional(["s0"])
    assert ("s0",) in b._cache


def test_uniform_background():
    u = UniformBackground(("a", "b", "c"))
    d = u.conditional(["a"])
    assert d.probs == {"a": 0.25, "b": 0.25, "c": 0.25} and d.end_prob == 0.25
