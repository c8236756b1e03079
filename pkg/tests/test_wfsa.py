from __future__ import annotations

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dsprior.wfsa import (
    PriorConfig,
    Wfsa,
    loads_wfsa,
    penalize_automaton,
    prefix_automaton,
    product,
    product_all,
    require_automaton,
    string_weight,
    unigram_automaton,
    universal_automaton,
)

AB = frozenset("ab")
ABC = frozenset("abc")
seqs = st.lists(st.sampled_from(sorted(ABC)), max_size=8)


def test_require_weights():
    a = require_automaton("a", 0.01, ABC)
    assert string_weight(a, ["b", "c"]) == 0.01
    assert string_weight(a, ["b", "a", "c"]) == 1.0
    assert a.n_states == 2 and a.exit(0) == 0.01 and a.exit(1) == 1.0


def test_require_hard_constraint():
    a = require_automaton("a", 0.0, ABC)
    assert string_weight(a, ["b", "c"]) == 0.0


def test_require_repeated_symbol():
    labels = {"s0", "entitynp0", "np1"}
    assert string_weight(require_automaton("entitynp0", 0.01, labels), ["s0", "entitynp0", "entitynp0"]) == 1.0


def test_penalize():
    a = penalize_automaton("a", 0.1, AB)
    assert a.n_states == 1 and len(a.transitions) == 2 and a.exit(0) == 1.0
    assert string_weight(a, ["b", "b"]) == 1.0
    assert string_weight(a, ["a"]) == 0.1
    assert string_weight(penalize_automaton("a", 0.001, AB), ["a", "b", "a"]) == pytest.approx(1e-6, rel=1e-12)


def test_unigram():
    a = unigram_automaton({"a": 0.5, "b": 0.25}, AB)
    assert string_weight(a, ["a", "b", "a"]) == 0.0625
    assert string_weight(unigram_automaton({"a": 1.0, "b": 1.0}, AB), ["a", "b", "b"]) == 1.0
    assert string_weight(unigram_automaton({"a": 0.0, "b": 1.0}, AB), ["b", "a"]) == 0.0


def test_products():
    u = universal_automaton(ABC)
    ra, rb = require_automaton("a", 0.01, ABC), require_automaton("b", 0.01, ABC)
    assert string_weight(product(ra, rb), ["c", "c"]) == pytest.approx(1e-4, rel=1e-12)
    assert string_weight(product(ra, penalize_automaton("a", 0.1, ABC)), ["a"]) == pytest.approx(0.1, rel=1e-12)
    assert product(ra, rb).n_states == 4
    for seq in itertools.product(sorted(ABC), repeat=3):
        assert string_weight(product(ra, u), seq) == string_weight(ra, seq)


def test_product_alphabet_mismatch():
    with pytest.raises(ValueError):
        product(universal_automaton(AB), universal_automaton(ABC))


def test_prefix_automaton():
    labels = {"s0", "np0", "np1"}
    p = prefix_automaton(["s0", "np0"], labels)
    assert string_weight(p, ["s0", "np0", "np1"]) == 1.0
    assert string_weight(p, ["s0", "np1"]) == 0.0
    assert string_weight(p, ["s0"]) == 0.0
    empty = prefix_automaton([], labels)
    assert empty.n_states == 1 and string_weight(empty, ["np1", "s0"]) == 1.0
    exact = prefix_automaton(["s0", "np0"], labels, exact=True)
    assert string_weight(exact, ["s0", "np0"]) == 1.0
    assert string_weight(exact, ["s0", "np0", "np1"]) == 0.0


def test_symbol_outside_alphabet():
    with pytest.raises(ValueError):
        string_weight(universal_automaton(AB), ["c"])
    with pytest.raises(ValueError):
        require_automaton("z", 0.1, AB)


def test_prior_config():
    assert PriorConfig().eta == 0.01
    with pytest.raises(ValueError):
        PriorConfig(eta=-1)


@given(seqs)
def test_closed_forms(seq):
    assert string_weight(require_automaton("a", 0.01, ABC), seq) == (1.0 if "a" in seq else 0.01)
    assert string_weight(penalize_automaton("b", 0.1, ABC), seq) == pytest.approx(0.1 ** seq.count("b"), rel=1e-12)
    g = {"a": 0.5, "b": 0.25, "c": 2.0}
    expected = 1.0
    for x in seq:
        expected *= g[x]
    assert string_weight(unigram_automaton(g, ABC), seq) == pytest.approx(expected, rel=1e-12)


@given(seqs)
def test_product_is_pointwise(seq):
    parts = [require_automaton("a", 0.01, ABC), require_automaton("c", 0.0001, ABC), penalize_automaton("b", 0.3, ABC)]
    expected = 1.0
    for a in parts:
        expected *= string_weight(a, seq)
    assert string_weight(product_all(parts, ABC), seq) == pytest.approx(expected, rel=1e-12, abs=0)


def test_dumps_round_trip_bit_exact():
    a = product_all([require_automaton("a", 0.1 + 0.2, ABC), penalize_automaton("b", 1 / 3, ABC)], ABC)
    text = a.dumps()
    b = loads_wfsa(text)
    assert b.dumps() == text
    assert b.transitions == a.transitions and dict(b.exits) == dict(a.exits)


def test_malformed_automaton_file():
    with pytest.raises(ValueError, match="line 2"):
        loads_wfsa("states 1\narc 0 a\n")
    with pytest.raises(ValueError):
        Wfsa(1, ((0, "a", -1.0, 0),), {0: 1.0}, frozenset("a"))
