from __future__ import annotations

import pytest

from dsprior.grammar import parse_ds
from dsprior.synth import entity_labels, synthesize


def test_heldout_entities_never_in_training(pubs):
    c = synthesize(pubs, n_train=80, n_test=20, seed=1)
    assert c.heldout and c.heldout < entity_labels(pubs)
    assert not any(c.heldout & set(ex.ds) for ex in c.train)
    assert sum(bool(c.heldout & set(ex.ds)) for ex in c.test) == 10


def test_examples_are_grammatical_and_bounded(pubs):
    c = synthesize(pubs, n_train=50, n_test=10, seed=2, max_len=9)
    for ex in c.train + c.test:
        parse_ds(ex.ds, pubs)
        assert len(ex.ds) <= 9 and ex.utterance


def test_deterministic(pubs):
    assert synthesize(pubs, 30, 10, seed=4) == synthesize(pubs, 30, 10, seed=4)
    assert synthesize(pubs, 30, 10, seed=4) != synthesize(pubs, 30, 10, seed=5)


def test_explicit_heldout(pubs):
    label = sorted(entity_labels(pubs))[0]
    assert synthesize(pubs, 10, 4, heldout=[label]).heldout == {label}
    with pytest.raises(ValueError):
        synthesize(pubs, 10, 4, heldout=["s0"])


def test_needs_two_entities(fig1):
    with pytest.raises(ValueError):
        synthesize(fig1, 10, 4)
