"""Central finite differences against the analytic scorer gradient."""

from __future__ import annotations

import numpy as np

from dsprior.scorer import Scorer, TrainingExample, grad, sequence_loss

EPS = 1e-4
FLOOR = 1e-6


def sample_coordinates(scorer: Scorer, ex: TrainingExample, n: int, rng: np.random.Generator):
    """``n`` (block, index) pairs spread over every block.

    Projection rows are drawn from the n-grams present in the utterance,
    since the other rows cannot affect the loss.
    """
    b1, b2 = scorer.vocab.bags(ex.utterance)
    rows = {"unigram_proj": np.flatnonzero(b1), "bigram_proj": np.flatnonzero(b2)}
    blocks = scorer.params.blocks()
    names = sorted(blocks)
    out = []
    for k in range(n):
        name = names[k % len(names)]
        shape = blocks[name].shape
        if name in rows:
            idx = (int(rng.choice(rows[name])), int(rng.integers(shape[1])))
        else:
            idx = tuple(int(rng.integers(s)) for s in shape)
        out.append((name, idx))
    return out


def max_relative_error(scorer: Scorer, ex: TrainingExample, bgs: np.ndarray, n: int, seed: int = 0) -> tuple[float, int]:
    """Largest |analytic - numeric| / max(|analytic|, |numeric|, FLOOR) over ``n`` coordinates."""
    _, g = grad(ex, scorer, bgs)
    rng = np.random.default_rng(seed)
    worst = 0.0
    coords = sample_coordinates(scorer, ex, n, rng)
    for name, idx in coords:
        block = getattr(scorer.params, name)
        old = block[idx]
        block[idx] = old + EPS
        up = sequence_loss(ex, scorer, bgs)
        block[idx] = old - EPS
        down = sequence_loss(ex, scorer, bgs)
        block[idx] = old
        numeric = (up - down) / (2 * EPS)
        analytic = getattr(g, name)[idx]
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), FLOOR))
    return worst, len(coords)
