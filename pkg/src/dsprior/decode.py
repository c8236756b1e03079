"""Uniform-cost decoding under the combined distribution, and exact-match evaluation."""

from __future__ import annotations

import heapq
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .background import Conditional
from .grammar import Cfg, DerivationError, compose_lf, parse_ds
from .scorer import (
    END,
    Scorer,
    TrainingExample,
    _combined_from_logits,
    _head,
    background_vector,
    encode_input,
    model_distribution,
)

DEFAULT_BUDGET = 100_000


class SearchBudgetError(RuntimeError):
    pass


@dataclass(order=True, frozen=True)
class SearchNode:
    cost: float
    prefix: tuple[str, ...]
    complete: bool = False


class _StepScorer:
    """Combined next-symbol distributions for one utterance, with RNN states cached by prefix."""

    def __init__(self, scorer: Scorer, bg: Conditional, utterance: Sequence[str]):
        self.scorer = scorer
        self.bg = bg
        self.params = scorer.params
        self.u_b = encode_input(utterance, scorer.vocab, scorer.params)
        self.index = scorer.index
        bos = self.params.embed.shape[0] - 1
        self.states = {(): self._step(np.zeros(self.params.b_rec.shape[0]), bos)}

    def _step(self, h: np.ndarray, x: int) -> np.ndarray:
        p = self.params
        return np.tanh(p.embed[x] @ p.w_in + h @ p.w_rec + p.b_rec)

    def state(self, prefix: tuple[str, ...]) -> np.ndarray:
        h = self.states.get(prefix)
        if h is None:
            h = self._step(self.state(prefix[:-1]), self.index[prefix[-1]])
            self.states[prefix] = h
        return h

    def distribution(self, prefix: tuple[str, ...]) -> np.ndarray:
        logits = _head(self.params, self.state(prefix), self.u_b)[2]
        b = background_vector(self.bg.conditional(prefix), self.scorer.labels)
        return _combined_from_logits(logits, b)


def decode(
    scorer: Scorer,
    bg: Conditional,
    utterance: Sequence[str],
    budget: int = DEFAULT_BUDGET,
    max_len: int | None = None,
) -> tuple[str, ...]:
    """Most probable complete derivation sequence, by uniform-cost search on -log p.

    Step costs are nonnegative, so the first complete node popped is optimal.
    Equal costs pop in lexicographic order of their label sequences. With
    ``max_len`` the search is restricted to sequences of at most that many labels.
    """
    steps = _StepScorer(scorer, bg, utterance)
    outputs = scorer.outputs
    frontier = [SearchNode(0.0, ())]
    expansions = 0
    while frontier:
        node = heapq.heappop(frontier)
        if node.complete:
            return node.prefix
        expansions += 1
        if expansions > budget:
            break
        p = steps.distribution(node.prefix)
        for i in np.flatnonzero(p > 0):
            cost = node.cost - math.log(p[i])
            if outputs[i] == END:
                heapq.heappush(frontier, SearchNode(cost, node.prefix, True))
            elif max_len is None or len(node.prefix) < max_len:
                heapq.heappush(frontier, SearchNode(cost, node.prefix + (outputs[i],)))
    raise SearchBudgetError(f"no complete derivation within {budget} expansions")


def sequence_logprob(scorer: Scorer, bg: Conditional, utterance: Sequence[str], ds: Sequence[str]) -> float:
    """log of the product of combined step probabilities, END included."""
    steps = _StepScorer(scorer, bg, utterance)
    index = {x: i for i, x in enumerate(scorer.outputs)}
    ds = tuple(ds)
    total = 0.0
    for t in range(len(ds) + 1):
        p = steps.distribution(ds[:t])
        target = p[index[ds[t]]] if t < len(ds) else p[-1]
        if target <= 0:
            return -math.inf
        total += math.log(target)
    return total


@dataclass(frozen=True)
class Outcome:
    utterance: tuple[str, ...]
    gold_lf: str
    predicted: tuple[str, ...] | None
    predicted_lf: str | None
    correct: bool


@dataclass(frozen=True)
class EvalReport:
    outcomes: list[Outcome] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.outcomes)

    @property
    def correct(self) -> int:
        return sum(o.correct for o in self.outcomes)

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.outcomes else 0.0


def evaluate(
    dataset: Sequence[TrainingExample],
    scorer: Scorer,
    g: Cfg,
    background_for: Callable[[TrainingExample], Conditional],
    budget: int = DEFAULT_BUDGET,
) -> EvalReport:
    """Exact LF-string match; decoding failures count as wrong."""
    outcomes = []
    for ex in dataset:
        gold = compose_lf(parse_ds(ex.ds, g), g)
        try:
            pred = decode(scorer, background_for(ex), ex.utterance, budget)
            lf = compose_lf(parse_ds(pred, g), g)
        except (SearchBudgetError, DerivationError, ValueError):
            pred, lf = None, None
        outcomes.append(Outcome(ex.utterance, gold, pred, lf, lf == gold))
    return EvalReport(outcomes)


def kl_to_uniform(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] * len(p))))


def entity_step_kl(
    scorer: Scorer,
    dataset: Sequence[TrainingExample],
    entity_labels: frozenset[str],
    n_steps: int = 100,
    seed: int = 42,
) -> tuple[float, int]:
    """Mean KL(model || uniform) over sampled steps whose gold symbol is an entity rule.

    Uses the model distribution alone, before any background. Returns the
    mean and the number of steps it averages.
    """
    sites = [(i, t) for i, ex in enumerate(dataset) for t, x in enumerate(ex.ds) if x in entity_labels]
    if not sites:
        return math.nan, 0
    rng = np.random.default_rng(seed)
    if len(sites) > n_steps:
        sites = [sites[k] for k in sorted(rng.choice(len(sites), n_steps, replace=False))]
    index = scorer.index
    kls = []
    for i, t in sites:
        ex = dataset[i]
        u_b = encode_input(ex.utterance, scorer.vocab, scorer.params)
        kls.append(kl_to_uniform(model_distribution(scorer.params, u_b, [index[x] for x in ex.ds[:t]])))
    return float(np.mean(kls)), len(kls)
