"""Background vs. baseline comparison on a synthetic corpus."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from .background import AliasTable, BackgroundBuilder, Conditional, EntityLexicon, UniformBackground
from .decode import EvalReport, entity_step_kl, evaluate
from .grammar import Cfg
from .scorer import Scorer, TrainConfig, TrainingExample, train
from .synth import SynthCorpus, entity_labels
from .wfsa import PriorConfig

log = logging.getLogger(__name__)


BACKGROUND_KINDS = ("input", "grammar", "uniform")


@dataclass
class Pipeline:
    """Backgrounds for one grammar.

    ``kind`` selects the background: "input" intersects with the entities
    detected in the utterance, "grammar" keeps derivations well formed but
    ignores the utterance, and "uniform" is no background at all.
    """

    g: Cfg
    builder: BackgroundBuilder
    kind: str = "input"

    def __post_init__(self):
        if self.kind not in BACKGROUND_KINDS:
            raise ValueError(f"background kind must be one of {BACKGROUND_KINDS}, got {self.kind!r}")

    @classmethod
    def create(cls, g: Cfg, prior: PriorConfig, aliases: AliasTable | None = None, kind: str = "input") -> Pipeline:
        dates = AliasTable.months() if aliases is None else aliases
        return cls(g, BackgroundBuilder(g, EntityLexicon.from_grammar(g), dates, prior), kind)

    def background(self, ex: TrainingExample) -> Conditional:
        if self.kind == "input":
            return self.builder.build(ex.utterance)
        if self.kind == "grammar":
            return self.builder.grammar_only()
        return UniformBackground(self.g.labels)

    def with_kind(self, kind: str) -> Pipeline:
        return Pipeline(self.g, self.builder, kind)


@dataclass
class ExperimentResult:
    background: EvalReport
    baseline: EvalReport
    heldout_background: EvalReport
    heldout_baseline: EvalReport
    kl_background: float
    kl_baseline: float
    kl_steps: int
    scorer: Scorer
    baseline_scorer: Scorer
    seconds: float


def run_experiment(
    g: Cfg,
    corpus: SynthCorpus,
    prior: PriorConfig = PriorConfig(),
    cfg: TrainConfig = TrainConfig(),
    kl_steps: int = 100,
    baseline_kind: str = "uniform",
) -> ExperimentResult:
    """Train with the input background and with ``baseline_kind``, then compare."""
    t0 = time.perf_counter()
    with_bg = Pipeline.create(g, prior)
    no_bg = with_bg.with_kind(baseline_kind)
    scorer = train(corpus.train, g.labels, with_bg.background, cfg)
    log.info("background model trained (%.1fs)", time.perf_counter() - t0)
    baseline = train(corpus.train, g.labels, no_bg.background, cfg)
    log.info("baseline model trained (%.1fs)", time.perf_counter() - t0)
    rep = evaluate(corpus.test, scorer, g, with_bg.background)
    rep0 = evaluate(corpus.test, baseline, g, no_bg.background)
    held_idx = [i for i, ex in enumerate(corpus.test) if corpus.heldout & set(ex.ds)]
    entities = entity_labels(g)
    kl, n = entity_step_kl(scorer, corpus.test, entities, kl_steps, cfg.seed)
    kl0, _ = entity_step_kl(baseline, corpus.test, entities, kl_steps, cfg.seed)
    return ExperimentResult(
        background=rep,
        baseline=rep0,
        heldout_background=EvalReport([rep.outcomes[i] for i in held_idx]),
        heldout_baseline=EvalReport([rep0.outcomes[i] for i in held_idx]),
        kl_background=kl,
        kl_baseline=kl0,
        kl_steps=n,
        scorer=scorer,
        baseline_scorer=baseline,
        seconds=time.perf_counter() - t0,
    )
