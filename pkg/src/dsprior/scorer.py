"""The trainable scorer: n-gram input encoder, Elman recurrence over the
derivation-sequence prefix, two-layer head, and additive combination with
log b before the softmax. Gradients are derived by hand.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .background import Conditional
from .intersect import NextSymbolDistribution

log = logging.getLogger(__name__)

END = "<end>"
BOS = "<bos>"
OOV = "<oov>"
FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class ZeroBackgroundError(ValueError):
    """The gold symbol has background probability zero."""


@dataclass(frozen=True)
class NgramVocab:
    unigrams: dict[str, int]
    bigrams: dict[str, int]

    @classmethod
    def build(cls, utterances: Sequence[Sequence[str]]) -> NgramVocab:
        uni = {OOV: 0}
        bi = {OOV: 0}
        for u in utterances:
            for t in u:
                uni.setdefault(t, len(uni))
            for b in _bigrams(u):
                bi.setdefault(b, len(bi))
        return cls(uni, bi)

    @classmethod
    def empty(cls) -> NgramVocab:
        return cls({OOV: 0}, {OOV: 0})

    def bags(self, utterance: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        b1 = np.zeros(len(self.unigrams))
        b2 = np.zeros(len(self.bigrams))
        for t in utterance:
            b1[self.unigrams.get(t, 0)] += 1
        for b in _bigrams(utterance):
            b2[self.bigrams.get(b, 0)] += 1
        return b1, b2


def _bigrams(u: Sequence[str]) -> list[str]:
    if not u:
        return []
    padded = ["<s>", *u, "</s>"]
    return [f"{a} {b}" for a, b in zip(padded, padded[1:])]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.1
    embed_dim: int = 16
    hidden_dim: int = 32
    unigram_dim: int = 16
    bigram_dim: int = 16
    head_dim: int = 32
    dropout_unigram: float = 0.1
    dropout_bigram: float = 0.3
    init_scale: float = 0.1
    seed: int = 42

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        for p in (self.dropout_unigram, self.dropout_bigram):
            if not 0 <= p < 1:
                raise ValueError("dropout rates must lie in [0, 1)")


@dataclass
class ScorerParams:
    """Parameter blocks. Output index ``n_labels`` is END; embedding row ``n_labels`` is BOS."""

    unigram_proj: np.ndarray  # (V1, d1)
    unigram_bias: np.ndarray  # (d1,)
    bigram_proj: np.ndarray  # (V2, d2)
    bigram_bias: np.ndarray  # (d2,)
    embed: np.ndarray  # (L+1, de)
    w_in: np.ndarray  # (de, dh)
    w_rec: np.ndarray  # (dh, dh)
    b_rec: np.ndarray  # (dh,)
    w_hid: np.ndarray  # (dh+d1+d2, dm)
    b_hid: np.ndarray  # (dm,)
    w_out: np.ndarray  # (dm, L+1)
    b_out: np.ndarray  # (L+1,)

    @classmethod
    def init(cls, n_labels: int, vocab: NgramVocab, cfg: TrainConfig, rng: np.random.Generator | None = None) -> ScorerParams:
        """Gaussian init with std ``cfg.init_scale``, biases zero. ``rng=None`` gives all zeros."""
        d1, d2, de, dh, dm = cfg.unigram_dim, cfg.bigram_dim, cfg.embed_dim, cfg.hidden_dim, cfg.head_dim
        shapes = {
            "unigram_proj": (len(vocab.unigrams), d1),
            "unigram_bias": (d1,),
            "bigram_proj": (len(vocab.bigrams), d2),
            "bigram_bias": (d2,),
            "embed": (n_labels + 1, de),
            "w_in": (de, dh),
            "w_rec": (dh, dh),
            "b_rec": (dh,),
            "w_hid": (dh + d1 + d2, dm),
            "b_hid": (dm,),
            "w_out": (dm, n_labels + 1),
            "b_out": (n_labels + 1,),
        }
        blocks = {}
        for name, shape in shapes.items():
            if rng is None or len(shape) == 1:
                blocks[name] = np.zeros(shape)
            else:
                blocks[name] = rng.normal(0.0, cfg.init_scale, size=shape)
        return cls(**blocks)

    def blocks(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def zeros_like(self) -> ScorerParams:
        return ScorerParams(**{k: np.zeros_like(v) for k, v in self.blocks().items()})

    def copy(self) -> ScorerParams:
        return ScorerParams(**{k: v.copy() for k, v in self.blocks().items()})

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.blocks().values())


@dataclass
class Scorer:
    """Parameters together with the label order and n-gram vocabulary they index."""

    params: ScorerParams
    labels: tuple[str, ...]
    vocab: NgramVocab
    history: list[float] = field(default_factory=list)

    @property
    def index(self) -> dict[str, int]:
        return {x: i for i, x in enumerate(self.labels)}

    @property
    def outputs(self) -> tuple[str, ...]:
        return (*self.labels, END)

    def save(self, path: str | Path) -> None:
        meta = {
            "version": FORMAT_VERSION,
            "labels": list(self.labels),
            "unigrams": self.vocab.unigrams,
            "bigrams": self.vocab.bigrams,
            "history": self.history,
        }
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta)), **self.params.blocks())

    @classmethod
    def load(cls, path: str | Path) -> Scorer:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            if meta.get("version") != FORMAT_VERSION:
                raise ValueError(f"unsupported model file version {meta.get('version')!r}")
            params = ScorerParams(**{f.name: data[f.name].copy() for f in fields(ScorerParams)})
        vocab = NgramVocab(meta["unigrams"], meta["bigrams"])
        return cls(params, tuple(meta["labels"]), vocab, meta["history"])

    @classmethod
    def zeros(cls, labels: Sequence[str], cfg: TrainConfig | None = None) -> Scorer:
        vocab = NgramVocab.empty()
        return cls(ScorerParams.init(len(labels), vocab, cfg or TrainConfig()), tuple(labels), vocab)


@dataclass(frozen=True)
class TrainingExample:
    utterance: tuple[str, ...]
    ds: tuple[str, ...]


def read_dataset(path: str | Path) -> list[TrainingExample]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        utt, tab, ds = line.partition("\t")
        if not tab:
            raise ValueError(f"{path}:{lineno}: expected 'utterance<TAB>labels'")
        out.append(TrainingExample(tuple(utt.lower().split()), tuple(ds.split())))
    return out


def write_dataset(path: str | Path, examples: Sequence[TrainingExample]) -> None:
    Path(path).write_text("".join(f"{' '.join(e.utterance)}\t{' '.join(e.ds)}\n" for e in examples), encoding="utf-8")


# -- forward pieces -------------------------------------------------------


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def _dropout_masks(params: ScorerParams, cfg: TrainConfig, rng: np.random.Generator):
    d1 = params.unigram_proj.shape[0]
    d2 = params.bigram_proj.shape[0]
    m1 = (rng.random(d1) >= cfg.dropout_unigram) / (1.0 - cfg.dropout_unigram)
    m2 = (rng.random(d2) >= cfg.dropout_bigram) / (1.0 - cfg.dropout_bigram)
    return m1, m2


def encode_input(
    utterance: Sequence[str],
    vocab: NgramVocab,
    params: ScorerParams,
    dropout: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """u_b = [bag1 @ P1 + c1, bag2 @ P2 + c2]; a dropout mask scales the n-gram counts of each bag."""
    b1, b2 = vocab.bags(utterance)
    if dropout is not None:
        b1 = b1 * dropout[0]
        b2 = b2 * dropout[1]
    u1 = b1 @ params.unigram_proj + params.unigram_bias
    u2 = b2 @ params.bigram_proj + params.bigram_bias
    return np.concatenate([u1, u2])


def _run_rnn(params: ScorerParams, inputs: Sequence[int]) -> list[np.ndarray]:
    h = np.zeros(params.b_rec.shape[0])
    states = []
    for x in inputs:
        h = np.tanh(params.embed[x] @ params.w_in + h @ params.w_rec + params.b_rec)
        states.append(h)
    return states


def _head(params: ScorerParams, h: np.ndarray, u_b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    z = np.concatenate([h, u_b])
    a = np.tanh(z @ params.w_hid + params.b_hid)
    return z, a, a @ params.w_out + params.b_out


def model_logits(params: ScorerParams, u_b: np.ndarray, prefix_ids: Sequence[int]) -> np.ndarray:
    bos = params.embed.shape[0] - 1
    h = _run_rnn(params, [bos, *prefix_ids])[-1]
    return _head(params, h, u_b)[2]


def model_distribution(params: ScorerParams, u_b: np.ndarray, prefix_ids: Sequence[int]) -> np.ndarray:
    """Softmax over labels + END after reading ``prefix_ids`` (label indices)."""
    return _softmax(model_logits(params, u_b, prefix_ids))


def background_vector(dist: NextSymbolDistribution, labels: Sequence[str]) -> np.ndarray:
    return np.array([dist[x] for x in labels] + [dist.end_prob])


def _combined_from_logits(logits: np.ndarray, b: np.ndarray) -> np.ndarray:
    support = b > 0
    if not support.any():
        raise ValueError("background is zero everywhere")
    s = np.full_like(logits, -np.inf)
    s[support] = logits[support] + np.log(b[support])
    s -= s[support].max()
    p = np.where(support, np.exp(s), 0.0)
    return p / p.sum()


def combined_distribution(model: np.ndarray, bg: np.ndarray) -> np.ndarray:
    """p(x) proportional to b(x) * m(x); symbols with b(x) = 0 get exactly 0."""
    model = np.asarray(model, dtype=float)
    bg = np.asarray(bg, dtype=float)
    if (bg < 0).any():
        raise ValueError("background must be nonnegative")
    return _combined_from_logits(np.log(model), bg)


# -- loss and gradient -----------------------------------------------------


def example_backgrounds(ex: TrainingExample, bg: Conditional, labels: Sequence[str]) -> np.ndarray:
    """One background row per prediction step (len(ds) + 1 rows, the last predicting END)."""
    return np.stack([background_vector(bg.conditional(ex.ds[:t]), labels) for t in range(len(ex.ds) + 1)])


def _forward_backward(
    params: ScorerParams,
    utterance: Sequence[str],
    targets: Sequence[int],
    bgs: np.ndarray,
    vocab: NgramVocab,
    dropout: tuple[np.ndarray, np.ndarray] | None,
    want_grad: bool,
) -> tuple[float, ScorerParams | None]:
    n_out = params.b_out.shape[0]
    end = n_out - 1
    bos = params.embed.shape[0] - 1
    b1, b2 = vocab.bags(utterance)
    if dropout is not None:
        b1 = b1 * dropout[0]
        b2 = b2 * dropout[1]
    u1 = b1 @ params.unigram_proj + params.unigram_bias
    u2 = b2 @ params.bigram_proj + params.bigram_bias
    u_b = np.concatenate([u1, u2])
    inputs = [bos, *targets]
    gold = [*targets, end]
    states = _run_rnn(params, inputs)

    loss = 0.0
    cache = []
    for t, h in enumerate(states):
        z, a, logits = _head(params, h, u_b)
        p = _combined_from_logits(logits, bgs[t])
        if p[gold[t]] <= 0:
            raise ZeroBackgroundError(f"gold symbol at step {t} has background probability 0")
        loss -= math.log(p[gold[t]])
        cache.append((z, a, p))
    if not want_grad:
        return loss, None

    g = params.zeros_like()
    dh_out = []
    du_b = np.zeros_like(u_b)
    dh_dim = h.shape[0]
    for t, (z, a, p) in enumerate(cache):
        dlogits = p.copy()
        dlogits[gold[t]] -= 1.0
        g.w_out += np.outer(a, dlogits)
        g.b_out += dlogits
        dpre = (dlogits @ params.w_out.T) * (1.0 - a * a)
        g.w_hid += np.outer(z, dpre)
        g.b_hid += dpre
        dz = dpre @ params.w_hid.T
        dh_out.append(dz[:dh_dim])
        du_b += dz[dh_dim:]

    dnext = np.zeros(dh_dim)
    for t in range(len(states) - 1, -1, -1):
        h = states[t]
        dpre = (dh_out[t] + dnext) * (1.0 - h * h)
        x = inputs[t]
        g.w_in += np.outer(params.embed[x], dpre)
        g.embed[x] += dpre @ params.w_in.T
        g.b_rec += dpre
        if t > 0:
            g.w_rec += np.outer(states[t - 1], dpre)
        dnext = dpre @ params.w_rec.T

    d1 = u1.shape[0]
    du1 = du_b[:d1]
    du2 = du_b[d1:]
    g.unigram_proj += np.outer(b1, du1)
    g.unigram_bias += du1
    g.bigram_proj += np.outer(b2, du2)
    g.bigram_bias += du2
    return loss, g


def sequence_loss(
    ex: TrainingExample,
    scorer: Scorer,
    bg: Conditional | np.ndarray,
    dropout: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Sum over steps (END included) of -log p(gold | prefix)."""
    bgs = bg if isinstance(bg, np.ndarray) else example_backgrounds(ex, bg, scorer.labels)
    idx = scorer.index
    return _forward_backward(scorer.params, ex.utterance, [idx[x] for x in ex.ds], bgs, scorer.vocab, dropout, False)[0]


def grad(ex: TrainingExample, scorer: Scorer, bg: Conditional | np.ndarray) -> tuple[float, ScorerParams]:
    """Loss and its exact gradient with dropout off."""
    bgs = bg if isinstance(bg, np.ndarray) else example_backgrounds(ex, bg, scorer.labels)
    idx = scorer.index
    return _forward_backward(scorer.params, ex.utterance, [idx[x] for x in ex.ds], bgs, scorer.vocab, None, True)


def train(
    dataset: Sequence[TrainingExample],
    labels: Sequence[str],
    background_for: Callable[[TrainingExample], Conditional],
    cfg: TrainConfig = TrainConfig(),
) -> Scorer:
    """Per-example SGD on the mean-over-steps loss, ``cfg.epochs`` shuffled passes.

    ``background_for`` maps an example to its background; background rows are
    computed once up front since they do not depend on the parameters.
    """
    if not dataset:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    labels = tuple(labels)
    vocab = NgramVocab.build([ex.utterance for ex in dataset])
    scorer = Scorer(ScorerParams.init(len(labels), vocab, cfg, rng), labels, vocab)
    idx = scorer.index
    prepared = []
    for ex in dataset:
        bgs = example_backgrounds(ex, background_for(ex), labels)
        prepared.append((ex.utterance, [idx[x] for x in ex.ds], bgs))

    params = scorer.params
    history = []
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for step, i in enumerate(rng.permutation(len(prepared))):
            utt, targets, bgs = prepared[i]
            masks = _dropout_masks(params, cfg, rng)
            loss, g = _forward_backward(params, utt, targets, bgs, scorer.vocab, masks, True)
            scale = cfg.learning_rate / len(bgs)
            for name, block in params.blocks().items():
                block -= scale * getattr(g, name)
            if not (math.isfinite(loss) and params.all_finite()):
                raise TrainingError(f"non-finite loss or parameters at epoch {epoch}, step {step}")
            total += loss / len(bgs)
        history.append(total / len(prepared))
        log.info("epoch %d: mean per-step loss %.4f", epoch, history[-1])
    scorer.history = history
    return scorer
