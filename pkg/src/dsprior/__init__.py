"""Derivation-sequence semantic parsing with grammar-derived background priors."""

from .background import AliasTable, Background, BackgroundBuilder, EntityLexicon, UniformBackground, detect_entities
from .decode import decode, evaluate
from .grammar import Cfg, DerivationTree, build_ds_grammar, compose_lf, linearize, load_grammar, parse_ds, read_grammar, yield_cf
from .intersect import intersect, next_symbol_distribution, normalize
from .scorer import Scorer, TrainConfig, TrainingExample, train
from .wcfg import Pcfg, Wcfg
from .wfsa import PriorConfig, Wfsa

__all__ = [
    "AliasTable", "Background", "BackgroundBuilder", "Cfg", "DerivationTree", "EntityLexicon", "Pcfg",
    "PriorConfig", "Scorer", "TrainConfig", "TrainingExample", "UniformBackground", "Wcfg", "Wfsa",
    "build_ds_grammar", "compose_lf", "decode", "detect_entities", "evaluate", "intersect", "linearize",
    "load_grammar", "next_symbol_distribution", "normalize", "parse_ds", "read_grammar", "train", "yield_cf",
]
