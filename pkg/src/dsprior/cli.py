"""Command-line entry point: ``dsprior <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .background import AliasTable, BackgroundBuilder, EntityLexicon, detect_entities, tokenize
from .decode import DEFAULT_BUDGET, EvalReport, SearchBudgetError, decode, entity_step_kl, evaluate
from .experiment import Pipeline
from .grammar import Cfg, build_ds_grammar, compose_lf, parse_ds, read_grammar, yield_cf
from .intersect import DivergenceError, intersect, next_symbol_distribution, normalize, total_mass
from .oracle import ExplosionError, brute_conditional
from .scorer import END, Scorer, TrainConfig, TrainingError, TrainingExample, read_dataset, train, write_dataset
from .synth import entity_labels, synthesize
from .wcfg import Wcfg, read_wcfg
from .wfsa import DEFAULT_DELTA, ETA_GRID, PriorConfig, Wfsa, penalize_automaton, product_all, read_wfsa, require_automaton

log = logging.getLogger("dsprior")


class UsageError(Exception):
    pass


# -- shared helpers ---------------------------------------------------------


def _grammar(args) -> Cfg:
    if not args.grammar:
        raise UsageError("--grammar is required")
    return read_grammar(args.grammar)


def _prior(args) -> PriorConfig:
    if not 0 <= args.eta <= 1:
        raise UsageError(f"--eta must lie in [0, 1], got {args.eta}")
    return PriorConfig(eta=args.eta, delta=args.delta)


def _aliases(args) -> AliasTable:
    months = AliasTable.months()
    return months.merged(AliasTable.read(args.aliases)) if args.aliases else months


def _pipeline(args, g: Cfg, kind: str | None = None) -> Pipeline:
    if kind is None:
        kind = "uniform" if args.no_background else "input"
    return Pipeline.create(g, _prior(args), _aliases(args), kind)


def _wcfg_input(args) -> Wcfg:
    """--wcfg FILE if given, otherwise GW0 of --grammar."""
    if getattr(args, "wcfg", None):
        return read_wcfg(args.wcfg)
    return build_ds_grammar(_grammar(args))


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, seed=args.seed)


def _format_dist(dist) -> str:
    rows = [f"{x} {p:.12g}" for x, p in sorted(dist.probs.items()) if p > 0]
    if dist.end_prob > 0:
        rows.append(f"{END} {dist.end_prob:.12g}")
    return "\n".join(rows)


# -- subcommands --------------------------------------------------------------


def cmd_check(args) -> int:
    g = _grammar(args)
    print(f"ok: {len(g.rules)} rules, {len(g.nonterminals)} nonterminals, start {g.start}")
    return 0


def cmd_ds_grammar(args) -> int:
    _emit(build_ds_grammar(_grammar(args)).dumps(), args.out)
    return 0


def _automaton(args, alphabet: frozenset[str]) -> Wfsa:
    parts: list[Wfsa] = []
    if args.automaton:
        a = read_wfsa(args.automaton)
        if a.alphabet != alphabet:
            raise UsageError("automaton alphabet differs from the grammar's terminals")
        parts.append(a)
    parts += [require_automaton(x, args.eta, alphabet) for x in args.require]
    parts += [penalize_automaton(x, args.delta, alphabet) for x in args.penalize]
    if not parts:
        raise UsageError("give --automaton, --require or --penalize")
    return product_all(parts, alphabet)


def cmd_intersect(args) -> int:
    g = _wcfg_input(args)
    a = _automaton(args, g.terminals)
    if args.dump_automaton:
        Path(args.dump_automaton).write_text(a.dumps(), encoding="utf-8")
    _emit(intersect(g, a).dumps(), args.out)
    return 0


def cmd_normalize(args) -> int:
    g = _wcfg_input(args)
    log.info("total mass %.12g", total_mass(g))
    _emit(normalize(g).dumps(), args.out)
    return 0


def cmd_prefix_dist(args) -> int:
    prefix = tuple(args.prefix.split())
    if args.utterance is not None:
        g = _grammar(args)
        bg = BackgroundBuilder(g, EntityLexicon.from_grammar(g), _aliases(args), _prior(args)).build(tokenize(args.utterance))
        dist = bg.conditional(prefix)
    else:
        dist = next_symbol_distribution(_wcfg_input(args), prefix)
    _emit(_format_dist(dist), args.out)
    return 0


def cmd_detect(args) -> int:
    g = _grammar(args)
    found = detect_entities(tokenize(args.utterance), EntityLexicon.from_grammar(g), _aliases(args))
    print(" ".join(sorted(found)))
    return 0


def cmd_synth(args) -> int:
    g = _grammar(args)
    if not args.out:
        raise UsageError("--out DIR is required")
    corpus = synthesize(
        g,
        n_train=args.n_train,
        n_test=args.n_test,
        heldout=args.heldout or None,
        seed=args.seed,
        max_len=args.max_len,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(out / "train.tsv", corpus.train)
    write_dataset(out / "test.tsv", corpus.test)
    (out / "heldout.txt").write_text("".join(f"{x}\n" for x in sorted(corpus.heldout)), encoding="utf-8")
    print(f"wrote {len(corpus.train)} train, {len(corpus.test)} test examples; held out {' '.join(sorted(corpus.heldout))}")
    return 0


def cmd_train(args) -> int:
    g = _grammar(args)
    if not args.out:
        raise UsageError("--out MODEL is required")
    data = read_dataset(args.train)
    scorer = train(data, g.labels, _pipeline(args, g).background, _train_config(args))
    scorer.save(args.out)
    print(f"trained on {len(data)} examples; final loss {scorer.history[-1]:.6f}; saved {args.out}")
    return 0


def _load_or_zero(path: str | None, g: Cfg) -> Scorer:
    scorer = Scorer.load(path) if path else Scorer.zeros(g.labels)
    if set(scorer.labels) != set(g.labels):
        raise UsageError("model labels do not match the grammar's rule labels")
    return scorer


def cmd_decode(args) -> int:
    g = _grammar(args)
    scorer = _load_or_zero(args.model, g)
    utt = tokenize(args.utterance)
    pipe = _pipeline(args, g)
    ds = decode(scorer, pipe.background(TrainingExample(utt, ())), utt, args.budget, args.max_len)
    tree = parse_ds(ds, g)
    print(f"DS: {' '.join(ds)}")
    print(f"CF: {' '.join(yield_cf(tree, g))}")
    print(f"LF: {compose_lf(tree, g)}")
    return 0


def _report_line(name: str, rep: EvalReport) -> str:
    return f"{name} accuracy: {rep.accuracy:.4f} ({rep.correct}/{rep.n})"


def _select_eta(args, g: Cfg, data, dev) -> float:
    best = None
    for eta in ETA_GRID:
        pipe = Pipeline.create(g, PriorConfig(eta, args.delta), _aliases(args))
        rep = evaluate(dev, train(data, g.labels, pipe.background, _train_config(args)), g, pipe.background, args.budget)
        print(f"eta {eta:g}: dev accuracy {rep.accuracy:.4f}")
        if best is None or rep.accuracy > best[0]:
            best = (rep.accuracy, eta)
    print(f"selected eta {best[1]:g}")
    return best[1]


def cmd_eval(args) -> int:
    g = _grammar(args)
    test = read_dataset(args.test)
    if args.eta_sweep:
        if not (args.train and args.dev):
            raise UsageError("--eta-sweep needs --train and --dev")
        args.eta = _select_eta(args, g, read_dataset(args.train), read_dataset(args.dev))
    with_bg = _pipeline(args, g, "input")
    baseline = with_bg.with_kind(args.baseline)
    if args.model:
        scorer = Scorer.load(args.model)
    elif args.train:
        scorer = train(read_dataset(args.train), g.labels, with_bg.background, _train_config(args))
    else:
        raise UsageError("give --model or --train")
    if args.baseline_model:
        scorer0 = Scorer.load(args.baseline_model)
    elif args.train:
        scorer0 = train(read_dataset(args.train), g.labels, baseline.background, _train_config(args))
    else:
        raise UsageError("give --baseline-model or --train")
    rep = evaluate(test, scorer, g, with_bg.background, args.budget)
    rep0 = evaluate(test, scorer0, g, baseline.background, args.budget)
    print(_report_line("background", rep))
    print(_report_line(f"baseline ({args.baseline})", rep0))
    held = set(args.heldout)
    if held:
        idx = [i for i, ex in enumerate(test) if held & set(ex.ds)]
        print(_report_line("held-out background", EvalReport([rep.outcomes[i] for i in idx])))
        print(_report_line("held-out baseline", EvalReport([rep0.outcomes[i] for i in idx])))
    if args.jsonl:
        with open(args.jsonl, "w", encoding="utf-8") as fh:
            for o, o0 in zip(rep.outcomes, rep0.outcomes):
                fh.write(json.dumps({
                    "utterance": " ".join(o.utterance),
                    "gold": o.gold_lf,
                    "background": o.predicted_lf,
                    "baseline": o0.predicted_lf,
                }) + "\n")
    return 0


def cmd_kl_report(args) -> int:
    g = _grammar(args)
    test = read_dataset(args.test)
    entities = entity_labels(g)
    rows = [("background", args.model), ("baseline", args.baseline_model)]
    for name, path in rows:
        if not path:
            raise UsageError(f"--{'model' if name == 'background' else 'baseline-model'} is required")
        kl, n = entity_step_kl(Scorer.load(path), test, entities, args.steps, args.seed)
        print(f"{name} mean KL to uniform: {kl:.6f} over {n} entity steps")
    return 0


def cmd_oracle(args) -> int:
    g = _wcfg_input(args)
    prefix = tuple(args.prefix.split())
    engine = next_symbol_distribution(g, prefix)
    brute = brute_conditional(g, prefix, args.max_len, total_mass(g))
    worst = max(
        [abs(engine[x] - brute.dist[x]) for x in set(engine.probs) | set(brute.dist.probs)]
        + [abs(engine.end_prob - brute.dist.end_prob)]
    )
    for x in sorted(set(engine.probs) | set(brute.dist.probs)):
        print(f"{x} engine {engine[x]:.12g} brute {brute.dist[x]:.12g}")
    print(f"{END} engine {engine.end_prob:.12g} brute {brute.dist.end_prob:.12g}")
    ok = worst <= brute.bound + 1e-9
    print(f"max difference {worst:.3g}, bound {brute.bound:.3g}: {'ok' if ok else 'MISMATCH'}")
    return 0 if ok else 1


# -- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grammar", help="base grammar file")
    common.add_argument("--aliases", help="extra alias file, merged with the month table")
    common.add_argument("--eta", type=float, default=0.01, help="weight of sequences missing a detected entity")
    common.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="penalize-automaton weight")
    common.add_argument("--epochs", type=int, default=30)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="decoder expansion budget")
    common.add_argument("--no-background", action="store_true", help="use a uniform background")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dsprior", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, fn, help: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, parents=[common], help=help)
        sp.set_defaults(fn=fn)
        return sp

    add("check", cmd_check, "validate a grammar file")
    add("ds-grammar", cmd_ds_grammar, "print the derivation-sequence grammar GW0")

    sp = add("intersect", cmd_intersect, "intersect a WCFG with automata")
    sp.add_argument("--wcfg", help="weighted grammar file (default: GW0 of --grammar)")
    sp.add_argument("--automaton", help="automaton file")
    sp.add_argument("--require", action="append", default=[], metavar="LABEL")
    sp.add_argument("--penalize", action="append", default=[], metavar="LABEL")
    sp.add_argument("--dump-automaton", metavar="FILE", help="write the combined automaton")

    sp = add("normalize", cmd_normalize, "normalize a WCFG into a PCFG")
    sp.add_argument("--wcfg")

    sp = add("prefix-dist", cmd_prefix_dist, "next-symbol distribution after a prefix")
    sp.add_argument("--wcfg")
    sp.add_argument("--prefix", default="", help="space-separated labels")
    sp.add_argument("--utterance", help="condition on the background of this utterance")

    sp = add("detect", cmd_detect, "print entity rules detected in an utterance")
    sp.add_argument("--utterance", required=True)

    sp = add("synth", cmd_synth, "generate a synthetic corpus")
    sp.add_argument("--n-train", type=int, default=500)
    sp.add_argument("--n-test", type=int, default=100)
    sp.add_argument("--max-len", type=int, default=11)
    sp.add_argument("--heldout", nargs="*", default=[], metavar="LABEL")

    sp = add("train", cmd_train, "train a scorer")
    sp.add_argument("--train", required=True, help="training TSV")

    sp = add("decode", cmd_decode, "parse one utterance")
    sp.add_argument("--utterance", required=True)
    sp.add_argument("--model", help="model file (default: all-zero parameters)")
    sp.add_argument("--max-len", type=int, help="only consider derivation sequences up to this length")

    sp = add("eval", cmd_eval, "exact-LF accuracy with and without the background")
    sp.add_argument("--test", required=True)
    sp.add_argument("--train")
    sp.add_argument("--dev")
    sp.add_argument("--model")
    sp.add_argument("--baseline-model")
    sp.add_argument("--baseline", choices=("uniform", "grammar"), default="uniform")
    sp.add_argument("--heldout", nargs="*", default=[], metavar="LABEL")
    sp.add_argument("--eta-sweep", action="store_true", help="pick eta from the grid on --dev")
    sp.add_argument("--jsonl", help="write per-example predictions")

    sp = add("kl-report", cmd_kl_report, "mean KL to uniform at entity steps")
    sp.add_argument("--test", required=True)
    sp.add_argument("--model")
    sp.add_argument("--baseline-model")
    sp.add_argument("--steps", type=int, default=100)

    sp = add("oracle", cmd_oracle, "compare prefix conditionals with brute-force enumeration")
    sp.add_argument("--wcfg")
    sp.add_argument("--prefix", default="")
    sp.add_argument("--max-len", type=int, default=12)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (UsageError, OSError, ValueError, KeyError, DivergenceError, ExplosionError,
            SearchBudgetError, TrainingError) as e:
        kind = "error" if isinstance(e, (UsageError, OSError)) else type(e).__name__
        msg = str(e).splitlines()[0] if str(e) else repr(e)
        print(f"dsprior {args.command}: {kind}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
