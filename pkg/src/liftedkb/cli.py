"""Command-line front end: train / eval / mine / analyze.

All outputs are CSV (RFC 4180) or the text checkpoint format, plus a JSON
run manifest recording resolved flags, the seed, and SHA-256 digests of
every input file. Reruns with identical inputs and flags are byte-identical
except for recorded wall-clock fields.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__, evaluation, mining, model, trainer
from .data import (FactStore, load_facts, load_facts_with_vocab, load_rules,
                   save_rules, Vocab)
from .errors import DataError, NumericalError
from .model import ModelConfig
from .trainer import TrainOptions

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, command: str, flags: dict, inputs: dict, outputs: list):
    manifest = {
        "engine_version": __version__,
        "command": command,
        "flags": flags,
        "inputs": {str(p): _sha256(p) for p in inputs.values() if p is not None},
        "outputs": [str(o) for o in outputs],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _add_model_flags(parser):
    parser.add_argument("--variant", choices=model.VARIANTS, default="fs")
    parser.add_argument("--k", type=int, default=100, help="embedding dimension")
    parser.add_argument("--alpha", type=float, default=0.01, help="L2 weight")
    parser.add_argument("--beta-tilde", type=float, default=0.1,
                        help="implication-loss weight (fsl)")
    parser.add_argument("--delta", type=float, default=0.01, help="hinge margin")
    parser.add_argument("--init-low", type=float, default=-0.1)
    parser.add_argument("--init-high", type=float, default=0.1)


def _add_train_flags(parser):
    parser.add_argument("--epochs", type=int, required=True)
    parser.add_argument("--learning-rate", type=float, default=0.005)
    parser.add_argument("--batch-size", type=int, default=8192)
    parser.add_argument("--seed", type=int, default=0)


def _config_from_args(args) -> ModelConfig:
    return ModelConfig(k=args.k, alpha=args.alpha, beta_tilde=args.beta_tilde,
                       delta=args.delta, variant=args.variant,
                       init_low=args.init_low, init_high=args.init_high)


def _options_from_args(args) -> TrainOptions:
    return TrainOptions(epochs=args.epochs, learning_rate=args.learning_rate,
                        batch_size=args.batch_size, seed=args.seed)


def _resolved_flags(args) -> dict:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items()}


def _load_rules_checked(path, relations) -> list:
    rules, skipped = load_rules(path, relations)
    if skipped:
        log.warning("%d rule lines skipped", skipped)
    return rules


def cmd_train(args) -> int:
    store = load_facts(args.facts)
    if args.variant == "fsl" and args.rules is None:
        raise UsageError("--rules is required with --variant fsl")
    rules = _load_rules_checked(args.rules, store.relations) if args.rules else []
    config = _config_from_args(args)
    options = _options_from_args(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    result = trainer.train(store, rules, config, options)
    checkpoint = outdir / "checkpoint.txt"
    adam_path = outdir / "adam_state.txt"
    metrics = outdir / "metrics.csv"
    model.save_embeddings(checkpoint, result.params,
                          store.relations.names, store.tuples.names)
    trainer.save_adam_state(adam_path, result.adam,
                            store.relations.names, store.tuples.names)
    with open(metrics, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "recon", "l2", "implication", "total", "seconds"])
        for st in result.stats:
            writer.writerow([st.epoch, repr(st.loss.reconstruction), repr(st.loss.l2),
                             repr(st.loss.implication), repr(st.loss.total),
                             repr(st.seconds)])
    write_manifest(outdir / "manifest.json", "train", _resolved_flags(args),
                   {"facts": args.facts, "rules": args.rules},
                   [checkpoint, adam_path, metrics])
    print(f"trained {options.epochs} epochs on {len(store)} facts "
          f"({len(store.relations)} relations, {len(store.tuples)} tuples); "
          f"checkpoint at {checkpoint}")
    return EXIT_OK


def _load_checkpoint(path):
    params, rel_names, tup_names = model.load_embeddings(path)
    return params, Vocab(rel_names), Vocab(tup_names)


def cmd_eval(args) -> int:
    params, relations, tuples = _load_checkpoint(args.checkpoint)
    test = load_facts_with_vocab(args.test, relations, tuples)
    if args.train_facts:
        train_store = load_facts_with_vocab(args.train_facts, relations, tuples)
    else:
        train_store = FactStore(relations, tuples, [])
    tasks = evaluation.build_tasks(train_store, test)
    wmap, rows = evaluation.weighted_map(tasks, params, args.variant)
    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["relation", "test_facts", "average_precision"])
        for row in rows:
            writer.writerow([relations.name(row.relation), row.n_test,
                             repr(row.average_precision)])
        writer.writerow(["WEIGHTED_MAP", sum(r.n_test for r in rows), repr(wmap)])
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "eval",
                   _resolved_flags(args),
                   {"checkpoint": args.checkpoint, "test": args.test,
                    "train_facts": args.train_facts}, [out])
    print(f"weighted MAP {wmap:.4f} over {len(rows)} relations -> {out}")
    return EXIT_OK


def cmd_mine(args) -> int:
    store = load_facts(args.facts)
    lexicon = mining.HypernymLexicon.load(args.lexicon)
    mined = mining.mine_rules(store.relations, lexicon)
    if args.decisions:
        rules = mining.filter_rules(mined, args.decisions, store.relations)
    else:
        rules = [m.rule for m in mined]
    out = Path(args.out)
    save_rules(out, rules, store.relations)
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "mine",
                   _resolved_flags(args),
                   {"facts": args.facts, "lexicon": args.lexicon,
                    "decisions": args.decisions}, [out])
    print(f"mined {len(mined)} candidate rules, wrote {len(rules)} -> {out}")
    return EXIT_OK


def cmd_analyze_asymmetry(args) -> int:
    params, relations, tuples = _load_checkpoint(args.checkpoint)
    train_store = load_facts_with_vocab(args.train_facts, relations, tuples)
    rules = _load_rules_checked(args.rules, relations)
    rows, grand_fwd, grand_bwd = evaluation.asymmetry_report(
        params, rules, train_store, args.variant)
    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["antecedent", "consequent", "mean_forward",
                         "mean_backward", "n_forward", "n_backward"])
        for row in rows:
            writer.writerow([relations.name(row.rule.antecedent),
                             relations.name(row.rule.consequent),
                             repr(row.mean_forward), repr(row.mean_backward),
                             row.n_forward, row.n_backward])
        writer.writerow(["GRAND_MEAN", "", repr(grand_fwd), repr(grand_bwd), "", ""])
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"),
                   "analyze asymmetry", _resolved_flags(args),
                   {"checkpoint": args.checkpoint, "rules": args.rules,
                    "train_facts": args.train_facts}, [out])
    print(f"asymmetry report for {len(rows)} rules -> {out}")
    return EXIT_OK


def cmd_analyze_matrix(args) -> int:
    import numpy as np
    params, relations, _tuples = _load_checkpoint(args.checkpoint)
    rules = _load_rules_checked(args.rules, relations)
    involved = sorted({i for r in rules for i in (r.antecedent, r.consequent)})
    if not involved:
        raise DataError("no rule-involved relations to export")
    norms = [float(np.abs(params.relations[i]).sum()) for i in involved]
    order = sorted(range(len(involved)), key=lambda j: (norms[j], involved[j]))
    columns = [involved[j] for j in order]
    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension"] + [relations.name(c) for c in columns])
        for dim in range(params.relations.shape[1]):
            writer.writerow([dim] + [repr(float(params.relations[c, dim]))
                                     for c in columns])
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"),
                   "analyze matrix", _resolved_flags(args),
                   {"checkpoint": args.checkpoint, "rules": args.rules}, [out])
    print(f"relation matrix with {len(columns)} columns -> {out}")
    return EXIT_OK


def cmd_analyze_zero_shot(args) -> int:
    store = load_facts(args.facts)
    test = load_facts_with_vocab(args.test, store.relations, store.tuples)
    rules = _load_rules_checked(args.rules, store.relations)
    if not rules:
        raise DataError("zero-shot analysis needs at least one resolvable rule")
    if args.implied_relations:
        implied = set()
        with open(args.implied_relations, encoding="utf-8") as fh:
            for line in fh:
                name = line.strip()
                if not name:
                    continue
                if name not in store.relations:
                    raise DataError(f"unknown implied relation {name!r}")
                implied.add(store.relations.id(name))
    else:
        implied = {r.consequent for r in rules}
    fractions = [float(f) for f in args.fractions.split(",")]
    config = _config_from_args(args)
    config.variant = "fsl"
    options = _options_from_args(args)
    curve = evaluation.zero_shot_sweep(store, test, rules, implied, fractions,
                                       config, options)
    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction", "weighted_map"])
        for fraction, wmap in curve.points:
            writer.writerow([repr(fraction), repr(wmap)])
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"),
                   "analyze zero-shot", _resolved_flags(args),
                   {"facts": args.facts, "test": args.test, "rules": args.rules,
                    "implied_relations": args.implied_relations}, [out])
    print(f"zero-shot curve with {len(curve.points)} points -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liftedkb",
        description="Knowledge-base completion with lifted implication-rule injection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--facts", required=True, help="training fact file (relation<TAB>tuple)")
    p.add_argument("--rules", help="rule file (antecedent => consequent); required for fsl")
    p.add_argument("--out", required=True, help="output directory")
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank test facts; CSV columns: "
                       "relation,test_facts,average_precision (+ WEIGHTED_MAP row)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True, help="test fact file")
    p.add_argument("--train-facts", help="training facts, excluded from candidate pools")
    p.add_argument("--variant", choices=model.VARIANTS, default="fs")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mine", help="mine implication rules by hypernym substitution")
    p.add_argument("--facts", required=True, help="fact file supplying the pattern vocabulary")
    p.add_argument("--lexicon", required=True, help="word<TAB>hypernym lexicon file")
    p.add_argument("--decisions", help="accept|reject<TAB>rule decision file")
    p.add_argument("--out", required=True, help="output rule file")
    p.set_defaults(func=cmd_mine)

    analyze = sub.add_parser("analyze", help="asymmetry / matrix / zero-shot reports")
    asub = analyze.add_subparsers(dest="mode", required=True)

    p = asub.add_parser("asymmetry", help="per-rule forward/backward mean scores; "
                        "CSV: antecedent,consequent,mean_forward,mean_backward,"
                        "n_forward,n_backward (+ GRAND_MEAN row)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--train-facts", required=True)
    p.add_argument("--variant", choices=model.VARIANTS, default="fsl")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze_asymmetry)

    p = asub.add_parser("matrix", help="rule-involved relation embeddings as CSV "
                        "columns sorted by ascending L1 norm; rows are dimensions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze_matrix)

    p = asub.add_parser("zero-shot", help="retrain at several retained fractions of "
                        "implied-relation facts; CSV: fraction,weighted_map")
    p.add_argument("--facts", required=True, help="training fact file")
    p.add_argument("--test", required=True, help="test fact file")
    p.add_argument("--rules", required=True)
    p.add_argument("--implied-relations",
                   help="file with one relation name per line (default: rule consequents)")
    p.add_argument("--fractions", default="0,0.25,0.5,1.0",
                   help="comma-separated retained fractions")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_analyze_zero_shot)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint():
    raise SystemExit(main())
