"""Command line entry point: ``ldf train | eval | gen-synth | report``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys

from . import autodiff as ad
from .embeddings import load_vectors, save_vectors
from .episodes import load_corpus, make_synthetic_corpus, save_corpus
from .errors import ConfigError, DataError, NumericError
from .metrics import aggregate_runs, format_report, report_json
from .trainer import (
    ABLATIONS,
    DEFAULT_SEEDS,
    collect_runs,
    drop_empty,
    evaluate,
    evaluate_checkpoint,
    load_config,
    train,
    write_run,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("ldf")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def cmd_train(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.ablation:
        config = config.with_ablation(args.ablation)
    root = args.out or config.checkpoint_dir
    if root:
        config = dataclasses.replace(
            config, checkpoint_dir=os.path.join(root, f"{config.ablation}-seed{config.seed}"))

    if not config.embeddings_path:
        raise ConfigError("config needs embeddings_path")
    table = load_vectors(config.embeddings_path)
    result = train(config, table=table)
    summary = {"seed": config.seed, "ablation": config.ablation,
               "best_dev_auc": result.best_dev_auc, "best_epoch": result.best_epoch,
               "checkpoint": result.checkpoint}
    if config.test_path:
        test = evaluate(result.params, drop_empty(load_corpus(config.test_path)), table, config,
                        config.resolved_test_seed)
        write_run(config, result, test)
        summary["test"] = test.as_dict()
    print(json.dumps(summary, indent=1))


def cmd_eval(args):
    table = load_vectors(args.embeddings) if args.embeddings else None
    config, runs = evaluate_checkpoint(args.checkpoint, args.corpus, seeds=args.seeds,
                                       table=table, n_episodes=args.episodes)
    out = {"checkpoint": args.checkpoint, "ablation": config.ablation,
           "runs": {str(s): r.as_dict() for s, r in runs.items()}}
    if len(runs) > 1:
        for key in ("f1", "auc"):
            out[key] = dataclasses.asdict(aggregate_runs([getattr(r, key) for r in runs.values()]))
    if args.json:
        print(json.dumps(out, indent=1))
        return
    for seed, r in runs.items():
        print(f"seed {seed:>6}  F1 {100 * r.f1:6.2f}  AUC {100 * r.auc:6.2f}")
    if len(runs) > 1:
        f1 = aggregate_runs([r.f1 for r in runs.values()])
        au = aggregate_runs([r.auc for r in runs.values()])
        print(f"mean±std     F1 {f1}  AUC {au}")


def cmd_gen_synth(args):
    os.makedirs(args.out, exist_ok=True)
    splits = tuple(args.splits)
    corpus, table = make_synthetic_corpus(
        sum(splits), args.per_class, args.keyword_strength, args.noise_vocab,
        args.similarity_groups, ad.make_rng(args.seed), dim=args.dim, class_splits=splits,
        noise_fraction=args.noise_fraction, multi_label_fraction=args.multi_label,
    )
    names = ("train", "dev", "test")[:len(splits)]
    for name, classes in zip(names, corpus.splits):
        save_corpus(corpus.subset(classes), os.path.join(args.out, f"{name}.jsonl"))
    save_vectors(table, os.path.join(args.out, "vectors.txt"))
    with open(os.path.join(args.out, "keywords.json"), "w", encoding="utf-8") as fh:
        json.dump(corpus.keywords, fh, indent=1)
    lines = ["# generated by ldf gen-synth", "embeddings_path = vectors.txt",
             "checkpoint_dir = runs"]
    lines += [f"{n}_path = {n}.jsonl" for n in names]
    with open(os.path.join(args.out, "config.cfg"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {len(corpus)} instances over {sum(splits)} classes to {args.out}")


def cmd_report(args):
    report = collect_runs(args.runs)
    if not report:
        raise DataError(f"no run.json files under {args.runs}")
    print(format_report(report))
    path = args.json or os.path.join(args.runs, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_json(report) + "\n")


def build_parser():
    p = _Parser(prog="ldf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train one seed from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--ablation", choices=sorted(ABLATIONS))
    t.add_argument("--out", help="run directory (default: checkpoint_dir from the config)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a corpus")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--seeds", type=_int_list, help=f"e.g. {','.join(map(str, DEFAULT_SEEDS))}")
    e.add_argument("--episodes", type=int)
    e.add_argument("--embeddings", help="override the embeddings path stored in the checkpoint")
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen-synth", help="write a synthetic corpus, vectors and config")
    g.add_argument("--out", required=True)
    g.add_argument("--splits", type=_int_list, default=[15, 5, 10],
                   help="classes per train,dev,test split")
    g.add_argument("--per-class", type=int, default=30)
    g.add_argument("--keyword-strength", type=float, default=1.0)
    g.add_argument("--noise-vocab", type=int, default=0)
    g.add_argument("--noise-fraction", type=float, default=0.5)
    g.add_argument("--similarity-groups", type=int, default=0)
    g.add_argument("--multi-label", type=float, default=0.0)
    g.add_argument("--dim", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_synth)

    r = sub.add_parser("report", help="aggregate run.json files into a table")
    r.add_argument("--runs", required=True)
    r.add_argument("--json", help="where to write the JSON report (default: <runs>/report.json)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    if args.command == "train":
        log.setLevel(logging.INFO)
    try:
        args.func(args)
    except NumericError as exc:
        print(f"ldf: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"ldf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        print(f"ldf: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
