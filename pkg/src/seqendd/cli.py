"""Command-line front end: gen-data, train-ensemble, distill, distill-dist, evaluate, reject-curve.

Failures exit nonzero after printing a single JSON line to stderr,
``{"error": <kind>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import metrics as mt
from . import pipeline as pl
from . import synthdata as sd
from .errors import ContractError, InputError, TrainingDiverged

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CONTRACT = 4
EXIT_DIVERGED = 5
EXIT_IO = 6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# flag name -> dotted config key
_OVERRIDES = {
    "output_dir": "output_dir",
    "seed": "seed",
    "ensemble_size": "ensemble_size",
    "eval_temperature": "eval_temperature",
    "grid_step": "grid_step",
    "ranking": "ranking",
    "n_train": "data.n_train",
    "n_test": "data.n_test",
    "n_ood": "data.n_ood",
    "hidden_dim": "model.hidden_dim",
    "embed_dim": "model.embed_dim",
    "member_epochs": "members.epochs",
    "student_epochs": "students.epochs",
    "learning_rate": None,  # applies to both training sections
    "batch_size": None,
}


def _common(p):
    p.add_argument("--config", help="YAML config with nested sections")
    p.add_argument("--output-dir", help=f"run directory (default ${pl.OUTPUT_ENV} or runs/default)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--ensemble-size", type=int)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--n-ood", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--member-epochs", type=int)
    p.add_argument("--student-epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--eval-temperature", type=float)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqendd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write ID train/test and OOD test corpora")
    _common(p)

    p = sub.add_parser("train-ensemble", help="train the ensemble members")
    _common(p)

    p = sub.add_parser("distill", help="train the ensemble-distilled student")
    _common(p)

    p = sub.add_parser("distill-dist", help="train a Dirichlet (distribution-distilled) student")
    _common(p)
    p.add_argument("--objective", choices=("nll", "kl"), default="kl")

    p = sub.add_parser("evaluate", help="decode, score and tabulate")
    _common(p)
    p.add_argument("--systems", default=",".join(pl.SYSTEMS), help="comma list from " + ",".join(pl.SYSTEMS))
    p.add_argument("--testset", default="mix", choices=pl.TESTSETS,
                   help="mix evaluates ID and OOD and their concatenation")
    p.add_argument("--grid-step", type=float)
    p.add_argument("--use-rate", action="store_true", default=None, help="rank by per-token rates instead of sums")

    p = sub.add_parser("reject-curve", help="rejection curve from an annotations file")
    p.add_argument("annotations")
    p.add_argument("--metric", required=True, choices=pl.RANKINGS)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--grid-step", type=float, default=0.02)
    p.add_argument("--use-rate", action="store_true")
    p.add_argument("--plot", action="store_true", help="also write an SVG next to the CSV")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args) -> pl.PipelineConfig:
    overrides = {}
    for flag, key in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if key is None:
            overrides[f"members.{flag}"] = value
            overrides[f"students.{flag}"] = value
        else:
            overrides[key] = value
    if getattr(args, "use_rate", None):
        overrides["use_rate"] = True
    return pl.load_config(args.config, overrides)


def cmd_gen_data(args, config):
    corpora = pl.generate_data(config)
    rows = pl.write_data(config, corpora)
    pl.dump_config(config, config.data_dir)
    print(pl.corpus_table(rows).text(), end="")


def _train_data(config):
    return pl.read_data(config, ("train",))["train"]


def cmd_train_ensemble(args, config):
    corpus = _train_data(config)
    members = pl.train_ensemble(config, corpus, log_dir=config.root / "logs")
    pl.save_models(dict(zip(pl.member_names(config), members)), config.ckpt_dir)
    pl.dump_config(config, config.ckpt_dir)
    print(f"wrote {len(members)} member checkpoints to {config.ckpt_dir}")


def _ensemble(config):
    return list(pl.load_models(pl.member_names(config), config.ckpt_dir).values())


def _train_students(config, names):
    corpus = _train_data(config)
    students = pl.train_students(config, _ensemble(config), corpus, which=names, log_dir=config.root / "logs")
    pl.save_models(students, config.ckpt_dir)
    pl.dump_config(config, config.ckpt_dir)
    for name in names:
        print(f"wrote {config.ckpt_dir / (name + '.ckpt')}")


def cmd_distill(args, config):
    _train_students(config, ("dist",))


def cmd_distill_dist(args, config):
    _train_students(config, (args.objective,))


def cmd_evaluate(args, config):
    systems = tuple(s.strip() for s in args.systems.split(",") if s.strip())
    unknown = set(systems) - set(pl.SYSTEMS)
    if unknown:
        raise UsageError(f"unknown systems {sorted(unknown)}")
    need_ens, student_names = pl.required_models(systems)
    ensemble = _ensemble(config) if need_ens else []
    students = pl.load_models(student_names, config.ckpt_dir)
    names = {"id": ("test_id",), "ood": ("test_ood",), "mix": ("test_id", "test_ood")}[args.testset]
    corpora = pl.read_data(config, names)
    ev = pl.evaluate_systems(config, ensemble, students, corpora, systems, (args.testset,))
    testsets = ("id", "ood", "mix") if args.testset == "mix" else (args.testset,)
    vocab = sd.Vocabulary.load(config.data_dir / "train.vocab")
    tables = pl.write_evaluation(ev, config.eval_dir, vocab, systems, testsets)
    pl.dump_config(config, config.eval_dir)
    for table in tables.values():
        if table.rows:
            print(table.text())


def cmd_reject_curve(args):
    sentences = pl.read_annotations(args.annotations)
    if not sentences:
        raise InputError("annotations file is empty", location=args.annotations)
    if args.metric in ("tu", "du", "ku") and any(s.uncertainties is None for s in sentences):
        raise InputError(f"annotations carry no uncertainties for metric {args.metric}", location=args.annotations)
    manual = mt.rejection_curve(sentences, pl.ranking_scores(sentences, "manual"), args.grid_step)
    scores = pl.ranking_scores(sentences, args.metric, args.use_rate)
    curve = manual if args.metric == "manual" else mt.rejection_curve(sentences, scores, args.grid_step)
    rr = mt.auc_rr(curve, manual, mt.random_rejection_auc(sentences, args.grid_step))
    extra = {"manual": manual, "random": mt.random_rejection_curve(sentences, args.grid_step)}
    path = pl.write_curve(args.out, curve, rr, plot=args.plot, extra_curves=extra)
    print(f"{path}: AUC={curve.auc:.6f} AUC_RR={rr:.6f}")


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-ensemble": cmd_train_ensemble,
    "distill": cmd_distill,
    "distill-dist": cmd_distill_dist,
    "evaluate": cmd_evaluate,
}


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    config = None
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "reject-curve":
            cmd_reject_curve(args)
        else:
            config = config_from_args(args)
            _COMMANDS[args.command](args, config)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except InputError as exc:
        return _fail("input", str(exc), EXIT_INPUT)
    except TrainingDiverged as exc:
        if exc.last_good is not None and config is not None:
            pl.save_models({"last_good": exc.last_good}, config.ckpt_dir)
        return _fail("diverged", str(exc), EXIT_DIVERGED)
    except ContractError as exc:
        return _fail("contract", str(exc), EXIT_CONTRACT)
    except OSError as exc:
        return _fail("io", f"{exc.filename or ''}: {exc.strerror or exc}".lstrip(": "), EXIT_IO)
    return 0


if __name__ == "__main__":
    sys.exit(main())
