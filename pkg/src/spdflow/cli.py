"""Command-line interface.

Exit codes: 0 on success, 1 on a usage error, 2 when the input data or a
computation is rejected.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import geometry as geo
from .baselines import METHODS, diffeo_gauss_sample, fit_method
from .data import LabeledDataset, SyntheticSpec, read_dataset, synth_generate, write_dataset
from .errors import SpdFlowError
from .flow import TrainConfig, load_model, save_model, train
from .metrics import evaluation_report
from .sampler import TABLEAUX, IntegratorSpec, sample_manifold

log = logging.getLogger("spdflow")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n\n{self.format_usage()}")


def _labels(arg, classes):
    if arg is None:
        return list(classes)
    out = [int(v) for v in str(arg).split(",") if v.strip()]
    if not out:
        raise UsageError("--label needs at least one integer")
    return out


def _write_samples(out, manifold, per_label):
    mats = np.concatenate([m for _, m in per_label])
    labels = np.concatenate([np.full(len(m), y) for y, m in per_label])
    write_dataset(LabeledDataset(manifold, mats, labels), out)
    return mats.shape[0]


def _train_config(args, manifold):
    cfg = TrainConfig.load(args.config) if args.config else TrainConfig(manifold=manifold)
    overrides = {
        "epochs": args.epochs,
        "seed": args.seed,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "hidden_dims": tuple(args.hidden) if args.hidden else None,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, manifold=manifold, **overrides)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    spec = SyntheticSpec(
        manifold=args.manifold,
        d=args.dim,
        n_classes=args.classes,
        per_class=args.per_class,
        sigma=args.sigma,
        seed=args.seed,
        separation=args.separation,
    )
    ds = synth_generate(spec)
    write_dataset(ds, args.out)
    log.info("wrote %d matrices to %s", ds.n, args.out)


def cmd_train(args):
    data = read_dataset(args.data)
    cfg = _train_config(args, data.manifold)
    model, src, history = train(data, cfg, log_every=args.log_every)
    save_model(model, src, args.out, history)
    (Path(args.out) / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    log.info("final loss %.6f, model saved to %s", history[-1], args.out)


def cmd_sample(args):
    model, src = load_model(args.model)
    spec = IntegratorSpec(args.scheme, args.steps)
    per_label = [
        (y, sample_manifold(model, src, y, args.n, spec, args.seed, project=not args.no_project))
        for y in _labels(args.label, model.classes)
    ]
    total = _write_samples(args.out, model.manifold, per_label)
    log.info("wrote %d samples to %s", total, args.out)


def cmd_baseline(args):
    data = read_dataset(args.data)
    labels = _labels(args.label, data.classes)
    seed = 0 if args.seed is None else args.seed
    cfg = _train_config(args, data.manifold)
    model, src = fit_method(args.method, data, cfg)
    if model is None:
        per_label = [(y, diffeo_gauss_sample(src, y, args.n, seed, data.manifold)) for y in labels]
    else:
        if args.model_out:
            save_model(model, src, args.model_out)
        spec = IntegratorSpec(args.scheme, args.steps)
        per_label = [
            (y, sample_manifold(model, src, y, args.n, spec, seed, project=not args.no_project))
            for y in labels
        ]
    total = _write_samples(args.out, data.manifold, per_label)
    log.info("wrote %d %s samples to %s", total, args.method, args.out)


def cmd_evaluate(args):
    real = read_dataset(args.real)
    generated = read_dataset(args.generated, validate=False)
    report = evaluation_report(real, generated, folds=args.folds, seed=args.seed)
    Path(args.out).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    log.info("report written to %s", args.out)


def cmd_report(args):
    if not args.frechet_means:
        raise UsageError("report: choose a report type (--frechet-means)")
    data = read_dataset(args.data)
    rows = []
    for c in data.classes:
        mean = geo.frechet_mean(data.matrices[data.labels == c], data.manifold)
        rows.append(",".join([str(c)] + [repr(float(v)) for v in mean.ravel()]))
    Path(args.out).write_text("\n".join(rows) + "\n")
    log.info("wrote %d class means to %s", len(rows), args.out)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_train_flags(p):
    p.add_argument("--config", help="JSON file with training settings")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--hidden", type=int, nargs="+", help="hidden layer widths")


def _add_sample_flags(p):
    p.add_argument("--label", help="class label or comma-separated labels (default: all)")
    p.add_argument("--n", type=int, default=500, help="samples per label")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--scheme", choices=sorted(TABLEAUX), default="rk4")
    p.add_argument("--no-project", action="store_true", help="skip eigenvalue projection (triangular models)")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = _Parser(prog="spdflow", description="Generative flows on SPD and correlation matrices.", parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    p = add("synth", "write a synthetic wrapped-Gaussian dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--manifold", choices=geo.MANIFOLDS, default="spd")
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--per-class", type=int, default=400)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--separation", type=float, default=3.0, help="class spacing in units of sigma")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = add("train", "train a flow model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log-every", type=int, default=0)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = add("sample", "draw samples from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_sample_flags(p)
    p.set_defaults(func=cmd_sample)

    p = add("baseline", "fit a baseline and draw samples")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model-out", help="also save the trained flow model here")
    _add_train_flags(p)
    _add_sample_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = add("evaluate", "score generated samples against real ones")
    p.add_argument("--real", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = add("report", "summaries of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frechet-means", action="store_true", help="per-class mean matrices as CSV")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(sys.argv[1:] if argv is None else argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_help())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except SpdFlowError as exc:
        print(f"spdflow: {exc}", file=sys.stderr)
        return 2
    return 0


run = main
