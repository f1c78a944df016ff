"""Command-line interface: ``hfm <verb> [options]``.

Verbs: synth, align, train, infer, bench, compare. Global options
(``--config``, ``--seed``, ``--out-dir``) may appear before or after the verb.

Exit codes: 0 success, 1 configuration or argument error, 2 training or
run failure, 3 I/O or file-format error.
"""
import argparse
import csv
import json
import logging
import os
import sys
from types import SimpleNamespace

import numpy as np

from . import data as data_mod
from .alignment import load_embedding, run_alignment, save_embedding
from .config import ConfigError, ExperimentConfig, load_config
from .errors import FeatureFormatError, InvalidArgumentError, TrainingFailure
from .experiment import write_predictions_csv, write_trajectories_csv, load_dataset, metrics_json, run_experiment, stage
from .inference import THRESHOLD_HIT, predict
from .training import train_flow
from .velocity import load_checkpoint, save_checkpoint

logger = logging.getLogger("hfm")

EXIT_OK, EXIT_CONFIG, EXIT_TRAINING, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _global_options(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="flat key = value config file")
    parser.add_argument("--seed", type=int, default=default, help="override the config seed")
    parser.add_argument("--out-dir", default=default, help="output directory (overrides config out_dir)")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser():
    parser = _Parser(prog="hfm", description="Hyperbolic flow matching experiments")
    _global_options(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic feature set")
    p.add_argument("--format", choices=("hfmf", "csv"), default="hfmf")

    sub.add_parser("align", parents=[common], help="fit the alignment head, save the embedding")

    p = sub.add_parser("train", parents=[common], help="align (or load an embedding) and train the flow")
    p.add_argument("--embedding", help="reuse an embedding .npz instead of aligning")

    p = sub.add_parser("infer", parents=[common], help="transport and classify the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embedding", required=True)
    p.add_argument("--delta", type=float, help="Euler step (default: config delta)")

    p = sub.add_parser("bench", parents=[common], help="full HFM vs Euclidean run")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--baseline-only", action="store_true")
    group.add_argument("--no-baseline", action="store_true")

    p = sub.add_parser("compare", parents=[common], help="HFM vs baseline across overlap levels")
    p.add_argument("--overlaps", default="0.5,1.0,1.5", help="comma-separated overlap factors")
    return parser


def resolve_config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out_dir is not None:
        changes["out_dir"] = args.out_dir
    return cfg.replace(**changes) if changes else cfg


def _split(cfg):
    ds = load_dataset(cfg)
    return ds, *data_mod.split_k_shot(ds, cfg.k_shot, cfg.seed)


def _write_config(cfg):
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())


def cmd_synth(cfg, args):
    with stage("data"):
        ds = data_mod.generate_synthetic(cfg.synthetic_config())
    with stage("output"):
        os.makedirs(cfg.out_dir, exist_ok=True)
        if args.format == "hfmf":
            path = os.path.join(cfg.out_dir, "features.hfmf")
            data_mod.write_feature_file(path, ds)
        else:
            path = os.path.join(cfg.out_dir, "samples.csv")
            _write_feature_csv(path, ds.labels, ds.features)
            _write_feature_csv(os.path.join(cfg.out_dir, "prototypes.csv"), np.arange(ds.n_classes), ds.prototypes)
    print(path)


def _write_feature_csv(path, labels, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"f{j}" for j in range(values.shape[1])])
        for y, row in zip(labels, values):
            w.writerow([int(y)] + [repr(float(v)) for v in row])


def _align(cfg):
    with stage("data"):
        ds, support, _ = _split(cfg)
    with stage("alignment"):
        emb = run_alignment(support.features, support.labels, ds.prototypes, cfg.alignment_config())
    return emb


def cmd_align(cfg, args):
    emb = _align(cfg)
    with stage("output"):
        _write_config(cfg)
        save_embedding(os.path.join(cfg.out_dir, "embedding.npz"), emb)
        with open(os.path.join(cfg.out_dir, "alignment_history.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "objective", "contrastive", "entailment"])
            for e, rec in enumerate(emb.history):
                w.writerow([e, repr(rec["objective"]), repr(rec["contrastive"]), repr(rec["entailment"])])
    print(f"kappa={emb.kappa:.6g} alpha_txt={emb.scales.alpha_txt:.6g} alpha_img={emb.scales.alpha_img:.6g}")


def cmd_train(cfg, args):
    if args.embedding:
        with stage("data"):
            emb = load_embedding(args.embedding)
    else:
        emb = _align(cfg)
    with stage("hfm"):
        run = train_flow(emb, cfg.flow_config())
    with stage("output"):
        _write_config(cfg)
        save_embedding(os.path.join(cfg.out_dir, "embedding.npz"), emb)
        save_checkpoint(os.path.join(cfg.out_dir, "velocity.hfmp"), run.params)
        run.trace.write_csv(os.path.join(cfg.out_dir, "loss_trace.csv"))
    print(f"L_step first={run.trace.L_step[0]:.6g} last={run.trace.L_step[-1]:.6g}")


def cmd_infer(cfg, args):
    delta = args.delta if args.delta is not None else cfg.inference_delta
    with stage("data"):
        _, _, test = _split(cfg)
        emb = load_embedding(args.embedding)
        params = load_checkpoint(args.checkpoint)
    with stage("inference"):
        pr = predict(params, emb.embed_images(test.features), emb.prototype_set, delta)

    res = SimpleNamespace(
        predictions=pr.labels, scores=pr.scores, t_star=pr.t_star, stop_reasons=pr.stop_reasons,
        paths=[tr.states for tr in pr.trajectories],
    )

    metrics = {
        "accuracy": float(np.mean(pr.labels == test.labels)),
        "mean_t_star": float(pr.t_star.mean()),
        "threshold_hit_rate": float(np.mean([r == THRESHOLD_HIT for r in pr.stop_reasons])),
        "n_test": len(test),
    }
    with stage("output"):
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_predictions_csv(os.path.join(cfg.out_dir, "predictions.csv"), res, test.labels)
        write_trajectories_csv(os.path.join(cfg.out_dir, "trajectories.csv"), res, test.labels, delta)
        with open(os.path.join(cfg.out_dir, "infer_metrics.json"), "w") as fh:
            fh.write(metrics_json(metrics))
    print(json.dumps(metrics, sort_keys=True))


def _summary(metrics):
    keys = ("accuracy", "nearest_prototype_accuracy", "mean_t_star", "corridor_violation_rate", "crossing_count")
    out = {k: metrics[k] for k in keys if k in metrics}
    if "threshold_hit_rate" in metrics:
        out["threshold_hit_rate"] = metrics["threshold_hit_rate"]
    if "baseline" in metrics:
        out["baseline"] = {k: metrics["baseline"][k] for k in keys if k in metrics["baseline"]}
    return out


def cmd_bench(cfg, args):
    if args.baseline_only:
        cfg = cfg.replace(hyperbolic=False, baseline=True)
    elif args.no_baseline:
        cfg = cfg.replace(baseline=False, hyperbolic=True)
    result = run_experiment(cfg)
    print(json.dumps(_summary(result.metrics), indent=2, sort_keys=True))


def cmd_compare(cfg, args):
    try:
        overlaps = [float(v) for v in args.overlaps.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --overlaps value {args.overlaps!r}") from None
    if cfg.source != "synthetic":
        raise ConfigError("compare sweeps the synthetic overlap; set source = synthetic")
    rows = []
    for ov in overlaps:
        sub = cfg.replace(overlap=ov, out_dir=os.path.join(cfg.out_dir, f"overlap_{ov:g}"), baseline=True, hyperbolic=True)
        m = run_experiment(sub).metrics
        b = m["baseline"]
        rows.append({
            "overlap": ov,
            "nearest_prototype_accuracy": m["nearest_prototype_accuracy"],
            "hfm_accuracy": m["accuracy"],
            "baseline_accuracy": b["accuracy"],
            "hfm_corridor_violation_rate": m["corridor_violation_rate"],
            "baseline_corridor_violation_rate": b["corridor_violation_rate"],
            "hfm_crossing_count": m["crossing_count"],
            "baseline_crossing_count": b["crossing_count"],
            "hfm_mean_t_star": m["mean_t_star"],
        })
        logger.info("overlap %g done", ov)
    with stage("output"):
        with open(os.path.join(cfg.out_dir, "compare.csv"), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        with open(os.path.join(cfg.out_dir, "compare.json"), "w") as fh:
            fh.write(metrics_json({"rows": rows}))
    print(json.dumps(rows, indent=2))


COMMANDS = {
    "synth": cmd_synth,
    "align": cmd_align,
    "train": cmd_train,
    "infer": cmd_infer,
    "bench": cmd_bench,
    "compare": cmd_compare,
}


def exit_code_for(exc):
    if isinstance(exc, FeatureFormatError):
        return EXIT_IO
    if isinstance(exc, TrainingFailure):
        return EXIT_TRAINING
    if isinstance(exc, (ConfigError, InvalidArgumentError)):
        return EXIT_CONFIG
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_TRAINING


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        with stage("config"):
            cfg = resolve_config(args)
        COMMANDS[args.verb](cfg, args)
    except Exception as exc:
        where = getattr(exc, "stage", None) or "run"
        print(f"hfm {args.verb}: error in stage '{where}': {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            logger.exception("traceback")
        return exit_code_for(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
