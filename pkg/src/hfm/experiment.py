"""End-to-end runs: data, alignment, flow training, transport, diagnostics.

Everything a run writes lands in ``config.out_dir``:

=========================  ===============================================
``config.txt``             the resolved configuration (rerunnable)
``metrics.json``           headline metrics, see :func:`run_experiment`
``loss_trace.csv``         flow training trace (step, L_step, L_icd, total, lr)
``predictions.csv``        per test sample: label, prediction, t*, scores
``trajectories.csv``       every transported state, one row per state
``embedding.npz``          the aligned embedding
``velocity.hfmp``          velocity network checkpoint
``trajectories.svg``       2-D projected trajectories, one panel per method
=========================  ===============================================

Baseline files carry a ``baseline_`` prefix. With ``hyperbolic = false`` only
baseline files (and the config and metrics) are written.
"""
import contextlib
import csv
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .alignment import run_alignment, save_embedding
from .diagnostics import entanglement_report, nearest_prototype, projected_trajectories
from .inference import THRESHOLD_HIT, predict, stopping_threshold
from .plotting import write_svg
from .training import euclidean_transport, train_euclidean_baseline, train_flow
from .velocity import save_checkpoint

logger = logging.getLogger(__name__)


@contextlib.contextmanager
def stage(name):
    """Tag any exception escaping the block with the pipeline stage name."""
    try:
        yield
    except Exception as exc:
        if getattr(exc, "stage", None) is None:
            try:
                exc.stage = name
            except AttributeError:
                pass
        raise


@dataclass
class MethodResult:
    name: str
    accuracy: float
    predictions: np.ndarray
    scores: np.ndarray
    t_star: np.ndarray
    stop_reasons: list
    paths: list
    report: object
    trace: object
    params: object
    extra: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    metrics: dict
    hfm: MethodResult = None
    baseline: MethodResult = None
    embedding: object = None
    raw_prototypes: np.ndarray = None
    files: dict = field(default_factory=dict)


def load_dataset(config):
    if config.source == "synthetic":
        return data_mod.generate_synthetic(config.synthetic_config())
    if config.source == "hfmf":
        return data_mod.read_feature_file(config.data_path)
    return data_mod.read_feature_csv(config.data_path, config.prototypes_path)


def nearest_prototype_accuracy(features, prototypes, labels):
    return float(np.mean(nearest_prototype(features, prototypes) == labels))


def _run_hfm(emb, test, config):
    run = train_flow(emb, config.flow_config())
    x0 = emb.embed_images(test.features)
    protos = emb.prototype_set
    pr = predict(run.params, x0, protos, config.inference_delta)
    report = entanglement_report(pr.trajectories, protos, test.labels, seed=config.seed)
    hits = np.array([r == THRESHOLD_HIT for r in pr.stop_reasons])
    extra = {
        "threshold_hit_rate": float(hits.mean()),
        "stopping_threshold": stopping_threshold(len(protos), protos.diameter),
        "semantic_diameter": protos.diameter,
        "kappa": protos.kappa,
        "aligned_nearest_prototype_accuracy": float(np.mean(protos.distances(x0).argmin(axis=1) == test.labels)),
    }
    return MethodResult(
        "hfm", float(np.mean(pr.labels == test.labels)), pr.labels, pr.scores, pr.t_star,
        pr.stop_reasons, [tr.states for tr in pr.trajectories], report, run.trace, run.params, extra,
    )


def _run_baseline(emb, support, test, raw_prototypes, config):
    protos = emb.tangent_prototypes(raw_prototypes)
    run = train_euclidean_baseline(emb.tangent_images(support.features), support.labels, protos, config.flow_config())
    delta = config.inference_delta
    states = euclidean_transport(run.params, emb.tangent_images(test.features), delta)
    dist = np.linalg.norm(states[:, :, None, :] - protos[None, None, :, :], axis=-1)
    scores = dist.sum(axis=1)
    preds = scores.argmin(axis=1)
    paths = list(states)
    report = entanglement_report(paths, protos, test.labels, kappa=None, seed=config.seed)
    t_end = delta * (states.shape[1] - 1)
    return MethodResult(
        "euclidean", float(np.mean(preds == test.labels)), preds, scores, np.full(len(test), t_end),
        ["horizon"] * len(test), paths, report, run.trace, run.params, {},
    )


def _method_metrics(res, trace_name, lam):
    out = {
        "accuracy": res.accuracy,
        "mean_t_star": float(np.mean(res.t_star)),
        "corridor_violation_rate": res.report.corridor_violation_rate,
        "crossing_count": int(res.report.crossing_count),
        "per_class_violation": {str(k): v for k, v in sorted(res.report.per_class.items())},
        "loss_trace_path": trace_name,
        "loss_trace": {
            "lambda": lam,
            "step": list(res.trace.step),
            "L_step": list(res.trace.L_step),
            "L_icd": list(res.trace.L_icd),
            "total": list(res.trace.total),
        },
    }
    out.update(res.extra)
    return out


def _to_builtin(obj):
    if isinstance(obj, dict):
        return {str(k): _to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_builtin(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def metrics_json(metrics):
    return json.dumps(_to_builtin(metrics), indent=2, sort_keys=True) + "\n"


def write_predictions_csv(path, res, labels):
    n = res.scores.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "true_label", "predicted_label", "t_star", "stop_reason"] + [f"score_{c}" for c in range(n)])
        for i, y in enumerate(labels):
            w.writerow([i, int(y), int(res.predictions[i]), repr(float(res.t_star[i])), res.stop_reasons[i]]
                       + [repr(float(s)) for s in res.scores[i]])


def write_trajectories_csv(path, res, labels, delta):
    dim = res.paths[0].shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "true_label", "step", "t"] + [f"x{j}" for j in range(dim)])
        for i, (p, y) in enumerate(zip(res.paths, labels)):
            for k, state in enumerate(p):
                w.writerow([i, int(y), k, repr(k * delta)] + [repr(float(v)) for v in state])


def _panel(title, res, labels, prototypes, seed):
    n = len(res.paths)
    projected = projected_trajectories(res.paths + [prototypes], seed)
    return title, projected[:n], labels, projected[n]


def run_experiment(config, write=True):
    """Run the configured pipeline; returns an :class:`ExperimentResult`.

    ``metrics`` holds accuracy, mean_t_star, corridor_violation_rate,
    crossing_count and loss_trace_path for the main method (HFM, or the
    baseline when ``hyperbolic`` is off), the raw-feature nearest-prototype
    accuracy, and a ``baseline`` block when both methods ran. Exceptions carry
    a ``stage`` attribute naming the step that failed.
    """
    files = {}
    with stage("data"):
        ds = load_dataset(config)
        support, test = data_mod.split_k_shot(ds, config.k_shot, config.seed)
        np_acc = nearest_prototype_accuracy(test.features, ds.prototypes, test.labels)
    with stage("alignment"):
        emb = run_alignment(support.features, support.labels, ds.prototypes, config.alignment_config())
    hfm = base = None
    if config.hyperbolic:
        with stage("hfm"):
            hfm = _run_hfm(emb, test, config)
    if config.baseline:
        with stage("baseline"):
            base = _run_baseline(emb, support, test, ds.prototypes, config)

    main = hfm if hfm is not None else base
    prefix = "" if hfm is not None else "baseline_"
    lam = config.lam
    metrics = {"method": main.name}
    metrics.update(_method_metrics(main, prefix + "loss_trace.csv", lam))
    metrics.update({
        "nearest_prototype_accuracy": np_acc,
        "n_classes": ds.n_classes,
        "n_support": len(support),
        "n_test": len(test),
        "seed": config.seed,
    })
    if hfm is not None and base is not None:
        metrics["baseline"] = _method_metrics(base, "baseline_loss_trace.csv", lam)
    result = ExperimentResult(metrics, hfm, base, emb, ds.prototypes, files)
    if write:
        with stage("output"):
            _write_outputs(result, config, test)
    return result


def _write_outputs(result, config, test):
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    files = result.files

    def path(name):
        files[name] = os.path.join(out, name)
        return files[name]

    with open(path("config.txt"), "w") as fh:
        fh.write(config.to_text())
    delta = config.inference_delta
    panels = []
    if result.hfm is not None:
        res = result.hfm
        res.trace.write_csv(path("loss_trace.csv"))
        write_predictions_csv(path("predictions.csv"), res, test.labels)
        write_trajectories_csv(path("trajectories.csv"), res, test.labels, delta)
        save_embedding(path("embedding.npz"), result.embedding)
        save_checkpoint(path("velocity.hfmp"), res.params)
        panels.append(_panel("HFM (Lorentz)", res, test.labels, result.embedding.prototype_set.points, config.seed))
    if result.baseline is not None:
        res = result.baseline
        res.trace.write_csv(path("baseline_loss_trace.csv"))
        write_predictions_csv(path("baseline_predictions.csv"), res, test.labels)
        write_trajectories_csv(path("baseline_trajectories.csv"), res, test.labels, delta)
        save_checkpoint(path("baseline_velocity.hfmp"), res.params)
        protos = result.embedding.tangent_prototypes(result.raw_prototypes)
        panels.append(_panel("Euclidean FM", res, test.labels, protos, config.seed))
    if config.plots and panels:
        write_svg(path("trajectories.svg"), panels)
    with open(path("metrics.json"), "w") as fh:
        fh.write(metrics_json(result.metrics))
