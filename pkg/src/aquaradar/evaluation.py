"""Metrics, unmixing baselines and ablation runs on a synthetic dataset."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .learn import NetConfig, TrainConfig
from .pipeline import (PRESENCE_THRESHOLD, Dataset, decompose, fit_models, pure_dictionary,
                       split, unmix_all)
from .unmix import simplex_nnls

FEATURE_VARIANTS = ("full", "drop-AoA", "drop-power", "drop-phase")
ARCH_VARIANTS = ("full", "no-KL", "no-Huber", "no-soft-labels", "no-residual", "shallow")
UNMIX_METHODS = ("raw", "raw+NNLS", "PCA+NNLS", "PARAFAC+NNLS")
SAMPLE_TYPES = ("pure", "binary", "ternary")

_DROP = {"full": None, "drop-AoA": "aoa", "drop-power": "power", "drop-phase": "phase"}


@dataclass
class MetricsReport:
    names: tuple
    per_class: list          # dicts: name, accuracy, precision, recall, f1
    macro: dict
    subset_accuracy: float
    rmse: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _as_mask(sets, c):
    if isinstance(sets, np.ndarray) and sets.ndim == 2:
        if sets.shape[1] != c:
            raise IndexError(f"expected {c} classes, got {sets.shape[1]}")
        return sets.astype(bool)
    mask = np.zeros((len(sets), c), dtype=bool)
    for i, s in enumerate(sets):
        for j in s:
            if not 0 <= j < c:
                raise IndexError(f"class index {j} outside [0, {c})")
            mask[i, j] = True
    return mask


def _ratio(num, den):
    return float(num / den) if den > 0 else 0.0


def multilabel_metrics(predicted, truth, c, names=None) -> MetricsReport:
    """Per-class and macro accuracy/precision/recall/F1 plus subset accuracy.

    ``predicted`` and ``truth`` are sequences of index sets (or boolean
    ``[sample, class]`` masks). Undefined precision or recall counts as 0.
    """
    if len(predicted) != len(truth):
        raise ValueError("prediction and truth lists differ in length")
    p = _as_mask(predicted, c)
    t = _as_mask(truth, c)
    names = tuple(names) if names is not None else tuple(str(j) for j in range(c))
    rows = []
    for j in range(c):
        tp = np.sum(p[:, j] & t[:, j])
        fp = np.sum(p[:, j] & ~t[:, j])
        fn = np.sum(~p[:, j] & t[:, j])
        tn = np.sum(~p[:, j] & ~t[:, j])
        prec, rec = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        rows.append(dict(name=names[j], accuracy=_ratio(tp + tn, p.shape[0]), precision=prec,
                         recall=rec, f1=_ratio(2 * prec * rec, prec + rec)))
    macro = {k: float(np.mean([r[k] for r in rows])) for k in ("accuracy", "precision",
                                                                "recall", "f1")}
    subset = float(np.mean(np.all(p == t, axis=1))) if p.shape[0] else 0.0
    return MetricsReport(names, rows, macro, subset)


def rmse_present(pred, truth, types=None):
    """RMSE over components whose true ratio is positive, pooled per sample type.

    Returns a dict keyed by type plus ``"all"``.
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth shapes differ")
    types = np.asarray(types) if types is not None else np.array(["all"] * truth.shape[0])
    sq = (pred - truth) ** 2
    mask = truth > 0
    out = {}
    for ty in sorted(set(types.tolist())):
        rows = types == ty
        out[ty] = float(np.sqrt(sq[rows][mask[rows]].mean())) if mask[rows].any() else 0.0
    out["all"] = float(np.sqrt(sq[mask].mean())) if mask.any() else 0.0
    return out


def report(pred_presence, pred_ratios, truth_ratios, types, names, meta=None) -> MetricsReport:
    truth_ratios = np.asarray(truth_ratios)
    rep = multilabel_metrics(np.asarray(pred_presence, dtype=bool), truth_ratios > 0,
                             len(names), names)
    rep.rmse = rmse_present(pred_ratios, truth_ratios, types)
    for ty in SAMPLE_TYPES:
        rows = np.asarray(types) == ty
        if rows.any():
            rep.meta[f"subset_accuracy_{ty}"] = float(np.mean(np.all(
                np.asarray(pred_presence, dtype=bool)[rows] == (truth_ratios[rows] > 0), axis=1)))
    rep.meta.update(meta or {})
    return rep


def config_hash(*objs):
    text = json.dumps([o if isinstance(o, dict) else repr(o) for o in objs], sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# learned-model runs


def _student_report(dataset, models, variant, seed):
    truth = dataset.truth()[models.test_idx]
    types = dataset.types[models.test_idx]
    rep = report(models.student_presence, models.student_ratios, truth, types, dataset.names,
                 dict(variant=variant, seed=seed, n_test=int(models.test_idx.size)))
    rep.meta["teacher_rmse"] = rmse_present(models.teacher_test, truth, types)["all"]
    return rep


def feature_ablation(dataset: Dataset, which="full", train_cfg=None, seed=0) -> MetricsReport:
    """Neutralize one tensor factor, then rerun decomposition and training."""
    if which not in _DROP:
        raise ValueError(f"unknown feature variant {which!r}; choose from {FEATURE_VARIANTS}")
    decomp = decompose(dataset, _DROP[which], seed=seed)
    models = fit_models(dataset, decomp, train_cfg or TrainConfig(seed=seed), split_seed=seed)
    return _student_report(dataset, models, which, seed)


def arch_configs(variant, train_cfg: TrainConfig, in_dim, n_out):
    net = NetConfig(in_dim=in_dim, n_out=n_out)
    if variant == "full":
        pass
    elif variant == "no-KL":
        train_cfg = TrainConfig(**{**train_cfg.__dict__, "alpha": 0.0})
    elif variant == "no-Huber":
        train_cfg = TrainConfig(**{**train_cfg.__dict__, "regression": "mse"})
    elif variant == "no-soft-labels":
        train_cfg = TrainConfig(**{**train_cfg.__dict__, "soft_labels": False})
    elif variant == "no-residual":
        net = NetConfig(in_dim=in_dim, n_out=n_out, residual=False)
    elif variant == "shallow":
        net = NetConfig(in_dim=in_dim, n_out=n_out, widths=(128, 64), residual=False)
    else:
        raise ValueError(f"unknown architecture variant {variant!r}; choose from {ARCH_VARIANTS}")
    return train_cfg, net


def architecture_ablation(dataset: Dataset, variant="full", decomp=None, train_cfg=None,
                          seed=0) -> MetricsReport:
    train_cfg = train_cfg or TrainConfig(seed=seed)
    decomp = decomp or decompose(dataset, seed=seed)
    x = decomp.padded()
    cfg, net = arch_configs(variant, train_cfg, x.shape[1], len(dataset.names))
    models = fit_models(dataset, decomp, cfg, net, split_seed=seed)
    rep = _student_report(dataset, models, variant, seed)
    rep.meta["n_params"] = models.student.n_params
    return rep


# --------------------------------------------------------------------------
# unmixing baselines


def pca_fit(x, n_components=10):
    """Mean and top principal directions (rows, orthonormal) of ``x``."""
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    return mean, vt[:n_components]


def _presence(ratios, threshold=PRESENCE_THRESHOLD):
    return np.asarray(ratios) >= threshold


def unmix_comparison(dataset: Dataset, decomp=None, seed=0, n_pcs=10):
    """Accuracy and RMSE of four unmixing routes, one row per method.

    Every route sees only the pure samples of the training split as
    references and is scored on all remaining samples.
    """
    decomp = decomp or decompose(dataset, seed=seed)
    train_idx, _ = split(dataset, seed)
    names = dataset.names
    pure_train = [i for i in train_idx if dataset.types[i] == "pure"]
    pure_set = set(pure_train)
    evaluate = np.array([i for i in range(len(dataset)) if i not in pure_set])
    truth = dataset.truth()
    flat = np.array([x.ravel() for x in dataset.tensors()])

    centroids = np.array([flat[[i for i in pure_train
                                if dataset.samples[i].spec.names == (n,)]].mean(axis=0)
                          for n in names])
    rows = []

    def add(method, ratios):
        rep = report(_presence(ratios), ratios, truth[evaluate], dataset.types[evaluate], names)
        rows.append(dict(method=method, accuracy=rep.subset_accuracy, rmse=rep.rmse["all"],
                         rmse_binary=rep.rmse.get("binary", 0.0),
                         rmse_ternary=rep.rmse.get("ternary", 0.0), n=int(evaluate.size)))

    nearest = np.argmin(((flat[evaluate, None, :] - centroids[None]) ** 2).sum(axis=2), axis=1)
    add("raw", np.eye(len(names))[nearest])
    add("raw+NNLS", np.array([simplex_nnls(centroids.T, flat[i]).ratios for i in evaluate]))
    mean, comps = pca_fit(flat[train_idx], n_pcs)
    proj_dict = ((centroids - mean) @ comps.T).T
    add("PCA+NNLS", np.array([simplex_nnls(proj_dict, (flat[i] - mean) @ comps.T).ratios
                              for i in evaluate]))
    dictionary = pure_dictionary(dataset, decomp, train_idx)
    add("PARAFAC+NNLS", unmix_all(dictionary, decomp, evaluate))
    return rows


# --------------------------------------------------------------------------
# CSV output

METRIC_FIELDS = ("variant", "class", "accuracy", "precision", "recall", "f1")


def write_metrics_csv(path, reports):
    """One row per (variant, class), then a macro row and summary rows per variant."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "row", "accuracy", "precision", "recall", "f1",
                    "subset_accuracy", "rmse_all", "rmse_pure", "rmse_binary", "rmse_ternary"])
        for rep in reports:
            v = rep.meta.get("variant", "")
            for r in rep.per_class:
                w.writerow([v, r["name"]] + [f"{r[k]:.6f}" for k in ("accuracy", "precision",
                                                                      "recall", "f1")]
                           + [""] * 5)
            m = rep.macro
            w.writerow([v, "macro"] + [f"{m[k]:.6f}" for k in ("accuracy", "precision",
                                                               "recall", "f1")]
                       + [f"{rep.subset_accuracy:.6f}"]
                       + [f"{rep.rmse.get(k, float('nan')):.6f}"
                          for k in ("all", "pure", "binary", "ternary")])


def write_rows_csv(path, rows):
    if not rows:
        raise ValueError("no rows to write")
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: f"{v:.6f}" if isinstance(v, float) else v for k, v in r.items()})
