"""Model checkpoints in VWT1 containers (kind ``MODEL``).

Every array is flattened into one float64 payload; the metadata block
records names, shapes and offsets together with the configs used.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from . import container
from .forest import ForestConfig, ForestModel, Tree
from .learn import NetConfig, StudentParams, TrainConfig


def _pack(named):
    entries, chunks, off = [], [], 0
    for name, arr in named:
        arr = np.asarray(arr, dtype=float)
        entries.append(dict(name=name, shape=list(arr.shape), offset=off))
        chunks.append(arr.ravel())
        off += arr.size
    flat = np.concatenate(chunks) if chunks else np.zeros(0)
    return flat, entries


def _unpack(flat, entries):
    out = {}
    for e in entries:
        size = int(np.prod(e["shape"], dtype=np.int64))
        out[e["name"]] = flat[e["offset"]:e["offset"] + size].reshape(e["shape"])
    return out


def save_student(path, params: StudentParams, train_cfg: TrainConfig | None = None, extra=None):
    named = params.tensors() + params.buffers()
    flat, entries = _pack(named)
    net = dataclasses.asdict(params.config)
    net["widths"] = list(net["widths"])
    meta = dict(model="student", net=net, entries=entries,
                train=dataclasses.asdict(train_cfg) if train_cfg else None, extra=extra or {})
    return container.write(path, flat, container.PayloadKind.MODEL, meta)


def load_student(path):
    rec = container.read(path)
    if rec.kind != container.PayloadKind.MODEL or rec.meta.get("model") != "student":
        raise container.ContainerError(f"{path}: not a student checkpoint")
    net_d = dict(rec.meta["net"])
    net_d["widths"] = tuple(net_d["widths"])
    net = NetConfig(**net_d)
    arrays = _unpack(rec.array, rec.meta["entries"])
    layers = []
    for i in range(len(net.widths)):
        layers.append({k: arrays[f"l{i}.{k}"].copy()
                       for k in ("W", "b", "gamma", "beta", "mean", "var")})
    params = StudentParams(net, layers,
                           {k: arrays[f"ratio.{k}"].copy() for k in ("W", "b")},
                           {k: arrays[f"presence.{k}"].copy() for k in ("W", "b")})
    train = rec.meta.get("train")
    return params, (TrainConfig(**train) if train else None)


def save_forest(path, model: ForestModel, extra=None):
    named = []
    for t, tree in enumerate(model.trees):
        named += [(f"t{t}.{k}", getattr(tree, k))
                  for k in ("feature", "threshold", "left", "right", "value")]
    flat, entries = _pack(named)
    meta = dict(model="forest", config=dataclasses.asdict(model.config), entries=entries,
                n_features=model.n_features, n_outputs=model.n_outputs, extra=extra or {})
    return container.write(path, flat, container.PayloadKind.MODEL, meta)


def load_forest(path) -> ForestModel:
    rec = container.read(path)
    if rec.kind != container.PayloadKind.MODEL or rec.meta.get("model") != "forest":
        raise container.ContainerError(f"{path}: not a forest checkpoint")
    arrays = _unpack(rec.array, rec.meta["entries"])
    cfg = ForestConfig(**rec.meta["config"])
    trees = []
    for t in range(cfg.n_trees):
        g = lambda k: arrays[f"t{t}.{k}"]
        trees.append(Tree(g("feature").astype(np.int64), g("threshold").copy(),
                          g("left").astype(np.int64), g("right").astype(np.int64),
                          g("value").copy()))
    return ForestModel(trees, cfg, rec.meta["n_features"], rec.meta["n_outputs"])
