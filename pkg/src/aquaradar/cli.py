"""Command-line entry point: ``aquaradar <command> [options]``.

Output layout under ``--out``::

    dataset/manifest.json, labels.csv, tensors/NNNN.vwt, parts/NNNN_{sigma,power,spectra}.vwt
    dataset/raw/NNNN.vwt                 (only with --keep-raw)
    pipeline/fingerprints/NNNN.vwt, dictionary.vwt, unmix.csv
    models/teacher.vwt, student.vwt, train_log.csv, split.json
    reports/metrics.csv, summary.txt, feature_ablation.csv, architecture_ablation.csv,
    unmix_comparison.csv, report.txt
    sweep.wav
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

EXIT_CODES = {"config": 2, "io": 3, "data": 4, "divergence": 5, "internal": 1}


class DataError(ValueError):
    pass


def _set_threads(n):
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _fmt(x):
    return f"{x:.6f}"


# --------------------------------------------------------------------------
# dataset I/O


def _sample_id(i):
    return f"{i:04d}"


def write_dataset(out, dataset, cfg, raw=None):
    from . import container as vwt

    root = Path(out) / "dataset"
    (root / "tensors").mkdir(parents=True, exist_ok=True)
    (root / "parts").mkdir(parents=True, exist_ok=True)
    names = dataset.names
    entries = []
    for i, s in enumerate(dataset.samples):
        sid = _sample_id(i)
        meta = dict(sample=sid, bins=list(s.bins))
        vwt.write(root / "tensors" / f"{sid}.vwt", s.parts.combine(), vwt.PayloadKind.TENSOR, meta)
        for key, arr in (("sigma", s.parts.sigma_phase), ("power", s.parts.mean_power),
                         ("spectra", s.parts.spectra)):
            vwt.write(root / "parts" / f"{sid}_{key}.vwt", arr, vwt.PayloadKind.TENSOR,
                      dict(sample=sid, part=key))
        spec = s.spec
        entries.append(dict(
            id=sid, type=spec.sample_type, components=[n for n, _ in spec.components],
            ratios=[r for _, r in spec.components],
            truth=[float(v) for v in spec.ratio_vector(names)],
            presence=[int(v > 0) for v in spec.ratio_vector(names)],
            concentration_scale=spec.concentration_scale, replicate=spec.replicate_id,
            seed=str(spec.seed), bins=list(s.bins)))
    with open(root / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "type", "seed"] + [f"ratio_{n}" for n in names]
                   + [f"present_{n}" for n in names])
        for e in entries:
            w.writerow([e["id"], e["type"], e["seed"]] + [_fmt(v) for v in e["truth"]]
                       + e["presence"])
    manifest = dict(format="aquaradar-dataset", version=1, names=list(names),
                    config=cfg.to_dict(), samples=entries)
    # written last: its presence marks a complete dataset
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return root


def read_dataset(out):
    from . import container as vwt
    from .dsp import TensorParts
    from .pipeline import Dataset, Sample
    from .synth import SampleSpec

    root = Path(out) / "dataset"
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise FileNotFoundError(f"{mpath}: dataset manifest missing (run 'synth' first)")
    manifest = json.loads(mpath.read_text())
    names = tuple(manifest["names"])
    samples = []
    for e in manifest["samples"]:
        sid = e["id"]
        arrs = {k: vwt.read(root / "parts" / f"{sid}_{k}.vwt").array
                for k in ("sigma", "power", "spectra")}
        if arrs["spectra"].shape[:2] != arrs["sigma"].shape:
            raise DataError(f"{root / 'parts'}/{sid}: part shapes disagree")
        spec = SampleSpec(components=tuple(zip(e["components"], e["ratios"])),
                          concentration_scale=e["concentration_scale"],
                          replicate_id=e["replicate"], seed=int(e["seed"]))
        samples.append(Sample(spec, TensorParts(arrs["sigma"], arrs["power"], arrs["spectra"]),
                              tuple(e["bins"])))
    return Dataset(samples, names, dict(manifest=str(mpath)))


def read_fingerprints(out, dataset):
    from . import container as vwt
    from .pipeline import Decomposition
    from .tensorlab import Fingerprint

    import numpy as np

    root = Path(out) / "pipeline" / "fingerprints"
    fps, fits = [], []
    for i in range(len(dataset)):
        path = root / f"{_sample_id(i)}.vwt"
        if not path.is_file():
            raise FileNotFoundError(f"{path}: fingerprint missing (run 'pipeline' first)")
        rec = vwt.read(path)
        fps.append(Fingerprint(rec.array, rec.meta["rank"], rec.meta["sample"],
                               np.array(rec.meta["weights"])))
        fits.append(rec.meta["fit"])
    return Decomposition(fps, np.array(fits))


# --------------------------------------------------------------------------
# commands


def cmd_synth(cfg, out, keep_raw=False):
    from . import container as vwt
    from .pipeline import synthesize

    raw_dir = Path(out) / "dataset" / "raw"
    hook = None
    if keep_raw:
        raw_dir.mkdir(parents=True, exist_ok=True)

        def hook(i, cap):
            vwt.write(raw_dir / f"{_sample_id(i)}.vwt", cap.frames, vwt.PayloadKind.RAW_CAPTURE,
                      dict(sample=_sample_id(i), layout="frame,antenna,fast_time"))

    dataset = synthesize(cfg.dataset_manifest(), cfg.sweep_config(), cfg.radar_params(), hook)
    root = write_dataset(out, dataset, cfg)
    return f"wrote {len(dataset)} samples to {root}"


def cmd_sweep_wav(path):
    from .wav import write_sweep_wav

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = write_sweep_wav(path)
    return f"wrote {n} samples to {path}"


def cmd_pipeline(cfg, out):
    import numpy as np

    from . import container as vwt
    from .pipeline import decompose, pure_dictionary, split
    from .unmix import unmix_fingerprint

    dataset = read_dataset(out)
    decomp = decompose(dataset, seed=cfg.seed)
    root = Path(out) / "pipeline"
    (root / "fingerprints").mkdir(parents=True, exist_ok=True)
    for i, fp in enumerate(decomp.fingerprints):
        vwt.write(root / "fingerprints" / f"{_sample_id(i)}.vwt", fp.vector,
                  vwt.PayloadKind.FINGERPRINT,
                  dict(sample=_sample_id(i), rank=fp.rank, fit=float(decomp.fits[i]),
                       weights=[float(w) for w in fp.weights]))
    train_idx, _ = split(dataset, cfg.seed)
    dictionary = pure_dictionary(dataset, decomp, train_idx)
    vwt.write(root / "dictionary.vwt", dictionary.matrix, vwt.PayloadKind.DICTIONARY,
              dict(component_names=list(dictionary.component_names)))
    names = dataset.names
    truth = dataset.truth()
    rows = 0
    with open(root / "unmix.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "type"] + [f"true_{n}" for n in names] + [f"est_{n}" for n in names]
                   + ["residual"])
        for i, s in enumerate(dataset.samples):
            if len(s.spec.components) < 2:
                continue
            est = unmix_fingerprint(dictionary, decomp.fingerprints[i])
            w.writerow([_sample_id(i), s.sample_type] + [_fmt(v) for v in truth[i]]
                       + [_fmt(v) for v in est.ratios] + [_fmt(est.residual)])
            rows += 1
    return f"unmixed {rows} mixtures; median PARAFAC fit {np.median(decomp.fits):.4f}"


def cmd_train(cfg, out):
    from . import checkpoint
    from .pipeline import fit_models

    dataset = read_dataset(out)
    decomp = read_fingerprints(out, dataset)
    train_cfg = cfg.train_config()
    models = fit_models(dataset, decomp, train_cfg, forest_cfg=cfg.forest_config(),
                        split_seed=cfg.seed)
    root = Path(out) / "models"
    root.mkdir(parents=True, exist_ok=True)
    checkpoint.save_forest(root / "teacher.vwt", models.forest)
    checkpoint.save_student(root / "student.vwt", models.student, train_cfg)
    with open(root / "train_log.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "lr", "train_loss", "val_loss"])
        for r in models.train_log:
            w.writerow([r["epoch"], f"{r['lr']:.9g}", f"{r['train_loss']:.9g}",
                        f"{r['val_loss']:.9g}"])
    split = dict(train=[int(i) for i in models.train_idx], test=[int(i) for i in models.test_idx])
    (root / "split.json").write_text(json.dumps(split) + "\n")
    return f"trained teacher ({models.forest.tree_count} trees) and student ({models.student.n_params} parameters)"


def cmd_eval(cfg, out, oracle=False):
    import numpy as np

    from . import checkpoint
    from .evaluation import report, rmse_present, write_metrics_csv
    from .forest import forest_predict
    from .learn import predict

    dataset = read_dataset(out)
    split = json.loads((Path(out) / "models" / "split.json").read_text())
    test = np.array(split["test"], dtype=np.int64)
    truth = dataset.truth()[test]
    types = dataset.types[test]
    if oracle:
        ratios, presence = truth.copy(), truth > 0
        teacher = truth.copy()
    else:
        decomp = read_fingerprints(out, dataset)
        x = decomp.padded()[test]
        params, _ = checkpoint.load_student(Path(out) / "models" / "student.vwt")
        forest = checkpoint.load_forest(Path(out) / "models" / "teacher.vwt")
        ratios, presence = predict(params, x)
        teacher = forest_predict(forest, x)
    rep = report(presence, ratios, truth, types, dataset.names,
                 dict(variant="oracle" if oracle else "student", seed=cfg.seed))
    teacher_rmse = rmse_present(teacher, truth, types)
    root = Path(out) / "reports"
    root.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(root / "metrics.csv", [rep])
    lines = ["# RMSE pools every present-component error within a sample type",
             f"test samples: {test.size}",
             f"subset accuracy: {rep.subset_accuracy:.4f}"]
    lines += [f"subset accuracy ({k[16:]}): {v:.4f}" for k, v in rep.meta.items()
              if k.startswith("subset_accuracy_")]
    lines += [f"student RMSE ({k}): {v:.4f}" for k, v in rep.rmse.items()]
    lines += [f"teacher RMSE ({k}): {v:.4f}" for k, v in teacher_rmse.items()]
    (root / "summary.txt").write_text("\n".join(lines) + "\n")
    return "\n".join(lines)


def cmd_ablate(cfg, out, suite="all"):
    from .evaluation import (ARCH_VARIANTS, FEATURE_VARIANTS, architecture_ablation,
                             feature_ablation, unmix_comparison, write_metrics_csv,
                             write_rows_csv)

    dataset = read_dataset(out)
    root = Path(out) / "reports"
    root.mkdir(parents=True, exist_ok=True)
    train_cfg = cfg.train_config()
    done = []
    decomp = None
    if suite in ("all", "unmix", "architecture"):
        decomp = read_fingerprints(out, dataset)
    if suite in ("all", "unmix"):
        rows = unmix_comparison(dataset, decomp, seed=cfg.seed)
        write_rows_csv(root / "unmix_comparison.csv", rows)
        done.append("unmix_comparison.csv")
    if suite in ("all", "feature"):
        reps = [feature_ablation(dataset, v, train_cfg, seed=cfg.seed) for v in FEATURE_VARIANTS]
        write_metrics_csv(root / "feature_ablation.csv", reps)
        done.append("feature_ablation.csv")
    if suite in ("all", "architecture"):
        reps = [architecture_ablation(dataset, v, decomp, train_cfg, seed=cfg.seed)
                for v in ARCH_VARIANTS]
        write_metrics_csv(root / "architecture_ablation.csv", reps)
        done.append("architecture_ablation.csv")
    return "wrote " + ", ".join(str(root / d) for d in done)


def cmd_report(out):
    root = Path(out) / "reports"
    parts = []
    for name in ("summary.txt", "unmix_comparison.csv", "feature_ablation.csv",
                 "architecture_ablation.csv"):
        p = root / name
        if p.is_file():
            parts.append(f"== {name}\n{p.read_text().rstrip()}")
    if not parts:
        raise FileNotFoundError(f"{root}: no reports found (run 'eval' or 'ablate' first)")
    text = "\n\n".join(parts) + "\n"
    (root / "report.txt").write_text(text)
    return text.rstrip()


# --------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--keep-raw", action="store_true", help="also store raw captures")
    common.add_argument("--threads", type=int, help="BLAS thread count")

    parser = argparse.ArgumentParser(prog="aquaradar", parents=[common],
                                     description="Synthetic radar pollutant sensing pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="synthesize the dataset")
    p = sub.add_parser("sweep-wav", parents=[common], help="write the acoustic sweep WAV")
    p.add_argument("path", nargs="?", help="WAV path (default <out>/sweep.wav)")
    sub.add_parser("pipeline", parents=[common], help="fingerprints, dictionary and unmixing")
    sub.add_parser("train", parents=[common], help="fit teacher and student")
    p = sub.add_parser("eval", parents=[common], help="score the student on the test split")
    p.add_argument("--oracle", action="store_true", help="score truth against itself")
    p = sub.add_parser("ablate", parents=[common], help="feature/architecture/unmixing suites")
    p.add_argument("--suite", choices=("all", "feature", "architecture", "unmix"), default="all")
    sub.add_parser("report", parents=[common], help="collect reports into one text file")
    return parser


def _category(exc):
    from .config import ConfigError
    from .container import ContainerError
    from .learn import DivergenceError

    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, DivergenceError):
        return "divergence"
    if isinstance(exc, (ContainerError, DataError)):
        return "data"
    if isinstance(exc, OSError):
        return "io"
    return "internal"


def main(argv=None):
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    try:
        from . import config as config_mod
        from .synth import ManifestError

        try:
            cfg = config_mod.load(args.config, dict(seed=args.seed))
        except ManifestError as exc:
            raise config_mod.ConfigError(str(exc)) from None
        out = Path(args.out or cfg.output_dir)
        if args.seed is not None:
            cfg.manifest = {**cfg.manifest, "root_seed": args.seed}
        out.mkdir(parents=True, exist_ok=True)
        cmd = args.command
        if cmd == "synth":
            msg = cmd_synth(cfg, out, args.keep_raw)
        elif cmd == "sweep-wav":
            msg = cmd_sweep_wav(args.path or out / "sweep.wav")
        elif cmd == "pipeline":
            msg = cmd_pipeline(cfg, out)
        elif cmd == "train":
            msg = cmd_train(cfg, out)
        elif cmd == "eval":
            msg = cmd_eval(cfg, out, args.oracle)
        elif cmd == "ablate":
            msg = cmd_ablate(cfg, out, args.suite)
        else:
            msg = cmd_report(out)
    except KeyboardInterrupt:
        raise
    except Exception as exc:  # one machine-parsable line, then a nonzero exit
        cat = _category(exc)
        text = str(exc).replace("\n", " ")
        print(f"error: {cat}: {text}", file=sys.stderr)
        return EXIT_CODES[cat]
    print(msg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
