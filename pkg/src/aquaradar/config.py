"""Run configuration: a JSON document validated against the dataclasses it feeds.

Unknown keys anywhere are rejected with the dotted path of the offender.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .em import RadarParams
from .forest import ForestConfig
from .learn import TrainConfig
from .synth import DatasetManifest, PerturbConfig, SweepConfig


class ConfigError(ValueError):
    pass


_MANIFEST_KEYS = ("root_seed", "pure_replicates", "mixture_replicates", "binary_ratios",
                  "ternary_ratios", "concentration_range")
_FOREST_KEYS = ("n_trees", "max_depth", "min_leaf", "max_features")


@dataclass
class RunConfig:
    materials: str | None = None
    manifest: dict = field(default_factory=dict)
    radar: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    perturb: dict = field(default_factory=dict)
    noise_snr_db: float = 20.0
    train: dict = field(default_factory=dict)
    forest: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "out"

    # typed views -----------------------------------------------------------

    def perturb_config(self) -> PerturbConfig:
        return PerturbConfig(**self.perturb)

    def dataset_manifest(self) -> DatasetManifest:
        kw = dict(self.manifest)
        for key in ("binary_ratios", "ternary_ratios"):
            if key in kw:
                kw[key] = tuple(tuple(float(v) for v in r) for r in kw[key])
        if "concentration_range" in kw:
            kw["concentration_range"] = tuple(kw["concentration_range"])
        return DatasetManifest(materials_path=self.materials, noise_snr_db=self.noise_snr_db,
                               perturb=self.perturb_config(), **kw)

    def radar_params(self) -> RadarParams:
        return RadarParams(**self.radar)

    def sweep_config(self) -> SweepConfig:
        return SweepConfig(**self.sweep)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{"seed": self.seed, **self.train})

    def forest_config(self) -> ForestConfig:
        return ForestConfig(**{"seed": self.seed, **self.forest})

    def to_dict(self):
        return dataclasses.asdict(self)


def _check_keys(section, allowed, where):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected an object")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key '{where}.{key}'" if where else f"unknown key '{key}'")


def _names(cls):
    return tuple(f.name for f in dataclasses.fields(cls))


def from_dict(doc) -> RunConfig:
    """Validate ``doc`` and build every typed view once so errors surface early."""
    _check_keys(doc, _names(RunConfig), "")
    _check_keys(doc.get("manifest", {}), _MANIFEST_KEYS, "manifest")
    _check_keys(doc.get("radar", {}), _names(RadarParams), "radar")
    _check_keys(doc.get("sweep", {}), _names(SweepConfig), "sweep")
    _check_keys(doc.get("perturb", {}), _names(PerturbConfig), "perturb")
    _check_keys(doc.get("train", {}), _names(TrainConfig), "train")
    _check_keys(doc.get("forest", {}), _FOREST_KEYS, "forest")
    cfg = RunConfig(**doc)
    try:
        cfg.dataset_manifest()
        cfg.radar_params()
        cfg.sweep_config()
        cfg.train_config()
        cfg.forest_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.materials is not None and not Path(cfg.materials).is_file():
        raise ConfigError(f"materials file not found: {cfg.materials}")
    return cfg


def load(path=None, overrides=None) -> RunConfig:
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise OSError(f"{path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return from_dict(doc)
