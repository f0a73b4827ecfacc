"""Capture -> tensor -> fingerprint -> teacher/student, shared by the CLI and eval."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsp, synth
from .forest import ForestConfig, forest_fit, forest_predict
from .learn import NetConfig, TrainConfig, predict, stratified_split, train_student
from .tensorlab import MAX_RANK, FINGERPRINT_LENGTH, fingerprint, parafac
from .unmix import build_dictionary, unmix_fingerprint

TEST_FRACTION = 0.2
PRESENCE_THRESHOLD = 0.1  # ratio above which an unmixed component counts as present


@dataclass
class Sample:
    spec: synth.SampleSpec
    parts: dsp.TensorParts
    bins: tuple

    @property
    def sample_type(self):
        return self.spec.sample_type


@dataclass
class Dataset:
    samples: list
    names: tuple
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def types(self):
        return np.array([s.sample_type for s in self.samples])

    def truth(self):
        return np.array([s.spec.ratio_vector(self.names) for s in self.samples])

    def tensors(self, drop=None):
        return [s.parts.combine(drop) for s in self.samples]


def synthesize(manifest: synth.DatasetManifest, sweep=None, radar=None, keep_raw=None):
    """Generate every capture and reduce it to tensor parts.

    ``keep_raw`` is an optional callback receiving each raw capture.
    """
    materials = manifest.materials()
    samples = []
    for spec in synth.dataset_specs(manifest, materials):
        cap = synth.generate_capture(spec, sweep, radar, manifest.noise_snr_db,
                                     manifest.perturb, materials)
        if keep_raw is not None:
            keep_raw(len(samples), cap)
        parts, bins = dsp.tensor_parts(cap)
        samples.append(Sample(spec, parts, bins))
    return Dataset(samples, materials.names, dict(root_seed=manifest.root_seed))


@dataclass
class Decomposition:
    fingerprints: list      # tensorlab.Fingerprint per sample
    fits: np.ndarray

    def padded(self):
        """Fingerprints zero-padded to rank 3 (ordered by PARAFAC weight)."""
        out = np.zeros((len(self.fingerprints), MAX_RANK * FINGERPRINT_LENGTH))
        for i, fp in enumerate(self.fingerprints):
            out[i, :fp.vector.size] = fp.vector
        return out


def decompose(dataset: Dataset, drop=None, seed=0):
    """Rank-k PARAFAC of every tensor with k = number of components."""
    fps, fits = [], []
    for s, x in zip(dataset.samples, dataset.tensors(drop)):
        fs = parafac(x, max(1, len(s.spec.components)), seed=seed)
        fps.append(fingerprint(fs, source_sample=str(s.spec.seed)))
        fits.append(fs.fit)
    return Decomposition(fps, np.array(fits))


def split(dataset: Dataset, seed=0):
    """Train/test indices stratified by composition (the set of components).

    Every composition keeps at least one training sample, so each pure
    component always reaches the dictionary.
    """
    groups = np.array(["+".join(s.spec.names) for s in dataset.samples])
    return stratified_split(groups, TEST_FRACTION, seed)


def pure_dictionary(dataset: Dataset, decomp: Decomposition, indices):
    pure = {n: [] for n in dataset.names}
    for i in indices:
        spec = dataset.samples[i].spec
        if len(spec.components) == 1:
            pure[spec.names[0]].append(decomp.fingerprints[i])
    return build_dictionary(pure, dataset.names)


def unmix_all(dictionary, decomp: Decomposition, indices):
    return np.array([unmix_fingerprint(dictionary, decomp.fingerprints[i]).ratios
                     for i in indices])


@dataclass
class LearnedModels:
    forest: object
    student: object
    train_log: list
    train_idx: np.ndarray
    test_idx: np.ndarray
    teacher_test: np.ndarray
    student_ratios: np.ndarray
    student_presence: np.ndarray


def fit_models(dataset: Dataset, decomp: Decomposition, train_cfg: TrainConfig | None = None,
               net: NetConfig | None = None, forest_cfg: ForestConfig | None = None,
               split_seed=0):
    """Teacher then student on the training split; predictions on the test split."""
    train_cfg = train_cfg or TrainConfig()
    forest_cfg = forest_cfg or ForestConfig(seed=train_cfg.seed)
    x = decomp.padded()
    c = dataset.truth()
    train_idx, test_idx = split(dataset, split_seed)
    forest = forest_fit(x[train_idx], c[train_idx], forest_cfg)
    teacher_train = forest_predict(forest, x[train_idx])
    net = net or NetConfig(in_dim=x.shape[1], n_out=c.shape[1])
    result = train_student(x[train_idx], teacher_train, c[train_idx],
                           dataset.types[train_idx], train_cfg, net)
    ratios, presence = predict(result.params, x[test_idx])
    return LearnedModels(forest, result.params, result.log, train_idx, test_idx,
                         forest_predict(forest, x[test_idx]), ratios, presence)
