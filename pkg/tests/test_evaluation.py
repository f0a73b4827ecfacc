import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aquaradar import evaluation as ev


def test_metrics_hand_computed():
    pred = [{0}, {0, 1}, {2}, set()]
    truth = [{0}, {1}, {2}, {2}]
    rep = ev.multilabel_metrics(pred, truth, 3, ("a", "b", "c"))
    a, b, c = rep.per_class
    assert (a["precision"], a["recall"]) == (0.5, 1.0)
    assert a["f1"] == pytest.approx(2 / 3)
    assert (b["precision"], b["recall"], b["f1"]) == (1.0, 1.0, 1.0)
    assert (c["precision"], c["recall"]) == (1.0, 0.5)
    assert a["accuracy"] == 0.75
    assert rep.subset_accuracy == 0.5
    assert rep.macro["recall"] == pytest.approx((1 + 1 + 0.5) / 3)


def test_undefined_precision_is_zero():
    rep = ev.multilabel_metrics([set(), set()], [{0}, {0}], 2)
    assert rep.per_class[0]["precision"] == 0.0
    assert rep.per_class[1]["precision"] == 0.0


def test_bad_class_index():
    with pytest.raises(IndexError):
        ev.multilabel_metrics([{5}], [{0}], 3)
    with pytest.raises(ValueError):
        ev.multilabel_metrics([{0}], [{0}, {1}], 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 20))
def test_perfect_prediction_scores_one(seed):
    rng = np.random.default_rng(seed)
    mask = rng.uniform(size=(20, 5)) < 0.4
    mask[np.arange(20), rng.integers(0, 5, 20)] = True
    rep = ev.multilabel_metrics(mask, mask, 5)
    assert rep.subset_accuracy == 1.0
    assert all(r["f1"] == 1.0 for r in rep.per_class)


def test_rmse_counts_only_present_components():
    truth = np.array([[0.5, 0.5, 0.0], [1.0, 0.0, 0.0]])
    pred = np.array([[0.4, 0.4, 0.2], [0.9, 0.1, 0.0]])
    out = ev.rmse_present(pred, truth, ["binary", "pure"])
    assert out["binary"] == pytest.approx(0.1)
    assert out["pure"] == pytest.approx(0.1)
    assert out["all"] == pytest.approx(0.1)


def test_pca_directions_are_orthonormal():
    x = np.random.default_rng(0).normal(size=(30, 8))
    mean, comps = ev.pca_fit(x, 3)
    assert np.allclose(comps @ comps.T, np.eye(3))
    assert np.allclose(mean, x.mean(axis=0))


def test_arch_variants():
    from aquaradar.learn import TrainConfig
    base = TrainConfig()
    assert ev.arch_configs("no-KL", base, 405, 5)[0].alpha == 0.0
    assert ev.arch_configs("no-Huber", base, 405, 5)[0].regression == "mse"
    assert ev.arch_configs("no-soft-labels", base, 405, 5)[0].soft_labels is False
    assert ev.arch_configs("no-residual", base, 405, 5)[1].residual is False
    assert len(ev.arch_configs("shallow", base, 405, 5)[1].widths) == 2
    with pytest.raises(ValueError):
        ev.arch_configs("wide", base, 405, 5)


def test_csv_writers(tmp_path):
    rep = ev.report(np.eye(3, dtype=bool), np.eye(3), np.eye(3), ["pure"] * 3, ("a", "b", "c"),
                    dict(variant="v"))
    ev.write_metrics_csv(tmp_path / "m.csv", [rep])
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0].startswith("variant,row,accuracy")
    assert len(lines) == 1 + 3 + 1
    ev.write_rows_csv(tmp_path / "r.csv", [dict(method="x", accuracy=0.5)])
    assert (tmp_path / "r.csv").read_text() == "method,accuracy\nx,0.500000\n"
