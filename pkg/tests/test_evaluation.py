import numpy as np
import pytest

from objdisc.errors import DataError
from objdisc.evaluation import corloc, correct_localizations, prefilter_neighbors
from objdisc.model import Dataset, ImageRecord, Rect
from objdisc.synthetic import SyntheticSpec, generate_synthetic


def _im(i, gt, label=None, glob=None):
    return ImageRecord.create(
        id=f"im{i}",
        width=100,
        height=100,
        proposals=[[0, 0, 10, 10]],
        ground_truth=None if gt is None else [gt],
        class_label=label,
        global_descriptor=glob,
    )


def _three():
    return Dataset((_im(0, [0, 0, 10, 10], "a"), _im(1, [50, 50, 20, 20], "a"), _im(2, [10, 10, 30, 30], "b")))


def test_perfect_predictions():
    ds = _three()
    preds = {im.id: Rect(*im.ground_truth[0]) for im in ds}
    for setting in ("mixed", "separate"):
        assert corloc(preds, ds, setting).value == 100.0


def test_hand_counts():
    ds = _three()
    preds = {"im0": Rect(0, 0, 10, 10), "im1": Rect(0, 0, 10, 10), "im2": Rect(10, 10, 30, 30)}
    mixed = corloc(preds, ds, "mixed")
    assert mixed.value == pytest.approx(200 / 3) and mixed.num_correct == 2
    sep = corloc(preds, ds, "separate")
    assert sep.value == pytest.approx(75.0)
    assert sep.per_class == {"a": 50.0, "b": 100.0}


def test_iou_threshold_is_strict():
    ds = Dataset((_im(0, [0, 0, 10, 10]), _im(1, [0, 0, 10, 10])))
    # IoU of exactly 0.5
    ok = correct_localizations({"im0": Rect(0, 0, 10, 5), "im1": Rect(0, 0, 10, 6)}, ds)
    assert ok == {"im0": False, "im1": True}


def test_outliers_and_missing_predictions():
    ds = Dataset((_im(0, [0, 0, 10, 10], "a"), _im(1, None, "a")))
    r = corloc({"im0": Rect(0, 0, 10, 10), "im1": Rect(0, 0, 10, 10)}, ds)
    assert r.value == 50.0
    assert corloc({}, ds).value == 0.0
    with pytest.raises(DataError):
        corloc({"nope": Rect(0, 0, 1, 1)}, ds)
    with pytest.raises(ValueError):
        corloc({}, ds, "joint")


def test_single_class_settings_agree():
    ds = generate_synthetic(SyntheticSpec(n=6, classes=1, proposals=4), seed=3)
    preds = {im.id: Rect(*im.proposals[0]) for im in ds}
    assert corloc(preds, ds, "mixed").value == corloc(preds, ds, "separate").value


def test_report_formats():
    r = corloc({"im0": Rect(0, 0, 10, 10)}, _three(), "separate")
    assert r.to_text().startswith("CorLoc (separate): 25.00%")
    lines = r.to_csv().splitlines()
    assert lines[0] == "class,correct,images,corloc" and lines[-1].startswith("ALL (separate),1,3,")


def _glob_dataset(values):
    return Dataset(tuple(_im(i, None, glob=[v]) for i, v in enumerate(values)))


def test_prefilter_examples():
    ds = _glob_dataset([0.0, 1.0, 3.0])
    assert np.array_equal(prefilter_neighbors(ds, 5), ~np.eye(3, dtype=bool))
    m = prefilter_neighbors(ds, 1)
    assert m[1].tolist() == [True, False, False]
    assert m[2].tolist() == [False, True, False]
    m = prefilter_neighbors(_glob_dataset([2.0] * 4), 2)
    assert (m.sum(axis=1) == 2).all()
    assert m[0].tolist() == [False, True, True, False]
    assert m[3].tolist() == [True, True, False, False]


def test_prefilter_errors():
    with pytest.raises(DataError):
        prefilter_neighbors(_three(), 1)
    with pytest.raises(ValueError):
        prefilter_neighbors(_glob_dataset([0.0, 1.0]), 0)


def test_prefilter_row_counts():
    rng = np.random.default_rng(0)
    ds = _glob_dataset(rng.normal(size=12))
    for k in (1, 4, 11, 30):
        m = prefilter_neighbors(ds, k)
        assert (m.sum(axis=1) == min(k, 11)).all() and not np.diag(m).any()
