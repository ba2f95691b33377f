import numpy as np
import pytest

from xfdd.errors import DataError
from xfdd.lrp import RelevanceReport
from xfdd.metrics import (
    classification_accuracy,
    confusion_matrix,
    false_alarm_rate,
    fault_detection_rate,
    fdr_table,
    heatmap,
)


def report_for(names, values):
    values = np.asarray(values, dtype=float)
    return RelevanceReport(
        class_id=None, class_name="fault", variable_names=tuple(names),
        relevance=values, signed=values.copy(), n_samples=3, epsilon=0.0,
    )


def test_confusion_matrix_counts_and_accuracy(rng):
    labels = rng.integers(0, 3, size=200)
    preds = labels.copy()
    flip = rng.choice(200, size=40, replace=False)
    preds[flip] = (preds[flip] + 1) % 3
    cm = confusion_matrix(preds, labels)
    assert cm.counts.sum() == 200
    assert np.array_equal(cm.counts.sum(axis=1), np.bincount(labels, minlength=3))
    assert cm.accuracy == pytest.approx(classification_accuracy(preds, labels))
    assert cm.accuracy == pytest.approx(np.trace(cm.counts) / 200)


def test_fdr_extremes():
    fault_labels = np.array([0, 0, 3, 3, 3])
    assert fault_detection_rate(np.array([0, 0, 1, 1, 1]), fault_labels, 3) == 100.0
    assert fault_detection_rate(np.array([0, 0, 0, 0, 0]), fault_labels, 3) == 0.0
    with pytest.raises(DataError):
        fault_detection_rate(np.zeros(5, dtype=int), fault_labels, 7)


def test_far_extremes():
    fault_labels = np.array([0, 0, 0, 1, 1])
    assert false_alarm_rate(np.array([0, 0, 0, 1, 1]), fault_labels) == 0.0
    assert false_alarm_rate(np.ones(5, dtype=int), fault_labels) == 100.0
    with pytest.raises(DataError):
        false_alarm_rate(np.ones(3, dtype=int), np.array([1, 1, 2]))


def test_far_fdr_consistent_with_confusion_matrix(rng):
    fault_labels = rng.integers(0, 3, size=300)
    preds = (rng.uniform(size=300) < 0.4).astype(int)
    binary_truth = (fault_labels != 0).astype(int)
    cm = confusion_matrix(preds, binary_truth)
    far = false_alarm_rate(preds, fault_labels)
    assert far == pytest.approx(100.0 * cm.counts[0, 1] / cm.counts[0].sum())
    fdr_all = [fault_detection_rate(preds, fault_labels, f) for f in (1, 2)]
    weights = [(fault_labels == f).sum() for f in (1, 2)]
    combined = np.average(fdr_all, weights=weights)
    assert combined == pytest.approx(100.0 * cm.counts[1, 1] / cm.counts[1].sum())


def test_heatmap_single_dominant_variable():
    rep = report_for(["a", "b", "c"], [0.2, 5.0, 1.0])
    matrix, fids, names = heatmap({1: rep})
    assert matrix.shape == (1, 3)
    assert matrix[0, 1] == 1.0
    assert np.all(matrix[0, [0, 2]] < 1.0)


def test_heatmap_normalization_preserves_ranking(rng):
    values = np.abs(rng.normal(size=6)) + 0.01
    rep = report_for(list("abcdef"), values)
    matrix, _, _ = heatmap({4: rep})
    assert np.array_equal(np.argsort(matrix[0]), np.argsort(values))
    assert matrix.max() == 1.0


def test_heatmap_missing_report_warns():
    rep = report_for(["a", "b"], [1.0, 2.0])
    with pytest.warns(UserWarning, match="fault 2"):
        matrix, fids, _ = heatmap({1: rep, 2: None})
    assert fids == (1,)


def test_heatmap_mismatched_variables_rejected():
    with pytest.raises(DataError):
        heatmap({1: report_for(["a"], [1.0]), 2: report_for(["b"], [1.0])})


def test_fdr_table_layout(rng):
    fault_labels = np.array([0] * 50 + [1] * 30 + [2] * 20)
    preds = (fault_labels != 0).astype(int)
    preds[:5] = 1  # five false alarms
    table = fdr_table(preds, fault_labels, {"pca_t2": np.zeros(100, dtype=bool)})
    names = [row["fault"] for row in table]
    assert names == ["1", "2", "average", "FAR"]
    model_rates = {row["fault"]: row["model"] for row in table}
    assert model_rates["1"] == 100.0 and model_rates["2"] == 100.0
    assert model_rates["average"] == 100.0
    assert model_rates["FAR"] == pytest.approx(10.0)
    assert table[0]["pca_t2"] == 0.0
