import numpy as np
import pytest

from coughscreen import ConfusionMatrix, confusion_matrix, derive_metrics, normalize_rows
from coughscreen.errors import EmptyMatrix, EmptyRow, LabelOutOfRange
from coughscreen.metrics import (
    confusion_to_csv,
    metrics_to_csv,
    render_confusion_table,
    render_metrics_table,
)

DETECTION = ("no_cough", "cough")
DIAGNOSIS = ("bronchiolitis", "bronchitis", "pertussis")


def detection_cm():
    # TN=862 FP=138 / FN=81 TP=919, positive class = cough
    return ConfusionMatrix(np.array([[862, 138], [81, 919]]), DETECTION)


def test_confusion_matrix_counting():
    cm = confusion_matrix([(0, 0), (0, 1), (1, 1), (1, 1)], DETECTION)
    np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 2]])
    assert cm.total == 4

    empty = confusion_matrix([], DETECTION)
    assert empty.total == 0

    perfect = confusion_matrix([(i, i) for i in range(3) for _ in range(4)], DIAGNOSIS)
    np.testing.assert_array_equal(perfect.counts, np.eye(3) * 4)


def test_confusion_matrix_label_range():
    with pytest.raises(LabelOutOfRange):
        confusion_matrix([(0, 2)], DETECTION)
    with pytest.raises(LabelOutOfRange):
        confusion_matrix([(-1, 0)], DETECTION)


def test_detection_metrics_match_reference_counts():
    report = derive_metrics(detection_cm())
    cough = report.for_class("cough")
    assert report.accuracy * 100 == pytest.approx(89.05, abs=0.01)
    assert cough.sensitivity * 100 == pytest.approx(91.90, abs=0.01)
    assert cough.specificity * 100 == pytest.approx(86.20, abs=0.01)
    assert cough.precision * 100 == pytest.approx(86.94, abs=0.01)
    assert cough.f1 * 100 == pytest.approx(89.35, abs=0.01)


def test_detection_confusion_normalizes_to_reference_percentages():
    grid = normalize_rows(detection_cm())
    np.testing.assert_allclose(grid, [[86.2, 13.8], [8.1, 91.9]], atol=1e-9)


@pytest.mark.parametrize(
    "precision,sensitivity,f1",
    [(93.87, 95.00, 94.43), (78.95, 93.80, 85.74), (100.00, 80.00, 88.89)],
)
def test_f1_consistency_with_reference_pairs(precision, sensitivity, f1):
    p, r = precision / 100, sensitivity / 100
    computed = 2 * p * r / (p + r)
    assert computed * 100 == pytest.approx(f1, abs=0.01)


def test_perfect_matrix_all_100():
    cm = ConfusionMatrix(np.eye(3, dtype=int) * 7, DIAGNOSIS)
    report = derive_metrics(cm)
    assert report.accuracy == 1.0
    for c in report.per_class:
        assert c.sensitivity == 1.0
        assert c.specificity == 1.0
        assert c.precision == 1.0
        assert c.f1 == 1.0


def test_undefined_ratios_absent_not_zero():
    # nothing ever predicted as class 0: precision undefined
    cm = ConfusionMatrix(np.array([[0, 5, 0], [0, 5, 0], [0, 0, 5]]), DIAGNOSIS)
    report = derive_metrics(cm)
    first = report.per_class[0]
    assert first.precision is None
    assert first.sensitivity == 0.0
    assert first.f1 is None


def test_binary_duality_class0_specificity_is_class1_sensitivity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        counts = rng.integers(0, 50, size=(2, 2))
        counts[0, 0] += 1
        counts[1, 1] += 1
        report = derive_metrics(ConfusionMatrix(counts, DETECTION))
        c0, c1 = report.per_class
        assert c0.specificity == pytest.approx(c1.sensitivity)
        assert c1.specificity == pytest.approx(c0.sensitivity)


def test_f1_between_precision_and_sensitivity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        counts = rng.integers(1, 60, size=(3, 3))
        report = derive_metrics(ConfusionMatrix(counts, DIAGNOSIS))
        for c in report.per_class:
            assert min(c.precision, c.sensitivity) - 1e-12 <= c.f1 <= max(c.precision, c.sensitivity) + 1e-12
            if c.precision == c.sensitivity:
                assert c.f1 == pytest.approx(c.precision)


def test_accuracy_is_trace_over_total():
    rng = np.random.default_rng(2)
    counts = rng.integers(0, 30, size=(3, 3))
    counts[0, 0] += 1
    cm = ConfusionMatrix(counts, DIAGNOSIS)
    assert derive_metrics(cm).accuracy == pytest.approx(np.trace(counts) / counts.sum())


def test_permutation_equivariance():
    rng = np.random.default_rng(3)
    counts = rng.integers(1, 40, size=(3, 3))
    perm = [2, 0, 1]
    cm = ConfusionMatrix(counts, DIAGNOSIS)
    permuted = ConfusionMatrix(counts[np.ix_(perm, perm)], tuple(DIAGNOSIS[i] for i in perm))
    a = derive_metrics(cm)
    b = derive_metrics(permuted)
    assert a.accuracy == pytest.approx(b.accuracy)
    for name in DIAGNOSIS:
        x, y = a.for_class(name), b.for_class(name)
        assert x.sensitivity == pytest.approx(y.sensitivity)
        assert x.specificity == pytest.approx(y.specificity)
        assert x.precision == pytest.approx(y.precision)
        assert x.f1 == pytest.approx(y.f1)


def test_normalize_rows_patterns():
    grid = normalize_rows(ConfusionMatrix(np.array([[4, 1, 0], [0, 5, 0], [0, 0, 2]]), DIAGNOSIS))
    np.testing.assert_allclose(grid[0], [80.0, 20.0, 0.0])
    np.testing.assert_allclose(np.diag(normalize_rows(ConfusionMatrix(np.eye(3, dtype=int) * 9, DIAGNOSIS))), 100.0)

    grid = normalize_rows(ConfusionMatrix(np.array([[15, 1], [1, 19]]), DETECTION))
    np.testing.assert_allclose(grid, [[93.75, 6.25], [5.0, 95.0]])


def test_normalize_rows_empty_row():
    with pytest.raises(EmptyRow):
        normalize_rows(ConfusionMatrix(np.array([[0, 0], [1, 1]]), DETECTION))


def test_empty_matrix_rejected():
    with pytest.raises(EmptyMatrix):
        derive_metrics(confusion_matrix([], DETECTION))
    with pytest.raises(EmptyMatrix):
        ConfusionMatrix(np.zeros((2, 3), dtype=int), DETECTION)


def test_renderers_and_csv(tmp_path):
    report = derive_metrics(detection_cm())
    text = render_metrics_table(report, positive_only=True)
    assert "89.05" in text and "89.35" in text and "cough" in text
    grid_text = render_confusion_table(detection_cm())
    assert "86.2" in grid_text and "91.9" in grid_text

    metrics_to_csv(report, tmp_path / "metrics.csv")
    confusion_to_csv(detection_cm(), tmp_path / "cm.csv")
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == "class,f1,sensitivity,specificity,precision,accuracy"
    assert lines[1].startswith("overall,,,,,0.8905")
    cm_lines = (tmp_path / "cm.csv").read_text().splitlines()
    assert cm_lines[1] == "no_cough,862,138"
    assert cm_lines[2] == "cough,81,919"
