import numpy as np
import pytest

from fedmade import metrics as M
from fedmade.errors import ConfigError


def test_confusion_perfect_and_constant():
    y = np.array([0, 1, 2, 2, 1])
    assert np.array_equal(M.confusion(y, y, 3).counts, np.diag([1, 2, 2]))
    cm = M.confusion(np.zeros(5, int), y, 3).counts
    assert np.array_equal(cm[:, 0], [1, 2, 2]) and not cm[:, 1:].any()


def test_confusion_hand_counted():
    labels = [0, 0, 1, 1, 1, 2, 2, 2, 2, 0]
    preds = [0, 1, 1, 1, 2, 2, 0, 2, 2, 0]
    cm = M.confusion(preds, labels, 3)
    assert cm.counts.tolist() == [[2, 1, 0], [0, 2, 1], [1, 0, 3]]
    assert cm.total == 10


def test_confusion_errors():
    with pytest.raises(ConfigError, match="length"):
        M.confusion([0, 1], [0], 2)
    with pytest.raises(ConfigError):
        M.confusion([0, 3], [0, 1], 2)


def test_summary_binary_example():
    s = M.summarize(M.ConfusionMatrix(np.array([[50, 0], [5, 45]])), positive_class=1)
    assert s.precision == 1.0
    assert s.recall == pytest.approx(0.9, abs=1e-15)
    assert s.f1 == pytest.approx(0.947368421, abs=1e-9)
    assert s.accuracy == pytest.approx(0.95, abs=1e-15)
    assert s.per_class_accuracy == [1.0, 0.9]
    assert s.zero_division == [] and s.empty_classes == []


def test_summary_diagonal():
    s = M.summarize(M.ConfusionMatrix(np.diag([3, 4, 5])))
    assert s.accuracy == s.precision == s.recall == s.f1 == 1.0
    assert s.per_class_accuracy == [1.0] * 3


def test_summary_empty_class_and_zero_division():
    s = M.summarize(M.ConfusionMatrix(np.array([[4, 0], [0, 0]])), positive_class=1)
    assert s.per_class_accuracy == [1.0, 0.0] and s.empty_classes == [1]
    assert s.precision == s.recall == s.f1 == 0.0
    assert set(s.zero_division) == {"precision", "recall", "f1"}
    assert all(np.isfinite(v) for v in (s.accuracy, s.precision, s.recall, s.f1))


def test_weighted_accuracy_identity():
    r = np.random.default_rng(0)
    for _ in range(20):
        c = r.integers(0, 50, (5, 5))
        s = M.summarize(M.ConfusionMatrix(c))
        rows = c.sum(1)
        assert s.accuracy == pytest.approx(sum(a * n / c.sum() for a, n in zip(s.per_class_accuracy, rows)),
                                           abs=1e-12)


def test_relabelling_permutes_per_class_accuracy():
    r = np.random.default_rng(1)
    labels, preds = r.integers(0, 4, 300), r.integers(0, 4, 300)
    perm = r.permutation(4)
    a = M.summarize(M.confusion(preds, labels, 4)).per_class_accuracy
    b = M.summarize(M.confusion(perm[preds], perm[labels], 4)).per_class_accuracy
    assert [b[perm[c]] for c in range(4)] == a


def test_round_timer_with_fake_clock():
    ticks = iter([0.0, 1.5, 2.0, 2.25])
    t = M.RoundTimer(clock=lambda: next(ticks))
    t.start()
    assert t.stop() == 1.5
    t.start()
    assert t.stop() == 0.25
    assert t.mean() == pytest.approx(0.875)
