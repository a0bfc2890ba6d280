import numpy as np
import pytest

from tempograph.errors import MetricError
from tempograph.metrics import auc_roc, average_precision


def pairwise_auc(scores, labels):
    scores, labels = np.asarray(scores, dtype=float), np.asarray(labels)
    pos, neg = scores[labels == 1], scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (pos.size * neg.size)


def definitional_ap(scores, labels):
    """Precision among everything scored at least as high as each positive, averaged over positives."""
    scores, labels = np.asarray(scores, dtype=float), np.asarray(labels)
    precisions = [labels[scores >= s].mean() for s in scores[labels == 1]]
    return float(np.mean(precisions))


def test_hand_example():
    scores, labels = [0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]
    assert average_precision(scores, labels) == pytest.approx(5 / 6)
    assert auc_roc(scores, labels) == pytest.approx(3 / 4)


def test_perfect_separation():
    scores, labels = [0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]
    assert average_precision(scores, labels) == pytest.approx(1.0)
    assert auc_roc(scores, labels) == pytest.approx(1.0)


def test_inverted_ranking():
    assert auc_roc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == pytest.approx(0.0)


def test_equal_scores_give_chance_auc():
    assert auc_roc(np.full(10, 0.3), [1, 0] * 5) == pytest.approx(0.5)


def test_partial_ties():
    scores, labels = [0.5, 0.5, 0.7, 0.1, 0.5], [1, 0, 1, 0, 0]
    assert auc_roc(scores, labels) == pytest.approx(pairwise_auc(scores, labels))
    assert average_precision(scores, labels) == pytest.approx(0.75)


def test_ap_ignores_order_within_ties():
    # EdgeBank-style 0/1 scores with positives listed before their negatives
    scores, labels = [1.0, 1.0, 0.0, 0.0], [1, 0, 1, 0]
    assert average_precision(scores, labels) == pytest.approx(0.5)
    assert average_precision(scores[::-1], labels[::-1]) == pytest.approx(0.5)


def test_accepts_float_labels():
    assert average_precision([0.9, 0.1], np.array([1.0, 0.0])) == pytest.approx(1.0)


def test_agrees_with_brute_force_on_random_sets():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(2, 501))
        labels = rng.integers(0, 2, size=n)
        labels[:2] = [0, 1]
        # coarse rounding leaves plenty of ties
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))
        assert average_precision(scores, labels) == pytest.approx(definitional_ap(scores, labels), abs=1e-12)
        assert auc_roc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)


@pytest.mark.parametrize("scores, labels", [
    ([0.1, 0.2], [1]),
    ([0.1, 0.2], [1, 2]),
    ([0.1, 0.2], [1, 1]),
    ([0.1, 0.2], [0, 0]),
    ([0.1, float("nan")], [0, 1]),
    ([0.1, float("inf")], [0, 1]),
])
def test_invalid_inputs(scores, labels):
    with pytest.raises(MetricError):
        average_precision(scores, labels)
    with pytest.raises(MetricError):
        auc_roc(scores, labels)
