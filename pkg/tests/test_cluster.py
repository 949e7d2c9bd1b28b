import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from laic.cluster import (
    contingency_table,
    evaluate,
    hungarian_match,
    kmeans,
)
from laic.embio import LabelVector
from laic.errors import KTooLarge, LengthMismatch, NonSquare


def brute_force_match(table):
    k = table.shape[0]
    best = -1
    for perm in itertools.permutations(range(k)):
        matched = sum(table[i, perm[i]] for i in range(k))
        best = max(best, matched)
    return best


# --- kmeans ---

def test_every_point_its_own_cluster(rng):
    data = rng.standard_normal((6, 3))
    result = kmeans(data, 6, seed=0)
    assert result.inertia == pytest.approx(0.0, abs=1e-12)
    assert sorted(result.labels.values) == list(range(6))


def test_recovers_separated_duplicate_pairs():
    data = np.array([[0.0, 0.0], [0.0, 0.0], [9.0, 9.0], [9.0, 9.0]])
    result = kmeans(data, 2, seed=0)
    labels = result.labels.values
    assert labels[0] == labels[1] and labels[2] == labels[3]
    assert labels[0] != labels[2]
    assert result.inertia == pytest.approx(0.0, abs=1e-12)


def test_nearest_center_property(rng):
    data = rng.standard_normal((200, 5))
    result = kmeans(data, 4, seed=3)
    d2 = ((data[:, None, :] - result.centers[None, :, :]) ** 2).sum(axis=2)
    assert np.array_equal(result.labels.values, np.argmin(d2, axis=1))


def test_inertia_trace_non_increasing(rng):
    data = rng.standard_normal((150, 4))
    result = kmeans(data, 5, seed=1, restarts=1)
    trace = np.array(result.inertia_trace)
    assert np.all(np.diff(trace) <= 1e-9 * max(1.0, trace[0]))


def test_no_empty_clusters_with_duplicate_points():
    data = np.zeros((10, 2))
    result = kmeans(data, 3, seed=0)
    assert np.bincount(result.labels.values, minlength=3).min() >= 1


def test_k_too_large():
    with pytest.raises(KTooLarge):
        kmeans(np.zeros((3, 2)), 4, seed=0)


def test_restarts_keep_best(rng):
    data = rng.standard_normal((120, 3))
    single = kmeans(data, 6, seed=5, restarts=1)
    many = kmeans(data, 6, seed=5, restarts=10)
    assert many.inertia <= single.inertia + 1e-9


# --- hungarian matching ---

def test_identity_contingency():
    table = np.diag([3, 4, 5])
    perm, matched = hungarian_match(table)
    assert perm == (0, 1, 2)
    assert matched == 12


def test_permuted_labels_match_perfectly(rng):
    truth = rng.integers(0, 4, size=100)
    mapping = np.array([2, 3, 1, 0])
    pred = mapping[truth]
    table = contingency_table(
        LabelVector(pred, num_classes=4), LabelVector(truth, num_classes=4)
    )
    perm, matched = hungarian_match(table)
    assert matched == 100
    for t in range(4):
        assert perm[mapping[t]] == t


def test_hungarian_equals_bruteforce(rng):
    for _ in range(30):
        k = int(rng.integers(2, 7))
        table = rng.integers(0, 30, size=(k, k))
        _, matched = hungarian_match(table)
        assert matched == brute_force_match(table)


def test_non_square_rejected():
    with pytest.raises(NonSquare):
        hungarian_match(np.zeros((2, 3)))


# --- metrics ---

def test_identical_labelings_score_one(rng):
    y = LabelVector(rng.integers(0, 5, size=200), num_classes=5)
    report = evaluate(y, y)
    assert report.nmi == pytest.approx(1.0, abs=1e-12)
    assert report.acc == 1.0
    assert report.ari == pytest.approx(1.0, abs=1e-12)


def test_permuted_labeling_scores_one(rng):
    truth = rng.integers(0, 6, size=300)
    mapping = np.array([5, 0, 3, 1, 4, 2])
    report = evaluate(
        LabelVector(mapping[truth], num_classes=6),
        LabelVector(truth, num_classes=6),
    )
    assert report.acc == 1.0
    assert report.nmi == pytest.approx(1.0, abs=1e-12)
    assert report.ari == pytest.approx(1.0, abs=1e-12)


def test_random_labelings_have_near_zero_ari():
    aris = []
    for seed in range(20):
        r = np.random.default_rng(seed)
        pred = LabelVector(r.integers(0, 10, size=500), num_classes=10)
        truth = LabelVector(r.integers(0, 10, size=500), num_classes=10)
        aris.append(evaluate(pred, truth).ari)
    assert abs(np.mean(aris)) < 0.05


def test_nmi_symmetric(rng):
    a = LabelVector(rng.integers(0, 4, size=120), num_classes=4)
    b = LabelVector(rng.integers(0, 6, size=120), num_classes=6)
    assert abs(evaluate(a, b).nmi - evaluate(b, a).nmi) < 1e-12


@given(seed=st.integers(0, 500), k=st.integers(2, 6))
def test_relabeling_invariance(seed, k):
    r = np.random.default_rng(seed)
    truth = LabelVector(r.integers(0, k, size=80), num_classes=k)
    pred = r.integers(0, k, size=80)
    perm = r.permutation(k)
    before = evaluate(LabelVector(pred, num_classes=k), truth)
    after = evaluate(LabelVector(perm[pred], num_classes=k), truth)
    assert before.nmi == pytest.approx(after.nmi, abs=1e-12)
    assert before.acc == pytest.approx(after.acc, abs=1e-12)
    assert before.ari == pytest.approx(after.ari, abs=1e-12)


def test_against_sklearn_oracle(rng):
    for _ in range(10):
        pred = rng.integers(0, 5, size=150)
        truth = rng.integers(0, 7, size=150)
        report = evaluate(
            LabelVector(pred, num_classes=5), LabelVector(truth, num_classes=7)
        )
        assert report.nmi == pytest.approx(
            normalized_mutual_info_score(truth, pred, average_method="arithmetic"),
            abs=1e-10,
        )
        assert report.ari == pytest.approx(adjusted_rand_score(truth, pred), abs=1e-10)


def test_unequal_class_counts_padded(rng):
    pred = LabelVector(rng.integers(0, 3, size=50), num_classes=3)
    truth = LabelVector(rng.integers(0, 5, size=50), num_classes=5)
    report = evaluate(pred, truth)
    assert len(report.matching) == 5
    assert 0.0 <= report.acc <= 1.0


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        evaluate(
            LabelVector(np.zeros(3, dtype=int), num_classes=1),
            LabelVector(np.zeros(4, dtype=int), num_classes=1),
        )


def test_metrics_json_shape(rng):
    y = LabelVector(rng.integers(0, 3, size=30), num_classes=3)
    report = evaluate(y, y)
    data = report.to_dict()
    assert set(data) == {"nmi", "acc", "ari", "matching"}
