from fractions import Fraction

import numpy as np
import pytest

from pairnilm.metrics import (
    ConfusionMatrix,
    accuracy,
    cohens_kappa,
    format_table,
    merge,
    per_class,
    summarize,
    to_json,
)

from oracles import kappa_po_pe


def test_hand_checked_two_by_two():
    cm = ConfusionMatrix(("A", "B"), [[3, 1], [2, 4]])
    m = per_class(cm, 0)
    assert (m.tp, m.fn, m.fp, m.tn) == (3, 1, 2, 4)
    assert Fraction(m.recall).limit_denominator(100) == Fraction(3, 4)
    assert Fraction(m.precision).limit_denominator(100) == Fraction(3, 5)
    assert Fraction(m.specificity).limit_denominator(100) == Fraction(2, 3)
    assert Fraction(m.f1).limit_denominator(100) == Fraction(2, 3)
    assert accuracy(cm) == 0.7


def test_accumulate():
    cm = ConfusionMatrix(("A", "B"))
    cm.accumulate("A", "A").accumulate("A", "B")
    assert cm.counts.tolist() == [[1, 1], [0, 0]]
    with pytest.raises(KeyError):
        cm.accumulate("A", "Q")


def test_random_accumulations_total(rng):
    labels = tuple("abcde")
    cm = ConfusionMatrix(labels)
    pairs = rng.integers(0, 5, size=(500, 2))
    for i, j in pairs:
        cm.accumulate(labels[i], labels[j])
    assert cm.total == 500
    other = ConfusionMatrix(labels).accumulate_indices(pairs[:, 0], pairs[:, 1])
    assert other == cm


def test_diagonal_and_uniform():
    diag = ConfusionMatrix("abc", np.diag([4, 5, 6]))
    assert accuracy(diag) == 1.0 and cohens_kappa(diag) == 1.0
    for m in range(3):
        r = per_class(diag, m)
        assert r.recall == r.precision == r.f1 == 1.0
    uni = ConfusionMatrix("abcd", np.full((4, 4), 7))
    assert accuracy(uni) == 0.25 and cohens_kappa(uni) == 0.0


def test_undefined_rates():
    cm = ConfusionMatrix("ab", [[5, 0], [0, 0]])
    r = per_class(cm, 1)
    assert r.recall is None and r.precision is None and r.f1 is None
    assert cohens_kappa(cm) is None
    with pytest.raises(ValueError):
        accuracy(ConfusionMatrix("ab"))


def test_kappa_matches_observed_expected_oracle(rng):
    for _ in range(1000):
        M = int(rng.integers(2, 12))
        counts = rng.integers(0, 51, size=(M, M))
        if counts.sum() == 0:
            continue
        cm = ConfusionMatrix(range(M), counts)
        k, ref = cohens_kappa(cm), kappa_po_pe(counts)
        if ref is None:
            assert k is None
        else:
            assert abs(k - ref) < 1e-12
            assert -1.0 <= k <= 1.0
            assert 0.0 <= accuracy(cm) <= 1.0


def test_identities(rng):
    counts = rng.integers(0, 20, size=(5, 5))
    cm = ConfusionMatrix("abcde", counts)
    rows = [per_class(cm, m) for m in range(5)]
    assert sum(r.tp for r in rows) == np.trace(counts)
    assert sum(r.tp + r.fn for r in rows) == counts.sum()


def test_permutation_equivariance(rng):
    counts = rng.integers(0, 30, size=(6, 6))
    labels = tuple("abcdef")
    perm = rng.permutation(6)
    a = ConfusionMatrix(labels, counts)
    b = ConfusionMatrix(tuple(labels[p] for p in perm), counts[np.ix_(perm, perm)])
    assert accuracy(a) == accuracy(b)
    assert abs(cohens_kappa(a) - cohens_kappa(b)) < 1e-15
    for k, p in enumerate(perm):
        assert per_class(b, k) == per_class(a, p)


def test_kappa_exact_on_large_counts():
    big = 10**12
    cm = ConfusionMatrix("ab", [[big, 1], [1, big]])
    assert abs(cohens_kappa(cm) - kappa_po_pe(cm.counts)) < 1e-12


def test_merge_and_reporting():
    a = ConfusionMatrix("ab", [[1, 0], [0, 1]])
    b = ConfusionMatrix("ab", [[0, 2], [1, 0]])
    assert merge([a, b]).counts.tolist() == [[1, 2], [1, 1]]
    with pytest.raises(ValueError):
        a + ConfusionMatrix("ac")
    s = summarize(a)
    assert s["alpha"] == 1.0 and s["macro"]["recall"] == 1.0
    assert "alpha = 1.000" in format_table(a)
    assert '"kappa": 1.0' in to_json(a)
