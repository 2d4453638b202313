import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_sbm.errors import EmptyCommunity, ZeroNorm
from robust_sbm.metrics import (
    confusion,
    correlation_expansion,
    majority_set,
    mutual_information,
    partition_advantage,
    weak_recovery_corr,
)
from robust_sbm.model import Assignment, analyze_transition, sample_sbm, symmetric_model

SPEC2 = analyze_transition(symmetric_model(2, 0.6, 4.0))
SPEC3 = analyze_transition(symmetric_model(3, 0.6, 4.0))


def truth(n, k, seed):
    return Assignment(np.random.default_rng(seed).integers(0, k, n), k)


def dense_rho(W, X, Psi):
    """Straight n x n computation of the normalized projected inner product."""
    a = W @ Psi
    b = X.one_hot() @ Psi
    G1, G2 = a @ a.T, b @ b.T
    return np.sum(G1 * G2) / (np.linalg.norm(G1) * np.linalg.norm(G2))


# ---------------------------------------------------------------- rho


def test_rho_perfect():
    X = truth(400, 3, 0)
    assert weak_recovery_corr(X, X, SPEC3).rho == pytest.approx(1.0)


def test_rho_constant_assignment_small():
    X = truth(10000, 2, 1)
    W = np.tile([0.5, 0.5], (10000, 1))
    with pytest.raises(ZeroNorm):
        weak_recovery_corr(W, X, SPEC2)
    const = Assignment(np.zeros(10000, dtype=int), 2)
    assert weak_recovery_corr(const, X, SPEC2).rho <= 0.05


def test_rho_label_permutation_invariant():
    X = truth(300, 3, 2)
    Xhat = truth(300, 3, 3)
    perm = np.array([2, 0, 1])
    a = weak_recovery_corr(Xhat, X, SPEC3).rho
    b = weak_recovery_corr(Assignment(perm[Xhat.labels], 3), X, SPEC3).rho
    # Psi Psi^T is invariant under relabelling for a symmetric model
    assert a == pytest.approx(b, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 80), st.integers(2, 4), st.integers(0, 10**6))
def test_rho_matches_dense(n, k, s):
    spec = analyze_transition(symmetric_model(k, 0.6, 4.0))
    X = truth(n, k, s)
    rng = np.random.default_rng(s + 1)
    W = rng.dirichlet(np.ones(k), n)
    try:
        r = weak_recovery_corr(W, X, spec)
    except ZeroNorm:
        return
    assert -1 - 1e-12 <= r.rho <= 1 + 1e-12
    assert r.rho == pytest.approx(dense_rho(W, X, spec.Psi), rel=1e-9, abs=1e-12)


def test_rho_confusion_rows():
    X = truth(200, 2, 4)
    r = weak_recovery_corr(X, X, SPEC2)
    np.testing.assert_allclose(r.confusion, np.eye(2))


# ---------------------------------------------------------------- expansion


def test_expansion_perfect():
    n, k = 3000, 3
    g, X = sample_sbm(symmetric_model(k, 0.6, 4.0), n, 0)
    e, d = correlation_expansion(X, X, SPEC3.pi)
    # for balanced communities the projected inner product is about n^2 (k-1)
    assert e == pytest.approx(n * n * (k - 1), rel=0.02)
    assert abs(e - d) <= 0.02 * n * n


def test_expansion_independent_small():
    n = 5000
    X, Xhat = truth(n, 2, 5), truth(n, 2, 6)
    e, d = correlation_expansion(Xhat, X, SPEC2.pi)
    assert abs(e) / n**2 <= 0.05
    assert abs(e - d) <= 0.02 * n**2


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(2, 4), st.integers(0, 10**6))
def test_direct_matches_dense(n, k, s):
    spec = analyze_transition(symmetric_model(k, 0.6, 4.0))
    X, Xhat = truth(n, k, s), truth(n, k, s + 7)
    _, d = correlation_expansion(Xhat, X, spec.pi)
    a = Xhat.one_hot() @ spec.Psi
    b = X.one_hot() @ spec.Psi
    assert d == pytest.approx(np.sum((a @ a.T) * (b @ b.T)), rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(2, 4), st.integers(0, 10**6))
def test_expansion_exact_on_balanced_truth(m, k, s):
    # the expansion replaces community sizes by n pi, so it is exact when they agree
    spec = analyze_transition(symmetric_model(k, 0.6, 4.0))
    rng = np.random.default_rng(s)
    X = Assignment(rng.permutation(np.repeat(np.arange(k), m)), k)
    Xhat = truth(k * m, k, s + 1)
    e, d = correlation_expansion(Xhat, X, spec.pi)
    assert e == pytest.approx(d, rel=1e-9, abs=1e-9)


def test_expansion_close_to_direct_sampled():
    n = 5000
    _, X = sample_sbm(symmetric_model(2, 0.6, 4.0), n, 3)
    for s in range(5):
        Xhat = truth(n, 2, s)
        e, d = correlation_expansion(Xhat, X, SPEC2.pi)
        assert abs(e - d) <= 0.02 * n * n


def test_confusion_columns_stochastic():
    X, Xhat = truth(100, 3, 1), truth(100, 3, 2)
    np.testing.assert_allclose(confusion(Xhat, X).sum(axis=0), 1)


# ---------------------------------------------------------------- advantage


def test_advantage_examples():
    X = truth(1000, 2, 8)
    assert partition_advantage(X.labels == 0, X) == pytest.approx(1.0)
    assert partition_advantage(np.zeros(1000, bool), X) == 0
    assert partition_advantage(np.arange(1000), X) == 0
    half = np.random.default_rng(9).permutation(1000)[:500]
    assert partition_advantage(half, X) <= 0.1


def test_advantage_random_half_large_n():
    X = truth(20000, 2, 10)
    half = np.random.default_rng(11).permutation(20000)[:10000]
    assert partition_advantage(half, X) <= 0.05


def test_advantage_empty_community():
    X = Assignment(np.zeros(10, dtype=int), 2)
    with pytest.raises(EmptyCommunity):
        partition_advantage([0, 1], X)


def test_majority_set():
    Xhat = Assignment(np.array([1, 1, 0, 1, 2]), 3)
    np.testing.assert_array_equal(majority_set(Xhat), [True, True, False, True, False])


# ---------------------------------------------------------------- mutual information


def plug_in_mi(a, b):
    n = len(a)
    total = 0.0
    for x in set(a):
        for y in set(b):
            nxy = sum(1 for i in range(n) if a[i] == x and b[i] == y)
            if nxy:
                nx_ = sum(1 for v in a if v == x)
                ny = sum(1 for v in b if v == y)
                total += nxy / n * math.log(nxy * n / (nx_ * ny))
    return n * total


def test_mi_perfect_is_n_entropy():
    X = truth(600, 3, 12)
    p = X.sizes() / 600
    assert mutual_information(X, X) == pytest.approx(600 * -np.sum(p * np.log(p)))


def test_mi_independent_small():
    n = 10000
    assert mutual_information(truth(n, 2, 13), truth(n, 2, 14)) <= 0.01 * n


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(2, 4), st.integers(0, 10**6))
def test_mi_matches_loop(n, k, s):
    X, Xhat = truth(n, k, s), truth(n, k, s + 3)
    mi = mutual_information(Xhat, X)
    assert mi == pytest.approx(plug_in_mi(Xhat.labels.tolist(), X.labels.tolist()), abs=1e-9)
    assert mi >= -1e-9
    perm = np.random.default_rng(s).permutation(k)
    assert mutual_information(Assignment(perm[Xhat.labels], k), X) == pytest.approx(mi, abs=1e-9)
