import itertools

import numpy as np
import pytest

from helpers import random_block_belief, random_measure
from riskshare.comonotone import (
    BlockScheme,
    ComonotoneScheme,
    distinct_support,
    equal_split,
    improve_allocation,
    improve_block,
    is_locally_comonotone,
    realize,
)
from riskshare.errors import NotConcordant, SupportMismatch
from riskshare.measures import ExpectedShortfall
from riskshare.order import cx_dominates
from riskshare.space import Belief, reference_belief, uniform_space


def test_distinct_support_merges_ties():
    support, index = distinct_support([2.0, 1.0, 2.0 + 1e-14, 0.5])
    np.testing.assert_allclose(support, [0.5, 1.0, 2.0])
    assert index.tolist() == [2, 1, 2, 0]


def test_realize_trivial_schemes():
    sp = uniform_space(4, labels=["A", "A", "B", "B"])
    X = np.array([1.0, -2.0, 0.5, 3.0])
    np.testing.assert_array_equal(realize(equal_split(X, sp, 1), X, sp)[0], X)
    Y = realize(equal_split(X, sp, 2), X, sp)
    np.testing.assert_allclose(Y, [X / 2, X / 2], atol=1e-15)
    shifted = ComonotoneScheme({
        b: BlockScheme(s.support, s.intercepts + np.array([0.7, -0.7]), s.increments)
        for b, s in equal_split(X, sp, 2).blocks.items()
    })
    np.testing.assert_allclose(realize(shifted, X, sp), [X / 2 + 0.7, X / 2 - 0.7], atol=1e-15)


def test_realize_rejects_off_support_values():
    sp = uniform_space(4, labels=["A", "A", "B", "B"])
    X = np.array([1.0, 2.0, 3.0, 4.0])
    with pytest.raises(SupportMismatch):
        realize(equal_split(X, sp, 2), X + np.array([0, 0, 0, 0.5]), sp)


def test_constant_block_conditions_to_means():
    x = np.full(4, 2.0)
    X1 = np.array([1.0, 1.0, 0.0, 0.0])
    s = improve_block(x, [X1 + 1.0, 1.0 - X1], np.full(4, 0.25))
    np.testing.assert_allclose(s.table(), [[1.5], [0.5]])


def test_comonotone_input_is_a_fixed_point():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    alloc = np.array([[0.0, 0.2, 0.9, 1.0], [0.0, 0.8, 1.1, 2.0]])
    s = improve_block(x, alloc, np.full(4, 0.25))
    np.testing.assert_allclose(s.table(), alloc, atol=1e-12)


def test_anti_monotone_block_against_grid_oracle():
    x = np.arange(4.0)
    w = np.full(4, 0.25)
    X1 = np.array([1.5, 0.5, 1.0, 0.0])
    X2 = x - X1
    F = improve_block(x, [X1, X2], w).table()
    assert np.all(np.diff(F, axis=1) >= -1e-12)
    assert cx_dominates(F[0], X1, w).dominates and cx_dominates(F[1], X2, w).dominates
    # exhaustive increment grid: smallest second moment among dominated schemes
    best = np.inf
    for a in itertools.product(np.linspace(0, 1, 11), repeat=3):
        f1 = np.concatenate([[0.0], np.cumsum(a)])
        f1 += X1.mean() - f1.mean()
        f2 = x - f1
        if cx_dominates(f1, X1, w).dominates and cx_dominates(f2, X2, w).dominates:
            best = min(best, float(np.dot(w, f1**2 + f2**2)))
    assert float(np.dot(w, (F**2).sum(axis=0))) == pytest.approx(best, abs=1e-9)


def test_improve_allocation_single_block():
    sp = uniform_space(5)
    P = reference_belief(sp)
    X = np.array([0.0, 3.0, 1.0, 4.0, 2.0])
    alloc = np.array([[2.0, -1.0, 0.5, 0.0, 3.0], X - [2.0, -1.0, 0.5, 0.0, 3.0]])
    res = improve_allocation(X, alloc, sp, (P, P))
    assert is_locally_comonotone(res.realized, X, sp)
    np.testing.assert_array_equal(res.realized[1], X - res.realized[0])


def test_two_blocks_anti_comonotone_input_lowers_es_risk():
    sp = uniform_space(6, labels=["A", "A", "A", "B", "B", "B"])
    P = reference_belief(sp)
    Q = Belief(sp, np.array([0.5, 0.5, 0.5, 1.5, 1.5, 1.5]), name="Q")
    X = np.array([0.0, 1.0, 2.0, 0.0, 2.0, 4.0])
    X1 = np.array([2.0, 1.0, 0.0, 4.0, 2.0, 0.0])
    alloc = np.array([X1, X - X1])
    agents = (ExpectedShortfall(0.3, P), ExpectedShortfall(0.6, Q))
    res = improve_allocation(X, alloc, sp, (P, Q))
    assert is_locally_comonotone(res.realized, X, sp)
    before = sum(r.value(y) for r, y in zip(agents, alloc))
    after = sum(r.value(y) for r, y in zip(agents, res.realized))
    assert after <= before + 1e-12
    again = improve_allocation(X, res.realized, sp, (P, Q))
    for r, y0, y1 in zip(agents, res.realized, again.realized):
        assert abs(r.value(y1) - r.value(y0)) <= 1e-12


def test_non_concordant_beliefs_are_rejected():
    sp = uniform_space(4, labels=["A", "A", "B", "B"])
    P = reference_belief(sp)
    R = Belief(sp, np.array([0.5, 1.5, 1.0, 1.0]))
    X = np.arange(4.0)
    with pytest.raises(NotConcordant):
        improve_allocation(X, [X / 2, X / 2], sp, (P, R))


def test_random_instances_preserve_sum_order_and_risk():
    rng = np.random.default_rng(21)
    for _ in range(200):
        m = int(rng.integers(2, 13))
        k = int(rng.integers(1, min(3, m // 2) + 1))
        labels = sorted([f"B{j % k}" for j in range(m)])
        sp = uniform_space(m, labels=labels, min_block_size=1)
        n = int(rng.integers(1, 4))
        X = np.round(rng.normal(size=m) * 2, 1)
        alloc = rng.normal(size=(n, m))
        alloc[-1] = X - alloc[:-1].sum(axis=0)
        beliefs = tuple(random_block_belief(sp, rng) for _ in range(n))
        res = improve_allocation(X, alloc, sp, beliefs)
        Y = res.realized
        # last share is defined by subtraction, so the sum is exact up to one rounding
        np.testing.assert_array_equal(Y[-1], X - Y[:-1].sum(axis=0))
        assert np.max(np.abs(Y.sum(axis=0) - X)) <= 1e-12
        assert is_locally_comonotone(Y, X, sp)
        for b in res.scheme.blocks.values():
            assert b.lipschitz_ok()
        for i in range(n):
            assert cx_dominates(Y[i], alloc[i], beliefs[i]).dominates
            rho = random_measure(beliefs[i], rng)
            assert rho.value(Y[i]) <= rho.value(alloc[i]) + 1e-9
