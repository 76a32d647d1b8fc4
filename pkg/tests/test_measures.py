import math

import numpy as np
import pytest
from scipy.optimize import minimize

from helpers import (
    es_by_lp,
    half_sup_or_tail,
    random_block_belief,
    random_measure,
    single_compatible,
    uniform_halves,
)
from riskshare.errors import NonConsistentAgent, SpaceMismatch
from riskshare.measures import (
    Entropic,
    EssentialSup,
    Expectation,
    ExpectedShortfall,
    MinOf,
    SpectralTail,
    StarHull,
    ValueAtRisk,
    acceptance,
    asymptotic_cone_contains,
    cone_membership,
    conjugate,
    evaluate,
    ray_test,
    star_hull_evaluate,
)
from riskshare.order import icx_dominates
from riskshare.sharing import SharingProblem
from riskshare.space import reference_belief, uniform_space


def test_entropic_is_normalized(halves):
    _, P, Q = halves
    assert evaluate(Entropic(1.7, Q), np.zeros(4)) == 0.0


@pytest.mark.parametrize("k", [1, 2, 3])
def test_single_compatible_measure_on_indicators(k):
    sp = uniform_space(4)
    rho = single_compatible(reference_belief(sp))
    ind = np.zeros(4)
    ind[:k] = 1.0
    assert evaluate(rho, ind) == 1.0


def test_es_half_of_two_point_law():
    sp = uniform_space(2)
    assert evaluate(ExpectedShortfall(0.5, reference_belief(sp)), [0.0, 10.0]) == pytest.approx(10.0)


def test_es_matches_dual_lp(rng, halves):
    sp, P, Q = halves
    for _ in range(50):
        x = rng.normal(size=4)
        level = float(rng.uniform(0.0, 0.95))
        for b in (P, Q):
            assert evaluate(ExpectedShortfall(level, b), x) == pytest.approx(es_by_lp(x, b.weights, level), abs=1e-10)


def test_spectral_is_weighted_es(rng, halves):
    _, P, Q = halves
    rho = SpectralTail(((0.2, 0.25), (0.7, 0.75)), Q)
    for _ in range(20):
        x = rng.normal(size=4)
        expected = 0.25 * es_by_lp(x, Q.weights, 0.2) + 0.75 * es_by_lp(x, Q.weights, 0.7)
        assert evaluate(rho, x) == pytest.approx(expected, abs=1e-10)


def test_entropic_matches_direct_formula(rng, halves):
    _, _, Q = halves
    for _ in range(20):
        x = rng.normal(size=4)
        beta = float(rng.uniform(0.1, 4))
        direct = math.log(sum(w * math.exp(beta * v) for w, v in zip(Q.weights, x))) / beta
        assert evaluate(Entropic(beta, Q), x) == pytest.approx(direct, abs=1e-12)


def test_evaluate_rejects_wrong_length(halves):
    _, P, _ = halves
    with pytest.raises(SpaceMismatch):
        evaluate(Expectation(P), np.zeros(3))


def test_acceptance_examples(halves):
    sp = uniform_space(4)
    P = reference_belief(sp)
    es = ExpectedShortfall(0.5, P)
    assert acceptance(es, np.zeros(4))
    U = -np.array([0.0, 0.0, 1.0, 1.0])  # -1_{A^c} with P(A) = 1 - p
    assert all(acceptance(es, t * U) for t in (0.0, 0.5, 1.0, 10.0, 1e3, 1e6))
    assert not acceptance(es, np.full(4, 1e-6))


def test_conjugate_examples():
    sp = uniform_space(5)
    P = reference_belief(sp)
    Z = np.array([1.25, 1.25, 1.25, 1.25, 0.0])
    assert conjugate(ExpectedShortfall(0.2, P), Z).conjugate_value == 0.0
    sp4, P4, Q4 = uniform_halves()
    assert conjugate(ExpectedShortfall(4 / 9, Q4), np.ones(4)).conjugate_value == math.inf
    rho = half_sup_or_tail(P4)
    assert conjugate(rho, np.array([0.5, 0.5, 1.5, 1.5])).finite
    assert conjugate(rho, np.array([2.0, 2.0, 0.0, 0.0])).conjugate_value == math.inf


def test_star_hull_of_convex_measure_is_itself(rng, halves):
    _, P, Q = halves
    rho = ExpectedShortfall(0.3, Q)
    for _ in range(10):
        x = rng.normal(size=4)
        assert star_hull_evaluate(rho, x) == pytest.approx(evaluate(rho, x), abs=1e-8)
    assert star_hull_evaluate(rho, np.zeros(4)) == 0.0


def test_star_hull_of_star_shaped_min(rng):
    sp = uniform_space(6)
    rho = half_sup_or_tail(reference_belief(sp))
    for _ in range(10):
        x = rng.normal(size=6)
        assert star_hull_evaluate(rho, x) == pytest.approx(evaluate(rho, x), abs=1e-8)


def test_star_hull_relaxes_non_star_shaped_min():
    sp = uniform_space(4)
    rho = single_compatible(reference_belief(sp))
    x = np.array([1.0, 0.0, 0.0, 0.0])
    # scaled-down acceptance sets admit x - m for m just above E[x]
    assert star_hull_evaluate(rho, x) == pytest.approx(0.25, abs=1e-3)
    assert StarHull(rho).value(x) == pytest.approx(0.25, abs=1e-3)


def test_cone_examples(halves):
    sp, P, Q = halves
    ent = Entropic(1.0, Q)
    assert asymptotic_cone_contains(ent, -np.array([1.0, 1.0, 0.0, 0.0]))
    assert not asymptotic_cone_contains(ent, np.array([-1.0, -1.0, -1.0, 1e-3]))
    es = ExpectedShortfall(0.5, P)
    assert asymptotic_cone_contains(es, -np.array([0.0, 0.0, 1.0, 1.0]))
    for rho in (ent, es, Expectation(Q), EssentialSup(P), single_compatible(P), half_sup_or_tail(P)):
        assert asymptotic_cone_contains(rho, np.zeros(4))


def test_cone_membership_is_analytic_for_catalog(halves):
    _, P, _ = halves
    assert cone_membership(ExpectedShortfall(0.5, P), -np.ones(4)).method == "analytic"


def test_var_is_rejected_by_the_solver(halves):
    sp, P, _ = halves
    var = ValueAtRisk(0.1, P)
    assert not var.consistent
    with pytest.raises(NonConsistentAgent):
        SharingProblem(sp, (var, ExpectedShortfall(0.5, P)), np.zeros(4))


# -- properties over seeded random instances ----------------------------------


def _instances(seed, count=120):
    rng = np.random.default_rng(seed)
    sp = uniform_space(6, labels=["A", "A", "B", "B", "C", "C"])
    for _ in range(count):
        Q = random_block_belief(sp, rng)
        yield sp, Q, random_measure(Q, rng), rng


def test_cash_additivity():
    for sp, Q, rho, rng in _instances(1):
        x, m = rng.normal(size=6) * 3, float(rng.normal() * 5)
        assert abs(evaluate(rho, x + m) - evaluate(rho, x) - m) <= 1e-9


def test_ssd_monotonicity_on_conditional_expectations():
    groupings = [np.array([0, 0, 1, 1, 2, 2]), np.array([0, 1, 0, 1, 2, 2]), np.zeros(6, int)]
    for sp, Q, rho, rng in _instances(2):
        x = rng.normal(size=6) * 2
        g = groupings[rng.integers(3)]
        w = Q.weights
        y = np.array([np.dot(w[g == g[j]], x[g == g[j]]) / w[g == g[j]].sum() for j in range(6)])
        assert icx_dominates(y, x, Q).dominates
        assert evaluate(rho, y) <= evaluate(rho, x) + 1e-9


def test_fenchel_inequality_and_belief_density_in_domain():
    for sp, Q, rho, rng in _instances(3):
        x = rng.normal(size=6) * 2
        assert conjugate(rho, Q.density).finite
        for Z in (Q.density, sp.conditional_expectation(rng.dirichlet(np.ones(6)) * 6)):
            c = conjugate(rho, Z).conjugate_value
            if math.isfinite(c):
                assert evaluate(rho, x) >= float(np.dot(sp.p * Z, x)) - c - 1e-9


def _numeric_conjugate(rho, Z, sp):
    """sup_Y E[Z Y] - rho(Y) by direct maximization (independent route)."""
    f = lambda y: -(float(np.dot(sp.p * Z, y)) - float(rho.value(y)))
    best = min(minimize(f, x0, method="BFGS", options={"gtol": 1e-10}).fun
               for x0 in (np.zeros(sp.size), np.log(np.maximum(Z, 1e-9))))
    return -best


def test_conjugate_identity_for_entropic():
    rng = np.random.default_rng(4)
    sp = uniform_space(4, labels=["A", "A", "B", "B"])
    for _ in range(100):
        Q = random_block_belief(sp, rng)
        beta = float(rng.uniform(0.3, 3.0))
        Z = rng.uniform(0.2, 2.0, 4)
        Z /= float(np.dot(sp.p, Z))
        W = Z / Q.density
        closed = float(np.dot(Q.weights, W * np.log(W))) / beta
        assert conjugate(Entropic(beta, Q), Z).conjugate_value == pytest.approx(closed, abs=1e-9)
        if _ % 10 == 0:
            assert _numeric_conjugate(Entropic(beta, Q), Z, sp) == pytest.approx(closed, abs=1e-6)


def test_conjugate_identity_for_es():
    rng = np.random.default_rng(5)
    sp = uniform_space(4, labels=["A", "A", "B", "B"])
    for _ in range(100):
        Q = random_block_belief(sp, rng)
        level = float(rng.uniform(0.05, 0.9))
        Z = rng.uniform(0.0, 2.5, 4)
        Z /= float(np.dot(sp.p, Z))
        W = Z / Q.density
        inside = np.all(W <= 1.0 / (1.0 - level) + 1e-12)
        c = conjugate(ExpectedShortfall(level, Q), Z).conjugate_value
        assert c == (0.0 if inside else math.inf)


def test_cone_directions_have_nonpositive_pairing():
    for sp, Q, rho, rng in _instances(6):
        U = -np.abs(rng.normal(size=6)) * (rng.uniform(size=6) < 0.7)
        U += rng.normal(size=6) * (rng.uniform() < 0.5)
        if not asymptotic_cone_contains(rho, U):
            continue
        for Z in (Q.density, np.ones(6)):
            if conjugate(rho, Z).finite:
                assert float(np.dot(sp.p * Z, U)) <= 1e-9


def test_conditional_expectation_lowers_conjugate():
    rng = np.random.default_rng(7)
    sp = uniform_space(6, labels=["A", "A", "B", "B", "C", "C"])
    for _ in range(100):
        Q = random_block_belief(sp, rng)
        rho = Entropic(float(rng.uniform(0.3, 3)), Q) if rng.uniform() < 0.5 else ExpectedShortfall(0.6, Q)
        Z = rng.uniform(0.2, 2.0, 6)
        Z /= float(np.dot(sp.p, Z))
        assert conjugate(rho, sp.conditional_expectation(Z)).conjugate_value <= conjugate(rho, Z).conjugate_value + 1e-12


def test_star_hull_keeps_cone_and_conjugate_of_star_shaped_min():
    rng = np.random.default_rng(8)
    sp = uniform_space(4)
    P = reference_belief(sp)
    rho = half_sup_or_tail(P)
    hull = StarHull(rho)
    for _ in range(100):
        U = rng.normal(size=4)
        assert asymptotic_cone_contains(hull, U) == asymptotic_cone_contains(rho, U)
        Z = rng.uniform(0.0, 2.5, 4)
        Z /= float(np.dot(sp.p, Z))
        assert conjugate(hull, Z).conjugate_value == conjugate(rho, Z).conjugate_value


def test_ray_test_matches_cone_for_homogeneous_members(rng, halves):
    _, P, Q = halves
    for rho in (ExpectedShortfall(0.4, Q), EssentialSup(P), MinOf((ExpectedShortfall(0.3, P), EssentialSup(P)))):
        for _ in range(20):
            U = rng.normal(size=4)
            assert ray_test(rho, U, [1.0, 10.0, 100.0]) == asymptotic_cone_contains(rho, U)
