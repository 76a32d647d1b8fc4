"""Shared builders for the test-suite (catalog examples and random instances)."""
import numpy as np
from scipy.optimize import linprog

from riskshare.measures import (
    Entropic,
    EssentialSup,
    Expectation,
    ExpectedShortfall,
    MinOf,
    Mixture,
    Shifted,
    SpectralTail,
)
from riskshare.space import belief_from_block_density, reference_belief, uniform_space


def single_compatible(P):
    """min{E[X] + 1, esssup X}: admissible with the constant as only compatible density."""
    return MinOf((Shifted(Expectation(P), 1.0), EssentialSup(P)))


def half_sup_or_tail(P):
    """min{(esssup + E)/2, ES at level 1/2}: star shaped, dual domain 1/2 <= Z <= 2."""
    return MinOf((Mixture((0.5, 0.5), (EssentialSup(P), Expectation(P))), ExpectedShortfall(0.5, P)))


def random_block_belief(space, rng, name="Q"):
    raw = {b: rng.uniform(0.3, 2.0) for b in space.blocks}
    mean = sum(raw[b] * space.block_prob(b) for b in space.blocks)
    return belief_from_block_density(space, {b: v / mean for b, v in raw.items()}, name=name)


def random_convex_measure(belief, rng):
    kind = rng.integers(6)
    if kind == 0:
        return Expectation(belief)
    if kind == 1:
        return EssentialSup(belief)
    if kind == 2:
        return ExpectedShortfall(float(rng.uniform(0.05, 0.95)), belief)
    if kind == 3:
        return Entropic(float(rng.uniform(0.2, 3.0)), belief)
    if kind == 4:
        a, b = sorted(rng.uniform(0.05, 0.95, 2))
        return SpectralTail(((float(a), 0.4), (float(b), 0.6)), belief)
    w = float(rng.uniform(0.1, 0.9))
    return Mixture((w, 1 - w), (Entropic(float(rng.uniform(0.5, 2.0)), belief), ExpectedShortfall(0.5, belief)))


def random_measure(belief, rng):
    """Catalog member: convex kinds plus finite minima of them."""
    if rng.uniform() < 0.3:
        opts = (random_convex_measure(belief, rng), random_convex_measure(belief, rng))
        return MinOf(opts)
    return random_convex_measure(belief, rng)


def es_by_lp(x, weights, level):
    """sup E_w[W x] over densities 0 <= W <= 1/(1 - level), via scipy directly."""
    w = np.asarray(weights, dtype=float)
    res = linprog(-(w * x), A_eq=[w], b_eq=[1.0], bounds=[(0.0, 1.0 / (1.0 - level))] * len(x), method="highs")
    return -res.fun


def uniform_halves(m=4):
    sp = uniform_space(m, labels=["A"] * (m // 2) + ["B"] * (m - m // 2))
    return sp, reference_belief(sp), belief_from_block_density(sp, {"A": 0.5, "B": 1.5})
