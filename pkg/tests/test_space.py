import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskshare.errors import (
    BlockTooSmall,
    EmptyBlock,
    InvalidDensity,
    NonPositiveWeight,
    NotBlockConstant,
    UnknownBlock,
    WeightsNotNormalized,
)
from riskshare.order import law
from riskshare.space import (
    Belief,
    belief_from_block_density,
    build_space,
    check_concordance,
    conditional_weights,
    reference_belief,
    uniform_space,
)


def test_uniform_four_atom_space_is_valid():
    sp = build_space(["a", "b", "c", "d"], [0.25] * 4, ["A", "A", "B", "B"])
    assert sp.size == 4
    assert sp.blocks == ("A", "B")
    assert sp.block_prob("A") == pytest.approx(0.5)


def test_weights_must_sum_to_one():
    with pytest.raises(WeightsNotNormalized):
        build_space(["a", "b", "c"], [0.5, 0.5, 0.5], ["A", "A", "A"])


def test_unused_declared_block_is_rejected():
    with pytest.raises(EmptyBlock):
        build_space(["a", "b", "c"], [0.2, 0.3, 0.5], ["A", "A", "A"], blocks=["A", "B"])


def test_nonpositive_weight_is_rejected():
    with pytest.raises(NonPositiveWeight):
        build_space(["a", "b", "c", "d"], [0.5, 0.5, -0.25, 0.25], ["A", "A", "B", "B"])


def test_blocks_need_two_atoms_by_default():
    with pytest.raises(BlockTooSmall):
        build_space(["a", "b", "c"], [0.1, 0.3, 0.6], ["A", "A", "B"])


def test_conditional_weights_uniform_block():
    sp = uniform_space(4, labels=["A", "A", "B", "B"])
    np.testing.assert_allclose(conditional_weights(sp, "A"), [0.5, 0.5, 0.0, 0.0])


def test_conditional_weights_divides_by_block_mass():
    sp = build_space(["a", "b", "c"], [0.1, 0.3, 0.6], ["A", "A", "B"], min_block_size=1)
    np.testing.assert_allclose(conditional_weights(sp, "A"), [0.25, 0.75, 0.0])


def test_conditional_weights_single_block_is_p():
    sp = build_space(["a", "b", "c"], [0.1, 0.3, 0.6], ["O"] * 3)
    np.testing.assert_allclose(conditional_weights(sp, "O"), [0.1, 0.3, 0.6])


def test_conditional_weights_unknown_block():
    sp = uniform_space(4, labels=["A", "A", "B", "B"])
    with pytest.raises(UnknownBlock):
        conditional_weights(sp, "C")


def test_concordant_halves_density(halves):
    sp, P, Q = halves
    verdict = check_concordance([P, Q], sp)
    assert verdict.partition == ("A", "A", "B", "B")


def test_density_varying_inside_block_is_not_concordant():
    sp = uniform_space(4, labels=["A", "A", "B", "B"])
    Q = Belief(sp, np.array([0.5, 1.5, 1.0, 1.0]))
    with pytest.raises(NotBlockConstant) as err:
        check_concordance([Q], sp)
    assert err.value.block == "A"
    assert err.value.belief_index == 0


def test_constant_density_is_concordant_with_trivial_partition():
    sp = uniform_space(4)
    verdict = check_concordance([reference_belief(sp)], sp)
    assert set(verdict.coarsest) == {"C0"}


def test_belief_mean_must_be_one():
    sp = uniform_space(4)
    with pytest.raises(InvalidDensity):
        Belief(sp, np.array([1.0, 1.0, 1.0, 2.0]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=6, max_size=6),
       st.lists(st.floats(-5, 5), min_size=6, max_size=6),
       st.floats(0.1, 3.0))
def test_conditional_laws_agree_across_concordant_beliefs(raw, values, ratio):
    w = np.array(raw) / np.sum(raw)
    sp = build_space(list("abcdef"), w, ["A", "A", "A", "B", "B", "B"])
    pa, pb = sp.block_prob("A"), sp.block_prob("B")
    # block densities with P-mean one
    da = ratio / (ratio * pa + pb)
    Q = belief_from_block_density(sp, {"A": da, "B": (1 - da * pa) / pb})
    x = np.array(values)
    for block in sp.blocks:
        cw_p = conditional_weights(sp, block)
        m = sp.mask(block)
        cw_q = np.where(m, Q.weights, 0.0) / Q.weights[m].sum()
        vp, prob_p = law(x, cw_p)
        vq, prob_q = law(x, cw_q)
        np.testing.assert_array_equal(vp, vq)
        np.testing.assert_allclose(prob_p, prob_q, atol=1e-12)
    for block in sp.blocks:
        assert conditional_weights(sp, block).sum() == pytest.approx(1.0, abs=1e-12)
