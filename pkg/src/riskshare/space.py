"""Finite scenario spaces, concordance partitions and block-constant beliefs.

Every vector in the package (random variables, densities, allocations) is
indexed by the atom order fixed when the space is built.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BlockTooSmall,
    EmptyBlock,
    InvalidDensity,
    NonPositiveWeight,
    NotBlockConstant,
    SpaceMismatch,
    UnknownBlock,
    WeightsNotNormalized,
)

NORMALIZATION_TOL = 1e-12


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScenarioSpace:
    atoms: tuple
    p: np.ndarray
    labels: tuple
    blocks: tuple

    @property
    def size(self) -> int:
        return len(self.atoms)

    def mask(self, block) -> np.ndarray:
        if block not in self.blocks:
            raise UnknownBlock(f"unknown block {block!r}", block=block)
        return np.array([lab == block for lab in self.labels])

    def block_index(self) -> np.ndarray:
        """Integer block id per atom, following ``blocks`` order."""
        lookup = {b: k for k, b in enumerate(self.blocks)}
        return np.array([lookup[lab] for lab in self.labels], dtype=int)

    def block_prob(self, block) -> float:
        return float(self.p[self.mask(block)].sum())

    def indicator(self, block) -> np.ndarray:
        return self.mask(block).astype(float)

    def expectation(self, values) -> float:
        return float(np.dot(self.p, values))

    def check(self, values, name="variable") -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if arr.shape[-1] != self.size:
            raise SpaceMismatch(
                f"{name} has {arr.shape[-1]} entries, space has {self.size} atoms"
            )
        return arr

    def conditional_expectation(self, values, weights=None) -> np.ndarray:
        """Block-wise average of ``values`` under ``weights`` (default P)."""
        w = self.p if weights is None else np.asarray(weights, dtype=float)
        x = self.check(values)
        out = np.empty_like(x)
        for block in self.blocks:
            m = self.mask(block)
            mass = w[m].sum()
            out[m] = np.dot(w[m], x[m]) / mass if mass > 0 else x[m].mean()
        return out

    def is_block_constant(self, values, tol=1e-12) -> bool:
        return self.first_varying_block(values, tol) is None

    def first_varying_block(self, values, tol=1e-12):
        x = self.check(values)
        for block in self.blocks:
            v = x[self.mask(block)]
            if v.max() - v.min() > tol:
                return block
        return None


def build_space(
    atoms: Sequence,
    p_weights: Sequence[float],
    partition_labels: Sequence,
    blocks: Sequence | None = None,
    min_block_size: int = 2,
) -> ScenarioSpace:
    """Validate and freeze a finite scenario space.

    ``blocks`` lists the declared partition labels (default: labels in order
    of first appearance); each declared block must own at least
    ``min_block_size`` atoms.
    """
    atoms = tuple(atoms)
    labels = tuple(partition_labels)
    p = np.asarray(p_weights, dtype=float)
    if not atoms or p.size == 0:
        raise ValueError("a scenario space needs at least one atom")
    if len(atoms) != p.size or len(labels) != p.size:
        raise SpaceMismatch("atoms, weights and labels must have equal length")
    if len(set(atoms)) != len(atoms):
        raise ValueError("atom identifiers must be unique")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise NonPositiveWeight("all atom weights must be strictly positive")
    if abs(p.sum() - 1.0) > NORMALIZATION_TOL:
        raise WeightsNotNormalized(f"weights sum to {p.sum():.15g}, not 1")
    if blocks is None:
        blocks = tuple(dict.fromkeys(labels))
    else:
        blocks = tuple(blocks)
        stray = set(labels) - set(blocks)
        if stray:
            raise UnknownBlock(f"labels {sorted(map(str, stray))} are not declared blocks")
    for block in blocks:
        count = labels.count(block)
        if count == 0:
            raise EmptyBlock(f"block {block!r} has no atoms", block=block)
        if count < min_block_size:
            raise BlockTooSmall(
                f"block {block!r} has {count} atom(s), need {min_block_size}", block=block
            )
    return ScenarioSpace(atoms=atoms, p=_frozen(p), labels=labels, blocks=blocks)


def uniform_space(n_atoms: int, labels: Sequence | None = None, **kwargs) -> ScenarioSpace:
    """Equal-weight space with atoms ``w0, w1, ...``."""
    labels = ["O"] * n_atoms if labels is None else list(labels)
    return build_space([f"w{k}" for k in range(n_atoms)], np.full(n_atoms, 1.0 / n_atoms), labels, **kwargs)


def conditional_weights(space: ScenarioSpace, block) -> np.ndarray:
    """P^B as a full-length vector: zero outside ``block``, summing to 1 on it."""
    m = space.mask(block)
    out = np.zeros(space.size)
    out[m] = space.p[m] / space.p[m].sum()
    return out


@dataclass(frozen=True, eq=False)
class Belief:
    """A probability measure given by its density with respect to P."""

    space: ScenarioSpace
    density: np.ndarray
    name: str = "Q"

    def __post_init__(self):
        d = np.asarray(self.density, dtype=float)
        if d.shape != (self.space.size,):
            raise SpaceMismatch(f"density for {self.name!r} has wrong length")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise InvalidDensity(f"density for {self.name!r} must be finite and nonnegative")
        mean = float(np.dot(self.space.p, d))
        if abs(mean - 1.0) > NORMALIZATION_TOL:
            raise InvalidDensity(f"density for {self.name!r} has P-mean {mean:.15g}, not 1")
        object.__setattr__(self, "density", _frozen(d))

    @property
    def weights(self) -> np.ndarray:
        """Atom probabilities under this belief."""
        return self.space.p * self.density

    @property
    def equivalent(self) -> bool:
        return bool(np.all(self.density > 0))

    def expectation(self, values) -> float:
        return float(np.dot(self.weights, values))

    def same_as(self, other: "Belief", tol=1e-12) -> bool:
        return self.space is other.space and np.allclose(self.density, other.density, rtol=0, atol=tol)


def reference_belief(space: ScenarioSpace) -> Belief:
    return Belief(space, np.ones(space.size), name="P")


def belief_from_blocks(space: ScenarioSpace, block_probs: dict, name="Q") -> Belief:
    """Belief assigning probability ``block_probs[B]`` to each block B,
    spread proportionally to P inside the block."""
    density = np.empty(space.size)
    for block in space.blocks:
        if block not in block_probs:
            raise UnknownBlock(f"no probability given for block {block!r}", block=block)
        density[space.mask(block)] = block_probs[block] / space.block_prob(block)
    return Belief(space, density, name=name)


def belief_from_block_density(space: ScenarioSpace, block_density: dict, name="Q") -> Belief:
    """Belief whose density equals ``block_density[B]`` on block B."""
    density = np.empty(space.size)
    for block in space.blocks:
        if block not in block_density:
            raise UnknownBlock(f"no density value for block {block!r}", block=block)
        density[space.mask(block)] = block_density[block]
    return Belief(space, density, name=name)


@dataclass(frozen=True)
class Concordance:
    """Result of a successful concordance check.

    ``partition`` is the space's own block labelling; ``coarsest`` groups
    atoms by the joint value of all densities, the coarsest partition on
    which every belief is constant.
    """

    partition: tuple
    coarsest: tuple


def check_concordance(beliefs: Sequence, space: ScenarioSpace, tol=1e-12) -> Concordance:
    rows = []
    for k, b in enumerate(beliefs):
        d = b.density if isinstance(b, Belief) else np.asarray(b, dtype=float)
        if isinstance(b, Belief) and b.space is not space:
            raise SpaceMismatch(f"belief {k} lives on a different space")
        block = space.first_varying_block(d, tol)
        if block is not None:
            raise NotBlockConstant(k, block)
        rows.append(np.round(d / tol) * tol if tol > 0 else d)
    keys = list(zip(*rows)) if rows else [()] * space.size
    names = {}
    coarse = tuple(names.setdefault(key, f"C{len(names)}") for key in keys)
    return Concordance(partition=space.labels, coarsest=coarse)
