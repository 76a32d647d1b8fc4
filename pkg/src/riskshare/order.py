"""Quantiles, stop-loss transforms and stochastic orders on finite laws.

Laws are given by atom values plus atom probabilities; a ``Belief``, a
``ScenarioSpace`` (meaning P) or a raw weight vector are all accepted.

Loss convention: ``icx_dominates(Y, X, w)`` asks whether X dominates Y in
second-order stochastic dominance, i.e. E[(Y - t)+] <= E[(X - t)+] for all t.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidLevel, SpaceMismatch
from .space import Belief, ScenarioSpace

DOMINANCE_TOL = 1e-9


def atom_weights(measure) -> np.ndarray:
    if isinstance(measure, Belief):
        return measure.weights
    if isinstance(measure, ScenarioSpace):
        return np.asarray(measure.p)
    return np.asarray(measure, dtype=float)


def _law(x, measure):
    x = np.asarray(x, dtype=float)
    w = atom_weights(measure)
    if x.shape != w.shape:
        raise SpaceMismatch("variable and weights differ in length")
    keep = w > 0
    return x[keep], w[keep]


def quantile(x, measure, u: float) -> float:
    """Left-continuous quantile inf{v : Q(X <= v) >= u}."""
    if not 0.0 < u <= 1.0:
        raise InvalidLevel(f"quantile level must lie in (0, 1], got {u}")
    vals, w = _law(x, measure)
    order = np.argsort(vals, kind="stable")
    cdf = np.cumsum(w[order])
    cdf /= cdf[-1]
    # guard against round-off just below u at exact breakpoints
    k = int(np.searchsorted(cdf, u - 1e-14, side="left"))
    return float(vals[order][min(k, len(vals) - 1)])


def stop_loss(x, measure, t: float) -> float:
    vals, w = _law(x, measure)
    return float(np.dot(w, np.maximum(vals - t, 0.0)))


def stop_loss_curve(x, measure, thresholds) -> np.ndarray:
    vals, w = _law(x, measure)
    t = np.asarray(thresholds, dtype=float)[:, None]
    return np.maximum(vals[None, :] - t, 0.0) @ w


@dataclass(frozen=True)
class OrderVerdict:
    dominates: bool
    max_violation: float
    witness_threshold: float | None


def _stop_loss_gap(y, x, measure, grid=None):
    vy, _ = _law(y, measure)
    vx, _ = _law(x, measure)
    if grid is None:
        grid = np.union1d(vy, vx)
    gaps = stop_loss_curve(y, measure, grid) - stop_loss_curve(x, measure, grid)
    k = int(np.argmax(gaps))
    return float(gaps[k]), float(grid[k])


def icx_dominates(y, x, measure, tol: float = DOMINANCE_TOL, grid=None) -> OrderVerdict:
    """Whether X second-order dominates Y (Y is less risky) under ``measure``.

    Stop-loss transforms are piecewise linear with kinks at support points,
    so comparing on the merged support is exact.
    """
    gap, t = _stop_loss_gap(y, x, measure, grid)
    gap = max(gap, 0.0)
    return OrderVerdict(gap <= tol, gap, t if gap > 0 else None)


def cx_dominates(y, x, measure, tol: float = DOMINANCE_TOL, grid=None) -> OrderVerdict:
    """Whether Y precedes X in the convex order under ``measure``."""
    w = atom_weights(measure)
    mean_gap = abs(float(np.dot(w, y) - np.dot(w, x)))
    icx = icx_dominates(y, x, measure, tol, grid)
    worst = max(icx.max_violation, mean_gap)
    witness = icx.witness_threshold
    if mean_gap > icx.max_violation:
        # a mean mismatch shows up at thresholds below both supports
        witness = float(min(np.min(y), np.min(x)))
    return OrderVerdict(icx.dominates and mean_gap <= tol, worst, witness if worst > 0 else None)


def law(x, measure, decimals: int = 12):
    """Distinct values with their probabilities, values sorted ascending."""
    vals, w = _law(x, measure)
    keys = np.round(vals, decimals)
    uniq, inv = np.unique(keys, return_inverse=True)
    probs = np.bincount(inv, weights=w, minlength=uniq.size)
    return uniq, probs


def same_law(x, y, measure, tol: float = 1e-12) -> bool:
    """Equality in distribution, compared through the two CDFs."""
    vx, wx = _law(x, measure)
    vy, wy = _law(y, measure)
    grid = np.union1d(vx, vy)
    cx = (vx[None, :] <= grid[:, None] + tol) @ wx
    cy = (vy[None, :] <= grid[:, None] + tol) @ wy
    return bool(np.max(np.abs(cx - cy)) <= max(tol, 1e-12))
