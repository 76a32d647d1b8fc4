"""Comonotone partitions of the identity and local comonotone improvement.

On each block B the target X takes finitely many distinct values
v_0 < ... < v_K.  Agent i's share is f_i(v_k) = c_i + a_{i,1} + ... + a_{i,k}
with increments a_{i,k} >= 0 summing (over i) to the gap v_k - v_{k-1} and
intercepts summing to v_0.  Every f_i is then nondecreasing and 1-Lipschitz.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import (
    ImprovementVerificationFailed,
    NotBlockConstant,
    NotConcordant,
    SpaceMismatch,
    SupportMismatch,
    ValidationError,
)
from .lp import LinearProgram
from .order import DOMINANCE_TOL, cx_dominates
from .space import ScenarioSpace, check_concordance

TIE_TOL = 1e-12


def distinct_support(values, tol: float = TIE_TOL):
    """Sorted distinct values (ties within ``tol`` merged) and each entry's index."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    sv = values[order]
    new = np.concatenate([[True], np.diff(sv) > tol])
    group = np.cumsum(new) - 1
    support = sv[new]
    index = np.empty(values.size, dtype=int)
    index[order] = group
    return support, index


@dataclass(frozen=True)
class BlockScheme:
    support: np.ndarray  # (K,)
    intercepts: np.ndarray  # (n,)
    increments: np.ndarray  # (n, K-1)

    @property
    def n(self) -> int:
        return self.intercepts.size

    def table(self) -> np.ndarray:
        """f_i(v_k) as an (n, K) array."""
        steps = np.concatenate([self.intercepts[:, None], self.increments], axis=1)
        return np.cumsum(steps, axis=1)

    def lipschitz_ok(self, tol=1e-9) -> bool:
        gaps = np.diff(self.support)
        return bool(np.all(self.increments >= -tol) and np.all(self.increments <= gaps[None, :] + tol))


@dataclass(frozen=True)
class ComonotoneScheme:
    blocks: dict  # block label -> BlockScheme

    @property
    def n(self) -> int:
        return next(iter(self.blocks.values())).n

    def max_abs_intercept(self) -> float:
        return max(float(np.max(np.abs(b.intercepts))) for b in self.blocks.values())


def realize(scheme: ComonotoneScheme, X, space: ScenarioSpace, tol: float = 1e-9) -> np.ndarray:
    """Allocation (n x m) with Y_i = f_i^B(X) on B; the last row closes the sum exactly."""
    X = space.check(X, "target")
    n = scheme.n
    Y = np.empty((n, space.size))
    for block in space.blocks:
        mask = space.mask(block)
        bs = scheme.blocks[block]
        x = X[mask]
        idx = np.clip(np.searchsorted(bs.support, x - tol), 0, bs.support.size - 1)
        if np.any(np.abs(bs.support[idx] - x) > tol):
            raise SupportMismatch(f"X takes values off the scheme support on block {block!r}", block=block)
        Y[:, mask] = bs.table()[:, idx]
    if n > 1:
        Y[-1] = X - Y[:-1].sum(axis=0)
    else:
        Y[0] = X
    return Y


def equal_split(X, space: ScenarioSpace, n: int) -> ComonotoneScheme:
    blocks = {}
    for block in space.blocks:
        support, _ = distinct_support(np.asarray(X)[space.mask(block)])
        gaps = np.diff(support)
        blocks[block] = BlockScheme(support, np.full(n, support[0] / n), np.tile(gaps / n, (n, 1)))
    return ComonotoneScheme(blocks)


# --------------------------------------------------------------------------
# parameter layout shared with the sharing solver


class SchemeLayout:
    """Flat parameter vector for locally comonotone allocations of X.

    Per block the parameters form an (n, K) array whose first column holds
    intercepts and the remaining columns the increments.
    """

    def __init__(self, space: ScenarioSpace, X, n: int):
        self.space = space
        self.X = space.check(X, "target").astype(float)
        self.n = n
        self.blocks = []
        offset = 0
        maps = np.zeros((n, space.size, 0))
        cols = []
        for block in space.blocks:
            atoms = np.flatnonzero(space.mask(block))
            support, index = distinct_support(self.X[atoms])
            K = support.size
            tri = np.triu(np.ones((K, K)))  # tri[l, k] = 1 when l <= k
            self.blocks.append((block, atoms, support, index, offset))
            cols.append((atoms, index, tri, K, offset))
            offset += n * K
        self.dim = offset
        self.maps = np.zeros((n, space.size, self.dim))
        for atoms, index, tri, K, off in cols:
            for i in range(n):
                start = off + i * K
                self.maps[i][np.ix_(atoms, np.arange(start, start + K))] = tri[:, index].T

    def block_params(self, theta, b):
        _, _, support, _, off = self.blocks[b]
        K = support.size
        return theta[off: off + self.n * K].reshape(self.n, K)

    def targets(self, b):
        support = self.blocks[b][2]
        return np.concatenate([[support[0]], np.diff(support)])

    def allocation(self, theta) -> np.ndarray:
        Y = np.einsum("imd,d->im", self.maps, theta)
        if self.n > 1:
            Y[-1] = self.X - Y[:-1].sum(axis=0)
        else:
            Y[0] = self.X
        return Y

    def scheme(self, theta) -> ComonotoneScheme:
        out = {}
        for b, (block, _, support, _, _) in enumerate(self.blocks):
            P = self.block_params(theta, b).copy()
            # close the sums exactly on the last agent
            P[-1] = self.targets(b) - P[:-1].sum(axis=0)
            out[block] = BlockScheme(support.copy(), P[:, 0].copy(), P[:, 1:].copy())
        return ComonotoneScheme(out)

    def from_scheme(self, scheme: ComonotoneScheme) -> np.ndarray:
        theta = np.zeros(self.dim)
        for b, (block, _, support, _, off) in enumerate(self.blocks):
            bs = scheme.blocks[block]
            K = support.size
            P = np.concatenate([bs.intercepts[:, None], bs.increments], axis=1)
            theta[off: off + self.n * K] = P.ravel()
        return theta

    def equal_split(self) -> np.ndarray:
        theta = np.zeros(self.dim)
        for b in range(len(self.blocks)):
            self.block_params(theta, b)[:] = self.targets(b)[None, :] / self.n
        return theta

    def intercept_indices(self):
        idx = []
        for _, _, support, _, off in self.blocks:
            K = support.size
            idx.extend(off + i * K for i in range(self.n))
        return np.array(idx, dtype=int)

    def bounds(self, box: float):
        lo = np.zeros(self.dim)
        hi = np.full(self.dim, np.inf)
        ii = self.intercept_indices()
        lo[ii] = -box
        hi[ii] = box
        return lo, hi

    def equality_rows(self):
        """(A, b) with A theta = b encoding the sum constraints."""
        rows, rhs = [], []
        for b, (_, _, support, _, off) in enumerate(self.blocks):
            K = support.size
            t = self.targets(b)
            for k in range(K):
                row = np.zeros(self.dim)
                row[off + k: off + self.n * K: K] = 1.0
                rows.append(row)
                rhs.append(t[k])
        return np.array(rows), np.array(rhs)


# --------------------------------------------------------------------------
# local comonotone improvement


def _tail_sums(values, w, masses):
    """Integral of the quantile function over (1 - s, 1] for each s in ``masses``."""
    order = np.argsort(-values, kind="stable")
    v, ws = values[order], w[order]
    before = np.cumsum(ws) - ws
    take = np.clip(np.asarray(masses)[:, None] - before[None, :], 0.0, ws[None, :])
    return take @ v, take, order


def _conditioned(x_support_index, K, alloc, w):
    """E_w[X_i | X] as an (n, K) table over the support of X."""
    mass = np.bincount(x_support_index, weights=w, minlength=K)
    out = np.empty((alloc.shape[0], K))
    for i, row in enumerate(alloc):
        out[i] = np.bincount(x_support_index, weights=w * row, minlength=K) / mass
    return out, mass


def improve_block(x, allocation, weights, tol: float = DOMINANCE_TOL) -> BlockScheme:
    """Comonotone f with f_i(x) convex-order dominated by allocation row i.

    ``weights`` are the conditional atom probabilities on the block.
    """
    x = np.asarray(x, dtype=float)
    alloc = np.atleast_2d(np.asarray(allocation, dtype=float))
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    if alloc.shape[1] != x.size or w.size != x.size:
        raise SpaceMismatch("block inputs differ in length")
    if np.max(np.abs(alloc.sum(axis=0) - x)) > 1e-9 * max(1.0, np.max(np.abs(x))):
        raise ValidationError("allocation does not sum to X on the block")
    n = alloc.shape[0]
    support, index = distinct_support(x)
    K = support.size
    gaps = np.diff(support)

    # step 1: condition on X (Jensen)
    g, mass = _conditioned(index, K, alloc, w)
    g[-1] = support - g[:-1].sum(axis=0)
    steps = np.diff(g, axis=1)
    if np.all(steps >= -TIE_TOL):
        inc = np.clip(steps, 0.0, None)
        if n > 1:
            inc[-1] = gaps - inc[:-1].sum(axis=0)
        scheme = BlockScheme(support, g[:, 0].copy(), inc)
    else:
        scheme = _comonotone_rearrangement(support, mass, g)
    _verify_block(scheme, support, index, alloc, w, tol)
    return scheme


def _comonotone_rearrangement(support, mass, g):
    """Comonotone shares whose laws are convex-order below those of g_i(X).

    A linear program finds a feasible scheme (tail-sum constraints at every
    breakpoint are exact for piecewise linear quantile integrals); a
    quadratic polish then minimizes sum_i E[f_i(X)^2].
    """
    n, K = g.shape
    gaps = np.diff(support)
    survival = 1.0 - np.cumsum(mass)[:-1]  # P(X > v_k), k = 0..K-2
    means = g @ mass
    cum = np.cumsum(mass[::-1])
    masses_x = cum[cum < 1.0 - 1e-15]

    lp = LinearProgram()
    inc = [lp.var(K - 1, lb=0.0) for _ in range(n)]
    if n > 1:
        lp.eq(sum(inc[1:], inc[0]), gaps)
    # f_i(v_k) = c_i + sum_{l<=k} a_{i,l}; c_i fixed by the mean
    tri = np.tril(np.ones((K, K - 1)), -1)  # tri[k, l] = 1 when l < k
    constraints = []
    for i in range(n):
        cmass = set(masses_x.tolist())
        own = g[i]
        srt = np.argsort(-own, kind="stable")
        cmass.update(np.cumsum(mass[srt])[:-1].tolist())
        grid = np.array(sorted(m for m in cmass if 0.0 < m < 1.0))
        if grid.size == 0:
            continue
        target, _, _ = _tail_sums(own, mass, grid)
        # f_i is nondecreasing, so its top-s tail is the top of X
        _, take, order = _tail_sums(support, mass, grid)
        coef = np.zeros((grid.size, K))
        coef[:, order] = take
        f_lin = inc[i].left(tri)  # increments part of f_i on the support
        intercept = inc[i].dot(-survival) + means[i]
        f_expr = f_lin + intercept.repeat(K)
        tail = f_expr.left(coef)
        constraints.append((i, tail, target))
        lp.le(tail, target)
    res = lp.solve()
    if not res.ok:
        raise ImprovementVerificationFailed(coordinate=-1, gap=float("nan"))
    a0 = np.concatenate([res.x[i * (K - 1):(i + 1) * (K - 1)] for i in range(n)])
    a = _quadratic_polish(a0, n, K, gaps, survival, means, mass, tri, constraints, lp.nvar)

    inc_arr = a.reshape(n, K - 1)
    inc_arr = np.clip(inc_arr, 0.0, None)
    if n > 1:
        inc_arr[-1] = gaps - inc_arr[:-1].sum(axis=0)
    intercepts = means - inc_arr @ survival
    intercepts[-1] = support[0] - intercepts[:-1].sum() if n > 1 else support[0]
    return BlockScheme(support, intercepts, inc_arr)


def _quadratic_polish(a0, n, K, gaps, survival, means, mass, tri, constraints, nvar):
    d = n * (K - 1)

    def table(a):
        A = a.reshape(n, K - 1)
        c = means - A @ survival
        return c[:, None] + A @ tri.T

    def objective(a):
        return float(np.sum(table(a) ** 2 @ mass))

    def objective_grad(a):
        F = table(a)
        dF = 2.0 * F * mass[None, :]
        # d f(v_k)/d a_l = tri[k, l] - survival[l]
        return (dF @ tri - dF.sum(axis=1, keepdims=True) * survival[None, :]).ravel()

    cons = []
    if n > 1:
        S = np.zeros((K - 1, d))
        for i in range(n):
            S[:, i * (K - 1):(i + 1) * (K - 1)] = np.eye(K - 1)
        cons.append({"type": "eq", "fun": lambda a: S @ a - gaps, "jac": lambda a: S})
    for _, expr, target in constraints:
        A = expr.padded(nvar)[:, :d]
        b = expr.const
        cons.append({"type": "ineq", "fun": lambda a, A=A, b=b, t=target: t - (A @ a + b), "jac": lambda a, A=A: -A})
    res = minimize(objective, a0, jac=objective_grad, method="SLSQP", bounds=[(0.0, None)] * d,
                   constraints=cons, options={"ftol": 1e-14, "maxiter": 300})
    if not res.success:
        return a0
    ok = all(np.all(c["fun"](res.x) >= -1e-11) for c in cons if c["type"] == "ineq")
    ok = ok and all(np.all(np.abs(c["fun"](res.x)) <= 1e-11) for c in cons if c["type"] == "eq")
    return res.x if ok and objective(res.x) <= objective(a0) else a0


def _verify_block(scheme, support, index, alloc, w, tol, block=None):
    F = scheme.table()
    for i in range(scheme.n):
        verdict = cx_dominates(F[i][index], alloc[i], w, tol)
        if not verdict.dominates:
            raise ImprovementVerificationFailed(i, verdict.max_violation, block)


@dataclass(frozen=True)
class LocallyComonotoneAllocation:
    scheme: ComonotoneScheme
    realized: np.ndarray  # (n, m)


def improve_allocation(X, allocation, space: ScenarioSpace, beliefs, tol: float = DOMINANCE_TOL):
    """Block-wise comonotone improvement; every agent's share gets less risky.

    Beliefs must be constant on blocks so the P-conditional laws are the
    beliefs' conditional laws as well.
    """
    X = space.check(X, "target")
    alloc = np.atleast_2d(space.check(allocation, "allocation"))
    n = alloc.shape[0]
    if len(beliefs) != n:
        raise SpaceMismatch("need one belief per agent")
    try:
        check_concordance(beliefs, space)
    except NotBlockConstant as err:
        raise NotConcordant(str(err), belief_index=err.belief_index, block=err.block) from err
    if np.max(np.abs(alloc.sum(axis=0) - X)) > 1e-9 * max(1.0, np.max(np.abs(X))):
        raise ValidationError("allocation does not sum to X")
    blocks = {}
    for block in space.blocks:
        m = space.mask(block)
        try:
            blocks[block] = improve_block(X[m], alloc[:, m], space.p[m], tol)
        except ImprovementVerificationFailed as err:
            raise ImprovementVerificationFailed(err.coordinate, err.gap, block) from err
    scheme = ComonotoneScheme(blocks)
    Y = realize(scheme, X, space)
    for i, belief in enumerate(beliefs):
        verdict = cx_dominates(Y[i], alloc[i], belief, tol)
        if not verdict.dominates:
            raise ImprovementVerificationFailed(i, verdict.max_violation)
    return LocallyComonotoneAllocation(scheme, Y)


def is_locally_comonotone(Y, X, space: ScenarioSpace, tol: float = 1e-9) -> bool:
    """Within each block every row of Y is a nondecreasing function of X."""
    Y = np.atleast_2d(Y)
    for block in space.blocks:
        m = space.mask(block)
        x = np.asarray(X)[m]
        order = np.argsort(x, kind="stable")
        dx = np.diff(x[order])
        dy = np.diff(Y[:, m][:, order], axis=1)
        tied = dx <= TIE_TOL
        if np.any(np.abs(dy[:, tied]) > tol) or np.any(dy[:, ~tied] < -tol):
            return False
    return True
