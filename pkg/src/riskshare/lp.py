"""Minimal affine-expression layer over ``scipy.optimize.linprog`` (HiGHS).

Problems here have at most a few hundred variables, so constraint matrices
are kept dense and padded lazily as variables are added.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import SolverFailure

HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


class Affine:
    """Vector of affine functions ``coef @ x + const`` of the LP variables."""

    __slots__ = ("coef", "const")
    # make ``ndarray <op> Affine`` dispatch to the reflected Affine methods
    __array_ufunc__ = None

    def __init__(self, coef, const):
        self.coef = np.atleast_2d(np.asarray(coef, dtype=float))
        self.const = np.atleast_1d(np.asarray(const, dtype=float))

    @property
    def size(self):
        return self.const.size

    def padded(self, n):
        if self.coef.shape[1] == n:
            return self.coef
        out = np.zeros((self.coef.shape[0], n))
        out[:, : self.coef.shape[1]] = self.coef
        return out


    def __add__(self, other):
        if isinstance(other, Affine):
            n = max(self.coef.shape[1], other.coef.shape[1])
            return Affine(self.padded(n) + other.padded(n), self.const + other.const)
        return Affine(self.coef, self.const + other)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.coef, -self.const)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        return Affine(self.coef * scalar, self.const * scalar)

    __rmul__ = __mul__

    def __getitem__(self, idx):
        return Affine(self.coef[idx], self.const[idx])

    def left(self, matrix):
        """``matrix @ self``."""
        matrix = np.atleast_2d(matrix)
        return Affine(matrix @ self.coef, matrix @ self.const)

    def dot(self, w):
        return self.left(np.asarray(w, dtype=float)[None, :])

    def total(self):
        return self.left(np.ones((1, self.size)))

    def repeat(self, k):
        return Affine(np.repeat(self.coef, k, axis=0), np.repeat(self.const, k))

    def value(self, x):
        return self.padded(len(x)) @ x + self.const


def constant(values):
    values = np.atleast_1d(np.asarray(values, dtype=float))
    return Affine(np.zeros((values.size, 0)), values)


@dataclass
class LPResult:
    status: int
    x: np.ndarray | None
    fun: float | None
    message: str

    @property
    def ok(self):
        return self.status == 0

    @property
    def infeasible(self):
        return self.status == 2

    @property
    def unbounded(self):
        return self.status == 3


class LinearProgram:
    def __init__(self):
        self.nvar = 0
        self.lb: list[float] = []
        self.ub: list[float] = []
        self._ub_rows: list[Affine] = []
        self._eq_rows: list[Affine] = []

    def var(self, k=1, lb=-np.inf, ub=np.inf) -> Affine:
        coef = np.zeros((k, self.nvar + k))
        coef[:, self.nvar:] = np.eye(k)
        self.lb.extend(np.broadcast_to(lb, (k,)).tolist())
        self.ub.extend(np.broadcast_to(ub, (k,)).tolist())
        self.nvar += k
        return Affine(coef, np.zeros(k))

    def le(self, expr: Affine, rhs=0.0):
        """Componentwise ``expr <= rhs``."""
        self._ub_rows.append(expr - rhs)

    def ge(self, expr: Affine, rhs=0.0):
        self._ub_rows.append(rhs - expr)

    def eq(self, expr: Affine, rhs=0.0):
        self._eq_rows.append(expr - rhs)

    def _stack(self, rows):
        if not rows:
            return None, None
        A = np.vstack([r.padded(self.nvar) for r in rows])
        b = -np.concatenate([r.const for r in rows])
        return A, b

    def solve(self, objective: Affine | None = None, sense="min") -> LPResult:
        c = np.zeros(self.nvar)
        offset = 0.0
        if objective is not None:
            c = objective.padded(self.nvar)[0].copy()
            offset = float(objective.const[0])
        if sense == "max":
            c = -c
        A_ub, b_ub = self._stack(self._ub_rows)
        A_eq, b_eq = self._stack(self._eq_rows)
        bounds = [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi) for lo, hi in zip(self.lb, self.ub)]
        res = linprog(
            c,
            A_ub=A_ub,
            b_ub=b_ub,
            A_eq=A_eq,
            b_eq=b_eq,
            bounds=bounds,
            method="highs",
            options=HIGHS_OPTIONS,
        )
        if res.status not in (0, 2, 3):
            raise SolverFailure(f"linprog failed: {res.message}")
        fun = None
        if res.status == 0:
            fun = float(res.fun) if sense == "min" else -float(res.fun)
            fun += offset
        return LPResult(res.status, res.x if res.status == 0 else None, fun, res.message)
