"""Capital requirements with finite-dimensional security markets.

A regime pairs an acceptance set {rho <= 0} with a security space
S = span(basis) priced by a density Q*: p(Z) = E[Q* Z].  The capital
requirement eta(X) is the cheapest security Z in S with X - Z acceptable.
For several regimes the global requirement is the infimal convolution of
the eta_i, computed as the cheapest Z in M = sum S_i with X - Z in the sum
of the acceptance sets.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space, orth
from scipy.optimize import brentq, minimize, minimize_scalar

from .diagnostics import compatibility_check
from .errors import (
    AssumptionViolated,
    ConeOracleUnavailable,
    NoPositiveSecurity,
    NoUnitPriceVector,
    PriceMismatch,
    RegimeNotFinite,
    SpaceMismatch,
    ValidationError,
)
from .lp import LinearProgram, constant
from .measures import RiskMeasure
from .sharing import (
    MIX_LEVELS,
    SharingProblem,
    SharingSolution,
    SolverOptions,
    _smooth,
    members,
    precheck,
    solve,
)
from .space import Belief

PRICE_TOL = 1e-12
SPAN_TOL = 1e-9


def _density(space, q) -> np.ndarray:
    if isinstance(q, Belief):
        q = q.density
    return Belief(space, np.asarray(q, dtype=float), name="pricing").density.copy()


@dataclass(frozen=True, eq=False)
class RiskMeasurementRegime:
    """Acceptance set of ``acceptance``, securities span(basis), prices E[Q* .]."""

    acceptance: RiskMeasure
    basis: np.ndarray  # (k, m)
    pricing_density: np.ndarray

    def __post_init__(self):
        space = self.acceptance.space
        B = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if B.shape[1] != space.size:
            raise SpaceMismatch(f"security basis has {B.shape[1]} entries, space has {space.size} atoms")
        if not np.all(np.isfinite(B)):
            raise ValidationError("security basis must be finite")
        if np.linalg.matrix_rank(B) < B.shape[0]:
            raise ValidationError("security basis is linearly dependent")
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "pricing_density", _density(space, self.pricing_density))
        self._check_positive_security()
        self._check_finite()

    @property
    def space(self):
        return self.acceptance.space

    @property
    def prices(self) -> np.ndarray:
        return self.basis @ (self.space.p * self.pricing_density)

    def price(self, Z) -> float:
        return float(np.dot(self.space.p * self.pricing_density, Z))

    def _check_positive_security(self):
        """Some nonnegative nonzero security must carry a positive price."""
        lp = LinearProgram()
        th = lp.var(self.basis.shape[0])
        Z = th.left(self.basis.T)
        lp.ge(Z, 0.0)
        lp.eq(Z.dot(self.space.p), 1.0)
        res = lp.solve(Z.dot(self.space.p * self.pricing_density), sense="max")
        if not res.ok or res.fun <= PRICE_TOL:
            raise NoPositiveSecurity("the security space has no nonnegative security with positive price")

    def _check_finite(self):
        """sup{p(Z) : X + Z acceptable} < inf, checked on the asymptotic cone.

        The supremum is infinite exactly when some security direction d with
        positive price stays acceptable along its ray.
        """
        try:
            pieces = self.acceptance.cone_pieces()
        except ConeOracleUnavailable:
            return
        w = self.space.p * self.pricing_density
        for piece in pieces:
            lp = LinearProgram()
            d = lp.var(self.basis.shape[0], lb=-1.0, ub=1.0)
            U = d.left(self.basis.T)
            lp.le(piece.recession_epigraph(lp, U), 0.0)
            res = lp.solve(U.dot(w), sense="max")
            if res.ok and res.fun > 1e-9:
                raise RegimeNotFinite(
                    "a positively priced security direction is acceptable along its whole ray",
                    direction=res.x[: self.basis.shape[0]],
                )


@dataclass(frozen=True, eq=False)
class GlobalMarket:
    combined_basis: np.ndarray  # orthonormal rows spanning M
    pricing_density: np.ndarray
    kernel_basis: np.ndarray  # rows spanning ker(pi) inside M
    space: object = None

    @classmethod
    def from_regimes(cls, regimes) -> "GlobalMarket":
        space = regimes[0].space
        q = regimes[0].pricing_density
        for r in regimes[1:]:
            if r.space is not space:
                raise SpaceMismatch("regimes live on different spaces")
        stack = np.vstack([r.basis for r in regimes])
        B = orth(stack.T, rcond=1e-12).T
        w = space.p * q
        prices = B @ w
        for r in regimes:
            if not np.allclose(r.prices, r.basis @ w, atol=1e-10, rtol=0):
                raise PriceMismatch("regimes disagree on security prices")
        K = null_space(prices[None, :], rcond=1e-12)
        kernel = (K.T @ B) if K.size else np.zeros((0, space.size))
        return cls(B, q.copy(), kernel, space)

    @property
    def prices(self) -> np.ndarray:
        return self.combined_basis @ (self.space.p * self.pricing_density)

    def price(self, Z) -> float:
        return float(np.dot(self.space.p * self.pricing_density, Z))

    def contains(self, Z, tol=SPAN_TOL) -> bool:
        Z = np.asarray(Z, dtype=float)
        B = self.combined_basis
        return bool(np.max(np.abs(Z - B.T @ (B @ Z)), initial=0.0) <= tol * (1.0 + np.max(np.abs(Z))))

    def unit_vector(self) -> np.ndarray:
        """Cash if traded, else the nonnegative unit-price security of least sup-norm."""
        one = np.ones(self.space.size)
        if self.contains(one):
            return one / self.price(one)
        B = self.combined_basis
        lp = LinearProgram()
        th = lp.var(B.shape[0])
        s = lp.var(1)
        Z = th.left(B.T)
        lp.ge(Z, 0.0)
        lp.le(Z - s.repeat(self.space.size), 0.0)
        lp.eq(Z.dot(self.space.p * self.pricing_density), 1.0)
        res = lp.solve(s)
        if not res.ok:
            raise NoUnitPriceVector("no nonnegative security with unit price exists in the market")
        return B.T @ res.x[: B.shape[0]]


def _split(regimes, Z):
    """Z = sum_i Z_i with Z_i in S_i (least-squares coefficients)."""
    sizes = [r.basis.shape[0] for r in regimes]
    stack = np.vstack([r.basis for r in regimes])
    coef, *_ = np.linalg.lstsq(stack.T, Z, rcond=None)
    parts, pos = [], 0
    for r, k in zip(regimes, sizes):
        parts.append(r.basis.T @ coef[pos : pos + k])
        pos += k
    return np.array(parts)


# --------------------------------------------------------------------------
# secured minimum: inf p(Z) over Z in span(B) with (inf-conv of agents)(X - Z) <= 0


@dataclass(frozen=True)
class _Secured:
    value: float
    security: np.ndarray | None  # Z
    allocation: np.ndarray | None  # Y with sum Y = X - Z
    method: str


def _default_box(X, prices) -> float:
    scale = np.abs(prices[np.abs(prices) > PRICE_TOL])
    s = float(scale.min()) if scale.size else 1.0
    return 8.0 * (float(np.max(np.abs(X))) + 1.0) / min(s, 1.0)


def _joint_lp(taus, B, w, X, box):
    m = X.size
    lp = LinearProgram()
    th = lp.var(B.shape[0], lb=-box, ub=box)
    Z = th.left(B.T)
    shares = [lp.var(m) for _ in taus[:-1]]
    rest = constant(X) - Z
    for s in shares:
        rest = rest - s
    shares.append(rest)
    epis = [t.epigraph(lp, y) for t, y in zip(taus, shares)]
    lp.le(sum(epis[1:], epis[0]), 0.0)
    res = lp.solve(Z.dot(w))
    if not res.ok:
        return None
    theta = res.x[: B.shape[0]]
    Zv = B.T @ theta
    Y = np.array([s.value(res.x) for s in shares])
    return res.fun, Zv, Y, theta


class _Coordinates:
    """Z = t U + K c: unit-price direction U plus zero-price part."""

    def __init__(self, B, w, U):
        self.m = B.shape[1]
        prices = B @ w
        K = null_space(prices[None, :], rcond=1e-12)
        self.kernel = (K.T @ B) if K.size else np.zeros((0, self.m))
        self.U = U
        self.cash = bool(np.allclose(U, U[0], atol=1e-12, rtol=0))

    def security(self, t, c):
        return t * self.U + self.kernel.T @ c


def _joint_smooth(taus, coords: _Coordinates, X, box, seed=0):
    """Joint minimization over securities and a general allocation."""
    n, m, k = len(taus), X.size, coords.kernel.shape[0]
    Kt = coords.kernel.T
    last = taus[-1]

    def unpack(v):
        c = v[:k]
        Y = v[k:].reshape(n - 1, m) if n > 1 else np.zeros((0, m))
        return c, Y

    if coords.cash:
        u0 = float(coords.U[0])

        def fun(v):
            c, Y = unpack(v)
            rest = X - Kt @ c - Y.sum(axis=0)
            val = sum(float(t.value(y)) for t, y in zip(taus, Y)) + float(last.value(rest))
            g_last = last.subgradient(rest)
            grad = np.concatenate([-(coords.kernel @ g_last)] + [t.subgradient(y) - g_last for t, y in zip(taus, Y)])
            return val, grad

        v0 = np.concatenate([np.zeros(k), np.tile(X / n, n - 1)])
        bounds = [(-box, box)] * k + [(None, None)] * ((n - 1) * m)
        v = v0
        if v0.size:
            v = minimize(fun, v0, jac=True, method="L-BFGS-B", bounds=bounds,
                         options={"ftol": 1e-16, "gtol": 1e-13, "maxiter": 20000, "maxfun": 50000}).x
        c, Y = unpack(v)
        val = fun(v)[0]
        # rho(X - K c - t U) = val - t u0 vanishes at t = val / u0
        t = val / u0
        Z = coords.security(t, c)
        rest = X - Z - Y.sum(axis=0)
        return t, Z, np.vstack([Y, rest[None, :]]) if n > 1 else rest[None, :]

    def total(v):
        c, Y = unpack(v[:-1])
        rest = X - Kt @ c - v[-1] * coords.U - Y.sum(axis=0)
        return sum(float(t.value(y)) for t, y in zip(taus, Y)) + float(last.value(rest))

    def total_grad(v):
        c, Y = unpack(v[:-1])
        rest = X - Kt @ c - v[-1] * coords.U - Y.sum(axis=0)
        g_last = last.subgradient(rest)
        parts = [-(coords.kernel @ g_last)] + [t.subgradient(y) - g_last for t, y in zip(taus, Y)]
        return np.concatenate(parts + [[-float(np.dot(coords.U, g_last))]])

    v0 = np.concatenate([np.zeros(k), np.tile(X / n, n - 1), [float(np.max(np.abs(X))) * 2.0 + 1.0]])
    bounds = [(-box, box)] * k + [(None, None)] * ((n - 1) * m) + [(-box, box)]
    obj = np.zeros(v0.size)
    obj[-1] = 1.0
    res = minimize(lambda v: (float(v[-1]), obj), v0, jac=True, method="SLSQP", bounds=bounds,
                   constraints=[{"type": "ineq", "fun": lambda v: -total(v), "jac": lambda v: -total_grad(v)}],
                   options={"ftol": 1e-14, "maxiter": 2000})
    v = res.x
    if total(v) > 1e-9:
        return math.inf, None, None
    c, Y = unpack(v[:-1])
    Z = coords.security(float(v[-1]), c)
    rest = X - Z - Y.sum(axis=0)
    return float(v[-1]), Z, np.vstack([Y, rest[None, :]]) if n > 1 else rest[None, :]


def _inner_total(agents, X, options, check):
    if len(agents) == 1:
        return float(agents[0].value(X)), X[None, :].copy()
    problem = SharingProblem(agents[0].space, tuple(agents), X)
    sol = solve(problem, options, check)
    return sol.total_risk, sol.allocation


def _nested(agents, coords: _Coordinates, X, box, options, check):
    """Outer search over zero-price coordinates, inner sharing solve."""
    k = coords.kernel.shape[0]

    def level(c):
        base = X - coords.kernel.T @ c
        if coords.cash:
            return _inner_total(agents, base, options, check)[0] / float(coords.U[0])
        f = lambda t: _inner_total(agents, base - t * coords.U, options, check)[0]
        lo, hi = -box, box
        if f(hi) > 0.0:
            return math.inf
        if f(lo) <= 0.0:
            return lo
        return brentq(f, lo, hi, xtol=1e-12, rtol=1e-14)

    if k == 0:
        c = np.zeros(0)
    elif k == 1:
        res = minimize_scalar(lambda s: level(np.array([s])), bounds=(-box, box), method="bounded",
                              options={"xatol": 1e-10})
        c = np.array([res.x])
    else:
        res = minimize(lambda v: level(v), np.zeros(k), method="Nelder-Mead", bounds=[(-box, box)] * k,
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        c = res.x
    t = level(c)
    if not math.isfinite(t):
        return math.inf, None, None
    Z = coords.security(t, c)
    _, Y = _inner_total(agents, X - Z, options, check)
    return t, Z, Y


def _secured_minimum(agents, B, w, X, U, box, options, check=None) -> _Secured:
    coords = _Coordinates(B, w, U)
    choice_lists = [members(a) for a in agents]
    best = _Secured(math.inf, None, None, "infeasible")
    for sel in itertools.product(*(range(len(c)) for c in choice_lists)):
        taus = [choice_lists[i][j] for i, j in enumerate(sel)]
        if all(t.polyhedral for t in taus):
            out = _joint_lp(taus, B, w, X, box)
            cand = _Secured(out[0], out[1], out[2], "lp") if out else None
        elif all(_smooth(t) for t in taus):
            t, Z, Y = _joint_smooth(taus, coords, X, box, options.seed)
            cand = _Secured(t, Z, Y, "smooth") if Z is not None else None
        else:
            t, Z, Y = _nested(agents, coords, X, box, options, check)
            cand = _Secured(t, Z, Y, "nested") if Z is not None else None
        if cand is not None and cand.value < best.value - 1e-12 * (1.0 + abs(cand.value)):
            best = cand
    return best


def _with_escalation(agents, B, w, X, U, box, options, check=None, rounds=4):
    box = _default_box(X, B @ w) if box is None else float(box)
    out = None
    for _ in range(rounds + 1):
        out = _secured_minimum(agents, B, w, X, U, box, options, check)
        if out.security is not None:
            theta = np.linalg.lstsq(B.T, out.security, rcond=None)[0]
            if np.max(np.abs(theta), initial=0.0) < box * (1.0 - 1e-6):
                return out, box
        box *= 2.0
    return out, box


def eta_single(regime: RiskMeasurementRegime, X, box: float | None = None,
               options: SolverOptions | None = None) -> float:
    """Cheapest price of a security making X - Z acceptable; +inf if none."""
    options = options or SolverOptions()
    X = regime.space.check(X, "position").astype(float)
    B = regime.basis
    w = regime.space.p * regime.pricing_density
    market = GlobalMarket.from_regimes([regime])
    U = market.unit_vector()
    out, _ = _with_escalation([regime.acceptance], B, w, X, U, box, options)
    return float(out.value)


# --------------------------------------------------------------------------
# assumption check


@dataclass(frozen=True)
class AssumptionReport:
    holds: bool
    density: np.ndarray | None
    source: str
    failures: tuple = ()  # (source, agent, reason, witness)

    @property
    def explanation(self) -> str:
        if self.holds:
            return f"common compatible pricing density found ({self.source})"
        lines = [f"{src}: agent {k}: {reason}" for src, k, reason, _ in self.failures]
        return "no common compatible pricing density; " + "; ".join(lines)

    @property
    def witness(self):
        for _, _, _, u in self.failures:
            if u is not None:
                return u
        return None


def _assumption_candidates(regimes):
    space = regimes[0].space
    seen = []

    def fresh(q):
        if any(np.allclose(q, s, atol=1e-12, rtol=0) for s in seen):
            return False
        seen.append(q)
        return True

    given = regimes[0].pricing_density
    beliefs = [r.acceptance.belief.density for r in regimes]
    mean_belief = np.mean(beliefs, axis=0)
    out = [("pricing density", given), ("belief average", mean_belief)]
    for a, b in itertools.combinations(range(len(beliefs)), 2):
        for lam in MIX_LEVELS:
            out.append((f"mix({a},{b},{lam:g})", lam * beliefs[a] + (1 - lam) * beliefs[b]))
    for lam in MIX_LEVELS:
        out.append((f"mix(pricing,beliefs,{lam:g})", lam * given + (1 - lam) * mean_belief))
    return [(s, q) for s, q in out if fresh(q)]


def verify_assumption(regimes, tol: float = 1e-9) -> AssumptionReport:
    """Search for Q* compatible with every acceptance measure and reproducing all prices."""
    regimes = list(regimes)
    space = regimes[0].space
    failures = []
    for source, q in _assumption_candidates(regimes):
        w = space.p * q
        if any(np.max(np.abs(r.basis @ w - r.prices)) > 1e-10 for r in regimes):
            continue
        ok = True
        for k, r in enumerate(regimes):
            rep = compatibility_check(r.acceptance, q, tol)
            if not rep.compatible:
                ok = False
                if not rep.conjugate_finite:
                    reason = "conjugate is infinite"
                else:
                    zeros = np.flatnonzero(q <= tol)
                    reason = "asymptotic direction with zero price"
                    if zeros.size:
                        reason += f" (density vanishes on atoms {zeros.tolist()})"
                failures.append((source, k, reason, rep.witness))
                break
        if ok:
            return AssumptionReport(True, q.copy(), source, tuple(failures))
    return AssumptionReport(False, None, "", tuple(failures))


# --------------------------------------------------------------------------
# global requirement and the secured allocation


@dataclass(frozen=True)
class GlobalRequirement:
    eta: float
    security: np.ndarray  # Z* in M with price eta
    allocation: np.ndarray  # X_i = A_i + N_i + eta U_i
    accepted: np.ndarray  # A_i
    kernel_parts: np.ndarray  # N_i, sum in ker(pi)
    units: np.ndarray  # U_i, sum has unit price
    per_agent_eta: tuple
    pricing_density: np.ndarray
    weights: np.ndarray  # P of each atom
    method: str
    sharing: SharingSolution | None = None
    assumption: AssumptionReport | None = field(default=None, repr=False)

    @property
    def kernel_price(self) -> float:
        """pi(N) for N = sum_i N_i."""
        return float(np.dot(self.weights * self.pricing_density, self.kernel_parts.sum(axis=0)))

    def acceptance_values(self, regimes):
        return tuple(float(r.acceptance.value(a)) for r, a in zip(regimes, self.accepted))


def _units(regimes, market: GlobalMarket, units):
    space = regimes[0].space
    if units is None:
        U = market.unit_vector()
        return U, _split(regimes, U)
    U_i = np.array([space.check(u, "unit security").astype(float) for u in units])
    for r, u in zip(regimes, U_i):
        B = r.basis
        resid = u - B.T @ np.linalg.lstsq(B.T, u, rcond=None)[0]
        if np.max(np.abs(resid)) > SPAN_TOL * (1.0 + np.max(np.abs(u))):
            raise NoUnitPriceVector("unit security component lies outside its security space")
    U = U_i.sum(axis=0)
    if abs(market.price(U) - 1.0) > 1e-10:
        raise NoUnitPriceVector(f"unit security has price {market.price(U):.12g}, not 1")
    return U, U_i


def eta_global(regimes, X, units=None, box: float | None = None,
               options: SolverOptions | None = None) -> GlobalRequirement:
    """Global capital requirement and a secured allocation X_i = A_i + N_i + eta U_i."""
    regimes = list(regimes)
    options = options or SolverOptions()
    space = regimes[0].space
    X = space.check(X, "position").astype(float)
    market = GlobalMarket.from_regimes(regimes)
    report = verify_assumption(regimes, options.tol)
    if not report.holds:
        raise AssumptionViolated(report.explanation, report.witness)
    q = market.pricing_density
    w = space.p * q
    U, U_i = _units(regimes, market, units)
    agents = tuple(r.acceptance for r in regimes)
    B = market.combined_basis
    check = precheck(SharingProblem(space, agents, X), options.tol) if len(agents) > 1 else None

    one = np.ones(space.size)
    cash_only = market.kernel_basis.shape[0] == 0 and market.contains(one)
    if cash_only:
        t, Y = _inner_total(agents, X, options, check)
        eta = t / market.price(one)
        Z = eta * one
        method = "sharing"
    else:
        out, _ = _with_escalation(agents, B, w, X, U, box, options, check)
        if out.security is None:
            raise AssumptionViolated("capital requirement is infinite within the security box")
        eta, Z, method = float(out.value), out.security, out.method

    # comonotone split of the secured position X - Z (the theorem's final step)
    sharing = None
    if len(agents) > 1:
        sharing = solve(SharingProblem(space, agents, X - Z), options, check)
        Y, total = sharing.allocation, sharing.total_risk
    else:
        Y = (X - Z)[None, :]
        total = float(agents[0].value(Y[0]))
    if total > 0.0 and market.contains(one):
        # absorb solver round-off with cash so every A_i is accepted
        Z = Z + total * one / market.price(one)
        eta = eta + total
        total = 0.0

    n = len(regimes)
    risks = np.array([float(a.value(y)) for a, y in zip(agents, Y)])
    A = Y - risks[:, None]
    A[-1] = Y[-1] + risks[:-1].sum()
    Z_i = _split(regimes, Z)
    Z_i[-1] = Z - Z_i[:-1].sum(axis=0)
    N_i = Z_i - eta * U_i
    Xi = A + N_i + eta * U_i
    Xi[-1] = X - Xi[:-1].sum(axis=0)
    per_agent = tuple(eta_single(r, x, options=options) for r, x in zip(regimes, Xi))
    return GlobalRequirement(eta, Z, Xi, A, N_i, U_i, per_agent, q.copy(), space.p.copy(), method, sharing, report)


# --------------------------------------------------------------------------
# asymptotic directions of the summed acceptance set


def in_summed_cone(agents, U, ts=(1.0, 10.0, 100.0), options: SolverOptions | None = None) -> bool:
    """Ray test: (inf-conv of agents)(t U) <= 0 for every t in ``ts``."""
    options = options or SolverOptions(restarts=1)
    U = np.asarray(U, dtype=float)
    return all(_inner_total(list(agents), t * U, options, None)[0] <= 1e-9 * t for t in ts)


def decompose_direction(agents, U, tol: float = 1e-9):
    """Split U into per-agent asymptotic directions, or None if impossible.

    Each agent's cone is a union of polyhedral pieces; every combination of
    pieces is tried as an LP feasibility problem.
    """
    U = np.asarray(U, dtype=float)
    m = U.size
    piece_lists = [a.cone_pieces() for a in agents]
    for combo in itertools.product(*piece_lists):
        lp = LinearProgram()
        parts = [lp.var(m, lb=-10.0 * (1 + np.max(np.abs(U))), ub=10.0 * (1 + np.max(np.abs(U))))
                 for _ in combo[:-1]]
        rest = constant(U)
        for p in parts:
            rest = rest - p
        parts.append(rest)
        for piece, p in zip(combo, parts):
            lp.le(piece.recession_epigraph(lp, p), tol)
        res = lp.solve()
        if res.ok:
            return np.array([p.value(res.x) for p in parts])
    return None
