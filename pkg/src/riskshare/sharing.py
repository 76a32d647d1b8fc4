"""Optimal risk sharing over locally comonotone allocations.

The search space is parametrized by ``SchemeLayout``: per block, every
agent's share is a nondecreasing function of the target's value.  For a
fixed choice of one convex member per agent the objective is convex in the
parameters and is minimized by linear programming (polyhedral members),
L-BFGS-B / SLSQP (smooth members) or a cutting-plane LP (mixed).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .comonotone import ComonotoneScheme, SchemeLayout, realize
from .diagnostics import CompatibilityReport, compatibility_check, is_admissible
from .errors import (
    NonConsistentAgent,
    NotBlockConstant,
    NotConcordant,
    NotEquivalent,
    NotSupported,
    SpaceMismatch,
    TooLarge,
    WrongAgentKinds,
)
from .lp import LinearProgram, constant
from .measures import (
    Entropic,
    Expectation,
    MinOf,
    Mixture,
    RiskMeasure,
    Shifted,
    StarHull,
)
from .space import Belief, ScenarioSpace, check_concordance

MIX_LEVELS = tuple(np.round(np.arange(0.1, 1.0, 0.1), 10))


@dataclass(frozen=True)
class SolverOptions:
    box: float | None = None  # intercept bound; default 4 (|X|_inf + 1)
    restarts: int = 10
    seed: int = 0
    tol: float = 1e-9
    cutting_plane_iters: int = 400

    def resolved_box(self, X) -> float:
        if self.box is not None:
            return float(self.box)
        return 4.0 * (float(np.max(np.abs(X))) + 1.0)


@dataclass(frozen=True, eq=False)
class SharingProblem:
    space: ScenarioSpace
    agents: tuple
    target: np.ndarray

    def __post_init__(self):
        agents = tuple(self.agents)
        if not agents:
            raise ValueError("a sharing problem needs at least one agent")
        target = self.space.check(self.target, "target").astype(float)
        for k, rho in enumerate(agents):
            if rho.space is not self.space:
                raise SpaceMismatch(f"agent {k} lives on a different space")
            if not rho.consistent:
                raise NonConsistentAgent(f"agent {k} ({rho.describe()}) is not consistent", agent=k)
            if not rho.belief.equivalent:
                raise NotEquivalent(f"belief of agent {k} is not equivalent to P", agent=k)
        try:
            check_concordance([rho.belief for rho in agents], self.space)
        except NotBlockConstant as err:
            raise NotConcordant(str(err), belief_index=err.belief_index, block=err.block) from err
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "target", target)

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def beliefs(self):
        return [rho.belief for rho in self.agents]

    def with_target(self, X) -> "SharingProblem":
        return SharingProblem(self.space, self.agents, X)


@dataclass(frozen=True)
class PrecheckReport:
    passed: bool
    admissible: tuple
    densities: dict  # agent index -> compatible density finite for every conjugate
    witness: np.ndarray | None
    witness_agent: int | None
    failing: tuple
    reports: dict = field(default_factory=dict)  # agent index -> CompatibilityReport
    density_ids: dict = field(default_factory=dict)  # agent index -> candidate label

    def certificate(self):
        if self.densities:
            return self.densities[min(self.densities)]
        return None


@dataclass(frozen=True)
class SharingSolution:
    allocation: np.ndarray  # (n, m)
    total_risk: float
    per_agent_risk: tuple
    scheme: ComonotoneScheme | None
    certificate: np.ndarray | None
    certificate_bound: float  # E[Z X] - sum rho_i*(Z), -inf without certificate
    selection: tuple = ()
    box: float = math.inf
    method: str = ""
    precheck: PrecheckReport | None = None

    @property
    def minimizer_norm(self) -> float:
        return self.scheme.max_abs_intercept() if self.scheme is not None else float("nan")


# --------------------------------------------------------------------------
# precheck


def _candidate_densities(problem: SharingProblem):
    """Labelled candidates: beliefs, pairwise mixtures, then their mean."""
    qs, names = [], []
    for b in problem.beliefs:
        if not any(np.allclose(b.density, q, atol=1e-12, rtol=0) for q in qs):
            qs.append(b.density.copy())
            names.append(b.name)
    cands = [(f"belief:{nm}", q) for nm, q in zip(names, qs)]
    for a, b in itertools.combinations(range(len(qs)), 2):
        cands += [(f"mix:{names[a]}:{names[b]}:{lam:g}", lam * qs[a] + (1.0 - lam) * qs[b]) for lam in MIX_LEVELS]
    if len(qs) > 2:
        cands.append(("mean", np.mean(qs, axis=0)))
    return cands


def precheck(problem: SharingProblem, tol: float = 1e-9) -> PrecheckReport:
    """Search compatible densities with finite conjugate for every agent.

    The belief densities are tried first, then their mixtures.  At most
    one agent may go without such a density (it plays the role of the
    last agent); non-admissible agents never have one.
    """
    agents = problem.agents
    admissible = tuple(is_admissible(rho, tol).admissible for rho in agents)
    densities, ids, reports = {}, {}, {}
    cross = []
    for label, Z in _candidate_densities(problem):
        if all(math.isfinite(rho.conjugate_value(Z, tol)) for rho in agents):
            cross.append((label, Z))
    for i, rho in enumerate(agents):
        if not admissible[i]:
            continue
        for label, Z in cross:
            rep = compatibility_check(rho, Z, tol)
            if rep.compatible:
                densities[i] = Z
                ids[i] = label
                break
            reports.setdefault(i, rep)
    failing = tuple(i for i in range(len(agents)) if i not in densities)
    witness, witness_agent = None, None
    for i in failing:
        if not admissible[i]:
            continue
        rep = reports.get(i) or compatibility_check(agents[i], agents[i].belief.density, tol)
        reports.setdefault(i, rep)
        if rep.witness is not None:
            witness, witness_agent = rep.witness, i
            break
    if witness is None:
        # a non-admissible expectation agent may still expose the failing direction
        for i in failing:
            for _, Z in cross:
                rep = compatibility_check(agents[i], Z, tol)
                if rep.witness is not None:
                    witness, witness_agent = rep.witness, i
                    break
            if witness is not None:
                break
    return PrecheckReport(len(failing) <= 1, admissible, densities, witness, witness_agent, failing, reports, ids)


def _cross_finite(problem, tol):
    for _, Z in _candidate_densities(problem):
        if all(math.isfinite(rho.conjugate_value(Z, tol)) for rho in problem.agents):
            return Z
    return None


def duality_bound(agents, Z, X) -> float:
    """E[Z X] - sum_i rho_i*(Z): a lower bound on the optimal total risk."""
    p = agents[0].space.p
    conj = sum(rho.conjugate_value(Z) for rho in agents)
    return float(np.dot(p * Z, X)) - conj


# --------------------------------------------------------------------------
# member structure


def members(rho: RiskMeasure):
    if isinstance(rho, MinOf):
        return list(rho.options)
    if isinstance(rho, StarHull) and rho.inner.star_shaped:
        return members(rho.inner)
    if not rho.convex:
        raise NotSupported(f"{rho.describe()} is not a finite minimum of convex members")
    return [rho]


def _smooth(rho) -> bool:
    if isinstance(rho, (Expectation, Entropic)):
        return True
    if isinstance(rho, Mixture):
        return all(_smooth(c) for c in rho.components)
    if isinstance(rho, Shifted):
        return _smooth(rho.inner)
    return False


# --------------------------------------------------------------------------
# convex subproblems


def _objective(layout, taus, theta):
    Y = layout.allocation(theta)
    return float(sum(float(t.value(y)) for t, y in zip(taus, Y))), Y


def _solve_lp(layout: SchemeLayout, taus, box):
    lp = LinearProgram()
    lo, hi = layout.bounds(box)
    theta = lp.var(layout.dim, lb=lo, ub=hi)
    A, b = layout.equality_rows()
    lp.eq(theta.left(A), b)
    shares = [theta.left(layout.maps[i]) for i in range(layout.n - 1)]
    rest = constant(layout.X)
    for s in shares:
        rest = rest - s
    shares.append(rest)
    epis = [tau.epigraph(lp, y) for tau, y in zip(taus, shares)]
    total = sum(epis[1:], epis[0])
    res = lp.solve(total)
    if not res.ok:
        raise NotSupported(f"sharing LP failed: {res.message}")
    # optimal sets are often unbounded along cash transfers; take the optimum
    # with the smallest intercepts so the minimizer sits inside the box
    lp.le(total, res.fun + 1e-10 * (1.0 + abs(res.fun)))
    bound = lp.var(1, lb=0.0)
    for j in layout.intercept_indices():
        lp.le(theta[j] - bound, 0.0)
        lp.le(-theta[j] - bound, 0.0)
    tight = lp.solve(bound)
    return (tight if tight.ok else res).x[: layout.dim]


class _Reduced:
    """Parameters of agents 1..n-1; the last agent's row closes every sum."""

    def __init__(self, layout: SchemeLayout, box: float):
        self.layout = layout
        n = layout.n
        free, lo, hi = [], [], []
        for b, (_, _, support, _, off) in enumerate(layout.blocks):
            K = support.size
            t = layout.targets(b)
            for i in range(n - 1):
                for k in range(K):
                    free.append(off + i * K + k)
                    if k == 0:
                        lo.append(max(-box, t[0] - box) if n == 2 else -box)
                        hi.append(min(box, t[0] + box) if n == 2 else box)
                    else:
                        lo.append(0.0)
                        hi.append(t[k])
        self.free = np.array(free, dtype=int)
        self.lo, self.hi = np.array(lo), np.array(hi)
        self.maps = layout.maps[: n - 1][:, :, self.free]
        self.box = box

    def full(self, x):
        theta = np.zeros(self.layout.dim)
        theta[self.free] = x
        for b in range(len(self.layout.blocks)):
            P = self.layout.block_params(theta, b)
            P[-1] = self.layout.targets(b) - P[:-1].sum(axis=0)
        return theta

    def shares(self, x):
        Y = np.empty((self.layout.n, self.layout.X.size))
        Y[:-1] = np.einsum("imd,d->im", self.maps, x)
        Y[-1] = self.layout.X - Y[:-1].sum(axis=0)
        return Y

    def coupling_constraints(self):
        """Linear inequalities G x <= h tying the last agent's row (n >= 3)."""
        layout, n = self.layout, self.layout.n
        rows, rhs = [], []
        pos = {j: k for k, j in enumerate(self.free)}
        for b, (_, _, support, _, off) in enumerate(layout.blocks):
            K = support.size
            t = layout.targets(b)
            for k in range(K):
                row = np.zeros(self.free.size)
                for i in range(n - 1):
                    row[pos[off + i * K + k]] = 1.0
                if k == 0:
                    # last intercept t0 - sum c_i within [-box, box]
                    rows += [row, -row]
                    rhs += [t[0] + self.box, self.box - t[0]]
                else:
                    rows.append(row)
                    rhs.append(t[k])
        return np.array(rows), np.array(rhs)

    def starts(self, count, seed):
        rng = np.random.default_rng(seed)
        base = self.layout.equal_split()[self.free]
        out = [np.clip(base, self.lo, self.hi)]
        layout, n = self.layout, self.layout.n
        for _ in range(count - 1):
            theta = np.zeros(layout.dim)
            for b in range(len(layout.blocks)):
                P = layout.block_params(theta, b)
                t = layout.targets(b)
                P[:, 1:] = rng.dirichlet(np.ones(n), size=t.size - 1).T * t[1:][None, :]
                c = rng.uniform(-0.5, 0.5, n) * min(self.box, 1.0 + abs(t[0]))
                P[:, 0] = c - c.mean() + t[0] / n
            out.append(np.clip(theta[self.free], self.lo, self.hi))
        return out


def _solve_smooth(layout: SchemeLayout, taus, box, options: SolverOptions):
    red = _Reduced(layout, box)
    last = taus[-1]

    def fun(x):
        Y = red.shares(x)
        val = sum(float(t.value(y)) for t, y in zip(taus, Y))
        g_last = last.subgradient(Y[-1])
        grad = np.zeros(x.size)
        for i in range(layout.n - 1):
            grad += red.maps[i].T @ (taus[i].subgradient(Y[i]) - g_last)
        return val, grad

    best_x, best_val = None, math.inf
    bounds = list(zip(red.lo, red.hi))
    if layout.n >= 3:
        G, h = red.coupling_constraints()
        cons = [{"type": "ineq", "fun": lambda x: h - G @ x, "jac": lambda x: -G}]
    for x0 in red.starts(max(options.restarts, 1), options.seed):
        if layout.n == 2:
            res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"ftol": 1e-16, "gtol": 1e-13, "maxiter": 20000, "maxfun": 50000})
        else:
            res = minimize(fun, x0, jac=True, method="SLSQP", bounds=bounds, constraints=cons,
                           options={"ftol": 1e-15, "maxiter": 2000})
        x = np.clip(res.x, red.lo, red.hi)
        val = fun(x)[0]
        if best_x is None or val < best_val - 1e-13 * (1.0 + abs(best_val)):
            best_x, best_val = x, val
    return red.full(best_x)


def _solve_cutting_plane(layout: SchemeLayout, taus, box, options: SolverOptions):
    lp = LinearProgram()
    lo, hi = layout.bounds(box)
    theta = lp.var(layout.dim, lb=lo, ub=hi)
    A, b = layout.equality_rows()
    lp.eq(theta.left(A), b)
    shares = [theta.left(layout.maps[i]) for i in range(layout.n - 1)]
    rest = constant(layout.X)
    for s in shares:
        rest = rest - s
    shares.append(rest)
    epis = []
    smooth = []
    for i, (tau, y) in enumerate(zip(taus, shares)):
        if tau.polyhedral:
            epis.append(tau.epigraph(lp, y))
        else:
            t = lp.var(1)
            epis.append(t)
            smooth.append((i, tau, y, t))
    objective = sum(epis[1:], epis[0])

    def add_cuts(th):
        Y = layout.allocation(th)
        for i, tau, y, t in smooth:
            yi = Y[i]
            g = tau.subgradient(yi)
            lp.ge(t - y.dot(g), float(tau.value(yi)) - float(np.dot(g, yi)))

    th = layout.equal_split()
    add_cuts(th)
    best_val, _ = _objective(layout, taus, th)
    best = th
    for _ in range(options.cutting_plane_iters):
        res = lp.solve(objective)
        if not res.ok:
            break
        th = res.x[: layout.dim]
        val, _ = _objective(layout, taus, th)
        if val < best_val:
            best, best_val = th, val
        if best_val - res.fun <= 1e-10 * (1.0 + abs(best_val)):
            break
        add_cuts(th)
    return best


def _solve_selection(layout, taus, box, options):
    if layout.n == 1:
        return np.zeros(layout.dim), "trivial"
    if all(t.polyhedral for t in taus):
        return _solve_lp(layout, taus, box), "lp"
    if all(_smooth(t) for t in taus):
        return _solve_smooth(layout, taus, box, options), "smooth"
    return _solve_cutting_plane(layout, taus, box, options), "cutting-plane"


def _merge_expectations(agents):
    """Group identical expectation agents; returns representatives and groups.

    Representatives keep their first index; expectation groups are moved to
    the end so the last (eliminated) agent is linear whenever possible.
    """
    groups = []
    for k, rho in enumerate(agents):
        if isinstance(rho, Expectation):
            for g in groups:
                if isinstance(agents[g[0]], Expectation) and agents[g[0]].belief.same_as(rho.belief):
                    g.append(k)
                    break
            else:
                groups.append([k])
        else:
            groups.append([k])
    groups.sort(key=lambda g: (isinstance(agents[g[0]], Expectation), g[0]))
    return groups


def solve(problem: SharingProblem, options: SolverOptions | None = None, check: PrecheckReport | None = None) -> SharingSolution:
    options = options or SolverOptions()
    X = problem.target
    space = problem.space
    box = options.resolved_box(X)
    check = check if check is not None else precheck(problem, options.tol)
    groups = _merge_expectations(problem.agents)
    reps = [problem.agents[g[0]] for g in groups]
    layout = SchemeLayout(space, X, len(reps))
    choice_lists = [members(rho) for rho in reps]

    best = None
    for sel in itertools.product(*(range(len(c)) for c in choice_lists)):
        taus = [choice_lists[i][j] for i, j in enumerate(sel)]
        theta, method = _solve_selection(layout, taus, box, options)
        val, _ = _objective(layout, taus, theta)
        if best is None or val < best[0] - 1e-12 * (1.0 + abs(best[0])):
            best = (val, sel, theta, method)
    _, sel, theta, method = best

    scheme = layout.scheme(theta)
    Yr = realize(scheme, X, space) if layout.n > 1 else X[None, :].copy()
    Y = np.zeros((problem.n, space.size))
    selection = [0] * problem.n
    for r, g in enumerate(groups):
        for k in g:
            Y[k] = Yr[r] / len(g)
            selection[k] = sel[r]
        if len(g) > 1:
            Y[g[-1]] = Yr[r] - sum(Y[k] for k in g[:-1])
    return _package(problem, Y, scheme if len(groups) == problem.n else None, check, tuple(selection), box, method)


def _package(problem, Y, scheme, check, selection, box, method, tol=1e-9):
    risks = tuple(float(rho.value(y)) for rho, y in zip(problem.agents, Y))
    Z = check.certificate() if check is not None else None
    if Z is None:
        Z = _cross_finite(problem, tol)
    bound = duality_bound(problem.agents, Z, problem.target) if Z is not None else -math.inf
    return SharingSolution(Y, float(sum(risks)), risks, scheme, Z, bound, selection, box, method, check)


# --------------------------------------------------------------------------
# closed form, oracle, probes


def closed_form_entropic(beta1: float, beta2: float, Q1: Belief, Q2: Belief, X) -> SharingSolution:
    """Optimal split between two entropic agents with beliefs Q1 and Q2.

    X_1 = beta2/(beta1+beta2) X + log(dQ2/dQ1)/(beta1+beta2), X_2 = X - X_1.
    """
    space = Q1.space
    X = space.check(X, "target").astype(float)
    s = beta1 + beta2
    X1 = beta2 / s * X + np.log(Q2.density / Q1.density) / s
    Y = np.vstack([X1, X - X1])
    agents = (Entropic(beta1, Q1), Entropic(beta2, Q2))
    risks = tuple(float(a.value(y)) for a, y in zip(agents, Y))
    return SharingSolution(Y, float(sum(risks)), risks, None, None, -math.inf, method="closed-form")


def closed_form_for(problem: SharingProblem) -> SharingSolution:
    agents = problem.agents
    if len(agents) != 2 or not all(isinstance(a, Entropic) for a in agents):
        raise WrongAgentKinds("closed form needs exactly two entropic agents")
    a, b = agents
    return closed_form_entropic(a.beta, b.beta, a.belief, b.belief, problem.target)


def align_cash(Y, reference) -> np.ndarray:
    """Shift rows of Y by constants (summing to zero) to match ``reference`` in mean.

    Cash transfers between agents leave the total risk unchanged, so optimal
    allocations are compared modulo such transfers.
    """
    Y = np.array(Y, dtype=float)
    shift = (np.asarray(reference) - Y).mean(axis=1)
    shift[-1] = -shift[:-1].sum()
    return Y + shift[:, None]


def brute_force_oracle(problem: SharingProblem, grid: float = 0.05, box: float | None = None,
                       max_points: int = 50_000_000) -> SharingSolution:
    """Exhaustive search for n = 2 on at most 5 atoms.

    X_1 ranges over multiples of ``grid`` in [-box, box] on every atom but the
    first, where it is pinned to 0 (cash transfers do not change the total).
    """
    X = problem.target
    m = problem.space.size
    if problem.n == 1:
        return _package(problem, X[None, :].copy(), None, None, (0,), math.inf, "oracle")
    if problem.n != 2 or m > 5:
        raise TooLarge("brute force supports n = 2 and at most 5 atoms")
    if box is None:
        box = grid * math.ceil((2.0 * float(np.max(np.abs(X))) + 1.0) / grid)
    k = int(round(box / grid))
    axis = grid * np.arange(-k, k + 1)
    total = axis.size ** (m - 1)
    if total > max_points:
        raise TooLarge(f"grid has {total} points")
    r1, r2 = problem.agents
    best_val, best = math.inf, None
    chunk = 400_000
    shape = (axis.size,) * (m - 1)
    for start in range(0, total, chunk):
        idx = np.unravel_index(np.arange(start, min(start + chunk, total)), shape)
        # column-major rows keep the per-atom slices in the measures contiguous
        X1 = np.zeros((idx[0].size if idx else 1, m), order="F")
        for j, col in enumerate(idx):
            X1[:, j + 1] = axis[col]
        vals = r1.value(X1) + r2.value(X[None, :] - X1)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best = float(vals[j]), X1[j].copy()
    Y = np.vstack([best, X - best])
    return _package(problem, Y, None, None, (0, 0), box, "oracle")


@dataclass(frozen=True)
class ExactnessEvidence:
    boxes: tuple
    minima: tuple
    norms: tuple
    saturated: tuple
    strictly_decreasing: bool
    stabilized: bool
    witness: np.ndarray | None

    @property
    def non_attainment(self) -> bool:
        return self.strictly_decreasing and all(self.saturated)


def _push_along(problem, sol: SharingSolution, U, agent: int):
    """Move agent ``agent`` along U (last agent takes -U) up to the box edge.

    For convex members and U in the agent's recession cone the agent's risk
    is nonincreasing along the ray; the move is kept only if the total risk
    does not go up.
    """
    scheme = sol.scheme
    space = problem.space
    last = problem.n - 1
    if scheme is None or agent == last or not space.is_block_constant(U):
        return sol
    s_max = math.inf
    for block, bs in scheme.blocks.items():
        u = float(U[space.mask(block)][0])
        for idx, sign in ((agent, 1.0), (last, -1.0)):
            d = sign * u
            c = bs.intercepts[idx]
            if d > 0:
                s_max = min(s_max, (sol.box - c) / d)
            elif d < 0:
                s_max = min(s_max, (c + sol.box) / -d)
    if not math.isfinite(s_max) or s_max <= 0:
        return sol

    def total(s):
        Y = sol.allocation.copy()
        Y[agent] += s * U
        Y[last] = problem.target - Y[:last].sum(axis=0)
        return float(sum(float(r.value(y)) for r, y in zip(problem.agents, Y))), Y

    t_far, Y_far = total(s_max)
    slack = 4e-16 * (1.0 + abs(sol.total_risk))
    if t_far > sol.total_risk + slack:
        res = minimize_scalar(lambda s: total(s)[0], bounds=(0.0, s_max), method="bounded",
                              options={"xatol": 1e-12})
        t_far, Y_far = total(res.x)
        if t_far > sol.total_risk:
            return sol
        s_max = res.x
    blocks = {}
    for block, bs in scheme.blocks.items():
        u = float(U[space.mask(block)][0])
        c = bs.intercepts.copy()
        c[agent] += s_max * u
        c[last] -= s_max * u
        blocks[block] = replace(bs, intercepts=c)
    new_scheme = ComonotoneScheme(blocks)
    Y = realize(new_scheme, problem.target, space)
    risks = tuple(float(r.value(y)) for r, y in zip(problem.agents, Y))
    return replace(sol, allocation=Y, total_risk=float(sum(risks)), per_agent_risk=risks, scheme=new_scheme)


def exactness_probe(problem: SharingProblem, X=None, box_schedule=(4.0, 8.0, 16.0, 32.0),
                    options: SolverOptions | None = None) -> ExactnessEvidence:
    """Solve under growing intercept boxes and report how the minima behave.

    Strictly decreasing minima whose minimizers sit on every box boundary
    are numerical evidence that the infimum is not attained.
    """
    options = options or SolverOptions()
    prob = problem if X is None else problem.with_target(X)
    check = precheck(prob, options.tol)
    minima, norms, saturated = [], [], []
    for M in box_schedule:
        sol = solve(prob, replace(options, box=float(M)), check)
        if check.witness is not None and check.witness_agent is not None:
            sol = _push_along(prob, sol, check.witness, check.witness_agent)
        minima.append(sol.total_risk)
        norm = sol.minimizer_norm
        norms.append(norm)
        saturated.append(bool(norm >= M * (1.0 - 1e-6)))
    diffs = np.diff(minima)
    strictly = bool(np.all(diffs < 0))
    stabilized = bool(len(minima) > 1 and abs(diffs[-1]) <= 1e-8 and not saturated[-1])
    return ExactnessEvidence(tuple(float(b) for b in box_schedule), tuple(minima), tuple(norms),
                             tuple(saturated), strictly, stabilized, check.witness)


@dataclass(frozen=True)
class PBasedVerdict:
    applicable: bool
    base: float
    permuted: float
    difference: float
    passed: bool


def is_measure_preserving(space: ScenarioSpace, sigma) -> bool:
    sigma = np.asarray(sigma, dtype=int)
    if sorted(sigma.tolist()) != list(range(space.size)):
        return False
    labels = np.array(space.labels, dtype=object)
    return bool(np.all(labels == labels[sigma]) and np.allclose(space.p, space.p[sigma], rtol=0, atol=1e-15))


def within_block_permutations(space: ScenarioSpace, count: int, seed: int = 0):
    """Random permutations moving atoms only among equal-weight atoms of one block."""
    rng = np.random.default_rng(seed)
    classes = {}
    for j, (lab, w) in enumerate(zip(space.labels, space.p)):
        classes.setdefault((lab, round(float(w), 15)), []).append(j)
    out = []
    for _ in range(count):
        sigma = np.arange(space.size)
        for members_ in classes.values():
            sigma[members_] = rng.permutation(members_)
        out.append(sigma)
    return out


def p_based_check(problem: SharingProblem, sigma, X=None, options: SolverOptions | None = None,
                  tol: float = 1e-6, base: SharingSolution | None = None) -> PBasedVerdict:
    """Re-solve at X o sigma and compare optimal totals."""
    X = problem.target if X is None else problem.space.check(X).astype(float)
    sigma = np.asarray(sigma, dtype=int)
    if not is_measure_preserving(problem.space, sigma):
        return PBasedVerdict(False, math.nan, math.nan, math.nan, False)
    options = options or SolverOptions()
    base_val = base.total_risk if base is not None else solve(problem.with_target(X), options).total_risk
    perm_val = solve(problem.with_target(X[sigma]), options).total_risk
    diff = abs(base_val - perm_val)
    return PBasedVerdict(True, base_val, perm_val, diff, diff <= tol)
