"""Compatibility, admissibility and interior tests for dual densities.

A density Z is compatible with rho when its conjugate is finite and the
only direction U of the asymptotic cone with E[Z U] = 0 is U = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConeOracleUnavailable, DomainNotPolyhedral
from .lp import LinearProgram
from .measures import (
    TOL,
    Entropic,
    EssentialSup,
    RiskMeasure,
    domain_contains,
    asymptotic_cone_contains,
    conjugate,
)

KERNEL_TOL = 1e-7


@dataclass(frozen=True)
class CompatibilityReport:
    candidate: np.ndarray
    conjugate_value: float
    conjugate_finite: bool
    cone_kernel_trivial: bool
    witness: np.ndarray | None

    @property
    def compatible(self) -> bool:
        return self.conjugate_finite and self.cone_kernel_trivial

    @property
    def witness_norm(self) -> float:
        return 0.0 if self.witness is None else float(np.max(np.abs(self.witness)))


def _kernel_directions(m, seed=20240611):
    rng = np.random.default_rng(seed)
    dirs = [np.ones(m)] + [rng.standard_normal(m) for _ in range(2)]
    return [s * d for d in dirs for s in (1.0, -1.0)]


def _kernel_witness(piece: RiskMeasure, Z, space):
    """Nonzero U in the recession cone of ``piece`` with E[Z U] = 0, or None.

    The cone meets the hyperplane in a polyhedral cone K; K is nontrivial
    iff some generic linear functional is positive on K within the unit box.
    """
    m = space.size
    best = None
    for c in _kernel_directions(m):
        lp = LinearProgram()
        U = lp.var(m, lb=-1.0, ub=1.0)
        lp.le(piece.recession_epigraph(lp, U), 0.0)
        lp.eq(U.dot(space.p * Z), 0.0)
        res = lp.solve(U.dot(c), sense="max")
        if res.ok and res.fun > KERNEL_TOL:
            u = res.x[:m]
            if best is None or np.max(np.abs(u)) > np.max(np.abs(best)):
                best = u
            break
    return best


def _tidy_witness(rho, U, Z, space):
    """Prefer the block average of U when it is still a kernel direction."""
    avg = space.conditional_expectation(U)
    for cand in (avg, U):
        scale = np.max(np.abs(cand))
        if scale <= KERNEL_TOL:
            continue
        cand = cand / scale
        cand[np.abs(cand) < 1e-12] = 0.0
        if abs(float(np.dot(space.p * Z, cand))) <= 1e-9 and asymptotic_cone_contains(rho, cand, 1e-9):
            return cand
    return U / np.max(np.abs(U))


def compatibility_check(rho: RiskMeasure, Z, tol: float = TOL) -> CompatibilityReport:
    space = rho.space
    Z = space.check(Z, "density").astype(float)
    dual = conjugate(rho, Z, tol)
    pieces = rho.cone_pieces()
    witness = None
    if not pieces:
        trivial = True
    elif all(_entropic_like(p) for p in pieces) and np.all(Z > tol):
        # cone is -L_+ on the support: E[Z U] = 0 with U <= 0 forces U = 0
        trivial = True
    else:
        for piece in pieces:
            u = _kernel_witness(piece, Z, space)
            if u is not None:
                witness = _tidy_witness(rho, u, Z, space)
                break
        trivial = witness is None
    return CompatibilityReport(Z, dual.conjugate_value, dual.finite, trivial, witness)


def _entropic_like(piece):
    return isinstance(piece, (Entropic, EssentialSup)) and piece.belief.equivalent


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    evidence: np.ndarray | None  # probe X with rho(X) != E_Q[X]
    gap: float
    compatibility: CompatibilityReport | None


def probe_family(space, n_random: int = 50, seed: int = 0):
    rng = np.random.default_rng(seed)
    probes = [space.indicator(b) for b in space.blocks]
    probes += list(np.eye(space.size))
    probes += list(rng.standard_normal((n_random, space.size)))
    return probes


def is_admissible(rho: RiskMeasure, tol: float = TOL, n_random: int = 50, seed: int = 0) -> AdmissibilityReport:
    """Whether rho differs from the expectation under its own belief.

    Decided on block and atom indicators plus seeded random probes; the
    report also carries the compatibility check of dQ/dP.
    """
    belief = rho.belief
    evidence, gap = None, 0.0
    for X in probe_family(rho.space, n_random, seed):
        d = abs(float(rho.value(X)) - belief.expectation(X))
        if d > tol:
            evidence, gap = X, d
            break
    try:
        comp = compatibility_check(rho, belief.density, tol)
    except ConeOracleUnavailable:
        comp = None
    return AdmissibilityReport(evidence is not None, evidence, gap, comp)


def mix_compatible(rho: RiskMeasure, Q_comp, Z_dual, lam: float, tol: float = TOL) -> CompatibilityReport:
    if not 0.0 < lam <= 1.0:
        raise ValueError("mixing weight must lie in (0, 1]")
    mix = lam * np.asarray(Q_comp, dtype=float) + (1.0 - lam) * np.asarray(Z_dual, dtype=float)
    return compatibility_check(rho, mix, tol)


def conditional_compatibility(rho: RiskMeasure, Z, space=None, tol: float = TOL) -> CompatibilityReport:
    """Report for the block average E[Z | blocks] (P-weighted)."""
    space = rho.space if space is None else space
    return compatibility_check(rho, space.conditional_expectation(Z), tol)


def dual_coordinate_ranges(rho: RiskMeasure):
    """Per-atom (min, max) of Z over the polyhedral dual domain."""
    m = rho.space.size
    lo, hi = np.empty(m), np.empty(m)
    for j in range(m):
        for sense, out in (("min", lo), ("max", hi)):
            lp = LinearProgram()
            Z = lp.var(m)
            rho.dual_domain(lp, Z)
            res = lp.solve(Z[j], sense=sense)
            if not res.ok:
                raise DomainNotPolyhedral(f"dual domain LP failed: {res.message}")
            out[j] = res.fun
    return lo, hi


def _vertex(rho, c):
    m = rho.space.size
    lp = LinearProgram()
    Z = lp.var(m)
    rho.dual_domain(lp, Z)
    res = lp.solve(Z.dot(c), sense="max")
    return res.x[:m]


def interior_membership(rho: RiskMeasure, Q, tol: float = TOL, eps: float = 1e-6) -> bool:
    """Whether Q + eps (Q - Z) stays in dom(rho*) for every Z in the domain.

    For domains cut out by coordinate bounds and the mean constraint this is
    exactly the strict inequality test on every non-degenerate coordinate.
    Minkowski-sum domains are additionally checked against the LP vertices
    maximizing each coordinate in both directions.
    """
    Q = rho.space.check(Q, "density").astype(float)
    lo, hi = dual_coordinate_ranges(rho)  # raises DomainNotPolyhedral
    if not domain_contains(rho, Q, tol):
        return False
    for j in range(Q.size):
        if hi[j] - lo[j] <= tol:
            continue
        if not (lo[j] + tol < Q[j] < hi[j] - tol):
            return False
    for j in range(Q.size):
        for s in (1.0, -1.0):
            v = _vertex(rho, s * np.eye(Q.size)[j])
            if not domain_contains(rho, Q + eps * (Q - v), tol):
                return False
    return True


def probe_densities(space, count: int = 100, seed: int = 0):
    """The constant density followed by ``count - 1`` seeded random densities."""
    rng = np.random.default_rng(seed)
    out = [np.ones(space.size)]
    for _ in range(count - 1):
        z = rng.gamma(1.0, size=space.size) + 1e-3
        out.append(z / float(np.dot(space.p, z)))
    return out


def compatible_probes(rho: RiskMeasure, densities, tol: float = TOL):
    """Indices of the densities certified compatible with rho."""
    return [k for k, Z in enumerate(densities) if compatibility_check(rho, Z, tol).compatible]
