"""Catalog of law-invariant risk measures on a finite scenario space.

Every measure carries the belief it is law invariant under.  Evaluation is
vectorized over leading axes: ``rho.value(Y)`` accepts shape ``(..., m)``.

Dual elements are densities with respect to the gauge measure P, so the
pairing is ``E[Z X] = sum(p * Z * X)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import (
    ConeOracleUnavailable,
    DomainNotPolyhedral,
    InvalidLevel,
    NotSupported,
    SpaceMismatch,
)
from .lp import Affine, LinearProgram, constant
from .order import quantile
from .space import Belief

TOL = 1e-9
INF = math.inf


def _upper_tail_coefficients(Y, w, tail):
    """Weights c with sum(c * Y) = mean of Y over its top ``tail`` mass.

    Sorting is stable and descending so ties resolve to lower atom index.
    """
    order = np.argsort(-Y, axis=-1, kind="stable")
    ws = w[order]
    before = np.cumsum(ws, axis=-1) - ws
    take = np.clip(tail - before, 0.0, ws)
    coef = np.zeros_like(Y, dtype=float)
    np.put_along_axis(coef, order, take / tail, axis=-1)
    return coef


class RiskMeasure:
    """Common interface; concrete kinds are the dataclasses below."""

    consistent = True

    # -- structure flags -------------------------------------------------
    @property
    def convex(self) -> bool:
        return True

    @property
    def homogeneous(self) -> bool:
        return False

    @property
    def polyhedral(self) -> bool:
        """Value representable by a linear program (epigraph)."""
        return False

    @property
    def space(self):
        return self.belief.space

    @property
    def normalized(self) -> bool:
        return abs(float(self.value(np.zeros(self.space.size)))) <= 1e-12

    @property
    def star_shaped(self) -> bool:
        return self.convex and self.normalized

    # -- evaluation ------------------------------------------------------
    def value(self, Y):
        raise NotImplementedError

    def subgradient(self, y) -> np.ndarray:
        raise NotSupported(f"{type(self).__name__} has no subgradient oracle")

    # -- duality ---------------------------------------------------------
    def conjugate_value(self, Z, tol=TOL) -> float:
        raise NotSupported(f"no conjugate for {type(self).__name__}")

    def recession(self, U) -> float:
        """lim_t rho(tU)/t for convex members (support function of dom rho*)."""
        raise ConeOracleUnavailable(f"no recession function for {type(self).__name__}")

    # LP hooks: return an Affine scalar t with t >= f(Y) for feasible aux vars
    def epigraph(self, lp: LinearProgram, Y: Affine) -> Affine:
        raise NotSupported(f"{type(self).__name__} is not LP representable")

    def recession_epigraph(self, lp: LinearProgram, U: Affine) -> Affine:
        raise ConeOracleUnavailable(f"no polyhedral cone for {type(self).__name__}")

    def dual_domain(self, lp: LinearProgram, Z: Affine) -> None:
        raise DomainNotPolyhedral(f"dual domain of {type(self).__name__} is not polyhedral")

    def cone_pieces(self, eq4=False):
        """Convex members whose recession cones make up the asymptotic cone.

        A cone is the union over pieces of {U : piece.recession(U) <= 0}.
        With ``eq4=False`` the ray cone {U : rho(tU) <= 0 for all t >= 0}
        is described; shifted members with positive constants drop out.
        """
        if self.convex and self.normalized:
            return [self]
        raise ConeOracleUnavailable(f"no cone oracle for {type(self).__name__}")

    def members(self):
        return [self]

    def describe(self) -> str:
        return type(self).__name__


def _weights(belief: Belief) -> np.ndarray:
    return belief.weights


def _is_density(Z, p, support, tol):
    return bool(
        np.all(Z >= -tol)
        and np.all(np.abs(Z[~support]) <= tol)
        and abs(float(np.dot(p, Z)) - 1.0) <= tol
    )


@dataclass(frozen=True, eq=False)
class Expectation(RiskMeasure):
    belief: Belief

    @property
    def homogeneous(self):
        return True

    @property
    def polyhedral(self):
        return True

    def value(self, Y):
        return np.asarray(Y, dtype=float) @ _weights(self.belief)

    def subgradient(self, y):
        return _weights(self.belief).copy()

    def conjugate_value(self, Z, tol=TOL):
        return 0.0 if np.max(np.abs(Z - self.belief.density)) <= tol else INF

    def recession(self, U):
        return float(self.value(U))

    def epigraph(self, lp, Y):
        return Y.dot(_weights(self.belief))

    recession_epigraph = epigraph

    def dual_domain(self, lp, Z):
        lp.eq(Z, self.belief.density)

    def describe(self):
        return f"E[{self.belief.name}]"


@dataclass(frozen=True, eq=False)
class EssentialSup(RiskMeasure):
    belief: Belief

    @property
    def homogeneous(self):
        return True

    @property
    def polyhedral(self):
        return True

    def _support(self):
        return _weights(self.belief) > 0

    def value(self, Y):
        Y = np.asarray(Y, dtype=float)
        return np.max(Y[..., self._support()], axis=-1)

    def subgradient(self, y):
        g = np.zeros(self.space.size)
        idx = np.flatnonzero(self._support())
        g[idx[np.argmax(np.asarray(y)[idx])]] = 1.0
        return g

    def conjugate_value(self, Z, tol=TOL):
        return 0.0 if _is_density(Z, self.space.p, self._support(), tol) else INF

    def recession(self, U):
        return float(self.value(U))

    def epigraph(self, lp, Y):
        t = lp.var(1)
        sup = self._support()
        lp.le(Y[sup] - t.repeat(int(sup.sum())), 0.0)
        return t

    recession_epigraph = epigraph

    def dual_domain(self, lp, Z):
        sup = self._support()
        lp.ge(Z[sup], 0.0)
        if (~sup).any():
            lp.eq(Z[~sup], 0.0)
        lp.eq(Z.dot(self.space.p), 1.0)

    def describe(self):
        return f"esssup[{self.belief.name}]"


@dataclass(frozen=True, eq=False)
class ExpectedShortfall(RiskMeasure):
    """Average of the upper ``1 - level`` tail of the loss under the belief."""

    level: float
    belief: Belief

    def __post_init__(self):
        if not 0.0 <= self.level < 1.0:
            raise InvalidLevel(f"ES level must lie in [0, 1), got {self.level}")

    @property
    def homogeneous(self):
        return True

    @property
    def polyhedral(self):
        return True

    @property
    def tail(self):
        return 1.0 - self.level

    def value(self, Y):
        Y = np.asarray(Y, dtype=float)
        w = _weights(self.belief)
        if Y.ndim == 2 and Y.shape[1] <= 8:
            # batches on small spaces: min over thresholds a of a + E[(Y - a)^+] / tail,
            # attained at one of the atom values, avoids a sort per row
            best = None
            for k in range(Y.shape[1]):
                a = Y[:, k : k + 1]
                cand = a[:, 0] + (np.maximum(Y - a, 0.0) @ w) / self.tail
                best = cand if best is None else np.minimum(best, cand)
            return best
        c = _upper_tail_coefficients(Y, w, self.tail)
        return np.sum(c * Y, axis=-1)

    def subgradient(self, y):
        return _upper_tail_coefficients(np.asarray(y, dtype=float), _weights(self.belief), self.tail)

    def upper_bound(self):
        """Pointwise cap on P-densities in the dual domain."""
        return self.belief.density / self.tail

    def conjugate_value(self, Z, tol=TOL):
        ok = (
            np.all(Z >= -tol)
            and np.all(Z <= self.upper_bound() + tol)
            and abs(float(np.dot(self.space.p, Z)) - 1.0) <= tol
        )
        return 0.0 if ok else INF

    def recession(self, U):
        return float(self.value(U))

    def epigraph(self, lp, Y):
        w = _weights(self.belief)
        alpha = lp.var(1)
        s = lp.var(self.space.size, lb=0.0)
        lp.ge(s - Y + alpha.repeat(self.space.size), 0.0)
        return alpha + s.dot(w) * (1.0 / self.tail)

    recession_epigraph = epigraph

    def dual_domain(self, lp, Z):
        lp.ge(Z, 0.0)
        lp.le(Z, self.upper_bound())
        lp.eq(Z.dot(self.space.p), 1.0)

    def describe(self):
        return f"ES_{self.level:g}[{self.belief.name}]"


@dataclass(frozen=True, eq=False)
class Entropic(RiskMeasure):
    beta: float
    belief: Belief

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("entropic risk aversion beta must be positive")

    def value(self, Y):
        Y = np.asarray(Y, dtype=float)
        # shift by the max over charged atoms so large beta*Y cannot overflow
        w = _weights(self.belief)
        a = np.where(w > 0, self.beta * Y, -np.inf)
        top = np.max(a, axis=-1, keepdims=True)
        return (np.log(np.exp(a - top) @ w) + top[..., 0]) / self.beta

    def subgradient(self, y):
        w = _weights(self.belief)
        a = self.beta * np.asarray(y, dtype=float)
        a = a - a[w > 0].max()
        e = w * np.exp(a)
        return e / e.sum()

    def conjugate_value(self, Z, tol=TOL):
        q = self.belief.density
        support = q > 0
        if not _is_density(Z, self.space.p, support, tol):
            return INF
        z = np.clip(Z, 0.0, None)
        pos = (z > 0) & support
        return float(np.dot(self.space.p[pos], z[pos] * np.log(z[pos] / q[pos]))) / self.beta

    def conjugate_gradient(self, z):
        q = self.belief.density
        return self.space.p * (np.log(np.maximum(z, 1e-300) / q) + 1.0) / self.beta

    def recession(self, U):
        return float(np.max(np.asarray(U)[_weights(self.belief) > 0]))

    def recession_epigraph(self, lp, U):
        return EssentialSup(self.belief).epigraph(lp, U)

    def describe(self):
        return f"Entropic_{self.beta:g}[{self.belief.name}]"


@dataclass(frozen=True, eq=False)
class SpectralTail(RiskMeasure):
    """Weighted average of tail averages: sum_k weight_k * ES_{level_k}.

    A band at level 1 is the essential supremum.
    """

    bands: tuple
    belief: Belief

    def __post_init__(self):
        bands = tuple((float(l), float(w)) for l, w in self.bands)
        if not bands:
            raise ValueError("SpectralTail needs at least one band")
        if any(not 0.0 <= l <= 1.0 for l, _ in bands) or any(w < 0 for _, w in bands):
            raise InvalidLevel("band levels must lie in [0, 1] with nonnegative weights")
        if abs(sum(w for _, w in bands) - 1.0) > 1e-12:
            raise ValueError("band weights must sum to 1")
        object.__setattr__(self, "bands", bands)

    def _parts(self):
        return [
            (w, EssentialSup(self.belief) if l >= 1.0 else ExpectedShortfall(l, self.belief))
            for l, w in self.bands
            if w > 0
        ]

    @property
    def homogeneous(self):
        return True

    @property
    def polyhedral(self):
        return True

    def value(self, Y):
        return sum(w * part.value(Y) for w, part in self._parts())

    def subgradient(self, y):
        return sum(w * part.subgradient(y) for w, part in self._parts())

    def conjugate_value(self, Z, tol=TOL):
        return 0.0 if domain_contains(self, Z, tol) else INF

    def recession(self, U):
        return float(self.value(U))

    def epigraph(self, lp, Y):
        return sum((part.epigraph(lp, Y) * w for w, part in self._parts()), constant(0.0))

    recession_epigraph = epigraph

    def dual_domain(self, lp, Z):
        _mixture_domain(lp, Z, self._parts())

    def describe(self):
        inner = ", ".join(f"{w:g}@{l:g}" for l, w in self.bands)
        return f"Spectral({inner})[{self.belief.name}]"


def _common_belief(members):
    first = members[0].belief
    for m in members[1:]:
        if not m.belief.same_as(first):
            raise SpaceMismatch("all members must share the same belief")
    return first


@dataclass(frozen=True, eq=False)
class Mixture(RiskMeasure):
    """Convex combination of convex members sharing one belief."""

    weights: tuple
    components: tuple
    belief: Belief = field(init=False)

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        components = tuple(self.components)
        if len(weights) != len(components) or not components:
            raise ValueError("Mixture needs one weight per component")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError("Mixture weights must be nonnegative and sum to 1")
        if not all(c.convex for c in components):
            raise ValueError("Mixture components must be convex")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "belief", _common_belief(components))

    def _parts(self):
        return [(w, c) for w, c in zip(self.weights, self.components) if w > 0]

    @property
    def homogeneous(self):
        return all(c.homogeneous for _, c in self._parts())

    @property
    def polyhedral(self):
        return all(c.polyhedral for _, c in self._parts())

    def value(self, Y):
        return sum(w * c.value(Y) for w, c in self._parts())

    def subgradient(self, y):
        return sum(w * c.subgradient(y) for w, c in self._parts())

    def conjugate_value(self, Z, tol=TOL):
        return _mixture_conjugate(self._parts(), Z, tol)

    def recession(self, U):
        return float(sum(w * c.recession(U) for w, c in self._parts()))

    def epigraph(self, lp, Y):
        return sum((c.epigraph(lp, Y) * w for w, c in self._parts()), constant(0.0))

    def recession_epigraph(self, lp, U):
        return sum((c.recession_epigraph(lp, U) * w for w, c in self._parts()), constant(0.0))

    def dual_domain(self, lp, Z):
        if not self.homogeneous:
            raise DomainNotPolyhedral("mixture with a non-homogeneous component")
        _mixture_domain(lp, Z, self._parts())

    def describe(self):
        return " + ".join(f"{w:g}*{c.describe()}" for w, c in self._parts())


@dataclass(frozen=True, eq=False)
class Shifted(RiskMeasure):
    """``inner + constant``; used as a member of MinOf (e.g. E[X] + 1)."""

    inner: RiskMeasure
    constant: float

    @property
    def belief(self):
        return self.inner.belief

    @property
    def convex(self):
        return self.inner.convex

    @property
    def homogeneous(self):
        return self.inner.homogeneous and self.constant == 0

    @property
    def polyhedral(self):
        return self.inner.polyhedral

    def value(self, Y):
        return self.inner.value(Y) + self.constant

    def subgradient(self, y):
        return self.inner.subgradient(y)

    def conjugate_value(self, Z, tol=TOL):
        return self.inner.conjugate_value(Z, tol) - self.constant

    def recession(self, U):
        return self.inner.recession(U)

    def epigraph(self, lp, Y):
        return self.inner.epigraph(lp, Y) + self.constant

    def recession_epigraph(self, lp, U):
        return self.inner.recession_epigraph(lp, U)

    def dual_domain(self, lp, Z):
        self.inner.dual_domain(lp, Z)

    def cone_pieces(self, eq4=False):
        if not self.inner.convex:
            raise ConeOracleUnavailable("shifted non-convex measure")
        if eq4 or self.constant <= 0:
            return [self.inner]
        return []

    def describe(self):
        return f"{self.inner.describe()} {self.constant:+g}"


@dataclass(frozen=True, eq=False)
class MinOf(RiskMeasure):
    """Pointwise minimum of finitely many convex (possibly shifted) members."""

    options: tuple
    belief: Belief = field(init=False)

    def __post_init__(self):
        options = tuple(self.options)
        if not options:
            raise ValueError("MinOf needs at least one member")
        if not all(o.convex for o in options):
            raise ValueError("MinOf members must be convex")
        object.__setattr__(self, "options", options)
        object.__setattr__(self, "belief", _common_belief(options))

    @property
    def convex(self):
        return len(self.options) == 1

    @property
    def homogeneous(self):
        return all(o.homogeneous for o in self.options)

    @property
    def polyhedral(self):
        return False

    @property
    def star_shaped(self):
        return self.normalized and all(o.normalized for o in self.options)

    def members(self):
        return list(self.options)

    def value(self, Y):
        return np.minimum.reduce([np.asarray(o.value(Y), dtype=float) for o in self.options])

    def active(self, y) -> int:
        vals = [float(o.value(y)) for o in self.options]
        return int(np.argmin(vals))

    def subgradient(self, y):
        return self.options[self.active(y)].subgradient(y)

    def conjugate_value(self, Z, tol=TOL):
        return max(o.conjugate_value(Z, tol) for o in self.options)

    def dual_domain(self, lp, Z):
        for o in self.options:
            o.dual_domain(lp, Z)

    def cone_pieces(self, eq4=False):
        pieces = []
        for o in self.options:
            pieces.extend(o.cone_pieces(eq4=eq4) if isinstance(o, Shifted) else [o])
        return pieces

    def describe(self):
        return "min{" + ", ".join(o.describe() for o in self.options) + "}"


@dataclass(frozen=True, eq=False)
class StarHull(RiskMeasure):
    inner: RiskMeasure
    s_min: float = 1e-4

    @property
    def belief(self):
        return self.inner.belief

    @property
    def convex(self):
        return self.inner.convex

    @property
    def homogeneous(self):
        return self.inner.homogeneous

    @property
    def polyhedral(self):
        return self.inner.star_shaped and self.inner.polyhedral

    @property
    def star_shaped(self):
        return True

    def members(self):
        return self.inner.members() if self.inner.star_shaped else [self]

    def value(self, Y):
        if self.inner.star_shaped:
            return self.inner.value(Y)
        Y = np.asarray(Y, dtype=float)
        flat = Y.reshape(-1, Y.shape[-1])
        out = np.array([star_hull_evaluate(self.inner, y, s_min=self.s_min) for y in flat])
        return out.reshape(Y.shape[:-1]) if Y.ndim > 1 else float(out[0])

    def subgradient(self, y):
        if self.inner.star_shaped:
            return self.inner.subgradient(y)
        raise NotSupported("star hull of a non-star-shaped measure has no subgradient oracle")

    def conjugate_value(self, Z, tol=TOL):
        return self.inner.conjugate_value(Z, tol)

    def epigraph(self, lp, Y):
        if self.inner.star_shaped:
            return self.inner.epigraph(lp, Y)
        raise NotSupported("star hull is not LP representable")

    def dual_domain(self, lp, Z):
        self.inner.dual_domain(lp, Z)

    def cone_pieces(self, eq4=False):
        # the hull is star shaped, so its ray cone is the limit cone of the inner set
        return self.inner.cone_pieces(eq4=True)

    def describe(self):
        return f"star({self.inner.describe()})"


@dataclass(frozen=True, eq=False)
class ValueAtRisk(RiskMeasure):
    """inf{x : Q(X <= x) > 1 - alpha}; not SSD-consistent, kept for negative tests."""

    alpha: float
    belief: Belief
    consistent = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidLevel("VaR alpha must lie in (0, 1)")

    @property
    def convex(self):
        return False

    @property
    def homogeneous(self):
        return True

    @property
    def star_shaped(self):
        return True

    def value(self, Y):
        Y = np.asarray(Y, dtype=float)
        w = _weights(self.belief)
        order = np.argsort(Y, axis=-1, kind="stable")
        cdf = np.cumsum(w[order], axis=-1)
        k = np.argmax(cdf > 1.0 - self.alpha + 1e-14, axis=-1)
        return np.take_along_axis(np.take_along_axis(Y, order, axis=-1), k[..., None], axis=-1)[..., 0]

    def cone_pieces(self, eq4=False):
        raise ConeOracleUnavailable("VaR has no analytic cone")

    def describe(self):
        return f"VaR_{self.alpha:g}[{self.belief.name}]"


# --------------------------------------------------------------------------
# dual-domain helpers


def _mixture_domain(lp, Z, parts):
    pieces = []
    for w, c in parts:
        Zk = lp.var(Z.size)
        c.dual_domain(lp, Zk)
        pieces.append(Zk * w)
    lp.eq(sum(pieces[1:], pieces[0]) - Z, 0.0)


def domain_contains(rho, Z, tol=TOL) -> bool:
    """LP test of Z in dom(rho*) with an L-infinity slack of at most ``tol``."""
    lp = LinearProgram()
    zvar = lp.var(Z.size)
    rho.dual_domain(lp, zvar)
    slack = lp.var(1, lb=0.0)
    lp.le(zvar - Z - slack.repeat(Z.size), 0.0)
    lp.le(Z - zvar - slack.repeat(Z.size), 0.0)
    res = lp.solve(slack)
    return res.ok and res.fun <= tol


def _flatten_mixture(parts, scale=1.0, shift=0.0):
    out = []
    for w, c in parts:
        if isinstance(c, Mixture):
            sub, s = _flatten_mixture(c._parts(), scale * w)
            out.extend(sub)
            shift += s
        elif isinstance(c, Shifted) and c.inner.convex:
            shift += scale * w * c.constant
            sub, s = _flatten_mixture([(1.0, c.inner)], scale * w)
            out.extend(sub)
            shift += s
        else:
            out.append((scale * w, c))
    return out, shift


def _mixture_conjugate(parts, Z, tol):
    """Inf-convolution of scaled conjugates: inf sum w_k rho_k*(Z_k) over sum w_k Z_k = Z."""
    parts, shift = _flatten_mixture(parts)
    p = parts[0][1].space.p
    fixed = [(w, c) for w, c in parts if isinstance(c, Expectation)]
    free = [(w, c) for w, c in parts if not isinstance(c, Expectation)]
    rest = np.asarray(Z, dtype=float) - sum((w * c.belief.density for w, c in fixed), np.zeros_like(Z))
    if not free:
        return (0.0 if np.max(np.abs(rest)) <= tol else INF) - shift
    if len(free) == 1:
        w, c = free[0]
        return w * c.conjugate_value(rest / w, tol / w) - shift
    smooth = [(w, c) for w, c in free if not c.homogeneous]
    if not smooth:
        lp = LinearProgram()
        zvar = lp.var(len(Z))
        _mixture_domain(lp, zvar, free)
        slack = lp.var(1, lb=0.0)
        lp.le(zvar - rest - slack.repeat(len(Z)), 0.0)
        lp.le(rest - zvar - slack.repeat(len(Z)), 0.0)
        res = lp.solve(slack)
        return (0.0 if res.ok and res.fun <= tol else INF) - shift
    return _mixture_conjugate_numeric(free, rest, p, tol) - shift


def _mixture_conjugate_numeric(free, rest, p, tol):
    """General case with several non-singleton components (SLSQP)."""
    m = rest.size
    k = len(free)
    if np.any(rest < -tol) or abs(float(np.dot(p, rest)) - sum(w for w, _ in free)) > tol:
        return INF

    def split(x):
        return x.reshape(k, m)

    def objective(x):
        zs = split(x)
        total = 0.0
        for (w, c), z in zip(free, zs):
            if not c.homogeneous:
                total += w * c.conjugate_value(np.clip(z, 0.0, None), 1e-6)
        return total

    cons = [{"type": "eq", "fun": lambda x: sum(w * z for (w, _), z in zip(free, split(x))) - rest}]
    for j, (w, c) in enumerate(free):
        cons.append({"type": "eq", "fun": lambda x, j=j: float(np.dot(p, split(x)[j])) - 1.0})
        if isinstance(c, ExpectedShortfall):
            cons.append({"type": "ineq", "fun": lambda x, j=j, c=c: c.upper_bound() - split(x)[j]})
    x0 = np.tile(rest / sum(w for w, _ in free), k)
    with np.errstate(invalid="ignore"):  # finite differences across an infinite conjugate
        res = minimize(objective, x0, method="SLSQP", bounds=[(0.0, None)] * (k * m), constraints=cons,
                       options={"ftol": 1e-12, "maxiter": 500})

    def feasible(x):
        if np.any(x < -1e-9):
            return False
        return all(np.all(np.abs(c["fun"](x)) <= 1e-7) if c["type"] == "eq" else np.all(c["fun"](x) >= -1e-7)
                   for c in cons)

    # SLSQP can stop with a failure flag at an already optimal start; keep any feasible point
    values = [objective(x) for x in (res.x, x0) if feasible(x)]
    values = [v for v in values if math.isfinite(v)]
    return float(min(values)) if values else INF


# --------------------------------------------------------------------------
# module-level API


@dataclass(frozen=True)
class DualElement:
    density: np.ndarray
    conjugate_value: float

    @property
    def finite(self):
        return math.isfinite(self.conjugate_value)


def _check_space(rho, X):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != rho.space.size:
        raise SpaceMismatch(f"variable has {X.shape[-1]} atoms, measure expects {rho.space.size}")
    return X


def evaluate(rho: RiskMeasure, X):
    X = _check_space(rho, X)
    v = rho.value(X)
    return float(v) if np.ndim(v) == 0 else v


def acceptance(rho: RiskMeasure, X, tol: float = TOL) -> bool:
    return bool(evaluate(rho, X) <= tol)


def conjugate(rho: RiskMeasure, Z, tol: float = TOL) -> DualElement:
    Z = _check_space(rho, Z)
    return DualElement(Z.copy(), float(rho.conjugate_value(Z, tol)))


def star_hull_evaluate(rho: RiskMeasure, X, s_min: float = 1e-4, tol: float = 1e-9) -> float:
    """inf{m : X - m in s*A for some s in [0, 1]} by bisection over m.

    Writing t = 1/s, X - m is in s*A iff rho(t(X - m)) <= 0; t is scanned on a
    geometric grid over [1, 1/s_min] and the best grid point refined.
    """
    X = _check_space(rho, X)
    ts = np.geomspace(1.0, 1.0 / s_min, 121)

    def accepted(m):
        Y = X - m
        if np.max(np.abs(Y)) <= tol:
            return True
        vals = rho.value(ts[:, None] * Y[None, :])
        k = int(np.argmin(vals))
        if vals[k] <= 0.0:
            return True
        lo, hi = np.log(ts[max(k - 1, 0)]), np.log(ts[min(k + 1, ts.size - 1)])
        if hi <= lo:
            return False
        res = minimize_scalar(lambda u: float(rho.value(np.exp(u) * Y)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        return res.fun <= 0.0

    hi = float(rho.value(X))
    lo = float(np.min(X))
    if accepted(lo):
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if accepted(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class ConeVerdict:
    contains: bool
    method: str  # "analytic" or "numerical"


def ray_test(rho: RiskMeasure, U, ts, tol: float = TOL) -> bool:
    """Whether rho(tU) <= tol at every t in ``ts``."""
    U = _check_space(rho, U)
    vals = rho.value(np.asarray(ts, dtype=float)[:, None] * U[None, :])
    return bool(np.all(vals <= tol))


def cone_membership(rho: RiskMeasure, U, tol: float = TOL, t_max: float = 1e6) -> ConeVerdict:
    U = _check_space(rho, U)
    try:
        pieces = rho.cone_pieces()
    except ConeOracleUnavailable:
        if not rho.star_shaped:
            raise NotSupported(f"{rho.describe()} is neither star shaped nor in the cone catalog")
        ts = np.concatenate([[0.0], np.geomspace(1e-3, t_max, 64)])
        return ConeVerdict(ray_test(rho, U, ts, tol), "numerical")
    return ConeVerdict(any(piece.recession(U) <= tol for piece in pieces), "analytic")


def asymptotic_cone_contains(rho: RiskMeasure, U, tol: float = TOL) -> bool:
    return cone_membership(rho, U, tol).contains


def expectation_under(belief: Belief, X) -> float:
    return belief.expectation(X)


def quantile_under(rho: RiskMeasure, X, u: float) -> float:
    return quantile(X, rho.belief, u)
