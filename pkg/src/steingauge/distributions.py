"""Component distributions and product sample spaces.

Every statistic in this package is a function of independent real components
``X_1, ..., X_n``.  This module owns the component laws: exact central
absolute moments (closed form where available, adaptive quadrature
otherwise), deterministic sampling, and an exact expectation oracle for
finite product supports.

Supported families:

* ``rademacher``            -- fair signs on {-1, +1}
* ``uniform_symmetric``     -- Uniform(-h, h)
* ``centered_exponential``  -- Exponential(rate) shifted to mean zero
* ``symmetric_pareto``      -- symmetric power-law tails, finite moments
                               only below the tail index
* ``finite_support``        -- arbitrary finite atom list
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import (
    InvalidOrder,
    MomentDoesNotExist,
    SupportTooLarge,
)

RADEMACHER = "rademacher"
UNIFORM_SYMMETRIC = "uniform_symmetric"
CENTERED_EXPONENTIAL = "centered_exponential"
SYMMETRIC_PARETO = "symmetric_pareto"
FINITE_SUPPORT = "finite_support"

FAMILIES = (
    RADEMACHER,
    UNIFORM_SYMMETRIC,
    CENTERED_EXPONENTIAL,
    SYMMETRIC_PARETO,
    FINITE_SUPPORT,
)

#: Hard cap on the size of a fully enumerated product support.
ENUMERATION_CAP = 2 ** 24

#: Relative accuracy target for one-dimensional moment quadratures.
QUAD_RTOL = 1e-12

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class DistributionSpec:
    """Immutable description of one component law.

    Use the module-level constructors (:func:`rademacher`,
    :func:`uniform_symmetric`, ...) rather than building instances by hand;
    they validate parameters and normalize the ``params`` payload.
    """

    family: str
    params: dict = field(default_factory=dict)
    label: str = ""

    # ------------------------------------------------------------------
    # basic moments
    # ------------------------------------------------------------------
    @property
    def mean(self) -> float:
        if self.family == FINITE_SUPPORT:
            vals, probs = self._atoms()
            return _fsum_dot(probs, vals)
        return 0.0  # the parametric families are centered on construction

    @property
    def variance(self) -> float:
        if self.family == RADEMACHER:
            return 1.0
        if self.family == UNIFORM_SYMMETRIC:
            h = self.params["half_width"]
            return h * h / 3.0
        if self.family == CENTERED_EXPONENTIAL:
            rate = self.params["rate"]
            return 1.0 / (rate * rate)
        if self.family == SYMMETRIC_PARETO:
            a = self.params["tail_index"]
            s = self.params["scale"]
            return a * s * s / (a - 2.0)
        vals, probs = self._atoms()
        mu = _fsum_dot(probs, vals)
        return _fsum_dot(probs, (vals - mu) ** 2)

    @property
    def moment_ceiling(self) -> float:
        """Supremum of orders p with E|X|^p finite (may be ``inf``)."""
        if self.family == SYMMETRIC_PARETO:
            return self.params["tail_index"]
        return math.inf

    @property
    def is_finite(self) -> bool:
        return self.family in (RADEMACHER, FINITE_SUPPORT)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Atoms and probabilities for finite families."""
        if not self.is_finite:
            raise ValueError(f"{self.family} has no finite support")
        return self._atoms()

    def _atoms(self) -> tuple[np.ndarray, np.ndarray]:
        if self.family == RADEMACHER:
            return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        pts = self.params["points"]
        vals = np.array([v for v, _ in pts], dtype=float)
        probs = np.array([p for _, p in pts], dtype=float)
        return vals, probs

    # ------------------------------------------------------------------
    # exact central moments
    # ------------------------------------------------------------------
    def central_moment(self, k: int) -> float:
        """Signed central moment E[(X - EX)^k] for small integer k."""
        if k < 0 or k != int(k):
            raise InvalidOrder(f"central moment order must be a nonnegative integer, got {k}")
        if k >= self.moment_ceiling:
            raise MomentDoesNotExist(
                f"{self.describe()} has no finite moment of order {k}"
            )
        if k == 0:
            return 1.0
        if k == 1:
            return 0.0
        if self.family in (RADEMACHER, UNIFORM_SYMMETRIC, SYMMETRIC_PARETO):
            # symmetric about the mean
            if k % 2 == 1:
                return 0.0
            return self.central_abs_moment(float(k))
        if self.family == CENTERED_EXPONENTIAL:
            # E[(E - 1/rate)^k]; for the unit rate this is the k-th
            # derangement-style integral, rescaled by rate^-k.
            rate = self.params["rate"]
            val = _centered_exp_signed_moment(k)
            return val / rate ** k
        vals, probs = self._atoms()
        mu = _fsum_dot(probs, vals)
        return _fsum_dot(probs, (vals - mu) ** k)

    def central_abs_moment(self, p: float) -> float:
        """Exact E|X - EX|^p.  See :func:`exact_abs_moment`."""
        return exact_abs_moment(self, p)

    def expect_central(
        self,
        fn: Callable[[np.ndarray], np.ndarray],
        breakpoints: Sequence[float] = (),
    ) -> float:
        """E[fn(X - EX)] to quadrature accuracy (exact for finite supports).

        ``breakpoints`` lists centered abscissae where ``fn`` is not smooth;
        continuous-family quadratures are split there.
        """
        if self.is_finite:
            vals, probs = self._atoms()
            mu = _fsum_dot(probs, vals)
            return _fsum_dot(probs, np.asarray(fn(vals - mu), dtype=float))
        if self.family == UNIFORM_SYMMETRIC:
            h = self.params["half_width"]
            dens = 1.0 / (2.0 * h)
            return _piecewise_quad(lambda y: fn(y) * dens, -h, h, breakpoints)
        if self.family == CENTERED_EXPONENTIAL:
            rate = self.params["rate"]
            mu = 1.0 / rate

            def integrand(y):
                return fn(y) * rate * np.exp(-rate * (y + mu))

            return _piecewise_quad(integrand, -mu, math.inf, breakpoints)
        if self.family == SYMMETRIC_PARETO:
            a = self.params["tail_index"]
            s = self.params["scale"]

            def integrand(y):
                return fn(y) * 0.5 * a * s ** a * np.abs(y) ** (-a - 1.0)

            left = _piecewise_quad(integrand, -math.inf, -s, breakpoints)
            right = _piecewise_quad(integrand, s, math.inf, breakpoints)
            return left + right
        raise ValueError(f"unknown family {self.family}")

    # ------------------------------------------------------------------
    # sampling
    # ------------------------------------------------------------------
    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == RADEMACHER:
            return (rng.integers(0, 2, size=size, dtype=np.int8) * 2 - 1).astype(float)
        if self.family == UNIFORM_SYMMETRIC:
            h = self.params["half_width"]
            return rng.uniform(-h, h, size=size)
        if self.family == CENTERED_EXPONENTIAL:
            rate = self.params["rate"]
            return (rng.standard_exponential(size) - 1.0) / rate
        if self.family == SYMMETRIC_PARETO:
            a = self.params["tail_index"]
            s = self.params["scale"]
            u = rng.random(size)
            signs = rng.integers(0, 2, size=size, dtype=np.int8) * 2 - 1
            return signs * s * u ** (-1.0 / a)
        vals, probs = self._atoms()
        edges = np.cumsum(probs)
        idx = np.searchsorted(edges, rng.random(size), side="right")
        return vals[np.minimum(idx, len(vals) - 1)]

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------
    def describe(self) -> str:
        if self.label:
            return self.label
        if self.params:
            inner = ", ".join(f"{k}={v}" for k, v in self.params.items())
            return f"{self.family}({inner})"
        return self.family

    def to_json(self) -> dict:
        return {"family": self.family, "params": dict(self.params), "label": self.label}

    @staticmethod
    def from_json(payload: dict) -> "DistributionSpec":
        family = payload.get("family")
        params = dict(payload.get("params", {}))
        label = payload.get("label", "")
        if family == RADEMACHER:
            return rademacher(label=label)
        if family == UNIFORM_SYMMETRIC:
            return uniform_symmetric(params["half_width"], label=label)
        if family == CENTERED_EXPONENTIAL:
            return centered_exponential(params["rate"], label=label)
        if family == SYMMETRIC_PARETO:
            return symmetric_pareto(params["tail_index"], params.get("scale"), label=label)
        if family == FINITE_SUPPORT:
            return finite_support([tuple(pt) for pt in params["points"]], label=label)
        raise ValueError(f"unknown family {family!r}")


# ----------------------------------------------------------------------
# constructors
# ----------------------------------------------------------------------

def rademacher(label: str = "") -> DistributionSpec:
    """Fair random sign on {-1, +1}."""
    return DistributionSpec(RADEMACHER, {}, label)


def uniform_symmetric(half_width: float, label: str = "") -> DistributionSpec:
    """Uniform law on (-half_width, half_width)."""
    if not half_width > 0:
        raise ValueError(f"half_width must be positive, got {half_width}")
    return DistributionSpec(UNIFORM_SYMMETRIC, {"half_width": float(half_width)}, label)


def centered_exponential(rate: float, label: str = "") -> DistributionSpec:
    """Exponential(rate) minus its mean 1/rate."""
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    return DistributionSpec(CENTERED_EXPONENTIAL, {"rate": float(rate)}, label)


def symmetric_pareto(
    tail_index: float, scale: float | None = None, label: str = ""
) -> DistributionSpec:
    """Symmetric Pareto: |X| has density a s^a |x|^(-a-1) on |x| > s.

    E|X|^p is finite exactly for p < tail_index, so the law provides a
    genuine stress test for relaxed-moment bounds.  ``tail_index`` must
    exceed 2 so the variance exists.  With ``scale=None`` the scale is set
    to sqrt((tail_index - 2) / tail_index), making the variance one.
    """
    if not tail_index > 2:
        raise ValueError(f"tail_index must exceed 2, got {tail_index}")
    if scale is None:
        scale = math.sqrt((tail_index - 2.0) / tail_index)
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return DistributionSpec(
        SYMMETRIC_PARETO,
        {"tail_index": float(tail_index), "scale": float(scale)},
        label,
    )


def finite_support(
    points: Sequence[tuple[float, float]], label: str = ""
) -> DistributionSpec:
    """Finite atom list given as (value, probability) pairs."""
    if len(points) < 2:
        raise ValueError("finite support needs at least two atoms")
    vals = [float(v) for v, _ in points]
    probs = [float(p) for _, p in points]
    if len(set(vals)) != len(vals):
        raise ValueError("support values must be distinct")
    if any(p <= 0 for p in probs):
        raise ValueError("atom probabilities must be positive")
    total = math.fsum(probs)
    if abs(total - 1.0) > _PROB_TOL:
        raise ValueError(f"atom probabilities sum to {total}, not 1")
    order = np.argsort(vals)
    pts = tuple((vals[i], probs[i]) for i in order)
    return DistributionSpec(FINITE_SUPPORT, {"points": pts}, label)


# ----------------------------------------------------------------------
# exact absolute moments
# ----------------------------------------------------------------------

def exact_abs_moment(spec: DistributionSpec, p: float) -> float:
    """Central absolute moment E|X - EX|^p, exact to quadrature accuracy.

    Closed forms are used for every family except the centered
    exponential, whose fractional-order moments reduce to a gamma term
    plus a smooth integral on [0, 1].

    Raises
    ------
    InvalidOrder
        if ``p < 1``.
    MomentDoesNotExist
        if ``p`` is at or above the family's moment ceiling.
    """
    if not p >= 1:
        raise InvalidOrder(f"moment order must be >= 1, got {p}")
    if p >= spec.moment_ceiling:
        raise MomentDoesNotExist(
            f"{spec.describe()} has E|X|^p = inf for p >= {spec.moment_ceiling}; got p={p}"
        )
    if spec.family == RADEMACHER:
        return 1.0
    if spec.family == UNIFORM_SYMMETRIC:
        h = spec.params["half_width"]
        return h ** p / (p + 1.0)
    if spec.family == CENTERED_EXPONENTIAL:
        rate = spec.params["rate"]
        # E|E - 1|^p = e^-1 * (Gamma(p+1) + int_0^1 v^p e^v dv) for unit rate
        tail = special.gamma(p + 1.0)
        body, err = integrate.quad(
            lambda v: v ** p * math.exp(v), 0.0, 1.0, epsabs=0.0, epsrel=QUAD_RTOL
        )
        _check_quad(body + tail, err, "centered exponential moment")
        return math.exp(-1.0) * (tail + body) / rate ** p
    if spec.family == SYMMETRIC_PARETO:
        a = spec.params["tail_index"]
        s = spec.params["scale"]
        return a * s ** p / (a - p)
    vals, probs = spec._atoms()
    mu = _fsum_dot(probs, vals)
    return _fsum_dot(probs, np.abs(vals - mu) ** p)


def _centered_exp_signed_moment(k: int) -> float:
    """E[(E - 1)^k] for a unit-rate exponential E, exact for integer k."""
    # binomial expansion against E[E^j] = j!
    terms = [
        math.comb(k, j) * math.factorial(j) * (-1.0) ** (k - j)
        for j in range(k + 1)
    ]
    return math.fsum(terms)


# ----------------------------------------------------------------------
# product spaces
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ProductSpace:
    """An ordered tuple of independent components."""

    components: tuple[DistributionSpec, ...]

    def __post_init__(self):
        if len(self.components) < 1:
            raise ValueError("a product space needs at least one component")

    @staticmethod
    def iid(spec: DistributionSpec, n: int) -> "ProductSpace":
        if n < 1:
            raise ValueError(f"need n >= 1 components, got {n}")
        return ProductSpace(tuple([spec] * n))

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def moment_ceiling(self) -> float:
        return min(c.moment_ceiling for c in self.components)

    def variances(self) -> np.ndarray:
        return np.array([c.variance for c in self.components])

    def support_size(self) -> int | None:
        """Total number of outcomes, or None if any component is continuous."""
        total = 1
        for comp in self.components:
            if not comp.is_finite:
                return None
            total *= len(comp._atoms()[0])
        return total

    @property
    def is_enumerable(self) -> bool:
        size = self.support_size()
        return size is not None and size <= ENUMERATION_CAP

    def to_json(self) -> list[dict]:
        return [c.to_json() for c in self.components]

    @staticmethod
    def from_json(payload: Sequence[dict]) -> "ProductSpace":
        return ProductSpace(tuple(DistributionSpec.from_json(p) for p in payload))


def sample(space: ProductSpace, seed: int, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. outcome rows, deterministically in ``seed``.

    Each component gets its own child stream of the seed, so the result is
    bit-identical however the caller schedules the work.
    """
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    children = np.random.SeedSequence(seed).spawn(space.n)
    out = np.empty((count, space.n), dtype=float)
    for j, (comp, child) in enumerate(zip(space.components, children)):
        out[:, j] = comp.draw(np.random.default_rng(child), count)
    return out


def enumerate_expectation(
    space: ProductSpace,
    g: Callable[[np.ndarray], float | np.ndarray],
    vectorized: bool = False,
    chunk: int = 1 << 16,
) -> float:
    """Exact E[g(X_1, ..., X_n)] over a finite product support.

    The support is walked in lexicographic chunks and the weighted terms
    are combined with compensated summation, so the result does not depend
    on chunk size.  With ``vectorized=True``, ``g`` receives a (rows, n)
    matrix and must return a length-``rows`` vector.

    Raises
    ------
    SupportTooLarge
        if the product support exceeds ``ENUMERATION_CAP`` outcomes.
    """
    size = space.support_size()
    if size is None:
        raise SupportTooLarge("enumeration requires finite-support components")
    if size > ENUMERATION_CAP:
        raise SupportTooLarge(
            f"product support has {size} outcomes, cap is {ENUMERATION_CAP}"
        )
    vals = [c._atoms()[0] for c in space.components]
    probs = [c._atoms()[1] for c in space.components]
    sizes = np.array([len(v) for v in vals], dtype=np.int64)

    def blocks(apply_g):
        for start in range(0, size, chunk):
            stop = min(start + chunk, size)
            rows = np.empty((stop - start, space.n), dtype=float)
            weights = np.ones(stop - start, dtype=float)
            rem = np.arange(start, stop, dtype=np.int64)
            for j in range(space.n - 1, -1, -1):
                idx = rem % sizes[j]
                rem = rem // sizes[j]
                rows[:, j] = vals[j][idx]
                weights *= probs[j][idx]
            if not apply_g:
                yield weights
            elif vectorized:
                yield weights * np.asarray(g(rows), dtype=float)
            else:
                yield weights * np.array([g(r) for r in rows], dtype=float)

    # one compensated pass over every term, so the chunk size only batches
    # evaluation; dividing by the accumulated mass cancels the rounding of
    # the weight products and keeps E[1] = 1 exactly
    total = math.fsum(t for block in blocks(True) for t in block)
    mass = math.fsum(w for block in blocks(False) for w in block)
    return total / mass


# ----------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------

def _fsum_dot(weights: np.ndarray, values: np.ndarray) -> float:
    return math.fsum(np.asarray(weights, float) * np.asarray(values, float))


def _piecewise_quad(fn, lo: float, hi: float, breakpoints: Sequence[float]) -> float:
    cuts = sorted({float(b) for b in breakpoints if lo < b < hi})
    edges = [lo, *cuts, hi]
    total = 0.0
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(
            fn, a, b, epsabs=1e-14, epsrel=QUAD_RTOL, limit=200
        )
        total += val
        err += e
    _check_quad(total, err, "component expectation")
    return total


def _check_quad(value: float, err: float, what: str) -> None:
    from .errors import QuadratureFailure

    if not math.isfinite(value):
        raise QuadratureFailure(f"{what} returned a non-finite value")
    if err > 1e-9 * max(1.0, abs(value)):
        raise QuadratureFailure(
            f"{what} quadrature error {err:.3e} exceeds tolerance at value {value:.6e}"
        )
