"""Coordinate difference operators and sensitivity profiles.

For a statistic ``F(X_1, ..., X_n)`` of independent components, the
difference operator along coordinate ``k`` subtracts the conditional mean
given the other coordinates::

    D_k F = F - E_k[F]          (E_k integrates coordinate k only)

Its filtration projection mixes the conditional means given the past and
the future::

    D~_k(w) F = w * E[D_k F | X_0..X_k] + (1 - w) * E[D_k F | X_k..X_{n-1}]

Two derived statistics drive every bound in :mod:`steingauge.bounds`:

* the quadratic sensitivity  ``Z2 = sum_k D_k F * D~_k(alpha) F``, whose
  mean is Var(F);
* the cubic correction ``Z3 = sum_k D_k F * D~_k(beta) Z2
  - 0.5 * sum_k (|D_k F|^2 + E_k|D_k F|^2) * D~_k(alpha) F``, whose mean
  is E[F^3] / 2 for centered F.

Everything here is exact on enumerable spaces (full tensor calculus with
compensated summation) and falls back to seeded Monte Carlo otherwise.
Coordinate indices are 0-based throughout.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .distributions import ProductSpace, ENUMERATION_CAP
from .errors import (
    ArityMismatch,
    BudgetMissing,
    InvalidOrder,
    MissingProfileEntry,
    MomentDoesNotExist,
    SupportTooLarge,
)

# ----------------------------------------------------------------------
# profile entry keys
# ----------------------------------------------------------------------
#: E|D_k F|^(1+delta)
DF_1 = "df_1"
#: E|D_k F|^(2+delta)
DF_2 = "df_2"
#: E|D_k F|^(3+delta)
DF_3 = "df_3"
#: E|D_k Z2|^((2+delta)/2)
DZ2_D1 = "dz2_d1"
#: E|D_k Z2|^((3+delta)/2)
DZ2_D2 = "dz2_d2"
#: E|D_k Z3|^((3+delta)/3)
DZ3 = "dz3"
#: E[(|D_k F|^delta + E_k|D_k F|^delta) * |D~_k(beta) Z2|]
MIX_D1_Z = "mix_d1_z"
#: E[(|D_k F|^(1+delta) + E_k|D_k F|^(1+delta)) * |D~_k(alpha) F|]
MIX_D1_F = "mix_d1_f"
#: E[(|D_k F|^delta + E_k|D_k F|^delta) * |D~_k(gamma) Z3|]
MIX_D2_Z3 = "mix_d2_z3"
#: E[(|D_k F|^(1+delta) + E_k|D_k F|^(1+delta)) * |D~_k(beta) Z2|]
MIX_D2_Z2 = "mix_d2_z2"
#: E[(|D_k F|^(2+delta) + E_k|D_k F|^(2+delta)) * |D~_k(alpha) F|]
MIX_D2_F = "mix_d2_f"

D1_KEYS = (DF_1, DF_2, DZ2_D1, MIX_D1_Z, MIX_D1_F)
D2_KEYS = D1_KEYS + (DF_3, DZ2_D2, DZ3, MIX_D2_Z3, MIX_D2_Z2, MIX_D2_F)

LEVELS = ("d1", "d2")
MODES = ("exact", "closed_form_mc", "nested_mc")


def _check_unit(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise InvalidOrder(f"{name} must lie in [0, 1], got {value}")
    return value


@dataclass(frozen=True)
class AlphaParams:
    """Filtration weights for the projected differences.

    ``alpha`` weights the projection applied to F itself, ``beta`` the one
    applied to the quadratic sensitivity, ``gamma`` the one applied to the
    cubic correction.
    """

    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 0.5

    def __post_init__(self):
        _check_unit("alpha", self.alpha)
        _check_unit("beta", self.beta)
        _check_unit("gamma", self.gamma)

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


@dataclass(frozen=True)
class MCBudget:
    """Sampling budget for the Monte Carlo profile paths.

    ``outer`` counts primary sample rows, ``inner`` resamples per
    first-level conditional expectation, ``inner_nested`` resamples per
    conditional inside nested evaluations of the derived statistics.
    Batch means over ``batches`` groups supply standard errors.
    """

    outer: int = 10_000
    inner: int = 256
    inner_nested: int = 32
    batches: int = 40

    def __post_init__(self):
        if self.outer < self.batches:
            raise ValueError("outer budget must cover at least one row per batch")
        if self.batches < 30:
            raise ValueError("need at least 30 batches for standard errors")
        if self.inner < 4 or self.inner % 2:
            raise ValueError("inner budget must be an even count >= 4")
        if self.inner_nested < 2:
            raise ValueError("inner_nested must be >= 2")

    def to_json(self) -> dict:
        return {
            "outer": self.outer,
            "inner": self.inner,
            "inner_nested": self.inner_nested,
            "batches": self.batches,
        }


@dataclass(frozen=True)
class Estimate:
    """A point value with an attached standard error (zero if exact)."""

    value: float
    std_error: float = 0.0

    def __float__(self) -> float:
        return self.value


@dataclass
class DiffProfile:
    """Per-coordinate moment summaries of a statistic's differences.

    ``entries`` maps the module-level key constants to length-n arrays;
    ``std_errors`` carries matching Monte Carlo standard errors (all zero
    in exact mode).  ``ef3`` is the central third moment of F and ``ez3``
    the mean of the cubic correction; the identity ``ef3 == 2 * ez3``
    holds exactly for the exact mode and within noise otherwise.
    """

    n: int
    delta: float
    params: AlphaParams
    sigma: float
    mode: str
    entries: dict[str, np.ndarray]
    std_errors: dict[str, np.ndarray]
    ef3: float = math.nan
    ez3: float = math.nan
    sigma_se: float = 0.0
    ef3_se: float = 0.0
    ez3_se: float = 0.0
    meta: dict = field(default_factory=dict)

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if k not in self.entries]
        if missing:
            raise MissingProfileEntry(
                f"profile (mode={self.mode}) lacks entries {missing}; "
                f"recompute with the appropriate level"
            )

    def total(self, key: str) -> float:
        self.require(key)
        return math.fsum(self.entries[key])

    def total_se(self, key: str) -> float:
        se = self.std_errors.get(key)
        if se is None:
            return 0.0
        return float(np.sqrt(np.sum(np.square(se))))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "delta": self.delta,
            "params": self.params.to_json(),
            "sigma": self.sigma,
            "sigma_se": self.sigma_se,
            "mode": self.mode,
            "ef3": self.ef3,
            "ef3_se": self.ef3_se,
            "ez3": self.ez3,
            "ez3_se": self.ez3_se,
            "entries": {k: list(map(float, v)) for k, v in self.entries.items()},
            "std_errors": {k: list(map(float, v)) for k, v in self.std_errors.items()},
            "meta": self.meta,
        }


# ----------------------------------------------------------------------
# exact tensor engine
# ----------------------------------------------------------------------

class ExactEngine:
    """Exact conditional-expectation calculus on a finite product support.

    Functions on the space are ndarrays of shape ``(s_0, ..., s_{n-1})``,
    one axis per coordinate.  Reduced tensors keep singleton axes so that
    arithmetic broadcasts; :meth:`expect` finishes every expectation with
    compensated summation.
    """

    def __init__(self, space: ProductSpace):
        size = space.support_size()
        if size is None:
            raise SupportTooLarge("exact engine requires finite-support components")
        if size > ENUMERATION_CAP:
            raise SupportTooLarge(
                f"product support has {size} outcomes, cap is {ENUMERATION_CAP}"
            )
        self.space = space
        self.n = space.n
        self.values = [c._atoms()[0] for c in space.components]
        self.probs = [c._atoms()[1] for c in space.components]
        self.shape = tuple(len(v) for v in self.values)
        self.size = size
        weight = np.ones(())
        for p in self.probs:
            weight = np.multiply.outer(weight, p)
        self.weight = weight.reshape(self.shape)

    # -- evaluation ----------------------------------------------------
    def rows(self, start: int, stop: int) -> np.ndarray:
        """Outcome rows for flat C-order indices [start, stop)."""
        sizes = np.array(self.shape, dtype=np.int64)
        flat = np.arange(start, stop, dtype=np.int64)
        out = np.empty((stop - start, self.n), dtype=float)
        rem = flat
        for j in range(self.n - 1, -1, -1):
            idx = rem % sizes[j]
            rem = rem // sizes[j]
            out[:, j] = self.values[j][idx]
        return out

    def tensor(self, batch_fn: Callable[[np.ndarray], np.ndarray],
               chunk: int = 1 << 16) -> np.ndarray:
        out = np.empty(self.size, dtype=float)
        for start in range(0, self.size, chunk):
            stop = min(start + chunk, self.size)
            out[start:stop] = np.asarray(batch_fn(self.rows(start, stop)), dtype=float)
        return out.reshape(self.shape)

    # -- expectations ---------------------------------------------------
    def expect(self, t: np.ndarray) -> float:
        full = np.broadcast_to(t, self.shape)
        return math.fsum((full * self.weight).ravel())

    def integrate_out(self, t: np.ndarray, axes: Sequence[int]) -> np.ndarray:
        for ax in axes:
            if t.shape[ax] == 1:
                continue  # already constant along this axis
            t = np.tensordot(t, self.probs[ax], axes=([ax], [0]))
            t = np.expand_dims(t, ax)
        return t

    def e_k(self, t: np.ndarray, k: int) -> np.ndarray:
        """E[t | all coordinates except k]."""
        return self.integrate_out(t, [k])

    def diff_k(self, t: np.ndarray, k: int) -> np.ndarray:
        """Difference operator along coordinate k."""
        return t - self.e_k(t, k)

    def cond_prefix(self, t: np.ndarray, k: int) -> np.ndarray:
        """E[t | X_0, ..., X_k]: integrates coordinates k+1..n-1."""
        return self.integrate_out(t, range(k + 1, self.n))

    def cond_suffix(self, t: np.ndarray, k: int) -> np.ndarray:
        """E[t | X_k, ..., X_{n-1}]: integrates coordinates 0..k-1."""
        return self.integrate_out(t, range(0, k))

    def diff_weighted(self, t: np.ndarray, k: int, weight: float) -> np.ndarray:
        """Projected difference D~_k(weight) applied to t."""
        d = self.diff_k(t, k)
        return weight * self.cond_prefix(d, k) + (1.0 - weight) * self.cond_suffix(d, k)

    # -- derived statistics ----------------------------------------------
    def quad_sensitivity(self, f: np.ndarray, alpha: float) -> np.ndarray:
        """Z2 tensor: sum_k D_k f * D~_k(alpha) f."""
        out = np.zeros(self.shape)
        for k in range(self.n):
            out += self.diff_k(f, k) * self.diff_weighted(f, k, alpha)
        return out

    def cubic_correction(
        self, f: np.ndarray, alpha: float, beta: float,
        z2: np.ndarray | None = None,
    ) -> np.ndarray:
        """Z3 tensor; E[Z3] = E[F^3] / 2 for centered f."""
        if z2 is None:
            z2 = self.quad_sensitivity(f, alpha)
        out = np.zeros(self.shape)
        for k in range(self.n):
            df = self.diff_k(f, k)
            out += df * self.diff_weighted(z2, k, beta)
            out -= 0.5 * (df * df + self.e_k(df * df, k)) * self.diff_weighted(f, k, alpha)
        return out


# ----------------------------------------------------------------------
# point operations
# ----------------------------------------------------------------------

def _as_row(model, x) -> np.ndarray:
    row = np.asarray(x, dtype=float).reshape(-1)
    if row.size != model.space.n:
        raise ArityMismatch(
            f"point has {row.size} coordinates, statistic expects {model.space.n}"
        )
    return row


def _check_k(model, k: int) -> int:
    if not 0 <= k < model.space.n:
        raise ArityMismatch(f"coordinate {k} out of range for arity {model.space.n}")
    return int(k)


def _point_block_expect(model, row: np.ndarray, keep: Sequence[int]) -> float:
    """E[F | X_j = row_j for j in keep], exact over finite supports."""
    free = [j for j in range(model.space.n) if j not in set(keep)]
    if not free:
        return float(model.evaluate_batch(row[None, :])[0])
    comps = model.space.components
    for j in free:
        if not comps[j].is_finite:
            raise SupportTooLarge(
                "exact conditional expectations need finite-support coordinates"
            )
    grids = [comps[j]._atoms() for j in free]
    sizes = [len(g[0]) for g in grids]
    total = int(np.prod(sizes))
    if total > ENUMERATION_CAP:
        raise SupportTooLarge(f"conditional enumeration has {total} outcomes")
    rows = np.tile(row, (total, 1))
    weights = np.ones(total)
    rem = np.arange(total, dtype=np.int64)
    for j, (vals, probs), s in zip(free[::-1], grids[::-1], sizes[::-1]):
        idx = rem % s
        rem = rem // s
        rows[:, j] = vals[idx]
        weights *= probs[idx]
    return math.fsum(weights * np.asarray(model.evaluate_batch(rows), dtype=float))


def _point_diff(model, row: np.ndarray, k: int) -> float:
    return float(model.evaluate_batch(row[None, :])[0]) - _point_block_expect(
        model, row, [j for j in range(model.space.n) if j != k]
    )


def diff_alpha(model, x, k: int, alpha: float,
               budget: MCBudget | None = None, seed: int = 0) -> Estimate:
    """Projected difference D~_k(alpha) F at the point x.

    Exact through closed-form differences when the statistic provides
    them, exact by enumeration on finite supports otherwise, and nested
    Monte Carlo (requires ``budget``) as a last resort.
    """
    row = _as_row(model, x)
    k = _check_k(model, k)
    alpha = _check_unit("alpha", alpha)
    cf = model.closed_form
    if cf is not None:
        X = row[None, :]
        val = alpha * cf.cond_forward(X, k)[0] + (1 - alpha) * cf.cond_backward(X, k)[0]
        return Estimate(float(val))
    if _finite_coords(model, range(model.space.n)):
        n = model.space.n
        # E[D_k F | past] = E[F | X_0..X_k] - E[F | X_0..X_{k-1}]
        fwd = _point_block_expect(model, row, range(k + 1)) - _point_block_expect(
            model, row, range(k)
        )
        bwd = _point_block_expect(model, row, range(k, n)) - _point_block_expect(
            model, row, range(k + 1, n)
        )
        return Estimate(alpha * fwd + (1 - alpha) * bwd)
    if budget is None:
        raise BudgetMissing(
            "nested Monte Carlo evaluation needs an explicit MCBudget"
        )
    return _nested_point_diff_alpha(model, row, k, alpha, budget, seed)


def diff_plain(model, x, k: int) -> Estimate:
    """Unprojected difference D_k F at the point x (exact paths only)."""
    row = _as_row(model, x)
    k = _check_k(model, k)
    cf = model.closed_form
    if cf is not None:
        return Estimate(float(cf.diff(row[None, :], k)[0]))
    if model.space.components[k].is_finite:
        return Estimate(_point_diff(model, row, k))
    raise SupportTooLarge(
        "plain difference at a point needs a closed form or a finite coordinate"
    )


def z_alpha(model, x, alpha: float,
            budget: MCBudget | None = None, seed: int = 0) -> Estimate:
    """Quadratic sensitivity Z2 at the point x."""
    row = _as_row(model, x)
    alpha = _check_unit("alpha", alpha)
    if model.z2_pointwise is not None:
        return Estimate(float(model.z2_pointwise(row[None, :], alpha)[0]))
    cf = model.closed_form
    if cf is not None:
        X = row[None, :]
        terms = [
            float(cf.diff(X, l)[0])
            * (alpha * cf.cond_forward(X, l)[0] + (1 - alpha) * cf.cond_backward(X, l)[0])
            for l in range(model.space.n)
        ]
        return Estimate(math.fsum(terms))
    if _finite_coords(model, range(model.space.n)):
        terms = []
        for l in range(model.space.n):
            d = _point_diff(model, row, l)
            terms.append(d * diff_alpha(model, row, l, alpha).value)
        return Estimate(math.fsum(terms))
    if budget is None:
        raise BudgetMissing("nested Monte Carlo evaluation needs an explicit MCBudget")
    ev = _NestedEval(model, budget, np.random.default_rng(np.random.SeedSequence(seed)))
    reps = np.array([ev.z2_pair(row[None, :], alpha)[0][0]
                     for _ in range(budget.batches)])
    return Estimate(float(reps.mean()),
                    float(reps.std(ddof=1) / math.sqrt(len(reps))))


def z_alpha_beta(model, x, alpha: float, beta: float,
                 budget: MCBudget | None = None, seed: int = 0) -> Estimate:
    """Cubic correction Z3 at the point x."""
    row = _as_row(model, x)
    alpha = _check_unit("alpha", alpha)
    beta = _check_unit("beta", beta)
    if model.z3_pointwise is not None:
        val = model.z3_pointwise(row[None, :], alpha, beta)
        if val is not None:
            return Estimate(float(val[0]))
    if _finite_coords(model, range(model.space.n)):
        n = model.space.n

        def z2_at(r: np.ndarray) -> float:
            return z_alpha(model, r, alpha).value

        terms = []
        for k in range(n):
            dk = _point_diff(model, row, k)
            fwd = _block_fn_expect(model, row, range(k + 1), z2_at) - _block_fn_expect(
                model, row, range(k), z2_at
            )
            bwd = _block_fn_expect(model, row, range(k, n), z2_at) - _block_fn_expect(
                model, row, range(k + 1, n), z2_at
            )
            dbz2 = beta * fwd + (1 - beta) * bwd
            ek_sq = _block_fn_expect(
                model, row, [j for j in range(n) if j != k],
                lambda r: _point_diff(model, r, k) ** 2,
            )
            daf = diff_alpha(model, row, k, alpha).value
            terms.append(dk * dbz2 - 0.5 * (dk * dk + ek_sq) * daf)
        return Estimate(math.fsum(terms))
    if budget is None:
        raise BudgetMissing("nested Monte Carlo evaluation needs an explicit MCBudget")
    ev = _NestedEval(model, budget, np.random.default_rng(np.random.SeedSequence(seed)))
    reps = np.array([ev.z3_pair(row[None, :], alpha, beta)[0][0]
                     for _ in range(budget.batches)])
    return Estimate(float(reps.mean()),
                    float(reps.std(ddof=1) / math.sqrt(len(reps))))


def _finite_coords(model, idx) -> bool:
    return all(model.space.components[j].is_finite for j in idx)


def _block_fn_expect(model, row: np.ndarray, keep: Sequence[int],
                     fn: Callable[[np.ndarray], float]) -> float:
    """E[fn(X) | X_j = row_j for j in keep] by enumeration."""
    keep = set(keep)
    free = [j for j in range(model.space.n) if j not in keep]
    if not free:
        return fn(row)
    comps = model.space.components
    grids = [comps[j]._atoms() for j in free]
    sizes = [len(g[0]) for g in grids]
    total = int(np.prod(sizes))
    if total > ENUMERATION_CAP:
        raise SupportTooLarge(f"conditional enumeration has {total} outcomes")
    terms = []
    rem_template = np.arange(total, dtype=np.int64)
    rows = np.tile(row, (total, 1))
    weights = np.ones(total)
    rem = rem_template
    for j, (vals, probs), s in zip(free[::-1], grids[::-1], sizes[::-1]):
        idx = rem % s
        rem = rem // s
        rows[:, j] = vals[idx]
        weights *= probs[idx]
    for r, w in zip(rows, weights):
        terms.append(w * fn(r))
    return math.fsum(terms)


def covariance_identity_residual(space: ProductSpace, u, v, alpha: float) -> float:
    """|Cov(U, V) - E[sum_k D_k U * D~_k(alpha) V]| by exact enumeration.

    ``u`` and ``v`` are batch callables mapping a (rows, n) outcome matrix
    to a length-rows vector.  The identity holds for every alpha in
    [0, 1]; the residual measures only numerical error.
    """
    alpha = _check_unit("alpha", alpha)
    eng = ExactEngine(space)
    ut = eng.tensor(u)
    vt = eng.tensor(v)
    cov = eng.expect(ut * vt) - eng.expect(ut) * eng.expect(vt)
    rhs = math.fsum(
        eng.expect(eng.diff_k(ut, k) * eng.diff_weighted(vt, k, alpha))
        for k in range(eng.n)
    )
    return abs(cov - rhs)


@dataclass(frozen=True)
class ThirdMomentCheck:
    """E[F^3] against twice the mean cubic correction."""

    ef3: float
    twice_ez3: float
    ef3_se: float = 0.0
    ez3_se: float = 0.0
    mode: str = "exact"

    @property
    def residual(self) -> float:
        return abs(self.ef3 - self.twice_ez3)


def third_moment_check(model, alpha: float = 0.5, beta: float = 0.5,
                       budget: MCBudget | None = None, seed: int = 0) -> ThirdMomentCheck:
    """Verify E[F^3] = 2 E[Z3] for the centered statistic."""
    alpha = _check_unit("alpha", alpha)
    beta = _check_unit("beta", beta)
    if model.space.is_enumerable:
        eng = ExactEngine(model.space)
        f = eng.tensor(model.evaluate_batch)
        f = f - eng.expect(f)
        ef3 = eng.expect(f ** 3)
        ez3 = eng.expect(eng.cubic_correction(f, alpha, beta))
        return ThirdMomentCheck(ef3, 2.0 * ez3)
    prof = profile(model, delta=1.0, params=AlphaParams(alpha, beta, 0.5),
                   level="d2", budget=budget, seed=seed)
    return ThirdMomentCheck(prof.ef3, 2.0 * prof.ez3, prof.ef3_se,
                            2.0 * prof.ez3_se, prof.mode)


# ----------------------------------------------------------------------
# profiles
# ----------------------------------------------------------------------

def keys_for_level(level: str) -> tuple[str, ...]:
    if level == "d1":
        return D1_KEYS
    if level == "d2":
        return D2_KEYS
    raise InvalidOrder(f"level must be one of {LEVELS}, got {level!r}")


def profile(model, delta: float, params: AlphaParams = AlphaParams(),
            level: str = "d1", budget: MCBudget | None = None,
            seed: int = 0, mode: str | None = None,
            threads: int = 1) -> DiffProfile:
    """Compute the per-coordinate moment profile that feeds the bounds.

    Mode resolution: a family-specific exact hook if the statistic carries
    one, else exact enumeration when the support permits, else Monte Carlo
    (closed-form differences if available, fully nested resampling
    otherwise; both need ``budget``).  Results are deterministic in
    ``seed`` and independent of ``threads``.
    """
    if params is None:
        params = AlphaParams()
    if not 0.0 < delta <= 1.0:
        raise InvalidOrder(f"delta must lie in (0, 1], got {delta}")
    keys = keys_for_level(level)
    top_order = (2.0 if level == "d1" else 3.0) + delta
    if model.space.moment_ceiling <= top_order:
        raise MomentDoesNotExist(
            f"profile at level {level} needs component moments of order "
            f"{top_order}, above the ceiling {model.space.moment_ceiling}"
        )
    if mode is not None and mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")

    if mode in (None, "exact") and model.exact_profile is not None:
        prof = model.exact_profile(delta, params, level)
        if prof is not None:
            return prof
    if mode in (None, "exact") and model.space.is_enumerable:
        return _exact_profile(model, delta, params, keys)
    if mode == "exact":
        raise SupportTooLarge("exact profile requires an enumerable support")
    if budget is None:
        raise BudgetMissing("Monte Carlo profiles need an explicit MCBudget")
    if mode == "closed_form_mc" and model.closed_form is None:
        raise ValueError("closed_form_mc requires closed-form differences")
    use_cf = model.closed_form is not None and mode != "nested_mc"
    return _mc_profile(model, delta, params, keys, budget, seed, threads,
                       "closed_form_mc" if use_cf else "nested_mc")


def _exact_profile(model, delta: float, params: AlphaParams,
                   keys: tuple[str, ...]) -> DiffProfile:
    eng = ExactEngine(model.space)
    n = eng.n
    f = eng.tensor(model.evaluate_batch)
    f = f - eng.expect(f)
    sigma2 = eng.expect(f * f)
    ef3 = eng.expect(f ** 3)
    z2 = eng.quad_sensitivity(f, params.alpha)
    want_d2 = DF_3 in keys
    z3 = eng.cubic_correction(f, params.alpha, params.beta, z2) if want_d2 else None
    ez3 = eng.expect(z3) if z3 is not None else math.nan

    entries = {k: np.zeros(n) for k in keys}
    for k in range(n):
        df = eng.diff_k(f, k)
        adf = np.abs(df)
        pow_d = adf ** delta
        pow_1d = adf ** (1.0 + delta)
        pow_2d = adf ** (2.0 + delta)
        sum_d = pow_d + eng.e_k(pow_d, k)
        sum_1d = pow_1d + eng.e_k(pow_1d, k)
        daf = np.abs(eng.diff_weighted(f, k, params.alpha))
        dz2 = eng.diff_k(z2, k)
        dbz2 = np.abs(eng.diff_weighted(z2, k, params.beta))
        entries[DF_1][k] = eng.expect(pow_1d)
        entries[DF_2][k] = eng.expect(pow_2d)
        entries[DZ2_D1][k] = eng.expect(np.abs(dz2) ** ((2.0 + delta) / 2.0))
        entries[MIX_D1_Z][k] = eng.expect(sum_d * dbz2)
        entries[MIX_D1_F][k] = eng.expect(sum_1d * daf)
        if want_d2:
            sum_2d = pow_2d + eng.e_k(pow_2d, k)
            dgz3 = np.abs(eng.diff_weighted(z3, k, params.gamma))
            entries[DF_3][k] = eng.expect(adf ** (3.0 + delta))
            entries[DZ2_D2][k] = eng.expect(np.abs(dz2) ** ((3.0 + delta) / 2.0))
            entries[DZ3][k] = eng.expect(
                np.abs(eng.diff_k(z3, k)) ** ((3.0 + delta) / 3.0)
            )
            entries[MIX_D2_Z3][k] = eng.expect(sum_d * dgz3)
            entries[MIX_D2_Z2][k] = eng.expect(sum_1d * dbz2)
            entries[MIX_D2_F][k] = eng.expect(sum_2d * daf)

    return DiffProfile(
        n=n, delta=delta, params=params, sigma=math.sqrt(sigma2), mode="exact",
        entries=entries, std_errors={k: np.zeros(n) for k in keys},
        ef3=ef3, ez3=ez3,
    )


# ----------------------------------------------------------------------
# Monte Carlo paths
# ----------------------------------------------------------------------

_MAX_TILE = 1 << 23  # elements per tiled evaluation block


def _tile_chunk(n: int, count: int) -> int:
    rows = max(count, _MAX_TILE // max(n, 1))
    return max(1, rows // count)


def _ek_pair(ev, X: np.ndarray, k: int, fn, count: int):
    """Inner-mean estimate of E_k[fn] at each row, (full, half-budget)."""
    B = len(X)
    half = max(1, count // 2)
    comp = ev.model.space.components[k]
    full = np.empty(B)
    part = np.empty(B)
    step = _tile_chunk(ev.model.space.n, count)
    for s in range(0, B, step):
        block = X[s:s + step]
        work = np.repeat(block, count, axis=0)
        work[:, k] = comp.draw(ev.rng, len(work))
        vals = np.asarray(fn(work), dtype=float).reshape(len(block), count)
        full[s:s + step] = vals.mean(axis=1)
        part[s:s + step] = vals[:, :half].mean(axis=1)
    return full, part


def _proj_pair(ev, X: np.ndarray, k: int, fn, count: int, weight: float):
    """Weighted projection of the k-th difference applied to fn, (full, half).

    Forward leg E[fn|F_k] - E[fn|F_{k-1}] with shared draws of the
    trailing block, so the pair differs only in coordinate k; backward
    leg mirrored.  Unbiased, and the common draws keep the gap tight
    where fn barely depends on X_k.
    """
    n = ev.model.space.n
    comps = ev.model.space.components
    B = len(X)
    half = max(1, count // 2)
    full = np.zeros(B)
    part = np.zeros(B)
    step = _tile_chunk(n, count)
    for leg_weight, common in ((weight, range(k + 1, n)),
                               (1.0 - weight, range(0, k))):
        if leg_weight == 0.0:
            continue
        for s in range(0, B, step):
            block = X[s:s + step]
            work = np.repeat(block, count, axis=0)
            for j in common:
                work[:, j] = comps[j].draw(ev.rng, len(work))
            kept = np.asarray(fn(work), dtype=float)
            work[:, k] = comps[k].draw(ev.rng, len(work))
            gap = (kept - np.asarray(fn(work), dtype=float)).reshape(len(block), count)
            full[s:s + step] += leg_weight * gap.mean(axis=1)
            part[s:s + step] += leg_weight * gap[:, :half].mean(axis=1)
    return full, part


class _ClosedFormEval:
    """Batch evaluator backed by closed-form differences.

    Single-coordinate conditional moments use exact atoms (finite
    components) or fixed quadrature nodes (continuous ones); block
    conditionals of the derived statistics fall back to paired inner
    resampling.
    """

    def __init__(self, model, budget: MCBudget, rng: np.random.Generator):
        self.model = model
        self.cf = model.closed_form
        self.budget = budget
        self.rng = rng
        self.nodes = [_coordinate_nodes(c) for c in model.space.components]

    def f_rows(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.model.evaluate_batch(X), dtype=float)

    def diff_rows(self, X: np.ndarray, k: int) -> np.ndarray:
        return np.asarray(self.cf.diff(X, k), dtype=float)

    def proj_diff_rows(self, X: np.ndarray, k: int, weight: float) -> np.ndarray:
        fwd = np.asarray(self.cf.cond_forward(X, k), dtype=float)
        bwd = np.asarray(self.cf.cond_backward(X, k), dtype=float)
        return weight * fwd + (1.0 - weight) * bwd

    def ek_moments(self, X: np.ndarray, k: int, powers: Sequence[float]) -> list[np.ndarray]:
        vals, weights = self.nodes[k]
        acc = [np.zeros(len(X)) for _ in powers]
        work = X.copy()
        for v, w in zip(vals, weights):
            work[:, k] = v
            d = np.abs(self.diff_rows(work, k))
            for a, p in zip(acc, powers):
                a += w * d ** p
        return acc

    def z2_rows(self, X: np.ndarray, alpha: float) -> np.ndarray:
        if self.model.z2_pointwise is not None:
            return np.asarray(self.model.z2_pointwise(X, alpha), dtype=float)
        out = np.zeros(len(X))
        for l in range(self.model.space.n):
            out += self.diff_rows(X, l) * self.proj_diff_rows(X, l, alpha)
        return out

    def ek_z2(self, X: np.ndarray, k: int, alpha: float) -> np.ndarray:
        vals, weights = self.nodes[k]
        out = np.zeros(len(X))
        work = X.copy()
        for v, w in zip(vals, weights):
            work[:, k] = v
            out += w * self.z2_rows(work, alpha)
        return out

    def proj_z2_pair(self, X: np.ndarray, k: int, alpha: float, beta: float):
        return _proj_pair(self, X, k, lambda W: self.z2_rows(W, alpha),
                          self.budget.inner, beta)

    def z3_pair(self, X: np.ndarray, alpha: float, beta: float):
        if self.model.z3_pointwise is not None:
            vals = self.model.z3_pointwise(X, alpha, beta)
            if vals is not None:
                vals = np.asarray(vals, dtype=float)
                return vals, vals
        full = np.zeros(len(X))
        part = np.zeros(len(X))
        for k in range(self.model.space.n):
            dk = self.diff_rows(X, k)
            ek_sq = self.ek_moments(X, k, [2.0])[0]
            pf, ph = self.proj_z2_pair(X, k, alpha, beta)
            quad = 0.5 * (dk * dk + ek_sq) * self.proj_diff_rows(X, k, alpha)
            full += dk * pf - quad
            part += dk * ph - quad
        return full, part

    def ek_z3_pair(self, X: np.ndarray, k: int, alpha: float, beta: float):
        vals, weights = self.nodes[k]
        full = np.zeros(len(X))
        part = np.zeros(len(X))
        work = X.copy()
        for v, w in zip(vals, weights):
            work[:, k] = v
            zf, zh = self.z3_pair(work, alpha, beta)
            full += w * zf
            part += w * zh
        return full, part

    def proj_z3_pair(self, X: np.ndarray, k: int, alpha: float, beta: float,
                     gamma: float):
        count = max(2, self.budget.inner // 4)
        return _proj_pair(self, X, k,
                          lambda W: self.z3_pair(W, alpha, beta)[0],
                          count, gamma)


class _NestedEval:
    """Fully nested Monte Carlo evaluator for black-box statistics."""

    def __init__(self, model, budget: MCBudget, rng: np.random.Generator):
        self.model = model
        self.budget = budget
        self.rng = rng

    def f_rows(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.model.evaluate_batch(X), dtype=float)

    def diff_and_moments(self, X: np.ndarray, k: int, powers: Sequence[float],
                         count: int):
        """(D_k F pair, [E_k|D_k F|^p pair per p]) at each row of X."""
        B = len(X)
        half = max(1, count // 2)
        comp = self.model.space.components[k]
        step = _tile_chunk(self.model.space.n, count)
        ek_full = np.empty(B)
        ek_half = np.empty(B)
        moms = [(np.empty(B), np.empty(B)) for _ in powers]
        for s in range(0, B, step):
            block = X[s:s + step]
            work = np.repeat(block, count, axis=0)
            work[:, k] = comp.draw(self.rng, len(work))
            draws = self.f_rows(work).reshape(len(block), count)
            mf = draws.mean(axis=1)
            mh = draws[:, :half].mean(axis=1)
            ek_full[s:s + step] = mf
            ek_half[s:s + step] = mh
            for (out_f, out_h), p in zip(moms, powers):
                out_f[s:s + step] = (np.abs(draws - mf[:, None]) ** p).mean(axis=1)
                out_h[s:s + step] = (
                    np.abs(draws[:, :half] - mh[:, None]) ** p
                ).mean(axis=1)
        f = self.f_rows(X)
        return (f - ek_full, f - ek_half), moms

    def diff_pair(self, X: np.ndarray, k: int, count: int):
        return self.diff_and_moments(X, k, [], count)[0]

    def sq_pair(self, X: np.ndarray, k: int, count: int):
        """(D_k F)^2 + E_k(D_k F)^2 at each row, (full, half), unbiased.

        The square of the noisy difference is debiased by multiplying two
        half-sample copies; the conditional second moment is the ddof=1
        variance of the redraws.
        """
        B = len(X)
        half = max(2, count // 2)
        comp = self.model.space.components[k]
        step = _tile_chunk(self.model.space.n, count)
        full = np.empty(B)
        part = np.empty(B)
        f = self.f_rows(X)
        for s in range(0, B, step):
            block = X[s:s + step]
            work = np.repeat(block, count, axis=0)
            work[:, k] = comp.draw(self.rng, len(work))
            draws = self.f_rows(work).reshape(len(block), count)
            fs = f[s:s + step]
            prod = (fs - draws[:, ::2].mean(axis=1)) * (fs - draws[:, 1::2].mean(axis=1))
            full[s:s + step] = prod + draws.var(axis=1, ddof=1)
            sub = draws[:, :half]
            prod = (fs - sub[:, ::2].mean(axis=1)) * (fs - sub[:, 1::2].mean(axis=1))
            part[s:s + step] = prod + sub.var(axis=1, ddof=1)
        return full, part

    def proj_f_pair(self, X: np.ndarray, k: int, weight: float, count: int):
        return _proj_pair(self, X, k, self.f_rows, count, weight)

    def z2_pair(self, X: np.ndarray, alpha: float):
        count = self.budget.inner_nested
        full = np.zeros(len(X))
        part = np.zeros(len(X))
        for l in range(self.model.space.n):
            df, dh = self.diff_pair(X, l, count)
            pf, ph = self.proj_f_pair(X, l, alpha, count)
            full += df * pf
            part += dh * ph
        return full, part

    def ek_z2_pair(self, X: np.ndarray, k: int, alpha: float, count: int):
        return _ek_pair(self, X, k, lambda W: self.z2_pair(W, alpha)[0], count)

    def proj_z2_pair(self, X: np.ndarray, k: int, alpha: float, beta: float,
                     count: int):
        return _proj_pair(self, X, k, lambda W: self.z2_pair(W, alpha)[0],
                          count, beta)

    def z3_pair(self, X: np.ndarray, alpha: float, beta: float):
        count = self.budget.inner_nested
        full = np.zeros(len(X))
        part = np.zeros(len(X))
        for k in range(self.model.space.n):
            df, dh = self.diff_pair(X, k, count)
            sq_f, sq_h = self.sq_pair(X, k, count)
            pf, ph = self.proj_z2_pair(X, k, alpha, beta, count)
            af, ah = self.proj_f_pair(X, k, alpha, count)
            full += df * pf - 0.5 * sq_f * af
            part += dh * ph - 0.5 * sq_h * ah
        return full, part

    def ek_z3_pair(self, X: np.ndarray, k: int, alpha: float, beta: float,
                   count: int):
        return _ek_pair(self, X, k, lambda W: self.z3_pair(W, alpha, beta)[0],
                        count)

    def proj_z3_pair(self, X: np.ndarray, k: int, alpha: float, beta: float,
                     gamma: float, count: int):
        return _proj_pair(self, X, k,
                          lambda W: self.z3_pair(W, alpha, beta)[0],
                          count, gamma)


def _coordinate_nodes(comp, count: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Integration nodes and weights for one coordinate's law."""
    from .distributions import (
        CENTERED_EXPONENTIAL, SYMMETRIC_PARETO, UNIFORM_SYMMETRIC,
    )

    if comp.is_finite:
        return comp._atoms()
    if comp.family == UNIFORM_SYMMETRIC:
        h = comp.params["half_width"]
        t, w = np.polynomial.legendre.leggauss(count)
        return h * t, 0.5 * w
    if comp.family == CENTERED_EXPONENTIAL:
        rate = comp.params["rate"]
        u, w = np.polynomial.laguerre.laggauss(count)
        return (u - 1.0) / rate, w
    if comp.family == SYMMETRIC_PARETO:
        a = comp.params["tail_index"]
        s = comp.params["scale"]
        t, w = np.polynomial.legendre.leggauss(count)
        u = 0.5 * (t + 1.0)  # map to (0, 1)
        mags = s * np.maximum(u, 1e-12) ** (-1.0 / a)
        vals = np.concatenate([mags, -mags])
        weights = np.concatenate([0.25 * w, 0.25 * w])
        return vals, weights
    raise ValueError(f"no quadrature nodes for family {comp.family}")


def _mc_profile(model, delta: float, params: AlphaParams, keys: tuple[str, ...],
                budget: MCBudget, seed: int, threads: int, mode: str) -> DiffProfile:
    n = model.space.n
    want_d2 = DF_3 in keys
    batch_sizes = _split_budget(budget.outer, budget.batches)
    children = np.random.SeedSequence(seed).spawn(len(batch_sizes))

    def run_batch(args):
        size, child = args
        rng = np.random.default_rng(child)
        if mode == "closed_form_mc":
            ev = _ClosedFormEval(model, budget, rng)
        else:
            ev = _NestedEval(model, budget, rng)
        return _mc_batch(model, delta, params, keys, size, rng, ev, want_d2)

    jobs = list(zip(batch_sizes, children))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_batch, jobs))
    else:
        results = [run_batch(j) for j in jobs]

    nb = len(results)
    entries = {}
    std_errors = {}
    for key in keys:
        stack = np.stack([r["entries"][key] for r in results])
        entries[key] = stack.mean(axis=0)
        std_errors[key] = stack.std(axis=0, ddof=1) / math.sqrt(nb)
    scalars = {}
    for name in ("sigma2", "ef3", "ez3"):
        vals = np.array([r[name] for r in results])
        scalars[name] = (vals.mean(), vals.std(ddof=1) / math.sqrt(nb))
    sigma2, sigma2_se = scalars["sigma2"]
    sigma = math.sqrt(max(sigma2, 0.0))
    sigma_se = sigma2_se / (2.0 * sigma) if sigma > 0 else math.nan
    drift: dict[str, float] = {}
    for r in results:
        for key, val in r["drift"].items():
            drift[key] = max(drift.get(key, 0.0), val)
    return DiffProfile(
        n=n, delta=delta, params=params, sigma=sigma, mode=mode,
        entries=entries, std_errors=std_errors,
        ef3=scalars["ef3"][0], ez3=scalars["ez3"][0],
        sigma_se=sigma_se, ef3_se=scalars["ef3"][1], ez3_se=scalars["ez3"][1],
        meta={"budget": budget.to_json(), "seed": seed, "drift": drift},
    )


def _split_budget(total: int, batches: int) -> list[int]:
    base = total // batches
    extra = total % batches
    return [base + (1 if i < extra else 0) for i in range(batches)]


def _mc_batch(model, delta: float, params: AlphaParams, keys: tuple[str, ...],
              size: int, rng: np.random.Generator, ev, want_d2: bool) -> dict:
    n = model.space.n
    X = np.empty((size, n))
    for j, comp in enumerate(model.space.components):
        X[:, j] = comp.draw(rng, size)
    fvals = ev.f_rows(X)
    fbar = fvals.mean()
    sigma2 = ((fvals - fbar) ** 2).mean()
    ef3 = ((fvals - fbar) ** 3).mean()

    nested = isinstance(ev, _NestedEval)
    I1 = ev.budget.inner
    entries = {k: np.zeros(n) for k in keys}
    halves = {k: np.zeros(n) for k in keys}

    # every noisy ingredient carries a (full, half-budget) pair so the
    # plug-in bias of the fractional powers shows up as reported drift
    if nested:
        z2_f, z2_h = ev.z2_pair(X, params.alpha)
    else:
        z2_f = ev.z2_rows(X, params.alpha)
        z2_h = z2_f
    ez3 = math.nan
    if want_d2:
        z3_f, z3_h = ev.z3_pair(X, params.alpha, params.beta)
        ez3 = z3_f.mean()

    powers = [delta, 1.0 + delta, 2.0 + delta]
    for k in range(n):
        if nested:
            (dk_f, dk_h), moms = ev.diff_and_moments(X, k, powers, I1)
            (ekd_f, ekd_h), (ek1_f, ek1_h), (ek2_f, ek2_h) = moms
            daf_f, daf_h = ev.proj_f_pair(X, k, params.alpha, I1)
            ekz2_f, ekz2_h = ev.ek_z2_pair(X, k, params.alpha, I1)
            dbz2_f, dbz2_h = ev.proj_z2_pair(X, k, params.alpha, params.beta, I1)
        else:
            dk_f = ev.diff_rows(X, k)
            dk_h = dk_f
            ekd_f, ek1_f, ek2_f = ev.ek_moments(X, k, powers)
            ekd_h, ek1_h, ek2_h = ekd_f, ek1_f, ek2_f
            daf_f = ev.proj_diff_rows(X, k, params.alpha)
            daf_h = daf_f
            ekz2_f = ev.ek_z2(X, k, params.alpha)
            ekz2_h = ekz2_f
            dbz2_f, dbz2_h = ev.proj_z2_pair(X, k, params.alpha, params.beta)
        ad_f = np.abs(dk_f)
        ad_h = np.abs(dk_h)
        dz2_f = z2_f - ekz2_f
        dz2_h = z2_h - ekz2_h

        def put(key, full_rows, half_rows):
            entries[key][k] = full_rows.mean()
            halves[key][k] = half_rows.mean()

        put(DF_1, ad_f ** (1.0 + delta), ad_h ** (1.0 + delta))
        put(DF_2, ad_f ** (2.0 + delta), ad_h ** (2.0 + delta))
        put(DZ2_D1, np.abs(dz2_f) ** ((2.0 + delta) / 2.0),
            np.abs(dz2_h) ** ((2.0 + delta) / 2.0))
        put(MIX_D1_Z, (ad_f ** delta + ekd_f) * np.abs(dbz2_f),
            (ad_h ** delta + ekd_h) * np.abs(dbz2_h))
        put(MIX_D1_F, (ad_f ** (1.0 + delta) + ek1_f) * np.abs(daf_f),
            (ad_h ** (1.0 + delta) + ek1_h) * np.abs(daf_h))
        if want_d2:
            if nested:
                ekz3_f, ekz3_h = ev.ek_z3_pair(X, k, params.alpha, params.beta, I1)
                dgz3_f, dgz3_h = ev.proj_z3_pair(X, k, params.alpha, params.beta,
                                                 params.gamma, I1)
            else:
                ekz3_f, ekz3_h = ev.ek_z3_pair(X, k, params.alpha, params.beta)
                dgz3_f, dgz3_h = ev.proj_z3_pair(X, k, params.alpha, params.beta,
                                                 params.gamma)
            dz3_f = z3_f - ekz3_f
            dz3_h = z3_h - ekz3_h
            put(DF_3, ad_f ** (3.0 + delta), ad_h ** (3.0 + delta))
            put(DZ2_D2, np.abs(dz2_f) ** ((3.0 + delta) / 2.0),
                np.abs(dz2_h) ** ((3.0 + delta) / 2.0))
            put(DZ3, np.abs(dz3_f) ** ((3.0 + delta) / 3.0),
                np.abs(dz3_h) ** ((3.0 + delta) / 3.0))
            put(MIX_D2_Z3, (ad_f ** delta + ekd_f) * np.abs(dgz3_f),
                (ad_h ** delta + ekd_h) * np.abs(dgz3_h))
            put(MIX_D2_Z2, (ad_f ** (1.0 + delta) + ek1_f) * np.abs(dbz2_f),
                (ad_h ** (1.0 + delta) + ek1_h) * np.abs(dbz2_h))
            put(MIX_D2_F, (ad_f ** (2.0 + delta) + ek2_f) * np.abs(daf_f),
                (ad_h ** (2.0 + delta) + ek2_h) * np.abs(daf_h))

    drift = {
        key: float(np.max(np.abs(entries[key] - halves[key]))) for key in keys
    }
    return {
        "entries": entries,
        "sigma2": sigma2,
        "ef3": ef3,
        "ez3": ez3,
        "drift": drift,
    }


def _nested_point_diff_alpha(model, row: np.ndarray, k: int, alpha: float,
                             budget: MCBudget, seed: int) -> Estimate:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ev = _NestedEval(model, budget, rng)
    X = np.tile(row, (budget.batches, 1))
    per = max(2, budget.inner // budget.batches)
    vals = np.array([
        ev.proj_f_pair(X[i:i + 1], k, alpha, per)[0][0]
        for i in range(budget.batches)
    ])
    return Estimate(float(vals.mean()),
                    float(vals.std(ddof=1) / math.sqrt(len(vals))))
