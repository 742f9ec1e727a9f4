"""Statistic families over independent components.

A :class:`StatisticModel` bundles a product space with a batch evaluator
and, where the family permits, closed-form coordinate differences and
exact profile shortcuts.  Families:

* :func:`partial_sum`      -- centered sums, fully solvable per component
* :func:`product_example`  -- (X_0 + ... + X_{n-2}) * X_{n-1}, a worked
                              nonlinear case with asymmetric filtrations
* :func:`m_dependent_sum`  -- sums of centered sliding-window kernels
* :func:`m_runs`           -- window products, the classic m-dependent case
* :func:`quadratic_form`   -- sum_{u<v} a_uv X_u X_v for symmetric A with
                              zero diagonal
* :func:`black_box`        -- anything callable; difference machinery
                              falls back to enumeration or nested MC
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import difference as diff
from .difference import AlphaParams, DiffProfile
from .distributions import DistributionSpec, ProductSpace, rademacher
from .errors import (
    ArityMismatch,
    AsymmetricMatrix,
    BadStandardization,
    NonzeroDiagonal,
)


@dataclass(frozen=True)
class ClosedFormDiffs:
    """Vectorized closed-form differences: each maps (rows, n) -> (rows,).

    ``diff`` is D_k F; ``cond_forward`` is E[D_k F | X_0..X_k] and
    ``cond_backward`` is E[D_k F | X_k..X_{n-1}].
    """

    diff: Callable[[np.ndarray, int], np.ndarray]
    cond_forward: Callable[[np.ndarray, int], np.ndarray]
    cond_backward: Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True)
class StatisticModel:
    """A statistic together with the structure the bounds can exploit."""

    space: ProductSpace
    evaluate_batch: Callable[[np.ndarray], np.ndarray]
    closed_form: ClosedFormDiffs | None = None
    variance: float | None = None
    centering: float | None = None
    label: str = ""
    z2_pointwise: Callable | None = None
    z3_pointwise: Callable | None = None
    exact_profile: Callable | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.space.n

    def evaluate(self, x) -> float:
        row = np.asarray(x, dtype=float).reshape(-1)
        if row.size != self.space.n:
            raise ArityMismatch(
                f"point has {row.size} coordinates, statistic expects {self.space.n}"
            )
        return float(self.evaluate_batch(row[None, :])[0])


# ----------------------------------------------------------------------
# partial sums
# ----------------------------------------------------------------------

def partial_sum(space: ProductSpace, label: str = "") -> StatisticModel:
    """Centered sum of the components.

    Differences along every coordinate are measurable in both the past
    and future filtrations, so the projection weights drop out and the
    whole profile reduces to one-dimensional component integrals.
    """
    mu = np.array([c.mean for c in space.components])
    variances = space.variances()

    def evaluate_batch(X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - mu).sum(axis=1)

    def d(X, k):
        return np.asarray(X, dtype=float)[:, k] - mu[k]

    cf = ClosedFormDiffs(diff=d, cond_forward=d, cond_backward=d)

    def z2_pointwise(X, alpha):
        Y = np.asarray(X, dtype=float) - mu
        return (Y * Y).sum(axis=1)

    def z3_pointwise(X, alpha, beta):
        Y = np.asarray(X, dtype=float) - mu
        return 0.5 * (Y ** 3 - 3.0 * variances * Y).sum(axis=1)

    hook = _partial_sum_hook(space)
    return StatisticModel(
        space=space,
        evaluate_batch=evaluate_batch,
        closed_form=cf,
        variance=float(math.fsum(variances)),
        centering=0.0,
        label=label or f"partial_sum(n={space.n})",
        z2_pointwise=z2_pointwise,
        z3_pointwise=z3_pointwise,
        exact_profile=hook,
        meta={"family": "partial_sum"},
    )


def _partial_sum_hook(space: ProductSpace):
    """Exact profile from per-component integrals; alpha/beta/gamma drop out."""

    def hook(delta: float, params: AlphaParams, level: str) -> DiffProfile | None:
        keys = diff.keys_for_level(level)
        want_d2 = diff.DF_3 in keys
        cache: dict = {}
        per_comp = []
        for comp in space.components:
            key = (comp.family, tuple(sorted(comp.params.items())))
            if key not in cache:
                cache[key] = _component_terms(comp, delta, want_d2)
            per_comp.append(cache[key])
        n = space.n
        entries = {k: np.zeros(n) for k in keys}
        for i, t in enumerate(per_comp):
            entries[diff.DF_1][i] = t["m_1d"]
            entries[diff.DF_2][i] = t["m_2d"]
            entries[diff.DZ2_D1][i] = t["q_half_d1"]
            entries[diff.MIX_D1_Z][i] = t["mix_d1_z"]
            entries[diff.MIX_D1_F][i] = t["mix_d1_f"]
            if want_d2:
                entries[diff.DF_3][i] = t["m_3d"]
                entries[diff.DZ2_D2][i] = t["q_half_d2"]
                entries[diff.DZ3][i] = t["cubic_third"]
                entries[diff.MIX_D2_Z3][i] = t["mix_d2_z3"]
                entries[diff.MIX_D2_Z2][i] = t["mix_d2_z2"]
                entries[diff.MIX_D2_F][i] = t["mix_d2_f"]
        sigma2 = math.fsum(t["var"] for t in per_comp)
        ef3 = math.fsum(t["third"] for t in per_comp) if want_d2 else math.nan
        return DiffProfile(
            n=n, delta=delta, params=params, sigma=math.sqrt(sigma2),
            mode="exact", entries=entries,
            std_errors={k: np.zeros(n) for k in keys},
            ef3=ef3, ez3=(ef3 / 2.0 if want_d2 else math.nan),
            meta={"hook": "partial_sum"},
        )

    return hook


def _component_terms(comp: DistributionSpec, delta: float, want_d2: bool) -> dict:
    """One-dimensional expectations feeding the partial-sum profile."""
    v2 = comp.variance
    m_d = comp.expect_central(lambda y: np.abs(y) ** delta, [0.0])
    m_1d = comp.expect_central(lambda y: np.abs(y) ** (1.0 + delta), [0.0])
    m_2d = comp.expect_central(lambda y: np.abs(y) ** (2.0 + delta), [0.0])
    root = math.sqrt(v2)
    quad_kinks = [-root, 0.0, root]

    def q(y):
        return np.abs(y * y - v2)

    out = {
        "var": v2,
        "m_1d": m_1d,
        "m_2d": m_2d,
        "q_half_d1": comp.expect_central(
            lambda y: q(y) ** ((2.0 + delta) / 2.0), quad_kinks
        ),
        "mix_d1_z": comp.expect_central(
            lambda y: (np.abs(y) ** delta + m_d) * q(y), quad_kinks
        ),
        "mix_d1_f": comp.expect_central(
            lambda y: (np.abs(y) ** (1.0 + delta) + m_1d) * np.abs(y), [0.0]
        ),
    }
    if want_d2:
        tau = comp.central_moment(3)
        m_3d = comp.expect_central(lambda y: np.abs(y) ** (3.0 + delta), [0.0])
        cubic_roots = np.roots([1.0, 0.0, -3.0 * v2, -tau])
        kinks = [float(r.real) for r in cubic_roots if abs(r.imag) < 1e-9]

        def c(y):
            return np.abs(y ** 3 - 3.0 * v2 * y - tau)

        out.update({
            "third": tau,
            "m_3d": m_3d,
            "q_half_d2": comp.expect_central(
                lambda y: q(y) ** ((3.0 + delta) / 2.0), quad_kinks
            ),
            "cubic_third": comp.expect_central(
                lambda y: (0.5 * c(y)) ** ((3.0 + delta) / 3.0), kinks
            ),
            "mix_d2_z3": comp.expect_central(
                lambda y: (np.abs(y) ** delta + m_d) * 0.5 * c(y), kinks + [0.0]
            ),
            "mix_d2_z2": comp.expect_central(
                lambda y: (np.abs(y) ** (1.0 + delta) + m_1d) * q(y), quad_kinks
            ),
            "mix_d2_f": comp.expect_central(
                lambda y: (np.abs(y) ** (2.0 + delta) + m_2d) * np.abs(y), [0.0]
            ),
        })
    else:
        out["third"] = math.nan
    return out


# ----------------------------------------------------------------------
# product example
# ----------------------------------------------------------------------

def product_example(n: int) -> StatisticModel:
    """F = (X_0 + ... + X_{n-2}) * X_{n-1} on fair signs.

    A textbook nonlinear statistic: the last coordinate's difference is F
    itself, the past projection of every other difference vanishes, and
    with full weight on the future filtration the quadratic sensitivity
    is the constant n - 1.
    """
    if n < 2:
        raise ArityMismatch(f"product example needs n >= 2, got {n}")
    space = ProductSpace.iid(rademacher(), n)
    last = n - 1

    def evaluate_batch(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X[:, :last].sum(axis=1) * X[:, last]

    def d(X, k):
        X = np.asarray(X, dtype=float)
        if k == last:
            return evaluate_batch(X)
        return X[:, k] * X[:, last]

    def fwd(X, k):
        X = np.asarray(X, dtype=float)
        if k == last:
            return evaluate_batch(X)
        return np.zeros(len(X))

    def bwd(X, k):
        X = np.asarray(X, dtype=float)
        if k == last:
            return np.zeros(len(X))
        return X[:, k] * X[:, last]

    def z2_pointwise(X, alpha):
        X = np.asarray(X, dtype=float)
        s = X[:, :last].sum(axis=1)
        return alpha * s * s + (1.0 - alpha) * float(last)

    def z3_pointwise(X, alpha, beta):
        if alpha != 0.0:
            return None  # closed form only for the future-weighted case
        return -evaluate_batch(X)

    return StatisticModel(
        space=space,
        evaluate_batch=evaluate_batch,
        closed_form=ClosedFormDiffs(d, fwd, bwd),
        variance=float(last),
        centering=0.0,
        label=f"product_example(n={n})",
        z2_pointwise=z2_pointwise,
        z3_pointwise=z3_pointwise,
        exact_profile=_product_example_hook(n),
        meta={"family": "product_example"},
    )


def _abs_moment_of_sign_sum(count: int, p: float) -> float:
    """E|S|^p for S a sum of ``count`` independent fair signs."""
    j = np.arange(count + 1)
    pmf = stats.binom.pmf(j, count, 0.5)
    return math.fsum(pmf * np.abs(2.0 * j - count) ** p)


def _product_example_hook(n: int):
    """Exact profile for full weight on the future filtration (alpha = 0).

    In that regime the quadratic sensitivity is constant, so all of its
    difference entries vanish and the remaining entries are elementary.
    Other alphas fall back to enumeration.
    """
    last = n - 1

    def hook(delta: float, params: AlphaParams, level: str) -> DiffProfile | None:
        if params.alpha != 0.0:
            return None
        keys = diff.keys_for_level(level)
        want_d2 = diff.DF_3 in keys
        gamma = params.gamma
        entries = {k: np.zeros(n) for k in keys}
        entries[diff.DF_1][:] = 1.0
        entries[diff.DF_1][last] = _abs_moment_of_sign_sum(last, 1.0 + delta)
        entries[diff.DF_2][:] = 1.0
        entries[diff.DF_2][last] = _abs_moment_of_sign_sum(last, 2.0 + delta)
        entries[diff.MIX_D1_F][:] = 2.0
        entries[diff.MIX_D1_F][last] = 0.0
        # dz2 and mix_d1_z stay identically zero: Z2 is constant
        if want_d2:
            entries[diff.DF_3][:] = 1.0
            entries[diff.DF_3][last] = _abs_moment_of_sign_sum(last, 3.0 + delta)
            entries[diff.DZ3][:] = 1.0
            entries[diff.DZ3][last] = _abs_moment_of_sign_sum(last, (3.0 + delta) / 3.0)
            entries[diff.MIX_D2_Z3][:] = 2.0 * (1.0 - gamma)
            entries[diff.MIX_D2_Z3][last] = 2.0 * gamma * _abs_moment_of_sign_sum(
                last, 1.0 + delta
            )
            entries[diff.MIX_D2_F][:] = 2.0
            entries[diff.MIX_D2_F][last] = 0.0
        return DiffProfile(
            n=n, delta=delta, params=params, sigma=math.sqrt(float(last)),
            mode="exact", entries=entries,
            std_errors={k: np.zeros(n) for k in keys},
            ef3=0.0, ez3=0.0, meta={"hook": "product_example"},
        )

    return hook


# ----------------------------------------------------------------------
# m-dependent sums
# ----------------------------------------------------------------------

def m_dependent_sum(
    space: ProductSpace,
    m: int,
    kernels: Sequence[Callable[[np.ndarray], np.ndarray]],
    label: str = "",
) -> StatisticModel:
    """Sum of centered kernels of sliding length-m windows.

    Kernel i consumes coordinates i..i+m-1 as a (rows, m) block and must
    be vectorized.  The space must carry exactly
    ``len(kernels) + m - 1`` components.  Closed-form differences and the
    exact variance need finite-support components; continuous components
    still work through the generic difference machinery.
    """
    if m < 1:
        raise ArityMismatch(f"window length must be >= 1, got {m}")
    n_out = len(kernels)
    if n_out < 1:
        raise ArityMismatch("need at least one kernel")
    if space.n != n_out + m - 1:
        raise ArityMismatch(
            f"space has {space.n} components, kernels need {n_out + m - 1}"
        )
    kernels = list(kernels)
    finite = all(c.is_finite for c in space.components)

    centerings = np.array([
        _window_expect(space, i, m, kernels[i]) for i in range(n_out)
    ])

    def evaluate_batch(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(len(X))
        for i in range(n_out):
            out += kernels[i](X[:, i:i + m]) - centerings[i]
        return out

    cf = None
    if finite:
        cf = _m_dep_closed_form(space, m, kernels, n_out)

    variance = _m_dep_variance(space, m, kernels, centerings) if finite else None

    return StatisticModel(
        space=space,
        evaluate_batch=evaluate_batch,
        closed_form=cf,
        variance=variance,
        centering=0.0,
        label=label or f"m_dependent_sum(m={m}, n={n_out})",
        meta={
            "family": "m_dependent",
            "m": m,
            "kernels": kernels,
            "centerings": centerings,
        },
    )


def m_runs(space: ProductSpace, m: int, label: str = "") -> StatisticModel:
    """Sliding window products: kernel i is X_i * ... * X_{i+m-1}."""

    def window_product(W: np.ndarray) -> np.ndarray:
        return np.asarray(W, dtype=float).prod(axis=1)

    n_out = space.n - m + 1
    if n_out < 1:
        raise ArityMismatch(f"space too small for window length {m}")
    model = m_dependent_sum(space, m, [window_product] * n_out,
                            label=label or f"m_runs(m={m}, n={n_out})")
    model.meta["family"] = "m_runs"
    return model


def _window_grid(space: ProductSpace, coords: Sequence[int]):
    """Atom grid (rows of values, weights) over the given coordinates."""
    grids = [space.components[j]._atoms() for j in coords]
    sizes = [len(g[0]) for g in grids]
    total = int(np.prod(sizes)) if sizes else 1
    vals = np.empty((total, len(coords)))
    weights = np.ones(total)
    rem = np.arange(total, dtype=np.int64)
    for pos in range(len(coords) - 1, -1, -1):
        v, p = grids[pos]
        idx = rem % sizes[pos]
        rem = rem // sizes[pos]
        vals[:, pos] = v[idx]
        weights *= p[idx]
    return vals, weights


def _window_expect(space: ProductSpace, i: int, m: int, kernel) -> float:
    """E[kernel(window i)]; exact for finite supports, seeded MC otherwise."""
    coords = list(range(i, i + m))
    if all(space.components[j].is_finite for j in coords):
        vals, weights = _window_grid(space, coords)
        return math.fsum(weights * np.asarray(kernel(vals), dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=2 ** 31 + i))
    draws = np.column_stack([
        space.components[j].draw(rng, 200_000) for j in coords
    ])
    return float(np.mean(kernel(draws)))


def _m_dep_closed_form(space, m, kernels, n_out) -> ClosedFormDiffs:
    def windows_at(k: int) -> list[int]:
        return [i for i in range(max(0, k - m + 1), min(k, n_out - 1) + 1)]

    def kernel_partial(i: int, X: np.ndarray, integrate: Sequence[int]) -> np.ndarray:
        """E[kernel_i(window) | window coords not in ``integrate``]."""
        block = np.asarray(X, dtype=float)[:, i:i + m]
        if not integrate:
            return np.asarray(kernels[i](block), dtype=float)
        vals, weights = _window_grid(space, [i + pos for pos in integrate])
        out = np.zeros(len(block))
        work = block.copy()
        for row, w in zip(vals, weights):
            for pos, v in zip(integrate, row):
                work[:, pos] = v
            out += w * np.asarray(kernels[i](work), dtype=float)
        return out

    def d(X, k):
        out = np.zeros(len(X))
        for i in windows_at(k):
            pos = k - i
            out += kernel_partial(i, X, []) - kernel_partial(i, X, [pos])
        return out

    def fwd(X, k):
        # E[D_k F | X_0..X_k] sums E[xi_i | .. X_k] - E[xi_i | .. X_{k-1}]
        out = np.zeros(len(X))
        for i in windows_at(k):
            above = [p for p in range(m) if i + p > k]
            out += kernel_partial(i, X, above) - kernel_partial(
                i, X, sorted(above + [k - i])
            )
        return out

    def bwd(X, k):
        out = np.zeros(len(X))
        for i in windows_at(k):
            below = [p for p in range(m) if i + p < k]
            out += kernel_partial(i, X, below) - kernel_partial(
                i, X, sorted(below + [k - i])
            )
        return out

    return ClosedFormDiffs(d, fwd, bwd)


def _m_dep_variance(space, m, kernels, centerings) -> float:
    """Exact Var(F): overlapping-window covariances by enumeration."""
    n_out = len(kernels)
    terms = []
    for i in range(n_out):
        for j in range(i, min(i + m, n_out)):
            coords = list(range(i, j + m))
            vals, weights = _window_grid(space, coords)
            xi_i = np.asarray(kernels[i](vals[:, :m]), dtype=float)
            xi_j = np.asarray(kernels[j](vals[:, j - i:j - i + m]), dtype=float)
            cov = math.fsum(weights * xi_i * xi_j) - centerings[i] * centerings[j]
            terms.append(cov if i == j else 2.0 * cov)
    return math.fsum(terms)


# ----------------------------------------------------------------------
# quadratic forms
# ----------------------------------------------------------------------

def quadratic_form(space: ProductSpace, matrix: np.ndarray,
                   label: str = "") -> StatisticModel:
    """F = sum_{u < v} a_uv X_u X_v for standardized components.

    The coefficient matrix must be symmetric with a zero diagonal, and
    every component exactly mean-zero with unit variance; the bound
    evaluators lean on both facts.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise AsymmetricMatrix(f"coefficient matrix must be square, got {A.shape}")
    if A.shape[0] != space.n:
        raise ArityMismatch(
            f"matrix is {A.shape[0]}x{A.shape[0]}, space has {space.n} components"
        )
    if not np.array_equal(A, A.T):
        raise AsymmetricMatrix("coefficient matrix is not symmetric")
    if np.any(np.diag(A) != 0.0):
        raise NonzeroDiagonal("coefficient matrix must have a zero diagonal")
    for j, comp in enumerate(space.components):
        if abs(comp.mean) > 1e-12 or abs(comp.variance - 1.0) > 1e-12:
            raise BadStandardization(
                f"component {j} ({comp.describe()}) is not mean-zero unit-variance"
            )
    # the zero matrix is legal: F vanishes identically and so do all diffs
    variance = 0.5 * math.fsum((A * A).ravel())
    lower = np.tril(A).T.copy()
    upper = np.triu(A).T.copy()

    def evaluate_batch(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return 0.5 * ((X @ A) * X).sum(axis=1)

    def d(X, k):
        X = np.asarray(X, dtype=float)
        return X[:, k] * (X @ A[k])

    def fwd(X, k):
        X = np.asarray(X, dtype=float)
        return X[:, k] * (X[:, :k + 1] @ A[k, :k + 1])

    def bwd(X, k):
        X = np.asarray(X, dtype=float)
        return X[:, k] * (X[:, k:] @ A[k, k:])

    def z2_pointwise(X, alpha):
        X = np.asarray(X, dtype=float)
        R = X @ A
        P = X @ lower
        Q = X @ upper
        return (X * X * R * (alpha * P + (1.0 - alpha) * Q)).sum(axis=1)

    return StatisticModel(
        space=space,
        evaluate_batch=evaluate_batch,
        closed_form=ClosedFormDiffs(d, fwd, bwd),
        variance=variance,
        centering=0.0,
        label=label or f"quadratic_form(n={space.n})",
        z2_pointwise=z2_pointwise,
        meta={"family": "quadratic_form", "matrix": A},
    )


def circulant_band(n: int, bandwidth: int = 1) -> np.ndarray:
    """Symmetric circulant coupling: a_uv = 1 iff u, v are within
    ``bandwidth`` of each other cyclically.  Zero diagonal."""
    if n < 2 * bandwidth + 1:
        raise ArityMismatch(f"need n > 2*bandwidth, got n={n}, bandwidth={bandwidth}")
    A = np.zeros((n, n))
    for off in range(1, bandwidth + 1):
        idx = np.arange(n)
        A[idx, (idx + off) % n] = 1.0
        A[(idx + off) % n, idx] = 1.0
    return A


# ----------------------------------------------------------------------
# black box
# ----------------------------------------------------------------------

def black_box(space: ProductSpace, evaluator: Callable,
              vectorized: bool = False, label: str = "") -> StatisticModel:
    """Wrap an arbitrary callable; no structure is assumed or exploited."""

    if vectorized:
        def evaluate_batch(X: np.ndarray) -> np.ndarray:
            return np.asarray(evaluator(np.asarray(X, dtype=float)), dtype=float)
    else:
        def evaluate_batch(X: np.ndarray) -> np.ndarray:
            X = np.asarray(X, dtype=float)
            return np.array([float(evaluator(row)) for row in X])

    return StatisticModel(
        space=space,
        evaluate_batch=evaluate_batch,
        label=label or "black_box",
        meta={"family": "black_box"},
    )
