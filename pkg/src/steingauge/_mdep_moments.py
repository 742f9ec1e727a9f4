"""Exact kernel moment sums for m-dependent statistics.

Both helpers enumerate finite window supports; they are the inputs to the
closed-form m-dependent bounds.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import MomentDoesNotExist
from .statistics import StatisticModel, _window_grid


def _require_finite(model: StatisticModel) -> None:
    if not all(c.is_finite for c in model.space.components):
        raise MomentDoesNotExist(
            "exact kernel moments need finite-support components"
        )


def mdep_abs_moment_sum(model: StatisticModel, order: float) -> float:
    """sum_i E|xi_i - E xi_i|^order, enumerated window by window."""
    _require_finite(model)
    m = model.meta["m"]
    kernels = model.meta["kernels"]
    centerings = model.meta["centerings"]
    space = model.space
    cache: dict = {}
    terms = []
    for i, kernel in enumerate(kernels):
        comp_key = tuple(
            (c.family, tuple(sorted(c.params.items())))
            for c in space.components[i:i + m]
        )
        key = (id(kernel), comp_key, float(centerings[i]))
        if key not in cache:
            vals, weights = _window_grid(space, range(i, i + m))
            centered = np.asarray(kernel(vals), dtype=float) - centerings[i]
            cache[key] = math.fsum(weights * np.abs(centered) ** order)
        terms.append(cache[key])
    return math.fsum(terms)


def mdep_third_moment(model: StatisticModel) -> float:
    """Exact E[F^3] for an m-dependent sum of centered kernels.

    Centered kernel triples factor across any window gap of at least m,
    and a lone centered factor kills the product, so only chains with
    consecutive sorted gaps below m contribute.  Each sorted chain is
    enumerated once over its union window and weighted by the number of
    orderings that collapse to it.
    """
    _require_finite(model)
    m = model.meta["m"]
    kernels = model.meta["kernels"]
    centerings = model.meta["centerings"]
    space = model.space
    n_out = len(kernels)
    terms = []
    for a in range(n_out):
        for b in range(a, min(a + m, n_out)):
            for c in range(b, min(b + m, n_out)):
                distinct = len({a, b, c})
                mult = {1: 1.0, 2: 3.0, 3: 6.0}[distinct]
                vals, weights = _window_grid(space, range(a, c + m))
                prod = np.ones(len(vals))
                for idx in (a, b, c):
                    block = vals[:, idx - a:idx - a + m]
                    prod = prod * (
                        np.asarray(kernels[idx](block), dtype=float)
                        - centerings[idx]
                    )
                terms.append(mult * math.fsum(weights * prod))
    return math.fsum(terms)
