"""Config-driven experiment runner and verification batteries.

An experiment sweeps a grid of statistic sizes: for each n it evaluates
one bound, draws standardized samples, measures the empirical distances
to the normal, and checks the soundness sandwiches.  Results persist as
a manifest (config + git hash + seed), a per-n CSV, log-log rate fits,
and an optional SVG plot.  Reruns with the same config are byte
identical regardless of thread count: all randomness flows from the root
seed through per-(n, batch) substreams and aggregation order is fixed.

The module also hosts the randomized verification batteries: the moment
inequalities behind the proofs, the covariance/difference identities,
and the equation-solver smoothness contracts.
"""

from __future__ import annotations

import json
import math
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import bounds as bnd
from . import difference as diff
from . import distances as dist
from . import statistics as statistics_mod
from . import stein
from .difference import AlphaParams, ExactEngine, MCBudget
from .distributions import DistributionSpec, ProductSpace, finite_support, rademacher
from .distributions import sample as draw_rows
from .errors import ConfigError, DegenerateFit

STATISTIC_FAMILIES = ("partial_sum", "product_example", "m_runs", "quadratic_form")

PROFILE_BOUNDS = (bnd.D1_TERMWISE, bnd.D1_AGGREGATE, bnd.D2_TERMWISE, bnd.D2_AGGREGATE)
CLOSED_BOUNDS = (bnd.PARTIAL_SUM_D1, bnd.PARTIAL_SUM_D2, bnd.MDEP_D1, bnd.MDEP_D2,
                 bnd.QUADFORM_D1)

_BOUND_COMPAT = {
    "partial_sum": PROFILE_BOUNDS + (bnd.PARTIAL_SUM_D1, bnd.PARTIAL_SUM_D2),
    "product_example": PROFILE_BOUNDS,
    "m_runs": PROFILE_BOUNDS + (bnd.MDEP_D1, bnd.MDEP_D2),
    "quadratic_form": PROFILE_BOUNDS + (bnd.QUADFORM_D1,),
}

#: second-order bounds compare against the panel lower bound, first-order
#: ones against the empirical W1
_D2_BOUNDS = (bnd.D2_TERMWISE, bnd.D2_AGGREGATE, bnd.PARTIAL_SUM_D2, bnd.MDEP_D2)

_SAMPLE_BATCH = 10_000

_CONFIG_KEYS = {
    "statistic", "bound", "delta", "n_grid", "samples_per_n", "seed",
    "output_dir", "component", "alpha", "beta", "gamma", "params",
    "threads", "bootstrap", "plot", "mc",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; mirrors the TOML field-for-field.

    For ``m_runs`` the grid value n counts the kernel windows, so the
    underlying space has n + m - 1 components; every other family reads
    n as the component count.
    """

    statistic: str
    bound: str
    delta: float
    n_grid: tuple[int, ...]
    samples_per_n: int
    seed: int
    output_dir: str
    component: DistributionSpec | None = None
    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 0.5
    params: dict = field(default_factory=dict)
    threads: int = 1
    bootstrap: int = 200
    plot: bool = False
    mc: MCBudget | None = None

    def alpha_params(self) -> AlphaParams:
        return AlphaParams(self.alpha, self.beta, self.gamma)

    def to_json(self) -> dict:
        return {
            "statistic": self.statistic,
            "bound": self.bound,
            "delta": self.delta,
            "n_grid": list(self.n_grid),
            "samples_per_n": self.samples_per_n,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "component": None if self.component is None else self.component.to_json(),
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "params": dict(self.params),
            "threads": self.threads,
            "bootstrap": self.bootstrap,
            "plot": self.plot,
            "mc": None if self.mc is None else self.mc.to_json(),
        }


def _fail(msg: str) -> ConfigError:
    return ConfigError(msg)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a parsed config mapping into an :class:`ExperimentConfig`."""
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise _fail(f"unknown config keys: {sorted(unknown)}")
    for key in ("statistic", "bound", "delta", "n_grid", "samples_per_n",
                "seed", "output_dir"):
        if key not in raw:
            raise _fail(f"config is missing required key {key!r}")

    statistic = raw["statistic"]
    if statistic not in STATISTIC_FAMILIES:
        raise _fail(f"statistic must be one of {STATISTIC_FAMILIES}, got {statistic!r}")
    bound = raw["bound"]
    if bound not in _BOUND_COMPAT[statistic]:
        raise _fail(
            f"bound {bound!r} does not apply to statistic {statistic!r};"
            f" choose from {_BOUND_COMPAT[statistic]}"
        )

    delta = float(raw["delta"])
    if not 0.0 < delta <= 1.0:
        raise _fail(f"delta must lie in (0, 1], got {delta}")

    n_grid = raw["n_grid"]
    if (not isinstance(n_grid, (list, tuple)) or len(n_grid) < 1
            or any(int(n) != n for n in n_grid)):
        raise _fail("n_grid must be a list of integers")
    n_grid = tuple(int(n) for n in n_grid)
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise _fail(f"n_grid must be strictly increasing, got {list(n_grid)}")
    if n_grid[0] < 2:
        raise _fail(f"grid sizes must be >= 2, got {n_grid[0]}")

    samples_per_n = int(raw["samples_per_n"])
    if samples_per_n < 1000:
        raise _fail(f"samples_per_n must be >= 1000, got {samples_per_n}")

    seed = int(raw["seed"])
    if seed < 0:
        raise _fail(f"seed must be nonnegative, got {seed}")

    output_dir = str(raw["output_dir"])
    if not output_dir:
        raise _fail("output_dir must be a nonempty path")

    component = None
    if "component" in raw:
        comp_raw = dict(raw["component"])
        family = comp_raw.pop("family", None)
        if family is None:
            raise _fail("component table needs a 'family' key")
        try:
            component = DistributionSpec.from_json(
                {"family": family, "params": comp_raw}
            )
        except (KeyError, ValueError) as exc:
            raise _fail(f"bad component spec: {exc}") from exc
    if statistic == "product_example":
        if component is not None and component.family != "rademacher":
            raise _fail("product_example is defined on fair signs only")
    elif component is None:
        raise _fail(f"statistic {statistic!r} needs a component table")

    params = dict(raw.get("params", {}))
    threads = int(raw.get("threads", 1))
    if threads < 1:
        raise _fail(f"threads must be >= 1, got {threads}")
    bootstrap = int(raw.get("bootstrap", 200))
    if bootstrap < 0:
        raise _fail(f"bootstrap must be >= 0, got {bootstrap}")

    mc = None
    if "mc" in raw:
        try:
            mc = MCBudget(**raw["mc"])
        except (TypeError, ValueError) as exc:
            raise _fail(f"bad mc budget: {exc}") from exc

    try:
        alpha = float(raw.get("alpha", 0.5))
        beta = float(raw.get("beta", 0.5))
        gamma = float(raw.get("gamma", 0.5))
        AlphaParams(alpha, beta, gamma)
    except Exception as exc:
        raise _fail(f"bad filtration weights: {exc}") from exc

    return ExperimentConfig(
        statistic=statistic, bound=bound, delta=delta, n_grid=n_grid,
        samples_per_n=samples_per_n, seed=seed, output_dir=output_dir,
        component=component, alpha=alpha, beta=beta, gamma=gamma,
        params=params, threads=threads, bootstrap=bootstrap,
        plot=bool(raw.get("plot", False)), mc=mc,
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment config."""
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise _fail(f"{path}: not valid TOML: {exc}") from exc
    except OSError as exc:
        raise _fail(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw)


# ----------------------------------------------------------------------
# model and bound dispatch
# ----------------------------------------------------------------------

def _build_model(config: ExperimentConfig, n: int):
    if config.statistic == "partial_sum":
        return statistics_mod.partial_sum(ProductSpace.iid(config.component, n))
    if config.statistic == "product_example":
        return statistics_mod.product_example(n)
    if config.statistic == "m_runs":
        m = int(config.params.get("m", 2))
        space = ProductSpace.iid(config.component, n + m - 1)
        return statistics_mod.m_runs(space, m)
    if config.statistic == "quadratic_form":
        bandwidth = int(config.params.get("bandwidth", 1))
        matrix = statistics_mod.circulant_band(n, bandwidth)
        return statistics_mod.quadratic_form(
            ProductSpace.iid(config.component, n), matrix
        )
    raise _fail(f"unknown statistic {config.statistic!r}")


def _evaluate_bound(config: ExperimentConfig, model):
    """Bound report plus the moment profile when one was computed."""
    b = config.bound
    if b == bnd.PARTIAL_SUM_D1:
        return bnd.partial_sum_d1_bound(model.space, config.delta), None
    if b == bnd.PARTIAL_SUM_D2:
        return bnd.partial_sum_d2_bound(model.space, config.delta), None
    if b in (bnd.MDEP_D1, bnd.MDEP_D2):
        return bnd.m_dependent_bound(
            model, config.delta, "d1" if b == bnd.MDEP_D1 else "d2"
        ), None
    if b == bnd.QUADFORM_D1:
        return bnd.quadratic_form_d1_bound(
            model, config.delta, c_choice=float(config.params.get("c_choice", 1.0))
        ), None
    level = "d1" if b in (bnd.D1_TERMWISE, bnd.D1_AGGREGATE) else "d2"
    form = "termwise" if b in (bnd.D1_TERMWISE, bnd.D2_TERMWISE) else "aggregate"
    prof = diff.profile(
        model, config.delta, config.alpha_params(), level=level,
        budget=config.mc, seed=config.seed, threads=config.threads,
    )
    if level == "d1":
        return bnd.d1_bound(prof, form), prof
    return bnd.d2_bound(prof, form), prof


def _lemma_entry(config: ExperimentConfig, model, prof) -> dict:
    """Both sides of E[F^3] = 2 E[Z] for one second-order grid entry.

    Enumerable spaces get the two-route exact check.  Otherwise the
    values ship from whatever route produced them (profile, statistic
    hook, window enumeration, or Monte Carlo), tagged so readers can
    tell a genuine cross-check from a closed form that bakes the
    identity in.
    """
    p = config.alpha_params()
    if model.space.is_enumerable:
        tm = diff.third_moment_check(model, p.alpha, p.beta)
        return {"mode": "exact", "ef3": tm.ef3,
                "twice_ez3": tm.twice_ez3, "residual": tm.residual}
    if prof is not None and not math.isnan(prof.ef3):
        mode = "hook" if prof.meta.get("hook") else prof.mode
        return {"mode": mode, "ef3": prof.ef3,
                "twice_ez3": 2.0 * prof.ez3,
                "residual": abs(prof.ef3 - 2.0 * prof.ez3)}
    if model.exact_profile is not None:
        hooked = model.exact_profile(config.delta, p, "d2")
        if hooked is not None:
            return {"mode": "hook", "ef3": hooked.ef3,
                    "twice_ez3": 2.0 * hooked.ez3,
                    "residual": abs(hooked.ef3 - 2.0 * hooked.ez3)}
    if model.meta.get("family") in ("m_dependent", "m_runs"):
        third = bnd.mdep_third_moment(model)
        return {"mode": "window_identity", "ef3": third,
                "twice_ez3": third, "residual": 0.0}
    tm = diff.third_moment_check(model, p.alpha, p.beta,
                                 budget=config.mc, seed=config.seed)
    return {"mode": tm.mode, "ef3": tm.ef3,
            "twice_ez3": tm.twice_ez3, "residual": tm.residual}


def standardized_samples(config: ExperimentConfig, model, n_index: int) -> np.ndarray:
    """samples_per_n draws of F / sigma, split into fixed-size batches.

    Batch b of grid entry i draws from the substream keyed
    (seed, i, b), and batches concatenate in index order, so the output
    is independent of how many threads ran them.
    """
    sigma = math.sqrt(model.variance)
    total = config.samples_per_n
    sizes = []
    while total > 0:
        sizes.append(min(_SAMPLE_BATCH, total))
        total -= sizes[-1]

    def one_batch(b: int) -> np.ndarray:
        X = draw_rows(model.space, [config.seed, n_index, b], sizes[b])
        return np.asarray(model.evaluate_batch(X), dtype=float) / sigma

    indices = range(len(sizes))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(one_batch, indices))
    else:
        parts = [one_batch(b) for b in indices]
    return np.concatenate(parts)


# ----------------------------------------------------------------------
# rate fits
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    """Least-squares power law through (n, value) points in log10 space."""

    points: tuple[tuple[int, float], ...]
    slope: float
    intercept: float
    max_abs_residual: float

    def to_json(self) -> dict:
        return {
            "points": [[n, v] for n, v in self.points],
            "slope": self.slope,
            "intercept": self.intercept,
            "max_abs_residual": self.max_abs_residual,
        }


def fit_rate(points) -> RateFit:
    """Slope and intercept of log10(value) against log10(n)."""
    pts = tuple((int(n), float(v)) for n, v in points)
    if len(pts) < 4:
        raise DegenerateFit(f"rate fits need at least 4 points, got {len(pts)}")
    if any(v <= 0.0 for _, v in pts):
        raise DegenerateFit("rate fits need strictly positive values")
    x = np.log10([n for n, _ in pts])
    y = np.log10([v for _, v in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.max(np.abs(y - (slope * x + intercept))))
    return RateFit(points=pts, slope=float(slope), intercept=float(intercept),
                   max_abs_residual=resid)


# ----------------------------------------------------------------------
# experiment driver
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    reports: tuple[bnd.BoundReport, ...]
    w1: tuple[dist.DistanceEstimate, ...]
    d2: tuple[dist.DistanceEstimate, ...]
    rate_fits: dict
    lemma_check: tuple[dict, ...]
    violations: tuple[str, ...]
    output_dir: Path

    @property
    def ok(self) -> bool:
        return not self.violations


def _git_hash() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def _package_version() -> str:
    try:
        from importlib.metadata import version
        return version("steingauge")
    except Exception:
        return "unknown"


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Sweep the grid, persist artifacts, and check the sandwiches.

    Soundness checks per grid entry: the empirical distance matching the
    bound's smoothness class must not exceed the bound total by more than
    five combined standard errors, and the panel lower bound must respect
    class containment against W1.  Violations are collected, not raised;
    the CLI turns them into a nonzero exit code.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    reports: list[bnd.BoundReport] = []
    w1s: list[dist.DistanceEstimate] = []
    d2s: list[dist.DistanceEstimate] = []
    lemma_rows: list[dict] = []
    violations: list[str] = []

    for idx, n in enumerate(config.n_grid):
        try:
            model = _build_model(config, n)
            report, prof = _evaluate_bound(config, model)
            if config.bound in _D2_BOUNDS:
                row = dict(_lemma_entry(config, model, prof), n=n)
                lemma_rows.append(row)
                if row["mode"] == "exact" and row["residual"] > 1e-9:
                    violations.append(
                        f"n={n}: E[F^3] = {row['ef3']:.6e} but 2 E[Z] ="
                        f" {row['twice_ez3']:.6e} (exact residual"
                        f" {row['residual']:.2e} > 1e-9)"
                    )
        except Exception as exc:
            raise type(exc)(f"n={n}: {exc}") from exc
        samples = standardized_samples(config, model, idx)
        w1 = dist.w1_to_normal(samples, bootstrap=config.bootstrap,
                               seed=config.seed + 1000003 * idx)
        d2l = dist.d2_lower(samples, bootstrap=config.bootstrap,
                            seed=config.seed + 1000003 * idx + 1)
        reports.append(report)
        w1s.append(w1)
        d2s.append(d2l)

        if config.bound in _D2_BOUNDS:
            slack = 5.0 * (d2l.resample_std_error + report.total_se)
            if d2l.value > report.total + slack:
                violations.append(
                    f"n={n}: d2 lower {d2l.value:.6g} exceeds bound"
                    f" {report.total:.6g} + slack {slack:.2g}"
                )
        else:
            slack = 5.0 * (w1.resample_std_error + report.total_se)
            if w1.value > report.total + slack:
                violations.append(
                    f"n={n}: empirical W1 {w1.value:.6g} exceeds bound"
                    f" {report.total:.6g} + slack {slack:.2g}"
                )
        contain = 3.0 * (w1.resample_std_error + d2l.resample_std_error)
        if d2l.value > w1.value + contain:
            violations.append(
                f"n={n}: panel lower {d2l.value:.6g} exceeds W1"
                f" {w1.value:.6g} + slack {contain:.2g} (class containment)"
            )

    term_count = len(reports[0].terms)
    columns = (["n", "bound_total"]
               + [f"bound_term_{i + 1}" for i in range(term_count)]
               + ["w1", "w1_se", "d2_lower", "d2_se"])
    lines = [",".join(columns)]
    for n, rep, w1, d2l in zip(config.n_grid, reports, w1s, d2s):
        cells = [str(n), _fmt(rep.total)]
        cells += [_fmt(t.value) for t in rep.terms]
        cells += [_fmt(w1.value), _fmt(w1.resample_std_error),
                  _fmt(d2l.value), _fmt(d2l.resample_std_error)]
        lines.append(",".join(cells))
    (out_dir / "results.csv").write_text("\n".join(lines) + "\n")

    rate_fits = {}
    for name, series in (
        ("bound_total", [r.total for r in reports]),
        ("w1", [e.value for e in w1s]),
        ("d2_lower", [e.value for e in d2s]),
    ):
        try:
            rate_fits[name] = fit_rate(list(zip(config.n_grid, series)))
        except DegenerateFit:
            rate_fits[name] = None

    manifest = {
        "config": config.to_json(),
        "git_hash": _git_hash(),
        "package_version": _package_version(),
        "columns": columns,
        "lemma_check": lemma_rows,
        "violations": violations,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    (out_dir / "rates.json").write_text(
        json.dumps(
            {k: (v.to_json() if v is not None else None)
             for k, v in rate_fits.items()},
            indent=2, sort_keys=True,
        ) + "\n"
    )
    if config.plot:
        _write_plot(out_dir / "plot.svg", config, reports, w1s, d2s)

    return ExperimentResult(
        config=config, reports=tuple(reports), w1=tuple(w1s), d2=tuple(d2s),
        rate_fits=rate_fits, lemma_check=tuple(lemma_rows),
        violations=tuple(violations), output_dir=out_dir,
    )


def _write_plot(path: Path, config: ExperimentConfig, reports, w1s, d2s) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed hash salt and no date metadata keep the SVG byte-stable
    with plt.rc_context({"svg.hashsalt": "steingauge"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ns = list(config.n_grid)
        ax.loglog(ns, [r.total for r in reports], "o-", label=config.bound)
        ax.loglog(ns, [e.value for e in w1s], "s--", label="empirical W1")
        ax.loglog(ns, [e.value for e in d2s], "d:", label="panel lower")
        ax.set_xlabel("n")
        ax.set_ylabel("distance")
        ax.legend(fontsize=8)
        ax.set_title(f"{config.statistic}, delta={config.delta:g}", fontsize=9)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


# ----------------------------------------------------------------------
# verification batteries
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BatteryReport:
    """Outcome of one randomized battery: violations and tightness."""

    name: str
    cases: int
    max_violation: float
    threshold: float
    histogram: tuple[int, ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.max_violation <= self.threshold

    def summary(self) -> str:
        state = "PASS" if self.ok else "FAIL"
        return (f"{self.name}: {self.cases} cases,"
                f" max violation {self.max_violation:.3e}"
                f" (threshold {self.threshold:.0e}) -> {state}")


def _random_space(rng: np.random.Generator, max_n: int = 8) -> ProductSpace:
    """2 to max_n coordinates, each fair signs or an asymmetric two-pointer."""
    n = int(rng.integers(2, max_n + 1))
    comps = []
    for _ in range(n):
        if rng.random() < 0.5:
            comps.append(rademacher())
        else:
            a, b = np.sort(rng.uniform(-1.5, 1.5, size=2))
            while b - a < 0.1:
                a, b = np.sort(rng.uniform(-1.5, 1.5, size=2))
            p = float(rng.uniform(0.15, 0.85))
            comps.append(finite_support([(float(a), p), (float(b), 1.0 - p)]))
    return ProductSpace(tuple(comps))


def _random_polynomial(rng: np.random.Generator, n: int):
    """Random sparse polynomial, degree <= 2 per coordinate, |coeff| <= 1."""
    terms = []
    for _ in range(int(rng.integers(1, 6))):
        width = int(rng.integers(1, min(3, n) + 1))
        coords = rng.choice(n, size=width, replace=False)
        powers = rng.integers(1, 3, size=width)
        coeff = float(rng.uniform(-1.0, 1.0))
        terms.append((coeff, list(map(int, coords)), list(map(int, powers))))
    const = float(rng.uniform(-1.0, 1.0)) if rng.random() < 0.5 else 0.0

    def evaluate(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(len(X), const)
        for coeff, coords, powers in terms:
            prod = np.full(len(X), coeff)
            for c, p in zip(coords, powers):
                prod *= X[:, c] ** p
            out += prod
        return out

    return evaluate


def inequality_battery(seed: int = 0, cases: int = 240) -> BatteryReport:
    """Moment inequalities for difference operators, checked exactly.

    Rotates through the square-function bound
    ``||U||_p^2 <= |EU|^2 + (p-1) sum_k ||D_k U||_p^2``, the fractional
    moment bound ``E|U|^(1+d) <= |EU|^(1+d) + 2^(2-d) sum_k E|D_k U|^(1+d)``,
    and the jackknife variance bound
    ``E U^2 <= (EU)^2 + sum_k E (D_k U)^2`` on random polynomial
    statistics over small enumerable spaces.  Contract: no violation
    beyond 1e-10 relative.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11]))
    p_choices = (2.0, 2.5, 3.0, 4.0)
    d_choices = (0.25, 0.5, 0.75, 1.0)
    worst = 0.0
    ratios = []
    for case in range(cases):
        space = _random_space(rng)
        eng = ExactEngine(space)
        t = eng.tensor(_random_polynomial(rng, space.n))
        eu = eng.expect(t)
        dks = [eng.diff_k(t, k) for k in range(eng.n)]
        kind = case % 3
        if kind == 0:
            p = p_choices[int(rng.integers(len(p_choices)))]
            lhs = eng.expect(np.abs(t) ** p) ** (2.0 / p)
            rhs = eu * eu + (p - 1.0) * math.fsum(
                eng.expect(np.abs(d) ** p) ** (2.0 / p) for d in dks
            )
        elif kind == 1:
            d = d_choices[int(rng.integers(len(d_choices)))]
            lhs = eng.expect(np.abs(t) ** (1.0 + d))
            rhs = abs(eu) ** (1.0 + d) + 2.0 ** (2.0 - d) * math.fsum(
                eng.expect(np.abs(dd) ** (1.0 + d)) for dd in dks
            )
        else:
            lhs = eng.expect(t * t)
            rhs = eu * eu + math.fsum(eng.expect(d * d) for d in dks)
        worst = max(worst, (lhs - rhs) / max(1.0, abs(rhs)))
        ratios.append(lhs / rhs if rhs > 0 else 1.0)
    hist, _ = np.histogram(np.clip(ratios, 0.0, 1.0), bins=10, range=(0.0, 1.0))
    return BatteryReport(
        name="inequalities", cases=cases, max_violation=max(worst, 0.0),
        threshold=1e-10, histogram=tuple(int(c) for c in hist),
    )


def identity_battery(seed: int = 0, cases: int = 240) -> BatteryReport:
    """Exact identities and projection contractions on random statistics.

    Rotates through (a) the covariance identity
    ``Cov(U, V) = E[sum_k D_k U * D~_k(alpha) V]`` at alpha in {0, 1/2, 1},
    (b) the pointwise-difference moment contractions
    ``E|D_k U|^p <= 2^p E|U|^p`` and ``E|D~_k(w) U|^p <= E|D_k U|^p``,
    and (c) ``E[F^3] = 2 E[Z3]`` for centered statistics.  Identity
    residuals are absolute, contractions relative; threshold 1e-9.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1DE]))
    weight_choices = (0.0, 0.4, 1.0)
    p_choices = (1.5, 2.0, 3.0)
    worst = 0.0
    for case in range(cases):
        space = _random_space(rng)
        eng = ExactEngine(space)
        kind = case % 3
        if kind == 0:
            u = _random_polynomial(rng, space.n)
            v = _random_polynomial(rng, space.n)
            for alpha in (0.0, 0.5, 1.0):
                worst = max(worst, diff.covariance_identity_residual(
                    space, u, v, alpha
                ))
        elif kind == 1:
            t = eng.tensor(_random_polynomial(rng, space.n))
            p = p_choices[int(rng.integers(len(p_choices)))]
            eup = eng.expect(np.abs(t) ** p)
            for k in range(eng.n):
                dk = eng.diff_k(t, k)
                lhs = eng.expect(np.abs(dk) ** p)
                worst = max(worst, (lhs - 2.0 ** p * eup) / max(1.0, eup))
                for w in weight_choices:
                    proj = eng.expect(np.abs(eng.diff_weighted(t, k, w)) ** p)
                    worst = max(worst, (proj - lhs) / max(1.0, lhs))
        else:
            t = eng.tensor(_random_polynomial(rng, space.n))
            t = t - eng.expect(t)
            alpha = weight_choices[int(rng.integers(3))]
            beta = weight_choices[int(rng.integers(3))]
            ef3 = eng.expect(t ** 3)
            ez3 = eng.expect(eng.cubic_correction(t, alpha, beta))
            worst = max(worst, abs(ef3 - 2.0 * ez3))
    return BatteryReport(
        name="covariance", cases=cases, max_violation=max(worst, 0.0),
        threshold=1e-9,
    )


def stein_battery(deltas=(0.25, 0.5, 1.0)) -> BatteryReport:
    """Solver contracts over the full test-function battery.

    Checks the finite-difference residual, the derivative sup-norm caps,
    and the fractional smoothness ratios (contract 1 + 1e-3) at each
    requested exponent.  Violations are reported as excesses over the
    respective contract, so the threshold is zero.
    """
    worst = 0.0
    cases = 0
    notes = []
    for tf in stein.battery():
        sol = stein.solve(tf)
        for name, (observed, cap) in stein.sup_norm_report(sol).items():
            cases += 1
            # 1e-9 absolute slack absorbs quadrature noise on zero caps
            excess = (observed - cap - 1e-9) / max(1.0, cap)
            if excess > worst:
                worst = excess
            if excess > 0:
                notes.append(f"{tf.label}: {name} {observed:.6g} > cap {cap:.6g}")
        for d in deltas:
            ratios = [stein.holder_check_first(sol, d)]
            if sol.f_third is not None:
                ratios.append(stein.holder_check_second(sol, d))
            for ratio in ratios:
                cases += 1
                excess = ratio - (1.0 + 1e-3)
                if excess > worst:
                    worst = excess
                if excess > 0:
                    notes.append(f"{tf.label}: ratio {ratio:.6g} at delta {d:g}")
    return BatteryReport(
        name="stein", cases=cases, max_violation=max(worst, 0.0),
        threshold=0.0, notes=tuple(notes),
    )
