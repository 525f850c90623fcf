"""Config-driven experiment runner over the estimator library.

Each subcommand reads one sectioned key=value config file, runs a single
experiment, and writes its reports into an output directory: delimited
tables whose first line is a schema comment, SVG log-log plots for the
convergence studies, and the fully resolved configuration with every
default filled in.  Numeric table fields are written with repr, so
rerunning a config reproduces the files byte for byte regardless of the
worker count.

Exit codes: 0 when every embedded assertion passed, 1 when one failed,
2 for an invalid config or command line, 3 when a simulation diverged.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .coeffs import CoefficientSet, check_assumption_level, constant_map, linear_combination
from .errors import box_domain, rate_fit
from .euler import NoiseStream, TimeGrid, coarsen_increments, simulate_batch
from .growth import analytic_growth, linear_gauge, verify_calculus
from .mces import (
    EstimationError,
    PlanInfeasibleError,
    PlanInputs,
    SobolevEstimate,
    _worker_count,
    estimate_sobolev,
    estimate_value,
    plan_sample_sizes,
)
from .netexport import (
    AffineLayer,
    NetSpec,
    build_mces_network,
    count_bound,
    eval_network,
    freeze_realization,
    param_count,
    to_json,
)
from .perturb import coupled_gap_check, eta_requirement, pair_from_sets, verify_expectation_gap
from .problems import BenchmarkProblem, make_problem

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

_CSV_SCHEMA = "mceuler-csv v1"
_SWEEP_CHUNK = 1 << 14

# Every recognized (section, key) pair; anything else in a config file is
# rejected up front so typos surface as diagnostics, not silent defaults.
_SCHEMA = {
    "experiment": ("seed", "workers", "out", "plot"),
    "fixture": ("name", "d", "t", "theta", "s"),
    "estimate": ("m", "n", "x", "z-max"),
    "sweep": ("n", "m", "slope-max", "r2-min", "slope-target", "slope-tol"),
    "plan": (
        "epsilon",
        "delta",
        "alpha",
        "r",
        "rhs-constant",
        "kappa",
        "coefficient-bound",
        "horizon-t",
        "dim-d",
        "perturbed",
        "time-dependent",
        "n-cap",
    ),
    "perturb": ("target", "shift", "epsilon", "paths", "domain-low", "domain-high"),
    "export": ("path", "tolerance"),
}

_BOOLEANS = {
    "1": True,
    "true": True,
    "yes": True,
    "on": True,
    "0": False,
    "false": False,
    "no": False,
    "off": False,
}

_REQUIRED = object()


class ConfigError(Exception):
    """Invalid config file or field; the message names the offender."""


class _Resolver:
    """Typed reader over parsed config values that records every resolution.

    ``resolved`` maps section -> {key: canonical string} and accumulates
    defaults as they are consulted, so the emitted resolved config shows
    exactly what the run used.
    """

    def __init__(self, values: dict[str, dict[str, str]]) -> None:
        self._values = values
        self.resolved: dict[str, dict[str, str]] = {}

    def override(self, section: str, key: str, raw: str) -> None:
        self._values.setdefault(section, {})[key] = raw

    def record(self, section: str, key: str, text: str) -> None:
        self.resolved.setdefault(section, {})[key] = text

    def _fetch(self, section: str, key: str, default):
        raw = self._values.get(section, {}).get(key)
        if raw is None and default is _REQUIRED:
            raise ConfigError(f"[{section}] {key} is required")
        return raw

    def get_str(self, section: str, key: str, default=_REQUIRED) -> str:
        raw = self._fetch(section, key, default)
        value = default if raw is None else raw
        self.record(section, key, value)
        return value

    def get_int(self, section: str, key: str, default=_REQUIRED) -> int:
        raw = self._fetch(section, key, default)
        if raw is None:
            value = default
        else:
            try:
                value = int(raw)
            except ValueError:
                raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}") from None
        self.record(section, key, str(value))
        return value

    def get_float(self, section: str, key: str, default=_REQUIRED) -> float:
        raw = self._fetch(section, key, default)
        if raw is None:
            value = float(default)
        else:
            try:
                value = float(raw)
            except ValueError:
                raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from None
        self.record(section, key, repr(value))
        return value

    def get_bool(self, section: str, key: str, default=_REQUIRED) -> bool:
        raw = self._fetch(section, key, default)
        if raw is None:
            value = bool(default)
        elif raw.lower() in _BOOLEANS:
            value = _BOOLEANS[raw.lower()]
        else:
            raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")
        self.record(section, key, "true" if value else "false")
        return value

    def get_ints(self, section: str, key: str, default=_REQUIRED) -> list[int]:
        raw = self._fetch(section, key, default)
        if raw is None:
            values = list(default)
        else:
            try:
                values = [int(tok) for tok in raw.split()]
            except ValueError:
                raise ConfigError(f"[{section}] {key}: expected integers, got {raw!r}") from None
        if not values:
            raise ConfigError(f"[{section}] {key}: needs at least one entry")
        self.record(section, key, " ".join(str(v) for v in values))
        return values

    def get_floats(self, section: str, key: str, default=_REQUIRED) -> list[float]:
        raw = self._fetch(section, key, default)
        if raw is None:
            values = [float(v) for v in default]
        else:
            try:
                values = [float(tok) for tok in raw.split()]
            except ValueError:
                raise ConfigError(f"[{section}] {key}: expected numbers, got {raw!r}") from None
        if not values:
            raise ConfigError(f"[{section}] {key}: needs at least one entry")
        self.record(section, key, " ".join(repr(v) for v in values))
        return values


def _load_config(path: Path) -> _Resolver:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except configparser.Error as err:
        raise ConfigError(str(err)) from None
    values: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            known = ", ".join(_SCHEMA)
            raise ConfigError(f"unknown section [{section}]; known sections: {known}")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"[{section}] {key}: unrecognized key")
        values[section] = dict(parser[section])
    return _Resolver(values)


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str


@dataclass
class RunContext:
    command: str
    config: _Resolver
    out: Path
    workers: int | None
    plot: bool
    checks: list[Check] = field(default_factory=list)

    def check(self, name: str, ok: bool, detail: str) -> None:
        self.checks.append(Check(name, bool(ok), detail))
        print(f"[{'ok' if ok else 'FAIL'}] {name}: {detail}")

    def artifact(self, path: Path) -> None:
        print(f"wrote {path}")


def _emit_resolved(ctx: RunContext) -> None:
    lines = []
    for section in _SCHEMA:
        entries = ctx.config.resolved.get(section)
        if not entries:
            continue
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in entries.items())
        lines.append("")
    path = ctx.out / "resolved.ini"
    path.write_text("\n".join(lines))
    ctx.artifact(path)


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(ctx: RunContext, name: str, header: list[str], rows: list[list]) -> Path:
    path = ctx.out / name
    with path.open("w", newline="") as fh:
        fh.write(f"# {_CSV_SCHEMA} {ctx.command}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    ctx.artifact(path)
    return path


def _plot_loglog(ctx: RunContext, name: str, sizes, errors, fit, xlabel: str, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "mceuler"
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.loglog(sizes, errors, "ko", label="measured")
    span = np.array([min(sizes), max(sizes)], dtype=float)
    ax.loglog(span, math.exp(fit.intercept) * span**fit.slope, "k--", label=f"slope {fit.slope:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("error")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    path = ctx.out / name
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    ctx.artifact(path)


def _load_problem(r: _Resolver) -> BenchmarkProblem:
    name = r.get_str("fixture", "name")
    d = r.get_int("fixture", "d", 1)
    horizon = r.get_float("fixture", "t", 1.0)
    params = {}
    if name == "ou":
        params["theta"] = r.get_float("fixture", "theta", 1.0)
        params["s"] = r.get_float("fixture", "s", 1.0)
    try:
        return make_problem(name, d, horizon, **params)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"[fixture] {err}") from None


def _eval_point(r: _Resolver, d: int) -> np.ndarray:
    values = r.get_floats("estimate", "x", [0.5])
    if len(values) == 1:
        values = values * d
    if len(values) != d:
        raise ConfigError(f"[estimate] x: expected 1 or {d} entries, got {len(values)}")
    r.record("estimate", "x", " ".join(repr(v) for v in values))
    return np.asarray(values, dtype=float)


def _scalar(arr) -> float:
    return float(np.asarray(arr).reshape(-1)[0])


def _require_clean(est: SobolevEstimate, m_total: int) -> None:
    if est.aborted_samples:
        raise EstimationError(f"{est.aborted_samples} of {m_total} sample paths diverged")
    fields = [est.value, est.std_error_value]
    if est.gradient is not None:
        fields += [est.gradient, est.std_error_gradient]
    if not all(np.isfinite(np.asarray(a)).all() for a in fields):
        raise EstimationError("estimate contains non-finite entries")


def _z_score(err: float, std_error: float) -> float:
    if std_error > 0.0:
        return err / std_error
    return 0.0 if err == 0.0 else math.inf


def _run_solve(ctx: RunContext) -> None:
    r = ctx.config
    seed = r.get_int("experiment", "seed")
    problem = _load_problem(r)
    d = problem.coefficients.dim_d
    samples = r.get_int("estimate", "m", 10_000)
    steps = r.get_int("estimate", "n", 16)
    z_max = r.get_float("estimate", "z-max", 4.0)
    x = _eval_point(r, d)
    _emit_resolved(ctx)

    est = estimate_value(problem.coefficients, x, samples, steps, seed, workers=ctx.workers)
    _require_clean(est, samples)
    value = _scalar(est.value)
    std_error = _scalar(est.std_error_value)
    exact = _scalar(problem.exact_value(0.0, x))
    err = abs(value - exact)
    z = _z_score(err, std_error)
    ok = z <= z_max
    _write_csv(
        ctx,
        "solve.csv",
        ["fixture", "d", "samples_m", "steps_n", "seed", "value", "std_error", "exact", "abs_error", "z_score", "aborted", "ok"],
        [[problem.name, d, samples, steps, seed, value, std_error, exact, err, z, est.aborted_samples, ok]],
    )
    ctx.check(
        "estimate within z-max standard errors",
        ok,
        f"value={value:.6g} exact={exact:.6g} z={z:.3f} (z-max {z_max:g})",
    )


def _run_sobolev(ctx: RunContext) -> None:
    r = ctx.config
    seed = r.get_int("experiment", "seed")
    problem = _load_problem(r)
    d = problem.coefficients.dim_d
    samples = r.get_int("estimate", "m", 10_000)
    steps = r.get_int("estimate", "n", 16)
    z_max = r.get_float("estimate", "z-max", 4.0)
    x = _eval_point(r, d)
    _emit_resolved(ctx)

    est = estimate_sobolev(problem.coefficients, x, samples, steps, seed, workers=ctx.workers)
    _require_clean(est, samples)
    exact_value = _scalar(problem.exact_value(0.0, x))
    exact_grad = problem.exact_grad(0.0, x)[:, 0]
    rows = []

    def add_row(label: str, got: float, std_error: float, want: float) -> bool:
        err = abs(got - want)
        z = _z_score(err, std_error)
        ok = z <= z_max
        rows.append([label, got, std_error, want, err, z, ok])
        return ok

    value_ok = add_row("value", _scalar(est.value), _scalar(est.std_error_value), exact_value)
    grad_ok = [
        add_row(f"grad[{i}]", float(est.gradient[0, i]), float(est.std_error_gradient[0, i]), float(exact_grad[i]))
        for i in range(d)
    ]
    _write_csv(
        ctx,
        "sobolev.csv",
        ["quantity", "estimate", "std_error", "exact", "abs_error", "z_score", "ok"],
        rows,
    )
    ctx.check("value within z-max standard errors", value_ok, f"exact={exact_value:.6g}")
    worst = max(range(d), key=lambda i: float(rows[1 + i][5]))
    ctx.check(
        "gradient within z-max standard errors",
        all(grad_ok),
        f"worst entry grad[{worst}] z={float(rows[1 + worst][5]):.3f} (z-max {z_max:g})",
    )


def _run_plan(ctx: RunContext) -> None:
    r = ctx.config
    r.get_int("experiment", "seed")
    epsilon = r.get_float("plan", "epsilon")
    delta = r.get_float("plan", "delta")
    alpha = r.get_float("plan", "alpha", 1.0)
    weight_r = r.get_float("plan", "r", 0.0)
    rhs_constant = r.get_float("plan", "rhs-constant", 1.0)
    kappa = r.get_float("plan", "kappa", 1.0)
    coefficient_bound = r.get_float("plan", "coefficient-bound", 0.0)
    horizon = r.get_float("plan", "horizon-t", 1.0)
    dim_d = r.get_int("plan", "dim-d", 1)
    perturbed = r.get_bool("plan", "perturbed", False)
    time_dependent = r.get_bool("plan", "time-dependent", False)
    n_cap = r.get_int("plan", "n-cap", 2**30)
    _emit_resolved(ctx)

    try:
        inputs = PlanInputs(
            epsilon=epsilon,
            delta=delta,
            alpha=alpha,
            r=weight_r,
            rhs_constant=rhs_constant,
            kappa=kappa,
            coefficient_bound=coefficient_bound,
            horizon_T=horizon,
            dim_d=dim_d,
            perturbed=perturbed,
            time_dependent=time_dependent,
            n_cap=n_cap,
        )
    except ValueError as err:
        raise ConfigError(f"[plan] {err}") from None
    plan = plan_sample_sizes(inputs)
    ok = plan.satisfied(inputs)
    _write_csv(
        ctx,
        "plan.csv",
        ["epsilon", "delta", "alpha", "samples_m", "steps_n", "branch", "rhs_effective", "n_floor", "satisfied"],
        [[
            epsilon,
            delta,
            alpha,
            plan.samples_M,
            plan.steps_N,
            plan.audit["branch"],
            plan.audit["rhs_effective"],
            plan.audit["n_floor"],
            ok,
        ]],
    )
    ctx.check(
        "planned sizes satisfy the accuracy inequality",
        ok,
        f"M={plan.samples_M} N={plan.steps_N} ({plan.audit['branch']})",
    )


def _path_summands(c: CoefficientSet, grid: TimeGrid, values: np.ndarray) -> np.ndarray:
    total = c.f.eval(grid.horizon_T, values[:, -1])
    running = np.zeros_like(total)
    for k in range(grid.steps):
        running += c.g.eval(grid.nodes[k], values[:, k])
    return total + grid.dt * running


def _coupled_means(c: CoefficientSet, x, steps_list, m_total, seed, workers):
    """Estimator means for every step count under one shared fine noise.

    The finest grid's increments are drawn per chunk and pairwise-summed
    for the coarser grids, so every step count sees the same Brownian
    paths.  Chunks are keyed by sample index and reduced in job order
    with exact summation; the worker count cannot change the result.
    """
    n_max = max(steps_list)
    stream = NoiseStream(seed)
    grids = {n: TimeGrid(0.0, c.horizon_T, n) for n in steps_list}
    scale = math.sqrt(grids[n_max].dt)
    jobs = [(m0, min(_SWEEP_CHUNK, m_total - m0)) for m0 in range(0, m_total, _SWEEP_CHUNK)]

    def run(job):
        m0, count = job
        fine = scale * stream.standard_normal_block(m0, count, n_max, c.noise_dim)
        out = {}
        for n, grid in grids.items():
            dw = coarsen_increments(fine, n_max // n)
            values, _, first_bad = simulate_batch(c, x, grid, dw)
            alive = first_bad < 0
            summands = _path_summands(c, grid, values)
            out[n] = (int(alive.sum()), summands[alive].sum(axis=0))
        return out

    n_workers = _worker_count(workers)
    if n_workers == 1 or len(jobs) == 1:
        chunks = [run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            chunks = list(pool.map(run, jobs))

    means = {}
    aborted = 0
    for n in steps_list:
        count = sum(chunk[n][0] for chunk in chunks)
        aborted = max(aborted, m_total - count)
        if count == 0:
            raise EstimationError(f"every sample diverged on the {n}-step grid")
        dim_o = chunks[0][n][1].shape[0]
        total = np.array([math.fsum(float(chunk[n][1][i]) for chunk in chunks) for i in range(dim_o)])
        means[n] = total / count
    return means, aborted


def _validate_step_sweep(sweep: list[int]) -> None:
    if len(sweep) < 3:
        raise ConfigError("[sweep] n: need at least three step counts to fit a rate")
    if any(n < 1 for n in sweep) or sorted(set(sweep)) != sweep:
        raise ConfigError("[sweep] n: step counts must be positive and strictly increasing")
    n_max = sweep[-1]
    bad = [n for n in sweep if n_max % n]
    if bad:
        raise ConfigError(f"[sweep] n: {bad[0]} does not divide the finest count {n_max}, so paths cannot be coupled")


def _run_converge_n(ctx: RunContext) -> None:
    r = ctx.config
    seed = r.get_int("experiment", "seed")
    problem = _load_problem(r)
    d = problem.coefficients.dim_d
    samples = r.get_int("estimate", "m", 100_000)
    sweep = r.get_ints("sweep", "n", [4, 8, 16, 32, 64])
    _validate_step_sweep(sweep)
    slope_max = r.get_float("sweep", "slope-max", -0.8)
    r2_min = r.get_float("sweep", "r2-min", 0.95)
    x = _eval_point(r, d)
    _emit_resolved(ctx)

    means, aborted = _coupled_means(problem.coefficients, x, sweep, samples, seed, ctx.workers)
    if aborted:
        raise EstimationError(f"{aborted} of {samples} coupled sample paths diverged")
    exact = problem.exact_value(0.0, x)
    rows = []
    points = []
    for n in sweep:
        error = float(np.linalg.norm(means[n] - exact))
        rows.append([n, problem.coefficients.horizon_T / n, _scalar(means[n]), _scalar(exact), error])
        points.append((n, error))
    _write_csv(ctx, "converge_n.csv", ["steps_n", "dt", "value", "exact", "error"], rows)
    try:
        fit = rate_fit(points)
    except ValueError as err:
        ctx.check("log-log rate fit", False, str(err))
        return
    _write_csv(
        ctx,
        "converge_n_fit.csv",
        ["slope", "intercept", "r_squared", "points"],
        [[fit.slope, fit.intercept, fit.r_squared, len(points)]],
    )
    if ctx.plot:
        _plot_loglog(ctx, "converge_n.svg", [p[0] for p in points], [p[1] for p in points], fit, "steps N", f"{problem.name}: weak error vs N")
    ctx.check("weak rate at least the target", fit.slope <= slope_max, f"slope={fit.slope:.3f} (max {slope_max:g})")
    ctx.check("rate fit quality", fit.r_squared >= r2_min, f"r2={fit.r_squared:.4f} (min {r2_min:g})")


def _run_converge_m(ctx: RunContext) -> None:
    r = ctx.config
    seed = r.get_int("experiment", "seed")
    problem = _load_problem(r)
    d = problem.coefficients.dim_d
    steps = r.get_int("estimate", "n", 16)
    sweep = r.get_ints("sweep", "m", [1000, 10_000, 100_000])
    if len(sweep) < 3:
        raise ConfigError("[sweep] m: need at least three sample counts to fit a rate")
    if any(m < 2 for m in sweep) or sorted(set(sweep)) != sweep:
        raise ConfigError("[sweep] m: sample counts must be at least 2 and strictly increasing")
    slope_target = r.get_float("sweep", "slope-target", -0.5)
    slope_tol = r.get_float("sweep", "slope-tol", 0.05)
    x = _eval_point(r, d)
    _emit_resolved(ctx)

    exact = _scalar(problem.exact_value(0.0, x))
    rows = []
    points = []
    for m in sweep:
        est = estimate_value(problem.coefficients, x, m, steps, seed, workers=ctx.workers)
        _require_clean(est, m)
        value = _scalar(est.value)
        std_error = _scalar(est.std_error_value)
        rows.append([m, value, std_error, abs(value - exact)])
        points.append((m, std_error))
    _write_csv(ctx, "converge_m.csv", ["samples_m", "value", "std_error", "abs_error"], rows)
    try:
        fit = rate_fit(points)
    except ValueError as err:
        ctx.check("log-log rate fit", False, str(err))
        return
    _write_csv(
        ctx,
        "converge_m_fit.csv",
        ["slope", "intercept", "r_squared", "points"],
        [[fit.slope, fit.intercept, fit.r_squared, len(points)]],
    )
    if ctx.plot:
        _plot_loglog(ctx, "converge_m.svg", [p[0] for p in points], [p[1] for p in points], fit, "samples M", f"{problem.name}: standard error vs M")
    ctx.check(
        "statistical error decays at the Monte Carlo rate",
        abs(fit.slope - slope_target) <= slope_tol,
        f"slope={fit.slope:.4f} (target {slope_target:g} +- {slope_tol:g})",
    )


def _run_perturb(ctx: RunContext) -> None:
    r = ctx.config
    seed = r.get_int("experiment", "seed")
    problem = _load_problem(r)
    c = problem.coefficients
    d, horizon = c.dim_d, c.horizon_T
    n_floor = math.ceil(d + horizon + 1.0)
    samples = r.get_int("estimate", "m", 10_000)
    steps = r.get_int("estimate", "n", n_floor)
    if steps < d + horizon + 1.0:
        raise ConfigError(f"[estimate] n: the gap bound needs n >= d + T + 1 = {d + horizon + 1:g}, got {steps}")
    target = r.get_str("perturb", "target", "drift")
    if target not in ("drift", "payoff"):
        raise ConfigError(f"[perturb] target: expected drift or payoff, got {target!r}")
    shift = r.get_float("perturb", "shift", 1e-15)
    epsilon = r.get_float("perturb", "epsilon", 0.1)
    paths = r.get_int("perturb", "paths", 1000)
    low = r.get_float("perturb", "domain-low", 0.0)
    high = r.get_float("perturb", "domain-high", 1.0)
    if not low < high:
        raise ConfigError("[perturb] domain-low: must be strictly below domain-high")
    x = _eval_point(r, d)
    _emit_resolved(ctx)

    if target == "drift":
        bump = linear_combination(1.0, c.mu, 1.0, constant_map(np.full(d, shift), d))
        pert = replace(c, mu=bump)
    else:
        bump = linear_combination(1.0, c.f, 1.0, constant_map(np.full(c.dim_o, shift), d))
        pert = replace(c, f=bump)
    pair = pair_from_sets(c, pert, eta=analytic_growth(abs(shift), 1.0, 0, note="constant component shift"))
    domain = box_domain([(low, high)] * d)
    eta_max = eta_requirement(epsilon, pair, steps, domain)
    eta_ok = pair.eta.value <= eta_max
    gap = verify_expectation_gap(pair, x, samples, steps, seed, workers=ctx.workers)
    pathwise = coupled_gap_check(pair, x, paths, steps, seed)
    _write_csv(
        ctx,
        "perturb.csv",
        [
            "fixture",
            "target",
            "eta",
            "eta_max",
            "eta_ok",
            "empirical_gap",
            "gap_bound",
            "gap_ok",
            "pathwise_margin",
            "pathwise_ok",
            "aborted",
            "advisory",
        ],
        [[
            problem.name,
            target,
            pair.eta.value,
            eta_max,
            eta_ok,
            gap.empirical,
            gap.bound,
            gap.holds,
            pathwise.margin,
            pathwise.holds,
            pathwise.aborted,
            pair.advisory,
        ]],
    )
    if not eta_ok:
        print(f"note: eta={pair.eta.value:.3g} exceeds eta-max={eta_max:.3g} for epsilon={epsilon:g} at N={steps}")
    ctx.check("empirical gap within the worst-case bound", gap.holds, f"gap={gap.empirical:.3g} bound={gap.bound:.3g}")
    ctx.check(
        "pathwise coupling bound holds at every node",
        pathwise.holds,
        f"margin={pathwise.margin:.3g} over {paths} paths",
    )


_CALCULUS_BATTERY = (
    ("index-shift", {"r": 1.0, "k": 2, "l": 1, "m": 0}, False),
    ("antiderivative", {"r": 1.0, "k": 2, "m": 1}, False),
    ("lift-commute", {"r": 1.0, "l": 1, "m": 1}, False),
    ("lift-retract", {"r": 1.0, "k": 2, "j": 1}, False),
    ("generator-plain", {"r1": 1.0, "r2": 1.0, "r3": 1.0}, True),
)


def _run_growth_check(ctx: RunContext) -> None:
    r = ctx.config
    r.get_int("experiment", "seed")
    problem = _load_problem(r)
    c = problem.coefficients
    _emit_resolved(ctx)

    rows = []
    for level in dict.fromkeys((problem.assumption_level, "A4.4")):
        report = check_assumption_level(c, level)
        rows.append(["assumption", level, "", "", report.passed, "; ".join(report.failures)])
        ctx.check(f"assumption level {level}", report.passed, "; ".join(report.failures) or "all probes passed")
    for name, declared in (("mu", problem.mu_gauge), ("sigma", problem.sigma_gauge)):
        measured = linear_gauge(getattr(c, name)).value
        ok = measured <= declared.value + 1e-9
        rows.append(["gauge", name, measured, declared.value, ok, "probe supremum vs declared bound"])
        ctx.check(f"{name} gauge within its declared bound", ok, f"{measured:.6g} <= {declared.value:.6g}")
    for lemma, params, wants_coefficients in _CALCULUS_BATTERY:
        report = verify_calculus(c.f, lemma, params, coefficients=c if wants_coefficients else None)
        detail = " ".join(f"{k}={v}" for k, v in params.items())
        rows.append(["calculus", lemma, report.lhs, report.rhs, report.holds, detail])
        ctx.check(f"calculus inequality {lemma}", report.holds, f"lhs={report.lhs:.6g} rhs={report.rhs:.6g}")
    _write_csv(ctx, "growth_check.csv", ["kind", "name", "lhs", "rhs", "holds", "detail"], rows)


def _affine_net(weight: np.ndarray, bias: np.ndarray) -> NetSpec:
    weight = np.asarray(weight, dtype=float)
    bias = np.asarray(bias, dtype=float)
    return NetSpec((AffineLayer(weight, bias, np.zeros(bias.shape[0], dtype=bool)),))


def _run_nn_export(ctx: RunContext) -> None:
    r = ctx.config
    seed = r.get_int("experiment", "seed")
    name = r.get_str("fixture", "name")
    if name != "ou":
        raise ConfigError("[fixture] name: the export needs affine coefficients; use the ou fixture")
    d = r.get_int("fixture", "d", 1)
    horizon = r.get_float("fixture", "t", 1.0)
    theta = r.get_float("fixture", "theta", 1.0)
    noise_level = r.get_float("fixture", "s", 1.0)
    try:
        problem = make_problem("ou", d, horizon, theta=theta, s=noise_level)
    except ValueError as err:
        raise ConfigError(f"[fixture] {err}") from None
    samples = r.get_int("estimate", "m", 2)
    steps = r.get_int("estimate", "n", 3)
    width = samples * (d + 1)
    if width > 4096:
        raise ConfigError(f"[estimate] m: the export network would be {width} nodes wide; cap is 4096")
    tolerance = r.get_float("export", "tolerance", 1e-12)
    file_name = r.get_str("export", "path", "network.json")
    x = _eval_point(r, d)
    _emit_resolved(ctx)

    direction = np.zeros(d)
    direction[0] = 1.0
    mu_net = _affine_net(-theta * np.eye(d), np.zeros(d))
    sigma_net = _affine_net(np.zeros((d, d * d)), (noise_level * np.eye(d)).ravel())
    f_net = _affine_net(direction[:, None], np.zeros(1))
    g_net = _affine_net(np.zeros((d, 1)), np.zeros(1))
    frozen = freeze_realization(seed, samples, steps, horizon, f_net, g_net, mu_net, sigma_net)
    network = build_mces_network(frozen)
    path = ctx.out / file_name
    path.write_text(to_json(network))
    ctx.artifact(path)

    est = estimate_value(problem.coefficients, x, samples, steps, seed, workers=ctx.workers)
    _require_clean(est, samples)
    oracle = _scalar(est.value)
    network_value = float(eval_network(network, x)[0])
    rel_diff = abs(network_value - oracle) / (1.0 + abs(oracle))
    params = param_count(network)
    bound = count_bound(frozen)
    _write_csv(
        ctx,
        "nn_export.csv",
        ["fixture", "d", "samples_m", "steps_n", "seed", "depth", "param_count", "count_bound", "oracle", "network_value", "rel_diff", "file"],
        [[problem.name, d, samples, steps, seed, network.depth, params, bound, oracle, network_value, rel_diff, file_name]],
    )
    ctx.check("network reproduces the estimator", rel_diff <= tolerance, f"rel diff {rel_diff:.3g} (tolerance {tolerance:g})")
    ctx.check("parameter count within the product bound", params <= bound, f"{params} <= {bound}")


_RUNNERS = {
    "solve": _run_solve,
    "plan": _run_plan,
    "converge-n": _run_converge_n,
    "converge-m": _run_converge_m,
    "sobolev": _run_sobolev,
    "perturb": _run_perturb,
    "growth-check": _run_growth_check,
    "nn-export": _run_nn_export,
}

_HELP = {
    "solve": "one value estimate checked against the fixture's exact solution",
    "plan": "pick (M, N) for an accuracy target and re-audit the inequality",
    "converge-n": "coupled step-count sweep with a fitted weak rate",
    "converge-m": "sample-count sweep with a fitted statistical rate",
    "sobolev": "value and gradient estimate checked against exact derivatives",
    "perturb": "perturbation gap report: eta budget, bound, empirical gap",
    "growth-check": "assumption, gauge, and calculus inequality audit",
    "nn-export": "materialize a frozen run as a network file and verify it",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mceuler", description="Experiment runner for the Monte Carlo Euler estimator.")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for command in _RUNNERS:
        sub = subparsers.add_parser(command, help=_HELP[command])
        sub.add_argument("config", help="path to the experiment config file")
        sub.add_argument("--out", help="output directory (overrides [experiment] out)")
        sub.add_argument("--seed", type=int, help="overrides [experiment] seed")
        sub.add_argument("--workers", type=int, help="overrides [experiment] workers")
        sub.add_argument("--no-plot", action="store_true", help="skip SVG plot rendering")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    ctx = None
    try:
        resolver = _load_config(Path(args.config))
        if args.seed is not None:
            resolver.override("experiment", "seed", str(args.seed))
        if args.workers is not None:
            resolver.override("experiment", "workers", str(args.workers))
        if args.out is not None:
            resolver.override("experiment", "out", args.out)
        if args.no_plot:
            resolver.override("experiment", "plot", "false")
        out = Path(resolver.get_str("experiment", "out", str(Path("runs") / args.command)))
        workers = resolver.get_int("experiment", "workers", 0)
        plot = resolver.get_bool("experiment", "plot", True)
        out.mkdir(parents=True, exist_ok=True)
        ctx = RunContext(command=args.command, config=resolver, out=out, workers=workers or None, plot=plot)
        _RUNNERS[args.command](ctx)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except PlanInfeasibleError as err:
        print(f"plan infeasible: {err}", file=sys.stderr)
        return EXIT_ASSERTION
    except EstimationError as err:
        print(f"numeric divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    failed = sum(1 for check in ctx.checks if not check.ok)
    print(f"{args.command}: {len(ctx.checks) - failed}/{len(ctx.checks)} checks passed")
    return EXIT_ASSERTION if failed else EXIT_OK
