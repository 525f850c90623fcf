"""Release scorecard: eleven numbered ship gates, one test each.

Every test prints exactly one "criterion NN (<label>): PASS|FAIL" line, so a
verbose run doubles as the sign-off sheet.  Stochastic gates pin their seeds
and use four-standard-error intervals, rate gates pin slope windows, and the
structural suites demand zero violations across every probed point or path.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import replace
from itertools import product
from pathlib import Path

import numpy as np

from conftest import (
    bilinear_map,
    norm_square_map,
    shifted_cosine_map,
    sine_map,
    sine_product_map,
    square_map,
)
from mceuler.cli import main as cli_main
from mceuler.coeffs import (
    CoefficientSet,
    SmoothMap,
    constant_map,
    lift_coefficient_set,
    linear_combination,
    linear_map,
)
from mceuler.errors import ball_conversion_constant, rate_fit, verify_ball_lemma
from mceuler.euler import NoiseStream, TimeGrid, coupled_pair, pathwise_bounds, simulate_batch
from mceuler.growth import ProbeSpec, analytic_growth, verify_calculus
from mceuler.mces import PlanInputs, estimate_sobolev, estimate_value, plan_sample_sizes
from mceuler.netexport import (
    AffineLayer,
    NetSpec,
    build_mces_network,
    count_bound,
    eval_network,
    freeze_realization,
    network_map,
    param_count,
)
from mceuler.perturb import PerturbedPair, coupled_gap_check, verify_expectation_gap
from mceuler.problems import make_problem


def _verdict(num: int, label: str, failures: list[str]) -> None:
    line = f"criterion {num:02d} ({label}): {'FAIL' if failures else 'PASS'}"
    print(line)
    assert not failures, line + " :: " + "; ".join(failures)


def _config(tmp_path: Path, text: str, name: str = "run.ini") -> Path:
    path = tmp_path / name
    path.write_text(text)
    return path


def _read_rows(path: Path) -> list[dict]:
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# mceuler-csv v1"), lines[0]
    return list(csv.DictReader(lines[1:]))


def test_criterion_01_heat_oracle():
    """Value and gradient of the unit-diffusion quadratic problem, d up to 10."""
    failures: list[str] = []
    started = time.perf_counter()
    for d in (1, 3, 10):
        c = make_problem("heat-quadratic", d, 1.0).coefficients
        est = estimate_value(c, np.zeros(d), M=100_000, N=64, seed=41)
        gap = abs(float(est.value[0]) - d * 1.0)
        rail = 4.0 * float(est.std_error_value[0])
        if not 0.0 < rail:
            failures.append(f"d={d}: value standard error vanished")
        if gap > rail:
            failures.append(f"d={d}: value off by {gap:.3g}, allowed {rail:.3g}")

        x = np.zeros(d)
        x[0] = 1.0
        sob = estimate_sobolev(c, x, M=100_000, N=64, seed=42)
        grad = sob.gradient[0]
        rails = 4.0 * sob.std_error_gradient[0]
        if not np.all(rails > 0.0):
            failures.append(f"d={d}: gradient standard error vanished")
        misses = np.abs(grad - 2.0 * x) > rails
        if misses.any():
            failures.append(f"d={d}: {int(misses.sum())} gradient entries outside 4 SE")
    elapsed = time.perf_counter() - started
    if elapsed > 60.0:
        failures.append(f"runtime {elapsed:.1f}s over the 60s budget")
    _verdict(1, "heat oracle", failures)


def test_criterion_02_step_rate(tmp_path):
    """Coupled step sweep on the d=5 manufactured fixture, one million paths."""
    failures: list[str] = []
    cfg = _config(
        tmp_path,
        "[experiment]\nseed = 2026\n\n"
        "[fixture]\nname = manufactured-sin-mean\nd = 5\n\n"
        "[estimate]\nx = 0.5\nm = 1000000\n\n"
        "[sweep]\nn = 4 8 16 32 64\n",
    )
    started = time.perf_counter()
    code = cli_main(["converge-n", str(cfg), "--out", str(tmp_path / "out"), "--no-plot"])
    elapsed = time.perf_counter() - started
    if code != 0:
        failures.append(f"converge-n exited {code}")
    else:
        fit = _read_rows(tmp_path / "out" / "converge_n_fit.csv")[0]
        slope, r2 = float(fit["slope"]), float(fit["r_squared"])
        if slope > -0.8:
            failures.append(f"slope {slope:.3f} above -0.8")
        if r2 < 0.95:
            failures.append(f"r-squared {r2:.4f} below 0.95")
    if elapsed > 600.0:
        failures.append(f"runtime {elapsed:.1f}s over the 600s budget")
    _verdict(2, "step-count rate", failures)


def test_criterion_03_sample_rate():
    """Reported standard error shrinks like one over the square root of M."""
    failures: list[str] = []
    c = make_problem("heat-quadratic", 3, 1.0).coefficients
    points = []
    for m in (1_000, 10_000, 100_000):
        est = estimate_value(c, np.zeros(3), M=m, N=8, seed=7)
        points.append((m, float(est.std_error_value[0])))
    fit = rate_fit(points)
    if abs(fit.slope + 0.5) > 0.05:
        failures.append(f"standard-error slope {fit.slope:.4f} outside -0.5 +/- 0.05")
    _verdict(3, "sample-count rate", failures)


def test_criterion_04_tangent_equality():
    """Doubled-state runs reproduce the derivative recursion on shared noise."""
    failures: list[str] = []
    cases = [
        ("heat-trig", 2, np.array([0.3, -0.2])),
        ("ou", 3, np.array([0.5, -0.3, 0.2])),
        ("manufactured-sin-mean", 2, np.array([0.4, 0.1])),
    ]
    for name, d, x in cases:
        c = make_problem(name, d, 1.0).coefficients
        grid = TimeGrid(0.0, 1.0, 8)
        dw = math.sqrt(grid.dt) * NoiseStream(404).standard_normal_block(0, 1000, 8, d)
        vals, tang, bad = simulate_batch(c, x, grid, dw, want_tangent=True)
        v = np.ones(d) / math.sqrt(d)
        lifted, _, bad_lift = simulate_batch(
            lift_coefficient_set(c), np.concatenate([x, v]), grid, dw
        )
        if (bad >= 0).any() or (bad_lift >= 0).any():
            failures.append(f"{name}: diverged paths in the equality run")
            continue
        direct = np.einsum("bnkq,q->bnk", tang, v)
        off = np.abs(lifted[..., d:] - direct) > 1e-10 * (1.0 + np.abs(direct))
        if off.any():
            failures.append(f"{name}: {int(off.sum())} lifted entries off by > 1e-10 rel")

        est = estimate_sobolev(c, x, M=1_000, N=8, seed=405)
        grad = est.gradient[0]
        h = 1e-4
        fd = np.empty(d)
        for i in range(d):
            dx = np.zeros(d)
            dx[i] = h
            hi = float(estimate_value(c, x + dx, M=1_000, N=8, seed=405).value[0])
            lo = float(estimate_value(c, x - dx, M=1_000, N=8, seed=405).value[0])
            fd[i] = (hi - lo) / (2.0 * h)
        gap = float(np.linalg.norm(fd - grad))
        rail = 1e-4 * (1.0 + float(np.linalg.norm(grad)))
        if gap > rail:
            failures.append(f"{name}: finite-difference gap {gap:.3g} over {rail:.3g}")
    _verdict(4, "tangent equality", failures)


def test_criterion_05_ball_quadrature():
    """Frobenius-vs-ball-integral conversion on random matrices, plus constants."""
    failures: list[str] = []
    rng = np.random.default_rng(55)
    worst = math.inf
    for d in (1, 2, 3):
        for _ in range(100):
            rep = verify_ball_lemma(rng.standard_normal((d, d)), count=1 << 17)
            if rep.nodes < 100_000:
                failures.append(f"d={d}: only {rep.nodes} quadrature nodes")
            worst = min(worst, rep.margin)
    if worst < -1e-6:
        failures.append(f"worst margin {worst:.3g} below -1e-6")

    if abs(ball_conversion_constant(1) - 1.5) > 1e-12:
        failures.append("d=1 conversion constant is not 3/2 to 1e-12")
    if abs(ball_conversion_constant(2) - 8.0 / math.pi) > 1e-12:
        failures.append("d=2 conversion constant is not 8/pi to 1e-12")
    for d in range(1, 11):
        lhs = 4.0 * math.gamma((d + 4) / 2.0)
        rhs = d * (d + 2) * math.gamma(d / 2.0)
        if abs(lhs - rhs) > 1e-12 * abs(rhs):
            failures.append(f"d={d}: factorial identity off beyond 1e-12 relative")
    _verdict(5, "ball quadrature", failures)


def _monomial_map(power: int, max_order: int = 6) -> SmoothMap:
    """d=1 scalar map h(y) = y^power with exact derivatives of every order."""

    def evaluator(t, x, order):
        y = x[..., 0]
        if order > power:
            val = np.zeros_like(y)
        else:
            val = math.perm(power, order) * y ** (power - order)
        return val[(...,) + (None,) * (order + 1)]

    return SmoothMap(1, 1, max_order, evaluator)


def _quartic_sum_map(dim: int, max_order: int = 6) -> SmoothMap:
    """Scalar map h(x) = sum_i x_i^4; mixed partials vanish."""

    def evaluator(t, x, order):
        batch = x.shape[:-1]
        if order == 0:
            return np.sum(x**4, axis=-1, keepdims=True)
        out = np.zeros(batch + (dim,) * order + (1,))
        if order <= 4:
            idx = np.arange(dim)
            out[(...,) + (idx,) * order + (0,)] = math.perm(4, order) * x ** (4 - order)
        return out

    return SmoothMap(dim, 1, max_order, evaluator)


def test_criterion_06_calculus_battery():
    """Every structural inequality holds on a probe of at least ten thousand points."""
    failures: list[str] = []
    probe = ProbeSpec(shells=25, directions=400)
    for dim in (1, 2, 3):
        count = int(np.prod(probe.points(dim).shape[:-1]))
        if count < 10_000:
            failures.append(f"probe has {count} points in dimension {dim}")

    battery = [
        ("square-poly", square_map(2)),
        ("norm-square", norm_square_map(3)),
        ("bilinear", bilinear_map()),
        ("quartic-1d", _monomial_map(4)),
        ("quartic-sum", _quartic_sum_map(2)),
        ("sine", sine_map()),
        ("one-plus-cosine", shifted_cosine_map()),
        ("sine-cosine-product", sine_product_map(6)),
        ("affine-lipschitz", linear_map(np.array([[0.7], [-0.4]]))),
    ]
    structural = [
        ("index-shift", {"r": 1.0, "k": 2, "l": 1, "m": 0}),
        ("antiderivative", {"r": 1.0, "k": 2, "m": 1}),
        ("lift-commute", {"r": 1.0, "l": 1, "m": 1}),
        ("lift-integral", {"r": 1.0, "k": 3, "l": 1, "m": 1, "j": 1}),
        ("lift-retract", {"r": 1.0, "k": 2, "j": 1}),
    ]
    for name, fixture in battery:
        for lemma, params in structural:
            report = verify_calculus(fixture, lemma, params, probe=probe)
            if not report.holds:
                failures.append(f"{name}/{lemma}: lhs {report.lhs:.3g} > rhs {report.rhs:.3g}")

    smooth_1d = CoefficientSet(
        mu=sine_map(),
        sigma=shifted_cosine_map(),
        f=norm_square_map(1),
        g=constant_map(np.zeros(1), 1),
        horizon_T=1.0,
        dim_d=1,
        dim_o=1,
    )
    generator_runs = [
        ("one-plus-cosine", shifted_cosine_map(), "generator-plain"),
        ("one-plus-cosine", shifted_cosine_map(), "generator-double"),
        ("bilinear", bilinear_map(), "generator-block"),
    ]
    for name, fixture, lemma in generator_runs:
        report = verify_calculus(
            fixture,
            lemma,
            {"r1": 1.0, "r2": 1.0, "r3": 1.0},
            probe=probe,
            coefficients=smooth_1d,
        )
        if not report.holds:
            failures.append(f"{name}/{lemma}: lhs {report.lhs:.3g} > rhs {report.rhs:.3g}")
    _verdict(6, "calculus battery", failures)


def _shifted_pair(d: int, shift: float) -> PerturbedPair:
    """Manufactured fixture next to a constant drift shift of gauge exactly `shift`.

    The hand constants bound the trig coefficients everywhere: drift and its
    gradient by sqrt(d)/2, diffusion by 3 sqrt(d)/4 and its gradient by
    sqrt(d)/4, payoff gradients by (49/32)/sqrt(d), all with growth power one.
    """
    base = make_problem("manufactured-sin-mean", d, 1.0).coefficients
    bump = constant_map(np.full(d, shift / math.sqrt(d)), d)
    pert = replace(base, mu=linear_combination(1.0, base.mu, 1.0, bump))
    c0 = max(1.0, (49.0 / 32.0) / math.sqrt(d))
    c1 = max(1.0, 0.75 * math.sqrt(d), 0.5 * math.sqrt(d) + shift)
    return PerturbedPair(
        base=base,
        pert=pert,
        eta=analytic_growth(shift, 1.0, 0, note="constant drift shift"),
        c0=analytic_growth(c0, 1.0, 0, note="payoff gradient bound"),
        c1=analytic_growth(c1, 1.0, 1, note="coefficient bound"),
    )


def test_criterion_07_pathwise_envelopes():
    """Growth and coupling envelopes at every node of ten thousand coupled paths."""
    failures: list[str] = []
    shift = 1e-3
    for d in (1, 5):
        pair = _shifted_pair(d, shift)
        if pair.advisory:
            failures.append(f"d={d}: pair fell back to probed constants")
        x = np.full(d, 0.3)
        rep = coupled_gap_check(pair, x, M=10_000, N=8, seed=1207)
        if rep.aborted:
            failures.append(f"d={d}: {rep.aborted} coupled paths aborted")
        if not rep.holds:
            failures.append(
                f"d={d}: coupling margin {rep.margin:.3g} at path {rep.worst_path}"
            )

        grid = TimeGrid(0.0, 1.0, 8)
        dw = math.sqrt(grid.dt) * NoiseStream(1207).standard_normal_block(0, 10_000, 8, d)
        growth_c = 0.75 * math.sqrt(d) + shift
        for tag, cset in (("base", pair.base), ("shifted", pair.pert)):
            vals, _, bad = simulate_batch(cset, x, grid, dw)
            if (bad >= 0).any():
                failures.append(f"d={d} {tag}: diverged paths in the growth audit")
                continue
            delta = grid.dt + np.linalg.norm(dw, axis=2).max(axis=1)
            log_norms = np.log1p(np.linalg.norm(vals, axis=2))
            log_rhs = (
                np.arange(9)[None, :] * np.log1p(growth_c * delta)[:, None]
                + log_norms[:, :1]
            )
            bad_nodes = int((log_rhs - log_norms < 0.0).sum())
            if bad_nodes:
                failures.append(f"d={d} {tag}: growth bound broken at {bad_nodes} nodes")

        stream = NoiseStream(1208)
        for m in range(32):
            paths = coupled_pair(pair.base, pair.pert, x, x, grid, stream, m=m)
            audit = pathwise_bounds(paths, c0=growth_c, c1=pair.c1.value, eta=shift)
            if not (audit.state_holds and audit.coupling_holds):
                failures.append(f"d={d}: per-path audit failed at sample {m}")
                break
    _verdict(7, "pathwise envelopes", failures)


def test_criterion_08_expectation_gap():
    """Coupled estimate gap stays under the closed-form budget at small step counts."""
    failures: list[str] = []
    pair = _shifted_pair(1, 1e-3)
    for n in (3, 4):
        rep = verify_expectation_gap(pair, np.array([0.25]), M=10_000, N=n, seed=808)
        if rep.advisory:
            failures.append(f"N={n}: verdict is advisory, wanted analytic constants")
        if not rep.holds:
            failures.append(f"N={n}: gap {rep.empirical:.3g} over bound {rep.bound:.3g}")
        if not (math.isfinite(rep.bound) and rep.bound > 0.0):
            failures.append(f"N={n}: bound {rep.bound!r} is not a positive float")
    _verdict(8, "expectation gap", failures)


def _dims(d_in: int, d_out: int, depth: int, hidden: int) -> tuple[int, ...]:
    return (d_in,) + (hidden,) * (depth - 1) + (d_out,)


def _random_net(rng, dims, rho="tanh", scale=0.3) -> NetSpec:
    layers = []
    for i in range(len(dims) - 1):
        a, b = dims[i], dims[i + 1]
        hidden = i < len(dims) - 2
        layers.append(
            AffineLayer(
                scale * rng.standard_normal((a, b)),
                scale * rng.standard_normal(b),
                np.full(b, hidden),
            )
        )
    return NetSpec(tuple(layers), rho=rho)


def _random_realization(seed: int, rng, M: int, N: int, d: int, o: int, q: int):
    return freeze_realization(
        seed=seed,
        M=M,
        N=N,
        horizon_T=1.0,
        f_net=_random_net(rng, _dims(d, o, 2, d + 1)),
        g_nets=_random_net(rng, _dims(d, o, 2, d + 2)),
        mu_nets=_random_net(rng, _dims(d, d, 2, d + 1)),
        sigma_nets=_random_net(rng, _dims(d, d * q, 2, d + 2)),
    )


def test_criterion_09_network_export():
    """Exports replay the frozen estimator, respect the size bound, match the layout."""
    failures: list[str] = []
    d, o, q = 2, 1, 2
    rng = np.random.default_rng(909)
    off = 0
    for seed in range(20):
        fr = _random_realization(seed, rng, M=2, N=3, d=d, o=o, q=q)
        net = build_mces_network(fr)
        c = CoefficientSet(
            mu=network_map(fr.mu_nets[0]),
            sigma=network_map(fr.sigma_nets[0]),
            f=network_map(fr.f_net),
            g=network_map(fr.g_nets[0]),
            horizon_T=1.0,
            dim_d=d,
            dim_o=o,
            sigma_shape=(d, q),
        )
        xs = rng.standard_normal((100, d))
        net_vals = eval_network(net, xs)
        for i in range(100):
            oracle = estimate_value(c, xs[i], M=2, N=3, seed=seed).value
            if not np.all(np.abs(net_vals[i] - oracle) <= 1e-12 * (1.0 + np.abs(oracle))):
                off += 1
    if off:
        failures.append(f"{off} of 2000 replayed inputs beyond 1e-12 relative")

    for m, n in product((1, 2), (1, 3, 8)):
        fr = _random_realization(50 + m, rng, M=m, N=n, d=d, o=o, q=q)
        built = param_count(build_mces_network(fr))
        bound = count_bound(fr)
        if built > bound:
            failures.append(f"M={m} N={n}: {built} parameters over the bound {bound}")

    fr = freeze_realization(
        seed=1,
        M=2,
        N=3,
        horizon_T=1.0,
        f_net=_random_net(rng, (d, 3, o)),
        g_nets=_random_net(rng, (d, 3, o)),
        mu_nets=_random_net(rng, (d, 3, d)),
        sigma_nets=_random_net(rng, (d, 4, d * q)),
    )
    net = build_mces_network(fr)
    if net.depth != (fr.steps_N + 1) * fr.depth_D:
        failures.append(f"depth {net.depth}, wanted {(fr.steps_N + 1) * fr.depth_D}")
    if net.layer_dims != (2, 24, 6, 26, 6, 26, 6, 8, 1):
        failures.append(f"two-chain layout came out as {net.layer_dims}")
    _verdict(9, "network export", failures)


def test_criterion_10_planner_audit():
    """Planned sizes satisfy the budget inequality; shrinking epsilon never shrinks them."""
    failures: list[str] = []
    rng = np.random.default_rng(1010)
    for k in range(100):
        p = PlanInputs(
            epsilon=float(10.0 ** rng.uniform(-2.5, -0.5)),
            delta=float(rng.uniform(0.01, 0.2)),
            alpha=float(rng.uniform(0.5, 1.0)),
            r=float(rng.uniform(0.0, 2.0)),
            rhs_constant=float(10.0 ** rng.uniform(-0.3, 1.0)),
            kappa=float(10.0 ** rng.uniform(0.0, 1.0)),
            coefficient_bound=float(rng.uniform(0.0, 3.0)),
            horizon_T=float(rng.uniform(0.5, 4.0)),
            dim_d=int(rng.integers(1, 11)),
            perturbed=bool(rng.integers(0, 2)),
            time_dependent=bool(rng.integers(0, 2)),
        )
        plan = plan_sample_sizes(p)
        if not plan.satisfied(p):
            failures.append(f"draw {k}: plan ({plan.samples_M}, {plan.steps_N}) misses")

    sizes = []
    for k in range(8):
        p = PlanInputs(epsilon=0.2 / 2**k, delta=0.05, alpha=0.8, rhs_constant=2.0)
        plan = plan_sample_sizes(p)
        sizes.append((plan.samples_M, plan.steps_N))
    ms, ns = zip(*sizes)
    if any(a > b for a, b in zip(ms, ms[1:])) or any(a > b for a, b in zip(ns, ns[1:])):
        failures.append(f"sizes not monotone under shrinking epsilon: {sizes}")
    if not (ms[-1] > ms[0] and ns[-1] > ns[0]):
        failures.append(f"sizes never grew across the epsilon sweep: {sizes}")
    _verdict(10, "planner audit", failures)


def test_criterion_11_worker_determinism(tmp_path):
    """Worker count changes scheduling only; every CSV byte stays identical."""
    failures: list[str] = []
    runs = [
        (
            "solve",
            "[experiment]\nseed = 77\n\n[fixture]\nname = heat-quadratic\nd = 2\n\n"
            "[estimate]\nx = 0\nm = 40000\nn = 8\n",
            ("solve.csv",),
        ),
        (
            "converge-n",
            "[experiment]\nseed = 99\n\n[fixture]\nname = manufactured-sin-mean\nd = 1\n\n"
            "[estimate]\nx = 0.4\nm = 20000\n\n[sweep]\nn = 2 4 8\n",
            ("converge_n.csv", "converge_n_fit.csv"),
        ),
    ]
    for command, text, names in runs:
        cfg = _config(tmp_path, text, name=f"{command}.ini")
        outputs: dict[int, dict[str, bytes]] = {}
        for workers in (1, 4, 8):
            out = tmp_path / f"{command}-w{workers}"
            code = cli_main(
                [command, str(cfg), "--out", str(out), "--workers", str(workers), "--no-plot"]
            )
            if code != 0:
                failures.append(f"{command} with {workers} workers exited {code}")
            outputs[workers] = {name: (out / name).read_bytes() for name in names}
        for workers in (4, 8):
            for name in names:
                if outputs[workers][name] != outputs[1][name]:
                    failures.append(f"{command}/{name}: workers={workers} changed the bytes")
    _verdict(11, "worker determinism", failures)
