"""Estimation with substituted coefficients and the worst-case gap it incurs.

A perturbed pair couples a reference coefficient set with a stand-in whose
components differ by at most ``eta`` in the linear-growth gauge.  Running the
standard estimator on the stand-in under the same noise keying produces a
common-random-number coupling with the reference run, and the expectation gap
obeys an explicit bound whose step-count power forces every evaluation here
into the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coeffs import (
    CoefficientSet,
    check_assumption_level,
    derivative_map,
    lift_augmented,
    map_difference,
)
from .errors import DEFAULT_RULE, CompactDomain, QuadratureRule, weighted_norm
from .euler import NoiseStream, TimeGrid, _log_margins, simulate_batch
from .growth import DEFAULT_PROBE, GrowthEstimate, ProbeSpec, linear_gauge
from .mces import EstimationError, SobolevEstimate, estimate_sobolev, estimate_value

_GAP_CHUNK = 1 << 12
_LOG_FLOAT_MAX = math.log(np.finfo(float).max)
_COMPONENTS = ("mu", "sigma", "f", "g")


def _require_matching(base: CoefficientSet, pert: CoefficientSet) -> None:
    same = (
        base.dim_d == pert.dim_d
        and base.dim_o == pert.dim_o
        and base.sigma_shape == pert.sigma_shape
        and base.horizon_T == pert.horizon_T
    )
    if not same:
        raise ValueError("reference and stand-in sets must share dimensions and horizon")


def perturbation_eta(
    base: CoefficientSet,
    pert: CoefficientSet,
    probe: ProbeSpec | None = None,
    sobolev: bool = False,
) -> GrowthEstimate:
    """Largest linear-growth gauge among the four component differences.

    With ``sobolev`` each difference is lifted to the doubled state space
    before gauging; the lift is linear, so this equals the difference of the
    lifted components.
    """
    _require_matching(base, pert)
    probe = probe or DEFAULT_PROBE
    worst: GrowthEstimate | None = None
    for name in _COMPONENTS:
        diff = map_difference(getattr(base, name), getattr(pert, name))
        if sobolev:
            diff = lift_augmented(diff)
        est = linear_gauge(diff, probe)
        if worst is None or est.value > worst.value:
            worst = est
    assert worst is not None
    return worst


def probed_constants(
    base: CoefficientSet,
    pert: CoefficientSet,
    probe: ProbeSpec | None = None,
    sobolev: bool = False,
) -> tuple[GrowthEstimate, GrowthEstimate]:
    """Floor-one growth constants measured on the shared probe.

    ``c0`` gauges the payoff gradients of the reference set; ``c1`` gauges
    the coefficients of both sets, with gradients taken on the reference side
    only.  With ``sobolev`` every component is lifted first.  Probe suprema
    are lower bounds, so inequalities checked against them stay advisory.
    """
    _require_matching(base, pert)
    probe = probe or DEFAULT_PROBE

    def component(c: CoefficientSet, name: str):
        h = getattr(c, name)
        return lift_augmented(h) if sobolev else h

    def gauge(h) -> float:
        return linear_gauge(h, probe).value

    def grad_gauge(h) -> float:
        return linear_gauge(derivative_map(h, 1), probe).value

    c0 = max(1.0, grad_gauge(component(base, "f")), grad_gauge(component(base, "g")))
    c1 = max(
        1.0,
        gauge(component(base, "mu")),
        grad_gauge(component(base, "mu")),
        gauge(component(base, "sigma")),
        grad_gauge(component(base, "sigma")),
        gauge(component(pert, "mu")),
        gauge(component(pert, "sigma")),
    )
    spec = probe.describe(base.dim_d * (2 if sobolev else 1))
    return (
        GrowthEstimate(value=c0, mode="empirical", probe_spec=spec, r=1.0, k=0),
        GrowthEstimate(value=c1, mode="empirical", probe_spec=spec, r=1.0, k=0),
    )


@dataclass(frozen=True)
class PerturbedPair:
    """Reference coefficients next to their perturbed stand-in.

    ``eta`` is the largest component difference in the linear-growth gauge;
    ``c0`` and ``c1`` are the floor-one constants entering the gap bounds.
    Analytic estimates are trusted upper bounds.  Empirical ones are probe
    suprema, hence lower bounds, and every verdict derived from them is
    advisory.
    """

    base: CoefficientSet
    pert: CoefficientSet
    eta: GrowthEstimate
    c0: GrowthEstimate
    c1: GrowthEstimate

    def __post_init__(self) -> None:
        _require_matching(self.base, self.pert)

    @property
    def advisory(self) -> bool:
        return any(e.mode != "analytic" for e in (self.eta, self.c0, self.c1))


def pair_from_sets(
    base: CoefficientSet,
    pert: CoefficientSet,
    probe: ProbeSpec | None = None,
    *,
    eta: GrowthEstimate | None = None,
    c0: GrowthEstimate | None = None,
    c1: GrowthEstimate | None = None,
    sobolev: bool = False,
) -> PerturbedPair:
    """Assemble a pair, probing whichever constants were not supplied."""
    if eta is None:
        eta = perturbation_eta(base, pert, probe, sobolev=sobolev)
    if c0 is None or c1 is None:
        probed0, probed1 = probed_constants(base, pert, probe, sobolev=sobolev)
        c0 = probed0 if c0 is None else c0
        c1 = probed1 if c1 is None else c1
    return PerturbedPair(base=base, pert=pert, eta=eta, c0=c0, c1=c1)


def perturbed_estimate(
    pair: PerturbedPair,
    x,
    M: int,
    N: int,
    seed: int,
    sobolev: bool = False,
    t_start: float = 0.0,
    workers: int | None = None,
) -> SobolevEstimate:
    """Standard estimator run on the stand-in set, keyed like the reference run.

    Equal seeds share every Brownian increment sample-for-sample with the
    reference estimator, so differences of the two results are coupled
    common-random-number gap estimates.
    """
    report = check_assumption_level(pair.pert, "A4.4")
    if not report.passed:
        raise ValueError("stand-in set rejected: " + "; ".join(report.failures))
    if sobolev:
        return estimate_sobolev(pair.pert, x, M, N, seed, t_start=t_start, workers=workers)
    return estimate_value(pair.pert, x, M, N, seed, t_start=t_start, workers=workers)


def _log_scale(c0: float, c1: float, N: int, T: float, base: float) -> float:
    # c0 * T * N * (base * c1 * sqrt(TN))^(N(1+N)), logarithmically.
    return (
        math.log(c0)
        + math.log(T)
        + math.log(N)
        + N * (1 + N) * math.log(base * c1 * math.sqrt(T * N))
    )


def log_expectation_gap_bound(pair: PerturbedPair, x, N: int, T: float | None = None) -> float:
    """Log of the worst-case expectation gap at x; -inf when the sets agree."""
    T = pair.base.horizon_T if T is None else float(T)
    d = pair.base.dim_d
    if N < d + T + 1:
        raise ValueError(f"gap bound needs N >= d + T + 1 = {d + T + 1:g}, got {N}")
    if pair.eta.value == 0.0:
        return -math.inf
    nx = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    tail = float(np.logaddexp(0.0, (N + 1) * math.log(nx))) if nx > 0.0 else 0.0
    return (
        math.log(0.75)
        + math.log(pair.eta.value)
        + _log_scale(pair.c0.value, pair.c1.value, N, T, 6.0)
        + tail
    )


def expectation_gap_bound(pair: PerturbedPair, x, N: int, T: float | None = None) -> float:
    """Worst-case gap between reference and stand-in expectations at x.

    Evaluated in the log domain; the step-count power overflows direct
    arithmetic already for moderate N, in which case +inf is returned.
    """
    log_bound = log_expectation_gap_bound(pair, x, N, T)
    if log_bound == -math.inf:
        return 0.0
    return math.exp(log_bound) if log_bound < _LOG_FLOAT_MAX else math.inf


def log_eta_requirement(
    epsilon: float,
    pair: PerturbedPair,
    N: int,
    domain: CompactDomain,
    T: float | None = None,
    sobolev: bool = False,
    rule: QuadratureRule = DEFAULT_RULE,
) -> float:
    """Log of the largest perturbation gauge meeting the accuracy target.

    The admissible size divides epsilon by c0 T N (b c1 sqrt(TN))^(N(1+N))
    times the L2(domain) norm of 1 + ||x||^(N+1), where b = 6 for the plain
    estimator; the gradient-carrying variant uses b = 7 and an extra 3d.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    T = pair.base.horizon_T if T is None else float(T)
    d = pair.base.dim_d
    if domain.dim != d:
        raise ValueError(f"domain dimension {domain.dim} does not match state dimension {d}")
    log_rhs = _log_scale(pair.c0.value, pair.c1.value, N, T, 7.0 if sobolev else 6.0)
    log_rhs += math.log(weighted_norm(domain, float(N + 1), rule))
    if sobolev:
        log_rhs += math.log(3.0 * d)
    return math.log(epsilon) - log_rhs


def eta_requirement(
    epsilon: float,
    pair: PerturbedPair,
    N: int,
    domain: CompactDomain,
    T: float | None = None,
    sobolev: bool = False,
    rule: QuadratureRule = DEFAULT_RULE,
) -> float:
    """Largest admissible perturbation gauge; underflows to 0.0 for large N."""
    return math.exp(log_eta_requirement(epsilon, pair, N, domain, T, sobolev, rule))


@dataclass(frozen=True)
class CoupledGapReport:
    """Per-path, per-node audit of the coupling inequality.

    ``margin`` is the smallest log(rhs) - log(lhs) over live paths and grid
    nodes; nonnegative means containment everywhere.  Paths that leave float
    range on either side are excluded and counted in ``aborted``.
    """

    paths: int
    aborted: int
    margin: float
    holds: bool
    worst_path: int
    worst_step: int
    advisory: bool


def coupled_gap_check(
    pair: PerturbedPair, x, M: int, N: int, seed: int, t_start: float = 0.0
) -> CoupledGapReport:
    """Drive M coupled path pairs and check the pathwise coupling bound.

    Both runs start at x and share every increment, so the bound reduces to
    ||E_n - E'_n|| <= (1 + c1 D)^(n N) (1 + ||x||)^n eta with the per-path
    mesh D = dt + max_n ||dW_n||.
    """
    if M < 1:
        raise ValueError("need at least one coupled path")
    grid = TimeGrid(t_start, pair.base.horizon_T, N)
    stream = NoiseStream(seed)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    log_eta = math.log(pair.eta.value) if pair.eta.value > 0.0 else -math.inf
    log_start = math.log1p(float(np.linalg.norm(x)))
    c1 = pair.c1.value
    steps = np.arange(N + 1)

    aborted = 0
    margin = math.inf
    worst_path = worst_step = -1
    for m0 in range(0, M, _GAP_CHUNK):
        count = min(_GAP_CHUNK, M - m0)
        dw = math.sqrt(grid.dt) * stream.standard_normal_block(
            m0, count, N, pair.base.noise_dim
        )
        vals_a, _, bad_a = simulate_batch(pair.base, x, grid, dw)
        vals_b, _, bad_b = simulate_batch(pair.pert, x, grid, dw)
        alive = (bad_a < 0) & (bad_b < 0)
        aborted += int(count - alive.sum())
        if not alive.any():
            continue
        delta = grid.dt + np.linalg.norm(dw[alive], axis=2).max(axis=1)
        gaps = np.linalg.norm(vals_a[alive] - vals_b[alive], axis=2)
        with np.errstate(divide="ignore"):
            log_lhs = np.log(gaps)
        log_rhs = steps[None, :] * (N * np.log1p(c1 * delta)[:, None] + log_start) + log_eta
        margins = _log_margins(log_lhs, log_rhs)
        flat = int(np.argmin(margins))
        low = float(margins.reshape(-1)[flat])
        if low < margin:
            margin = low
            live_index = np.flatnonzero(alive)
            worst_path = m0 + int(live_index[flat // (N + 1)])
            worst_step = flat % (N + 1)
    if aborted == M:
        raise EstimationError("all coupled paths diverged")
    return CoupledGapReport(
        paths=M,
        aborted=aborted,
        margin=margin,
        holds=bool(margin >= 0.0),
        worst_path=worst_path,
        worst_step=worst_step,
        advisory=pair.advisory,
    )


@dataclass(frozen=True)
class GapReport:
    """Coupled empirical expectation gap next to its worst-case bound."""

    empirical: float
    bound: float
    margin: float
    holds: bool
    advisory: bool
    base_estimate: SobolevEstimate
    pert_estimate: SobolevEstimate


def verify_expectation_gap(
    pair: PerturbedPair, x, M: int, N: int, seed: int, workers: int | None = None
) -> GapReport:
    """Estimate both expectations under shared noise and compare to the bound.

    ``holds`` asserts empirical <= bound; with probe-measured constants the
    verdict is advisory only.
    """
    base_est = estimate_value(pair.base, x, M, N, seed, workers=workers)
    pert_est = perturbed_estimate(pair, x, M, N, seed, workers=workers)
    gap = float(np.linalg.norm(np.asarray(base_est.value) - np.asarray(pert_est.value)))
    bound = expectation_gap_bound(pair, x, N)
    if gap == 0.0:
        margin = 0.0 if bound == 0.0 else math.inf
    else:
        margin = (math.log(bound) if bound > 0.0 else -math.inf) - math.log(gap)
    return GapReport(
        empirical=gap,
        bound=bound,
        margin=float(margin),
        holds=gap <= bound,
        advisory=pair.advisory,
        base_estimate=base_est,
        pert_estimate=pert_est,
    )
