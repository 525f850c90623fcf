"""Monte Carlo estimators for the parabolic solution map and its gradient,
plus the sample-size planner that inverts the accuracy inequalities."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coeffs import CoefficientSet
from .euler import NoiseStream, TimeGrid, simulate_batch

__all__ = [
    "SobolevEstimate",
    "PlanInputs",
    "Plan",
    "EstimationError",
    "PlanInfeasibleError",
    "estimate_value",
    "estimate_sobolev",
    "estimate_time_dependent",
    "plan_sample_sizes",
    "confidence_bound",
]

_CHUNK = 1 << 14


class EstimationError(RuntimeError):
    pass


class PlanInfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SobolevEstimate:
    """Monte Carlo estimate of u(t, x), optionally with its gradient.

    Standard errors are per-sample standard deviations divided by sqrt(M),
    entrywise for the gradient.
    """

    value: np.ndarray
    std_error_value: np.ndarray
    samples_M: int
    steps_N: int
    seed: int
    start_time: float
    aborted_samples: int = 0
    gradient: np.ndarray | None = None
    std_error_gradient: np.ndarray | None = None


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    return max(1, int(os.environ.get("MCEULER_WORKERS", "1")))


def _neumaier(parts: list[np.ndarray]) -> np.ndarray:
    """Compensated sum of equal-shaped arrays in list order."""
    total = np.zeros_like(parts[0])
    comp = np.zeros_like(parts[0])
    for p in parts:
        t = total + p
        bigger = np.abs(total) >= np.abs(p)
        comp += np.where(bigger, (total - t) + p, (p - t) + total)
        total = t
    return total + comp


def _chunk_summands(c, x, grid, stream, m_start, m_count, want_tangent):
    z = stream.standard_normal_block(m_start, m_count, grid.steps, c.noise_dim)
    dw = math.sqrt(grid.dt) * z
    values, tangent, first_bad = simulate_batch(c, x, grid, dw, want_tangent)
    ok = first_bad < 0
    horizon = grid.horizon_T
    nodes = grid.nodes

    summand = c.f.eval(horizon, values[:, -1])
    g_sum = np.zeros_like(summand)
    for n in range(grid.steps):
        g_sum += c.g.eval(nodes[n], values[:, n])
    summand = summand + grid.dt * g_sum

    grad_summand = None
    if want_tangent:
        grad_f = c.f.eval(horizon, values[:, -1], 1)
        grad_summand = np.einsum("bko,bkq->boq", grad_f, tangent[:, -1])
        grad_g_sum = np.zeros_like(grad_summand)
        for n in range(grid.steps):
            grad_g = c.g.eval(nodes[n], values[:, n], 1)
            grad_g_sum += np.einsum("bko,bkq->boq", grad_g, tangent[:, n])
        grad_summand = grad_summand + grid.dt * grad_g_sum

    parts = {
        "count": np.array(float(ok.sum())),
        "sum": summand[ok].sum(axis=0),
        "sumsq": (summand[ok] ** 2).sum(axis=0),
    }
    if want_tangent:
        parts["grad_sum"] = grad_summand[ok].sum(axis=0)
        parts["grad_sumsq"] = (grad_summand[ok] ** 2).sum(axis=0)
    return parts


def _mean_and_stderr(total, total_sq, count):
    mean = total / count
    if count < 2:
        return mean, np.zeros_like(mean)
    var = np.maximum(total_sq - count * mean**2, 0.0) / (count - 1)
    return mean, np.sqrt(var / count)


def _run_estimate(c, x, grid, m_total, seed, want_tangent, workers):
    if m_total < 1:
        raise ValueError("need at least one sample")
    if want_tangent and (c.f.max_order < 1 or c.g.max_order < 1):
        raise ValueError("gradient estimation needs f and g derivatives of order 1")
    stream = NoiseStream(seed)
    x = np.asarray(x, dtype=float)
    starts = list(range(0, m_total, _CHUNK))
    jobs = [(m0, min(_CHUNK, m_total - m0)) for m0 in starts]

    def run(job):
        m0, count = job
        return _chunk_summands(c, x, grid, stream, m0, count, want_tangent)

    n_workers = _worker_count(workers)
    if n_workers == 1 or len(jobs) == 1:
        chunks = [run(j) for j in jobs]
    else:
        # Chunk boundaries are fixed by sample index, so any worker computes
        # the same partial; merging stays in list order below.
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            chunks = list(pool.map(run, jobs))

    count = float(_neumaier([p["count"] for p in chunks]))
    aborted = m_total - int(round(count))
    if count == 0:
        raise EstimationError("every sample diverged; nothing to average")
    value, value_err = _mean_and_stderr(
        _neumaier([p["sum"] for p in chunks]),
        _neumaier([p["sumsq"] for p in chunks]),
        count,
    )
    gradient = grad_err = None
    if want_tangent:
        gradient, grad_err = _mean_and_stderr(
            _neumaier([p["grad_sum"] for p in chunks]),
            _neumaier([p["grad_sumsq"] for p in chunks]),
            count,
        )
        gradient = gradient.reshape(c.dim_o, c.dim_d)
        grad_err = grad_err.reshape(c.dim_o, c.dim_d)
    return SobolevEstimate(
        value=value,
        std_error_value=value_err,
        samples_M=m_total,
        steps_N=grid.steps,
        seed=seed,
        start_time=grid.t_start,
        aborted_samples=aborted,
        gradient=gradient,
        std_error_gradient=grad_err,
    )


def estimate_value(
    c: CoefficientSet,
    x,
    M: int,
    N: int,
    seed: int,
    t_start: float = 0.0,
    workers: int | None = None,
) -> SobolevEstimate:
    """Plain estimator: average over M paths of f at the horizon plus the
    left-endpoint Riemann sum of g with weight (T - t_start)/N."""
    grid = TimeGrid(t_start, c.horizon_T, N)
    return _run_estimate(c, x, grid, M, seed, want_tangent=False, workers=workers)


def estimate_sobolev(
    c: CoefficientSet,
    x,
    M: int,
    N: int,
    seed: int,
    t_start: float = 0.0,
    workers: int | None = None,
) -> SobolevEstimate:
    """Value and gradient from the same paths.

    The gradient summand contracts the coefficient tangents against the f and
    g gradients, so it shares every Brownian increment with the value summand
    and the pair is a common-random-number estimate of (u, grad u).
    """
    grid = TimeGrid(t_start, c.horizon_T, N)
    return _run_estimate(c, x, grid, M, seed, want_tangent=True, workers=workers)


def estimate_time_dependent(
    c: CoefficientSet,
    x,
    M: int,
    N: int,
    seed: int,
    start_times,
    workers: int | None = None,
) -> list[SobolevEstimate]:
    """One value estimate per start time, all scaling the same normal draws.

    Noise keys ignore the start time, so the draws Z are shared and each grid
    applies its own sqrt((T - t)/N) factor.
    """
    estimates = []
    for t in start_times:
        if not 0.0 <= t < c.horizon_T:
            raise ValueError("start times must lie in [0, horizon)")
        grid = TimeGrid(float(t), c.horizon_T, N)
        estimates.append(
            _run_estimate(c, x, grid, M, seed, want_tangent=False, workers=workers)
        )
    return estimates


@dataclass(frozen=True)
class PlanInputs:
    """Accuracy targets plus the evaluated error constant they are tested against.

    ``rhs_constant`` is the full right-hand-side constant of the accuracy
    inequality, evaluated by the caller; ``components`` may record its factors
    and their provenance for the audit trail.  ``kappa`` is the user's
    surrogate for the unknowable universal constant and is recorded alongside.
    ``coefficient_bound`` is c = max{gauge(mu), gauge(sigma)^2} used by the
    step-count floor.
    """

    epsilon: float
    delta: float
    alpha: float = 1.0
    r: float = 0.0
    rhs_constant: float = 1.0
    kappa: float = 1.0
    coefficient_bound: float = 0.0
    horizon_T: float = 1.0
    dim_d: int = 1
    perturbed: bool = False
    time_dependent: bool = False
    n_cap: int = 2**30
    components: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0 or not 0.0 < self.delta < 1.0:
            raise ValueError("epsilon and delta must lie in (0, 1)")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.r < 0 or self.rhs_constant <= 0:
            raise ValueError("need r >= 0 and a positive constant")


@dataclass(frozen=True)
class Plan:
    samples_M: int
    steps_N: int
    audit: dict

    def satisfied(self, p: PlanInputs) -> bool:
        lhs = p.epsilon * math.sqrt(p.delta) / (
            self.samples_M**-0.5 + math.sqrt(p.delta) * float(self.steps_N) ** -p.alpha
        )
        return lhs >= self.audit["rhs_effective"]


def _next_power_of_two(n: float) -> int:
    return 1 << max(0, math.ceil(math.log2(max(1.0, n))))


def plan_sample_sizes(p: PlanInputs) -> Plan:
    """Smallest (M, N) with the error budget split evenly between the
    statistical term M^(-1/2) and the bias term sqrt(delta) N^(-alpha).

    N is rounded up to a power of two and floored at the moment-bound
    precondition 16cT (and at d + T + 1 when planning for the perturbed
    scheme); a start-time grid costs one extra power of the horizon.
    """
    rhs = p.rhs_constant * (p.horizon_T if p.time_dependent else 1.0)
    floor = max(1.0, math.ceil(16.0 * p.coefficient_bound * p.horizon_T))
    if p.perturbed:
        floor = max(floor, math.ceil(p.dim_d + p.horizon_T + 1.0))
    n_floor = int(floor)

    audit = {
        "rhs_effective": rhs,
        "n_floor": n_floor,
        "kappa": p.kappa,
        "components": dict(p.components),
    }

    sqrt_delta = math.sqrt(p.delta)
    minimal = p.epsilon * sqrt_delta / (1.0 + sqrt_delta * n_floor**-p.alpha)
    if rhs <= minimal:
        audit["branch"] = "already-feasible"
        return Plan(samples_M=1, steps_N=n_floor, audit=audit)

    budget = p.epsilon * sqrt_delta / (2.0 * rhs)
    audit["branch"] = "split"
    audit["budget"] = budget
    n_required = (2.0 * rhs / p.epsilon) ** (1.0 / p.alpha)
    if n_required > p.n_cap:
        raise PlanInfeasibleError(
            f"needs {n_required:.3g} steps, above the cap {p.n_cap}"
        )
    steps = _next_power_of_two(max(n_required, float(n_floor)))
    samples = math.ceil(budget**-2)
    audit["n_required"] = n_required
    return Plan(samples_M=samples, steps_N=steps, audit=audit)


def confidence_bound(
    estimate: SobolevEstimate,
    epsilon: float,
    knorm: float,
    constant_C: float,
    coefficient_bound: float,
    horizon_T: float,
    kappa: float = 1.0,
) -> float:
    """Largest 1 - delta the concentration inequality certifies for this M.

    Solves epsilon * sqrt(delta M) = kappa C sqrt((1+c) T^3) e^(kappa c T) knorm
    for delta and clamps the result into [0, 1).
    """
    rhs = (
        kappa
        * constant_C
        * math.sqrt((1.0 + coefficient_bound) * horizon_T**3)
        * math.exp(kappa * coefficient_bound * horizon_T)
        * knorm
    )
    delta = (rhs / (epsilon * math.sqrt(estimate.samples_M))) ** 2
    return max(0.0, 1.0 - delta)
