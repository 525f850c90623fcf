"""Benchmark problems with closed-form solutions.

Each factory returns coefficients together with the exact value function u,
so convergence studies and bound checks have a ground truth.  The
manufactured family prescribes u and non-affine bounded coefficients, then
solves for the running payoff g in closed form; the PDE residual of every
shipped problem vanishes up to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Mapping

import numpy as np
from numpy.polynomial import polynomial as npoly

from .coeffs import CoefficientSet, SmoothMap, constant_map, linear_map
from .growth import GrowthEstimate, analytic_growth, generator_apply

_QUARTER_COS = (1.0, 0.0, -1.0, 0.0)


@dataclass(frozen=True)
class _Term:
    """One summand p(y) * cos(freq*y + quarter*pi/2) * exp(-y^2/2)^gauss.

    The family is closed under d/dy, which is what makes every declared
    derivative order of the trigonometric fixtures exact.
    """

    poly: tuple[float, ...]
    freq: float = 0.0
    quarter: int = 0
    gauss: bool = False


def _poly_deriv(p: tuple[float, ...]) -> tuple[float, ...]:
    return tuple(i * c for i, c in enumerate(p))[1:] or (0.0,)


def _term_value(term: _Term, y: np.ndarray) -> np.ndarray:
    val = npoly.polyval(y, term.poly)
    q = term.quarter % 4
    if term.freq:
        # cos(a y + q pi/2) by quarter-turn identity, so zeros stay exact.
        wave = np.cos(term.freq * y) if q % 2 == 0 else np.sin(term.freq * y)
        val = val * (wave if q in (0, 3) else -wave)
    else:
        val = val * _QUARTER_COS[q]
    if term.gauss:
        val = val * np.exp(-0.5 * y * y)
    return val


def _term_derivative(term: _Term) -> list[_Term]:
    out = []
    dp = _poly_deriv(term.poly)
    if any(dp):
        out.append(replace(term, poly=dp))
    if term.freq:
        scaled = tuple(term.freq * c for c in term.poly)
        out.append(replace(term, poly=scaled, quarter=term.quarter + 1))
    if term.gauss:
        out.append(replace(term, poly=tuple(-c for c in (0.0,) + term.poly)))
    return out


def _compact(terms) -> tuple[_Term, ...]:
    table: dict[tuple, tuple[float, ...]] = {}
    for term in terms:
        poly, q = term.poly, term.quarter % 4
        if term.freq == 0.0:
            sign = _QUARTER_COS[q]
            if sign == 0.0:
                continue
            poly, q = tuple(sign * c for c in poly), 0
        key = (term.freq, q, term.gauss)
        cur = table.get(key, ())
        width = max(len(cur), len(poly))
        table[key] = tuple(
            (cur[i] if i < len(cur) else 0.0) + (poly[i] if i < len(poly) else 0.0)
            for i in range(width)
        )
    return tuple(_Term(p, f, q, g) for (f, q, g), p in table.items() if any(p))


class _Series1D:
    """Finite term sum with exact derivatives of every order.

    Derivative term lists are precomputed up to the order a map declares, so
    evaluation from concurrent workers only reads.
    """

    def __init__(self, terms, warm_order: int = 6) -> None:
        per_order = [_compact(tuple(terms))]
        for _ in range(warm_order):
            expanded: list[_Term] = []
            for term in per_order[-1]:
                expanded.extend(_term_derivative(term))
            per_order.append(_compact(expanded))
        self._per_order = tuple(per_order)

    def eval(self, y: np.ndarray, order: int = 0) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        total = np.zeros(y.shape)
        for term in self._per_order[order]:
            total = total + _term_value(term, y)
        return total


def _sin(amplitude: float = 1.0, freq: float = 1.0) -> _Term:
    return _Term((amplitude,), freq, 3)


def _cos(amplitude: float = 1.0, freq: float = 1.0) -> _Term:
    return _Term((amplitude,), freq, 0)


def _diag_tensor(batch, d, order, vals, out_index, out_dim) -> np.ndarray:
    """Dense derivative tensor whose only entries sit on the repeated-
    coordinate diagonal (separable per-coordinate maps have no cross terms)."""
    tensor = np.zeros(batch + (d,) * order + (out_dim,))
    idx = np.arange(d)
    tensor[(Ellipsis,) + (idx,) * order + (out_index,)] = vals
    return tensor


def _sum_profile_map(series: _Series1D, d: int, scale: float = 1.0, max_order: int = 5) -> SmoothMap:
    """h(x) = scale * (1/d) * sum_i series(x_i), scalar output."""

    def evaluator(t, x, k):
        vals = (scale / d) * series.eval(x, k)
        if k == 0:
            return vals.sum(axis=-1)[..., None]
        return _diag_tensor(x.shape[:-1], d, k, vals, 0, 1)

    return SmoothMap(d, 1, max_order, evaluator)


def _coordinate_drift(series: _Series1D, d: int, max_order: int = 5) -> SmoothMap:
    """mu_i(x) = series(x_i)."""

    def evaluator(t, x, k):
        vals = series.eval(x, k)
        if k == 0:
            return vals
        return _diag_tensor(x.shape[:-1], d, k, vals, np.arange(d), d)

    return SmoothMap(d, d, max_order, evaluator)


def _diagonal_diffusion(series: _Series1D, d: int, max_order: int = 5) -> SmoothMap:
    """sigma(x) = diag(series(x_i)), stored row-major flat."""
    flat_idx = np.arange(d) * (d + 1)

    def evaluator(t, x, k):
        vals = series.eval(x, k)
        if k == 0:
            out = np.zeros(x.shape[:-1] + (d * d,))
            out[..., flat_idx] = vals
            return out
        return _diag_tensor(x.shape[:-1], d, k, vals, flat_idx, d * d)

    return SmoothMap(d, d * d, max_order, evaluator)


@lru_cache(maxsize=None)
def _multiplicity_table(d: int, order: int) -> np.ndarray:
    """Row p: how often each coordinate appears in the p-th index tuple."""
    grids = np.indices((d,) * order).reshape(order, -1)
    counts = np.zeros((grids.shape[1], d), dtype=int)
    for row in grids:
        np.add.at(counts, (np.arange(grids.shape[1]), row), 1)
    counts.flags.writeable = False
    return counts


def _product_payoff(series: _Series1D, d: int, max_order: int = 5) -> SmoothMap:
    """f(x) = prod_i series(x_i); derivative entries are products of
    per-coordinate derivatives with the index multiplicities as orders."""

    def evaluator(t, x, k):
        batch = x.shape[:-1]
        derivs = np.stack([series.eval(x, m) for m in range(k + 1)], axis=-2)
        if k == 0:
            return derivs[..., 0, :].prod(axis=-1)[..., None]
        counts = _multiplicity_table(d, k)
        gathered = derivs[..., counts, np.arange(d)]
        return gathered.prod(axis=-1).reshape(batch + (d,) * k + (1,))

    return SmoothMap(d, 1, max_order, evaluator)


def _time_scaled(base: SmoothMap, factor, dfactor, max_order: int | None = None) -> SmoothMap:
    """u(t, x) = factor(t) * base(x) with the matching time derivative."""
    mo = base.max_order if max_order is None else max_order
    deriv = SmoothMap(
        base.input_dim,
        base.output_dim,
        mo,
        lambda t, x, k: dfactor(t) * base.eval(t, x, k),
        time_dependent=True,
    )
    return SmoothMap(
        base.input_dim,
        base.output_dim,
        mo,
        lambda t, x, k: factor(t) * base.eval(t, x, k),
        time_dependent=True,
        time_deriv=deriv,
    )


@dataclass(frozen=True)
class BenchmarkProblem:
    """Coefficients plus the exact solution they were built around.

    ``mu_gauge`` and ``sigma_gauge`` are hand-derived upper bounds on the
    linear-growth gauges (mode "analytic", trusted); ``lipschitz`` carries
    global Lipschitz constants for the components where one exists.
    """

    name: str
    coefficients: CoefficientSet
    exact_u: SmoothMap
    assumption_level: str
    mu_gauge: GrowthEstimate
    sigma_gauge: GrowthEstimate
    lipschitz: Mapping[str, float]

    def exact_value(self, t: float, x) -> np.ndarray:
        return self.exact_u.eval(t, np.asarray(x, dtype=float))

    def exact_grad(self, t: float, x) -> np.ndarray:
        return self.exact_u.eval(t, np.asarray(x, dtype=float), 1)

    def residual(self, t: float, x) -> np.ndarray:
        """d_t u + (generator u) + g; zero up to roundoff for a solution."""
        x = np.asarray(x, dtype=float)
        du = self.exact_u.time_deriv.eval(t, x)
        gen = generator_apply(self.exact_u, self.coefficients, "one_arg", t, (x,))
        return du + gen + self.coefficients.g.eval(t, x)


def heat_problem(d: int, T: float, f_kind: str = "quadratic") -> BenchmarkProblem:
    """Driftless unit-diffusion problem, payoff squared-norm or cosine product.

    quadratic: u(t, x) = |x|^2 + d (T - t); trig: u(t, x) carries the
    Gaussian smoothing factor exp(-d (T - t) / 2) on prod_i cos(x_i).
    """
    if d < 1:
        raise ValueError("need d >= 1")
    mu = constant_map(np.zeros(d), d)
    sigma = constant_map(np.eye(d).ravel(), d)
    g = constant_map(np.zeros(1), d)

    if f_kind == "quadratic":

        def f_eval(t, x, k):
            batch = x.shape[:-1]
            if k == 0:
                return (x**2).sum(axis=-1)[..., None]
            if k == 1:
                return 2.0 * x[..., None]
            if k == 2:
                return np.broadcast_to(2.0 * np.eye(d)[..., None], batch + (d, d, 1)).copy()
            return np.zeros(batch + (d,) * k + (1,))

        f = SmoothMap(d, 1, 6, f_eval)

        def u_eval(t, x, k):
            out = f_eval(t, x, k)
            if k == 0:
                out = out + d * (T - t)
            return out

        u = SmoothMap(
            d, 1, 6, u_eval, time_dependent=True,
            time_deriv=constant_map(np.array([-float(d)]), d),
        )
        lipschitz = {"mu": 0.0, "sigma": 0.0}
    elif f_kind == "trig":
        cos = _Series1D([_cos()])
        f = _product_payoff(cos, d)
        u = _time_scaled(
            _product_payoff(cos, d),
            lambda t: math.exp(-0.5 * d * (T - t)),
            lambda t: 0.5 * d * math.exp(-0.5 * d * (T - t)),
        )
        lipschitz = {"mu": 0.0, "sigma": 0.0, "f": math.sqrt(d)}
    else:
        raise ValueError(f"unknown payoff kind {f_kind!r}")

    return BenchmarkProblem(
        name=f"heat-{f_kind}",
        coefficients=CoefficientSet(
            mu=mu, sigma=sigma, f=f, g=g, horizon_T=T, dim_d=d, dim_o=1
        ),
        exact_u=u,
        assumption_level="A3.6",
        mu_gauge=analytic_growth(0.0, 1.0, 0, note="zero drift"),
        sigma_gauge=analytic_growth(math.sqrt(d), 1.0, 0, note="identity diffusion"),
        lipschitz=lipschitz,
    )


def ou_problem(
    d: int, T: float, theta: float = 1.0, s: float = 1.0, a: np.ndarray | None = None
) -> BenchmarkProblem:
    """Mean-reverting drift -theta x, constant diffusion s I, linear payoff.

    u(t, x) = exp(-theta (T - t)) a^T x; the default payoff direction is
    the first coordinate axis.
    """
    if theta <= 0 or s <= 0:
        raise ValueError("mean-reversion rate and noise level must be positive")
    a = np.eye(d)[0] if a is None else np.asarray(a, dtype=float)
    if a.shape != (d,):
        raise ValueError(f"payoff direction must have shape ({d},)")
    f = linear_map(a[:, None])
    u = _time_scaled(
        f,
        lambda t: math.exp(-theta * (T - t)),
        lambda t: theta * math.exp(-theta * (T - t)),
    )
    return BenchmarkProblem(
        name="ou",
        coefficients=CoefficientSet(
            mu=linear_map(-theta * np.eye(d)),
            sigma=constant_map(s * np.eye(d).ravel(), d),
            f=f,
            g=constant_map(np.zeros(1), d),
            horizon_T=T,
            dim_d=d,
            dim_o=1,
        ),
        exact_u=u,
        assumption_level="A3.6",
        mu_gauge=analytic_growth(theta, 1.0, 0, note="linear drift"),
        sigma_gauge=analytic_growth(s * math.sqrt(d), 1.0, 0, note="constant diffusion"),
        lipschitz={"mu": theta, "sigma": 0.0, "f": float(np.linalg.norm(a))},
    )


# Running payoff of the sin-mean profile, per coordinate:
# psi(y) = (145/128) sin y - (3/16) sin 2y + (1/128) sin 3y.
_PSI_TERMS = (_sin(145.0 / 128.0, 1.0), _sin(-3.0 / 16.0, 2.0), _sin(1.0 / 128.0, 3.0))

# Bump profile counterpart chi(y) = phi(y) [1 + y sin(y)/2 - s(y)^2 (y^2-1)/2]
# with phi the unit Gaussian bump and s(y) the diffusion diagonal.
_CHI_TERMS = (
    _Term((73.0 / 64.0, 0.0, -9.0 / 64.0), 0.0, 0, gauss=True),
    _Term((0.0, 0.5), 1.0, 3, gauss=True),
    _Term((1.0 / 8.0, 0.0, -1.0 / 8.0), 1.0, 0, gauss=True),
    _Term((1.0 / 64.0, 0.0, -1.0 / 64.0), 2.0, 0, gauss=True),
)


def manufactured_problem(d: int, T: float, profile: str = "sin-mean") -> BenchmarkProblem:
    """Non-affine bounded coefficients with a prescribed solution.

    The drift bends each coordinate by sin(x_i)/2 and the diagonal diffusion
    by (1 + cos(x_i)/2)/2; g is solved for in closed form so that
    u(t, x) = exp(-t) * mean_i profile(x_i) satisfies the terminal-value
    equation exactly.  All derivatives of every component are globally
    bounded, so the quantitative assumption levels hold with analytic
    constants.
    """
    if d < 1:
        raise ValueError("need d >= 1")
    if profile == "sin-mean":
        shape = _Series1D([_sin()])
        g_series = _Series1D(_PSI_TERMS)
        f_lip = math.exp(-T) / math.sqrt(d)
    elif profile == "bump":
        shape = _Series1D([_Term((1.0,), 0.0, 0, gauss=True)])
        g_series = _Series1D(_CHI_TERMS)
        f_lip = math.exp(-T) * math.exp(-0.5) / math.sqrt(d)
    else:
        raise ValueError(f"unknown profile {profile!r}")

    def decay(t):
        return math.exp(-t)

    def neg_decay(t):
        return -math.exp(-t)

    u = _time_scaled(_sum_profile_map(shape, d), decay, neg_decay)
    g = _time_scaled(_sum_profile_map(g_series, d), decay, neg_decay)
    f = _sum_profile_map(shape, d, scale=math.exp(-T))
    return BenchmarkProblem(
        name=f"manufactured-{profile}",
        coefficients=CoefficientSet(
            mu=_coordinate_drift(_Series1D([_sin(0.5)]), d),
            sigma=_diagonal_diffusion(_Series1D([_Term((0.5,)), _cos(0.25)]), d),
            f=f,
            g=g,
            horizon_T=T,
            dim_d=d,
            dim_o=1,
        ),
        exact_u=u,
        assumption_level="A3.6",
        mu_gauge=analytic_growth(0.5 * math.sqrt(d), 1.0, 0, note="bounded drift"),
        sigma_gauge=analytic_growth(0.75 * math.sqrt(d), 1.0, 0, note="bounded diffusion"),
        lipschitz={"mu": 0.5, "sigma": 0.25, "f": f_lip},
    )


_FACTORIES = {
    "heat-quadratic": lambda d, T, kw: heat_problem(d, T, "quadratic"),
    "heat-trig": lambda d, T, kw: heat_problem(d, T, "trig"),
    "ou": lambda d, T, kw: ou_problem(
        d, T, theta=float(kw.get("theta", 1.0)), s=float(kw.get("s", 1.0))
    ),
    "manufactured-sin-mean": lambda d, T, kw: manufactured_problem(d, T, "sin-mean"),
    "manufactured-bump": lambda d, T, kw: manufactured_problem(d, T, "bump"),
}

PROBLEM_NAMES = tuple(sorted(_FACTORIES))


def make_problem(name: str, d: int, T: float, **params) -> BenchmarkProblem:
    """Fixture lookup by name, the CLI's entry point into this module."""
    if name not in _FACTORIES:
        raise ValueError(f"unknown problem {name!r}; known: {', '.join(PROBLEM_NAMES)}")
    return _FACTORIES[name](d, T, params)
