"""Polynomial-growth and Hoelder-growth measures, generators, and calculus checks.

The growth measure of a map ``h`` at parameters ``(r, k)`` is the supremum over
space (and time, when applicable) of ``sum_{i<=k} |grad^i h(x)| / (1+|x|)^(r+k-i)``
with Frobenius norms on every tensor order.  Suprema are realized as maxima
over deterministic radial-shell lattices, so every estimate is a certified
lower bound of the true supremum and records its probe.

``verify_calculus`` evaluates both sides of one of the calculus inequalities
on a shared probe and reports the margin.  Verifiers are registered under
names that describe the statement being checked:

================  ====================================================
index-shift       measure of grad^l h at shifted parameters vs h
antiderivative    measure of h from its top derivative plus boundary terms
lift-commute      lift of grad^l h vs grad^l of the lifted h, both ways
lift-integral     j-fold lifted derivative measure vs the base measure
lift-retract      base measure vs the lifted measure with unit tangents
generator-block   blocked generator of h on R^{2d} vs component measures
generator-plain   generator of h on R^d vs component measures
generator-double  twice-applied generator vs fourth-order measure of h
================  ====================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _probes
from .coeffs import CoefficientSet, SmoothMap, derivative_map, lift_augmented

# A probe maximum that still grows by more than this factor between the two
# outermost shells is flagged as divergent.
_DIVERGENCE_RATIO = 1.25


@dataclass(frozen=True)
class ProbeSpec:
    """Radial-shell probe: log-spaced radii times low-discrepancy directions."""

    r_max: float = 1.0e3
    shells: int = 24
    directions: int = 64
    time_samples: int = 9
    horizon: float = 1.0

    def radii(self) -> np.ndarray:
        return _probes.shell_radii(r_max=self.r_max, count=self.shells)

    def points(self, dim: int) -> np.ndarray:
        return _probes.shell_points(self.radii(), _probes.sphere_directions(dim, self.directions))

    def times_for(self, h: SmoothMap) -> np.ndarray:
        if h.time_dependent:
            return np.linspace(0.0, self.horizon, self.time_samples)
        return np.array([0.0])

    def hoelder_times(self) -> np.ndarray:
        base = np.linspace(0.0, self.horizon, self.time_samples)
        near_zero = self.horizon * np.array([1e-6, 1e-5, 1e-4, 1e-3, 1e-2])
        return np.unique(np.concatenate([base, near_zero]))

    def describe(self, dim: int) -> str:
        return (
            f"shells={self.shells} r_max={self.r_max:g} dirs={self.directions}+axes "
            f"dim={dim} times={self.time_samples} horizon={self.horizon:g}"
        )


DEFAULT_PROBE = ProbeSpec()


@dataclass(frozen=True)
class GrowthEstimate:
    value: float
    mode: str
    probe_spec: str
    r: float
    k: int


@dataclass(frozen=True)
class HoelderEstimate:
    value: float
    alpha: float
    r: float
    probe_spec: str
    mode: str = "empirical"


def analytic_growth(value: float, r: float, k: int, note: str = "closed form") -> GrowthEstimate:
    """Wrap a hand-derived bound so it can stand in for an empirical estimate."""
    return GrowthEstimate(value=float(value), mode="analytic", probe_spec=note, r=float(r), k=int(k))


def analytic_hoelder(value: float, r: float, alpha: float, note: str = "closed form") -> HoelderEstimate:
    return HoelderEstimate(
        value=float(value), alpha=float(alpha), r=float(r), probe_spec=note, mode="analytic"
    )


def _tensor_norm(tensor: np.ndarray, batch_ndim: int) -> np.ndarray:
    axes = tuple(range(batch_ndim, tensor.ndim))
    return np.sqrt(np.sum(tensor**2, axis=axes))


def _flag_divergence(value: float, per_shell: np.ndarray) -> float:
    # Band-vs-interior record comparison: robust to the per-shell jitter of
    # bounded oscillating integrands at log-spaced radii, still a factor-10
    # signal per probed decade for any superlinear growth.
    if per_shell.shape[0] < 2:
        return value
    band = max(1, (per_shell.shape[0] - 1) // 6)
    tail = float(per_shell[-band:].max())
    if tail > float(per_shell[:-band].max()) * _DIVERGENCE_RATIO + 1e-300:
        return math.inf
    return value


def _measure_shells(
    h: SmoothMap, r: float, k: int, points: np.ndarray, times
) -> tuple[float, np.ndarray]:
    """Max over shell points (and times) of the order-k growth summand."""
    norms = np.linalg.norm(points, axis=-1)
    flat = points.reshape(-1, points.shape[-1])
    best = np.zeros(points.shape[:2])
    for t in times:
        acc = np.zeros(points.shape[:2])
        for i in range(k + 1):
            tens = h.eval(t, flat, i)
            gauge = _tensor_norm(tens, 1).reshape(points.shape[:2])
            acc += gauge / (1.0 + norms) ** (r + k - i)
        np.maximum(best, acc, out=best)
    per_shell = best.max(axis=1)
    return _flag_divergence(float(per_shell.max()), per_shell), per_shell


def growth_sum(
    h: SmoothMap, r: float, k: int, probe: ProbeSpec | None = None
) -> GrowthEstimate:
    """Empirical growth measure of h at parameters (r, k)."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if not 0 <= k <= h.max_order:
        raise ValueError(f"k={k} exceeds available derivative order {h.max_order}")
    probe = probe or DEFAULT_PROBE
    points = probe.points(h.input_dim)
    value, _ = _measure_shells(h, r, k, points, probe.times_for(h))
    return GrowthEstimate(
        value=value, mode="empirical", probe_spec=probe.describe(h.input_dim), r=float(r), k=int(k)
    )


def linear_gauge(h: SmoothMap, probe: ProbeSpec | None = None) -> GrowthEstimate:
    """The plain linear-growth gauge, the (r=1, k=0) measure."""
    return growth_sum(h, 1.0, 0, probe)


def hoelder_growth(
    h: SmoothMap, r: float, alpha: float, probe: ProbeSpec | None = None
) -> HoelderEstimate:
    """Empirical Hoelder-in-time growth measure over pairs with 0 < |t-s| <= 1."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if r < 0:
        raise ValueError("r must be nonnegative")
    probe = probe or DEFAULT_PROBE
    ts = probe.hoelder_times()
    pairs = [
        (s, t) for i, s in enumerate(ts) for t in ts[i + 1 :] if 0.0 < t - s <= 1.0
    ]
    if not pairs:
        raise ValueError("probe produced no admissible time pairs")
    points = probe.points(h.input_dim)
    norms = np.linalg.norm(points, axis=-1)
    flat = points.reshape(-1, points.shape[-1])
    cache = {t: h.eval(t, flat, 0) for t in np.unique(ts)}
    best = np.zeros(points.shape[:2])
    for s, t in pairs:
        diff = _tensor_norm(cache[t] - cache[s], 1).reshape(points.shape[:2])
        gauge = diff / (1.0 + norms) ** r / (t - s) ** alpha
        np.maximum(best, gauge, out=best)
    per_shell = best.max(axis=1)
    value = _flag_divergence(float(per_shell.max()), per_shell)
    spec = f"{probe.describe(h.input_dim)} pairs={len(pairs)}"
    return HoelderEstimate(value=value, alpha=float(alpha), r=float(r), probe_spec=spec)


def _component(measures, key: str, expect_k: int | None = None) -> float:
    try:
        entry = measures[key]
    except KeyError:
        raise KeyError(f"missing component measure {key!r}") from None
    if expect_k is not None and hasattr(entry, "k") and entry.k != expect_k:
        raise ValueError(f"component {key!r} was measured at k={entry.k}, need k={expect_k}")
    return float(getattr(entry, "value", entry))


def cumbersome_constant(measures, r: float, alpha: float) -> float:
    """Composite constant from the component measures of (mu, sigma, g, u).

    Expects keys ``dt_g`` (k=0), ``mu`` (k=2), ``sigma`` (k=2), ``g`` (k=2),
    ``u`` (k=4), ``mu_hoelder``, ``sigma_hoelder``.
    """
    dt_g = _component(measures, "dt_g", 0)
    mu2 = _component(measures, "mu", 2)
    sigma2 = _component(measures, "sigma", 2)
    g2 = _component(measures, "g", 2)
    u4 = _component(measures, "u", 4)
    mu_hoeld = _component(measures, "mu_hoelder")
    sigma_hoeld = _component(measures, "sigma_hoelder")
    return max(
        dt_g,
        max(mu2, sigma2**2) * g2,
        max(mu2**2, sigma2**4, mu_hoeld, sigma2 * sigma_hoeld) * u4,
    )


_VARIANT_ARITY = {"one_arg": 1, "two_arg": 2, "block_two": 3, "block_one": 2}


def _coefficient_fields(c: CoefficientSet, t: float, y: np.ndarray):
    mu = c.mu.eval(t, y, 0)
    sig = c.sigma_matrix(t, y)
    a = np.einsum("...ab,...cb->...ac", sig, sig)
    return mu, sig, a


def _generator_core(
    h: SmoothMap,
    c: CoefficientSet,
    t: float,
    w: np.ndarray,
    y: np.ndarray,
    frozen: np.ndarray | None = None,
) -> np.ndarray:
    d = c.dim_d
    hx = w if frozen is None else np.concatenate([w, frozen], axis=-1)
    grad = h.eval(t, hx, 1)[..., :d, :]
    hess = h.eval(t, hx, 2)[..., :d, :d, :]
    mu, _, a = _coefficient_fields(c, t, y)
    drift = np.einsum("...ko,...k->...o", grad, mu)
    trace = 0.5 * np.einsum("...ab,...abo->...o", a, hess)
    return drift + trace


def generator_apply(
    h: SmoothMap, c: CoefficientSet, variant: str, t: float, args
) -> np.ndarray:
    """Apply the generator to h with the variant's argument routing.

    ``one_arg`` takes (x,), ``two_arg`` (x, y) with coefficients read at y,
    ``block_two`` (x, y, z) freezing the second input block of h at z, and
    ``block_one`` (x, z) which is the block_two diagonal y = x.
    """
    if variant not in _VARIANT_ARITY:
        raise ValueError(f"unknown generator variant {variant!r}")
    if h.max_order < 2:
        raise ValueError("generator needs second derivatives of h")
    if isinstance(args, np.ndarray):
        args = (args,)
    if len(args) != _VARIANT_ARITY[variant]:
        raise ValueError(
            f"variant {variant} takes {_VARIANT_ARITY[variant]} arguments, got {len(args)}"
        )
    d = c.dim_d
    blocked = variant in ("block_two", "block_one")
    want_dim = 2 * d if blocked else d
    if h.input_dim != want_dim:
        raise ValueError(f"variant {variant} expects h on R^{want_dim}")
    pts = [np.asarray(p, dtype=float) for p in args]
    if variant == "one_arg":
        return _generator_core(h, c, t, pts[0], pts[0])
    if variant == "two_arg":
        return _generator_core(h, c, t, pts[0], pts[1])
    if variant == "block_two":
        return _generator_core(h, c, t, pts[0], pts[1], frozen=pts[2])
    return _generator_core(h, c, t, pts[0], pts[0], frozen=pts[1])


def _sigma_gradient(c: CoefficientSet, t: float, y: np.ndarray) -> np.ndarray:
    rows, cols = c.sigma_shape
    flat = c.sigma.eval(t, y, 1)
    return flat.reshape(y.shape[:-1] + (c.dim_d, rows, cols))


def generator_map(h: SmoothMap, c: CoefficientSet, variant: str) -> SmoothMap:
    """The generator of h as a SmoothMap over the variant's joint domain.

    First derivatives are available for the plain variants when h and the
    coefficients carry enough orders; block variants expose values only.
    """
    if variant not in _VARIANT_ARITY:
        raise ValueError(f"unknown generator variant {variant!r}")
    if h.max_order < 2:
        raise ValueError("generator needs second derivatives of h")
    d = c.dim_d
    arity = _VARIANT_ARITY[variant]
    in_dim = arity * d
    blocked = variant in ("block_two", "block_one")
    if h.input_dim != (2 * d if blocked else d):
        raise ValueError(f"variant {variant} expects h on R^{2 * d if blocked else d}")

    if blocked:
        max_order = 0
    else:
        max_order = min(1, h.max_order - 2, c.mu.max_order - 1, c.sigma.max_order - 1)
        max_order = max(max_order, 0)

    def split(p: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(p[..., i * d : (i + 1) * d] for i in range(arity))

    def value(t: float, p: np.ndarray) -> np.ndarray:
        parts = split(p)
        if variant == "one_arg":
            return _generator_core(h, c, t, parts[0], parts[0])
        if variant == "two_arg":
            return _generator_core(h, c, t, parts[0], parts[1])
        if variant == "block_two":
            return _generator_core(h, c, t, parts[0], parts[1], frozen=parts[2])
        return _generator_core(h, c, t, parts[0], parts[0], frozen=parts[1])

    def first_derivative(t: float, p: np.ndarray) -> np.ndarray:
        x, y = (split(p) * 2)[:2] if variant == "one_arg" else split(p)
        d2 = h.eval(t, x, 2)
        d3 = h.eval(t, x, 3)
        grad = h.eval(t, x, 1)
        mu, sig, a = _coefficient_fields(c, t, y)
        dmu = c.mu.eval(t, y, 1)
        dsig = _sigma_gradient(c, t, y)
        da = np.einsum("...iac,...bc->...iab", dsig, sig) + np.einsum(
            "...ac,...ibc->...iab", sig, dsig
        )
        gx = np.einsum("...iko,...k->...io", d2, mu) + 0.5 * np.einsum(
            "...ab,...iabo->...io", a, d3
        )
        gy = np.einsum("...ik,...ko->...io", dmu, grad) + 0.5 * np.einsum(
            "...iab,...abo->...io", da, d2
        )
        if variant == "one_arg":
            return gx + gy
        return np.concatenate([gx, gy], axis=-2)

    def evaluator(t: float, p: np.ndarray, order: int) -> np.ndarray:
        if order == 0:
            return value(t, p)
        return first_derivative(t, p)

    return SmoothMap(
        in_dim,
        h.output_dim,
        max_order,
        evaluator,
        time_dependent=c.mu.time_dependent or c.sigma.time_dependent,
    )


def double_generator_apply(
    h: SmoothMap,
    c: CoefficientSet,
    t1: float,
    t2: float,
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
) -> np.ndarray:
    """Generator applied twice: outer coefficients at y, inner frozen at z."""
    if h.max_order < 4:
        raise ValueError("twice-applied generator needs fourth derivatives of h")
    mu1, _, a1 = _coefficient_fields(c, t1, z)
    mu2, _, a2 = _coefficient_fields(c, t2, y)
    d2 = h.eval(t1, x, 2)
    d3 = h.eval(t1, x, 3)
    d4 = h.eval(t1, x, 4)
    inner_grad = np.einsum("...iko,...k->...io", d2, mu1) + 0.5 * np.einsum(
        "...ab,...iabo->...io", a1, d3
    )
    inner_hess = np.einsum("...ijko,...k->...ijo", d3, mu1) + 0.5 * np.einsum(
        "...ab,...ijabo->...ijo", a1, d4
    )
    return np.einsum("...io,...i->...o", inner_grad, mu2) + 0.5 * np.einsum(
        "...ab,...abo->...o", a2, inner_hess
    )


@dataclass(frozen=True)
class CalculusReport:
    lemma: str
    params: dict
    lhs: float
    rhs: float
    margin: float
    holds: bool
    probe_spec: str
    extras: dict = field(default_factory=dict)


def _report(lemma, params, lhs, rhs, probe_spec, extras=None, also=True) -> CalculusReport:
    holds = bool((lhs <= rhs or (math.isinf(lhs) and math.isinf(rhs))) and also)
    margin = rhs - lhs if math.isfinite(rhs) or math.isfinite(lhs) else math.nan
    return CalculusReport(
        lemma=lemma,
        params=dict(params),
        lhs=float(lhs),
        rhs=float(rhs),
        margin=float(margin),
        holds=holds,
        probe_spec=probe_spec,
        extras=dict(extras or {}),
    )


def _static_measure(h, r, k, points) -> float:
    value, _ = _measure_shells(h, r, k, points, (0.0,))
    return value


def _check_index_shift(h, params, probe, c=None) -> CalculusReport:
    r, k, l, m = params["r"], params["k"], params["l"], params["m"]
    if l + m > k or k > h.max_order:
        raise ValueError("need l + m <= k <= available order")
    points = probe.points(h.input_dim)
    lhs = _static_measure(derivative_map(h, l), r + k - l - m, m, points)
    rhs = _static_measure(h, r, k, points)
    return _report("index-shift", params, lhs, rhs, probe.describe(h.input_dim))


def _check_antiderivative(h, params, probe, c=None) -> CalculusReport:
    r, k, m = params["r"], params["k"], params["m"]
    if not 0 <= m <= k or k > h.max_order:
        raise ValueError("need 0 <= m <= k <= available order")
    dense = ProbeSpec(
        r_max=probe.r_max,
        shells=2 * probe.shells,
        directions=probe.directions,
        time_samples=probe.time_samples,
        horizon=probe.horizon,
    )
    points = dense.points(h.input_dim)
    lhs = _static_measure(h, r, k, points)
    top = _static_measure(derivative_map(h, k - m), r, m, points)
    rhs = (r + k + 1) / (r + m + 1) * top
    origin = np.zeros(h.input_dim)
    boundary = 0.0
    for j in range(m + 1, k + 1):
        val = np.linalg.norm(h.eval(0.0, origin, k - j))
        boundary += (r + k + 1) / (r + j + 1) * val
    rhs += boundary
    extras = {"top_term": top, "boundary_terms": boundary}
    return _report("antiderivative", params, lhs, rhs, dense.describe(h.input_dim), extras)


def _check_lift_commute(h, params, probe, c=None) -> CalculusReport:
    r, l, m = params["r"], params["l"], params["m"]
    if l + m + 1 > h.max_order:
        raise ValueError("need l + m + 1 <= available order")
    points = probe.points(2 * h.input_dim)
    lifted_view = lift_augmented(derivative_map(h, l))
    view_of_lift = derivative_map(lift_augmented(h), l)
    lhs = _static_measure(lifted_view, r, m, points)
    mid = _static_measure(view_of_lift, r, m, points)
    forward_ok = lhs <= (m + 1) * mid or math.isinf(mid)
    reverse_ok = mid <= (m + l + 1) * lhs or math.isinf(lhs)
    extras = {"reverse_lhs": mid, "reverse_rhs": (m + l + 1) * lhs}
    return _report(
        "lift-commute",
        params,
        lhs,
        (m + 1) * mid,
        probe.describe(2 * h.input_dim),
        extras,
        also=forward_ok and reverse_ok,
    )


def _iterated_lift(h: SmoothMap, j: int) -> SmoothMap:
    for _ in range(j):
        h = lift_augmented(h)
    return h


def _check_lift_integral(h, params, probe, c=None) -> CalculusReport:
    r, k, l, m, j = params["r"], params["k"], params["l"], params["m"], params["j"]
    if j + l + m > k or k > h.max_order:
        raise ValueError("need j + l + m <= k <= available order")
    lifted = _iterated_lift(h, j)
    big_points = probe.points(lifted.input_dim)
    lhs = _static_measure(derivative_map(lifted, l), r + k - l - m, m, big_points)
    base_points = np.concatenate(
        [probe.points(h.input_dim), big_points[..., : h.input_dim]], axis=1
    )
    base = _static_measure(h, r, k, base_points)
    constant = 1.0
    for i in range(k - j + 1, k + 1):
        constant *= i * (i + 1) / 2.0
    extras = {"base_measure": base, "constant": constant}
    return _report(
        "lift-integral", params, lhs, constant * base, probe.describe(lifted.input_dim), extras
    )


def _check_lift_retract(h, params, probe, c=None) -> CalculusReport:
    r, k, j = params["r"], params["k"], params["j"]
    if j != 1:
        raise ValueError("only a single lifting is supported here")
    if not 1 <= k <= h.max_order:
        raise ValueError("need 1 <= k <= available order")
    d = h.input_dim
    base_points = probe.points(d)
    lhs = _static_measure(h, r, k, base_points)
    dirs = np.concatenate([np.zeros((1, d)), _probes.sphere_directions(d, probe.directions)])
    shells, per_shell, _ = base_points.shape
    pairs = np.concatenate(
        [
            np.repeat(base_points, len(dirs), axis=1),
            np.tile(dirs, (shells, per_shell, 1)),
        ],
        axis=-1,
    )
    lifted = _static_measure(lift_augmented(h), r, k - 1, pairs)
    constant = 1.0 + 2.0**r * math.sqrt(2 * d)
    extras = {"lifted_measure": lifted, "constant": constant}
    return _report("lift-retract", params, lhs, constant * lifted, probe.describe(2 * d), extras)


def _diagonal_triples(pairs: np.ndarray, d: int) -> np.ndarray:
    return np.concatenate([pairs[..., :d], pairs[..., :d], pairs[..., d:]], axis=-1)


def _times(a: float, b: float) -> float:
    # Treat 0 * inf as 0 so a vanishing factor keeps the bound strict.
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def _generator_rhs(c, points_mu, points_grad, grad_view, r1, r2, r3):
    mu_v = _static_measure(c.mu, r1, 0, points_mu)
    sig_v = _static_measure(c.sigma, r2, 0, points_mu)
    grad_v = _static_measure(grad_view, r3, 1, points_grad)
    rhs = _times(max(mu_v, 0.5 * sig_v**2), grad_v)
    return rhs, {"mu": mu_v, "sigma": sig_v, "grad_h": grad_v}


def _check_generator_block(h, params, probe, c) -> CalculusReport:
    if c is None:
        raise ValueError("generator checks need a coefficient set")
    r1, r2, r3 = params["r1"], params["r2"], params["r3"]
    t = params.get("t", 0.0)
    d = c.dim_d
    if h.input_dim != 2 * d:
        raise ValueError("blocked generator checks need h on R^{2d}")
    r = max(r1 + 1, 2 * r2) + r3
    pairs = probe.points(2 * d)
    triples = np.concatenate(
        [probe.points(3 * d), _diagonal_triples(pairs, d)], axis=1
    )
    dotted = _static_measure(generator_map(h, c, "block_one"), r, 0, pairs)
    ddot = _static_measure(generator_map(h, c, "block_two"), r, 0, triples)
    rhs, extras = _generator_rhs(
        c,
        triples[..., d : 2 * d],
        np.concatenate([pairs, triples[..., list(range(d)) + list(range(2 * d, 3 * d))]], axis=1),
        derivative_map(h, 1),
        r1,
        r2,
        r3,
    )
    # The one-argument measure is not dominated by the blocked one
    # sample-wise (the diagonal embedding grows the weight), so each
    # operator is checked against the shared right side instead.
    extras["single_block"] = dotted
    extras["double_block"] = ddot
    return _report(
        "generator-block",
        {**params, "r": r, "t": t},
        max(dotted, ddot),
        rhs,
        probe.describe(3 * d),
        extras,
    )


def _check_generator_plain(h, params, probe, c) -> CalculusReport:
    if c is None:
        raise ValueError("generator checks need a coefficient set")
    r1, r2, r3 = params["r1"], params["r2"], params["r3"]
    t = params.get("t", 0.0)
    d = c.dim_d
    if h.input_dim != d:
        raise ValueError("plain generator checks need h on R^d")
    r = max(r1 + 1, 2 * r2) + r3
    singles = probe.points(d)
    pairs = np.concatenate(
        [probe.points(2 * d), np.concatenate([singles, singles], axis=-1)], axis=1
    )
    one = _static_measure(generator_map(h, c, "one_arg"), r, 0, singles)
    two = _static_measure(generator_map(h, c, "two_arg"), r, 0, pairs)
    rhs, extras = _generator_rhs(
        c,
        pairs[..., d:],
        np.concatenate([pairs[..., :d], singles], axis=1),
        derivative_map(h, 1),
        r1,
        r2,
        r3,
    )
    extras["one_arg"] = one
    extras["two_arg"] = two
    return _report(
        "generator-plain",
        {**params, "r": r, "t": t},
        max(one, two),
        rhs,
        probe.describe(2 * d),
        extras,
    )


def _check_generator_double(h, params, probe, c) -> CalculusReport:
    if c is None:
        raise ValueError("generator checks need a coefficient set")
    if h.max_order < 4:
        raise ValueError("the twice-applied generator check needs order 4")
    r1, r2, r3 = params["r1"], params["r2"], params["r3"]
    t1 = params.get("t1", 0.0)
    t2 = params.get("t2", 0.0)
    d = c.dim_d
    if h.input_dim != d:
        raise ValueError("this check takes h on R^d")
    r = 2 * max(r1, 2 * r2 + 1) + r3 + 8

    def dg_eval(t, p, order):
        return double_generator_apply(
            h, c, t1, t2, p[..., :d], p[..., d : 2 * d], p[..., 2 * d :]
        )

    dg = SmoothMap(3 * d, h.output_dim, 0, dg_eval)
    triples = probe.points(3 * d)
    lhs = _static_measure(dg, r, 0, triples)
    coef_points = np.concatenate([triples[..., d : 2 * d], triples[..., 2 * d :]], axis=1)
    mu_v = _static_measure(c.mu, r1, 2, coef_points)
    sig_v = _static_measure(c.sigma, r2, 2, coef_points)
    h_points = np.concatenate([probe.points(d), triples[..., :d]], axis=1)
    h_v = _static_measure(h, r3, 4, h_points)
    constant = 2.0 ** (r + r3 + 14) * d
    rhs = constant * _times(max(mu_v**2, 0.25 * sig_v**4), h_v)
    extras = {"mu": mu_v, "sigma": sig_v, "h_measure": h_v, "constant": constant}
    return _report(
        "generator-double", {**params, "r": r}, lhs, rhs, probe.describe(3 * d), extras
    )


CALCULUS_CHECKS = {
    "index-shift": _check_index_shift,
    "antiderivative": _check_antiderivative,
    "lift-commute": _check_lift_commute,
    "lift-integral": _check_lift_integral,
    "lift-retract": _check_lift_retract,
    "generator-block": _check_generator_block,
    "generator-plain": _check_generator_plain,
    "generator-double": _check_generator_double,
}


def verify_calculus(
    fixture: SmoothMap,
    lemma: str,
    params: dict,
    probe: ProbeSpec | None = None,
    coefficients: CoefficientSet | None = None,
) -> CalculusReport:
    """Evaluate both sides of a calculus inequality on a shared probe."""
    if lemma not in CALCULUS_CHECKS:
        raise ValueError(f"unknown calculus check {lemma!r}; known: {sorted(CALCULUS_CHECKS)}")
    return CALCULUS_CHECKS[lemma](fixture, params, probe or DEFAULT_PROBE, coefficients)
