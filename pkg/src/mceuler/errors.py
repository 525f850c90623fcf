"""L2 and Sobolev error functionals on compact domains, the gradient-to-ball
conversion constant, and log-log rate fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln
from scipy.stats import qmc

__all__ = [
    "CompactDomain",
    "QuadratureRule",
    "BallReport",
    "RateFit",
    "box_domain",
    "ball_domain",
    "quadrature_nodes",
    "l2_error",
    "sobolev_error",
    "ball_conversion_constant",
    "verify_ball_lemma",
    "weighted_norm",
    "rate_fit",
]

_PANEL_ORDER = 8


@dataclass(frozen=True)
class CompactDomain:
    kind: str
    dim: int
    bounds: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float = 0.0

    @property
    def volume(self) -> float:
        if self.kind == "box":
            return float(np.prod(self.bounds[:, 1] - self.bounds[:, 0]))
        d = self.dim
        return math.pi ** (d / 2) / math.exp(gammaln(d / 2 + 1)) * self.radius**d


def box_domain(bounds) -> CompactDomain:
    arr = np.atleast_2d(np.asarray(bounds, dtype=float))
    if arr.shape[1] != 2 or np.any(arr[:, 1] <= arr[:, 0]):
        raise ValueError("box bounds must be per-axis (lo, hi) with lo < hi")
    arr = arr.copy()
    arr.flags.writeable = False
    return CompactDomain(kind="box", dim=arr.shape[0], bounds=arr)


def unit_box(dim: int) -> CompactDomain:
    return box_domain(np.column_stack([np.zeros(dim), np.ones(dim)]))


def ball_domain(center, radius: float) -> CompactDomain:
    center = np.asarray(center, dtype=float)
    if radius <= 0:
        raise ValueError("ball radius must be positive")
    center = center.copy()
    center.flags.writeable = False
    return CompactDomain(kind="ball", dim=center.shape[0], center=center, radius=float(radius))


@dataclass(frozen=True)
class QuadratureRule:
    """Node generator: a low-discrepancy lattice or a tensor Gauss grid.

    ``count`` is the total node budget for lattices and balls (the built rule
    may slightly exceed it) and the per-axis order for tensor grids.
    """

    kind: str = "low-discrepancy"
    count: int = 1 << 15


DEFAULT_RULE = QuadratureRule()


def _panel_gauss(lo: float, hi: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
    # Composite Gauss-Legendre: arbitrary node budgets without giant eigenproblems.
    base_x, base_w = leggauss(_PANEL_ORDER)
    edges = np.linspace(lo, hi, panels + 1)
    half = np.diff(edges) / 2.0
    mids = (edges[:-1] + edges[1:]) / 2.0
    x = (mids[:, None] + half[:, None] * base_x[None, :]).ravel()
    w = (half[:, None] * base_w[None, :]).ravel()
    return x, w


def _box_nodes(domain: CompactDomain, rule: QuadratureRule):
    lo, hi = domain.bounds[:, 0], domain.bounds[:, 1]
    if rule.kind == "low-discrepancy":
        bits = max(0, math.ceil(math.log2(rule.count)))
        raw = qmc.Sobol(d=domain.dim, scramble=False).random_base2(bits)
        points = lo + raw * (hi - lo)
        weights = np.full(len(points), domain.volume / len(points))
        return points, weights
    if rule.kind == "tensor-grid":
        if domain.dim > 3:
            raise ValueError("tensor grids are limited to dimension 3")
        axes, axis_w = [], []
        base_x, base_w = leggauss(rule.count)
        for a in range(domain.dim):
            half = (hi[a] - lo[a]) / 2.0
            axes.append((lo[a] + hi[a]) / 2.0 + half * base_x)
            axis_w.append(half * base_w)
        grids = np.meshgrid(*axes, indexing="ij")
        points = np.stack([g.ravel() for g in grids], axis=-1)
        weights = np.ones(1)
        for w in axis_w:
            weights = np.outer(weights, w).ravel()
        return points, weights
    raise ValueError(f"unknown quadrature kind {rule.kind!r}")


def _ball_nodes(domain: CompactDomain, count: int):
    d, radius, center = domain.dim, domain.radius, domain.center
    if d == 1:
        x, w = _panel_gauss(center[0] - radius, center[0] + radius, max(1, math.ceil(count / _PANEL_ORDER)))
        return x[:, None], w
    if d == 2:
        n_theta = max(8, math.ceil(math.sqrt(2.0 * count)))
        panels = max(1, math.ceil(count / (n_theta * _PANEL_ORDER)))
        r, wr = _panel_gauss(0.0, radius, panels)
        theta = (np.arange(n_theta) + 0.5) * (2.0 * math.pi / n_theta)
        rr, tt = np.meshgrid(r, theta, indexing="ij")
        points = center + np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1).reshape(-1, 2)
        weights = ((wr * r)[:, None] * np.full(n_theta, 2.0 * math.pi / n_theta)).ravel()
        return points, weights
    if d == 3:
        side = max(4, math.ceil(count ** (1.0 / 3.0)))
        r, wr = _panel_gauss(0.0, radius, max(1, math.ceil(side / _PANEL_ORDER)))
        ct, wt = leggauss(side)  # cos(polar angle)
        n_phi = side
        phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
        sin_t = np.sqrt(1.0 - ct**2)
        x = r[:, None, None] * sin_t[None, :, None] * np.cos(phi)[None, None, :]
        y = r[:, None, None] * sin_t[None, :, None] * np.sin(phi)[None, None, :]
        z = r[:, None, None] * ct[None, :, None] * np.ones_like(phi)[None, None, :]
        points = center + np.stack([x, y, z], axis=-1).reshape(-1, 3)
        weights = (
            (wr * r**2)[:, None, None]
            * wt[None, :, None]
            * np.full(n_phi, 2.0 * math.pi / n_phi)[None, None, :]
        ).ravel()
        return points, weights
    raise ValueError("ball quadrature supports dimensions 1 to 3")


def quadrature_nodes(domain: CompactDomain, rule: QuadratureRule = DEFAULT_RULE):
    """Nodes and weights for the domain; weights sum to its volume."""
    if domain.kind == "box":
        points, weights = _box_nodes(domain, rule)
    else:
        points, weights = _ball_nodes(domain, rule.count)
    total = float(weights.sum())
    if not math.isclose(total, domain.volume, rel_tol=1e-10):
        raise AssertionError(f"weights sum to {total}, volume is {domain.volume}")
    return points, weights


def _eval_columns(handle, points: np.ndarray) -> np.ndarray:
    out = np.asarray(handle(points), dtype=float)
    if out.shape[0] != len(points):
        raise ValueError("handle must return one row per node")
    return out.reshape(len(points), -1)


def l2_error(a, b, domain: CompactDomain, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """sqrt of the integral of ||a - b||^2; handles take (n, d) node arrays."""
    points, weights = quadrature_nodes(domain, rule)
    diff = _eval_columns(a, points) - _eval_columns(b, points)
    return math.sqrt(float(weights @ (diff**2).sum(axis=1)))


def sobolev_error(
    a_value,
    a_grad,
    b_value,
    b_grad,
    domain: CompactDomain,
    rule: QuadratureRule = DEFAULT_RULE,
) -> tuple[float, float]:
    """L2 errors of values and of gradients (Frobenius norm per node)."""
    return (
        l2_error(a_value, b_value, domain, rule),
        l2_error(a_grad, b_grad, domain, rule),
    )


def ball_conversion_constant(d: int) -> float:
    """2d Gamma((d+4)/2) / pi^(d/2), evaluated in the log domain."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    return math.exp(math.log(2 * d) + gammaln((d + 4) / 2) - (d / 2) * math.log(math.pi))


@dataclass(frozen=True)
class BallReport:
    matrix_norm_sq: float
    integral: float
    constant: float
    margin: float
    nodes: int

    @property
    def holds(self) -> bool:
        return self.margin >= -1e-6


def verify_ball_lemma(A, count: int = 1 << 17) -> BallReport:
    """Check ||A||_F^2 <= c_d * integral of ||A y||^2 over the unit ball."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[1]
    points, weights = quadrature_nodes(ball_domain(np.zeros(d), 1.0), QuadratureRule(count=count))
    integral = float(weights @ ((points @ A.T) ** 2).sum(axis=1))
    constant = ball_conversion_constant(d)
    lhs = float((A**2).sum())
    return BallReport(
        matrix_norm_sq=lhs,
        integral=integral,
        constant=constant,
        margin=constant * integral - lhs,
        nodes=len(points),
    )


def weighted_norm(
    domain: CompactDomain, s: float, rule: QuadratureRule = DEFAULT_RULE
) -> float:
    """L2(K) norm of x -> 1 + ||x||^s."""
    points, weights = quadrature_nodes(domain, rule)
    vals = 1.0 + np.linalg.norm(points, axis=1) ** s
    return math.sqrt(float(weights @ vals**2))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float


def rate_fit(points) -> RateFit:
    """Least-squares line through (log size, log error) pairs."""
    sizes = np.array([p[0] for p in points], dtype=float)
    errs = np.array([p[1] for p in points], dtype=float)
    if len(sizes) < 3:
        raise ValueError("need at least three points")
    if np.any(sizes <= 0) or np.any(errs <= 0):
        raise ValueError("sizes and errors must be positive")
    lx, ly = np.log(sizes), np.log(errs)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = ly - (slope * lx + intercept)
    total = ly - ly.mean()
    ss_tot = float(total @ total)
    r_squared = 1.0 if ss_tot == 0 else 1.0 - float(residual @ residual) / ss_tot
    return RateFit(slope=float(slope), intercept=float(intercept), r_squared=r_squared)
