"""Coefficient maps with exact spatial derivatives, and augmented-derivative liftings.

A :class:`SmoothMap` bundles a function ``h`` with closed-form derivative
tensors up to a declared order.  :class:`CoefficientSet` groups the four maps
``(mu, sigma, f, g)`` that define a terminal-value problem on a horizon ``T``.
``lift_augmented`` builds the map ``(x, y) -> (h(x), grad h(x)^T y)`` whose own
derivatives are assembled in closed form from those of ``h``.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, replace

import numpy as np

from . import _probes

Evaluator = Callable[[float, np.ndarray, int], np.ndarray]

_EINSUM_LETTERS = "abcdefgh"

ASSUMPTION_LEVELS = ("A2.7", "A3.6", "A4.4")

# Minimum declared derivative orders per assumption level.
_ORDER_FLOOR = {
    "A2.7": {"mu": 2, "sigma": 2, "g": 2, "f": 4},
    "A3.6": {"mu": 3, "sigma": 3, "g": 3, "f": 5},
    "A4.4": {"mu": 2, "sigma": 2, "g": 2, "f": 2},
}


@dataclass(frozen=True)
class SmoothMap:
    """A map h: R^d_in -> R^d_out with spatial derivatives up to ``max_order``.

    ``eval(t, x, order)`` returns the rank-``order`` derivative tensor with
    index convention ``D[..., i1, .., ik, j] = d_{i1} .. d_{ik} h_j(t, x)``.
    Leading axes of ``x`` are batch axes: input shape ``(..., d_in)`` yields
    output shape ``(..., d_in, .., d_in, d_out)`` with ``order`` derivative
    axes.  Evaluators must be pure; they are called from concurrent workers.
    """

    input_dim: int
    output_dim: int
    max_order: int
    evaluator: Evaluator
    time_dependent: bool = False
    time_deriv: "SmoothMap | None" = None

    def eval(self, t: float, x: np.ndarray, order: int = 0) -> np.ndarray:
        if not 0 <= order <= self.max_order:
            raise ValueError(
                f"derivative order {order} outside available range 0..{self.max_order}"
            )
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.input_dim:
            raise ValueError(f"expected trailing axis of size {self.input_dim}")
        out = np.asarray(self.evaluator(t, x, order), dtype=float)
        want = x.shape[:-1] + (self.input_dim,) * order + (self.output_dim,)
        if out.shape != want:
            raise ValueError(
                f"evaluator returned shape {out.shape}, expected {want} at order {order}"
            )
        return out


def constant_map(
    value: np.ndarray, input_dim: int, *, max_order: int = 6
) -> SmoothMap:
    """Constant map; every derivative vanishes."""
    value = np.atleast_1d(np.asarray(value, dtype=float))
    out_dim = value.shape[0]

    def evaluator(t: float, x: np.ndarray, order: int) -> np.ndarray:
        batch = x.shape[:-1]
        if order == 0:
            return np.broadcast_to(value, batch + (out_dim,)).copy()
        return np.zeros(batch + (input_dim,) * order + (out_dim,))

    return SmoothMap(input_dim, out_dim, max_order, evaluator)


def linear_map(
    matrix: np.ndarray, offset: np.ndarray | None = None, *, max_order: int = 6
) -> SmoothMap:
    """Affine map ``h(x) = matrix^T x + offset`` with ``matrix`` of shape (d_in, d_out)."""
    matrix = np.asarray(matrix, dtype=float)
    d_in, d_out = matrix.shape
    off = np.zeros(d_out) if offset is None else np.asarray(offset, dtype=float)

    def evaluator(t: float, x: np.ndarray, order: int) -> np.ndarray:
        batch = x.shape[:-1]
        if order == 0:
            return x @ matrix + off
        if order == 1:
            return np.broadcast_to(matrix, batch + matrix.shape).copy()
        return np.zeros(batch + (d_in,) * order + (d_out,))

    return SmoothMap(d_in, d_out, max_order, evaluator)


def _time_deriv_or_zero(h: SmoothMap) -> SmoothMap | None:
    if h.time_deriv is not None:
        return h.time_deriv
    if not h.time_dependent:
        return constant_map(np.zeros(h.output_dim), h.input_dim, max_order=h.max_order)
    return None


def linear_combination(a: float, h1: SmoothMap, b: float, h2: SmoothMap) -> SmoothMap:
    """Pointwise combination ``a*h1 + b*h2`` of maps with identical dimensions."""
    if (h1.input_dim, h1.output_dim) != (h2.input_dim, h2.output_dim):
        raise ValueError("maps must share input and output dimensions")
    order = min(h1.max_order, h2.max_order)

    def evaluator(t: float, x: np.ndarray, k: int) -> np.ndarray:
        return a * h1.eval(t, x, k) + b * h2.eval(t, x, k)

    time_deriv = None
    if h1.time_deriv is not None or h2.time_deriv is not None:
        t1, t2 = _time_deriv_or_zero(h1), _time_deriv_or_zero(h2)
        if t1 is not None and t2 is not None:
            time_deriv = linear_combination(a, t1, b, t2)
    return SmoothMap(
        h1.input_dim,
        h1.output_dim,
        order,
        evaluator,
        time_dependent=h1.time_dependent or h2.time_dependent,
        time_deriv=time_deriv,
    )


def map_difference(h1: SmoothMap, h2: SmoothMap) -> SmoothMap:
    return linear_combination(1.0, h1, -1.0, h2)


def derivative_map(h: SmoothMap, shift: int) -> SmoothMap:
    """View ``x -> grad^shift h(x)`` as a map with flattened tensor values.

    The order-k tensor of the view is the order-``shift + k`` tensor of ``h``
    with the trailing ``shift`` derivative axes folded into the output axis,
    so Frobenius norms of the view's tensors equal those of the full tensors.
    """
    if not 0 <= shift <= h.max_order:
        raise ValueError(f"shift {shift} outside 0..{h.max_order}")
    d, o = h.input_dim, h.output_dim
    out_dim = d**shift * o

    def evaluator(t: float, x: np.ndarray, order: int) -> np.ndarray:
        full = h.eval(t, x, shift + order)
        return full.reshape(x.shape[:-1] + (d,) * order + (out_dim,))

    time_deriv = None
    if h.time_deriv is not None and h.time_deriv.max_order >= shift:
        time_deriv = derivative_map(h.time_deriv, shift)
    return SmoothMap(
        d,
        out_dim,
        h.max_order - shift,
        evaluator,
        time_dependent=h.time_dependent,
        time_deriv=time_deriv,
    )


def lift_augmented(h: SmoothMap) -> SmoothMap:
    """Augment ``h`` with its derivative: ``(x, y) -> (h(x), grad h(x)^T y)``.

    The returned map has input dimension ``2*d_in``, output dimension
    ``2*d_out``, and one derivative order fewer than ``h``.  Its derivative
    tensors are filled blockwise: all-x slots reproduce the tensors of ``h``
    (first output block) and the ``y``-contraction of the next-higher tensor
    (second block); a single y-slot reproduces the tensor of ``h`` in the
    second block; two or more y-slots vanish.
    """
    if h.max_order < 1:
        raise ValueError("cannot lift a map that carries no first derivative")
    d, o = h.input_dim, h.output_dim

    def evaluator(t: float, xy: np.ndarray, order: int) -> np.ndarray:
        x1 = xy[..., :d]
        x2 = xy[..., d:]
        lower = h.eval(t, x1, order)
        upper = h.eval(t, x1, order + 1)
        letters = _EINSUM_LETTERS[:order]
        contracted = np.einsum(f"...k,...k{letters}z->...{letters}z", x2, upper)
        out = np.zeros(xy.shape[:-1] + (2 * d,) * order + (2 * o,))
        first = [slice(0, d)] * order
        out[(Ellipsis, *first, slice(0, o))] = lower
        out[(Ellipsis, *first, slice(o, 2 * o))] = contracted
        for j in range(order):
            slots = list(first)
            slots[j] = slice(d, 2 * d)
            out[(Ellipsis, *slots, slice(o, 2 * o))] = lower
        return out

    time_deriv = None
    if h.time_deriv is not None:
        time_deriv = lift_augmented(h.time_deriv)
    return SmoothMap(
        2 * d,
        2 * o,
        h.max_order - 1,
        evaluator,
        time_dependent=h.time_dependent,
        time_deriv=time_deriv,
    )


@dataclass(frozen=True)
class CoefficientSet:
    """Drift, diffusion, terminal payoff, and running payoff on a horizon.

    ``sigma`` stores the matrix-valued diffusion row-major as a flat vector;
    ``sigma_shape`` declares the (rows, cols) interpretation.  Rows equal the
    state dimension and cols equal the driving noise dimension, which stays
    at the base ``d`` for lifted sets.
    """

    mu: SmoothMap
    sigma: SmoothMap
    f: SmoothMap
    g: SmoothMap
    horizon_T: float
    dim_d: int
    dim_o: int
    sigma_shape: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if self.sigma_shape == (0, 0):
            object.__setattr__(self, "sigma_shape", (self.dim_d, self.dim_d))
        if self.horizon_T < 1.0:
            raise ValueError("time horizon must satisfy T >= 1")
        d, o = self.dim_d, self.dim_o
        rows, cols = self.sigma_shape
        checks = [
            (self.mu.input_dim == d and self.mu.output_dim == d, "mu"),
            (
                self.sigma.input_dim == d
                and self.sigma.output_dim == rows * cols
                and rows == d,
                "sigma",
            ),
            (self.f.input_dim == d and self.f.output_dim == o, "f"),
            (self.g.input_dim == d and self.g.output_dim == o, "g"),
        ]
        for ok, name in checks:
            if not ok:
                raise ValueError(f"{name} has dimensions inconsistent with (d={d}, o={o})")
        if self.g.time_deriv is None:
            if self.g.time_dependent:
                raise ValueError("time-dependent g must carry a time derivative")
            zero = constant_map(np.zeros(o), d, max_order=self.g.max_order)
            object.__setattr__(self, "g", replace(self.g, time_deriv=zero))

    @property
    def noise_dim(self) -> int:
        return self.sigma_shape[1]

    def sigma_matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        """Diffusion matrix of shape (..., rows, cols)."""
        flat = self.sigma.eval(t, x, 0)
        return flat.reshape(x.shape[:-1] + self.sigma_shape)


def lift_coefficient_set(c: CoefficientSet) -> CoefficientSet:
    """Lift every component; the result runs the augmented system on R^{2d}.

    The lifted diffusion keeps the original d-dimensional driving noise: its
    flat layout coincides with a (2d) x d matrix whose top block is sigma and
    whose bottom block is the y-contraction of grad sigma.
    """
    floors = _ORDER_FLOOR["A3.6"]
    for name in ("mu", "sigma", "f", "g"):
        comp: SmoothMap = getattr(c, name)
        if comp.max_order < floors[name]:
            raise ValueError(
                f"{name} declares order {comp.max_order}, need {floors[name]} to lift"
            )
    if c.g.time_deriv is None or c.g.time_deriv.max_order < 1:
        raise ValueError("g.time_deriv must carry a first derivative to lift")
    if c.sigma_shape != (c.dim_d, c.dim_d):
        raise ValueError("only square base diffusions are lifted")
    return CoefficientSet(
        mu=lift_augmented(c.mu),
        sigma=lift_augmented(c.sigma),
        f=lift_augmented(c.f),
        g=lift_augmented(c.g),
        horizon_T=c.horizon_T,
        dim_d=2 * c.dim_d,
        dim_o=2 * c.dim_o,
        sigma_shape=(2 * c.dim_d, c.dim_d),
    )


@dataclass(frozen=True)
class AssumptionReport:
    level: str
    passed: bool
    failures: tuple[str, ...]


def _probe_lattice(dim: int, r_max: float) -> np.ndarray:
    radii = _probes.shell_radii(r_max=r_max, count=10)
    dirs = _probes.sphere_directions(dim, 32)
    return _probes.shell_points(radii, dirs)


def _shell_sup(values: np.ndarray) -> tuple[float, bool]:
    """Max over a (shells, dirs) array and whether the gauge grows at the rim.

    The outermost radial band is compared against the interior record, so
    bounded oscillating gauges (whose per-shell sup jitters at log-spaced
    radii) pass while anything climbing with the radius by a band-to-band
    factor (superlinear growth) is flagged.  Gauges converging to a positive
    limit, the admissible linear-growth case, stay within the allowance.
    """
    per_shell = values.max(axis=1)
    total = float(per_shell.max())
    if per_shell.shape[0] < 2:
        return total, False
    band = max(1, (per_shell.shape[0] - 1) // 6)
    tail = float(per_shell[-band:].max())
    growing = tail > float(per_shell[:-band].max()) * 1.25 + 1e-12
    return total, growing


def _tensor_norms(h: SmoothMap, points: np.ndarray, order: int, times) -> np.ndarray:
    flat = points.reshape(-1, points.shape[-1])
    axes = tuple(range(1, order + 2))
    per_t = [
        np.sqrt(np.sum(h.eval(t, flat, order) ** 2, axis=axes)) for t in times
    ]
    return np.max(per_t, axis=0).reshape(points.shape[:-1])


def check_assumption_level(c: CoefficientSet, level: str) -> AssumptionReport:
    """Probe-backed differentiability and growth check; report-valued."""
    if level not in ASSUMPTION_LEVELS:
        raise ValueError(f"unknown assumption level {level!r}")
    failures: list[str] = []
    floors = _ORDER_FLOOR[level]
    for name in ("mu", "sigma", "f", "g"):
        comp: SmoothMap = getattr(c, name)
        if comp.max_order < floors[name]:
            failures.append(
                f"{name}: declared order {comp.max_order} below required {floors[name]}"
            )

    points = _probe_lattice(c.dim_d, r_max=1.0e3)
    norms = np.linalg.norm(points, axis=-1)
    times = (0.0, c.horizon_T / 2, c.horizon_T)

    # Linear growth of mu and sigma must hold at every level.
    for name in ("mu", "sigma"):
        comp = getattr(c, name)
        gauge = _tensor_norms(comp, points, 0, times if comp.time_dependent else (0.0,))
        _, growing = _shell_sup(gauge / (1.0 + norms))
        if growing:
            failures.append(f"{name}: linear-growth gauge keeps increasing on outer shells")

    # Globally bounded spatial derivatives of mu and sigma: all orders at
    # A3.6, first order only for the perturbation level.
    if level in ("A3.6", "A4.4"):
        for name in ("mu", "sigma"):
            comp = getattr(c, name)
            top = min(3, comp.max_order) if level == "A3.6" else 1
            for order in range(1, top + 1):
                gauge = _tensor_norms(
                    comp, points, order, times if comp.time_dependent else (0.0,)
                )
                _, growing = _shell_sup(gauge)
                if growing:
                    failures.append(
                        f"{name}: order-{order} derivative unbounded on outer shells"
                    )
                    break

    return AssumptionReport(level=level, passed=not failures, failures=tuple(failures))
