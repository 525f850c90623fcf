"""Shared fixtures: tiny closed-form maps and finite-difference oracles."""

from __future__ import annotations

import numpy as np

from mceuler.coeffs import SmoothMap


def central_diff(h: SmoothMap, t: float, x: np.ndarray, order: int, step: float = 1e-5):
    """Central finite difference of the order-(order-1) tensor along a new first axis."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(h.input_dim):
        dx = np.zeros(h.input_dim)
        dx[i] = step
        hi = h.eval(t, x + dx, order - 1)
        lo = h.eval(t, x - dx, order - 1)
        cols.append((hi - lo) / (2.0 * step))
    return np.stack(cols, axis=0)


def square_map(dim: int, max_order: int = 6) -> SmoothMap:
    """Componentwise square, h_j(x) = x_j^2."""

    def evaluator(t, x, order):
        batch = x.shape[:-1]
        if order == 0:
            return x**2
        out = np.zeros(batch + (dim,) * order + (dim,))
        idx = np.arange(dim)
        if order == 1:
            out[..., idx, idx] = 2.0 * x
        elif order == 2:
            out[..., idx, idx, idx] = 2.0
        return out

    return SmoothMap(dim, dim, max_order, evaluator)


def norm_square_map(dim: int, max_order: int = 6) -> SmoothMap:
    """h(x) = |x|^2 as a scalar map."""

    def evaluator(t, x, order):
        batch = x.shape[:-1]
        if order == 0:
            return np.sum(x**2, axis=-1, keepdims=True)
        if order == 1:
            return (2.0 * x)[..., None]
        out = np.zeros(batch + (dim,) * order + (1,))
        if order == 2:
            idx = np.arange(dim)
            out[..., idx, idx, 0] = 2.0
        return out

    return SmoothMap(dim, 1, max_order, evaluator)


def bilinear_map(max_order: int = 6) -> SmoothMap:
    """d=2 scalar map h(x) = x_1 * x_2."""

    def evaluator(t, x, order):
        batch = x.shape[:-1]
        if order == 0:
            return (x[..., 0] * x[..., 1])[..., None]
        if order == 1:
            return np.stack([x[..., 1], x[..., 0]], axis=-1)[..., None]
        out = np.zeros(batch + (2,) * order + (1,))
        if order == 2:
            out[..., 0, 1, 0] = 1.0
            out[..., 1, 0, 0] = 1.0
        return out

    return SmoothMap(2, 1, max_order, evaluator)


def shifted_cosine_map(max_order: int = 6) -> SmoothMap:
    """d=1 scalar map h(x) = 1 + cos(x), all derivatives via phase shifts."""

    def evaluator(t, x, order):
        y = x[..., 0]
        if order == 0:
            return (1.0 + np.cos(y))[..., None]
        val = np.cos(y + order * np.pi / 2.0)
        return val[(...,) + (None,) * (order + 1)]

    return SmoothMap(1, 1, max_order, evaluator)


def sine_map(max_order: int = 6) -> SmoothMap:
    """d=1 scalar map h(x) = sin(x), derivatives via phase shifts."""

    def evaluator(t, x, order):
        val = np.sin(x[..., 0] + order * np.pi / 2.0)
        return val[(...,) + (None,) * (order + 1)]

    return SmoothMap(1, 1, max_order, evaluator)


def sine_product_map(max_order: int = 4) -> SmoothMap:
    """d=2 scalar map h(x) = sin(x_1) * cos(x_2) with exact derivatives."""

    def evaluator(t, x, order):
        a, b = x[..., 0], x[..., 1]

        def part(i, j):
            return np.sin(a + i * np.pi / 2.0) * np.cos(b + j * np.pi / 2.0)

        batch = x.shape[:-1]
        if order == 0:
            return part(0, 0)[..., None]
        out = np.empty(batch + (2,) * order + (1,))
        for flags in np.ndindex(*(2,) * order):
            i = sum(1 for s in flags if s == 0)
            j = order - i
            out[(...,) + flags + (0,)] = part(i, j)
        return out

    return SmoothMap(2, 1, max_order, evaluator)
