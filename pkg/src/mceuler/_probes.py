"""Deterministic probe lattices for sup-style measurements."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

DEFAULT_RADIUS = 1.0e3


def shell_radii(r_max: float = DEFAULT_RADIUS, count: int = 24) -> np.ndarray:
    """Log-spaced radii from 1e-3 out to r_max, origin prepended."""
    return np.concatenate([[0.0], np.logspace(-3.0, np.log10(r_max), count)])


def sphere_directions(dim: int, count: int) -> np.ndarray:
    """Signed coordinate axes plus Sobol'-seeded unit vectors, (count+2*dim, dim)."""
    axes = np.concatenate([np.eye(dim), -np.eye(dim)])
    if count <= 0:
        return axes
    m = max(0, int(np.ceil(np.log2(count))))
    u = qmc.Sobol(dim, scramble=False).random_base2(m)[:count]
    z = ndtri(np.clip(u, 1e-9, 1.0 - 1e-9))
    norm = np.linalg.norm(z, axis=1, keepdims=True)
    # Sobol' points mapping to the Gaussian origin carry no direction; reuse an axis.
    z = np.where(norm > 1e-9, z / np.maximum(norm, 1e-300), axes[0])
    return np.concatenate([axes, z])


def shell_points(radii: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Radius-direction lattice, shape (len(radii), len(directions), dim)."""
    return radii[:, None, None] * directions[None, :, :]
