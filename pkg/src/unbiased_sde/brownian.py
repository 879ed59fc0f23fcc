"""Dyadic Brownian grids refined by Brownian-bridge midpoints."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .streams import RandomStream, gaussian_at


@njit(cache=True, nogil=True)
def bridge_midpoint(left, right, h, z):
    """B at the centre of a cell of width h given its endpoints, from z ~ N(0, 1)."""
    return 0.5 * (left + right) + math.sqrt(h / 4.0) * z


@njit(cache=True, nogil=True)
def refine_values(values, horizon, level, key, counter):
    """Return the level+1 grid; midpoint k consumes draw ``counter + k``."""
    n_cells = values.shape[0] - 1
    h = horizon / (1 << level)
    out = np.empty(2 * n_cells + 1)
    for k in range(n_cells):
        out[2 * k] = values[k]
        out[2 * k + 1] = bridge_midpoint(values[k], values[k + 1], h, gaussian_at(key, counter + k))
    out[2 * n_cells] = values[n_cells]
    return out


@njit(cache=True, nogil=True)
def initial_values(horizon, key, counter):
    out = np.empty(2)
    out[0] = 0.0
    out[1] = math.sqrt(horizon) * gaussian_at(key, counter)
    return out


@dataclass
class BrownianGrid:
    """B sampled at ``j * horizon * 2**-level`` for ``j = 0..2**level``."""

    level: int
    horizon: float
    values: np.ndarray

    @property
    def step(self) -> float:
        return self.horizon / (1 << self.level)

    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def init_brownian_grid(stream: RandomStream, horizon: float = 1.0) -> BrownianGrid:
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    values = initial_values(float(horizon), stream.key, stream.draws)
    stream.draws += 1
    return BrownianGrid(0, float(horizon), values)


def refine_grid(grid: BrownianGrid, stream: RandomStream) -> BrownianGrid:
    """One binary refinement; existing points are copied bit for bit."""
    values = refine_values(grid.values, grid.horizon, grid.level, stream.key,
                           stream.draws)
    stream.draws += 1 << grid.level
    return BrownianGrid(grid.level + 1, grid.horizon, values)
