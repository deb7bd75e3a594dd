"""Ground models: flat plane and the uneven box grid.

The uneven terrain is a uniform grid of axis-aligned boxes whose tops sit at
a nominal height plus a per-box uniform perturbation; with a configurable
probability the whole arena is left unperturbed so training never overfits
to roughness. Height queries outside the grid fall back to the base height.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NOMINAL_BOX_HEIGHT = 0.15


@dataclass
class Terrain:
    """Axis-aligned box grid; heights[i, j] is the top of box (i, j)."""

    origin: np.ndarray = field(default_factory=lambda: np.array([-1.5, -1.5]))
    cell_size: float = 0.25
    heights: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    base_height: float = 0.0

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.heights = np.asarray(self.heights, dtype=float)

    @property
    def is_flat(self):
        return self.heights.size == 0 or np.ptp(self.heights) == 0.0

    def height_at(self, x, y):
        """Ground height under (x, y); arrays broadcast elementwise."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.heights.size == 0:
            return np.broadcast_to(np.float64(self.base_height), x.shape).copy() if x.shape else float(self.base_height)
        i = np.floor((x - self.origin[0]) / self.cell_size).astype(int)
        j = np.floor((y - self.origin[1]) / self.cell_size).astype(int)
        inside = (
            (i >= 0)
            & (i < self.heights.shape[0])
            & (j >= 0)
            & (j < self.heights.shape[1])
        )
        out = np.full(np.broadcast_shapes(x.shape, y.shape), self.base_height)
        if np.any(inside):
            out[inside] = self.heights[i[inside], j[inside]]
        if out.shape == ():
            return float(out)
        return out

    def boxes(self):
        """Spec view: list of (center_x, center_y, size_x, size_y, top_z)."""
        result = []
        nx, ny = self.heights.shape if self.heights.size else (0, 0)
        for i in range(nx):
            for j in range(ny):
                cx = self.origin[0] + (i + 0.5) * self.cell_size
                cy = self.origin[1] + (j + 0.5) * self.cell_size
                result.append((cx, cy, self.cell_size, self.cell_size, self.heights[i, j]))
        return result

    def set_height_under(self, x, y, value):
        """Overwrite the box top under (x, y); no-op outside the grid."""
        if self.heights.size == 0:
            return
        i = int(np.floor((x - self.origin[0]) / self.cell_size))
        j = int(np.floor((y - self.origin[1]) / self.cell_size))
        if 0 <= i < self.heights.shape[0] and 0 <= j < self.heights.shape[1]:
            self.heights[i, j] = value


def flat_terrain(height=0.0):
    return Terrain(heights=np.zeros((0, 0)), base_height=height)


def make_uneven_terrain(
    rng,
    epsilon,
    origin=(-1.5, -1.5),
    shape=(20, 12),
    cell_size=0.25,
    skip_probability=0.2,
    nominal_height=NOMINAL_BOX_HEIGHT,
):
    """Sample the uneven box arena.

    With probability `skip_probability` all boxes stay at the nominal
    height; otherwise each box receives an independent U(-epsilon, epsilon)
    height perturbation.
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be >= 0")
    heights = np.full(shape, nominal_height)
    if rng.random() >= skip_probability and epsilon > 0.0:
        heights = heights + rng.uniform(-epsilon, epsilon, size=shape)
    return Terrain(
        origin=np.asarray(origin, dtype=float),
        cell_size=cell_size,
        heights=heights,
        base_height=nominal_height,
    )
