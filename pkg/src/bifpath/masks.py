"""Grid occupancy masks and connected-component labeling.

Digital-topology convention: obstacle masks are fattened so they are
8-connected along curves, and the free space is labeled with 4-neighbor
connectivity.  That pairing makes a discretized closed curve actually
separate the plane grid, which is what the separation checks need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

FOUR_NEIGHBOR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class SeedOnObstacle(Exception):
    """A labeling seed landed on a masked cell."""


@dataclass
class RegionMask:
    """Boolean occupancy over a regular node grid.

    ``grid[i, j]`` is the node at origin + (i, j) * spacing, axis 0 = x.
    """

    grid: np.ndarray
    origin: tuple[float, float]
    spacing: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def count(self) -> int:
        return int(self.grid.sum())

    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.grid.shape
        xs = self.origin[0] + self.spacing * np.arange(nx)
        ys = self.origin[1] + self.spacing * np.arange(ny)
        return xs, ys

    def index_of(self, x: float, y: float) -> tuple[int, int]:
        i = int(round((x - self.origin[0]) / self.spacing))
        j = int(round((y - self.origin[1]) / self.spacing))
        nx, ny = self.grid.shape
        if not (0 <= i < nx and 0 <= j < ny):
            raise IndexError(f"point ({x}, {y}) outside the mask window")
        return i, j

    def to_csv(self) -> str:
        lines = ["row,col,value"]
        nx, ny = self.grid.shape
        g = self.grid.astype(int)
        for i in range(nx):
            row = g[i]
            lines.extend(f"{i},{j},{row[j]}" for j in range(ny))
        return "\n".join(lines) + "\n"

    def to_pgm(self) -> str:
        # P2 text PGM; image rows scan y downward so plots look upright
        nx, ny = self.grid.shape
        lines = ["P2", f"{nx} {ny}", "255"]
        img = np.where(self.grid, 255, 0)
        for j in range(ny - 1, -1, -1):
            lines.append(" ".join(str(int(v)) for v in img[:, j]))
        return "\n".join(lines) + "\n"


def mask_from_points(
    points: np.ndarray,
    window,
    spacing: float,
    halo: float | None = None,
) -> RegionMask:
    """Occupancy mask of a point-sampled set, fattened by ``halo``.

    Default halo is 1.3 cell diagonals, enough to make a curve-like sample
    8-connected on the grid (so its complement 4-separates).
    """
    xmin, xmax, ymin, ymax = window
    nx = int(math.floor((xmax - xmin) / spacing + 1e-9)) + 1
    ny = int(math.floor((ymax - ymin) / spacing + 1e-9)) + 1
    xs = xmin + spacing * np.arange(nx)
    ys = ymin + spacing * np.arange(ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    if halo is None:
        halo = 1.3 * spacing * math.sqrt(2.0)
    tree = cKDTree(np.asarray(points, dtype=float))
    d, _ = tree.query(np.stack([X.ravel(), Y.ravel()], axis=1))
    grid = (d <= halo).reshape(nx, ny)
    return RegionMask(grid=grid, origin=(xmin, ymin), spacing=spacing)


@dataclass
class ComponentLabeling:
    """4-neighbor component labels of the free space of an obstacle mask.

    Label 0 marks obstacle cells; free components are numbered from 1.
    """

    mask: RegionMask
    labels: np.ndarray = field(init=False)
    n_components: int = field(init=False)

    def __post_init__(self):
        free = ~self.mask.grid
        lab, n = ndimage.label(free, structure=FOUR_NEIGHBOR)
        self.labels = lab
        self.n_components = int(n)

    def label_at(self, x: float, y: float) -> int:
        i, j = self.mask.index_of(x, y)
        return int(self.labels[i, j])

    def label_of_seed(self, seed) -> int:
        lab = self.label_at(seed[0], seed[1])
        if lab == 0:
            raise SeedOnObstacle(f"seed {tuple(seed)} lies on the obstacle mask")
        return lab

    def labels_at_many(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized label lookup; points outside the window get -1."""
        i = np.rint((np.asarray(xs) - self.mask.origin[0]) / self.mask.spacing).astype(int)
        j = np.rint((np.asarray(ys) - self.mask.origin[1]) / self.mask.spacing).astype(int)
        nx, ny = self.mask.grid.shape
        ok = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        out = np.full(np.shape(xs), -1, dtype=np.int64)
        out[ok] = self.labels[i[ok], j[ok]]
        return out
