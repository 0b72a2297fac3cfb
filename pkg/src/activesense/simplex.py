"""Regular barycentric grids on the probability simplex.

Interpolation uses the Kuhn (Freudenthal) triangulation in cumulative
coordinates ``u_j = G * (mu_0 + ... + mu_{j-1})``: the simplex maps to the
ordered region ``0 <= u_1 <= ... <= u_{k-1} <= G``, which is a union of Kuhn
cells, so every cell vertex with positive weight is a grid point.
"""

from __future__ import annotations

from math import comb

import numpy as np

MAX_POINTS = 5_000_000
_SNAP = 1e-9


def _compositions(k: int, total: int) -> np.ndarray:
    if k == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for first in range(total + 1):
        rest = _compositions(k - 1, total - first)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.vstack(blocks)


class SimplexGrid:
    """All points ``counts / G`` with non-negative integer counts summing to ``G``."""

    def __init__(self, dim: int, resolution: int):
        if dim < 1:
            raise ValueError("simplex dimension must be at least 1")
        if resolution < 1:
            raise ValueError("grid resolution must be at least 1")
        n_points = comb(resolution + dim - 1, dim - 1)
        lookup_size = (resolution + 1) ** (dim - 1)
        if n_points > MAX_POINTS or lookup_size > 10 * MAX_POINTS:
            raise OverflowError(
                f"grid with |Theta|={dim}, G={resolution} has {n_points} points; limit is {MAX_POINTS}"
            )
        self.dim = dim
        self.resolution = resolution
        self.counts = _compositions(dim, resolution)
        self.points = self.counts / resolution
        self._lookup = np.full((resolution + 1,) * (dim - 1), -1, dtype=np.int64)
        if dim > 1:
            cum = np.cumsum(self.counts, axis=1)[:, :-1]
            self._lookup[tuple(cum.T)] = np.arange(len(self.counts))

    def __len__(self) -> int:
        return len(self.counts)

    def __repr__(self) -> str:
        return f"SimplexGrid(dim={self.dim}, resolution={self.resolution}, points={len(self)})"

    def index_of(self, counts) -> int:
        counts = np.asarray(counts, dtype=np.int64)
        if counts.sum() != self.resolution or np.any(counts < 0):
            raise KeyError(f"{counts.tolist()} is not a grid composition")
        if self.dim == 1:
            return 0
        return int(self._lookup[tuple(np.cumsum(counts)[:-1])])

    def vertex_indices(self) -> np.ndarray:
        """Grid index of each simplex vertex ``m_theta``."""
        eye = np.eye(self.dim, dtype=np.int64) * self.resolution
        return np.array([self.index_of(row) for row in eye])

    def locate(self, mus) -> tuple[np.ndarray, np.ndarray]:
        """Cell vertices and barycentric weights for each belief in ``mus``.

        Returns ``(idx, w)`` of shape ``(m, dim)``; zero-weight slots point at
        index 0.
        """
        mus = np.atleast_2d(np.asarray(mus, dtype=float))
        m = mus.shape[0]
        if self.dim == 1:
            return np.zeros((m, 1), dtype=np.int64), np.ones((m, 1))
        d = self.dim - 1
        G = self.resolution
        u = G * np.cumsum(mus, axis=1)[:, :-1]
        r = np.rint(u)
        u = np.where(np.abs(u - r) < _SNAP, r, u)
        u = np.clip(u, 0.0, G)
        base = np.floor(u).astype(np.int64)
        frac = u - base
        order = np.lexsort((-np.broadcast_to(np.arange(d), (m, d)), -frac), axis=-1)
        f_sorted = np.take_along_axis(frac, order, axis=1)
        weights = np.empty((m, d + 1))
        weights[:, 0] = 1.0 - f_sorted[:, 0]
        weights[:, 1:d] = f_sorted[:, :-1] - f_sorted[:, 1:]
        weights[:, d] = f_sorted[:, -1]
        verts = np.empty((m, d + 1, d), dtype=np.int64)
        verts[:, 0] = base
        rows = np.arange(m)
        current = base.copy()
        for j in range(d):
            current[rows, order[:, j]] += 1
            verts[:, j + 1] = current
        live = weights > 0
        clipped = np.clip(verts, 0, G)
        idx = self._lookup[tuple(np.moveaxis(clipped, -1, 0))]
        if np.any(idx[live] < 0):
            raise AssertionError("interpolation cell vertex fell outside the simplex")
        idx = np.where(live, idx, 0)
        weights = np.where(live, weights, 0.0)
        return idx, weights

    def interpolate(self, values, mus):
        """Piecewise-linear interpolation of grid ``values`` at ``mus``."""
        values = np.asarray(values, dtype=float)
        single = np.asarray(mus).ndim == 1
        idx, w = self.locate(mus)
        out = (values[idx] * w).sum(axis=-1)
        return float(out[0]) if single else out

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Pairs of grid points one unit move apart (count shifted between two coordinates)."""
        src, dst = [], []
        for i in range(self.dim):
            for j in range(self.dim):
                if i == j:
                    continue
                moved = self.counts.copy()
                ok = moved[:, i] > 0
                moved = moved[ok]
                moved[:, i] -= 1
                moved[:, j] += 1
                if self.dim == 1:
                    continue
                target = self._lookup[tuple(np.cumsum(moved, axis=1)[:, :-1].T)]
                src.append(np.flatnonzero(ok))
                dst.append(target)
        if not src:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        return np.concatenate(src), np.concatenate(dst)

    def lipschitz(self, values) -> float:
        """Largest slope of ``values`` along grid edges, per unit of probability mass moved."""
        a, b = self.edges()
        if len(a) == 0:
            return 0.0
        values = np.asarray(values, dtype=float)
        return float(np.max(np.abs(values[a] - values[b])) * self.resolution)


def build_grid(n_theta: int, resolution: int) -> SimplexGrid:
    return SimplexGrid(n_theta, resolution)


def interpolate(grid: SimplexGrid, values, mu):
    return grid.interpolate(values, mu)
