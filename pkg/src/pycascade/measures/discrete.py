import logging
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Final

import numpy as np
import numpy.typing as npt

from pycascade.errors import CapExceeded, Extinct
from pycascade.ifs import FloatArray, IntArray

logger = logging.getLogger(__name__)

CANDIDATE_BUDGET: Final = 2**22
QUERY_BOX_LIMIT: Final = 4096
CELL_SLACK: Final = 1 + 1e-9


@dataclass(frozen=True, eq=False)
class GridIndex:
    points: FloatArray
    cell: float
    origin: FloatArray
    shape: tuple[int, ...]
    order: IntArray
    keys: IntArray

    def __repr__(self) -> str:
        return f'GridIndex(cell={self.cell:.6g}, shape={self.shape}, atoms={self.order.shape[0]})'

    @classmethod
    def build(cls, points: FloatArray, cell: float, /) -> 'GridIndex':
        if cell <= 0:
            raise ValueError(f'Cell size must be positive, got {cell}')
        origin = points.min(axis=0)
        coordinates = np.floor((points - origin) / cell).astype(np.int64)
        shape = tuple(int(extent) + 1 for extent in coordinates.max(axis=0))
        if float(np.prod(np.array(shape, dtype=np.float64))) >= 2**62:
            raise CapExceeded(f'Grid of shape {shape} cannot be linearised')
        keys = np.ravel_multi_index(tuple(coordinates.T), shape)
        order = np.argsort(keys, kind='stable')
        return cls(points=points, cell=cell, origin=origin, shape=shape, order=order, keys=keys[order])

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    def _cells(self, points: FloatArray, /) -> IntArray:
        return np.floor((points - self.origin) / self.cell).astype(np.int64)

    def _ranges(self, cells: IntArray, /) -> tuple[IntArray, IntArray]:
        inside = ((cells >= 0) & (cells < np.array(self.shape))).all(axis=1)
        clipped = np.where(inside[:, None], cells, 0)
        keys = np.ravel_multi_index(tuple(clipped.T), self.shape)
        start = np.searchsorted(self.keys, keys, side='left')
        end = np.searchsorted(self.keys, keys, side='right')
        return np.where(inside, start, 0), np.where(inside, end, 0)

    def query(self, x: FloatArray, r: float, /) -> IntArray:
        center = np.asarray(x, dtype=np.float64).reshape(1, self.dimension)
        span = int(np.ceil(r / self.cell))
        if (2 * span + 1) ** self.dimension > QUERY_BOX_LIMIT:
            candidates = np.arange(self.points.shape[0])
        else:
            home = self._cells(center)[0]
            offsets = np.array(list(product(range(-span, span + 1), repeat=self.dimension)), dtype=np.int64)
            start, end = self._ranges(home + offsets)
            candidates = self.order[np.concatenate([np.arange(s, e) for s, e in zip(start, end, strict=True)])]
        distances = ((self.points[candidates] - center) ** 2).sum(axis=1)
        return np.sort(candidates[distances <= r * r])

    def ball_sums(self, centers: FloatArray, r: float, weights: FloatArray, /) -> FloatArray:
        """Sum ``weights`` over atoms in the closed ball of radius ``r`` around every center.

        Requires ``r <= cell`` so each ball is covered by the 3^d cells around its center.
        """
        if r > self.cell:
            raise ValueError(f'Radius {r} exceeds the cell size {self.cell}')
        offsets = np.array(list(product((-1, 0, 1), repeat=self.dimension)), dtype=np.int64)
        homes = self._cells(centers)
        starts, ends = [], []
        for offset in offsets:
            start, end = self._ranges(homes + offset)
            starts.append(start)
            ends.append(end)
        start_table = np.column_stack(starts)
        count_table = np.column_stack(ends) - start_table
        per_center = count_table.sum(axis=1)
        result = np.zeros(centers.shape[0])
        first = 0
        while first < centers.shape[0]:
            last = first + max(1, int(np.searchsorted(np.cumsum(per_center[first:]), CANDIDATE_BUDGET, side='right')))
            result[first:last] = self._chunk_sums(
                centers[first:last], start_table[first:last], count_table[first:last], r, weights,
            )
            first = last
        return result

    def _chunk_sums(
        self,
        centers: FloatArray,
        starts: IntArray,
        counts: IntArray,
        r: float,
        weights: FloatArray,
        /,
    ) -> FloatArray:
        flat_counts = counts.ravel()
        total = int(flat_counts.sum())
        if not total:
            return np.zeros(centers.shape[0])
        offsets = np.repeat(starts.ravel() - np.cumsum(flat_counts) + flat_counts, flat_counts)
        positions = offsets + np.arange(total)
        owners = np.repeat(np.repeat(np.arange(centers.shape[0]), counts.shape[1]), flat_counts)
        atoms = self.order[positions]
        distances = ((self.points[atoms] - centers[owners]) ** 2).sum(axis=1)
        inside = distances <= r * r
        return np.bincount(owners[inside], weights=weights[atoms[inside]], minlength=centers.shape[0])


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    points: FloatArray
    masses: FloatArray
    words: IntArray | None = None
    radius: float = 0.0
    resolution: float = 0.0
    ifs_ratios: FloatArray | None = None
    _indexes: dict[float, GridIndex] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.points.ndim != 2 or self.masses.shape != (self.points.shape[0],):  # noqa: PLR2004
            raise ValueError(f'Atoms need (N, d) points and N masses, got {self.points.shape}, {self.masses.shape}')
        if (self.masses < 0).any():
            raise ValueError('Masses must be non-negative')
        if self.radius <= 0:
            extent = float(np.sqrt((self.points**2).sum(axis=1)).max()) if len(self) else 0.0
            object.__setattr__(self, 'radius', extent or 1.0)
        if self.resolution <= 0:
            spread = max(len(self), 1) ** (1 / max(self.dimension, 1))
            object.__setattr__(self, 'resolution', 2 * self.radius / spread)

    def __repr__(self) -> str:
        return f'DiscreteMeasure(atoms={len(self)}, dimension={self.dimension}, total={self.total_mass:.6g})'

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @classmethod
    def point_mass(cls, point: FloatArray, /, *, mass: float = 1.0) -> 'DiscreteMeasure':
        return cls(points=np.asarray(point, dtype=np.float64).reshape(1, -1), masses=np.array([mass]))

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def level(self) -> int:
        return 0 if self.words is None else int(self.words.shape[1])

    def diameter_bound(self) -> float:
        if not len(self):
            return 0.0
        return float(np.linalg.norm(self.points.max(axis=0) - self.points.min(axis=0)))

    def index(self, cell: float, /) -> GridIndex:
        grid = self._indexes.get(cell)
        if grid is None:
            grid = GridIndex.build(self.points, cell)
            self._indexes[cell] = grid
            logger.debug('Built %r', grid)
        return grid

    def ball_masses(self, centers: FloatArray, r: float, /) -> FloatArray:
        if r <= 0:
            raise ValueError(f'Radius must be positive, got {r}')
        if not len(self):
            return np.zeros(np.asarray(centers).shape[0])
        return self.index(r * CELL_SLACK).ball_sums(np.asarray(centers, dtype=np.float64), r, self.masses)

    def with_points(self, points: FloatArray, /) -> 'DiscreteMeasure':
        return replace(self, points=points)

    def restricted(self, keep: npt.NDArray[np.bool_], /) -> 'DiscreteMeasure':
        words = None if self.words is None else self.words[keep]
        return replace(self, points=self.points[keep], masses=self.masses[keep], words=words)

    def scaled(self, factor: float, /) -> 'DiscreteMeasure':
        return replace(self, masses=self.masses * factor)

    def normalized(self) -> 'DiscreteMeasure':
        total = self.total_mass
        if total <= 0:
            raise Extinct('Measure has zero total mass')
        return self.scaled(1 / total)

    def sample_atoms(self, count: int, rng: np.random.Generator, /) -> IntArray:
        total = self.total_mass
        if total <= 0:
            raise Extinct('Cannot sample from a measure with zero total mass')
        cumulative = np.cumsum(self.masses)
        chosen = np.searchsorted(cumulative, rng.random(count) * cumulative[-1], side='right')
        return np.minimum(chosen, len(self) - 1)


def ball_mass(measure: DiscreteMeasure, x: FloatArray, r: float, /) -> float:
    return float(measure.ball_masses(np.asarray(x, dtype=np.float64).reshape(1, measure.dimension), r)[0])
