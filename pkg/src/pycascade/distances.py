import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any, Final

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import linregress

from .errors import AnchorOffSupport, ExclusionEmpty, InsufficientRange
from .ifs import FloatArray, Word
from .measures.dimension import MIN_RADII, DimensionEstimate
from .measures.discrete import DiscreteMeasure
from .projection import ProjectionFrame, slab_mask
from .seeds import generator

logger = logging.getLogger(__name__)

ALL_PAIRS_LIMIT: Final = 2000
BOX_SHIFT: Final = 1e-9


def nearest_atom(measure: DiscreteMeasure, anchor: FloatArray, /) -> int:
    center = np.asarray(anchor, dtype=np.float64).reshape(1, measure.dimension)
    distances = np.where(measure.masses > 0, np.linalg.norm(measure.points - center, axis=1), np.inf)
    return int(distances.argmin())


def separating_cylinder(measure: DiscreteMeasure, index: int, /) -> Word:
    """Heaviest surviving cylinder at the coarsest level where the word of atom ``index`` branches off."""
    if measure.words is None:
        raise ValueError('Choosing a cylinder needs a measure carrying word labels')
    word = measure.words[index]
    alive = measure.masses > 0
    for depth in range(word.shape[0]):
        siblings = alive & (measure.words[:, :depth] == word[:depth]).all(axis=1)
        siblings &= measure.words[:, depth] != word[depth]
        if siblings.any():
            totals = np.bincount(measure.words[siblings, depth], weights=measure.masses[siblings])
            return (*(int(symbol) for symbol in word[:depth]), int(totals.argmax()))
    raise ExclusionEmpty(f'All mass sits in the cylinder of {tuple(int(s) for s in word)}')


def pinned_distance_measure(
    measure: DiscreteMeasure,
    anchor: FloatArray,
    exclusion: Word | float,
    /,
) -> DiscreteMeasure:
    """Push the measure, restricted away from ``anchor``, forward under x -> |x - anchor|.

    ``exclusion`` is either a word whose cylinder is kept or a radius around the anchor that is dropped.
    ``anchor`` must lie on the support, up to the diameter of the cylinders the atoms stand for.
    """
    center = np.asarray(anchor, dtype=np.float64).reshape(1, measure.dimension)
    distances = np.linalg.norm(measure.points - center, axis=1)
    support = distances[measure.masses > 0]
    if support.size and float(support.min()) > 2 * measure.resolution:
        raise AnchorOffSupport(
            f'Anchor {center.ravel().tolist()} is {float(support.min()):.3g} away from the support '
            f'(atom spacing {2 * measure.resolution:.3g})',
        )
    if isinstance(exclusion, tuple):
        if measure.words is None:
            raise ValueError('Word exclusion needs a measure carrying word labels')
        prefix = np.array(exclusion, dtype=np.int32)
        keep = (measure.words[:, : prefix.shape[0]] == prefix).all(axis=1)
    else:
        keep = distances > exclusion
    if not float(measure.masses[keep].sum()) > 0:
        raise ExclusionEmpty(f'No mass is left after excluding {exclusion!r} around {center.ravel().tolist()}')
    return DiscreteMeasure(
        points=distances[keep].reshape(-1, 1),
        masses=measure.masses[keep],
        radius=float(distances[keep].max()) or 1.0,
        resolution=measure.resolution,
    ).normalized()


def distance_set_cloud(points: FloatArray, pairs: int, seed: int, /) -> FloatArray:
    cloud = np.asarray(points, dtype=np.float64)
    if cloud.shape[0] < 2:  # noqa: PLR2004
        raise ValueError(f'Distance sets need at least 2 points, got {cloud.shape[0]}')
    if cloud.shape[0] <= ALL_PAIRS_LIMIT:
        return np.asarray(pdist(cloud), dtype=np.float64)
    rng = generator(seed, 'distance-pairs')
    first = rng.integers(cloud.shape[0], size=pairs)
    second = (first + rng.integers(1, cloud.shape[0], size=pairs)) % cloud.shape[0]
    return np.asarray(np.linalg.norm(cloud[first] - cloud[second], axis=1), dtype=np.float64)


def box_counts(points: FloatArray, scales: Sequence[float] | FloatArray, /) -> FloatArray:
    cloud = np.asarray(points, dtype=np.float64).reshape(len(points), -1)
    origin = cloud.min(axis=0)
    counts = []
    for scale in scales:
        boxes = np.floor((cloud - origin) / scale + BOX_SHIFT).astype(np.int64)
        counts.append(np.unique(boxes, axis=0).shape[0])
    return np.array(counts, dtype=np.float64)


def box_dimension(points: FloatArray, scales: Sequence[float] | FloatArray, /) -> DimensionEstimate:
    values = np.asarray(scales, dtype=np.float64)
    if values.shape[0] < MIN_RADII:
        raise InsufficientRange(f'Need at least {MIN_RADII} box scales, got {values.shape[0]}')
    counts = box_counts(points, values)
    fit = linregress(np.log(1 / values), np.log(counts))
    return DimensionEstimate(
        value=float(fit.slope),
        stderr=float(fit.stderr),
        radii=tuple(float(s) for s in values),
        r2=float(fit.rvalue**2),
        samples=len(points),
    )


@dataclass(frozen=True)
class SetConservation:
    projected: DimensionEstimate
    fibre: float
    fibre_stderr: float
    whole: DimensionEstimate

    def __repr__(self) -> str:
        return f'SetConservation(residual={self.residual:.6g})'

    @property
    def residual(self) -> float:
        return self.projected.value + self.fibre - self.whole.value

    def to_summary(self) -> dict[str, Any]:
        return {
            'projected': self.projected.value,
            'fibre': self.fibre,
            'fibre_stderr': self.fibre_stderr,
            'whole': self.whole.value,
            'residual': self.residual,
        }


def set_conservation(
    points: FloatArray,
    frame: ProjectionFrame,
    scales: Sequence[float] | FloatArray,
    /,
    fibres: int = 16,
    seed: int = 0,
    *,
    width: float | None = None,
) -> SetConservation:
    cloud = np.asarray(points, dtype=np.float64)
    values = np.asarray(scales, dtype=np.float64)
    slab = float(values.min()) / 4 if width is None else width
    carrier = DiscreteMeasure(points=cloud, masses=np.ones(cloud.shape[0]))
    centers = frame(cloud[generator(seed, 'fibres').integers(cloud.shape[0], size=fibres)])
    dimensions = np.array(
        [box_dimension(cloud[slab_mask(carrier, frame, center, slab)], values).value for center in centers],
    )
    stderr = float(dimensions.std(ddof=1) / np.sqrt(fibres)) if fibres > 1 else 0.0
    return SetConservation(
        projected=box_dimension(frame(cloud), values),
        fibre=float(dimensions.mean()),
        fibre_stderr=stderr,
        whole=box_dimension(cloud, values),
    )
