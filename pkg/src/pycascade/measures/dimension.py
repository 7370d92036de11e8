import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any, ClassVar, Final

import numpy as np
from scipy.stats import linregress

from pycascade.errors import EmptyNeighborhood, Extinct, InsufficientRange
from pycascade.ifs import FloatArray
from pycascade.seeds import generator

from .discrete import DiscreteMeasure

logger = logging.getLogger(__name__)

MIN_RADII: Final = 4
MIN_SPAN: Final = 100.0
RESOLUTION_FACTOR: Final = 8.0
EXACTNESS_THRESHOLD: Final = 0.1
HISTOGRAM_BINS: Final = 20
DEFAULT_SAMPLES: Final = 4096
FULL_BALL: Final = 1 - 1e-12


@dataclass(frozen=True)
class DimensionEstimate:
    value: float
    stderr: float
    radii: tuple[float, ...]
    r2: float
    samples: int

    HEADER: ClassVar[tuple[str, ...]] = ('value', 'stderr', 'r2', 'n_samples')

    def __repr__(self) -> str:
        return f'DimensionEstimate({self.value:.6g} ± {self.stderr:.3g}, radii={len(self.radii)})'

    def row(self) -> tuple[float, float, float, int]:
        return self.value, self.stderr, self.r2, self.samples


@dataclass(frozen=True, eq=False)
class EntropyCurve:
    radii: FloatArray
    entropies: FloatArray
    stderrs: FloatArray

    HEADER: ClassVar[tuple[str, ...]] = ('r', 'H_r', 'stderr')

    def __repr__(self) -> str:
        return f'EntropyCurve(radii={self.radii.shape[0]})'

    def rows(self) -> list[tuple[float, float, float]]:
        rows = zip(self.radii, self.entropies, self.stderrs, strict=True)
        return [(float(r), float(h), float(e)) for r, h, e in rows]


@dataclass(frozen=True, eq=False)
class ExactnessReport:
    values: FloatArray
    r2: FloatArray
    radii: tuple[float, ...]
    threshold: float
    dropped: int

    def __repr__(self) -> str:
        return f'ExactnessReport(mean={self.mean:.6g}, spread={self.spread:.3g}, exact={self.exact})'

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def stderr(self) -> float:
        if self.values.shape[0] < 2:  # noqa: PLR2004
            return 0.0
        return float(self.values.std(ddof=1) / np.sqrt(self.values.shape[0]))

    @property
    def spread(self) -> float:
        upper, lower = np.percentile(self.values, [75, 25])
        return float(upper - lower)

    @property
    def exact(self) -> bool:
        return self.spread < self.threshold

    def histogram(self, bins: int = HISTOGRAM_BINS, /) -> tuple[FloatArray, FloatArray]:
        counts, edges = np.histogram(self.values, bins=bins)
        return counts.astype(np.float64), edges

    def estimate(self) -> DimensionEstimate:
        return DimensionEstimate(
            value=self.mean,
            stderr=self.stderr,
            radii=self.radii,
            r2=float(self.r2.mean()),
            samples=int(self.values.shape[0]),
        )

    def to_summary(self) -> dict[str, Any]:
        return {
            'mean': self.mean,
            'stderr': self.stderr,
            'spread': self.spread,
            'exact': self.exact,
            'points': int(self.values.shape[0]),
            'dropped': self.dropped,
        }


def radius_schedule(upper: float, resolution: float, /, *, factor: float = 0.5) -> FloatArray:
    if not 0 < factor < 1:
        raise ValueError(f'Schedule factor must lie in (0, 1), got {factor}')
    lowest = RESOLUTION_FACTOR * resolution
    radii = []
    r = upper
    while r >= lowest:
        radii.append(r)
        r *= factor
    return np.array(radii)


def default_radii(measure: DiscreteMeasure, /) -> FloatArray:
    return radius_schedule(measure.radius / 4, measure.resolution)


def _checked_radii(radii: Sequence[float] | FloatArray, /) -> FloatArray:
    values = np.asarray(radii, dtype=np.float64)
    if values.shape[0] < MIN_RADII:
        raise InsufficientRange(f'Need at least {MIN_RADII} radii, got {values.shape[0]}')
    if (np.diff(values) >= 0).any():
        raise ValueError('Radii must be strictly decreasing')
    return values


def _fit(x: FloatArray, y: FloatArray, radii: FloatArray, samples: int, /) -> DimensionEstimate:
    if x.shape[0] < MIN_RADII:
        raise InsufficientRange(f'Only {x.shape[0]} radii fall in the usable range, need {MIN_RADII}')
    fit = linregress(x, y)
    return DimensionEstimate(
        value=float(fit.slope),
        stderr=float(fit.stderr),
        radii=tuple(float(r) for r in radii),
        r2=float(fit.rvalue**2),
        samples=samples,
    )


def scaling_entropy(
    measure: DiscreteMeasure,
    r: float,
    /,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> tuple[float, float]:
    total = measure.total_mass
    if total <= 0:
        raise Extinct('Scaling entropy of a zero measure')
    if len(measure) <= samples:
        balls = measure.ball_masses(measure.points, r) / total
        return float(-(measure.masses / total) @ np.log(balls)), 0.0
    atoms = measure.sample_atoms(samples, generator(seed, 'entropy-centers'))
    values = -np.log(measure.ball_masses(measure.points[atoms], r) / total)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(samples))


def entropy_curve(
    measure: DiscreteMeasure,
    radii: Sequence[float] | FloatArray,
    /,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> EntropyCurve:
    values = np.asarray(radii, dtype=np.float64)
    estimates = np.array([scaling_entropy(measure, float(r), samples, seed) for r in values]).reshape(-1, 2)
    return EntropyCurve(radii=values, entropies=np.maximum(estimates[:, 0], 0.0), stderrs=estimates[:, 1])


def entropy_dimension(
    measure: DiscreteMeasure,
    radii: Sequence[float] | FloatArray | None = None,
    /,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> DimensionEstimate:
    values = _checked_radii(default_radii(measure) if radii is None else radii)
    if values[0] / values[-1] < MIN_SPAN:
        raise InsufficientRange(f'Radii span {values[0] / values[-1]:.3g}, need at least {MIN_SPAN:g}')
    curve = entropy_curve(measure, values, samples, seed)
    return _fit(np.log(1 / values), curve.entropies, values, min(samples, len(measure)))


def _local_fit(balls: FloatArray, total: float, radii: FloatArray, /) -> DimensionEstimate:
    if balls[0] <= 0:
        raise EmptyNeighborhood(f'Ball of radius {radii[0]:.6g} holds no mass')
    if (balls >= total * FULL_BALL).all():
        return DimensionEstimate(value=0.0, stderr=0.0, radii=tuple(float(r) for r in radii), r2=1.0, samples=1)
    usable = (balls > 0) & (balls < total * FULL_BALL)
    return _fit(np.log(radii[usable]), np.log(balls[usable]), radii[usable], 1)


def local_dimension(
    measure: DiscreteMeasure,
    x: FloatArray,
    radii: Sequence[float] | FloatArray | None = None,
    /,
) -> DimensionEstimate:
    values = _checked_radii(default_radii(measure) if radii is None else radii)
    center = np.asarray(x, dtype=np.float64).reshape(1, measure.dimension)
    balls = np.array([measure.ball_masses(center, float(r))[0] for r in values])
    return _local_fit(balls, measure.total_mass, values)


def exactness_diagnostic(
    measure: DiscreteMeasure,
    count: int,
    radii: Sequence[float] | FloatArray | None = None,
    /,
    seed: int = 0,
    *,
    threshold: float = EXACTNESS_THRESHOLD,
) -> ExactnessReport:
    values = _checked_radii(default_radii(measure) if radii is None else radii)
    atoms = measure.sample_atoms(count, generator(seed, 'exactness'))
    centers = measure.points[atoms]
    balls = np.column_stack([measure.ball_masses(centers, float(r)) for r in values])
    total = measure.total_mass
    fits = []
    for row in balls:
        try:
            fits.append(_local_fit(row, total, values))
        except InsufficientRange:
            continue
    dropped = count - len(fits)
    if not fits:
        raise InsufficientRange(f'No sample point had {MIN_RADII} usable radii')
    if dropped:
        logger.warning('%d of %d sample points had too few usable radii', dropped, count)
    return ExactnessReport(
        values=np.array([fit.value for fit in fits]),
        r2=np.array([fit.r2 for fit in fits]),
        radii=tuple(float(r) for r in values),
        threshold=threshold,
        dropped=dropped,
    )
