import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from math import cos, inf, log, sin, tau
from typing import Any, Final

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .cascade.realization import TailPolicy, surviving_realization
from .cascade.weights import WeightModel
from .errors import DimensionMismatch, EmptySlab, SingularPointDetected, UndeterminedClassification
from .ifs import FloatArray, IfsSpec, check_rotation
from .measures.dimension import (
    DimensionEstimate,
    ExactnessReport,
    default_radii,
    exactness_diagnostic,
    scaling_entropy,
)
from .measures.discrete import DiscreteMeasure
from .parallel import ordered_map
from .rotation import GroupKind, RotationGroupInfo, haar_on_finite, haar_sample
from .seeds import derive_seed, generator

logger = logging.getLogger(__name__)

ORTHONORMAL_TOLERANCE: Final = 1e-12
SINGULAR_THRESHOLD: Final = 1e-6
SINGULARITY_SAMPLES: Final = 256
STABILITY_TOLERANCE: Final = 0.05
SLICE_RADIUS_FACTOR: Final = 4.0
DEFAULT_ANGLES: Final = 64
DEFAULT_POINTS: Final = 512
DEFAULT_SLICES: Final = 16


@dataclass(frozen=True, eq=False)
class ProjectionFrame:
    rows: FloatArray
    label: float = 0.0

    def __post_init__(self) -> None:
        k, d = self.rows.shape
        if not 1 <= k < d:
            raise DimensionMismatch(f'Projection frame needs 1 <= k < d, got k={k}, d={d}')
        deviation = float(np.abs(self.rows @ self.rows.T - np.eye(k)).max())
        if deviation > ORTHONORMAL_TOLERANCE:
            raise DimensionMismatch(f'Frame rows are not orthonormal (deviation {deviation:.3g})')

    def __repr__(self) -> str:
        return f'ProjectionFrame(k={self.k}, d={self.dimension}, label={self.label:.6g})'

    @classmethod
    def from_angle(cls, angle: float, /) -> 'ProjectionFrame':
        return cls(rows=np.array([[cos(angle), sin(angle)]]), label=angle)

    @classmethod
    def coordinate(cls, dimension: int, axes: Sequence[int] = (0,), /) -> 'ProjectionFrame':
        return cls(rows=np.eye(dimension)[list(axes)], label=float(axes[0]))

    @classmethod
    def angle_grid(cls, count: int = DEFAULT_ANGLES, /) -> list['ProjectionFrame']:
        # Lines through the origin repeat after half a turn.
        return [cls.from_angle(index * tau / (2 * count)) for index in range(count)]

    @classmethod
    def haar(cls, dimension: int, k: int, count: int, seed: int, /) -> list['ProjectionFrame']:
        rotations = haar_sample(dimension, count, seed)
        return [cls(rows=g[:k].copy(), label=float(index)) for index, g in enumerate(rotations)]

    @property
    def k(self) -> int:
        return int(self.rows.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.rows.shape[1])

    def __call__(self, points: FloatArray, /) -> FloatArray:
        return points @ self.rows.T

    def to_mapping(self) -> dict[str, Any]:
        return {'rows': [float(v) for v in self.rows.ravel()], 'k': self.k}


@dataclass(frozen=True, eq=False)
class SmoothMap:
    function: Callable[[FloatArray], FloatArray]
    jacobian: Callable[[FloatArray], FloatArray]
    name: str = 'h'

    def __repr__(self) -> str:
        return f'SmoothMap({self.name})'

    @classmethod
    def affine(cls, matrix: FloatArray, offset: FloatArray, /) -> 'SmoothMap':
        return cls(
            function=lambda points: points @ matrix.T + offset,
            jacobian=lambda points: np.broadcast_to(matrix, (points.shape[0], *matrix.shape)),
            name='affine',
        )

    @classmethod
    def distance_from(cls, anchor: FloatArray, /) -> 'SmoothMap':
        def function(points: FloatArray) -> FloatArray:
            return np.linalg.norm(points - anchor, axis=1).reshape(-1, 1)

        def jacobian(points: FloatArray) -> FloatArray:
            offsets = points - anchor
            norms = np.linalg.norm(offsets, axis=1, keepdims=True)
            return (offsets / np.where(norms > 0, norms, 1.0))[:, None, :]

        return cls(function=function, jacobian=jacobian, name='distance')

    def __call__(self, points: FloatArray, /) -> FloatArray:
        return self.function(points)

    def jacobian_error(self, points: FloatArray, /, *, step: float = 1e-6) -> float:
        exact = self.jacobian(points)
        worst = 0.0
        for axis in range(points.shape[1]):
            shift = np.zeros(points.shape[1])
            shift[axis] = step
            numeric = (self.function(points + shift) - self.function(points - shift)) / (2 * step)
            scale = np.maximum(np.abs(exact[:, :, axis]), 1.0)
            worst = max(worst, float((np.abs(numeric - exact[:, :, axis]) / scale).max()))
        return worst


def project_measure(measure: DiscreteMeasure, frame: ProjectionFrame, /) -> DiscreteMeasure:
    if measure.dimension != frame.dimension:
        raise DimensionMismatch(f'Measure lives in dimension {measure.dimension}, frame in {frame.dimension}')
    return measure.with_points(frame(measure.points))


def rotate_measure(measure: DiscreteMeasure, rotation: FloatArray, /) -> DiscreteMeasure:
    matrix = np.asarray(rotation, dtype=np.float64)
    check_rotation(matrix, tolerance=1e-9)
    if matrix.shape[0] != measure.dimension:
        raise DimensionMismatch(f'Rotation of size {matrix.shape[0]} for a measure in dimension {measure.dimension}')
    return measure.with_points(measure.points @ matrix.T)


@dataclass(frozen=True, eq=False)
class ProfileEntry:
    frame: ProjectionFrame
    report: ExactnessReport

    def __repr__(self) -> str:
        return f'ProfileEntry(label={self.frame.label:.6g}, value={self.report.mean:.6g})'

    @property
    def estimate(self) -> DimensionEstimate:
        return self.report.estimate()


def projected_dimension_profile(
    measure: DiscreteMeasure,
    frames: Sequence[ProjectionFrame],
    /,
    *,
    points: int = DEFAULT_POINTS,
    radii: Sequence[float] | FloatArray | None = None,
    seed: int = 0,
    threads: int | None = None,
) -> list[ProfileEntry]:
    target = measure.normalized()

    def profile(indexed: tuple[int, ProjectionFrame]) -> ProfileEntry:
        index, frame = indexed
        image = project_measure(target, frame)
        report = exactness_diagnostic(image, points, radii, derive_seed(seed, 'profile', index))
        logger.debug('Frame %d (label %.6g): %r', index, frame.label, report)
        return ProfileEntry(frame=frame, report=report)

    return ordered_map(profile, list(enumerate(frames)), threads=threads)


@dataclass(frozen=True)
class MarstrandReport:
    target: float
    tolerance: float
    rows: tuple[tuple[float, float, bool], ...]

    def __repr__(self) -> str:
        return f'MarstrandReport(target={self.target:.6g}, passed={self.passed_fraction:.3g})'

    @property
    def passed_fraction(self) -> float:
        return sum(passed for _, _, passed in self.rows) / len(self.rows)

    @property
    def all_passed(self) -> bool:
        return all(passed for _, _, passed in self.rows)

    def failures(self) -> list[float]:
        return [label for label, _, passed in self.rows if not passed]


def marstrand_check(
    profile: Sequence[ProfileEntry],
    alpha: float,
    k: int,
    /,
    tolerance: float = inf,
) -> MarstrandReport:
    if not profile:
        raise ValueError('Marstrand check needs a non-empty profile')
    target = min(float(k), alpha)
    rows = tuple(
        (entry.frame.label, entry.report.mean, abs(entry.report.mean - target) <= tolerance) for entry in profile
    )
    return MarstrandReport(target=target, tolerance=tolerance, rows=rows)


def slab_mask(
    measure: DiscreteMeasure,
    frame: ProjectionFrame,
    y: FloatArray,
    width: float,
    /,
) -> npt.NDArray[np.bool_]:
    offsets = frame(measure.points) - np.asarray(y, dtype=np.float64).reshape(1, frame.k)
    return np.asarray((offsets**2).sum(axis=1) <= width * width)


def slice_measure(measure: DiscreteMeasure, frame: ProjectionFrame, y: FloatArray, width: float, /) -> DiscreteMeasure:
    if measure.dimension != frame.dimension:
        raise DimensionMismatch(f'Measure lives in dimension {measure.dimension}, frame in {frame.dimension}')
    inside = slab_mask(measure, frame, y, width)
    if not float(measure.masses[inside].sum()) > 0:
        raise EmptySlab(f'Slab of width {width:.6g} around {np.ravel(y).tolist()} holds no mass')
    return measure.restricted(inside).normalized()


@dataclass(frozen=True, eq=False)
class ConservationReport:
    alpha: ExactnessReport
    beta: ExactnessReport
    widths: FloatArray
    slice_means: FloatArray
    slice_stderrs: FloatArray

    def __repr__(self) -> str:
        return f'ConservationReport(beta={self.beta.mean:.6g}, gamma={self.gamma:.6g}, alpha={self.alpha.mean:.6g})'

    @property
    def gamma(self) -> float:
        return float(self.slice_means[-1])

    @property
    def gamma_stderr(self) -> float:
        return float(self.slice_stderrs[-1])

    @property
    def residual(self) -> float:
        return self.beta.mean + self.gamma - self.alpha.mean

    @property
    def combined_stderr(self) -> float:
        return float(np.sqrt(self.alpha.stderr**2 + self.beta.stderr**2 + self.gamma_stderr**2))

    @property
    def stable(self) -> bool:
        if self.slice_means.shape[0] < 2:  # noqa: PLR2004
            return True
        return abs(float(self.slice_means[-1] - self.slice_means[-2])) < STABILITY_TOLERANCE

    def to_summary(self) -> dict[str, Any]:
        return {
            'alpha': self.alpha.mean,
            'beta': self.beta.mean,
            'gamma': self.gamma,
            'residual': self.residual,
            'combined_stderr': self.combined_stderr,
            'stable': self.stable,
        }


def _slice_dimension(
    measure: DiscreteMeasure,
    frame: ProjectionFrame,
    center: FloatArray,
    width: float,
    radii: FloatArray,
    points: int,
    seed: int,
    /,
) -> float:
    fibre = slice_measure(measure, frame, center, width)
    usable = radii[radii >= SLICE_RADIUS_FACTOR * width]
    return exactness_diagnostic(fibre, points, usable, seed).mean


def dimension_conservation_check(
    measure: DiscreteMeasure,
    frame: ProjectionFrame,
    /,
    slices: int = DEFAULT_SLICES,
    widths: Sequence[float] | FloatArray | None = None,
    seed: int = 0,
    *,
    points: int = DEFAULT_POINTS,
    radii: Sequence[float] | FloatArray | None = None,
    threads: int | None = None,
) -> ConservationReport:
    target = measure.normalized()
    schedule = default_radii(target) if radii is None else np.asarray(radii, dtype=np.float64)
    width_schedule = (
        target.resolution * np.array([0.25, 0.125]) if widths is None else np.asarray(widths, dtype=np.float64)
    )
    alpha = exactness_diagnostic(target, points, schedule, derive_seed(seed, 'conservation-source'))
    image = project_measure(target, frame)
    beta = exactness_diagnostic(image, points, schedule, derive_seed(seed, 'conservation-image'))
    centers = frame(target.points[target.sample_atoms(slices, generator(seed, 'slice-centers'))])
    tasks = [
        (index, float(width), derive_seed(seed, 'slice', position * slices + index))
        for position, width in enumerate(width_schedule)
        for index in range(slices)
    ]

    def fibre_dimension(task: tuple[int, float, int]) -> float:
        index, width, task_seed = task
        return _slice_dimension(target, frame, centers[index], width, schedule, points, task_seed)

    values = np.array(ordered_map(fibre_dimension, tasks, threads=threads)).reshape(-1, slices)
    means = values.mean(axis=1)
    stderrs = values.std(axis=1, ddof=1) / np.sqrt(slices) if slices > 1 else np.zeros(values.shape[0])
    report = ConservationReport(
        alpha=alpha,
        beta=beta,
        widths=width_schedule,
        slice_means=means,
        slice_stderrs=stderrs,
    )
    if not report.stable:
        logger.warning('Slice dimension is unstable across the last two widths: %s', means[-2:].tolist())
    return report


@dataclass(frozen=True)
class EntropyValue:
    value: float
    clamped: bool


def e_q_entropy(
    measure: DiscreteMeasure,
    frame: ProjectionFrame,
    q: int,
    ifs: IfsSpec,
    /,
    samples: int = 4096,
    seed: int = 0,
) -> EntropyValue:
    image = project_measure(measure.normalized(), frame)
    entropy, _ = scaling_entropy(image, ifs.rho**q, samples, seed)
    value = entropy / (q * log(1 / ifs.rho))
    if 0 <= value <= frame.k:
        return EntropyValue(value=value, clamped=False)
    logger.warning('e_q=%.6g outside [0, %d], clamping', value, frame.k)
    return EntropyValue(value=min(max(value, 0.0), float(frame.k)), clamped=True)


def _rotations(info: RotationGroupInfo, count: int, seed: int, /, *, assume_dense: bool) -> FloatArray:
    if info.kind is GroupKind.FINITE:
        return haar_on_finite(info, count, seed)
    if info.kind is GroupKind.DENSE or assume_dense:
        return haar_sample(info.dimension, count, seed)
    raise UndeterminedClassification('Rotation group is undetermined; assert density explicitly to sample full Haar')


def E_q_estimate(
    model: WeightModel,
    ifs: IfsSpec,
    frame: ProjectionFrame,
    q: int,
    replicas: int,
    seed: int,
    /,
    *,
    info: RotationGroupInfo,
    level: int,
    samples: int = 4096,
    assume_dense: bool = False,
    tail: TailPolicy = TailPolicy(),  # noqa: B008
    threads: int | None = None,
) -> tuple[float, float]:
    rotations = _rotations(info, replicas, derive_seed(seed, 'eq-rotations'), assume_dense=assume_dense)

    def replica(index: int) -> float:
        replica_seed = derive_seed(seed, 'eq-replica', index)
        survivor = surviving_realization(model, ifs, level, replica_seed, tail=tail, labels=False)
        rotated = rotate_measure(survivor.measure, rotations[index])
        return e_q_entropy(rotated, frame, q, ifs, samples, derive_seed(seed, 'eq-entropy', index)).value

    values = np.array(ordered_map(replica, range(replicas), threads=threads))
    stderr = float(values.std(ddof=1) / np.sqrt(replicas)) if replicas > 1 else 0.0
    return float(values.mean()), stderr


def c1_image_measure(
    measure: DiscreteMeasure,
    h: SmoothMap,
    /,
    samples: int = SINGULARITY_SAMPLES,
    seed: int = 0,
    *,
    threshold: float = SINGULAR_THRESHOLD,
) -> DiscreteMeasure:
    if len(measure) <= samples:
        checked = measure.points
    else:
        checked = measure.points[measure.sample_atoms(samples, generator(seed, 'singularity'))]
    smallest = np.array([float(scipy.linalg.svdvals(jacobian).min()) for jacobian in h.jacobian(checked)])
    worst = int(smallest.argmin())
    if smallest[worst] <= threshold:
        raise SingularPointDetected(tuple(float(v) for v in checked[worst]), float(smallest[worst]))
    logger.debug('Smallest singular value of %r over %d points: %.3g', h, checked.shape[0], smallest[worst])
    return measure.with_points(np.asarray(h(measure.points), dtype=np.float64).reshape(len(measure), -1))
