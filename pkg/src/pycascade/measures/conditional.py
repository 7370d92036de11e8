import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from math import log
from typing import Any, Final

import numpy as np

from pycascade.cascade.realization import (
    CascadeRealization,
    TailPolicy,
    sample_spine,
    surviving_realization,
)
from pycascade.cascade.weights import WeightModel, expectation_terms
from pycascade.errors import EmptyBall
from pycascade.ifs import FloatArray, IfsSpec, Word
from pycascade.parallel import ordered_map
from pycascade.seeds import derive_seed, generator

from .discrete import CELL_SLACK, DiscreteMeasure

logger = logging.getLogger(__name__)

INFORMATION_CAP: Final = log(1e6)
SATURATION_LIMIT: Final = 0.01
DEFAULT_DEPTH_MARGIN: Final = 2


@dataclass(frozen=True, eq=False)
class PathMap:
    """Linear map applied to atom positions before balls are taken; ``None`` is the identity."""

    matrix: FloatArray | None = None

    def __repr__(self) -> str:
        if self.matrix is None:
            return 'PathMap(identity)'
        return f'PathMap({self.matrix.shape[1]} -> {self.matrix.shape[0]})'

    @classmethod
    def identity(cls) -> 'PathMap':
        return cls()

    @classmethod
    def projection(cls, rows: FloatArray, rotation: FloatArray | None = None, /) -> 'PathMap':
        matrix = np.asarray(rows, dtype=np.float64)
        return cls(matrix if rotation is None else matrix @ rotation)

    def __call__(self, points: FloatArray, /) -> FloatArray:
        if self.matrix is None:
            return points
        return points @ self.matrix.T


@dataclass(frozen=True, eq=False)
class PathSample:
    realization: CascadeRealization
    measure: DiscreteMeasure
    atom: int

    def __repr__(self) -> str:
        return f'PathSample(atom={self.atom}, word={self.word})'

    @property
    def word(self) -> Word:
        if self.measure.words is None:
            return ()
        return tuple(int(symbol) for symbol in self.measure.words[self.atom])


@dataclass(frozen=True, eq=False)
class PeyriereEstimate:
    values: FloatArray
    weights: FloatArray
    rejections: int

    def __repr__(self) -> str:
        return f'PeyriereEstimate({self.value:.6g} ± {self.stderr:.3g})'

    @property
    def value(self) -> float:
        return float((self.weights * self.values).mean())

    @property
    def stderr(self) -> float:
        if self.values.shape[0] < 2:  # noqa: PLR2004
            return 0.0
        return float((self.weights * self.values).std(ddof=1) / np.sqrt(self.values.shape[0]))


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    stderr: float
    saturated: float
    reliable: bool

    def to_summary(self) -> dict[str, Any]:
        return {'value': self.value, 'stderr': self.stderr, 'saturated': self.saturated, 'reliable': self.reliable}


def conditional_information(
    measure: DiscreteMeasure,
    atom: int,
    n: int,
    /,
    path_map: PathMap = PathMap(),  # noqa: B008
    *,
    image: DiscreteMeasure | None = None,
) -> tuple[float, bool]:
    """Return -log of the first-symbol share of the ball around ``atom`` and whether the value was capped.

    ``image`` may carry the already mapped measure so repeated queries reuse its index.
    """
    words, ratios = measure.words, measure.ifs_ratios
    if words is None or ratios is None:
        raise ValueError('Conditional information needs a measure carrying word labels and contraction ratios')
    if n > measure.level:
        raise ValueError(f'Depth {n} exceeds the measure level {measure.level}')
    first = words[:, 0] == words[atom, 0]
    if n == 0:
        numerator = float(measure.masses[first].sum())
        denominator = measure.total_mass
    else:
        mapped = measure.with_points(path_map(measure.points)) if image is None else image
        r = measure.radius * float(np.prod(ratios[words[atom, :n] - 1]))
        grid = mapped.index(r * CELL_SLACK)
        center = mapped.points[atom : atom + 1]
        denominator = float(grid.ball_sums(center, r, mapped.masses)[0])
        numerator = float(grid.ball_sums(center, r, np.where(first, mapped.masses, 0.0))[0])
    if denominator <= 0:
        raise EmptyBall(f'Ball around atom {atom} at depth {n} holds no mass')
    if numerator <= 0:
        return INFORMATION_CAP, True
    return max(0.0, -log(numerator / denominator)), False


def peyriere_expectation(
    model: WeightModel,
    ifs: IfsSpec,
    functional: Callable[[PathSample], float],
    n: int,
    samples: int,
    seed: int,
    /,
    *,
    tail: TailPolicy = TailPolicy(),  # noqa: B008
    threads: int | None = None,
) -> PeyriereEstimate:
    def replica(index: int) -> tuple[float, float, int]:
        survivor = surviving_realization(model, ifs, n, derive_seed(seed, 'peyriere', index), tail=tail)
        atom = int(survivor.measure.sample_atoms(1, generator(seed, 'peyriere-path', index))[0])
        sample = PathSample(realization=survivor.realization, measure=survivor.measure, atom=atom)
        return functional(sample), survivor.measure.total_mass, survivor.rejections

    results = np.array(ordered_map(replica, range(samples), threads=threads), dtype=np.float64).reshape(-1, 3)
    masses = results[:, 1]
    return PeyriereEstimate(values=results[:, 0], weights=masses / masses.mean(), rejections=int(results[:, 2].sum()))


def conditional_entropy(
    model: WeightModel,
    ifs: IfsSpec,
    path_map: PathMap,
    n: int,
    samples: int,
    seed: int,
    /,
    *,
    depth_margin: int = DEFAULT_DEPTH_MARGIN,
    tail: TailPolicy = TailPolicy(),  # noqa: B008
    threads: int | None = None,
) -> EntropyEstimate:
    def information(sample: PathSample) -> float:
        return conditional_information(sample.measure, sample.atom, n, path_map)[0]

    level = n + depth_margin
    estimate = peyriere_expectation(model, ifs, information, level, samples, seed, tail=tail, threads=threads)
    capped = estimate.values >= INFORMATION_CAP
    fraction = float(capped.mean())
    if not capped.any():
        return EntropyEstimate(value=estimate.value, stderr=estimate.stderr, saturated=0.0, reliable=True)
    if fraction < SATURATION_LIMIT:
        kept = PeyriereEstimate(values=estimate.values[~capped], weights=estimate.weights[~capped], rejections=0)
        return EntropyEstimate(value=kept.value, stderr=kept.stderr, saturated=fraction, reliable=True)
    logger.warning('%.1f%% of conditional information samples hit the cap, estimate unreliable', 100 * fraction)
    return EntropyEstimate(value=estimate.value, stderr=estimate.stderr, saturated=fraction, reliable=False)


@dataclass(frozen=True, eq=False)
class LlnReport:
    depths: FloatArray
    mass_slope: float
    mass_stderr: float
    ratio_slope: float
    ratio_stderr: float
    expected_mass: float
    expected_ratio: float

    def __repr__(self) -> str:
        return f'LlnReport(mass={self.mass_slope:.6g}, ratio={self.ratio_slope:.6g}, agrees={self.agrees})'

    @staticmethod
    def _close(value: float, expected: float, stderr: float, /) -> bool:
        return abs(value - expected) <= max(3 * stderr, 1e-9)

    @property
    def agrees(self) -> bool:
        return self._close(self.mass_slope, self.expected_mass, self.mass_stderr) and self._close(
            self.ratio_slope, self.expected_ratio, self.ratio_stderr,
        )

    def to_summary(self) -> dict[str, Any]:
        return {
            'mass_slope': self.mass_slope,
            'mass_stderr': self.mass_stderr,
            'expected_mass': self.expected_mass,
            'ratio_slope': self.ratio_slope,
            'ratio_stderr': self.ratio_stderr,
            'expected_ratio': self.expected_ratio,
            'agrees': self.agrees,
        }


def _path_slopes(depths: FloatArray, curves: FloatArray, /) -> tuple[float, float]:
    centered = depths - depths.mean()
    slopes = (curves - curves.mean(axis=1, keepdims=True)) @ centered / (centered @ centered)
    return float(slopes.mean()), float(slopes.std(ddof=1) / np.sqrt(slopes.shape[0]))


def lln_diagnostics(
    model: WeightModel,
    ratios: Sequence[float] | FloatArray,
    depths: Sequence[int],
    count: int,
    seed: int,
    /,
) -> LlnReport:
    levels = np.asarray(depths, dtype=np.int64)
    spine = sample_spine(model, ratios, int(levels.max()), count, seed)
    masses = np.column_stack([spine.log_masses(int(n)) for n in levels])
    contractions = np.column_stack([spine.log_contractions(int(n)) for n in levels])
    mass_slope, mass_stderr = _path_slopes(levels.astype(np.float64), masses)
    ratio_slope, ratio_stderr = _path_slopes(levels.astype(np.float64), contractions)
    expected_mass, expected_ratio = expectation_terms(model, ratios)
    return LlnReport(
        depths=levels.astype(np.float64),
        mass_slope=mass_slope,
        mass_stderr=mass_stderr,
        ratio_slope=ratio_slope,
        ratio_stderr=ratio_stderr,
        expected_mass=expected_mass,
        expected_ratio=expected_ratio,
    )
