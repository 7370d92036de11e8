import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Final

import numpy as np

from pycascade.errors import CapExceeded, Extinct, RejectionCapExceeded
from pycascade.ifs import (
    DEFAULT_ATOM_CAP,
    FloatArray,
    IfsSpec,
    IntArray,
    Word,
    index_points,
    index_words,
    word_index,
)
from pycascade.measures.discrete import DiscreteMeasure
from pycascade.parallel import ordered_map
from pycascade.seeds import derive_key, derive_seed, generator, indexed_uniforms

from .weights import WeightModel

logger = logging.getLogger(__name__)

DEFAULT_TAIL_DEPTH: Final = 8
DEFAULT_MAX_REJECTIONS: Final = 1000
INDEX_LIMIT: Final = 2**62


@dataclass(frozen=True)
class TailPolicy:
    depth: int = 0

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise ValueError(f'Tail depth must be non-negative, got {self.depth}')

    def __repr__(self) -> str:
        return 'TailPolicy.expectation()' if not self.depth else f'TailPolicy.simulated({self.depth})'

    @classmethod
    def expectation(cls) -> 'TailPolicy':
        return cls()

    @classmethod
    def simulated(cls, depth: int = DEFAULT_TAIL_DEPTH, /) -> 'TailPolicy':
        if depth < 1:
            raise ValueError(f'Simulated tails need a positive depth, got {depth}')
        return cls(depth=depth)

    def to_mapping(self) -> dict[str, Any]:
        if not self.depth:
            return {'policy': 'expectation'}
        return {'policy': 'simulated', 'depth': self.depth}


@dataclass(frozen=True, eq=False)
class CascadeRealization:
    model: WeightModel
    seed: int
    cap: int = DEFAULT_ATOM_CAP
    _supports: dict[int, tuple[IntArray, FloatArray]] = field(default_factory=dict, init=False, repr=False)

    def __repr__(self) -> str:
        return f'CascadeRealization({self.model!r}, seed={self.seed})'

    @property
    def size(self) -> int:
        return self.model.size

    def level_weights(self, level: int, indices: IntArray, /) -> FloatArray:
        draws = self.model.draws
        if not draws:
            return self.model.sample(np.empty((indices.shape[0], 0)))
        key = derive_key(self.seed, 'weights', level)
        return self.model.sample(indexed_uniforms(key, indices, draws))

    def draw(self, word: Word, /) -> FloatArray:
        index = np.array([word_index(word, self.size)], dtype=np.int64)
        return self.level_weights(len(word), index)[0]

    def q(self, word: Word, /) -> float:
        value = 1.0
        for length, symbol in enumerate(word):
            value *= float(self.draw(word[:length])[symbol - 1])
            if not value:
                break
        return value

    def support(self, level: int, /) -> tuple[IntArray, FloatArray]:
        """Lexicographic indices and masses Q of the level-``level`` words with Q > 0."""
        if level < 0:
            raise ValueError(f'Level must be non-negative, got {level}')
        if float(self.size) ** level >= INDEX_LIMIT:
            raise CapExceeded(f'{self.size}^{level} words cannot be indexed')
        known = max((k for k in self._supports if k <= level), default=None)
        if known is None:
            indices, masses = np.zeros(1, dtype=np.int64), np.ones(1)
            known = 0
        else:
            indices, masses = self._supports[known]
        for current in range(known, level):
            if indices.shape[0] * self.size > self.cap:
                atoms = indices.shape[0] * self.size
                raise CapExceeded(f'Level {current + 1} would hold {atoms} atoms, cap {self.cap}')
            children = (masses[:, None] * self.level_weights(current, indices)).ravel()
            child_indices = (indices[:, None] * self.size + np.arange(self.size)).ravel()
            alive = children > 0
            indices, masses = child_indices[alive], children[alive]
        self._supports[level] = (indices, masses)
        return indices, masses

    def martingale_path(self, level: int, /) -> FloatArray:
        return np.array([float(self.support(k)[1].sum()) for k in range(level + 1)])


def draw_weights(realization: CascadeRealization, word: Word, /) -> FloatArray:
    return realization.draw(word)


def q_value(realization: CascadeRealization, word: Word, /) -> float:
    return realization.q(word)


def martingale_mass(realization: CascadeRealization, n: int, /) -> float:
    return float(realization.support(n)[1].sum())


@dataclass(frozen=True, eq=False)
class MartingaleStatistics:
    samples: FloatArray

    def __repr__(self) -> str:
        return f'MartingaleStatistics(seeds={self.samples.shape[0]}, levels={self.levels.shape[0]})'

    @property
    def levels(self) -> IntArray:
        return np.arange(self.samples.shape[1])

    @property
    def means(self) -> FloatArray:
        return np.asarray(self.samples.mean(axis=0), dtype=np.float64)

    @property
    def stderrs(self) -> FloatArray:
        if self.samples.shape[0] < 2:  # noqa: PLR2004
            return np.zeros(self.samples.shape[1])
        return np.asarray(self.samples.std(axis=0, ddof=1) / np.sqrt(self.samples.shape[0]), dtype=np.float64)

    @property
    def survival(self) -> FloatArray:
        return np.asarray((self.samples > 0).mean(axis=0), dtype=np.float64)


def martingale_statistics(
    model: WeightModel,
    level: int,
    seeds: Sequence[int],
    /,
    *,
    threads: int | None = None,
) -> MartingaleStatistics:
    paths = ordered_map(lambda seed: CascadeRealization(model, seed).martingale_path(level), seeds, threads=threads)
    return MartingaleStatistics(samples=np.stack(paths))


def cascade_measure(
    realization: CascadeRealization,
    ifs: IfsSpec,
    n: int,
    /,
    tail: TailPolicy = TailPolicy(),  # noqa: B008
    *,
    x0: FloatArray | None = None,
    labels: bool = True,
) -> DiscreteMeasure:
    if realization.size != len(ifs):
        raise ValueError(f'Weight vectors have {realization.size} entries but the IFS has {len(ifs)} maps')
    indices, masses = realization.support(n)
    if tail.depth:
        deep_indices, deep_masses = realization.support(n + tail.depth)
        parents = np.searchsorted(indices, deep_indices // realization.size**tail.depth)
        masses = np.bincount(parents, weights=deep_masses, minlength=indices.shape[0])
        alive = masses > 0
        indices, masses = indices[alive], masses[alive]
    if not indices.shape[0]:
        raise Extinct(f'Cascade with seed {realization.seed} has no mass at level {n}')
    return DiscreteMeasure(
        points=index_points(ifs, indices, n, x0),
        masses=masses,
        words=index_words(indices, n, len(ifs)) if labels else None,
        radius=ifs.radius_bound,
        resolution=ifs.radius_bound * ifs.rho**n,
        ifs_ratios=ifs.ratios,
    )


def normalized(measure: DiscreteMeasure, /) -> DiscreteMeasure:
    return measure.normalized()


@dataclass(frozen=True, eq=False)
class SurvivingCascade:
    realization: CascadeRealization
    measure: DiscreteMeasure
    rejections: int

    def __repr__(self) -> str:
        return f'SurvivingCascade(seed={self.realization.seed}, rejections={self.rejections})'


def surviving_realization(
    model: WeightModel,
    ifs: IfsSpec,
    level: int,
    seed: int,
    /,
    *,
    tail: TailPolicy = TailPolicy(),  # noqa: B008
    max_rejections: int = DEFAULT_MAX_REJECTIONS,
    cap: int = DEFAULT_ATOM_CAP,
    labels: bool = True,
) -> SurvivingCascade:
    for attempt in range(max_rejections + 1):
        realization = CascadeRealization(model, derive_seed(seed, 'replica', attempt), cap)
        try:
            measure = cascade_measure(realization, ifs, level, tail, labels=labels)
        except Extinct:
            logger.info('Replica %d of seed %d went extinct, resampling', attempt, seed)
            continue
        return SurvivingCascade(realization=realization, measure=measure, rejections=attempt)
    raise RejectionCapExceeded(f'No surviving cascade for seed {seed} after {max_rejections} rejections')


@dataclass(frozen=True, eq=False)
class SpineSample:
    symbols: IntArray
    log_weights: FloatArray
    log_ratios: FloatArray

    def __repr__(self) -> str:
        return f'SpineSample(paths={self.symbols.shape[0]}, depth={self.depth})'

    @property
    def depth(self) -> int:
        return int(self.symbols.shape[1])

    def log_masses(self, n: int, /) -> FloatArray:
        return np.asarray(self.log_weights[:, :n].sum(axis=1), dtype=np.float64)

    def log_contractions(self, n: int, /) -> FloatArray:
        return np.asarray(self.log_ratios[:, :n].sum(axis=1), dtype=np.float64)


def sample_spine(
    model: WeightModel,
    ratios: Sequence[float] | FloatArray,
    depth: int,
    count: int,
    seed: int,
    /,
) -> SpineSample:
    # Along the marked path the weight vector is size-biased by its total and the
    # next symbol is picked proportionally to its weight.
    probabilities, vectors = model.outcome_table()
    totals = vectors.sum(axis=1)
    biased = probabilities * totals
    biased = biased / biased.sum()
    shares = np.cumsum(vectors / np.where(totals > 0, totals, 1.0)[:, None], axis=1)
    shares[:, -1] = 1.0
    rng = generator(seed, 'spine')
    outcomes = rng.choice(vectors.shape[0], size=(count, depth), p=biased)
    children = (rng.random((count, depth))[..., None] >= shares[outcomes]).sum(axis=-1)
    children = np.minimum(children, vectors.shape[1] - 1)
    weights = vectors[outcomes, children]
    return SpineSample(
        symbols=children + 1,
        log_weights=np.log(weights),
        log_ratios=np.log(np.asarray(ratios, dtype=np.float64))[children],
    )
