import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Final

import numpy as np
import numpy.typing as npt
from scipy.optimize import bisect

from pycascade.errors import CapExceeded, ConfigInvalid, NoRoot, Subcritical
from pycascade.ifs import FloatArray, IfsSpec, IntArray, Word, index_word
from pycascade.seeds import derive_key, indexed_uniforms

from .weights import ROOT_TOLERANCE, DiscreteWeights

logger = logging.getLogger(__name__)

OUTCOME_CAP: Final = 2**16
FIXED_POINT_TOLERANCE: Final = 1e-15
FIXED_POINT_ITERATIONS: Final = 10**6
INDEX_LIMIT: Final = 2**62

BoolArray = npt.NDArray[np.bool_]


@dataclass(frozen=True, eq=False)
class SubsetLaw:
    size: int
    retention: FloatArray | None = None
    subsets: tuple[tuple[frozenset[int], float], ...] = ()

    def __post_init__(self) -> None:
        if (self.retention is None) == (not self.subsets):
            raise ConfigInvalid('weights', 'give either per-symbol retention or an explicit subset list')

    @classmethod
    def independent(cls, retention: float | Sequence[float], size: int, /) -> 'SubsetLaw':
        values = np.broadcast_to(np.asarray(retention, dtype=np.float64), (size,)).copy()
        if ((values < 0) | (values > 1)).any():
            raise ConfigInvalid('weights.retention', f'probabilities must lie in [0, 1], got {values.tolist()}')
        return cls(size=size, retention=values)

    @classmethod
    def explicit(cls, outcomes: Sequence[tuple[Sequence[int], float]], size: int, /) -> 'SubsetLaw':
        if not outcomes:
            raise ConfigInvalid('weights.subsets', 'expected a non-empty list')
        if len(outcomes) > OUTCOME_CAP:
            raise ConfigInvalid('weights.subsets', f'{len(outcomes)} outcomes exceed the cap of {OUTCOME_CAP}')
        subsets = []
        for index, (symbols, probability) in enumerate(outcomes):
            members = frozenset(int(symbol) for symbol in symbols)
            if not all(1 <= symbol <= size for symbol in members):
                raise ConfigInvalid(f'weights.subsets[{index}].symbols', f'symbols must lie in [1, {size}]')
            if probability < 0:
                raise ConfigInvalid(f'weights.subsets[{index}].probability', 'must be non-negative')
            subsets.append((members, float(probability)))
        total = sum(probability for _, probability in subsets)
        if abs(total - 1) > 1e-12:  # noqa: PLR2004
            raise ConfigInvalid('weights.subsets', f'probabilities sum to {total:.15g}, expected 1')
        return cls(size=size, subsets=tuple(subsets))

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], size: int, /, *, path: str = 'weights') -> 'SubsetLaw':
        if ('retention' in data) == ('subsets' in data):
            raise ConfigInvalid(path, 'percolation needs exactly one of retention or subsets')
        try:
            if 'retention' in data:
                return cls.independent(data['retention'], size)
            items = data['subsets']
            if not isinstance(items, list):
                raise ConfigInvalid(f'{path}.subsets', 'expected a list of {symbols, probability} mappings')
            return cls.explicit([(item['symbols'], float(item['probability'])) for item in items], size)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigInvalid(path, f'malformed percolation law ({e})') from e

    def __repr__(self) -> str:
        if self.retention is not None:
            return f'SubsetLaw(retention={self.retention.tolist()})'
        return f'SubsetLaw(subsets={len(self.subsets)})'

    @property
    def draws(self) -> int:
        return self.size if self.retention is not None else 1

    def inclusion(self) -> FloatArray:
        if self.retention is not None:
            return self.retention
        probabilities = np.zeros(self.size)
        for members, probability in self.subsets:
            for symbol in members:
                probabilities[symbol - 1] += probability
        return probabilities

    def expected_card(self) -> float:
        return float(self.inclusion().sum())

    def outcomes(self) -> tuple[FloatArray, BoolArray]:
        if self.retention is None:
            masks = np.zeros((len(self.subsets), self.size), dtype=bool)
            for row, (members, _) in enumerate(self.subsets):
                masks[row, [symbol - 1 for symbol in members]] = True
            return np.array([probability for _, probability in self.subsets]), masks
        if 2**self.size > OUTCOME_CAP:
            raise CapExceeded(f'Expanding {self.size} independent symbols exceeds {OUTCOME_CAP} outcomes')
        masks = np.array(list(product([False, True], repeat=self.size)), dtype=bool).reshape(-1, self.size)
        probabilities = np.where(masks, self.retention, 1 - self.retention).prod(axis=1)
        return probabilities, masks

    def sample_masks(self, uniforms: FloatArray, /) -> BoolArray:
        if self.retention is not None:
            return uniforms < self.retention
        probabilities, masks = self.outcomes()
        cumulative = np.cumsum(probabilities)
        chosen = np.searchsorted(cumulative, uniforms[:, 0] * cumulative[-1], side='right')
        return masks[np.minimum(chosen, masks.shape[0] - 1)]

    def generating_function(self, x: float, /) -> float:
        if self.retention is not None:
            return float(np.prod(1 - self.retention + self.retention * x))
        return sum(probability * x ** len(members) for members, probability in self.subsets)

    def to_mapping(self) -> dict[str, Any]:
        if self.retention is not None:
            return {'kind': 'percolation', 'retention': [float(p) for p in self.retention]}
        return {
            'kind': 'percolation',
            'subsets': [
                {'symbols': sorted(members), 'probability': probability} for members, probability in self.subsets
            ],
        }


@dataclass(frozen=True, eq=False)
class PercolationWeights:
    law: SubsetLaw
    ratios: FloatArray
    alpha: float
    _scales: FloatArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, '_scales', self.ratios**self.alpha)

    def __repr__(self) -> str:
        return f'PercolationWeights({self.law!r}, alpha={self.alpha:.9g})'

    @property
    def size(self) -> int:
        return self.law.size

    @property
    def draws(self) -> int:
        return self.law.draws

    def sample(self, uniforms: FloatArray, /) -> FloatArray:
        return self.law.sample_masks(uniforms) * self._scales

    def outcome_table(self) -> tuple[FloatArray, FloatArray]:
        probabilities, masks = self.law.outcomes()
        return probabilities, masks * self._scales

    def to_discrete(self) -> DiscreteWeights:
        probabilities, vectors = self.outcome_table()
        return DiscreteWeights(probabilities=probabilities / probabilities.sum(), vectors=vectors)

    def to_mapping(self) -> dict[str, Any]:
        return {**self.law.to_mapping(), 'alpha': self.alpha}


def percolation_exponent(law: SubsetLaw, ratios: Sequence[float] | FloatArray, /) -> float:
    values = np.asarray(ratios, dtype=np.float64)
    inclusion = law.inclusion()
    expected = float(inclusion.sum())
    if expected <= 1:
        raise Subcritical(f'Expected number of retained children is {expected:.12g}, percolation needs > 1')

    def excess(alpha: float) -> float:
        return float(inclusion @ values**alpha) - 1

    if excess(0.0) <= 0:
        raise NoRoot('Exponent equation has no positive root')
    upper = np.log(expected) / np.log(1 / values.max())
    alpha = float(bisect(excess, 0.0, upper * (1 + 1e-9) + 1e-12, xtol=ROOT_TOLERANCE))
    logger.debug('Percolation exponent %.12g for expected offspring %.6g', alpha, expected)
    return alpha


def percolation_weights(law: SubsetLaw, ratios: Sequence[float] | FloatArray, alpha: float, /) -> PercolationWeights:
    return PercolationWeights(law=law, ratios=np.asarray(ratios, dtype=np.float64), alpha=alpha)


def extinction_probability(law: SubsetLaw, /) -> float:
    x = 0.0
    for _ in range(FIXED_POINT_ITERATIONS):
        following = law.generating_function(x)
        if abs(following - x) < FIXED_POINT_TOLERANCE:
            return following
        x = following
    logger.warning('Extinction probability did not converge, last iterate %.15g', x)
    return x


@dataclass(frozen=True, eq=False)
class PercolationSample:
    size: int
    survivors: tuple[IntArray, ...]

    def __repr__(self) -> str:
        return f'PercolationSample(levels={self.depth}, survivors={len(self.survivors[-1])})'

    @property
    def depth(self) -> int:
        return len(self.survivors) - 1

    @property
    def extinct(self) -> bool:
        return not self.survivors[-1].shape[0]

    def words(self, level: int, /) -> list[Word]:
        return [index_word(int(index), level, self.size) for index in self.survivors[level]]

    def to_text(self) -> str:
        lines = []
        for level in range(self.depth + 1):
            words = ' '.join('.'.join(str(symbol) for symbol in word) or '-' for word in self.words(level))
            lines.append(f'{level}: {words}')
        return '\n'.join(lines) + '\n'


def surviving_children(
    law: SubsetLaw,
    seed: int,
    level: int,
    parents: IntArray,
    /,
) -> IntArray:
    key = derive_key(seed, 'weights', level)
    masks = law.sample_masks(indexed_uniforms(key, parents, law.draws))
    children = parents[:, None] * law.size + np.arange(law.size)
    return children[masks]


def sample_percolation_set(law: SubsetLaw, ifs: IfsSpec, n: int, seed: int, /) -> PercolationSample:
    if n < 1:
        raise ValueError(f'Level must be positive, got {n}')
    if law.size != len(ifs):
        raise ConfigInvalid('weights', f'subset law has {law.size} symbols but the IFS has {len(ifs)} maps')
    if float(law.size) ** n >= INDEX_LIMIT:
        raise CapExceeded(f'{law.size}^{n} words cannot be indexed')
    levels = [np.zeros(1, dtype=np.int64)]
    for level in range(n):
        levels.append(surviving_children(law, seed, level, levels[-1]).astype(np.int64))
    return PercolationSample(size=law.size, survivors=tuple(levels))
