import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Final, Protocol

import numpy as np
from scipy.optimize import bisect

from pycascade.errors import ConfigInvalid, DegenerateDenominator
from pycascade.ifs import FloatArray, IfsSpec

logger = logging.getLogger(__name__)

MEAN_TOLERANCE: Final = 1e-12
ROOT_TOLERANCE: Final = 1e-14
MOMENT_GRID: Final = (1.01, 1.1, 1.5, 2.0)


class WeightModel(Protocol):
    @property
    def size(self) -> int: ...

    @property
    def draws(self) -> int: ...

    def sample(self, uniforms: FloatArray, /) -> FloatArray: ...

    def outcome_table(self) -> tuple[FloatArray, FloatArray]: ...

    def to_mapping(self) -> dict[str, Any]: ...


@dataclass(frozen=True, eq=False)
class DeterministicWeights:
    weights: FloatArray

    def __repr__(self) -> str:
        return f'DeterministicWeights({", ".join(f"{w:.6g}" for w in self.weights)})'

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def draws(self) -> int:
        return 0

    def sample(self, uniforms: FloatArray, /) -> FloatArray:
        return np.tile(self.weights, (uniforms.shape[0], 1))

    def outcome_table(self) -> tuple[FloatArray, FloatArray]:
        return np.ones(1), self.weights.reshape(1, -1)

    def to_mapping(self) -> dict[str, Any]:
        return {'kind': 'deterministic', 'weights': [float(w) for w in self.weights]}


@dataclass(frozen=True, eq=False)
class DiscreteWeights:
    probabilities: FloatArray
    vectors: FloatArray
    _cumulative: FloatArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != self.probabilities.shape[0]:  # noqa: PLR2004
            raise ConfigInvalid('weights.outcomes', 'every outcome needs a probability and a weight vector')
        if (self.probabilities < 0).any() or abs(float(self.probabilities.sum()) - 1) > MEAN_TOLERANCE:
            raise ConfigInvalid('weights.outcomes', 'probabilities must be non-negative and sum to 1')
        if (self.vectors < 0).any():
            raise ConfigInvalid('weights.outcomes', 'weights must be non-negative')
        cumulative = np.cumsum(self.probabilities)
        cumulative[-1] = 1.0
        object.__setattr__(self, '_cumulative', cumulative)

    def __repr__(self) -> str:
        return f'DiscreteWeights(outcomes={self.probabilities.shape[0]}, size={self.size})'

    @property
    def size(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def draws(self) -> int:
        return 1

    def sample(self, uniforms: FloatArray, /) -> FloatArray:
        chosen = np.searchsorted(self._cumulative, uniforms[:, 0], side='right')
        return self.vectors[np.minimum(chosen, self.vectors.shape[0] - 1)]

    def outcome_table(self) -> tuple[FloatArray, FloatArray]:
        return self.probabilities, self.vectors

    def to_mapping(self) -> dict[str, Any]:
        return {
            'kind': 'discrete',
            'outcomes': [
                {'probability': float(p), 'weights': [float(w) for w in vector]}
                for p, vector in zip(self.probabilities, self.vectors, strict=True)
            ],
        }


@dataclass(frozen=True)
class ValidationReport:
    mean_total: float
    a0_probability: float
    a1_witnesses: dict[float, float]
    failures: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_summary(self) -> dict[str, Any]:
        return {
            'mean_total': self.mean_total,
            'a0_probability': self.a0_probability,
            **{f'moment_sum_p{p:g}': value for p, value in self.a1_witnesses.items()},
            'passed': self.passed,
        }


def _entropy_terms(vectors: FloatArray, /) -> FloatArray:
    positive = vectors > 0
    return np.where(positive, vectors * np.log(np.where(positive, vectors, 1.0)), 0.0)


def mean_vector(model: WeightModel, /) -> FloatArray:
    probabilities, vectors = model.outcome_table()
    return probabilities @ vectors


def moment_sum(model: WeightModel, p: float, /) -> float:
    probabilities, vectors = model.outcome_table()
    return float(probabilities @ (vectors**p).sum(axis=1))


def validate_weight_model(model: WeightModel, /) -> ValidationReport:
    probabilities, vectors = model.outcome_table()
    mean_total = float(mean_vector(model).sum())
    a0_probability = float(probabilities[(vectors > 0).sum(axis=1) >= 2].sum())  # noqa: PLR2004
    witnesses = {p: moment_sum(model, p) for p in MOMENT_GRID}
    failures = []
    if abs(mean_total - 1) > MEAN_TOLERANCE:
        failures.append(f'sum of mean weights is {mean_total:.15g}, expected 1')
    if a0_probability <= 0:
        failures.append('at least two positive weights must occur with positive probability')
    if not any(value < 1 for value in witnesses.values()):
        failures.append(f'no p in {MOMENT_GRID} has sum E(W_i^p) < 1')
    return ValidationReport(
        mean_total=mean_total,
        a0_probability=a0_probability,
        a1_witnesses=witnesses,
        failures=tuple(failures),
    )


def expectation_terms(model: WeightModel, ratios: Sequence[float] | FloatArray, /) -> tuple[float, float]:
    probabilities, vectors = model.outcome_table()
    entropy = float(probabilities @ _entropy_terms(vectors).sum(axis=1))
    contraction = float(mean_vector(model) @ np.log(np.asarray(ratios, dtype=np.float64)))
    return entropy, contraction


def similarity_dimension(ratios: Sequence[float] | FloatArray, /) -> float:
    values = np.asarray(ratios, dtype=np.float64)
    if values.shape[0] < 2 or (values <= 0).any() or (values >= 1).any():  # noqa: PLR2004
        raise ValueError(f'Need at least two ratios in (0, 1), got {values.tolist()}')
    upper = np.log(values.shape[0]) / np.log(1 / values.max())
    return float(bisect(lambda s: float((values**s).sum()) - 1, 0.0, upper * (1 + 1e-9) + 1e-9, xtol=ROOT_TOLERANCE))


def bernoulli_weights(ifs: IfsSpec, /) -> DeterministicWeights:
    s = similarity_dimension(ifs.ratios)
    return DeterministicWeights(weights=ifs.ratios**s)


def _formula_denominator(model: WeightModel, ratios: Sequence[float] | FloatArray, /) -> tuple[float, float]:
    entropy, contraction = expectation_terms(model, ratios)
    if abs(contraction) < 1e-300:  # noqa: PLR2004
        raise DegenerateDenominator('sum E(W_i) log r_i vanishes')
    return entropy, contraction


def theoretical_alpha(
    model: WeightModel,
    ratios: Sequence[float] | FloatArray,
    cond_entropy: float,
    /,
    *,
    dimension: int | None = None,
) -> float:
    entropy, contraction = _formula_denominator(model, ratios)
    value = (cond_entropy + entropy) / contraction
    if dimension is not None and not 0 <= value <= dimension:
        logger.warning('Dimension formula gives %.6g, outside [0, %d]', value, dimension)
    return value


def theoretical_beta(
    model: WeightModel,
    ratios: Sequence[float] | FloatArray,
    projected_cond_entropy: float,
    /,
    *,
    dimension: int | None = None,
) -> float:
    return theoretical_alpha(model, ratios, projected_cond_entropy, dimension=dimension)


def theoretical_gamma(
    model: WeightModel,
    ratios: Sequence[float] | FloatArray,
    cond_entropy: float,
    projected_cond_entropy: float,
    /,
) -> float:
    _, contraction = _formula_denominator(model, ratios)
    return (cond_entropy - projected_cond_entropy) / contraction


def weights_from_mapping(data: Mapping[str, Any], ifs: IfsSpec, /, *, path: str = 'weights') -> WeightModel:
    from .percolation import SubsetLaw, percolation_exponent, percolation_weights  # noqa: PLC0415

    kind = data.get('kind')
    allowed = {
        'bernoulli': {'kind'},
        'deterministic': {'kind', 'weights'},
        'discrete': {'kind', 'outcomes'},
        'percolation': {'kind', 'retention', 'subsets', 'alpha'},
    }
    if kind not in allowed:
        raise ConfigInvalid(f'{path}.kind', f'unknown weight model {kind!r}, expected one of {sorted(allowed)}')
    unknown = set(data) - allowed[kind]
    if unknown:
        raise ConfigInvalid(f'{path}.{sorted(unknown)[0]}', 'unknown key')
    model: WeightModel
    if kind == 'bernoulli':
        model = bernoulli_weights(ifs)
    elif kind == 'deterministic':
        model = DeterministicWeights(weights=_vector(data.get('weights'), f'{path}.weights'))
    elif kind == 'discrete':
        outcomes = data.get('outcomes')
        if not isinstance(outcomes, list) or not outcomes:
            raise ConfigInvalid(f'{path}.outcomes', 'expected a non-empty list')
        try:
            probabilities = np.array([float(item['probability']) for item in outcomes])
            vectors = np.stack([_vector(item['weights'], f'{path}.outcomes[{i}]') for i, item in enumerate(outcomes)])
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigInvalid(f'{path}.outcomes', 'every outcome needs a probability and a weight list') from e
        model = DiscreteWeights(probabilities=probabilities, vectors=vectors)
    else:
        law = SubsetLaw.from_mapping(data, len(ifs), path=path)
        model = percolation_weights(law, ifs.ratios, percolation_exponent(law, ifs.ratios))
    if model.size != len(ifs):
        raise ConfigInvalid(path, f'weight vectors have {model.size} entries but the IFS has {len(ifs)} maps')
    return model


def _vector(value: Any, path: str, /) -> FloatArray:  # noqa: ANN401
    try:
        return np.asarray(value, dtype=np.float64).reshape(-1)
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(path, 'expected a list of numbers') from e
