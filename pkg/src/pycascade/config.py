import copy
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Final

import numpy as np
import yaml

from .cascade.realization import TailPolicy
from .cascade.weights import WeightModel, weights_from_mapping
from .errors import ConfigInvalid, DimensionMismatch, MultipleGrids
from .ifs import IfsSpec, Word
from .projection import ProjectionFrame

KINDS: Final = ('validate', 'simulate', 'dims', 'project', 'conserve', 'percolate', 'distances', 'eq-scan', 'sweep')
KEYS: Final = frozenset(
    {
        'kind',
        'experiment',
        'seed',
        'output',
        'ifs',
        'weights',
        'level',
        'points',
        'replicas',
        'seeds',
        'tail',
        'radii',
        'widths',
        'angles',
        'frames',
        'k',
        'q',
        'slices',
        'anchor',
        'exclusion',
        'alpha',
        'tolerance',
        'assume_dense',
        'sweep',
    },
)
DEFAULT_SEED: Final = 0
DEFAULT_LEVEL: Final = 10
DEFAULT_TOLERANCE: Final = 0.12


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    kind: str
    ifs: IfsSpec
    weights: WeightModel
    seed: int = DEFAULT_SEED
    level: int = DEFAULT_LEVEL
    points: int = 512
    replicas: int = 32
    seeds: int = 1000
    tail: TailPolicy = field(default_factory=TailPolicy)
    radii: tuple[float, ...] | None = None
    widths: tuple[float, ...] | None = None
    angles: int = 64
    frames: tuple[ProjectionFrame, ...] = ()
    k: int = 1
    q: tuple[int, ...] = (2, 4, 6)
    slices: int = 16
    anchor: tuple[float, ...] | None = None
    exclusion: Word | float | None = None
    alpha: float | None = None
    tolerance: float = DEFAULT_TOLERANCE
    assume_dense: bool = False
    experiment: str | None = None
    sweep: tuple[str, tuple[Any, ...]] | None = None
    output: Path | None = None
    source: Mapping[str, Any] = field(default_factory=dict, repr=False)

    def __repr__(self) -> str:
        return f'ExperimentConfig(kind={self.kind}, level={self.level}, seed={self.seed})'

    def projection_frames(self) -> list[ProjectionFrame]:
        if self.frames:
            return list(self.frames)
        if self.k >= self.ifs.dimension:
            raise ConfigInvalid('k', f'projections need k < d = {self.ifs.dimension}, got {self.k}')
        if self.ifs.dimension == 2:  # noqa: PLR2004
            return ProjectionFrame.angle_grid(self.angles)
        return ProjectionFrame.haar(self.ifs.dimension, self.k, self.angles, self.seed)

    def to_mapping(self) -> dict[str, Any]:
        mapping: dict[str, Any] = {
            'kind': self.kind,
            'seed': self.seed,
            'ifs': self.ifs.to_mapping(),
            'weights': self.weights.to_mapping(),
            'level': self.level,
            'points': self.points,
            'replicas': self.replicas,
            'seeds': self.seeds,
            'tail': self.tail.to_mapping(),
            'radii': None if self.radii is None else list(self.radii),
            'widths': None if self.widths is None else list(self.widths),
            'angles': self.angles,
            'frames': [frame.to_mapping()['rows'] for frame in self.frames],
            'k': self.k,
            'q': list(self.q),
            'slices': self.slices,
            'anchor': None if self.anchor is None else list(self.anchor),
            'exclusion': list(self.exclusion) if isinstance(self.exclusion, tuple) else self.exclusion,
            'alpha': self.alpha,
            'tolerance': self.tolerance,
            'assume_dense': self.assume_dense,
        }
        if self.experiment is not None:
            mapping['experiment'] = self.experiment
        if self.sweep is not None:
            mapping['sweep'] = {self.sweep[0]: list(self.sweep[1])}
        return mapping


def load_mapping(path: Path, /) -> dict[str, Any]:
    try:
        with path.open(encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigInvalid(str(path), f'cannot read config ({e.strerror})') from e
    except yaml.YAMLError as e:
        raise ConfigInvalid(str(path), f'invalid YAML ({e})') from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigInvalid(str(path), 'top level must be a mapping')
    return data


def _integer(data: Mapping[str, Any], key: str, default: int, /, *, minimum: int = 0) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigInvalid(key, f'expected an integer, got {value!r}')
    if value < minimum:
        raise ConfigInvalid(key, f'must be at least {minimum}, got {value}')
    return value


def _number(data: Mapping[str, Any], key: str, default: float | None, /) -> float | None:
    value = data.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise ConfigInvalid(key, f'expected a number, got {value!r}')
    return float(value)


def _floats(data: Mapping[str, Any], key: str, /) -> tuple[float, ...] | None:
    value = data.get(key)
    if value is None:
        return None
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(key, 'expected a list of numbers') from e


def _tail(data: Any, /) -> TailPolicy:  # noqa: ANN401
    if data is None:
        return TailPolicy()
    if not isinstance(data, Mapping) or set(data) - {'policy', 'depth'}:
        raise ConfigInvalid('tail', 'expected a mapping with policy and depth')
    policy = data.get('policy', 'expectation')
    if policy == 'expectation':
        return TailPolicy.expectation()
    if policy == 'simulated':
        try:
            return TailPolicy.simulated(int(data.get('depth', 8)))
        except (TypeError, ValueError) as e:
            raise ConfigInvalid('tail.depth', str(e)) from e
    raise ConfigInvalid('tail.policy', f'unknown tail policy {policy!r}')


def _frames(data: Mapping[str, Any], dimension: int, k: int, /) -> tuple[ProjectionFrame, ...]:
    frames = []
    for index, rows in enumerate(data.get('frames') or []):
        try:
            matrix = np.asarray(rows, dtype=np.float64).reshape(k, dimension)
            frames.append(ProjectionFrame(rows=matrix, label=float(index)))
        except (TypeError, ValueError) as e:
            raise ConfigInvalid(f'frames[{index}]', f'expected {k * dimension} row-major entries') from e
        except DimensionMismatch as e:
            raise ConfigInvalid(f'frames[{index}]', str(e)) from e
    return tuple(frames)


def _exclusion(value: Any, /) -> Word | float | None:  # noqa: ANN401
    if value is None:
        return None
    if isinstance(value, list):
        if not value or not all(isinstance(symbol, int) and not isinstance(symbol, bool) for symbol in value):
            raise ConfigInvalid('exclusion', 'expected a non-empty word of integer symbols')
        return tuple(value)
    if isinstance(value, int | float) and not isinstance(value, bool) and value >= 0:
        return float(value)
    raise ConfigInvalid('exclusion', 'expected a word (list of symbols) or a non-negative radius')


def _sweep(value: Any, /) -> tuple[str, tuple[Any, ...]] | None:  # noqa: ANN401
    if value is None:
        return None
    if not isinstance(value, Mapping) or not value:
        raise ConfigInvalid('sweep', 'expected a mapping from one parameter to its grid')
    if len(value) > 1:
        raise MultipleGrids(f'Only one parameter may carry a grid, got {sorted(value)}')
    ((name, grid),) = value.items()
    if not isinstance(grid, list) or not grid:
        raise ConfigInvalid(f'sweep.{name}', 'expected a non-empty list of values')
    return str(name), tuple(grid)


def parse_config(data: Mapping[str, Any], /, *, kind: str | None = None, seed: int | None = None) -> ExperimentConfig:
    unknown = set(data) - KEYS
    if unknown:
        raise ConfigInvalid(sorted(unknown)[0], 'unknown key')
    resolved_kind = kind if kind is not None else data.get('kind')
    if resolved_kind not in KINDS:
        raise ConfigInvalid('kind', f'unknown experiment kind {resolved_kind!r}, expected one of {list(KINDS)}')
    if kind is not None and data.get('kind', kind) != kind:
        raise ConfigInvalid('kind', f'config names {data["kind"]!r} but {kind!r} was requested')
    experiment = data.get('experiment')
    if resolved_kind == 'sweep' and experiment not in set(KINDS) - {'sweep'}:
        raise ConfigInvalid('experiment', f'a sweep needs an experiment kind, got {experiment!r}')
    ifs_data = data.get('ifs')
    if not isinstance(ifs_data, Mapping):
        raise ConfigInvalid('ifs', 'expected a mapping')
    ifs = IfsSpec.from_mapping(ifs_data)
    weights_data = data.get('weights', {'kind': 'bernoulli'})
    if not isinstance(weights_data, Mapping):
        raise ConfigInvalid('weights', 'expected a mapping')
    k = _integer(data, 'k', 1, minimum=1)
    q = data.get('q', [2, 4, 6])
    if not isinstance(q, list) or not all(isinstance(v, int) and v >= 1 for v in q):
        raise ConfigInvalid('q', 'expected a list of positive integers')
    anchor = _floats(data, 'anchor')
    if anchor is not None and len(anchor) != ifs.dimension:
        raise ConfigInvalid('anchor', f'expected {ifs.dimension} coordinates, got {len(anchor)}')
    tolerance = _number(data, 'tolerance', DEFAULT_TOLERANCE)
    if tolerance is None or tolerance <= 0:
        raise ConfigInvalid('tolerance', f'must be positive, got {tolerance}')
    output = data.get('output')
    return ExperimentConfig(
        kind=resolved_kind,
        ifs=ifs,
        weights=weights_from_mapping(weights_data, ifs),
        seed=_integer(data, 'seed', DEFAULT_SEED) if seed is None else seed,
        level=_integer(data, 'level', DEFAULT_LEVEL, minimum=1),
        points=_integer(data, 'points', 512, minimum=1),
        replicas=_integer(data, 'replicas', 32, minimum=1),
        seeds=_integer(data, 'seeds', 1000, minimum=1),
        tail=_tail(data.get('tail')),
        radii=_floats(data, 'radii'),
        widths=_floats(data, 'widths'),
        angles=_integer(data, 'angles', 64, minimum=1),
        frames=_frames(data, ifs.dimension, k),
        k=k,
        q=tuple(q),
        slices=_integer(data, 'slices', 16, minimum=1),
        anchor=anchor,
        exclusion=_exclusion(data.get('exclusion')),
        alpha=_number(data, 'alpha', None),
        tolerance=tolerance,
        assume_dense=bool(data.get('assume_dense', False)),
        experiment=experiment,
        sweep=_sweep(data.get('sweep')),
        output=None if output is None else Path(output),
        source=copy.deepcopy(dict(data)),
    )


def with_value(data: Mapping[str, Any], path: str, value: Any, /) -> dict[str, Any]:  # noqa: ANN401
    """Copy of ``data`` with the dotted ``path`` set to ``value``."""
    result = copy.deepcopy(dict(data))
    node = result
    *parents, leaf = path.split('.')
    for name in parents:
        child = node.get(name)
        if not isinstance(child, dict):
            raise ConfigInvalid(f'sweep.{path}', f'{name!r} is not a mapping in the config')
        node = child
    node[leaf] = value
    return result


