from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from math import cos, sin, tau
from typing import Any, Final

import numpy as np
import numpy.typing as npt

from .errors import CapExceeded, ConfigInvalid, InvalidWord, NotARotation

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
Word = tuple[int, ...]

DEFAULT_ATOM_CAP: Final = 2**26
ORTHONORMAL_TOLERANCE: Final = 1e-12
DETERMINANT_TOLERANCE: Final = 1e-9


def rotation_2d(angle: float, /) -> FloatArray:
    c, s = cos(angle), sin(angle)
    return np.array([[c, -s], [s, c]])


def check_rotation(matrix: FloatArray, /, *, tolerance: float = ORTHONORMAL_TOLERANCE) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:  # noqa: PLR2004
        raise NotARotation(f'Rotation must be a square matrix, got shape {matrix.shape}')
    deviation = float(np.abs(matrix.T @ matrix - np.eye(matrix.shape[0])).max())
    if deviation > tolerance:
        raise NotARotation(f'Rotation columns are not orthonormal (deviation {deviation:.3g})')
    determinant = float(np.linalg.det(matrix))
    if abs(determinant - 1) > DETERMINANT_TOLERANCE:
        raise NotARotation(f'Rotation determinant is {determinant:.12g}, expected +1')


@dataclass(frozen=True, eq=False)
class Similarity:
    ratio: float
    rotation: FloatArray
    translation: FloatArray
    angle: float | None = None

    def __post_init__(self) -> None:
        if not 0 < self.ratio <= 1:
            raise ConfigInvalid('ratio', f'{self.ratio} is not in (0, 1]')
        check_rotation(self.rotation)
        if self.translation.shape != (self.dimension,):
            raise ConfigInvalid('translation', f'expected {self.dimension} coordinates, got {self.translation.shape}')

    @classmethod
    def identity(cls, dimension: int, /) -> 'Similarity':
        return cls(
            ratio=1.0,
            rotation=np.eye(dimension),
            translation=np.zeros(dimension),
            angle=0.0 if dimension == 2 else None,  # noqa: PLR2004
        )

    @classmethod
    def planar(cls, ratio: float, angle: float, translation: Sequence[float], /) -> 'Similarity':
        return cls(ratio=ratio, rotation=rotation_2d(angle), translation=np.asarray(translation, float), angle=angle)

    def __repr__(self) -> str:
        return f'Similarity(ratio={self.ratio:.6g}, dimension={self.dimension})'

    @property
    def dimension(self) -> int:
        return int(self.rotation.shape[0])

    def __call__(self, points: FloatArray, /) -> FloatArray:
        return self.ratio * (points @ self.rotation.T) + self.translation

    def compose(self, other: 'Similarity', /) -> 'Similarity':
        """Return self ∘ other."""
        if self.angle is not None and other.angle is not None:
            angle = (self.angle + other.angle) % tau
            rotation = rotation_2d(angle)
        else:
            angle = None
            rotation = self.rotation @ other.rotation
        return Similarity(
            ratio=self.ratio * other.ratio,
            rotation=rotation,
            translation=self.ratio * (self.rotation @ other.translation) + self.translation,
            angle=angle,
        )


@dataclass(frozen=True, eq=False)
class IfsSpec:
    maps: tuple[Similarity, ...]

    def __post_init__(self) -> None:
        if len(self.maps) < 2:  # noqa: PLR2004
            raise ConfigInvalid('ifs.maps', f'at least 2 maps are required, got {len(self.maps)}')
        dimension = self.maps[0].dimension
        for index, similarity in enumerate(self.maps):
            if similarity.dimension != dimension:
                raise ConfigInvalid(f'ifs.maps[{index}].rotation', f'dimension {similarity.dimension} != {dimension}')
            if similarity.ratio >= 1:
                raise ConfigInvalid(f'ifs.maps[{index}].ratio', 'maps must be strict contractions')

    def __repr__(self) -> str:
        return f'IfsSpec(m={len(self)}, d={self.dimension}, rho={self.rho:.6g})'

    def __len__(self) -> int:
        return len(self.maps)

    @property
    def dimension(self) -> int:
        return self.maps[0].dimension

    @property
    def ratios(self) -> FloatArray:
        return np.array([similarity.ratio for similarity in self.maps])

    @property
    def rotations(self) -> list[FloatArray]:
        return [similarity.rotation for similarity in self.maps]

    @property
    def rho(self) -> float:
        return max(similarity.ratio for similarity in self.maps)

    @property
    def c(self) -> float:
        return min(similarity.ratio for similarity in self.maps)

    @property
    def radius_bound(self) -> float:
        largest = max(float(np.linalg.norm(similarity.translation)) for similarity in self.maps)
        return largest / (1 - self.rho)

    def fixed_point(self, symbol: int = 1, /) -> FloatArray:
        similarity = self.maps[symbol - 1]
        system = np.eye(self.dimension) - similarity.ratio * similarity.rotation
        return np.asarray(np.linalg.solve(system, similarity.translation), dtype=np.float64)

    def check_word(self, word: Word, /) -> None:
        for position, symbol in enumerate(word):
            if not 1 <= symbol <= len(self):
                raise InvalidWord(f'Symbol {symbol} at position {position} is outside [1, {len(self)}]')

    @classmethod
    def cantor(cls) -> 'IfsSpec':
        return cls.line([1 / 3, 1 / 3], [0.0, 2 / 3])

    @classmethod
    def line(cls, ratios: Sequence[float], translations: Sequence[float], /) -> 'IfsSpec':
        return cls(
            maps=tuple(
                Similarity(ratio=ratio, rotation=np.eye(1), translation=np.array([translation]))
                for ratio, translation in zip(ratios, translations, strict=True)
            ),
        )

    @classmethod
    def cantor_product(cls) -> 'IfsSpec':
        corners = [(0.0, 0.0), (2 / 3, 0.0), (0.0, 2 / 3), (2 / 3, 2 / 3)]
        return cls(maps=tuple(Similarity.planar(1 / 3, 0.0, corner) for corner in corners))

    @classmethod
    def square_grid(cls, side: int = 2, /) -> 'IfsSpec':
        return cls(
            maps=tuple(
                Similarity.planar(1 / side, 0.0, (column / side, row / side))
                for row in range(side)
                for column in range(side)
            ),
        )

    @classmethod
    def rotating_corners(cls, ratio: float = 0.4, angle: float = 1.0, /) -> 'IfsSpec':
        # Images of the disc of radius sqrt(2)/(1-ratio) are disjoint when ratio < 1/(1+sqrt(2)).
        corners = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
        angles = [angle, 0.0, 0.0, 0.0]
        return cls(maps=tuple(Similarity.planar(ratio, a, corner) for a, corner in zip(angles, corners, strict=True)))

    @classmethod
    def exact_overlap(cls) -> 'IfsSpec':
        return cls.line([0.5, 0.5], [0.5, 0.5])

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], /, *, path: str = 'ifs') -> 'IfsSpec':
        unknown = set(data) - {'preset', 'maps', 'ratio', 'angle', 'side'}
        if unknown:
            raise ConfigInvalid(f'{path}.{sorted(unknown)[0]}', 'unknown key')
        if 'preset' in data:
            return _preset(data, path=path)
        maps = data.get('maps')
        if not isinstance(maps, list) or not maps:
            raise ConfigInvalid(f'{path}.maps', 'expected a non-empty list of maps')
        return cls(maps=tuple(_similarity_from_mapping(item, path=f'{path}.maps[{i}]') for i, item in enumerate(maps)))

    def to_mapping(self) -> dict[str, Any]:
        return {
            'maps': [
                {
                    'ratio': similarity.ratio,
                    'rotation': similarity.angle
                    if similarity.angle is not None
                    else [float(v) for v in similarity.rotation.ravel()],
                    'translation': [float(v) for v in similarity.translation],
                }
                for similarity in self.maps
            ],
        }


def _preset(data: Mapping[str, Any], /, *, path: str) -> IfsSpec:
    name = data['preset']
    if name == 'cantor':
        return IfsSpec.cantor()
    if name == 'cantor_product':
        return IfsSpec.cantor_product()
    if name == 'exact_overlap':
        return IfsSpec.exact_overlap()
    if name == 'square_grid':
        side = data.get('side', 2)
        if isinstance(side, bool) or not isinstance(side, int) or side < 2:  # noqa: PLR2004
            raise ConfigInvalid(f'{path}.side', f'expected an integer of at least 2, got {side!r}')
        return IfsSpec.square_grid(side)
    if name == 'rotating_corners':
        ratio = _preset_number(data, 'ratio', 0.4, path)
        return IfsSpec.rotating_corners(ratio, _preset_number(data, 'angle', 1.0, path))
    raise ConfigInvalid(f'{path}.preset', f'unknown preset {name!r}')


def _preset_number(data: Mapping[str, Any], key: str, default: float, path: str, /) -> float:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise ConfigInvalid(f'{path}.{key}', f'expected a number, got {value!r}')
    return float(value)


def _similarity_from_mapping(data: Any, /, *, path: str) -> Similarity:  # noqa: ANN401
    if not isinstance(data, Mapping):
        raise ConfigInvalid(path, 'expected a mapping with ratio, rotation and translation')
    unknown = set(data) - {'ratio', 'rotation', 'translation'}
    if unknown:
        raise ConfigInvalid(f'{path}.{sorted(unknown)[0]}', 'unknown key')
    try:
        translation = np.asarray(data['translation'], dtype=np.float64).reshape(-1)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigInvalid(f'{path}.translation', 'expected a list of numbers') from e
    dimension = translation.shape[0]
    try:
        ratio = float(data['ratio'])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigInvalid(f'{path}.ratio', 'expected a number') from e
    rotation = data.get('rotation', 0.0 if dimension == 2 else None)  # noqa: PLR2004
    angle: float | None = None
    try:
        if rotation is None:
            matrix = np.eye(dimension)
        elif isinstance(rotation, int | float) and dimension == 2:  # noqa: PLR2004
            angle = float(rotation)
            matrix = rotation_2d(angle)
        else:
            matrix = np.asarray(rotation, dtype=np.float64).reshape(dimension, dimension)
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(f'{path}.rotation', f'expected {dimension * dimension} row-major entries') from e
    try:
        return Similarity(ratio=ratio, rotation=matrix, translation=translation, angle=angle)
    except ConfigInvalid as e:
        raise ConfigInvalid(f'{path}.{e.field}', e.reason) from e
    except NotARotation as e:
        raise ConfigInvalid(f'{path}.rotation', str(e)) from e


def word_index(word: Word, size: int, /) -> int:
    index = 0
    for symbol in word:
        index = index * size + symbol - 1
    return index


def index_word(index: int, length: int, size: int, /) -> Word:
    symbols = []
    for _ in range(length):
        index, symbol = divmod(index, size)
        symbols.append(symbol + 1)
    return tuple(reversed(symbols))


def compose(ifs: IfsSpec, word: Word, /) -> Similarity:
    ifs.check_word(word)
    result = Similarity.identity(ifs.dimension)
    for symbol in word:
        result = result.compose(ifs.maps[symbol - 1])
    return result


def cylinder_point(ifs: IfsSpec, word: Word, x0: FloatArray | None = None, /) -> FloatArray:
    start = ifs.fixed_point() if x0 is None else np.asarray(x0, dtype=np.float64)
    return compose(ifs, word)(start)


def ratio_bounds(ifs: IfsSpec, /) -> tuple[float, float]:
    return ifs.c, ifs.rho


@dataclass(frozen=True, eq=False)
class Cloud:
    words: npt.NDArray[np.int32]
    points: FloatArray
    ratios: FloatArray

    def __repr__(self) -> str:
        return f'Cloud(level={self.level}, atoms={len(self)})'

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def level(self) -> int:
        return int(self.words.shape[1])

    def word(self, index: int, /) -> Word:
        return tuple(int(symbol) for symbol in self.words[index])


def attractor_cloud(
    ifs: IfsSpec,
    level: int,
    x0: FloatArray | None = None,
    /,
    *,
    cap: int = DEFAULT_ATOM_CAP,
) -> Cloud:
    size = len(ifs)
    if level < 0:
        raise ValueError(f'Level must be non-negative, got {level}')
    if size**level > cap:
        raise CapExceeded(f'{size}^{level} atoms exceed the cap of {cap}')
    start = ifs.fixed_point() if x0 is None else np.asarray(x0, dtype=np.float64)
    points = start.reshape(1, ifs.dimension)
    words = np.zeros((1, 0), dtype=np.int32)
    ratios = np.ones(1)
    for _ in range(level):
        # Prepending symbol j maps f_w(x0) to f_j(f_w(x0)); blocks stay in lexicographic order.
        points = np.concatenate([similarity(points) for similarity in ifs.maps])
        words = np.concatenate(
            [np.column_stack([np.full(len(words), symbol, dtype=np.int32), words]) for symbol in range(1, size + 1)],
        )
        ratios = np.concatenate([similarity.ratio * ratios for similarity in ifs.maps])
    return Cloud(words=words, points=points, ratios=ratios)


def diameter_bound(ifs: IfsSpec, word: Word, /) -> float:
    return 2 * ifs.radius_bound * compose(ifs, word).ratio


def index_words(indices: IntArray, length: int, size: int, /) -> npt.NDArray[np.int32]:
    words = np.empty((indices.shape[0], length), dtype=np.int32)
    remaining = indices.copy()
    for position in range(length - 1, -1, -1):
        remaining, symbols = np.divmod(remaining, size)
        words[:, position] = symbols + 1
    return words


def index_points(ifs: IfsSpec, indices: IntArray, length: int, x0: FloatArray | None = None, /) -> FloatArray:
    start = ifs.fixed_point() if x0 is None else np.asarray(x0, dtype=np.float64)
    points = np.tile(start, (indices.shape[0], 1))
    remaining = indices.copy()
    # The last symbol is the least significant digit and acts first.
    for _ in range(length):
        remaining, digits = np.divmod(remaining, len(ifs))
        for symbol, similarity in enumerate(ifs.maps):
            selected = digits == symbol
            points[selected] = similarity(points[selected])
    return points
