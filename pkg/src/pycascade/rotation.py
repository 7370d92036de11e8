import logging
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from itertools import product
from math import atan2, pi, tau
from typing import Any, Final

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .errors import CapExceeded, WrongClassification
from .ifs import DEFAULT_ATOM_CAP, FloatArray, IfsSpec, Word, check_rotation, rotation_2d
from .seeds import generator

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE: Final = 1e-9
DEFAULT_ELEMENT_CAP: Final = 10**5
MAX_DENOMINATOR: Final = 10**6
IRRATIONAL_TOLERANCE: Final = 64 * float(np.finfo(np.float64).eps)
MESH_SAMPLES: Final = 64
MESH_TOLERANCE: Final = 0.25
BUCKET: Final = 1e-6


class GroupKind(Enum):
    FINITE = 'finite'
    DENSE = 'dense'
    UNDETERMINED = 'undetermined'


@dataclass(frozen=True, eq=False)
class RotationGroupInfo:
    generators: tuple[FloatArray, ...]
    kind: GroupKind
    tolerance: float
    elements: tuple[FloatArray, ...] = field(default=())

    def __repr__(self) -> str:
        if self.kind is GroupKind.FINITE:
            return f'RotationGroupInfo(kind={self.kind.value}, elements={len(self.elements)})'
        return f'RotationGroupInfo(kind={self.kind.value})'

    @property
    def dimension(self) -> int:
        return int(self.generators[0].shape[0])

    def to_summary(self) -> dict[str, Any]:
        summary: dict[str, Any] = {'kind': self.kind.value, 'tolerance': self.tolerance}
        if self.kind is GroupKind.FINITE:
            summary['elements'] = len(self.elements)
        return summary


@dataclass(frozen=True)
class StoppingAlphabet:
    q: int
    words: tuple[Word, ...]

    def __repr__(self) -> str:
        return f'StoppingAlphabet(q={self.q}, words={len(self.words)})'

    def __len__(self) -> int:
        return len(self.words)

    def total_probability(self, probabilities: Sequence[float], /) -> float:
        return float(sum(np.prod([probabilities[symbol - 1] for symbol in word]) for word in self.words))


def angle_of(rotation: FloatArray, /) -> float:
    return atan2(float(rotation[1, 0]), float(rotation[0, 0])) % tau


def is_irrational_turn(angle: float, /, *, max_denominator: int = MAX_DENOMINATOR) -> bool:
    turns = angle / pi
    approximation = Fraction(turns).limit_denominator(max_denominator)
    return abs(turns - float(approximation)) > IRRATIONAL_TOLERANCE * max(1.0, abs(turns))


def _bucket(matrix: FloatArray, cell: float, /) -> tuple[int, ...]:
    return tuple(np.round(matrix.ravel() / cell).astype(np.int64).tolist())


def _nearby_buckets(matrix: FloatArray, cell: float, reach: float, /) -> list[tuple[int, ...]]:
    """Buckets holding every matrix within ``reach`` of ``matrix`` entrywise; needs ``cell >= 2 * reach``."""
    scaled = matrix.ravel() / cell
    base = np.round(scaled).astype(np.int64)
    offset = scaled - base
    edges = np.flatnonzero(np.abs(offset) > 0.5 - reach / cell)
    steps = np.where(offset[edges] > 0, 1, -1).astype(np.int64)
    keys = []
    for chosen in product((0, 1), repeat=edges.shape[0]):
        key = base.copy()
        key[edges] += steps * np.array(chosen, dtype=np.int64)
        keys.append(tuple(key.tolist()))
    return keys


def _seen(
    buckets: dict[tuple[int, ...], list[FloatArray]],
    matrix: FloatArray,
    cell: float,
    tolerance: float,
    /,
) -> bool:
    # The spectral norm bounds every entry, so near duplicates sit in the nearby buckets.
    return any(
        float(np.linalg.norm(known - matrix, 2)) < tolerance
        for key in _nearby_buckets(matrix, cell, tolerance)
        for known in buckets.get(key, ())
    )


def _closure(generators: Sequence[FloatArray], cap: int, tolerance: float, /) -> tuple[list[FloatArray], bool]:
    cell = max(BUCKET, 2 * tolerance)
    identity = np.eye(generators[0].shape[0])
    buckets = {_bucket(identity, cell): [identity]}
    elements = [identity]
    pending = deque([identity])
    while pending:
        element = pending.popleft()
        for rotation in generators:
            composed = element @ rotation
            if _seen(buckets, composed, cell, tolerance):
                continue
            buckets.setdefault(_bucket(composed, cell), []).append(composed)
            elements.append(composed)
            pending.append(composed)
            if len(elements) > cap:
                return elements, False
    return elements, True


def _mesh_dense(elements: Sequence[FloatArray], dimension: int, /) -> bool:
    stacked = np.stack(elements)
    targets = haar_sample(dimension, MESH_SAMPLES, 0)
    for target in targets:
        distances = np.linalg.norm(stacked - target, axis=(1, 2))
        if float(distances.min()) > MESH_TOLERANCE:
            return False
    return True


def classify_group(
    generators: Sequence[FloatArray],
    /,
    *,
    tolerance: float = DEFAULT_TOLERANCE,
    cap: int = DEFAULT_ELEMENT_CAP,
) -> RotationGroupInfo:
    matrices = tuple(np.asarray(g, dtype=np.float64) for g in generators)
    for matrix in matrices:
        check_rotation(matrix)
    dimension = int(matrices[0].shape[0])
    if dimension == 2 and any(is_irrational_turn(angle_of(matrix)) for matrix in matrices):  # noqa: PLR2004
        return RotationGroupInfo(generators=matrices, kind=GroupKind.DENSE, tolerance=tolerance)
    elements, complete = _closure(matrices, cap, tolerance)
    if complete:
        return RotationGroupInfo(
            generators=matrices,
            kind=GroupKind.FINITE,
            tolerance=tolerance,
            elements=tuple(elements),
        )
    logger.debug('Closure exceeded %d elements, testing density on a Haar mesh', cap)
    kind = GroupKind.DENSE if _mesh_dense(elements, dimension) else GroupKind.UNDETERMINED
    return RotationGroupInfo(generators=matrices, kind=kind, tolerance=tolerance)


def haar_sample(dimension: int, count: int, seed: int, /) -> npt.NDArray[np.float64]:
    if dimension < 2:  # noqa: PLR2004
        raise ValueError(f'Haar sampling needs dimension >= 2, got {dimension}')
    rng = generator(seed, 'haar', dimension)
    if dimension == 2:  # noqa: PLR2004
        return np.stack([rotation_2d(angle) for angle in rng.uniform(0, tau, count)]).reshape(count, 2, 2)
    samples = np.empty((count, dimension, dimension))
    for index in range(count):
        q, r = scipy.linalg.qr(rng.standard_normal((dimension, dimension)))
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[0] = -q[0]
        samples[index] = q
    return samples


def haar_on_finite(info: RotationGroupInfo, count: int, seed: int, /) -> npt.NDArray[np.float64]:
    if info.kind is not GroupKind.FINITE:
        raise WrongClassification(f'Finite Haar sampling needs a finite group, got {info.kind.value}')
    choices = generator(seed, 'haar-finite').integers(len(info.elements), size=count)
    return np.stack([info.elements[index] for index in choices]).reshape(count, info.dimension, info.dimension)


def stopping_alphabet(ifs: IfsSpec, q: int, /, *, cap: int = DEFAULT_ATOM_CAP) -> StoppingAlphabet:
    if q < 1:
        raise ValueError(f'q must be positive, got {q}')
    threshold = ifs.rho**q * (1 + 1e-12)
    ratios = ifs.ratios
    words: list[Word] = []
    pending: list[tuple[Word, float]] = [((), 1.0)]
    while pending:
        word, ratio = pending.pop()
        if ratio <= threshold:
            words.append(word)
            if len(words) > cap:
                raise CapExceeded(f'Stopping alphabet for q={q} exceeds {cap} words')
            continue
        pending.extend((word + (symbol,), ratio * ratios[symbol - 1]) for symbol in range(len(ifs), 0, -1))
    return StoppingAlphabet(q=q, words=tuple(words))
