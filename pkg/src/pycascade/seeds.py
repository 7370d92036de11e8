from hashlib import blake2b
from math import ceil
from typing import Final

import numpy as np
import numpy.typing as npt

PHILOX_BLOCK: Final = 4
SEED_MASK: Final = (1 << 64) - 1


def derive_key(*parts: int | str) -> int:
    digest = blake2b('\x1f'.join(str(part) for part in parts).encode(), digest_size=16).digest()
    return int.from_bytes(digest, 'little')


def derive_seed(master: int, role: str, index: int = 0, /) -> int:
    return derive_key(master, role, index) & SEED_MASK


def generator(seed: int, role: str, index: int = 0, /) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(seed, role, index)))


def block_width(width: int, /) -> int:
    return PHILOX_BLOCK * ceil(width / PHILOX_BLOCK)


def counter_uniforms(key: int, start: int, count: int, width: int, /) -> npt.NDArray[np.float64]:
    # Row k holds the draws at counter block (start + k), so any row is reproducible on its own.
    block = block_width(width)
    bit_generator = np.random.Philox(key=key, counter=start * (block // PHILOX_BLOCK))
    uniforms = np.random.Generator(bit_generator).random((count, block))
    return uniforms[:, :width]


def indexed_uniforms(
    key: int,
    indices: npt.NDArray[np.int64],
    width: int,
    /,
    *,
    chunk: int = 4096,
) -> npt.NDArray[np.float64]:
    # Rows are drawn chunk by chunk so only chunks holding a requested index are generated.
    result = np.empty((indices.shape[0], width))
    if not indices.shape[0] or not width:
        return result
    chunks = indices // chunk
    for chunk_id in np.unique(chunks):
        selected = chunks == chunk_id
        block = counter_uniforms(key, int(chunk_id) * chunk, chunk, width)
        result[selected] = block[indices[selected] - int(chunk_id) * chunk]
    return result
