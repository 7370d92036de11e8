import os
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import Final, TypeVar

THREADS_VARIABLE: Final = 'PYCASCADE_THREADS'

T = TypeVar('T')
R = TypeVar('R')


def default_threads() -> int:
    value = os.environ.get(THREADS_VARIABLE)
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[T], R], items: Iterable[T], /, *, threads: int | None = None) -> list[R]:
    workers = default_threads() if threads is None else threads
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
