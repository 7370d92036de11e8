import csv
import io
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


def format_cell(value: Any, /) -> str:  # noqa: ANN401
    if isinstance(value, bool | np.bool_):
        return 'true' if value else 'false'
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        return f'{float(value):.9g}'
    return str(value)


@dataclass(frozen=True)
class Table:
    header: tuple[str, ...]
    rows: list[tuple[Any, ...]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.header):
                raise ValueError(f'Row {row!r} does not match header {self.header!r}')

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def from_columns(cls, header: Sequence[str], *columns: Iterable[Any]) -> 'Table':
        return cls(header=tuple(header), rows=list(zip(*columns, strict=True)))

    def column(self, name: str, /) -> list[Any]:
        position = self.header.index(name)
        return [row[position] for row in self.rows]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(self.header)
        writer.writerows([format_cell(value) for value in row] for row in self.rows)
        return buffer.getvalue()

    def write(self, path: Path, /) -> None:
        path.write_text(self.to_csv(), encoding='utf-8')


def format_summary(summary: dict[str, Any], /, *, prefix: str = '') -> list[str]:
    lines = []
    for key, value in summary.items():
        if isinstance(value, dict):
            lines.extend(format_summary(value, prefix=f'{prefix}{key}.'))
        else:
            lines.append(f'{prefix}{key}: {format_cell(value)}')
    return lines
