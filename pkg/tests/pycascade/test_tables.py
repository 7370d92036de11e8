from pathlib import Path

import numpy as np
import pytest

from pycascade.tables import Table, format_cell, format_summary


class TestFormatCell:
    @pytest.mark.parametrize(
        ('value', 'expected'),
        [
            (True, 'true'),
            (np.bool_(False), 'false'),
            (3, '3'),
            (np.int64(7), '7'),
            (0.5, '0.5'),
            (np.float64(1 / 3), '0.333333333'),
            ('label', 'label'),
            (None, 'None'),
        ],
    )
    def test_format(self, value: object, expected: str) -> None:
        assert format_cell(value) == expected


class TestTable:
    def test_csv(self) -> None:
        sut = Table(header=('r', 'H_r'), rows=[(0.5, 1), (0.25, 2)])

        assert len(sut) == 2
        assert sut.to_csv() == 'r,H_r\n0.5,1\n0.25,2\n'
        assert sut.column('H_r') == [1, 2]

    def test_from_columns(self) -> None:
        sut = Table.from_columns(('q', 'passed'), [1, 2], [True, False])

        assert sut.rows == [(1, True), (2, False)]
        assert sut.to_csv() == 'q,passed\n1,true\n2,false\n'

    def test_empty(self) -> None:
        assert Table(header=('a',)).to_csv() == 'a\n'

    def test_quotes_cells_with_commas(self) -> None:
        sut = Table(header=('index', 'weights.weights'), rows=[(0, '[0.5, 0.5]')])

        assert sut.to_csv() == 'index,weights.weights\n0,"[0.5, 0.5]"\n'

    def test_row_mismatch(self) -> None:
        with pytest.raises(ValueError, match='does not match'):
            Table(header=('a', 'b'), rows=[(1,)])
        with pytest.raises(ValueError, match='zip'):
            Table.from_columns(('a', 'b'), [1, 2], [1])

    def test_write(self, tmp_path: Path) -> None:
        path = tmp_path / 'table.csv'

        Table(header=('x',), rows=[(1.0,)]).write(path)

        assert path.read_text(encoding='utf-8') == 'x\n1\n'


class TestFormatSummary:
    def test_nested(self) -> None:
        summary = {'alpha': 0.5, 'lln': {'agrees': True, 'depth': {'max': 20}}, 'name': 'x'}

        assert format_summary(summary) == ['alpha: 0.5', 'lln.agrees: true', 'lln.depth.max: 20', 'name: x']
