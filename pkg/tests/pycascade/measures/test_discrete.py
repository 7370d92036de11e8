from random import randint, uniform

import numpy as np
import pytest

from pycascade.errors import CapExceeded, Extinct
from pycascade.ifs import FloatArray, IntArray
from pycascade.measures.discrete import DiscreteMeasure, GridIndex, ball_mass
from pycascade.seeds import generator


def brute_force(points: FloatArray, center: FloatArray, r: float) -> IntArray:
    return np.flatnonzero(((points - center) ** 2).sum(axis=1) <= r * r)


class TestGridIndex:
    def test_query_matches_brute_force(self) -> None:
        points = generator(1, 'test').random((300, 2))
        for _ in range(10):
            cell = uniform(0.01, 0.2)
            sut = GridIndex.build(points, cell)
            center = np.array([uniform(0, 1), uniform(0, 1)])
            r = uniform(0.01, 0.3)

            np.testing.assert_array_equal(sut.query(center, r), brute_force(points, center, r))

    def test_ball_sums_match_brute_force(self) -> None:
        rng = generator(2, 'test')
        points = rng.random((500, 3))
        weights = rng.random(500)
        for _ in range(10):
            r = uniform(0.02, 0.2)
            sut = GridIndex.build(points, r)
            centers = points[[randint(0, 499) for _ in range(20)]]

            sums = sut.ball_sums(centers, r, weights)

            expected = [weights[brute_force(points, center, r)].sum() for center in centers]
            np.testing.assert_allclose(sums, expected)

    def test_ball_sums_far_away(self) -> None:
        sut = GridIndex.build(np.array([[0.0], [1.0]]), 0.5)

        np.testing.assert_array_equal(sut.ball_sums(np.array([[10.0], [-10.0]]), 0.5, np.ones(2)), [0.0, 0.0])

    def test_radius_above_cell(self) -> None:
        sut = GridIndex.build(np.zeros((1, 2)), 0.1)

        with pytest.raises(ValueError, match='exceeds the cell size'):
            sut.ball_sums(np.zeros((1, 2)), 0.2, np.ones(1))

    def test_invalid_grids(self) -> None:
        with pytest.raises(ValueError, match='positive'):
            GridIndex.build(np.zeros((1, 2)), 0.0)
        with pytest.raises(CapExceeded):
            GridIndex.build(np.array([[0.0, 0.0], [1e6, 1e6]]), 1e-6)


class TestDiscreteMeasure:
    def test_properties(self) -> None:
        sut = DiscreteMeasure(points=np.array([[3.0, 4.0], [0.0, 0.0]]), masses=np.array([0.25, 0.75]))

        assert repr(sut) == 'DiscreteMeasure(atoms=2, dimension=2, total=1)'
        assert len(sut) == 2
        assert sut.radius == 5.0
        assert sut.level == 0
        assert sut.diameter_bound() == 5.0

    def test_invalid(self) -> None:
        with pytest.raises(ValueError, match='non-negative'):
            DiscreteMeasure(points=np.zeros((1, 1)), masses=np.array([-1.0]))
        with pytest.raises(ValueError, match='points'):
            DiscreteMeasure(points=np.zeros((2, 1)), masses=np.ones(3))

    def test_transformations(self) -> None:
        sut = DiscreteMeasure(points=np.array([[0.0], [1.0], [2.0]]), masses=np.array([1.0, 2.0, 1.0]))

        assert sut.normalized().total_mass == pytest.approx(1.0)
        assert sut.scaled(3).total_mass == 12.0
        restricted = sut.restricted(np.array([False, True, True]))
        np.testing.assert_array_equal(restricted.masses, [2.0, 1.0])
        moved = sut.with_points(sut.points + 1)
        np.testing.assert_array_equal(moved.points[:, 0], [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(moved.masses, sut.masses)

    def test_zero_mass(self) -> None:
        sut = DiscreteMeasure(points=np.zeros((2, 1)), masses=np.zeros(2))

        with pytest.raises(Extinct):
            sut.normalized()
        with pytest.raises(Extinct):
            sut.sample_atoms(3, generator(0, 'test'))

    def test_sample_atoms(self) -> None:
        sut = DiscreteMeasure(points=np.zeros((3, 1)), masses=np.array([0.0, 1.0, 0.0]))

        np.testing.assert_array_equal(sut.sample_atoms(50, generator(0, 'test')), np.ones(50))

    def test_ball_masses(self) -> None:
        sut = DiscreteMeasure(points=np.array([[0.0], [0.5], [1.0]]), masses=np.array([1.0, 2.0, 4.0]))

        np.testing.assert_array_equal(sut.ball_masses(np.array([[0.0], [1.0]]), 0.5), [3.0, 6.0])
        assert ball_mass(sut, np.array([0.5]), 0.5) == 7.0
        assert ball_mass(sut, np.array([0.5]), 0.1) == 2.0
        with pytest.raises(ValueError, match='positive'):
            sut.ball_masses(np.zeros((1, 1)), 0.0)

    def test_empty(self) -> None:
        sut = DiscreteMeasure(points=np.zeros((0, 2)), masses=np.zeros(0))

        np.testing.assert_array_equal(sut.ball_masses(np.zeros((2, 2)), 1.0), [0.0, 0.0])
        assert sut.diameter_bound() == 0.0

    def test_index_is_cached(self) -> None:
        sut = DiscreteMeasure.point_mass(np.array([1.0, 2.0]))

        assert sut.index(0.5) is sut.index(0.5)
        assert sut.total_mass == 1.0
