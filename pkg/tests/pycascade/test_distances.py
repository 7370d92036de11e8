from math import log

import numpy as np
import pytest

from pycascade.cascade.realization import CascadeRealization, cascade_measure
from pycascade.cascade.weights import bernoulli_weights
from pycascade.distances import (
    SetConservation,
    box_counts,
    box_dimension,
    distance_set_cloud,
    nearest_atom,
    pinned_distance_measure,
    separating_cylinder,
    set_conservation,
)
from pycascade.errors import AnchorOffSupport, ExclusionEmpty, InsufficientRange
from pycascade.ifs import IfsSpec, attractor_cloud
from pycascade.measures.dimension import DimensionEstimate
from pycascade.measures.discrete import DiscreteMeasure
from pycascade.projection import ProjectionFrame

CANTOR_DIMENSION = log(2) / log(3)
TRIADIC = [3.0**-k for k in range(1, 7)]
PRODUCT = IfsSpec.cantor_product()


def product_measure(level: int = 5) -> DiscreteMeasure:
    return cascade_measure(CascadeRealization(bernoulli_weights(PRODUCT), 0), PRODUCT, level)


class TestPinnedDistances:
    def test_word_exclusion(self) -> None:
        measure = product_measure()
        anchor = PRODUCT.fixed_point(1)

        sut = pinned_distance_measure(measure, anchor, (2,))

        assert sut.dimension == 1
        assert len(sut) == len(measure) // 4
        assert sut.total_mass == pytest.approx(1.0)
        assert (sut.points >= 2 / 3).all()

    def test_radius_exclusion(self) -> None:
        measure = product_measure()

        sut = pinned_distance_measure(measure, np.zeros(2), 0.5)

        assert (sut.points > 0.5).all()
        assert sut.total_mass == pytest.approx(1.0)

    def test_nothing_left(self) -> None:
        with pytest.raises(ExclusionEmpty):
            pinned_distance_measure(product_measure(), np.zeros(2), 100.0)

    def test_word_exclusion_needs_words(self) -> None:
        measure = DiscreteMeasure.point_mass(np.ones(2))

        with pytest.raises(ValueError, match='word labels'):
            pinned_distance_measure(measure, np.zeros(2), (1,))

    def test_anchor_off_support(self) -> None:
        with pytest.raises(AnchorOffSupport, match='away from the support'):
            pinned_distance_measure(product_measure(), np.array([0.5, 0.5]), (2,))


class TestCylinderChoice:
    def labelled(self, masses: list[float]) -> DiscreteMeasure:
        return DiscreteMeasure(
            points=np.array([[0.0, 0.0], [0.1, 0.0], [1.0, 0.0]]),
            masses=np.array(masses),
            words=np.array([[1, 1], [1, 2], [2, 1]], dtype=np.int32),
        )

    def test_nearest_atom_skips_dead_atoms(self) -> None:
        sut = self.labelled([0.0, 0.5, 0.5])

        assert nearest_atom(sut, np.array([0.01, 0.0])) == 1

    def test_first_level_sibling(self) -> None:
        assert separating_cylinder(self.labelled([0.5, 0.3, 0.2]), 0) == (2,)

    def test_dead_sibling_goes_one_level_deeper(self) -> None:
        assert separating_cylinder(self.labelled([0.5, 0.5, 0.0]), 0) == (1, 2)

    def test_all_mass_in_one_cylinder(self) -> None:
        with pytest.raises(ExclusionEmpty, match='All mass'):
            separating_cylinder(self.labelled([1.0, 0.0, 0.0]), 0)

    def test_needs_words(self) -> None:
        with pytest.raises(ValueError, match='word labels'):
            separating_cylinder(DiscreteMeasure.point_mass(np.ones(2)), 0)


class TestDistanceSet:
    def test_all_pairs(self) -> None:
        points = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 4.0]])

        np.testing.assert_allclose(sorted(distance_set_cloud(points, 10, 0)), [3.0, 4.0, 5.0])

    def test_sampled_pairs(self) -> None:
        points = attractor_cloud(PRODUCT, 6).points

        sut = distance_set_cloud(points, 1000, 0)

        assert sut.shape == (1000,)
        assert (sut > 0).all()
        np.testing.assert_array_equal(sut, distance_set_cloud(points, 1000, 0))

    def test_too_few_points(self) -> None:
        with pytest.raises(ValueError, match='at least 2'):
            distance_set_cloud(np.zeros((1, 2)), 10, 0)


class TestBoxDimension:
    def test_cantor_counts(self) -> None:
        points = attractor_cloud(IfsSpec.cantor(), 8).points

        np.testing.assert_array_equal(box_counts(points, TRIADIC), [2.0**k for k in range(1, 7)])
        assert box_dimension(points, TRIADIC).value == pytest.approx(CANTOR_DIMENSION)

    def test_product_counts(self) -> None:
        points = attractor_cloud(PRODUCT, 6).points

        np.testing.assert_array_equal(box_counts(points, TRIADIC[:4]), [4.0**k for k in range(1, 5)])

    def test_insufficient_scales(self) -> None:
        with pytest.raises(InsufficientRange):
            box_dimension(np.zeros((3, 1)), [0.5, 0.25])


class TestSetConservation:
    def test_product_set(self) -> None:
        points = attractor_cloud(PRODUCT, 6).points

        sut = set_conservation(points, ProjectionFrame.coordinate(2), TRIADIC[:4], fibres=4, width=0.001)

        assert sut.projected.value == pytest.approx(CANTOR_DIMENSION)
        assert sut.fibre == pytest.approx(CANTOR_DIMENSION)
        assert sut.whole.value == pytest.approx(2 * CANTOR_DIMENSION)
        assert sut.residual == pytest.approx(0.0, abs=1e-9)
        assert sut.fibre_stderr == pytest.approx(0.0, abs=1e-9)

    def test_summary(self) -> None:
        estimate = DimensionEstimate(value=1.0, stderr=0.0, radii=(), r2=1.0, samples=1)

        sut = SetConservation(projected=estimate, fibre=0.5, fibre_stderr=0.1, whole=estimate)

        assert sut.residual == 0.5
        assert sut.to_summary()['residual'] == 0.5
        assert repr(sut) == 'SetConservation(residual=0.5)'
