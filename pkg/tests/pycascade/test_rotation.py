from math import pi, tau
from random import randint, uniform

import numpy as np
import pytest

from pycascade.errors import CapExceeded, NotARotation, WrongClassification
from pycascade.ifs import IfsSpec, rotation_2d
from pycascade.rotation import (
    GroupKind,
    _bucket,
    _seen,
    angle_of,
    classify_group,
    haar_on_finite,
    haar_sample,
    is_irrational_turn,
    stopping_alphabet,
)

QUARTER_X = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
QUARTER_Z = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


class TestClassifyGroup:
    def test_angle_of(self) -> None:
        for _ in range(10):
            angle = uniform(0, tau)

            assert angle_of(rotation_2d(angle)) == pytest.approx(angle)

    def test_irrational_turns(self) -> None:
        assert is_irrational_turn(1.0)
        assert not is_irrational_turn(pi / 2)
        assert not is_irrational_turn(2 * pi / 3)
        assert not is_irrational_turn(0.0)

    def test_one_radian_is_dense(self) -> None:
        sut = classify_group([rotation_2d(1.0), np.eye(2)])

        assert sut.kind is GroupKind.DENSE
        assert sut.to_summary() == {'kind': 'dense', 'tolerance': 1e-9}

    def test_quarter_turn_is_cyclic(self) -> None:
        sut = classify_group([rotation_2d(pi / 2)])

        assert sut.kind is GroupKind.FINITE
        assert len(sut.elements) == 4
        assert sut.to_summary()['elements'] == 4

    def test_trivial_groups(self) -> None:
        assert len(classify_group(IfsSpec.cantor_product().rotations).elements) == 1
        assert len(classify_group(IfsSpec.cantor().rotations).elements) == 1

    def test_cube_rotations(self) -> None:
        sut = classify_group([QUARTER_X, QUARTER_Z])

        assert sut.kind is GroupKind.FINITE
        assert len(sut.elements) == 24
        assert sut.dimension == 3

    def test_duplicates_across_bucket_edges(self) -> None:
        first = np.diag([0.5000005 - 1e-10, 1.0])
        second = np.diag([0.5000005 + 1e-10, 1.0])
        buckets = {_bucket(first, 1e-6): [first]}

        assert _bucket(second, 1e-6) != _bucket(first, 1e-6)
        assert _seen(buckets, second, 1e-6, 1e-9)
        assert not _seen(buckets, np.diag([0.5000015, 1.0]), 1e-6, 1e-9)

    def test_rejects_reflections(self) -> None:
        with pytest.raises(NotARotation):
            classify_group([np.diag([1.0, -1.0])])


class TestHaar:
    def test_samples_are_rotations(self) -> None:
        for dimension in (2, 3, 4):
            sut = haar_sample(dimension, 20, randint(0, 1000))

            assert sut.shape == (20, dimension, dimension)
            for g in sut:
                np.testing.assert_allclose(g @ g.T, np.eye(dimension), atol=1e-12)
                assert np.linalg.det(g) == pytest.approx(1.0)

    def test_samples_are_reproducible(self) -> None:
        np.testing.assert_array_equal(haar_sample(3, 5, 11), haar_sample(3, 5, 11))

    def test_planar_angles_are_uniform(self) -> None:
        angles = np.array([angle_of(g) for g in haar_sample(2, 4000, 5)])

        assert angles.mean() == pytest.approx(pi, abs=0.15)

    def test_finite_group_sampling(self) -> None:
        info = classify_group([rotation_2d(pi / 2)])

        sut = haar_on_finite(info, 50, 3)

        assert sut.shape == (50, 2, 2)
        for g in sut:
            assert min(float(np.abs(g - e).max()) for e in info.elements) < 1e-12

    def test_finite_sampling_needs_a_finite_group(self) -> None:
        with pytest.raises(WrongClassification):
            haar_on_finite(classify_group([rotation_2d(1.0)]), 5, 0)


class TestStoppingAlphabet:
    def test_golden_alphabet(self) -> None:
        sut = stopping_alphabet(IfsSpec.line([0.5, 0.25], [0.0, 0.5]), 2)

        assert sut.words == ((1, 1), (1, 2), (2,))
        assert repr(sut) == 'StoppingAlphabet(q=2, words=3)'
        assert sut.total_probability([0.5, 0.5]) == pytest.approx(1.0)

    def test_equal_ratios_give_full_level(self) -> None:
        for q in range(1, 6):
            sut = stopping_alphabet(IfsSpec.cantor(), q)

            assert len(sut) == 2**q
            assert all(len(word) == q for word in sut.words)

    def test_prefix_free_and_complete(self) -> None:
        for _ in range(10):
            probabilities = [uniform(0.1, 1), uniform(0.1, 1), uniform(0.1, 1)]
            total = sum(probabilities)
            ifs = IfsSpec.line([0.5, 0.3, 0.2], [0.0, 0.5, 0.8])

            sut = stopping_alphabet(ifs, randint(1, 5))

            assert sut.total_probability([p / total for p in probabilities]) == pytest.approx(1.0)
            for word in sut.words:
                assert not any(other != word and word[: len(other)] == other for other in sut.words)

    def test_cap(self) -> None:
        with pytest.raises(CapExceeded):
            stopping_alphabet(IfsSpec.cantor(), 5, cap=10)
        with pytest.raises(ValueError, match='positive'):
            stopping_alphabet(IfsSpec.cantor(), 0)
