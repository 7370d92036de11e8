from math import tau
from random import randint, uniform

import numpy as np
import pytest

from pycascade.errors import CapExceeded, ConfigInvalid, InvalidWord, NotARotation
from pycascade.ifs import (
    IfsSpec,
    Similarity,
    attractor_cloud,
    check_rotation,
    compose,
    cylinder_point,
    diameter_bound,
    index_points,
    index_word,
    index_words,
    ratio_bounds,
    rotation_2d,
    word_index,
)


class TestSimilarity:
    def test_repr(self) -> None:
        sut = Similarity.planar(0.5, 0.0, (1.0, 0.0))

        assert repr(sut) == 'Similarity(ratio=0.5, dimension=2)'

    def test_apply(self) -> None:
        sut = Similarity.planar(0.5, tau / 4, (1.0, 0.0))

        np.testing.assert_allclose(sut(np.array([[2.0, 0.0]])), [[1.0, 1.0]], atol=1e-15)

    def test_compose_applies_right_map_first(self) -> None:
        for _ in range(10):
            f = Similarity.planar(uniform(0.1, 0.9), uniform(0, tau), (uniform(-1, 1), uniform(-1, 1)))
            g = Similarity.planar(uniform(0.1, 0.9), uniform(0, tau), (uniform(-1, 1), uniform(-1, 1)))
            points = np.array([[uniform(-1, 1), uniform(-1, 1)] for _ in range(5)])

            sut = f.compose(g)

            np.testing.assert_allclose(sut(points), f(g(points)), atol=1e-12)
            assert sut.ratio == pytest.approx(f.ratio * g.ratio)

    def test_rejects_bad_ratio(self) -> None:
        with pytest.raises(ConfigInvalid, match='^ratio: '):
            Similarity.planar(1.5, 0.0, (0.0, 0.0))

    def test_check_rotation(self) -> None:
        check_rotation(rotation_2d(1.0))
        with pytest.raises(NotARotation):
            check_rotation(np.array([[1.0, 0.0], [0.0, -1.0]]))
        with pytest.raises(NotARotation):
            check_rotation(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestIfsSpec:
    def test_repr(self) -> None:
        assert repr(IfsSpec.cantor()) == 'IfsSpec(m=2, d=1, rho=0.333333)'

    def test_cantor_constants(self) -> None:
        sut = IfsSpec.cantor()

        assert len(sut) == 2
        assert sut.dimension == 1
        assert sut.rho == pytest.approx(1 / 3)
        assert sut.c == pytest.approx(1 / 3)
        assert sut.radius_bound == pytest.approx(1.0)
        np.testing.assert_allclose(sut.fixed_point(), [0.0])
        np.testing.assert_allclose(sut.fixed_point(2), [1.0])
        assert ratio_bounds(sut) == (sut.c, sut.rho)

    def test_needs_two_contractions(self) -> None:
        with pytest.raises(ConfigInvalid, match=r'^ifs\.maps: '):
            IfsSpec(maps=(Similarity.planar(0.5, 0.0, (0.0, 0.0)),))
        with pytest.raises(ConfigInvalid, match=r'^ifs\.maps\[1\]\.ratio: '):
            IfsSpec.line([0.5, 1.0], [0.0, 0.5])

    def test_check_word(self) -> None:
        sut = IfsSpec.square_grid(2)

        sut.check_word((1, 2, 3, 4))
        with pytest.raises(InvalidWord, match='position 2'):
            sut.check_word((1, 2, 5))
        with pytest.raises(InvalidWord, match='position 0'):
            sut.check_word((0,))

    def test_from_mapping_preset(self) -> None:
        sut = IfsSpec.from_mapping({'preset': 'rotating_corners', 'ratio': 0.3, 'angle': 1.0})

        assert len(sut) == 4
        assert sut.rho == pytest.approx(0.3)
        np.testing.assert_allclose(sut.rotations[0], rotation_2d(1.0))

    def test_from_mapping_reports_field_paths(self) -> None:
        with pytest.raises(ConfigInvalid, match=r'^ifs\.colour: unknown key$'):
            IfsSpec.from_mapping({'colour': 'red'})
        with pytest.raises(ConfigInvalid, match=r'^ifs\.preset: '):
            IfsSpec.from_mapping({'preset': 'sierpinski'})
        maps = [
            {'ratio': 0.5, 'translation': [0.0, 0.0]},
            {'ratio': 0.5, 'rotation': [1.0, 1.0, 0.0, 1.0], 'translation': [0.5, 0.0]},
        ]
        with pytest.raises(ConfigInvalid, match=r'^ifs\.maps\[1\]\.rotation: '):
            IfsSpec.from_mapping({'maps': maps})
        with pytest.raises(ConfigInvalid, match=r'^ifs\.maps\[0\]\.ratio: '):
            IfsSpec.from_mapping(
                {'maps': [{'ratio': 2.0, 'translation': [0.0]}, {'ratio': 0.5, 'translation': [1.0]}]},
            )
        with pytest.raises(ConfigInvalid, match=r'^ifs\.maps\[0\]\.skew: unknown key$'):
            IfsSpec.from_mapping({'maps': [{'ratio': 0.5, 'translation': [0.0], 'skew': 1}]})
        with pytest.raises(ConfigInvalid, match=r'^ifs\.side: expected an integer'):
            IfsSpec.from_mapping({'preset': 'square_grid', 'side': 'two'})
        with pytest.raises(ConfigInvalid, match=r'^ifs\.angle: expected a number'):
            IfsSpec.from_mapping({'preset': 'rotating_corners', 'angle': 'wide'})

    def test_mapping_keeps_the_maps(self) -> None:
        original = IfsSpec.rotating_corners(0.4, 1.0)

        sut = IfsSpec.from_mapping(original.to_mapping())

        assert len(sut) == len(original)
        for ours, theirs in zip(sut.maps, original.maps, strict=True):
            assert ours.ratio == theirs.ratio
            np.testing.assert_allclose(ours.rotation, theirs.rotation)
            np.testing.assert_allclose(ours.translation, theirs.translation)

    def test_matrix_rotation_in_three_dimensions(self) -> None:
        quarter = [0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        maps = [
            {'ratio': 0.3, 'rotation': quarter, 'translation': [0.0, 0.0, 0.0]},
            {'ratio': 0.3, 'translation': [1.0, 0.0, 0.0]},
        ]

        sut = IfsSpec.from_mapping({'maps': maps})

        assert sut.dimension == 3
        np.testing.assert_allclose(sut.rotations[1], np.eye(3))


class TestWords:
    def test_word_index_is_lexicographic(self) -> None:
        assert word_index((), 3) == 0
        assert word_index((1, 1), 2) == 0
        assert word_index((1, 2), 2) == 1
        assert word_index((2, 1), 2) == 2
        assert index_word(5, 3, 2) == (2, 1, 2)

    def test_index_word_inverts_word_index(self) -> None:
        for _ in range(10):
            size = randint(2, 5)
            word = tuple(randint(1, size) for _ in range(randint(0, 8)))

            assert index_word(word_index(word, size), len(word), size) == word

    def test_index_words(self) -> None:
        indices = np.arange(27, dtype=np.int64)

        sut = index_words(indices, 3, 3)

        assert sut.shape == (27, 3)
        for index in range(27):
            assert tuple(sut[index]) == index_word(index, 3, 3)

    def test_compose_word(self) -> None:
        sut = compose(IfsSpec.cantor(), (2, 1))

        assert sut.ratio == pytest.approx(1 / 9)
        np.testing.assert_allclose(sut.translation, [2 / 3])

    def test_cylinder_point_and_diameter(self) -> None:
        ifs = IfsSpec.cantor()

        np.testing.assert_allclose(cylinder_point(ifs, (1, 2), np.zeros(1)), [2 / 9])
        assert diameter_bound(ifs, (1, 2)) == pytest.approx(2 / 9)


class TestAttractorCloud:
    def test_cantor_level_two(self) -> None:
        sut = attractor_cloud(IfsSpec.cantor(), 2, np.zeros(1))

        assert repr(sut) == 'Cloud(level=2, atoms=4)'
        np.testing.assert_allclose(sut.points.ravel(), [0.0, 2 / 9, 2 / 3, 8 / 9], atol=1e-15)
        assert [sut.word(i) for i in range(4)] == [(1, 1), (1, 2), (2, 1), (2, 2)]
        np.testing.assert_allclose(sut.ratios, np.full(4, 1 / 9))

    def test_points_match_cylinder_points(self) -> None:
        ifs = IfsSpec.rotating_corners(0.4, 1.0)

        sut = attractor_cloud(ifs, 3)

        for _ in range(10):
            index = randint(0, len(sut) - 1)
            np.testing.assert_allclose(sut.points[index], cylinder_point(ifs, sut.word(index)), atol=1e-12)

    def test_index_points_match_cloud(self) -> None:
        ifs = IfsSpec.rotating_corners(0.4, 1.0)
        cloud = attractor_cloud(ifs, 4)

        sut = index_points(ifs, np.arange(len(cloud), dtype=np.int64), 4)

        np.testing.assert_allclose(sut, cloud.points, atol=1e-12)

    def test_cap(self) -> None:
        with pytest.raises(CapExceeded):
            attractor_cloud(IfsSpec.square_grid(2), 6, cap=1000)
        with pytest.raises(ValueError, match='non-negative'):
            attractor_cloud(IfsSpec.cantor(), -1)
