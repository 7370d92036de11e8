from math import log

import numpy as np
import pytest

from pycascade.cascade.percolation import SubsetLaw, percolation_exponent, percolation_weights
from pycascade.cascade.realization import CascadeRealization, cascade_measure
from pycascade.cascade.weights import DiscreteWeights, bernoulli_weights, theoretical_alpha
from pycascade.errors import EmptyBall
from pycascade.ifs import IfsSpec
from pycascade.measures.conditional import (
    INFORMATION_CAP,
    LlnReport,
    PathMap,
    PathSample,
    PeyriereEstimate,
    conditional_entropy,
    conditional_information,
    lln_diagnostics,
    peyriere_expectation,
)
from pycascade.measures.discrete import DiscreteMeasure

OVERLAP = IfsSpec.exact_overlap()
CANTOR = IfsSpec.cantor()


def bernoulli_measure(ifs: IfsSpec, level: int) -> DiscreteMeasure:
    return cascade_measure(CascadeRealization(bernoulli_weights(ifs), 0), ifs, level)


class TestPathMap:
    def test_identity(self) -> None:
        points = np.array([[1.0, 2.0]])

        assert repr(PathMap.identity()) == 'PathMap(identity)'
        assert PathMap.identity()(points) is points

    def test_projection(self) -> None:
        sut = PathMap.projection(np.array([[1.0, 0.0]]), np.array([[0.0, -1.0], [1.0, 0.0]]))

        assert repr(sut) == 'PathMap(2 -> 1)'
        np.testing.assert_allclose(sut(np.array([[1.0, 2.0], [3.0, 5.0]])), [[-2.0], [-5.0]])


class TestConditionalInformation:
    def test_exact_overlap(self) -> None:
        measure = bernoulli_measure(OVERLAP, 6)

        for n in range(7):
            value, capped = conditional_information(measure, 17, n)
            assert value == pytest.approx(log(2))
            assert not capped

    def test_separated(self) -> None:
        measure = bernoulli_measure(CANTOR, 6)

        assert conditional_information(measure, 5, 0)[0] == pytest.approx(log(2))
        for n in range(1, 7):
            assert conditional_information(measure, 5, n) == (0.0, False)

    def test_projected_overlap(self) -> None:
        # Both columns of the product set project onto the same points of the x-axis.
        ifs = IfsSpec.cantor_product()
        measure = bernoulli_measure(ifs, 4)
        sut = PathMap.projection(np.array([[1.0, 0.0]]))

        value, _ = conditional_information(measure, 0, 2, sut)

        assert value == pytest.approx(log(2))
        assert conditional_information(measure, 0, 2)[0] == pytest.approx(0.0)

    def test_capped(self) -> None:
        measure = DiscreteMeasure(
            points=np.array([[0.0], [0.1]]),
            masses=np.array([0.0, 1.0]),
            words=np.array([[1], [2]], dtype=np.int32),
            radius=1.0,
            ifs_ratios=np.array([0.5, 0.5]),
        )

        assert conditional_information(measure, 0, 1) == (INFORMATION_CAP, True)

    def test_empty_ball(self) -> None:
        measure = DiscreteMeasure(
            points=np.array([[0.0], [0.1]]),
            masses=np.zeros(2),
            words=np.array([[1], [2]], dtype=np.int32),
            radius=1.0,
            ifs_ratios=np.array([0.5, 0.5]),
        )

        with pytest.raises(EmptyBall):
            conditional_information(measure, 0, 1)

    def test_requirements(self) -> None:
        measure = bernoulli_measure(CANTOR, 3)

        with pytest.raises(ValueError, match='exceeds'):
            conditional_information(measure, 0, 4)
        with pytest.raises(ValueError, match='word labels'):
            conditional_information(DiscreteMeasure.point_mass(np.zeros(1)), 0, 0)


class TestPeyriere:
    def test_constant_functional(self) -> None:
        def one(_: PathSample) -> float:
            return 1.0

        sut = peyriere_expectation(
            DiscreteWeights(probabilities=np.array([0.5, 0.5]), vectors=np.array([[1.0, 0.5], [0.0, 0.5]])),
            CANTOR,
            one,
            4,
            30,
            0,
        )

        assert sut.value == pytest.approx(1.0)
        assert sut.values.shape == (30,)
        assert sut.weights.mean() == pytest.approx(1.0)

    def test_path_words(self) -> None:
        words = []

        def record(sample: PathSample) -> float:
            words.append(sample.word)
            return float(len(sample.word))

        sut = peyriere_expectation(bernoulli_weights(CANTOR), CANTOR, record, 3, 10, 1, threads=1)

        assert sut.value == 3.0
        assert sut.rejections == 0
        assert all(len(word) == 3 and set(word) <= {1, 2} for word in words)

    def test_rejections_are_counted(self) -> None:
        dying = DiscreteWeights(probabilities=np.array([0.5, 0.5]), vectors=np.array([[0.0, 0.0], [1.0, 1.0]]))

        sut = peyriere_expectation(dying, CANTOR, lambda _: 0.0, 2, 20, 0)

        assert sut.rejections > 0

    def test_single_sample(self) -> None:
        sut = PeyriereEstimate(values=np.array([2.0]), weights=np.ones(1), rejections=0)

        assert sut.value == 2.0
        assert sut.stderr == 0.0


class TestConditionalEntropy:
    def test_overlap_entropy(self) -> None:
        model = bernoulli_weights(OVERLAP)

        sut = conditional_entropy(model, OVERLAP, PathMap.identity(), 3, 8, 0)

        assert sut.value == pytest.approx(log(2))
        assert sut.reliable
        assert sut.saturated == 0.0
        assert theoretical_alpha(model, OVERLAP.ratios, sut.value) == pytest.approx(0.0, abs=1e-9)

    def test_separated_entropy(self) -> None:
        model = bernoulli_weights(CANTOR)

        sut = conditional_entropy(model, CANTOR, PathMap.identity(), 4, 8, 0)

        assert sut.value == pytest.approx(0.0)
        assert theoretical_alpha(model, CANTOR.ratios, sut.value) == pytest.approx(log(2) / log(3))
        assert sut.to_summary()['reliable'] is True


class TestLln:
    def test_percolation_spine_agrees(self) -> None:
        ifs = IfsSpec.square_grid(2)
        law = SubsetLaw.independent(0.7, 4)
        model = percolation_weights(law, ifs.ratios, percolation_exponent(law, ifs.ratios))

        sut = lln_diagnostics(model, ifs.ratios, range(10, 21), 200, 0)

        assert sut.agrees
        assert sut.mass_slope == pytest.approx(model.alpha * log(0.5))
        assert sut.ratio_slope == pytest.approx(log(0.5))
        assert sut.to_summary()['agrees'] is True

    def test_disagreement(self) -> None:
        sut = LlnReport(
            depths=np.arange(10.0, 21.0),
            mass_slope=-1.0,
            mass_stderr=0.01,
            ratio_slope=-2.0,
            ratio_stderr=0.01,
            expected_mass=-1.5,
            expected_ratio=-2.0,
        )

        assert not sut.agrees
