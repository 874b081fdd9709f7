import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from apishift.core import (Allocation, ConfusionMatrix, Dimensions, LabelDistribution, PartitionWeights,
                           ShiftMatrix, WeightMatrix, continuous_optimal_allocation, expected_loss_closed_form,
                           optimal_loss, shift_between, weighted_frobenius_sq)
from apishift.errors import ConstructionError, DimensionError, UndefinedLossError

NEW = [[0.54, 0.06], [0.08, 0.32]]
OLD = [[0.5, 0.1], [0.1, 0.3]]
DELTA = [[0.04, -0.04], [-0.02, 0.02]]


def random_confusion(rng, L):
    m = rng.random((L, L))
    return ConfusionMatrix(m / m.sum())


class TestTypes:
    def test_dimensions(self):
        assert Dimensions(3, 2).n_partitions == 6
        with pytest.raises(ConstructionError):
            Dimensions(1, 1)
        with pytest.raises(ConstructionError):
            Dimensions(2, 0)

    def test_confusion_rejects_bad_sum(self):
        with pytest.raises(ConstructionError):
            ConfusionMatrix([[0.5, 0.1], [0.1, 0.2]])
        ConfusionMatrix(np.array(OLD) + 1e-10 / 4)

    def test_confusion_rejects_non_square(self):
        with pytest.raises(DimensionError):
            ConfusionMatrix([[0.5, 0.5]])

    def test_partition_weights_reject_zero_mass(self):
        with pytest.raises(ConstructionError, match="zero mass"):
            PartitionWeights([[0.5, 0.0], [0.25, 0.25]])

    def test_partition_weights_sum(self):
        with pytest.raises(ConstructionError):
            PartitionWeights([[0.5], [0.4]])
        assert PartitionWeights([0.5, 0.5]).p.shape == (2, 1)

    def test_label_distribution(self):
        LabelDistribution([0.7, 0.2, 0.1])
        with pytest.raises(ConstructionError):
            LabelDistribution([0.7, 0.2, 0.2])

    def test_weights_not_all_zero(self):
        with pytest.raises(ConstructionError):
            WeightMatrix(np.zeros((2, 2)))
        with pytest.raises(ConstructionError):
            WeightMatrix([[1.0, -1.0], [0.0, 1.0]])

    def test_allocation(self):
        a = Allocation([[3, 1], [0, 2]])
        assert a.N == 6
        with pytest.raises(ConstructionError):
            Allocation([[1.5, 1]])
        with pytest.raises(ConstructionError):
            Allocation([[-1, 1]])

    def test_values_are_immutable(self):
        c = ConfusionMatrix(OLD)
        with pytest.raises(ValueError):
            c.entries[0, 0] = 1.0


class TestShiftBetween:
    def test_identity(self):
        assert np.all(shift_between(ConfusionMatrix(OLD), ConfusionMatrix(OLD)).entries == 0)

    def test_hand_example(self):
        d = shift_between(ConfusionMatrix(NEW), ConfusionMatrix(OLD))
        np.testing.assert_allclose(d.entries, DELTA, atol=1e-15)

    def test_accuracy_drop_of_seven_points(self):
        # 3-class API whose overall accuracy falls from 0.85 to 0.78
        old = np.array([[0.30, 0.02, 0.01], [0.03, 0.25, 0.02], [0.01, 0.06, 0.30]])
        new = np.array([[0.28, 0.04, 0.01], [0.05, 0.22, 0.03], [0.02, 0.07, 0.28]])
        d = shift_between(ConfusionMatrix(new), ConfusionMatrix(old))
        assert d.accuracy_change == pytest.approx(-0.07, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            shift_between(ConfusionMatrix(OLD), ConfusionMatrix(np.full((3, 3), 1 / 9)))

    @pytest.mark.parametrize("L", [2, 5, 31])
    def test_trace_is_accuracy_change(self, rng, L):
        for _ in range(20):
            a, b = random_confusion(rng, L), random_confusion(rng, L)
            assert shift_between(a, b).accuracy_change == pytest.approx(a.accuracy - b.accuracy, abs=1e-12)


class TestWeightedFrobenius:
    def test_zero(self):
        assert weighted_frobenius_sq(ShiftMatrix(np.zeros((3, 3))), WeightMatrix.ones(3)) == 0.0

    def test_all_ones(self):
        assert weighted_frobenius_sq(ShiftMatrix(DELTA), WeightMatrix.ones(2)) == pytest.approx(0.004, abs=1e-15)

    def test_identity_counts_only_accuracy(self):
        assert weighted_frobenius_sq(ShiftMatrix(DELTA), WeightMatrix(np.eye(2))) == pytest.approx(0.002, abs=1e-15)

    def test_single_cell(self):
        W = np.zeros((2, 2))
        W[0, 1] = 1.0
        assert weighted_frobenius_sq(ShiftMatrix(DELTA), WeightMatrix(W)) == pytest.approx(0.0016)

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            weighted_frobenius_sq(ShiftMatrix(DELTA), WeightMatrix.ones(3))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (4, 4), elements=st.floats(-1, 1)))
    def test_ones_is_plain_frobenius(self, d):
        plain = np.linalg.norm(d, "fro") ** 2
        assert weighted_frobenius_sq(ShiftMatrix(d), WeightMatrix.ones(4)) == pytest.approx(plain, abs=1e-12)


class TestClosedForm:
    P = np.array([0.5, 0.5])
    SIG = np.array([0.3, 0.1])

    def test_zero_sigma(self):
        assert expected_loss_closed_form(Allocation([3, 9]), self.P, [0.0, 0.0]) == 0.0
        assert optimal_loss(100, self.P, [0.0, 0.0]) == 0.0

    def test_hand_values(self):
        assert expected_loss_closed_form(Allocation([75, 25]), self.P, self.SIG) == pytest.approx(4.0e-4, rel=1e-12)
        assert expected_loss_closed_form(Allocation([50, 50]), self.P, self.SIG) == pytest.approx(5.0e-4, rel=1e-12)
        assert optimal_loss(100, self.P, self.SIG) == pytest.approx(4.0e-4, rel=1e-12)

    def test_doubling_budget_halves(self):
        assert optimal_loss(200, self.P, self.SIG) == optimal_loss(100, self.P, self.SIG) / 2

    def test_undefined_when_unsampled(self):
        with pytest.raises(UndefinedLossError):
            expected_loss_closed_form(Allocation([100, 0]), self.P, self.SIG)
        # zero-uncertainty partitions may stay empty
        assert expected_loss_closed_form(Allocation([100, 0]), self.P, [0.3, 0.0]) > 0

    def test_optimal_loss_precondition(self):
        with pytest.raises(UndefinedLossError):
            optimal_loss(0, self.P, self.SIG)

    def test_continuous_optimum_attains_optimal_loss(self, rng):
        for _ in range(200):
            P = rng.dirichlet(np.ones(6))
            sig = rng.random(6) * 0.9
            N = int(rng.integers(1, 10_000))
            real = continuous_optimal_allocation(N, P, sig)
            assert expected_loss_closed_form(real, P, sig) == pytest.approx(optimal_loss(N, P, sig), rel=1e-12, abs=1e-300)

    def test_integer_allocations_never_beat_relaxation(self, rng):
        for _ in range(10):
            n_parts = int(rng.integers(2, 5))
            P = rng.dirichlet(np.ones(n_parts))
            sig = rng.random(n_parts) * 0.9 + 0.01
            for N in range(n_parts, 17):
                opt = optimal_loss(N, P, sig)
                for split in itertools.product(range(1, N + 1), repeat=n_parts):
                    if sum(split) == N:
                        assert expected_loss_closed_form(np.array(split), P, sig) >= opt * (1 - 1e-12)
