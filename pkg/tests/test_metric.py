import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pycasetime.errors import DomainViolation, EmptyInput
from pycasetime.metric import (
    DEFAULT_P_GRID,
    MetricParams,
    PredictionPair,
    accuracy,
    average_error,
    epsilon_bound,
    loss,
    loss_array,
    sweep_methods,
    sweep_p,
    tau_curve,
    tolerance,
)

durations = st.floats(min_value=1.0, max_value=600.0, allow_nan=False)


class TestTolerance:
    @pytest.mark.parametrize("y_hat, tau", [(150, 30), (20, 15), (500, 60), (75, 15), (300, 60)])
    def test_defaults(self, y_hat, tau):
        assert tolerance(y_hat) == tau

    def test_non_positive(self):
        with pytest.raises(DomainViolation):
            tolerance(0.0)

    @given(
        y_hat=st.floats(min_value=1e-3, max_value=1e4),
        p=st.floats(min_value=0.01, max_value=0.99),
        m=st.floats(min_value=0.0, max_value=100.0),
        span=st.floats(min_value=0.5, max_value=200.0),
    )
    def test_within_floor_and_cap(self, y_hat, p, m, span):
        params = MetricParams(p, m, m + span)
        assert params.m <= tolerance(y_hat, params) <= params.M

    @pytest.mark.parametrize("p, m, M", [(0.0, 15, 60), (1.0, 15, 60), (0.2, -1, 60), (0.2, 60, 60)])
    def test_invalid_params(self, p, m, M):
        with pytest.raises(DomainViolation):
            MetricParams(p, m, M)


class TestLoss:
    def test_hypotheticals(self):
        assert loss(165, 150) == 0
        assert loss(35, 20) == 1

    def test_boundary_counts_as_inaccurate(self):
        assert loss(180, 150) == 1
        assert loss(120, 150) == 1
        assert loss(179.999, 150) == 0

    def test_not_symmetric(self):
        # 容差取决于预测值，交换实际值与预测值可能改变结果
        assert loss(124, 100) == 1
        assert loss(100, 124) == 0

    def test_asymmetric_pairs_are_common(self):
        rng = np.random.default_rng(11)
        witness = None
        for _ in range(10_000):
            y, y_hat = rng.uniform(5, 400, 2)
            if loss(y, y_hat) != loss(y_hat, y):
                witness = (y, y_hat)
                break
        assert witness is not None

    def test_non_positive_actual(self):
        with pytest.raises(DomainViolation):
            loss(0.0, 30.0)

    def test_loss_array_matches_scalar(self):
        rng = np.random.default_rng(0)
        y = rng.uniform(5, 300, 200)
        y_hat = rng.uniform(5, 300, 200)
        expected = [loss(a, b) for a, b in zip(y, y_hat)]
        assert list(loss_array(y, y_hat)) == expected


class TestAccuracy:
    def test_mixed(self):
        pairs = [PredictionPair(165, 150), PredictionPair(35, 20)]
        assert accuracy(pairs) == 0.5
        assert average_error(pairs) == 0.5

    def test_empty(self):
        with pytest.raises(EmptyInput):
            accuracy([])

    def test_pair_rejects_non_positive(self):
        with pytest.raises(DomainViolation):
            PredictionPair(0.0, 10.0)

    @given(st.lists(st.tuples(durations, durations), min_size=1, max_size=50))
    def test_accuracy_and_error_complement(self, raw):
        pairs = [PredictionPair(y, y_hat) for y, y_hat in raw]
        acc = accuracy(pairs)
        assert 0.0 <= acc <= 1.0
        assert math.isclose(acc + average_error(pairs), 1.0, abs_tol=1e-15)


class TestEpsilon:
    def test_equals_log1p(self):
        for p in (0.05, 0.2, 0.5, 0.9):
            assert epsilon_bound(p) == pytest.approx(math.log(1 + p))

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.5])
    def test_domain(self, p):
        with pytest.raises(DomainViolation):
            epsilon_bound(p)

    def test_log_space_implication(self):
        rng = np.random.default_rng(2024)
        params = MetricParams()
        checked = 0
        while checked < 10_000:
            y_hat = rng.uniform(1.0, params.M / params.p)
            y = y_hat * math.exp(rng.uniform(-0.4, 0.4))
            if (math.log(y) - math.log(y_hat)) ** 2 < epsilon_bound(params.p) ** 2:
                assert loss(y, y_hat, params) == 0
                checked += 1

    @given(
        p=st.floats(min_value=0.01, max_value=0.99),
        y_hat=st.floats(min_value=0.5, max_value=300.0),
        ratio=st.floats(min_value=-1.0, max_value=1.0),
    )
    @settings(max_examples=500)
    def test_implication_property(self, p, y_hat, ratio):
        M = max(p * y_hat, 1.0) + 1.0
        params = MetricParams(p, 0.0, M)
        y = y_hat * math.exp(ratio * epsilon_bound(p) * 0.999)
        assert loss(y, y_hat, params) == 0


class TestSweep:
    def test_monotone_in_p(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 60))
            y = rng.lognormal(3.5, 0.5, n)
            y_hat = y * rng.lognormal(0.0, 0.3, n)
            pairs = [PredictionPair(a, b) for a, b in zip(y, y_hat)]
            curve = sweep_p(pairs, sorted(rng.uniform(0.01, 0.99, 8)))
            values = [acc for _, acc in curve]
            assert values == sorted(values)

    @staticmethod
    def _random_pairs(rng):
        n = int(rng.integers(1, 60))
        y = rng.lognormal(3.8, 0.6, n)
        y_hat = y * rng.lognormal(0.0, 0.3, n)
        return [PredictionPair(a, b) for a, b in zip(y, y_hat)]

    def test_monotone_in_floor(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            pairs = self._random_pairs(rng)
            floors = sorted(rng.uniform(0.0, 59.0, 8))
            values = [accuracy(pairs, MetricParams(0.2, m, 60.0)) for m in floors]
            assert values == sorted(values)

    def test_monotone_in_cap(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            pairs = self._random_pairs(rng)
            caps = sorted(rng.uniform(15.5, 200.0, 8))
            values = [accuracy(pairs, MetricParams(0.2, 15.0, M)) for M in caps]
            assert values == sorted(values)

    def test_default_grid(self):
        curve = sweep_p([PredictionPair(100, 100)])
        assert [p for p, _ in curve] == pytest.approx([0.05 * i for i in range(1, 11)])
        assert len(DEFAULT_P_GRID) == 10

    def test_sorted_output(self):
        curve = sweep_p([PredictionPair(100, 90)], [0.5, 0.1, 0.3])
        assert [p for p, _ in curve] == [0.1, 0.3, 0.5]

    def test_empty(self):
        with pytest.raises(EmptyInput):
            sweep_p([])

    def test_sweep_methods_columns(self):
        curves = sweep_methods({"A": [PredictionPair(100, 100)], "B": [PredictionPair(100, 10)]}, [0.2])
        assert curves == {"A": [(0.2, 1.0)], "B": [(0.2, 0.0)]}


def test_tau_curve_is_clamped():
    points = tau_curve(MetricParams(), y_hat_max=400, n_points=50)
    assert len(points) == 50
    assert all(15 <= tau <= 60 for _, tau in points)
    assert points[-1] == (400.0, 60.0)
