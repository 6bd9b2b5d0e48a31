import json
import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import make_case
from pycasetime.data_model import Dataset
from pycasetime.ensembles import BoostParams, ForestParams
from pycasetime.errors import (
    DegenerateInput,
    DomainViolation,
    EmptyInput,
    ModelFitError,
    StratumTooSmall,
)
from pycasetime.evaluation import (
    OVERALL,
    cross_validate,
    histogram_data,
    make_folds,
    ols_fit,
    pearson,
    skewness_summary,
    summarize,
    weight_age_relation,
)
from pycasetime.metric import MetricParams
from pycasetime.predictors import Hyperparams, MethodId
from pycasetime.synth import SynthConfig, synth_generate

FAST = Hyperparams(
    forest=ForestParams(n_trees=5, max_features=6),
    boost=BoostParams(n_estimators=5),
)


def _dataset(n: int, procedures: int = 1) -> Dataset:
    return Dataset(tuple(make_case(f"c{i}", procedure_name=f"P{i % procedures}") for i in range(n)))


class TestMakeFolds:
    def test_single_stratum_sizes(self):
        plan = make_folds(_dataset(917), repeats=1, k=5)
        sizes = sorted((len(plan.test_indices(0, f)) for f in range(5)), reverse=True)
        assert sizes == [184, 184, 183, 183, 183]

    def test_stratified_totals_stay_balanced(self):
        plan = make_folds(_dataset(917, procedures=12), repeats=2, k=5, seed=4)
        for r in range(2):
            sizes = [len(plan.test_indices(r, f)) for f in range(5)]
            assert max(sizes) - min(sizes) <= 1

    def test_strata_dealt_evenly(self, small_dataset):
        plan = make_folds(small_dataset, repeats=1, k=5)
        procs = np.array([case.procedure_name for case in small_dataset])
        for name in small_dataset.procedures:
            counts = np.bincount(plan.fold_of[0][procs == name], minlength=5)
            assert counts.max() - counts.min() <= 1

    def test_leave_one_out(self):
        ds = _dataset(7)
        plan = make_folds(ds, repeats=1, k=7, stratify=False)
        assert all(len(plan.test_indices(0, f)) == 1 for f in range(7))

    def test_deterministic(self, small_dataset):
        a = make_folds(small_dataset, seed=8)
        b = make_folds(small_dataset, seed=8)
        c = make_folds(small_dataset, seed=9)
        assert a.same_as(b)
        assert not a.same_as(c)
        assert a.assignment == b.assignment

    def test_repeats_reshuffle(self, small_dataset):
        plan = make_folds(small_dataset, repeats=2)
        assert not np.array_equal(plan.fold_of[0], plan.fold_of[1])

    def test_partition(self, default_synth):
        ds = default_synth.dataset
        plan = make_folds(ds)
        tested = np.zeros(len(ds), dtype=int)
        for r, f in plan.cells():
            test = plan.test_indices(r, f)
            train = plan.train_indices(r, f)
            assert not set(test) & set(train)
            assert len(test) + len(train) == len(ds)
            tested[test] += 1
        assert np.all(tested == 5)

    def test_stratum_too_small(self):
        ds = Dataset(tuple(make_case(f"a{i}", procedure_name="A") for i in range(10)) + (make_case("b", procedure_name="B"),))
        with pytest.raises(StratumTooSmall) as excinfo:
            make_folds(ds, k=5)
        assert excinfo.value.procedure_name == "B"
        assert excinfo.value.size == 1

    def test_invalid_shape(self, small_dataset):
        with pytest.raises(DomainViolation):
            make_folds(small_dataset, k=1)
        with pytest.raises(DomainViolation):
            make_folds(small_dataset, repeats=0)


@pytest.fixture(scope="module")
def report(small_dataset):
    plan = make_folds(small_dataset, repeats=2, k=5, seed=1)
    methods = [MethodId.AVG, MethodId.SCH, MethodId.DTR, MethodId.RFR_SCH, MethodId.ABR]
    return cross_validate(small_dataset, methods, plan, MetricParams(), FAST)


class TestCrossValidate:
    def test_shape(self, report, small_dataset):
        assert len(report.accuracy) == len(report.methods) * (len(small_dataset.procedures) + 1)
        assert report.groups[0] == OVERALL
        for stat in report.accuracy.values():
            assert 0.0 <= stat.mean <= 1.0
            assert stat.n_cells == 10
            assert stat.se_sqrt_cells == pytest.approx(stat.se / math.sqrt(10))

    def test_summary_counts_add_up(self, report, small_dataset):
        assert report.summary[OVERALL].n == len(small_dataset)
        assert sum(report.summary[name].n for name in report.procedures) == len(small_dataset)

    def test_importance_normalized(self, report):
        assert set(report.importance) == {MethodId.DTR, MethodId.RFR_SCH, MethodId.ABR}
        for method, scores in report.importance.items():
            total = sum(scores.values())
            assert total == pytest.approx(1.0, abs=1e-9) or total == 0.0
            assert all(score >= 0 for score in scores.values())
            assert sum(report.grouped_importance[method].values()) == pytest.approx(total)
        assert "expert_prediction_log" in report.importance[MethodId.RFR_SCH]
        assert "expert_prediction_log" not in report.importance[MethodId.DTR]

    def test_out_of_fold_pairs(self, report, small_dataset):
        for method in report.methods:
            assert len(report.oof_pairs[method]) == 2 * len(small_dataset)

    def test_frames(self, report):
        table = report.accuracy_frame()
        assert list(table.columns[:4]) == ["procedure", "N", "mean_min", "sd_min"]
        assert "RFR-SCH SE" in table.columns
        assert table["procedure"].iloc[0] == OVERALL
        importance = report.importance_frame()
        assert list(importance.columns) == ["feature", "DTR", "RFR-SCH", "ABR"]

    def test_sweep(self, report):
        frame = report.sweep([0.1, 0.3, 0.5])
        assert list(frame["p"]) == [0.1, 0.3, 0.5]
        for method in report.methods:
            values = list(frame[method.label])
            assert values == sorted(values)

    def test_to_dict_is_strict_json(self, report):
        doc = report.to_dict()
        text = json.dumps(doc, allow_nan=False)
        assert json.loads(text)["methods"] == ["AVG", "SCH", "DTR", "RFR-SCH", "ABR"]
        assert doc["ranking_chain"] == report.ranking_chain()

    def test_win_count_bounds(self, report):
        wins = report.win_count(MethodId.AVG, MethodId.RFR_SCH)
        assert 0 <= wins <= len(report.procedures)
        assert report.win_count(MethodId.AVG, MethodId.AVG) == 0

    def test_win_matrix_in_report(self, report):
        matrix = report.to_dict()["win_counts"]
        assert list(matrix) == [method.label for method in report.methods]
        assert "AVG" not in matrix["AVG"]
        assert matrix["AVG"]["RFR-SCH"] == report.win_count(MethodId.AVG, MethodId.RFR_SCH)
        assert matrix["RFR-SCH"]["AVG"] == report.win_count(MethodId.RFR_SCH, MethodId.AVG)
        # 严格胜出: 同一手术不会在两个方向上同时计数
        assert matrix["AVG"]["SCH"] + matrix["SCH"]["AVG"] <= len(report.procedures)

        frame = report.wins_frame()
        assert list(frame.columns) == ["baseline"] + [method.label for method in report.methods]
        for i, baseline in enumerate(report.methods):
            assert frame.loc[i, baseline.label] == 0
            for challenger, n in matrix[baseline.label].items():
                assert frame.loc[i, challenger] == n


def test_noiseless_expert_is_perfect():
    ds = synth_generate(
        SynthConfig(n_procedures=3, cases_per_procedure=10, log_noise_sigma=0.0, expert_noise_sigma=0.0)
    ).dataset
    report = cross_validate(ds, [MethodId.SCH], make_folds(ds, repeats=2), MetricParams())
    assert all(stat.mean == 1.0 for stat in report.accuracy.values())
    assert report.stat(MethodId.SCH).se == 0.0


def test_expert_column_does_not_leak(small_dataset):
    poisoned = Dataset(
        tuple(replace(case, expert_prediction=case.expert_prediction * 7.0) for case in small_dataset),
        small_dataset.provenance,
    )
    methods = [MethodId.AVG, MethodId.DTR]
    clean = cross_validate(small_dataset, methods, make_folds(small_dataset, repeats=1), MetricParams())
    dirty = cross_validate(poisoned, methods, make_folds(poisoned, repeats=1), MetricParams())
    for key, stat in clean.accuracy.items():
        assert dirty.accuracy[key].mean == stat.mean


def test_parallel_matches_serial(small_dataset):
    plan = make_folds(small_dataset, repeats=1, seed=2)
    methods = [MethodId.RFR, MethodId.ABR_SCH]
    serial = cross_validate(small_dataset, methods, plan, MetricParams(), FAST, n_jobs=1)
    parallel = cross_validate(small_dataset, methods, plan, MetricParams(), FAST, n_jobs=2)
    assert serial.to_dict() == parallel.to_dict()


def test_fit_errors_carry_cell_context():
    cases = [make_case(f"c{i}", actual_duration=30.0 + i) for i in range(10)]
    cases[3] = replace(cases[3], expert_prediction=None)
    ds = Dataset(tuple(cases))
    with pytest.raises(ModelFitError) as excinfo:
        cross_validate(ds, [MethodId.SCH], make_folds(ds, repeats=1), MetricParams())
    assert excinfo.value.method == "SCH"
    assert excinfo.value.repeat == 0


def test_plan_from_other_dataset(small_dataset):
    plan = make_folds(_dataset(20), repeats=1)
    with pytest.raises(DomainViolation):
        cross_validate(small_dataset, [MethodId.AVG], plan)
    with pytest.raises(EmptyInput):
        cross_validate(small_dataset, [], make_folds(small_dataset, repeats=1))


class TestStatistics:
    def test_pearson(self):
        assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    @pytest.mark.parametrize("xs, ys", [([1, 1, 1], [1, 2, 3]), ([1, 2, 3], [5, 5, 5]), ([1], [2]), ([1, 2], [1, 2, 3])])
    def test_pearson_degenerate(self, xs, ys):
        with pytest.raises(DegenerateInput):
            pearson(xs, ys)

    def test_ols(self):
        slope, intercept = ols_fit([0, 1, 2], [-0.5, 1.0, 2.5])
        assert slope == pytest.approx(1.5)
        assert intercept == pytest.approx(-0.5)

    def test_ols_constant_y(self):
        slope, intercept = ols_fit([0, 1, 2], [4.0, 4.0, 4.0])
        assert slope == pytest.approx(0.0)
        assert intercept == pytest.approx(4.0)

    def test_histogram(self):
        bins = histogram_data([1, 2, 3, 4], bins=3)
        assert [count for _, _, count in bins] == [1, 1, 2]
        assert bins[0][0] == 1.0 and bins[-1][1] == 4.0

    def test_histogram_log(self):
        bins = histogram_data([1, math.e, math.e ** 2], bins=2, log_scale=True)
        assert bins[0][0] == pytest.approx(0.0)
        assert bins[-1][1] == pytest.approx(2.0)
        assert sum(count for _, _, count in bins) == 3

    def test_histogram_errors(self):
        with pytest.raises(EmptyInput):
            histogram_data([])
        with pytest.raises(DomainViolation):
            histogram_data([0.0, 1.0], log_scale=True)

    def test_summarize(self):
        ds = Dataset((
            make_case("a", procedure_name="A", actual_duration=10.0),
            make_case("b", procedure_name="A", actual_duration=20.0),
            make_case("c", procedure_name="B", actual_duration=30.0),
        ))
        summary = summarize(ds)
        assert list(summary) == [OVERALL, "A", "B"]
        assert summary["A"].mean == 15.0
        assert summary["A"].sd == pytest.approx(math.sqrt(50.0))
        assert summary[OVERALL].sd == pytest.approx(10.0)
        assert summary["B"].sd == 0.0 and summary["B"].degenerate

    def test_summarize_empty(self):
        with pytest.raises(EmptyInput):
            summarize(Dataset(()))

    def test_skewness_skips_tiny_procedures(self, small_dataset):
        tiny = Dataset(small_dataset.cases + (make_case("tiny", procedure_name="Tiny"),))
        assert "Tiny" not in skewness_summary(tiny)

    def test_weight_age(self, default_synth):
        relation = weight_age_relation(default_synth.dataset)
        assert relation.slope > 0
        assert len(relation.ages) == len(default_synth.dataset)


@pytest.mark.slow
def test_default_synthetic_ordering(default_synth):
    ds = default_synth.dataset
    report = cross_validate(ds, list(MethodId), make_folds(ds), MetricParams(), Hyperparams(), n_jobs=-1)

    def overall(method):
        return report.stat(method).mean

    margin = 0.02
    assert overall(MethodId.RFR) - overall(MethodId.AVG) >= margin
    assert overall(MethodId.ABR) - overall(MethodId.AVG) >= margin
    assert overall(MethodId.RFR_SCH) - overall(MethodId.SCH) >= margin
    assert overall(MethodId.ABR_SCH) - overall(MethodId.SCH) >= margin
    for scores in report.importance.values():
        assert sum(scores.values()) == pytest.approx(1.0, abs=1e-9)
