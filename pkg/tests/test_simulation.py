import numpy as np
import pytest

from labelshift.errors import InputError
from labelshift.predictors import GmmSpec
from labelshift.simplex import ProbVector
from labelshift.simulation import (
    AggregateRow,
    ExperimentConfig,
    ShiftSpec,
    aggregate_to_csv,
    resample_by_marginal,
    rng_for,
    run_single_trial,
    run_trials,
    sample_dirichlet_shift,
    sample_gmm,
    target_table_from_outputs,
)

UNIFORM_2 = ProbVector(np.array([0.5, 0.5]))
GMM = GmmSpec(mu=1.0, source_marginal=UNIFORM_2)


def small_config(**overrides):
    base = dict(
        gmm=GMM,
        shifts=(ShiftSpec(mode="dirichlet", alpha=1.0),),
        methods=("bbse_hard", "mlls_em"),
        m_values=(200,),
        n_trials=2,
        base_seed=42,
        n_source=300,
        tol=1e-6,
        max_iters=2000,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRngStreams:
    def test_same_keys_same_stream(self):
        a = rng_for(7, 1, 2).random(5)
        b = rng_for(7, 1, 2).random(5)
        np.testing.assert_array_equal(a, b)

    def test_different_keys_differ(self):
        a = rng_for(7, 1, 2).random(5)
        b = rng_for(7, 1, 3).random(5)
        assert not np.array_equal(a, b)

    def test_base_seed_matters(self):
        a = rng_for(7, 1).random(5)
        b = rng_for(8, 1).random(5)
        assert not np.array_equal(a, b)


class TestSampling:
    def test_gmm_is_deterministic(self):
        xs1, ys1 = sample_gmm(GMM, UNIFORM_2, 100, 5, 0)
        xs2, ys2 = sample_gmm(GMM, UNIFORM_2, 100, 5, 0)
        np.testing.assert_array_equal(xs1, xs2)
        np.testing.assert_array_equal(ys1, ys2)

    def test_gmm_class_means(self):
        xs, ys = sample_gmm(GMM, UNIFORM_2, 50_000, 11, 0)
        assert xs[ys == 0].mean() == pytest.approx(1.0, abs=0.05)
        assert xs[ys == 1].mean() == pytest.approx(-1.0, abs=0.05)
        assert ys.mean() == pytest.approx(0.5, abs=0.02)

    def test_gmm_respects_marginal(self):
        skew = ProbVector(np.array([0.9, 0.1]))
        _, ys = sample_gmm(GMM, skew, 50_000, 13, 0)
        assert ys.mean() == pytest.approx(0.1, abs=0.01)

    def test_dirichlet_shift_simplex(self):
        q = sample_dirichlet_shift(0.5, 4, 3, 0)
        assert q.k == 4
        assert q.entries.sum() == pytest.approx(1.0)

    def test_dirichlet_shift_rejects_bad_alpha(self):
        with pytest.raises(InputError):
            sample_dirichlet_shift(0.0, 3, 3, 0)

    def test_resample_matches_marginal(self):
        xs = np.concatenate([np.ones(100), -np.ones(100)])
        ys = np.concatenate([np.zeros(100, int), np.ones(100, int)])
        marginal = ProbVector(np.array([0.8, 0.2]))
        rx, ry = resample_by_marginal(xs, ys, marginal, 20_000, 1, 0)
        assert ry.mean() == pytest.approx(0.2, abs=0.01)
        assert set(np.unique(rx)) <= {1.0, -1.0}

    def test_resample_missing_class_rejected(self):
        xs, ys = np.ones(10), np.zeros(10, int)
        with pytest.raises(InputError):
            resample_by_marginal(xs, ys, ProbVector(np.array([0.5, 0.5])), 10, 1, 0)

    def test_target_table_merges(self):
        outputs = np.array([[0.3, 0.7], [0.3, 0.7], [0.6, 0.4]])
        table = target_table_from_outputs(outputs)
        assert len(table.support) == 2
        assert table.masses().sum() == pytest.approx(3.0)


class TestShiftSpec:
    def test_validation(self):
        with pytest.raises(InputError):
            ShiftSpec(mode="dirichlet")
        with pytest.raises(InputError):
            ShiftSpec(mode="explicit")
        with pytest.raises(InputError):
            ShiftSpec(mode="magic", alpha=1.0)

    def test_param_labels(self):
        assert ShiftSpec(mode="dirichlet", alpha=0.5).param_label == "alpha=0.5"
        spec = ShiftSpec(mode="explicit", target_marginal=ProbVector(np.array([0.9, 0.1])))
        assert spec.param_label == "pt=0.9,0.1"

    def test_explicit_draw_is_constant(self):
        spec = ShiftSpec(mode="explicit", target_marginal=ProbVector(np.array([0.9, 0.1])))
        q = spec.draw(2, rng_for(0, 0))
        np.testing.assert_allclose(q.entries, [0.9, 0.1])


class TestTrials:
    def test_single_trial_deterministic(self):
        cfg = small_config()
        r1 = run_single_trial(cfg, 0, 0, 0)
        r2 = run_single_trial(cfg, 0, 0, 0)
        assert len(r1) == len(r2) == len(cfg.methods)
        for a, b in zip(r1, r2):
            assert a.method == b.method
            assert a.squared_error == b.squared_error
            np.testing.assert_array_equal(a.w_hat.weights, b.w_hat.weights)

    def test_trial_reports_are_finite(self):
        for rep in run_single_trial(small_config(), 0, 0, 1):
            assert np.isfinite(rep.squared_error)
            assert rep.error_message is None

    def test_squared_error_definition(self):
        for rep in run_single_trial(small_config(), 0, 0, 0):
            expect = float(((rep.w_hat.weights - rep.w_star.weights) ** 2).sum())
            assert rep.squared_error == pytest.approx(expect, abs=1e-12)

    def test_worker_count_does_not_change_results(self):
        cfg = small_config(n_trials=3)
        serial_reports, serial_rows = run_trials(cfg, max_workers=1)
        parallel_reports, parallel_rows = run_trials(cfg, max_workers=4)
        assert len(serial_reports) == len(parallel_reports)
        for a, b in zip(serial_reports, parallel_reports):
            assert a.method == b.method and a.squared_error == b.squared_error
        assert serial_rows == parallel_rows

    def test_aggregate_statistics(self):
        cfg = small_config(n_trials=4)
        reports, rows = run_trials(cfg)
        for row in rows:
            errs = [
                r.squared_error
                for r in reports
                if r.method == row.method and r.m == row.m
            ]
            assert row.mse == pytest.approx(np.mean(errs))
            assert row.stderr == pytest.approx(np.std(errs, ddof=1) / np.sqrt(len(errs)))
            assert row.n_failed == 0

    def test_realized_w_star_mode(self):
        cfg = small_config(w_star_from="realized")
        for rep in run_single_trial(cfg, 0, 0, 0):
            # realized weights reflect the drawn labels, so the target marginal
            # implied by w_star matches the sample exactly up to discreteness
            assert abs(rep.w_star.weights @ UNIFORM_2.entries - 1.0) < 1e-9

    def test_config_validation(self):
        with pytest.raises(InputError):
            small_config(methods=())
        with pytest.raises(InputError):
            small_config(n_trials=0)
        with pytest.raises(InputError):
            small_config(w_star_from="guess")

    def test_csv_round_shape(self):
        rows = [AggregateRow("alpha=1", "bbse_hard", 100, 5, 0.25, 0.01)]
        csv = aggregate_to_csv(rows)
        lines = csv.strip().split("\n")
        assert lines[0] == "shift_param,method,m,n_trials,mse,stderr"
        assert lines[1].startswith("alpha=1,bbse_hard,100,5,0.25,0.01")
