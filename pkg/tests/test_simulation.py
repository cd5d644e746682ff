"""Tests for simulated datasets, ROC helpers and the Monte-Carlo experiments."""
import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from models.errors import DomainError, ExperimentError
from models.schemas import DESimConfig, GeneSet, MuLaw, SimConfig, StructuralFit
from services.core_model import variance_leading
from services.simulation import (
    ESTIMATORS,
    GENERATOR_NOTE,
    generate_dataset,
    roc_curve,
    run_accuracy_experiment,
    run_de_experiment,
    setting_preset,
    tpr_at_fpr,
    variance_curvature,
)


class TestPresets:

    def test_setting_values(self):
        s2 = setting_preset(2)
        assert (s2.alpha2, s2.alpha3, s2.beta2, s2.beta3) == (0.02, 0.2, 0.9, 0.95)
        assert (s2.sigma1_sq, s2.sigma2_sq, s2.sigma3_sq) == (0.5, 1.0, 0.75)
        s3 = setting_preset(3)
        assert (s3.alpha2, s3.beta2, s3.sigma1_sq) == (-5, 1.3, 0.2)

    def test_presets_are_copies(self):
        s1 = setting_preset(1)
        s1.alpha2 = 100.0
        assert setting_preset(1).alpha2 == 9

    def test_unknown_setting(self):
        with pytest.raises(DomainError):
            setting_preset(4)


class TestGenerateDataset:

    def test_nested_prefixes(self, setting1):
        table, truth = generate_dataset(SimConfig(theta=setting1, dataset_sizes=(10, 20, 30)))
        assert table.set_sizes == (10, 20, 30)
        assert table.genes[0] == "g01" and table.genes[-1] == "g30"
        assert table.membership("g15") == GeneSet.B_MINUS_A
        assert len(truth) == 30

    def test_default_size_is_largest_training_size(self, setting1):
        table, _ = generate_dataset(SimConfig(theta=setting1, n_train_grid=[20, 50]))
        assert table.set_sizes == (50, 50, 50)

    def test_reproducible_and_index_dependent(self, setting1):
        config = SimConfig(theta=setting1, dataset_sizes=(5, 5, 5), seed=3)
        first, _ = generate_dataset(config, 0)
        again, _ = generate_dataset(config, 0)
        other, _ = generate_dataset(config, 1)
        assert first == again
        assert first.x != other.x

    def test_fixed_levels(self, setting1):
        law = MuLaw(kind="fixed", values=[1.0, 2.0])
        _, truth = generate_dataset(SimConfig(theta=setting1, mu_law=law, dataset_sizes=(4, 4, 4)))
        assert list(truth.values()) == [1.0, 2.0, 1.0, 2.0]

    def test_invalid_sizes(self, setting1):
        with pytest.raises(ValidationError):
            SimConfig(theta=setting1, dataset_sizes=(10, 5, 30))


class TestROC:

    def test_curve(self):
        fpr, tpr = roc_curve([0.1, 0.2, 0.3, 0.4], [True, False, True, False])
        np.testing.assert_allclose(fpr, [0.0, 0.0, 0.5, 0.5, 1.0])
        np.testing.assert_allclose(tpr, [0.0, 0.5, 0.5, 1.0, 1.0])

    def test_tied_p_values_enter_together(self):
        fpr, tpr = roc_curve([0.1, 0.1, 0.3], [True, False, False])
        np.testing.assert_allclose(fpr, [0.0, 0.5, 1.0])
        np.testing.assert_allclose(tpr, [0.0, 1.0, 1.0])

    def test_needs_both_classes(self):
        with pytest.raises(ExperimentError):
            roc_curve([0.1, 0.2], [True, True])

    def test_tpr_at_fpr(self):
        fpr, tpr = roc_curve([0.1, 0.2, 0.3, 0.4], [True, False, True, False])
        np.testing.assert_allclose(tpr_at_fpr(fpr, tpr, [0.0, 0.25, 0.5, 1.0]), [0.5, 0.5, 1.0, 1.0])


class TestCurvature:

    def test_exact_quadratic(self):
        mu = np.linspace(-5, 5, 50)
        coef, se = variance_curvature(mu, 1 + 2 * mu + 3 * mu ** 2)
        assert coef == pytest.approx(3.0)
        assert se < 1e-8

    def test_needs_points(self):
        with pytest.raises(DomainError):
            variance_curvature([0, 1, 2], [1, 1, 1])


class TestAccuracyExperiment:

    @pytest.fixture
    def config(self, setting1):
        return SimConfig(theta=setting1, n_train_grid=[20, 100], n_test=200, replications=30, seed=1)

    def test_frames_and_ordering(self, config):
        report = run_accuracy_experiment(config)
        assert list(report.amse.columns) == ["estimator", "n", "amse"]
        assert len(report.amse) == 2 * len(ESTIMATORS)
        amse = report.amse.set_index(["estimator", "n"])["amse"]
        assert amse[("xyz", 100)] < amse[("yz", 100)] < amse[("z", 100)]
        assert amse[("xyz", 100)] < amse[("x", 100)]
        gamma_a = 1.0 / 2.71875
        assert 0.85 * gamma_a < amse[("xyz", 100)] < 1.35 * gamma_a
        assert set(report.variance_curves["estimator"]) == {"xyz", "yz", "z"}
        assert report.skipped == {"20": 0, "100": 0}

    def test_thread_count_does_not_change_result(self, config):
        serial = run_accuracy_experiment(config, threads=1)
        parallel = run_accuracy_experiment(config, threads=3)
        pd.testing.assert_frame_equal(serial.amse, parallel.amse)
        pd.testing.assert_frame_equal(serial.variance_curves, parallel.variance_curves)


class TestDEExperiment:

    @pytest.fixture
    def config(self, setting1):
        return DESimConfig(
            theta=setting1, genes_total=600, genes_de=100, set_sizes=(100, 300, 600), replications=3, seed=4
        )

    def test_outputs(self, config):
        report = run_de_experiment(config)
        roc = report.roc
        assert set(roc["arm"]) == {"calibrated", "rnaseq"}
        for _, part in roc.groupby("arm"):
            assert part["fpr"].iloc[0] == 0.0 and part["tpr"].iloc[0] == 0.0
            assert np.all(np.diff(part["tpr"]) >= -1e-12)
            assert part["tpr"].iloc[-1] == pytest.approx(1.0)
        assert len(report.tpr_at_fpr) == 3 * 2 * len(config.fpr_grid)
        assert len(report.bh) == 3 * 2 * len(config.fdr_grid)
        assert report.summary["replications_used"] == 3
        assert report.summary["rnaseq_sigma3_sq"] == 1.0
        assert GENERATOR_NOTE in report.notes

    def test_calibrated_arm_is_at_least_as_powerful(self, config):
        report = run_de_experiment(config)
        mean_tpr = report.tpr_at_fpr.groupby("arm")["tpr"].mean()
        assert mean_tpr["calibrated"] >= mean_tpr["rnaseq"]

    def test_rnaseq_variance_override(self, config):
        report = run_de_experiment(config.model_copy(update={"rnaseq_sigma3_sq": 2.0}))
        assert report.summary["rnaseq_sigma3_sq"] == 2.0

    def test_needs_de_genes(self, config):
        with pytest.raises(ExperimentError):
            run_de_experiment(config.model_copy(update={"genes_de": 0}))

    def test_inconsistent_sizes(self, setting1):
        with pytest.raises(ValidationError):
            DESimConfig(theta=setting1, genes_total=100, set_sizes=(10, 50, 200))



@pytest.fixture(scope="module")
def default_accuracy():
    """Accuracy experiment per preset at the default grid (20, 50, 100, 300) and 200 replications."""
    cache = {}

    def _run(setting: int):
        if setting not in cache:
            cache[setting] = run_accuracy_experiment(SimConfig(theta=setting_preset(setting)), threads=4)
        return cache[setting]

    return _run


@pytest.mark.slow
class TestDefaultExperiments:

    @pytest.mark.parametrize("setting", [1, 2, 3])
    def test_amse_ordering(self, default_accuracy, setting):
        amse = default_accuracy(setting).amse.set_index(["estimator", "n"])["amse"]
        for n in (20, 50, 100, 300):
            assert amse[("xyz", n)] < amse[("yz", n)] < amse[("z", n)]
        assert amse[("z", 300)] > amse[("x", 300)]
        for n in (100, 300):
            ratio = amse[("yz", n)] / amse[("x", n)]
            if setting == 1:
                assert ratio < 1.0
            elif setting == 2:
                assert abs(ratio - 1.0) <= 0.15
            else:
                assert ratio > 1.0

    @pytest.mark.parametrize("estimator", ["xyz", "yz", "z"])
    def test_variance_curves_flatten(self, default_accuracy, estimator):
        curves = default_accuracy(1).variance_curves
        part = curves[curves["estimator"] == estimator]
        small = variance_curvature(*part[part["n"] == 20][["mu", "emp_var"]].to_numpy().T)
        large = variance_curvature(*part[part["n"] == 300][["mu", "emp_var"]].to_numpy().T)
        assert small[0] > 3 * small[1]
        assert abs(large[0]) < 3 * large[1]

    def test_central_variance_matches_leading_order(self, default_accuracy, setting1):
        curves = default_accuracy(1).variance_curves
        central = curves[(curves["n"] == 300) & (curves["mu"].abs() < 3)]
        gammas = variance_leading(StructuralFit(**setting1.model_dump()))
        for estimator, gamma in (("xyz", gammas.gamma_A), ("yz", gammas.gamma_BA), ("z", gammas.gamma_CB)):
            emp = central[central["estimator"] == estimator]["emp_var"].mean()
            assert emp == pytest.approx(gamma, rel=0.15)


@pytest.mark.slow
def test_de_power_at_the_default_design(setting1):
    """Calibration beats raw RNA-Seq in nearly every replication; absolute power is set by sigma3_sq = 1."""
    report = run_de_experiment(DESimConfig(theta=setting1, replications=20, seed=0), threads=4)
    summary = report.summary
    assert summary["replications_used"] == 20
    assert summary["calibrated_dominates"] >= 18
    calibrated, rnaseq = summary["mean_tpr"]["calibrated"], summary["mean_tpr"]["rnaseq"]
    assert 0.15 <= calibrated["0.05"] <= 0.24
    assert all(calibrated[f] > rnaseq[f] for f in calibrated)
