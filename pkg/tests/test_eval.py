"""Segmentation metrics, the random-mask control, the probe and match rates."""

import csv

import numpy as np
import pytest
from scipy import optimize
from scipy.special import log_expit
from scipy.stats import binomtest

from conftest import random_beta_params
from src.eval.experiments import extract_rbm_features, run_match_experiment, run_probe_experiment, split_per_class
from src.eval.metrics import (
    REPORT_FIELDS,
    EvalReport,
    binomial_interval,
    derangement,
    format_report,
    mask_iou,
    match_rate,
    nearest_neighbours,
    proportion_report,
    random_mask_control,
    seg_accuracy,
    seg_accuracy_per_image,
    write_reports_csv,
)
from src.eval.probe import fit_probe, probe_accuracy
from src.utils.config import ProbeConfig
from src.utils.errors import ConfigError, DimensionError, DomainError


def separable(rng, n=60, dim=4):
    labels = np.array(["rectangle", "round"] * (n // 2))
    features = rng.normal(0.0, 1.0, (n, dim))
    features[:, 0] += np.where(labels == "round", 3.0, -3.0)
    return features, labels


class TestSegmentationMetrics:
    def test_accuracy(self):
        pred = np.array([[1, 0, 1, 1]])
        gt = np.array([[1, 1, 1, 0]])
        assert seg_accuracy(pred, gt) == 0.5
        assert seg_accuracy(np.array([0.7, 0.2]), np.array([1, 0])) == 1.0

    def test_per_image(self):
        pred = np.array([[1, 1], [0, 0]])
        gt = np.array([[1, 1], [1, 1]])
        assert np.array_equal(seg_accuracy_per_image(pred, gt), [1.0, 0.0])

    def test_shapes_must_agree(self):
        with pytest.raises(DimensionError):
            seg_accuracy(np.zeros(3), np.zeros(4))
        with pytest.raises(DomainError):
            seg_accuracy(np.zeros(0), np.zeros(0))

    def test_complementing_both_masks_keeps_the_accuracy(self, rng):
        pred = (rng.random((5, 8, 8)) < 0.4).astype(int)
        gt = (rng.random((5, 8, 8)) < 0.6).astype(int)
        assert seg_accuracy(1 - pred, 1 - gt) == seg_accuracy(pred, gt)
        assert np.array_equal(seg_accuracy_per_image(1 - pred, 1 - gt), seg_accuracy_per_image(pred, gt))

    def test_iou(self):
        pred = np.array([[1, 1, 0, 0], [0, 0, 0, 0]])
        gt = np.array([[1, 0, 0, 0], [0, 0, 0, 0]])
        assert mask_iou(pred, gt) == pytest.approx(0.75)


class TestIntervals:
    def test_wilson_interval(self):
        low, high = binomial_interval(30, 40)
        expected = binomtest(30, 40).proportion_ci(confidence_level=0.95, method="wilson")
        assert (low, high) == pytest.approx((expected.low, expected.high))
        assert low < 0.75 < high

    def test_no_trials(self):
        assert all(np.isnan(binomial_interval(0, 0)))

    def test_reports_hold_proportions(self):
        report = proportion_report("seg_accuracy", 0.9, 100, {"config_hash": "abc"})
        assert report.row()["config_hash"] == "abc"
        assert report.row()["model_hash"] == ""
        with pytest.raises(DomainError):
            proportion_report("seg_accuracy", 1.2, 10)


class TestRandomMaskControl:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_derangement_has_no_fixed_point(self, seed):
        perm = derangement(7, np.random.default_rng(seed))
        assert sorted(perm) == list(range(7))
        assert not np.any(perm == np.arange(7))

    def test_derangement_needs_two_items(self, rng):
        with pytest.raises(DomainError):
            derangement(1, rng)

    def test_identical_masks_give_zero_delta(self):
        gt = np.zeros((5, 4, 4))
        gt[:, :2] = 1
        report = random_mask_control(gt.copy(), gt, seed=3)
        assert report.value == 1.0
        assert report.provenance["delta"] == 0.0

    def test_perfect_masks_lose_accuracy_when_shuffled(self, rng):
        gt = (rng.random((10, 6, 6)) < 0.5).astype(float)
        report = random_mask_control(gt.copy(), gt, seed=3, provenance={"model_hash": "m"})
        assert report.provenance["accuracy"] == 1.0
        assert report.value < 1.0
        assert report.provenance["delta"] == pytest.approx(report.value - 1.0)
        assert report.n == gt.size
        assert report.row()["model_hash"] == "m"

    def test_seeded(self, rng):
        masks = (rng.random((8, 9)) < 0.5).astype(float)
        gt = (rng.random((8, 9)) < 0.5).astype(float)
        assert random_mask_control(masks, gt, seed=5).value == random_mask_control(masks, gt, seed=5).value

    def test_needs_two_images(self):
        with pytest.raises(DomainError):
            random_mask_control(np.zeros((1, 4)), np.zeros((1, 4)), seed=0)


class TestMatchRate:
    def test_identical_codes_match(self, rng):
        codes = rng.random((12, 5))
        assert match_rate(codes, codes) == 1.0

    def test_joint_permutation_keeps_the_rate(self, rng):
        codes_a = rng.random((20, 4))
        codes_b = codes_a + rng.normal(0.0, 0.3, codes_a.shape)
        order = rng.permutation(20)
        assert match_rate(codes_a[order], codes_b[order]) == match_rate(codes_a, codes_b)

    def test_ties_go_to_the_lowest_index(self):
        codes = np.zeros((3, 2))
        assert np.array_equal(nearest_neighbours(codes, codes), [0, 0, 0])
        assert match_rate(codes, codes) == pytest.approx(1.0 / 3.0)

    def test_shapes_must_agree(self):
        with pytest.raises(DimensionError):
            match_rate(np.zeros((3, 2)), np.zeros((3, 3)))

    def test_experiment_reports(self, rng):
        a = rng.random((6, 3))
        reports = run_match_experiment({"fgbg": (a, a), "rbm": (a, a[::-1])}, {"config_hash": "c"})
        assert [r.metric for r in reports] == ["match_rate/fgbg", "match_rate/rbm"]
        assert reports[0].value == 1.0
        assert reports[1].value < 1.0


class TestProbe:
    def test_separable_data(self, rng):
        features, labels = separable(rng)
        probe = fit_probe(features, labels, ProbeConfig(iterations=500))
        assert probe.classes == ("rectangle", "round")
        assert probe_accuracy(probe, features, labels) == 1.0
        assert set(probe.predict(features)) == {"rectangle", "round"}

    def test_loss_never_increases(self, rng):
        features, labels = separable(rng)
        history = fit_probe(features, labels, ProbeConfig(iterations=300)).loss_history
        assert len(history) == 300
        assert np.all(np.diff(history) <= 1e-12)

    def test_reaches_the_regularized_optimum(self, rng):
        features = rng.normal(size=(40, 3))
        labels = (features @ np.array([1.0, -0.5, 0.2]) + rng.normal(0.0, 1.0, 40) > 0).astype(int)
        cfg = ProbeConfig(l2_lambda=0.05, iterations=5000)
        probe = fit_probe(features, labels, cfg)

        def objective(theta):
            z = features @ theta[:-1] + theta[-1]
            loss = -np.mean(labels * log_expit(z) + (1 - labels) * log_expit(-z))
            return loss + cfg.l2_lambda * theta[:-1] @ theta[:-1]

        best = optimize.minimize(objective, np.zeros(4), method="BFGS", options={"gtol": 1e-10})
        assert probe.loss_history[-1] == pytest.approx(best.fun, abs=1e-6)
        assert np.allclose(probe.weights, best.x[:-1], atol=1e-3)

    def test_needs_two_classes(self, rng):
        features = rng.normal(size=(6, 2))
        with pytest.raises(DomainError):
            fit_probe(features, ["a"] * 6)
        with pytest.raises(DomainError):
            fit_probe(features, ["a", "b", "c"] * 2)

    def test_features_are_checked(self):
        with pytest.raises(DimensionError):
            fit_probe(np.zeros(4), [0, 1, 0, 1])
        with pytest.raises(DomainError):
            fit_probe(np.array([[np.nan], [1.0]]), [0, 1])


class TestProbeExperiment:
    def test_split_per_class(self):
        labels = ["rectangle"] * 15 + ["round"] * 12
        train, test = split_per_class(labels, 5, seed=4)
        assert len(train) == 10 and len(test) == 17
        assert sorted(np.concatenate([train, test])) == list(range(27))
        assert sum(labels[i] == "round" for i in train) == 5
        again, _ = split_per_class(labels, 5, seed=4)
        assert np.array_equal(train, again)

    def test_split_needs_spare_examples(self):
        with pytest.raises(DomainError):
            split_per_class(["a"] * 5 + ["b"] * 20, 5, seed=0)

    def test_informative_features_beat_noise(self, rng):
        features, labels = separable(rng, n=80)
        noise = rng.normal(size=(80, 4))
        reports = run_probe_experiment(
            {"fgbg": features, "rbm": noise},
            labels,
            ProbeConfig(iterations=300, per_class=10, seed=1),
            {"config_hash": "c"},
        )
        by_name = {r.metric: r for r in reports}
        assert by_name["probe_accuracy/fgbg"].value > 0.9
        assert by_name["probe_accuracy/fgbg"].n == 60
        assert by_name["probe_accuracy/fgbg"].value > by_name["probe_accuracy/rbm"].value

    def test_needs_a_seed(self, rng):
        features, labels = separable(rng)
        with pytest.raises(ConfigError):
            run_probe_experiment({"fgbg": features}, labels, ProbeConfig())

    def test_rbm_features(self, rng):
        rbm = random_beta_params(rng, 6, 4)
        features = extract_rbm_features(rng.uniform(0.1, 0.9, (3, 6)), rbm)
        assert features.shape == (3, 4)
        assert np.all((features > 0) & (features < 1))


class TestReportFiles:
    def test_csv(self, tmp_path):
        reports = [EvalReport("seg_accuracy", 0.8, 10, (0.5, 0.9), {"config_hash": "h"})]
        path = tmp_path / "out" / "report.csv"
        write_reports_csv(str(path), reports)
        with open(path, encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0]) == REPORT_FIELDS
        assert rows[0]["metric"] == "seg_accuracy" and rows[0]["config_hash"] == "h"

    def test_text(self):
        text = format_report(proportion_report("match_rate/fgbg", 0.5, 20, {"config_hash": "h", "seed": 3}))
        assert text.startswith("match_rate/fgbg")
        assert "95% CI" in text and "seed=3" in text and "config_hash" not in text
