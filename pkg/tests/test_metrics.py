"""Metrics: confusion arithmetic, grid ROC/AUC, localization overlap rules."""

import numpy as np
import pytest

from artifact.metrics import (
    ConfusionMatrix,
    best_operating_point,
    confusion_from_flags,
    exact_auc,
    interval_credits_window,
    localization_confusion,
    localize,
    roc_auc,
    score_localization,
    sensitivity_specificity,
    sweep_localization_threshold,
    window_flags_from_intervals,
)
from artifact.nn.attention import AttentionMap


def make_map(values, scale=0.5, edge_s=0.7, epoch_index=0):
    values = np.asarray(values, dtype=np.float64)
    return AttentionMap(values, epoch_index, scale, edge_s,
                        degenerate=bool(values.max() == 0))


class TestSensitivitySpecificity:
    def test_headline_operating_point(self):
        se, sp = sensitivity_specificity(ConfusionMatrix(tp=81, fn=19, tn=86, fp=14))
        assert se == pytest.approx(0.81)
        assert sp == pytest.approx(0.86)

    def test_all_correct(self):
        se, sp = sensitivity_specificity(ConfusionMatrix(tp=10, fn=0, tn=5, fp=0))
        assert (se, sp) == (1.0, 1.0)

    def test_recount_random(self):
        rng = np.random.default_rng(0)
        flags = rng.random(1000) > 0.4
        labels = rng.random(1000) > 0.6
        cm = confusion_from_flags(flags, labels)
        assert cm.total == 1000
        se, sp = sensitivity_specificity(cm)
        assert se == pytest.approx(np.sum(flags & labels) / np.sum(labels))
        assert sp == pytest.approx(np.sum(~flags & ~labels) / np.sum(~labels))

    def test_empty_class_errors(self):
        with pytest.raises(ValueError):
            sensitivity_specificity(ConfusionMatrix(tp=0, fn=0, tn=5, fp=5))
        with pytest.raises(ValueError):
            sensitivity_specificity(ConfusionMatrix(tp=5, fn=5, tn=0, fp=0))


class TestRocAuc:
    def test_perfect_separation(self):
        scores = np.array([0.1] * 50 + [0.9] * 50)
        labels = np.array([0] * 50 + [1] * 50, dtype=bool)
        roc = roc_auc(scores, labels)
        assert roc.auc == pytest.approx(1.0)
        assert roc.auc_exact == pytest.approx(1.0)
        assert roc.best[1] == 1.0 and roc.best[2] == 1.0

    def test_tie_break_lowest_grid_threshold(self):
        # any threshold strictly inside (0.1, 0.9) is optimal; the sweep picks
        # the lowest grid point, 0.11
        scores = np.array([0.1, 0.1, 0.9, 0.9])
        labels = np.array([0, 0, 1, 1], dtype=bool)
        roc = roc_auc(scores, labels)
        assert roc.best[0] == pytest.approx(0.11)

    def test_random_scores_auc_half(self):
        rng = np.random.default_rng(1)
        aucs = []
        for seed in range(10):
            r = np.random.default_rng(seed)
            scores = r.random(2000)
            labels = r.random(2000) > 0.5
            aucs.append(roc_auc(scores, labels).auc)
        assert abs(np.mean(aucs) - 0.5) < 0.05

    def test_single_class_errors(self):
        with pytest.raises(ValueError):
            roc_auc(np.array([0.2, 0.8]), np.array([1, 1], dtype=bool))

    def test_auc_invariant_under_increasing_transform(self):
        rng = np.random.default_rng(2)
        scores = rng.random(500)
        labels = rng.random(500) < scores  # correlated labels
        if labels.all() or not labels.any():
            pytest.skip("degenerate draw")
        # affine transforms keeping scores within [0, 1]
        transformed = 0.5 * scores + 0.25
        a1 = roc_auc(scores, labels)
        a2 = roc_auc(transformed, labels)
        assert a2.auc_exact == pytest.approx(a1.auc_exact, abs=1e-12)
        assert a2.auc == pytest.approx(a1.auc, abs=0.02)  # grid quantization only

    def test_permutation_invariance_of_best_point(self):
        rng = np.random.default_rng(3)
        scores = rng.random(300)
        labels = rng.random(300) < scores
        perm = rng.permutation(300)
        r1 = roc_auc(scores, labels)
        r2 = roc_auc(scores[perm], labels[perm])
        assert r1.best == r2.best
        assert r1.auc == pytest.approx(r2.auc)

    def test_exact_auc_against_manual(self):
        scores = np.array([0.1, 0.4, 0.35, 0.8])
        labels = np.array([0, 0, 1, 1], dtype=bool)
        # pairs: (0.35 vs 0.1): win, (0.35 vs 0.4): loss, (0.8 vs both): 2 wins
        assert exact_auc(scores, labels) == pytest.approx(3 / 4)


class TestLocalize:
    def test_all_zero_map_empty(self):
        amap = make_map(np.zeros(40))
        assert localize(amap, 0.3) == []

    def test_plateau_run(self):
        values = np.zeros(40)
        values[10:21] = 1.0
        amap = make_map(values)
        out = localize(amap, 0.5)
        assert out == [(5.0, 10.5)]  # steps 10..20 at 0.5 s/step

    def test_threshold_zero_covers_non_excluded_region(self):
        rng = np.random.default_rng(4)
        values = np.zeros(40)
        values[2:38] = rng.random(36)
        values[5] = 0.0  # interior zero still >= threshold 0
        values[20] = 1.0
        amap = make_map(values)
        out = localize(amap, 0.0)
        assert out == [(1.0, 19.0)]  # whole region minus 2 edge steps per side

    def test_multiple_runs(self):
        values = np.zeros(40)
        values[5:8] = 0.9
        values[30:33] = 0.8
        out = localize(make_map(values), 0.5)
        assert out == [(2.5, 4.0), (15.0, 16.5)]

    def test_edge_steps_never_included(self):
        values = np.ones(40)
        values[0] = values[-1] = 0.0
        amap = AttentionMap(values, 0, 0.5, 0.7, degenerate=False)
        out = localize(amap, 0.0)
        assert out == [(1.0, 19.0)]

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            localize(make_map(np.zeros(40)), 1.5)


class TestOverlapRules:
    def test_rule1_long_overlap(self):
        # predicted [0.5, 3.0) overlaps window 0 by 2.5 s > 2 s
        assert interval_credits_window(0.5, 3.0, 0)

    def test_rule2_boundary_case_not_credited(self):
        # predicted [3.0, 5.0): 1.0 s in window 1 is exactly 50% of 2.0 s, not more
        assert not interval_credits_window(3.0, 5.0, 1)
        assert not interval_credits_window(3.0, 5.0, 0)

    def test_rule2_short_prediction_inside_window(self):
        # 0.6 s prediction fully inside window 2: 100% > 50%
        assert interval_credits_window(9.0, 9.6, 2)

    def test_rule2_edge_spanning_majority(self):
        # [3.0, 5.5): 1.5 s of 2.5 s in window 1 -> 60% > 50%
        assert interval_credits_window(3.0, 5.5, 1)
        assert not interval_credits_window(3.0, 5.5, 0)

    def test_no_overlap(self):
        assert not interval_credits_window(0.0, 1.0, 3)


class TestScoreLocalization:
    def test_spec_example_rule1(self):
        cm = score_localization([(0.5, 3.0)], ["artifact", "clean", "clean", "clean", "clean"])
        assert cm.tp == 1 and cm.fn == 0
        assert cm.tn == 4 and cm.fp == 0

    def test_spec_example_rule2_boundary(self):
        cm = score_localization([(3.0, 5.0)], ["clean", "artifact", "clean", "clean", "clean"])
        assert cm.tp == 0 and cm.fn == 1  # window 1 labeled but not credited
        assert cm.fp == 1  # window 0 touched by the prediction
        assert cm.tn == 3

    def test_no_predictions_all_clean(self):
        cm = score_localization([], ["clean"] * 5)
        assert cm.to_dict() == {"tp": 0, "fp": 0, "tn": 5, "fn": 0}

    def test_interval_outside_epoch_errors(self):
        with pytest.raises(ValueError):
            score_localization([(18.0, 22.0)], ["clean"] * 5)

    def test_verdict_count_always_five(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(0, 4))
            ivs = []
            for _ in range(n):
                s = float(rng.uniform(0, 19))
                ivs.append((s, float(rng.uniform(s + 0.05, min(20.0, s + 5)))))
            labels = ["artifact" if rng.random() < 0.3 else "clean" for _ in range(5)]
            cm = score_localization(ivs, labels)
            assert cm.total == 5


class TestSweepLocalization:
    @staticmethod
    def maps_and_labels():
        # epoch A: strong peak inside window 1 (labeled artifact)
        va = np.zeros(40)
        va[9:12] = [0.2, 1.0, 0.6]
        # epoch B: clean epoch whose map still peaks somewhere (false positive risk)
        vb = np.zeros(40)
        vb[25] = 1.0
        maps = [make_map(va, epoch_index=0), make_map(vb, epoch_index=1)]
        labels = [
            ["clean", "artifact", "clean", "clean", "clean"],
            ["clean"] * 5,
        ]
        return maps, labels

    def test_best_threshold_found(self):
        maps, labels = self.maps_and_labels()
        best, points = sweep_localization_threshold(maps, labels)
        assert len(points) == 101
        assert 0.0 <= best.threshold <= 1.0
        assert best.se == 1.0  # the artifact window is creditable at some threshold

    def test_fp_monotone_non_increasing(self):
        rng = np.random.default_rng(6)
        maps = []
        labels = []
        for i in range(20):
            v = np.zeros(40)
            v[2:38] = rng.random(36) ** 2
            v[2:38] /= v[2:38].max()
            maps.append(make_map(v, epoch_index=i))
            labels.append(["artifact" if rng.random() < 0.3 else "clean" for _ in range(5)])
        prev_fp = None
        for t in np.round(np.arange(0, 1.005, 0.01), 10):
            cm, _ = localization_confusion(maps, labels, float(t))
            if prev_fp is not None:
                assert cm.fp <= prev_fp
            prev_fp = cm.fp

    def test_degenerate_maps_zero_sensitivity(self):
        maps = [make_map(np.zeros(40)) for _ in range(3)]
        labels = [["artifact", "clean", "clean", "clean", "clean"]] * 3
        best, points = sweep_localization_threshold(maps, labels)
        assert all(se == 0.0 for _, se, _ in points)

    def test_locality(self):
        # verdicts for one epoch depend only on that epoch's intervals
        maps, labels = self.maps_and_labels()
        cm_joint, per_epoch = localization_confusion(maps, labels, 0.5)
        cm_a = score_localization(per_epoch[0], labels[0])
        cm_b = score_localization(per_epoch[1], labels[1])
        assert (cm_a + cm_b).to_dict() == cm_joint.to_dict()


class TestBestOperatingPoint:
    def test_lowest_threshold_on_tie(self):
        points = [(0.1, 0.8, 0.8), (0.2, 0.8, 0.8), (0.3, 0.9, 0.9), (0.4, 0.9, 0.9)]
        assert best_operating_point(points)[0] == 0.3

    def test_permutation_invariant(self):
        points = [(0.3, 0.9, 0.9), (0.1, 0.8, 0.8), (0.4, 0.9, 0.9)]
        assert best_operating_point(points) == best_operating_point(points[::-1])
