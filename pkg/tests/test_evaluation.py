import io
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtosr.evaluation import (
    UNKNOWN,
    DetectionConfusion,
    EvaluatedSample,
    f1,
    infer,
    infer_batch,
    infer_from_probs,
    mcc,
    metrics_report,
    score_all,
    score_known,
    score_unknown,
    topk_known_accuracy,
    unknown_accuracy,
    write_verdict_csv,
)
from rtosr.model import ModelConfig, MultiExitNetwork
from rtosr.thresholds import ThresholdSet, init_training_thresholds


def verdict_oracle(probs, thresholds):
    """Independent reimplementation of the exit walk as a plain loop."""
    for k, q in enumerate(probs):
        if max(q) > thresholds[k]:
            return k + 1, int(np.argmax(q))
    return None, UNKNOWN


def case_oracle(exited: bool, predicted, y_true):
    """Decision table for K/U case tags and confusion increments."""
    if y_true == UNKNOWN:
        return ("U2", "fp") if exited else ("U1", "tn")
    if not exited:
        return ("K3", "fn")
    return ("K1", "tp") if predicted == y_true else ("K2", "tp")


def ts(*values):
    return ThresholdSet(tuple(values), "inference")


class TestInfer:
    def test_immediate_exit(self):
        probs = [np.array([0.9, 0.05, 0.05]), np.array([0.5, 0.3, 0.2])]
        v = infer_from_probs(probs, ts(0.5, 0.5))
        assert (v.exit_index, v.predicted) == (1, 0)
        assert v.max_score == pytest.approx(0.9)

    def test_no_exit_is_unknown(self):
        probs = [np.array([0.4, 0.3, 0.3]), np.array([0.45, 0.3, 0.25])]
        v = infer_from_probs(probs, ts(0.5, 0.5))
        assert v.exit_index is None
        assert v.predicted == UNKNOWN
        assert v.probs == pytest.approx(probs[-1])  # final-exit probs retained

    def test_zero_thresholds_always_exit_first(self):
        probs = [np.array([0.34, 0.33, 0.33]), np.array([0.9, 0.05, 0.05])]
        v = infer_from_probs(probs, ts(0.0, 0.0))
        assert v.exit_index == 1

    def test_tie_with_threshold_does_not_exit(self):
        probs = [np.array([0.5, 0.5]), np.array([0.5, 0.5])]
        v = infer_from_probs(probs, ts(0.5, 0.5))
        assert v.predicted == UNKNOWN

    def test_requires_inference_kind(self):
        net = MultiExitNetwork.initialize(ModelConfig(4, 3, (8, 8), n_exits=2))
        with pytest.raises(ValueError):
            infer(net, np.ones(4), init_training_thresholds(2))

    def test_batch_matches_single(self):
        net = MultiExitNetwork.initialize(ModelConfig(4, 3, (8, 8), n_exits=2, rng_seed=4))
        x = np.random.default_rng(0).normal(size=(6, 4))
        t = ts(0.34, 0.34)
        batch = infer_batch(net, x, t)
        for i in range(6):
            single = infer(net, x[i], t)
            assert batch[i].exit_index == single.exit_index
            assert batch[i].predicted == single.predicted

    def test_walks_exits_in_order(self):
        probs = [np.array([0.4, 0.6]), np.array([0.9, 0.1]), np.array([0.99, 0.01])]
        v = infer_from_probs(probs, ts(0.7, 0.7, 0.7))
        assert v.exit_index == 2
        assert v.predicted == 0


class TestScoring:
    def exited(self, predicted=1):
        probs = np.array([0.1, 0.8, 0.1])
        from rtosr.evaluation import OSRVerdict

        return OSRVerdict(2, predicted, 0.8, probs)

    def not_exited(self):
        from rtosr.evaluation import OSRVerdict

        return OSRVerdict(None, UNKNOWN, 0.4, np.array([0.4, 0.3, 0.3]))

    def test_k1(self):
        tag, delta = score_known(self.exited(1), 1)
        assert tag == "K1"
        assert delta == DetectionConfusion(tp=1)

    def test_k2(self):
        tag, delta = score_known(self.exited(0), 1)
        assert tag == "K2"
        assert delta == DetectionConfusion(tp=1)

    def test_k3(self):
        tag, delta = score_known(self.not_exited(), 1)
        assert tag == "K3"
        assert delta == DetectionConfusion(fn=1)

    def test_u1(self):
        tag, delta = score_unknown(self.not_exited())
        assert tag == "U1"
        assert delta == DetectionConfusion(tn=1)

    def test_u2(self):
        tag, delta = score_unknown(self.exited())
        assert tag == "U2"
        assert delta == DetectionConfusion(fp=1)

    def test_thresholds_at_one_make_all_unknowns_tn(self):
        probs = [np.array([0.99, 0.01]), np.array([1.0, 0.0])]
        v = infer_from_probs(probs, ts(1.0, 1.0))
        tag, delta = score_unknown(v)
        assert (tag, delta.tn) == ("U1", 1)

    def test_exhaustive_partition_against_decision_table(self):
        # all score/threshold/label combinations for <=3 exits, <=3 classes
        score_levels = (0.2, 0.45, 0.7, 0.95)
        thr_levels = (0.0, 0.4, 0.8, 1.0)
        for n_exits in (1, 2, 3):
            for n_classes in (2, 3):
                for tops in itertools.product(score_levels, repeat=n_exits):
                    for argmaxes in itertools.product(range(n_classes), repeat=n_exits):
                        probs = []
                        for top, am in zip(tops, argmaxes):
                            q = np.full(n_classes, (1.0 - top) / (n_classes - 1))
                            q[am] = top
                            if top <= q.min():
                                q = None  # not a valid argmax construction
                            probs.append(q)
                        if any(q is None for q in probs):
                            continue
                        for thr in itertools.product(thr_levels, repeat=n_exits):
                            t = ThresholdSet(thr, "inference")
                            v = infer_from_probs(probs, t)
                            want_exit, want_pred = verdict_oracle(probs, thr)
                            assert v.exit_index == want_exit
                            assert v.predicted == want_pred
                            for y_true in [*range(n_classes), UNKNOWN]:
                                expect_tag, expect_field = case_oracle(
                                    v.exited, v.predicted, y_true
                                )
                                if y_true == UNKNOWN:
                                    tag, delta = score_unknown(v)
                                else:
                                    tag, delta = score_known(v, y_true)
                                assert tag == expect_tag
                                assert getattr(delta, expect_field) == 1
                                assert delta.tp + delta.tn + delta.fp + delta.fn == 1

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_raising_thresholds_monotone_for_unknowns(self, seed):
        rng = np.random.default_rng(seed)
        n = 30
        z = rng.random((n, 4)) + 0.05
        probs_rows = [
            [row / row.sum() for row in rng.permutation(z)] for _ in range(3)
        ]
        base = tuple(rng.uniform(0, 0.9, size=3))
        raised = tuple(min(b + d, 1.0) for b, d in zip(base, rng.uniform(0, 0.5, size=3)))
        counts = {}
        for name, thr in (("base", base), ("raised", raised)):
            t = ThresholdSet(thr, "inference")
            c = DetectionConfusion()
            for i in range(n):
                v = infer_from_probs([probs_rows[k][i] for k in range(3)], t)
                _, delta = score_unknown(v)
                c = c + delta
            counts[name] = c
        assert counts["raised"].tn >= counts["base"].tn
        assert counts["raised"].fp <= counts["base"].fp


class TestDetectionMetrics:
    def test_f1_hand_value(self):
        c = DetectionConfusion(tp=335580, tn=26071, fp=21996, fn=868)
        assert f1(c) == pytest.approx(0.9671, abs=1e-4)

    def test_f1_perfect(self):
        assert f1(DetectionConfusion(tp=10)) == 1.0

    def test_f1_undefined_is_nan(self):
        assert math.isnan(f1(DetectionConfusion(tn=5)))

    def test_mcc_hand_value(self):
        c = DetectionConfusion(tp=335580, tn=26071, fp=21996, fn=868)
        assert mcc(c) == pytest.approx(0.6994, abs=1e-4)

    def test_mcc_sign_flip_on_swap(self):
        c = DetectionConfusion(tp=50, tn=40, fp=10, fn=20)
        swapped = DetectionConfusion(tp=10, tn=20, fp=50, fn=40)
        assert mcc(swapped) == pytest.approx(-mcc(c), abs=1e-12)

    def test_mcc_degenerate_marginal_flagged_zero(self):
        c = DetectionConfusion(tp=0, tn=10, fp=0, fn=5)
        assert c.has_zero_marginal
        assert mcc(c) == 0.0

    def test_mcc_matches_exact_rational_arithmetic(self):
        c = DetectionConfusion(tp=1993, tn=47778, fp=289, fn=334455)
        num = Fraction(c.tp * c.tn - c.fp * c.fn)
        den = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
        expected = float(num) / math.sqrt(den)
        assert mcc(c) == pytest.approx(expected, rel=1e-12)

    def test_mcc_overflow_safe_on_huge_counts(self):
        c = DetectionConfusion(tp=10**9, tn=10**9, fp=10**6, fn=10**6)
        v = mcc(c)
        assert math.isfinite(v)
        assert 0.99 < v <= 1.0

    def test_unknown_accuracy_published_value(self):
        c = DetectionConfusion(tp=335580, tn=26071, fp=21996, fn=868)
        assert unknown_accuracy(c) == pytest.approx(54.23, abs=0.01)

    def test_unknown_accuracy_edges(self):
        assert unknown_accuracy(DetectionConfusion(tn=7, fp=0)) == 100.0
        assert unknown_accuracy(DetectionConfusion(tn=0, fp=9)) == 0.0
        with pytest.raises(ValueError):
            unknown_accuracy(DetectionConfusion(tp=3))

    def test_confusion_merge_is_componentwise(self):
        a = DetectionConfusion(1, 2, 3, 4)
        b = DetectionConfusion(10, 20, 30, 40)
        assert a + b == DetectionConfusion(11, 22, 33, 44)


class TestTopK:
    def sample(self, sid, y_true, exit_index, probs):
        from rtosr.evaluation import OSRVerdict

        probs = np.asarray(probs, dtype=float)
        predicted = UNKNOWN if exit_index is None else int(probs.argmax())
        return EvaluatedSample(
            sid, y_true, OSRVerdict(exit_index, predicted, float(probs.max()), probs)
        )

    def test_all_correct_top1(self):
        records = [
            self.sample(f"s{i}", 0, 1, [0.9, 0.05, 0.05]) for i in range(4)
        ]
        assert topk_known_accuracy(records, 1) == 100.0

    def test_non_exiting_sample_fails_all_k(self):
        records = [self.sample("s0", 0, None, [0.9, 0.05, 0.05])]
        assert topk_known_accuracy(records, 1) == 0.0
        assert topk_known_accuracy(records, 3) == 0.0

    def test_k_larger_than_classes_rejected(self):
        records = [self.sample("s0", 0, 1, [0.6, 0.4])]
        with pytest.raises(ValueError):
            topk_known_accuracy(records, 3)

    def test_twenty_sample_fixture_matches_bruteforce_recount(self):
        rng = np.random.default_rng(42)
        records = []
        for i in range(20):
            q = rng.random(5)
            q = q / q.sum()
            exited = None if i % 5 == 0 else 1 + (i % 3)
            records.append(self.sample(f"s{i}", int(rng.integers(0, 5)), exited, q))
        for k in (1, 2, 3, 5):
            hits = 0
            for r in records:
                if r.verdict.exit_index is None:
                    continue
                order = sorted(
                    range(5), key=lambda c: (-r.verdict.probs[c], c)
                )
                if r.y_true in order[:k]:
                    hits += 1
            assert topk_known_accuracy(records, k) == pytest.approx(100.0 * hits / 20)

    def test_unknown_records_ignored_for_topk(self):
        records = [
            self.sample("k0", 0, 1, [0.9, 0.05, 0.05]),
            self.sample("u0", UNKNOWN, None, [0.4, 0.3, 0.3]),
        ]
        assert topk_known_accuracy(records, 1) == 100.0


class TestReportAndCsv:
    def build_samples(self):
        from rtosr.evaluation import OSRVerdict

        return [
            EvaluatedSample("k1", 0, OSRVerdict(1, 0, 0.9, np.array([0.9, 0.05, 0.05]))),
            EvaluatedSample("k2", 1, OSRVerdict(2, 0, 0.8, np.array([0.8, 0.1, 0.1]))),
            EvaluatedSample("k3", 2, OSRVerdict(None, UNKNOWN, 0.4, np.array([0.4, 0.3, 0.3]))),
            EvaluatedSample("u1", UNKNOWN, OSRVerdict(None, UNKNOWN, 0.5, np.array([0.5, 0.3, 0.2]))),
            EvaluatedSample("u2", UNKNOWN, OSRVerdict(1, 1, 0.7, np.array([0.2, 0.7, 0.1]))),
        ]

    def test_partition_reconciles_with_confusion(self):
        samples = self.build_samples()
        c = score_all(samples)
        assert (c.tp, c.tn, c.fp, c.fn) == (2, 1, 1, 1)
        n_known = sum(1 for s in samples if s.y_true != UNKNOWN)
        n_unknown = len(samples) - n_known
        assert c.tp + c.fn == n_known
        assert c.tn + c.fp == n_unknown
        tags = [s.verdict.case_tag for s in samples]
        assert tags == ["K1", "K2", "K3", "U1", "U2"]

    def test_report_fields(self):
        samples = self.build_samples()
        c = score_all(samples)
        report = metrics_report(samples, c)
        assert report["tp"] == 2 and report["tn"] == 1
        assert report["unknown_acc"] == pytest.approx(50.0)
        assert report["known_top1"] == pytest.approx(100.0 / 3.0)
        assert report["known_top3"] == pytest.approx(200.0 / 3.0)
        assert report["known_top5"] is None  # only 3 classes
        assert not report["mcc_degenerate"]

    def test_verdict_csv_shape(self):
        samples = self.build_samples()
        score_all(samples)
        buf = io.StringIO()
        write_verdict_csv(samples, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "sample_id,true_label,exit_index,predicted,case_tag,max_score_at_exit"
        assert len(lines) == 6
        assert lines[3].startswith("k3,2,,UNKNOWN,K3,")
