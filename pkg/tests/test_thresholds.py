import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtosr.errors import CalibrationError
from rtosr.model import ModelConfig, MultiExitNetwork
from rtosr.thresholds import (
    ThresholdSet,
    compute_inference_thresholds,
    init_training_thresholds,
    max_scores_per_exit,
    thresholds_from_json,
    thresholds_to_json,
    training_exit_of,
    training_exits,
    update_training_thresholds,
)


def sorted_median(values):
    """Sort-and-index oracle: middle element, or mean of the central two."""
    s = sorted(values)
    n = len(s)
    if n % 2 == 1:
        return s[n // 2]
    return (s[n // 2 - 1] + s[n // 2]) / 2.0


def make_net(seed=0, n_exits=2, n_classes=3):
    cfg = ModelConfig(4, n_classes, (8,) * n_exits, n_exits=n_exits, rng_seed=seed)
    return MultiExitNetwork.initialize(cfg)


class TestThresholdSet:
    def test_values_in_unit_interval(self):
        with pytest.raises(ValueError):
            ThresholdSet((0.5, 1.2), "training")

    def test_kind_restricted(self):
        with pytest.raises(ValueError):
            ThresholdSet((0.5, 0.5), "test")

    def test_json_roundtrip(self):
        ts = ThresholdSet((0.25, 0.5, 0.75), "inference", epoch_computed=12)
        assert thresholds_from_json(thresholds_to_json(ts)) == ts


class TestInit:
    def test_five_exits_all_zero(self):
        ts = init_training_thresholds(5)
        assert ts.values == (0.0,) * 5
        assert ts.kind == "training"
        assert ts.epoch_computed == 0

    def test_two_exits(self):
        assert init_training_thresholds(2).values == (0.0, 0.0)

    def test_idempotent(self):
        assert init_training_thresholds(5) == init_training_thresholds(5)

    def test_minimum_exits(self):
        with pytest.raises(ValueError):
            init_training_thresholds(1)


class TestMedianUpdates:
    def test_odd_count_median(self):
        # craft scores {0.2, 0.5, 0.9}-like by checking against the oracle
        net = make_net(seed=1)
        x = np.random.default_rng(5).normal(size=(9, 4))
        ts = update_training_thresholds(net, x, epoch=5)
        scores = max_scores_per_exit(net, x)
        for k in range(2):
            assert ts.values[k] == pytest.approx(sorted_median(scores[k]), abs=0)

    def test_constant_scores(self):
        net = make_net(seed=2)
        for k in range(2):
            net.exit_w[k][:] = 0.0
            net.exit_b[k][:] = 0.0
        x = np.random.default_rng(6).normal(size=(17, 4))
        ts = update_training_thresholds(net, x, epoch=10)
        assert ts.values == pytest.approx((1 / 3, 1 / 3))

    def test_zero_logit_model_threshold_is_uniform(self):
        net = make_net(seed=3, n_classes=4)
        for k in range(2):
            net.exit_w[k][:] = 0.0
            net.exit_b[k][:] = 0.0
        x = np.random.default_rng(7).normal(size=(11, 4))
        ts = compute_inference_thresholds(net, x)
        assert ts.values == pytest.approx((0.25, 0.25))
        assert ts.kind == "inference"

    def test_training_and_inference_rules_agree(self):
        net = make_net(seed=4)
        x = np.random.default_rng(8).normal(size=(101, 4))
        a = update_training_thresholds(net, x, epoch=5)
        b = compute_inference_thresholds(net, x, epoch=5)
        assert a.values == b.values
        assert (a.kind, b.kind) == ("training", "inference")

    @pytest.mark.parametrize("n", [101, 1000, 1001])
    def test_matches_sort_oracle(self, n):
        net = make_net(seed=5, n_exits=3)
        x = np.random.default_rng(9).normal(size=(n, 4))
        ts = update_training_thresholds(net, x, epoch=5)
        scores = max_scores_per_exit(net, x)
        for k in range(3):
            oracle = sorted_median(list(scores[k]))
            if n % 2 == 1:
                assert ts.values[k] == oracle  # exact for odd counts
            else:
                assert ts.values[k] == pytest.approx(oracle, rel=1e-12)

    def test_permutation_invariant(self):
        net = make_net(seed=6)
        rng = np.random.default_rng(10)
        x = rng.normal(size=(30, 4))
        a = update_training_thresholds(net, x, epoch=5)
        b = update_training_thresholds(net, x[rng.permutation(30)], epoch=5)
        assert a.values == pytest.approx(b.values, abs=0)

    def test_empty_validation_set_rejected(self):
        with pytest.raises(CalibrationError):
            update_training_thresholds(make_net(), np.empty((0, 4)), epoch=5)


class TestTrainingExit:
    def probs(self, *rows_per_exit):
        return [np.array(rows) for rows in rows_per_exit]

    def test_correct_and_confident_exits_first(self):
        probs = self.probs([[0.8, 0.1, 0.1]], [[0.9, 0.05, 0.05]])
        ts = ThresholdSet((0.5, 0.5), "training")
        assert training_exits(probs, np.array([0]), ts)[0] == 1

    def test_confident_but_wrong_falls_through(self):
        probs = self.probs([[0.8, 0.1, 0.1]], [[0.1, 0.85, 0.05]])
        ts = ThresholdSet((0.5, 0.5), "training")
        assert training_exits(probs, np.array([1]), ts)[0] == 2

    def test_never_qualifying_lands_on_final_exit(self):
        probs = self.probs([[0.4, 0.3, 0.3]], [[0.35, 0.35, 0.3]])
        ts = ThresholdSet((0.9, 0.9), "training")
        assert training_exits(probs, np.array([0]), ts)[0] == 2

    def test_penalized_convention_behind_flag(self):
        probs = self.probs([[0.4, 0.3, 0.3]], [[0.35, 0.35, 0.3]])
        ts = ThresholdSet((0.9, 0.9), "training")
        assert training_exits(probs, np.array([0]), ts, penalize_no_exit=True)[0] == 3

    def test_exhaustive_small_cases_match_decision_table(self):
        # every combination of (confident, correct) per exit for 2 exits
        ts = ThresholdSet((0.5, 0.5), "training")
        for conf1 in (False, True):
            for corr1 in (False, True):
                for conf2 in (False, True):
                    for corr2 in (False, True):
                        top1 = 0.8 if conf1 else 0.4
                        top2 = 0.8 if conf2 else 0.4
                        row1 = [top1, 1 - top1 - 0.05, 0.05]
                        row2 = [top2, 1 - top2 - 0.05, 0.05]
                        y = 0
                        probs = self.probs(
                            [row1 if corr1 else row1[::-1]],
                            [row2 if corr2 else row2[::-1]],
                        )
                        got = training_exits(probs, np.array([y]), ts)[0]
                        if conf1 and corr1:
                            expected = 1
                        elif conf2 and corr2:
                            expected = 2
                        else:
                            expected = 2  # physically leaves at the last exit
                        assert got == expected

    def test_all_zero_thresholds_take_first_correct_exit(self):
        probs = self.probs(
            [[0.2, 0.5, 0.3]], [[0.6, 0.2, 0.2]], [[0.1, 0.8, 0.1]]
        )
        ts = ThresholdSet((0.0, 0.0, 0.0), "training")
        assert training_exits(probs, np.array([1]), ts)[0] == 1

    def test_tie_with_threshold_does_not_exit(self):
        probs = self.probs([[0.5, 0.25, 0.25]], [[0.6, 0.2, 0.2]])
        ts = ThresholdSet((0.5, 0.5), "training")
        assert training_exits(probs, np.array([0]), ts)[0] == 2

    def test_net_wrapper_matches_batch_rule(self):
        net = make_net(seed=12)
        x = np.random.default_rng(13).normal(size=4)
        ts = init_training_thresholds(2)
        probs = [q[None, :] for q in net.forward(x).probs]
        y = int(probs[-1][0].argmax())
        assert training_exit_of(net, x, y, ts) == training_exits(
            probs, np.array([y]), ts
        )[0]

    @given(
        st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2),
        st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2),
    )
    @settings(max_examples=60, deadline=None)
    def test_raising_thresholds_never_lowers_exit(self, base, bump):
        rng = np.random.default_rng(17)
        z = rng.random((6, 3))
        probs = [z / z.sum(axis=1, keepdims=True), np.roll(z, 1, axis=1) / z.sum(axis=1, keepdims=True)]
        y = rng.integers(0, 3, size=6)
        lo = ThresholdSet(tuple(min(b, 1.0) for b in base), "training")
        hi = ThresholdSet(
            tuple(min(b + d, 1.0) for b, d in zip(base, bump)), "training"
        )
        e_lo = training_exits(probs, y, lo)
        e_hi = training_exits(probs, y, hi)
        assert (e_hi >= e_lo).all()
