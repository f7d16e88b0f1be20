"""Set BCE, soft-label expectation H, and the determined risk estimator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmll import risk
from dmll.errors import DimensionError, DmllError, NonFiniteLossError

LN2 = np.log(2.0)


class TestConfig:
    def test_rejects_bad_k(self):
        with pytest.raises(DmllError, match="k must be"):
            risk.RiskConfig(k=0)

    def test_rejects_bad_epsilon(self):
        with pytest.raises(DmllError, match="epsilon"):
            risk.RiskConfig(k=3, epsilon=0.0)
        with pytest.raises(DmllError, match="epsilon"):
            risk.RiskConfig(k=3, epsilon=0.5)

    def test_rejects_unknown_weighting(self):
        with pytest.raises(DmllError, match="weighting"):
            risk.RiskConfig(k=3, weighting="exact")


class TestSetBce:
    def test_hand_value(self):
        val = risk.bce_set_loss(np.array([0.9, 0.2]), {0})
        assert val == pytest.approx(-np.log(0.9) - np.log(0.8), rel=1e-12)

    def test_out_of_range_label(self):
        with pytest.raises(DmllError, match="out of range"):
            risk.bce_set_loss(np.array([0.5, 0.5]), {2})


class TestExpectedLossH:
    def test_matches_set_bce_on_hard_labels(self):
        rng = np.random.default_rng(0)
        probs = rng.uniform(0.05, 0.95, size=6)
        positives = {1, 4}
        hard = np.zeros(6)
        hard[list(positives)] = 1.0
        assert risk.expected_loss_H(probs, hard) == pytest.approx(
            risk.bce_set_loss(probs, positives), rel=1e-12
        )

    def test_linear_in_soft_labels(self):
        rng = np.random.default_rng(1)
        probs = rng.uniform(0.1, 0.9, size=5)
        d1, d2 = rng.uniform(size=5), rng.uniform(size=5)
        for alpha in (0.0, 0.3, 1.0):
            mix = alpha * d1 + (1 - alpha) * d2
            expect = alpha * risk.expected_loss_H(probs, d1) + (1 - alpha) * risk.expected_loss_H(probs, d2)
            assert risk.expected_loss_H(probs, mix) == pytest.approx(expect, rel=1e-12)

    def test_rows_for_matrix_input(self):
        probs = np.full((3, 2), 0.5)
        soft = np.tile([1.0, 0.0], (3, 1))
        out = risk.expected_loss_H(probs, soft)
        np.testing.assert_allclose(out, 2 * LN2)
        assert out.shape == (3,)

    def test_rejects_soft_out_of_range(self):
        with pytest.raises(DmllError, match=r"\[0, 1\]"):
            risk.expected_loss_H(np.array([0.5]), np.array([1.5]))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DimensionError):
            risk.expected_loss_H(np.full((2, 3), 0.5), np.full((3, 3), 0.5))


class TestSigmoid:
    def test_symmetry_and_extremes(self):
        x = np.array([-800.0, -3.0, 0.0, 3.0, 800.0])
        s = risk.sigmoid(x)
        assert np.all(np.isfinite(s))
        np.testing.assert_allclose(s + risk.sigmoid(-x), 1.0, atol=1e-15)
        assert s[2] == 0.5

    def test_zero_dim_input(self):
        assert float(risk.sigmoid(0.0)) == 0.5


class TestRecoverSoftLabels:
    def test_pins_determined_class(self):
        cfg = risk.RiskConfig(k=3)
        d = risk.recover_soft_labels(np.array([0.0, 2.0, -2.0]), (1, 0), cfg)
        assert d[1] == 0.0
        assert d[0] == 0.5

    def test_none_keeps_raw_sigmoid(self):
        cfg = risk.RiskConfig(k=2)
        logits = np.array([1.0, -1.0])
        np.testing.assert_array_equal(risk.recover_soft_labels(logits, None, cfg), risk.sigmoid(logits))

    def test_rejects_bad_value(self):
        with pytest.raises(DmllError, match="value"):
            risk.recover_soft_labels(np.zeros(2), (0, 2), risk.RiskConfig(k=2))


class TestPartitionCoefficients:
    def test_corrected_sums_to_two_over_k(self):
        # each partition mean carries total weight 1/k
        cfg = risk.RiskConfig(k=5, weighting="corrected")
        value = np.array([1, 1, 0, 0, 0])
        t, p = risk.partition_coefficients(np.full((5, 5), 0.5), np.zeros(5, dtype=int), value, cfg)
        assert t[value == 1].sum() == pytest.approx(1 / 5)
        assert t[value == 0].sum() == pytest.approx(1 / 5)
        np.testing.assert_array_equal(p, 1.0)

    def test_oracle_is_plain_mean(self):
        cfg = risk.RiskConfig(k=4, weighting="oracle")
        t, _ = risk.partition_coefficients(np.zeros((3, 4)), np.zeros(3, dtype=int), np.array([1, 0, 1]), cfg)
        np.testing.assert_allclose(t, 1 / 3)

    def test_estimated_divides_by_clamped_probability(self):
        cfg = risk.RiskConfig(k=2, weighting="estimated", epsilon=1e-3)
        soft = np.array([[0.8, 0.5], [1e-9, 0.5]])
        gamma = np.array([0, 0])
        value = np.array([1, 1])
        t, p_raw = risk.partition_coefficients(soft, gamma, value, cfg)
        # both positive: partition mean 1/2, importance weight 1/(p*k)
        assert t[0] == pytest.approx(0.5 / (0.8 * 2))
        assert t[1] == pytest.approx(0.5 / (1e-3 * 2))
        assert p_raw[1] == pytest.approx(1e-9)

    def test_estimated_negative_uses_complement(self):
        cfg = risk.RiskConfig(k=2, weighting="estimated")
        soft = np.array([[0.8, 0.5]])
        t, p_raw = risk.partition_coefficients(soft, np.array([0]), np.array([0]), cfg)
        assert p_raw[0] == pytest.approx(0.2)
        assert t[0] == pytest.approx(1.0 / (0.2 * 2))


class TestSoftTargets:
    def test_corrected_pins_and_unmarks_gamma(self):
        cfg = risk.RiskConfig(k=3, weighting="corrected")
        probs = np.full((2, 3), 0.4)
        d, driven = risk.soft_targets(probs, np.array([0, 2]), np.array([1, 0]), cfg)
        assert d[0, 0] == 1.0 and d[1, 2] == 0.0
        assert not driven[0, 0] and not driven[1, 2]
        assert driven[0, 1] and driven[1, 0]

    def test_estimated_keeps_probs(self):
        cfg = risk.RiskConfig(k=2, weighting="estimated")
        probs = np.array([[0.3, 0.7]])
        d, driven = risk.soft_targets(probs, np.array([0]), np.array([1]), cfg)
        np.testing.assert_array_equal(d, probs)
        assert driven.all()

    def test_oracle_requires_conditionals(self):
        cfg = risk.RiskConfig(k=2, weighting="oracle")
        with pytest.raises(DmllError, match="conditionals"):
            risk.soft_targets(np.full((1, 2), 0.5), np.array([0]), np.array([1]), cfg)

    def test_oracle_pins_conditionals(self):
        cfg = risk.RiskConfig(k=2, weighting="oracle")
        cond = np.array([[0.2, 0.9]])
        d, driven = risk.soft_targets(np.full((1, 2), 0.5), np.array([0]), np.array([1]), cfg, conditionals=cond)
        assert d[0, 0] == 1.0 and d[0, 1] == 0.9
        assert not driven.any()
        assert cond[0, 0] == 0.2  # caller's array untouched


class TestDeterminedBatchRisk:
    def test_corrected_hand_value(self):
        # one sample, k = 2: H = 2 ln 2, partition weight 1/k
        cfg = risk.RiskConfig(k=2, weighting="corrected")
        probs = np.array([[0.5, 0.5]])
        soft = np.array([[1.0, 0.5]])
        val = risk.determined_batch_risk(probs, soft, np.array([0]), np.array([1]), cfg)
        assert val == pytest.approx(2 * LN2 / 2, rel=1e-12)

    def test_corrected_is_partition_means(self):
        cfg = risk.RiskConfig(k=3, weighting="corrected")
        rng = np.random.default_rng(2)
        n = 40
        probs = rng.uniform(0.1, 0.9, size=(n, 3))
        gamma = rng.integers(0, 3, size=n)
        value = rng.integers(0, 2, size=n)
        soft = probs.copy()
        soft[np.arange(n), gamma] = value
        got = risk.determined_batch_risk(probs, soft, gamma, value, cfg)
        h = risk.expected_loss_H(np.clip(probs, cfg.epsilon, 1 - cfg.epsilon), soft)
        expect = (h[value == 1].mean() + h[value == 0].mean()) / 3
        assert got == pytest.approx(expect, rel=1e-12)

    def test_oracle_pins_internally(self):
        # gamma coordinate of the supplied conditionals must not matter
        cfg = risk.RiskConfig(k=2, weighting="oracle")
        probs = np.array([[0.6, 0.3]])
        gamma, value = np.array([0]), np.array([1])
        a = risk.determined_batch_risk(probs, np.array([[0.123, 0.8]]), gamma, value, cfg)
        b = risk.determined_batch_risk(probs, np.array([[0.999, 0.8]]), gamma, value, cfg)
        assert a == b

    def test_rejects_empty_batch(self):
        cfg = risk.RiskConfig(k=2)
        with pytest.raises(DmllError, match="nonempty"):
            risk.determined_batch_risk(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, int), np.zeros(0, int), cfg)

    def test_non_finite_soft_raises(self):
        cfg = risk.RiskConfig(k=2)
        with pytest.raises(NonFiniteLossError):
            risk.determined_batch_risk(
                np.array([[0.5, 0.5]]), np.array([[np.nan, 0.5]]), np.array([0]), np.array([1]), cfg
            )

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 6))
        n = int(rng.integers(1, 9))
        cfg = risk.RiskConfig(k=k, weighting=str(rng.choice(["corrected", "estimated"])))
        probs = rng.uniform(0.01, 0.99, size=(n, k))
        gamma = rng.integers(0, k, size=n)
        value = rng.integers(0, 2, size=n)
        soft, _ = risk.soft_targets(probs, gamma, value, cfg)
        assert risk.determined_batch_risk(probs, soft, gamma, value, cfg) >= 0.0


class TestUnbiasedness:
    def test_oracle_mode_matches_true_risk(self):
        # moderate-n version of the full acceptance check
        from dmll import model, oracle

        world = oracle.make_world(seed=21, k=4, d=5)
        params = model.init(seed=23, d=5, m=4, k=4)
        report = oracle.unbiasedness_report(world, params, n_samples=20_000, seed=3, weighting="oracle")
        assert report["z_score"] < 4.0
