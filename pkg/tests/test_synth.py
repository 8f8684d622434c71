import logging
import math

import mpmath as mp
import numpy as np
import pytest

from cwm import objective as O
from cwm import records as R
from cwm import synth
from cwm import transform as T


def gen(**kw):
    kw.setdefault("n_users", 50)
    kw.setdefault("n_videos", 50)
    kw.setdefault("n_records", 5000)
    return synth.generate(synth.SynthConfig(**kw))


class TestGenerate:
    def test_deterministic(self, tmp_path):
        for i in range(2):
            ds, gt = gen(seed=7)
            R.write_csv(ds, tmp_path / f"d{i}.csv")
            synth.write_ground_truth(gt, tmp_path / f"g{i}.csv")
        assert (tmp_path / "d0.csv").read_bytes() == (tmp_path / "d1.csv").read_bytes()
        assert (tmp_path / "g0.csv").read_bytes() == (tmp_path / "g1.csv").read_bytes()

    def test_truncation_semantics(self):
        ds, gt = gen(durations=(10, 30, 90), seed=1)
        w, d = ds.watch_times(), ds.durations()
        np.testing.assert_array_equal(w, np.minimum(np.maximum(gt.true_cwt, 0.0), d))
        complete = np.array([r.complete for r in ds.records])
        np.testing.assert_array_equal(complete, gt.true_cwt >= d)
        np.testing.assert_array_equal(gt.true_r, T.normal_cdf(gt.extra["z"]))

    def test_monotone_timestamps(self):
        ds, _ = gen(start_time=1000.0)
        ts = ds.timestamps()
        assert ts[0] == 1000.0 and np.all(np.diff(ts) > 0)

    def test_noiseless_limit(self):
        ds, gt = gen(sigma_true=1e-12, durations=(20, 60), seed=2)
        expected = np.clip(synth.cwt_from_score(gt.true_score, 1 / 40), 0, ds.durations())
        np.testing.assert_allclose(ds.watch_times(), expected, rtol=1e-9, atol=1e-9)

    def test_complete_fraction_at_zero_score(self):
        # f_true == 0: P(complete) = Phi(-g'(30) / sigma)
        x = mp.sqrt(2) * mp.erfinv(2 * mp.exp(mp.mpf(-40) / 31) - 1)
        expected = float(mp.ncdf(-x / 2))
        assert expected == pytest.approx(0.617, abs=1e-3)
        ds, _ = gen(score_scale=0.0, bias=0.0, n_records=10000, seed=3)
        assert R.stats(ds).mean_complete_ratio == pytest.approx(expected, abs=0.02)

    def test_all_thirty_seconds(self):
        ds, _ = gen()
        assert set(ds.durations().tolist()) == {30.0}

    @pytest.mark.parametrize("maker,target", [(synth.wechat_like, 0.455), (synth.kuairand_like, 0.175)])
    def test_presets_hit_complete_ratio(self, maker, target):
        ds, gt = synth.generate(maker(seed=0))
        assert R.stats(ds).mean_complete_ratio == pytest.approx(target, abs=0.03)
        assert np.std(gt.true_score) == pytest.approx(2.0, rel=1e-9)

    def test_cwt_independent_of_duration(self):
        ds, gt = gen(durations=(5, 10, 30, 60, 120), n_records=100_000, n_videos=5000, seed=0)
        assert abs(np.corrcoef(gt.true_cwt, ds.durations())[0, 1]) <= 0.02

    def test_shorter_durations_complete_more(self):
        long_ds, _ = gen(durations=(60,), seed=4)
        short_ds, _ = gen(durations=(20,), seed=4)
        assert R.stats(short_ds).mean_complete_ratio > R.stats(long_ds).mean_complete_ratio

    def test_mle_consistency(self):
        ds, gt = gen(durations=(10, 30, 60), n_records=50_000, seed=5)
        w, d = ds.watch_times(), ds.durations()
        p = T.CostParams(1 / 40, 2.0)

        def avg(f):
            return float(np.mean(O.cwm_loss_batch(f, w, d, p)[0]))

        at_truth = avg(gt.true_score)
        assert at_truth < avg(gt.true_score + 0.5)
        assert at_truth < avg(gt.true_score - 0.5)

    def test_mlp_truth(self):
        ds, gt = gen(truth="mlp", seed=6, target_complete_ratio=0.3)
        assert gt.model.backbone == "mlp"
        assert R.stats(ds).mean_complete_ratio == pytest.approx(0.3, abs=0.03)

    def test_feedback_flags(self):
        ds, gt = gen(seed=8, n_records=20000)
        like = np.array([r.like_flag for r in ds.records])
        fwd = np.array([r.forward_flag for r in ds.records])
        assert not np.any(fwd & ~like)
        assert like.mean() == pytest.approx(np.mean(gt.true_r ** 2), abs=0.015)
        ds, _ = gen(feedback=False)
        assert not ds.has_feedback

    def test_ground_truth_round_trip(self, tmp_path):
        _, gt = gen(n_records=200)
        synth.write_ground_truth(gt, tmp_path / "gt.csv")
        back = synth.read_ground_truth(tmp_path / "gt.csv")
        np.testing.assert_array_equal(back["true_score"], gt.true_score)
        np.testing.assert_array_equal(back["true_cwt"], gt.true_cwt)

    @pytest.mark.parametrize("kw", [dict(n_records=0), dict(weights=(0.5, 0.4), durations=(1, 2)),
                                    dict(durations=(0,)), dict(sigma_true=0.0),
                                    dict(target_complete_ratio=1.0), dict(truth="tree")])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            synth.SynthConfig(**kw)


class TestUtility:
    def test_zero(self):
        for r, c in [(0.2, 0.1), (0.9, 1 / 40)]:
            assert synth.utility(0.0, r, c) == 0.0

    def test_value_at_maximiser(self):
        r, c = math.exp(-1), 1 / 40
        assert synth.utility(39.0, r, c) == pytest.approx(math.log(40) - 39 / 40, rel=1e-14)
        assert synth.utility(39.0, r, c) == pytest.approx(2.7139, abs=1e-4)
        assert synth.utility(39.0, r, c) > synth.utility(38.0, r, c)
        assert synth.utility(39.0, r, c) > synth.utility(40.0, r, c)

    def test_concave(self):
        u = synth.utility(np.linspace(0, 500, 2001), 0.7, 1 / 40)
        assert np.all(np.diff(u, 2) < 0)

    def test_domain(self):
        with pytest.raises(ValueError):
            synth.utility(-1.0, 0.5, 0.1)
        with pytest.raises(ValueError):
            synth.utility(1.0, 1.0, 0.1)
        with pytest.raises(ValueError):
            synth.utility(1.0, 0.5, 0.0)


class TestArgmax:
    def test_exact(self):
        assert synth.argmax_utility(math.exp(-1), 1 / 40) == pytest.approx(39.0, abs=0.01)

    def test_zero_at_threshold(self):
        c = 1 / 40
        assert synth.argmax_utility(math.exp(-1 / c), c) == 0.0

    def test_r_point_nine(self):
        c = 1 / 40
        expected = 1 / (-c * math.log(0.9)) - 1
        assert expected == pytest.approx(378.6, abs=0.05)
        assert synth.argmax_utility(0.9, c) == pytest.approx(expected, abs=0.01)

    def test_matches_transform(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            r, c = rng.uniform(0.05, 0.95), rng.uniform(1 / 80, 1 / 5)
            t = synth.argmax_utility(r, c)
            assert abs(t - max(T.cwt_from_interest(r, c), 0.0)) <= 0.01

    def test_short_grid_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            synth.argmax_utility(math.exp(-1), 1 / 40, t_max=10.0)
        assert "grid end" in caplog.text


class TestHistogram:
    def test_all_complete(self):
        counts, edges = synth.fixed_duration_histogram(np.full(7, 30.0), np.full(7, 30.0), 30.0)
        assert counts[-1] == 7 and counts[:-1].sum() == 0
        assert edges[0] == 0.0 and edges[-1] == 30.0

    def test_all_zero(self):
        counts, _ = synth.fixed_duration_histogram(np.zeros(5), np.full(5, 30.0), 30.0)
        assert counts[0] == 5 and counts[1:].sum() == 0

    def test_only_matching_duration(self):
        counts, _ = synth.fixed_duration_histogram([1.0, 40.0], [30.0, 60.0], 30.0, n_bins=3)
        assert counts.sum() == 1

    def test_missing_duration(self):
        with pytest.raises(ValueError):
            synth.fixed_duration_histogram([1.0], [10.0], 30.0)

    def test_bimodal_shape(self):
        ds, _ = gen(n_records=10_000, sigma_true=5.0, bias=-1.0, seed=0)
        counts, _ = synth.fixed_duration_histogram(ds.watch_times(), ds.durations(), 30.0, 20)
        assert counts[0] > counts[1] and counts[-1] > counts[-2]
