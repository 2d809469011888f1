import numpy as np
import pytest

from otfssim.channel import (ChannelPath, DdChannel, apply_channel_scalar,
                             build_time_channel, sample_channel)
from otfssim.modem import OtfsGeometry


def shift_times_ramp(n, gain, delay, doppler):
    """Independent oracle: gain * S(delay) @ D(doppler) from explicit matrices."""
    shift = np.roll(np.eye(n), delay, axis=0)
    ramp = np.diag(np.exp(2j * np.pi * doppler * np.arange(n) / n))
    return gain * shift @ ramp


class TestBuildTimeChannel:
    def test_single_path_entries(self):
        geom = OtfsGeometry(3, 2)  # n = 6
        ch = DdChannel((ChannelPath(0.5 + 0.5j, 2, 1),), l_max=2, k_max=1)
        h = build_time_channel(geom, ch)
        # column c feeds row (c + 2) mod 6 with gain * exp(2j pi c / 6)
        assert np.count_nonzero(h) == 6
        for c in range(6):
            expected = (0.5 + 0.5j) * np.exp(2j * np.pi * c / 6)
            np.testing.assert_allclose(h[(c + 2) % 6, c], expected, atol=1e-15)

    def test_matches_shift_ramp_oracle(self):
        geom = OtfsGeometry(4, 3)
        rng = np.random.default_rng(2)
        n = geom.grid_size
        for _ in range(10):
            ch = sample_channel(rng, 5, 3, 2)
            oracle = sum(shift_times_ramp(n, p.gain, p.delay_idx, p.doppler_idx)
                         for p in ch.paths)
            np.testing.assert_allclose(build_time_channel(geom, ch), oracle, atol=1e-12)

    def test_column_sparsity_bounded_by_path_count(self):
        geom = OtfsGeometry(12, 7)
        rng = np.random.default_rng(3)
        for paths in (1, 6, 18):
            ch = sample_channel(rng, paths, 6, 3)
            h = build_time_channel(geom, ch)
            nonzeros = np.count_nonzero(np.abs(h) > 0, axis=0)
            assert nonzeros.max() <= paths

    def test_zero_doppler_channel_is_circulant(self):
        geom = OtfsGeometry(4, 2)
        ch = DdChannel((ChannelPath(1.0, 0, 0), ChannelPath(0.3j, 3, 0)), 3, 0)
        h = build_time_channel(geom, ch)
        first = h[:, 0]
        for c in range(1, 8):
            np.testing.assert_allclose(h[:, c], np.roll(first, c), atol=1e-15)

    def test_rejects_delay_beyond_frame(self):
        geom = OtfsGeometry(2, 2)
        ch = DdChannel((ChannelPath(1.0, 5, 0),), l_max=5, k_max=0)
        with pytest.raises(ValueError):
            build_time_channel(geom, ch)


class TestApplyChannelScalar:
    def test_matches_matrix_product_without_noise(self):
        geom = OtfsGeometry(12, 7)
        rng = np.random.default_rng(5)
        n = geom.grid_size
        for paths in (1, 6, 18):
            for _ in range(5):
                ch = sample_channel(rng, paths, 6, 3)
                s = rng.standard_normal(n) + 1j * rng.standard_normal(n)
                r = apply_channel_scalar(geom, ch, s, None, 0.0)
                np.testing.assert_allclose(r, build_time_channel(geom, ch) @ s,
                                           atol=1e-12)

    def test_noise_variance_and_determinism(self):
        geom = OtfsGeometry(12, 7)
        n = geom.grid_size
        ch = DdChannel((ChannelPath(1.0, 0, 0),), 1, 0)
        s = np.zeros(n, dtype=complex)
        sigma2 = 0.25
        draws = np.concatenate([
            apply_channel_scalar(geom, ch, s, np.random.default_rng(seed), sigma2)
            for seed in range(200)])
        measured = np.mean(np.abs(draws) ** 2)
        assert abs(measured - sigma2) < 0.05 * sigma2
        again = apply_channel_scalar(geom, ch, s, np.random.default_rng(0), sigma2)
        np.testing.assert_array_equal(again, draws[:n])

    def test_requires_rng_for_noise(self):
        geom = OtfsGeometry(2, 2)
        ch = DdChannel((ChannelPath(1.0, 0, 0),), 1, 0)
        with pytest.raises(ValueError):
            apply_channel_scalar(geom, ch, np.zeros(4, dtype=complex), None, 0.1)

    def test_rejects_negative_sigma2_and_bad_length(self):
        geom = OtfsGeometry(2, 2)
        ch = DdChannel((ChannelPath(1.0, 0, 0),), 1, 0)
        with pytest.raises(ValueError):
            apply_channel_scalar(geom, ch, np.zeros(4, dtype=complex), None, -1.0)
        with pytest.raises(ValueError):
            apply_channel_scalar(geom, ch, np.zeros(5, dtype=complex), None, 0.0)


class TestSampleChannel:
    def test_index_ranges(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            ch = sample_channel(rng, 14, 6, 3)
            assert ch.paths[0].delay_idx == 0
            for p in ch.paths[1:]:
                assert 1 <= p.delay_idx <= 6
            for p in ch.paths:
                assert -3 <= p.doppler_idx <= 3

    def test_zero_doppler_bound(self):
        rng = np.random.default_rng(8)
        ch = sample_channel(rng, 6, 4, 0)
        assert all(p.doppler_idx == 0 for p in ch.paths)

    def test_mean_total_power_is_one(self):
        rng = np.random.default_rng(9)
        power = [sum(abs(p.gain) ** 2 for p in sample_channel(rng, 8, 6, 3).paths)
                 for _ in range(4000)]
        assert abs(np.mean(power) - 1.0) < 0.03

    def test_deterministic_under_seed(self):
        a = sample_channel(np.random.default_rng(11), 6, 6, 3)
        b = sample_channel(np.random.default_rng(11), 6, 6, 3)
        assert a == b

    @pytest.mark.parametrize("args", [(0, 6, 3), (3, 0, 3), (3, 6, -1)])
    def test_rejects_bad_parameters(self, args):
        with pytest.raises(ValueError):
            sample_channel(np.random.default_rng(0), *args)


class TestDdChannel:
    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            DdChannel((ChannelPath(1.0, 4, 0),), l_max=3, k_max=0)
        with pytest.raises(ValueError):
            DdChannel((ChannelPath(1.0, 0, 2),), l_max=3, k_max=1)

    def test_text_round_trip(self):
        rng = np.random.default_rng(13)
        ch = sample_channel(rng, 5, 6, 3)
        back = DdChannel.from_text(ch.to_text())
        assert back == ch

    def test_from_text_infers_bounds(self):
        ch = DdChannel.from_text("0.5 -0.25 2 -1\n0.1 0.0 4 3\n")
        assert ch.l_max == 4 and ch.k_max == 3
        assert ch.paths[0] == ChannelPath(0.5 - 0.25j, 2, -1)

    def test_from_text_rejects_empty(self):
        with pytest.raises(ValueError):
            DdChannel.from_text("# l_max=3 k_max=1\n")
