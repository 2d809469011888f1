import numpy as np
import pytest

from otfssim.constellation import build_qam, map_bits, slice_symbols

RT2 = np.sqrt(2.0)
RT10 = np.sqrt(10.0)


class TestBuildQam:
    def test_qpsk_points_by_label(self):
        c = build_qam(4)
        # label = (i_bit, q_bit); one bit per rail, amplitudes -1/+1 over sqrt(2)
        expected = np.array([-1 - 1j, -1 + 1j, 1 - 1j, 1 + 1j]) / RT2
        np.testing.assert_allclose(c.points, expected, atol=1e-15)

    def test_16qam_corner_and_inner_points(self):
        c = build_qam(16)
        # per-rail Gray order maps bit pairs 00,01,11,10 to -3,-1,+1,+3
        np.testing.assert_allclose(c.points[0b0000], (-3 - 3j) / RT10, atol=1e-15)
        np.testing.assert_allclose(c.points[0b1010], (3 + 3j) / RT10, atol=1e-15)
        np.testing.assert_allclose(c.points[0b0111], (-1 + 1j) / RT10, atol=1e-15)
        np.testing.assert_allclose(c.points[0b1101], (1 - 1j) / RT10, atol=1e-15)

    @pytest.mark.parametrize("order", [4, 16, 64, 256])
    def test_unit_mean_energy(self, order):
        c = build_qam(order)
        np.testing.assert_allclose(np.mean(np.abs(c.points) ** 2), 1.0, atol=1e-12)

    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_gray_property_adjacent_points_differ_in_one_bit(self, order):
        # sort one rail by amplitude; neighbouring labels flip exactly one bit
        c = build_qam(order)
        side = int(np.sqrt(order))
        m = c.bits_per_symbol // 2
        by_real = {}
        for label in range(order):
            by_real.setdefault(np.round(c.points[label].real, 9), set()).add(label >> m)
        reals = sorted(by_real)
        assert len(reals) == side
        rail_labels = [next(iter(by_real[r])) for r in reals]
        for a, b in zip(rail_labels, rail_labels[1:]):
            assert bin(a ^ b).count("1") == 1

    def test_labels_match_label_index(self):
        c = build_qam(16)
        weights = 1 << np.arange(3, -1, -1)
        np.testing.assert_array_equal(c.labels @ weights, np.arange(16))

    def test_arrays_are_read_only(self):
        c = build_qam(4)
        with pytest.raises(ValueError):
            c.points[0] = 0

    @pytest.mark.parametrize("order", [0, 1, 2, 3, 8, 12, 32, -4])
    def test_rejects_non_square_or_tiny_orders(self, order):
        with pytest.raises(ValueError):
            build_qam(order)


class TestMapBits:
    def test_qpsk_known_words(self):
        c = build_qam(4)
        got = map_bits(c, np.array([0, 0, 1, 1, 0, 1, 1, 0]))
        expected = np.array([-1 - 1j, 1 + 1j, -1 + 1j, 1 - 1j]) / RT2
        np.testing.assert_allclose(got, expected, atol=1e-15)

    def test_bit_group_is_msb_first(self):
        c = build_qam(16)
        got = map_bits(c, np.array([1, 0, 1, 0]))
        np.testing.assert_allclose(got, c.points[0b1010], atol=1e-15)

    def test_empty_input(self):
        c = build_qam(4)
        assert map_bits(c, np.array([], dtype=int)).size == 0

    def test_rejects_ragged_length(self):
        c = build_qam(16)
        with pytest.raises(ValueError):
            map_bits(c, np.zeros(6, dtype=int))


class TestSliceSymbols:
    def test_nearest_point_matches_bruteforce(self):
        rng = np.random.default_rng(5)
        for order in (4, 16, 64):
            c = build_qam(order)
            z = rng.standard_normal(200) + 1j * rng.standard_normal(200)
            hard, _ = slice_symbols(c, z)
            for zi, hi in zip(z, hard):
                d = np.abs(zi - c.points) ** 2
                assert abs(hi - c.points[int(np.argmin(d))]) < 1e-15

    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_round_trip_through_mapping(self, order):
        rng = np.random.default_rng(8)
        c = build_qam(order)
        bits = rng.integers(0, 2, size=80 * c.bits_per_symbol)
        hard, recovered = slice_symbols(c, map_bits(c, bits))
        np.testing.assert_array_equal(recovered.reshape(-1), bits)
        np.testing.assert_allclose(hard, map_bits(c, bits), atol=1e-15)

    def test_round_trip_survives_small_noise(self):
        rng = np.random.default_rng(9)
        c = build_qam(64)
        bits = rng.integers(0, 2, size=120 * c.bits_per_symbol)
        sym = map_bits(c, bits)
        # half the minimum point spacing keeps every decision correct
        sym = sym + 0.05 * (rng.standard_normal(120) + 1j * rng.standard_normal(120))
        _, recovered = slice_symbols(c, sym)
        np.testing.assert_array_equal(recovered.reshape(-1), bits)

    def test_scalar_in_scalar_out(self):
        c = build_qam(4)
        hard, bits = slice_symbols(c, 0.9 + 0.8j)
        assert np.isscalar(hard) or hard.ndim == 0
        np.testing.assert_allclose(complex(hard), (1 + 1j) / RT2, atol=1e-15)
        np.testing.assert_array_equal(np.asarray(bits).reshape(-1), [1, 1])
