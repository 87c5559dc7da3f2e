import math

import numpy as np
import pytest

from ofdmdl import ofdm
from ofdmdl.ofdm import OfdmConfig

ORDERS = [4, 16, 64, 256]


def test_qpsk_zero_bits():
    s = ofdm.qam_modulate([0, 0], 4)
    assert abs(s[0] - (1 + 1j) / math.sqrt(2)) < 1e-15


def test_qpsk_sign_convention():
    s = ofdm.qam_modulate([1, 0, 0, 1], 4)
    assert s[0].real < 0 < s[0].imag
    assert s[1].real > 0 > s[1].imag


@pytest.mark.parametrize("m", ORDERS)
def test_unit_energy_by_enumeration(m):
    pts, _ = ofdm.constellation(m)
    assert len(set(np.round(pts, 12))) == m
    assert abs(np.mean(np.abs(pts) ** 2) - 1.0) < 1e-12


@pytest.mark.parametrize("m", ORDERS)
def test_gray_neighbours_differ_by_one_bit(m):
    pts, labels = ofdm.constellation(m)
    d_min = np.min(np.abs(pts[:, None] - pts[None, :]) + np.eye(m) * 10)
    for a in range(m):
        for b in range(a + 1, m):
            if abs(abs(pts[a] - pts[b]) - d_min) < 1e-9:
                assert np.sum(labels[a] != labels[b]) == 1


@pytest.mark.parametrize("m", ORDERS)
def test_round_trip(m):
    rng = np.random.default_rng(m)
    bits = rng.integers(0, 2, size=10_000 * ofdm.bits_per_symbol(m), dtype=np.uint8)
    np.testing.assert_array_equal(ofdm.qam_demodulate(ofdm.qam_modulate(bits, m), m), bits)


def test_bad_length():
    with pytest.raises(ValueError):
        ofdm.qam_modulate([0, 1, 1], 16)


def test_bad_order():
    with pytest.raises(ValueError):
        OfdmConfig(mod_order=8)


@pytest.mark.parametrize("m", ORDERS)
def test_constellation_points_demap_to_own_labels(m):
    pts, labels = ofdm.constellation(m)
    np.testing.assert_array_equal(ofdm.qam_demodulate(pts, m), labels.reshape(-1))


def test_midpoint_tie_break_lower_label():
    pts, labels = ofdm.constellation(16)
    ints = labels @ (1 << np.arange(3, -1, -1))
    # two horizontally adjacent points in the top row
    a = int(np.argmin(np.abs(pts - ofdm.qam_modulate([0, 0, 0, 0], 16)[0])))
    b = int(np.argmin(np.abs(pts - (pts[a] - 2 / math.sqrt(10)))))
    mid = (pts[a] + pts[b]) / 2
    got = ofdm.qam_demodulate([mid], 16)
    want = labels[a] if ints[a] < ints[b] else labels[b]
    np.testing.assert_array_equal(got, want)
    np.testing.assert_array_equal(ofdm.qam_demodulate([mid], 16), got)


@pytest.mark.parametrize("m", ORDERS)
def test_matches_brute_force_nearest(m):
    rng = np.random.default_rng(7 + m)
    pts, labels = ofdm.constellation(m)
    s = pts[rng.integers(0, m, 10_000)] + 0.3 * (rng.normal(size=10_000) + 1j * rng.normal(size=10_000))
    s[:50] *= 5  # far outside the grid
    nearest = np.argmin(np.abs(s[:, None] - pts[None, :]), axis=1)
    np.testing.assert_array_equal(ofdm.qam_demodulate(s, m), labels[nearest].reshape(-1))


def test_apply_channel_identity():
    x = ofdm.qam_modulate(np.random.default_rng(0).integers(0, 2, 72 * 28 * 2), 4).reshape(72, 28)
    np.testing.assert_array_equal(ofdm.apply_channel(x, np.ones_like(x), np.zeros_like(x)), x)


def test_apply_channel_hand_product():
    y = ofdm.apply_channel(np.array([1 + 0j]), np.array([1j]), np.array([0j]))
    assert y[0] == 1j


def test_apply_channel_shape_mismatch():
    with pytest.raises(ValueError):
        ofdm.apply_channel(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))


def test_apply_channel_superposition():
    rng = np.random.default_rng(3)
    g = lambda: rng.normal(size=(6, 5)) + 1j * rng.normal(size=(6, 5))
    h, x1, x2, w1, w2 = g(), g(), g(), g(), g()
    a, b = 0.7 - 0.2j, -1.3
    lhs = ofdm.apply_channel(a * x1 + b * x2, h, a * w1 + b * w2)
    rhs = a * ofdm.apply_channel(x1, h, w1) + b * ofdm.apply_channel(x2, h, w2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_apply_channel_second_moment():
    rng = np.random.default_rng(4)
    n = 100_000
    x = ofdm.qam_modulate(rng.integers(0, 2, n * 4), 16)
    h = (rng.normal(size=n) + 1j * rng.normal(size=n)) * math.sqrt(0.5 * 1.5)
    w, var = ofdm.noise_for_snr(3.0, OfdmConfig(), rng, shape=(n,))
    y = ofdm.apply_channel(x, h, w)
    expected = np.mean(np.abs(h) ** 2) * np.mean(np.abs(x) ** 2) + var
    theory = 1.5 * 1.0 + var
    assert abs(np.mean(np.abs(y) ** 2) / expected - 1) < 0.02
    assert abs(np.mean(np.abs(y) ** 2) / theory - 1) < 0.02


def test_noise_variance_values():
    assert ofdm.noise_variance(0.0) == 1.0
    assert abs(ofdm.noise_variance(20.0) - 0.01) < 1e-15


def test_noise_sample_variance():
    rng = np.random.default_rng(5)
    w, var = ofdm.noise_for_snr(7.0, OfdmConfig(), rng, shape=(1_000_000,))
    assert abs(np.mean(np.abs(w) ** 2) / var - 1) < 0.01
    assert abs(np.var(w.real) / (var / 2) - 1) < 0.01


def test_channel_planes_round_trip():
    g = np.arange(6.0).reshape(3, 2) + 1j
    planes = ofdm.to_channels(g)
    assert planes.shape == (2, 3, 2)
    np.testing.assert_array_equal(ofdm.from_channels(planes), g)
