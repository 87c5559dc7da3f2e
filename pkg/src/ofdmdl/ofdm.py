"""Frequency-domain OFDM frame model: Gray QAM, per-RE channel, calibrated noise.

Labeling convention for square M-QAM with ``m = log2(M) / 2`` bits per axis:
the first ``m`` bits of a symbol select the in-phase level and the last ``m``
the quadrature level. Along each axis the levels are ordered from most
positive to most negative and labeled with the binary-reflected Gray code, so
the leading bit of each axis is its sign bit with ``0`` mapping to positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64, 256)


@dataclass(frozen=True)
class OfdmConfig:
    """One frame of ``n_subcarriers x n_slots`` resource elements."""

    n_subcarriers: int = 72
    n_slots: int = 28
    subcarrier_spacing: float = 15e3
    carrier_hz: float = 2.5e9
    mod_order: int = 256

    def __post_init__(self):
        if self.n_subcarriers < 1 or self.n_slots < 1:
            raise ValueError("grid dimensions must be positive")
        if self.mod_order not in SUPPORTED_ORDERS:
            raise ValueError(f"modulation order must be one of {SUPPORTED_ORDERS}")
        if self.subcarrier_spacing <= 0:
            raise ValueError("subcarrier spacing must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_subcarriers, self.n_slots)

    @property
    def bits_per_symbol(self) -> int:
        return bits_per_symbol(self.mod_order)


def bits_per_symbol(m: int) -> int:
    if m not in SUPPORTED_ORDERS:
        raise ValueError(f"modulation order must be one of {SUPPORTED_ORDERS}, got {m}")
    return int(np.log2(m))


@lru_cache(maxsize=None)
def _axis_tables(m: int):
    """Per-axis level values (index 0 most positive), Gray labels and inverse."""
    side = int(round(np.sqrt(m)))
    idx = np.arange(side)
    scale = 1.0 / np.sqrt(2.0 * (m - 1) / 3.0)
    levels = (side - 1 - 2 * idx) * scale
    gray = idx ^ (idx >> 1)
    index_of_label = np.empty(side, dtype=np.int64)
    index_of_label[gray] = idx
    return levels, gray, index_of_label, scale


def _bits_to_int(bits: np.ndarray) -> np.ndarray:
    w = 1 << np.arange(bits.shape[-1] - 1, -1, -1)
    return bits.astype(np.int64) @ w


def _int_to_bits(vals: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1)
    return ((vals[..., None] >> shifts) & 1).astype(np.uint8)


def constellation(m: int) -> tuple[np.ndarray, np.ndarray]:
    """All ``m`` points and their bit labels, ordered by integer label."""
    b = bits_per_symbol(m)
    labels = _int_to_bits(np.arange(m), b)
    return qam_modulate(labels.reshape(-1), m), labels


def qam_modulate(bits, m: int) -> np.ndarray:
    """Map a flat bit array to unit-average-energy Gray QAM symbols."""
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    b = bits_per_symbol(m)
    if bits.size % b:
        raise ValueError(f"{bits.size} bits is not a multiple of {b}")
    half = b // 2
    groups = bits.reshape(-1, b)
    levels, _, index_of_label, _ = _axis_tables(m)
    i_lab = _bits_to_int(groups[:, :half])
    q_lab = _bits_to_int(groups[:, half:])
    return levels[index_of_label[i_lab]] + 1j * levels[index_of_label[q_lab]]


def _axis_decide(x: np.ndarray, m: int) -> np.ndarray:
    """Threshold quantizer returning Gray labels; ties go to the lower label."""
    levels, gray, _, scale = _axis_tables(m)
    side = levels.size
    u = ((side - 1) - x / scale) / 2.0  # continuous level index
    lo = np.clip(np.floor(u), 0, side - 1).astype(np.int64)
    hi = np.minimum(lo + 1, side - 1)
    frac = u - lo
    idx = np.where(frac > 0.5, hi, lo)
    tie = frac == 0.5
    if np.any(tie):
        idx = np.where(tie & (gray[hi] < gray[lo]), hi, idx)
    idx = np.where(u <= 0, 0, np.where(u >= side - 1, side - 1, idx))
    return gray[idx]


def qam_demodulate(symbols, m: int) -> np.ndarray:
    """Hard-decision minimum-distance demapping to a flat bit array."""
    s = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    b = bits_per_symbol(m)
    half = b // 2
    i_bits = _int_to_bits(_axis_decide(s.real, m), half)
    q_bits = _int_to_bits(_axis_decide(s.imag, m), half)
    return np.concatenate([i_bits, q_bits], axis=1).reshape(-1)


def apply_channel(x: np.ndarray, h: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``Y = H * X + W`` per resource element."""
    x, h, w = np.asarray(x), np.asarray(h), np.asarray(w)
    if not (x.shape == h.shape == w.shape):
        raise ValueError(f"shape mismatch: X{x.shape} H{h.shape} W{w.shape}")
    return h * x + w


def noise_variance(snr_db: float) -> float:
    """Per-RE noise variance for unit-energy symbols."""
    return float(10.0 ** (-snr_db / 10.0))


def noise_for_snr(snr_db: float, config: OfdmConfig, rng: np.random.Generator,
                  shape: tuple[int, ...] | None = None) -> tuple[np.ndarray, float]:
    """Draw a CN(0, sigma^2) noise grid for the given SNR."""
    var = noise_variance(snr_db)
    shape = config.shape if shape is None else shape
    std = np.sqrt(var / 2.0)
    w = std * rng.standard_normal(shape) + 1j * std * rng.standard_normal(shape)
    return w, var


def to_channels(grid: np.ndarray) -> np.ndarray:
    """Complex ``... x K x N`` grid to real ``... x 2 x K x N`` (real, imag)."""
    return np.stack([grid.real, grid.imag], axis=-3)


def from_channels(planes: np.ndarray) -> np.ndarray:
    return planes[..., 0, :, :] + 1j * planes[..., 1, :, :]
