"""Per-resource-element ZF / RZF detection and bit-error accounting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ofdm import qam_demodulate

UNRECOVERABLE = 1e-12


def zf_detect(y: np.ndarray, h_hat: np.ndarray) -> np.ndarray:
    """``Y / H_hat``; entries with ``|H_hat| < 1e-12`` are set to 0 (a fixed symbol)."""
    y, h_hat = np.asarray(y), np.asarray(h_hat)
    if y.shape != h_hat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {h_hat.shape}")
    bad = np.abs(h_hat) < UNRECOVERABLE
    safe = np.where(bad, 1.0, h_hat)
    return np.where(bad, 0.0, y / safe)


def rzf_detect(y: np.ndarray, h_hat: np.ndarray, tau: float) -> np.ndarray:
    """Scalar regularized ZF: ``conj(H) Y / (|H|^2 + tau)``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    y, h_hat = np.asarray(y), np.asarray(h_hat)
    if y.shape != h_hat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {h_hat.shape}")
    if tau == 0:
        return zf_detect(y, h_hat)
    return np.conj(h_hat) * y / (np.abs(h_hat) ** 2 + tau)


def rzf_detect_literal(y: np.ndarray, h_hat: np.ndarray, tau: float) -> np.ndarray:
    """The printed form without the matrix inverse: ``(|H|^2 + tau) conj(H) Y``."""
    return (np.abs(h_hat) ** 2 + tau) * np.conj(h_hat) * y


def ber(tx_bits, rx_bits) -> float:
    tx, rx = np.asarray(tx_bits), np.asarray(rx_bits)
    if tx.shape != rx.shape:
        raise ValueError(f"bit arrays differ in length: {tx.shape} vs {rx.shape}")
    if tx.size == 0:
        return 0.0
    return float(np.count_nonzero(tx != rx) / tx.size)


@dataclass
class DetectionResult:
    x_hat: np.ndarray
    bits: np.ndarray
    errors: int
    n_bits: int

    @property
    def ber(self) -> float:
        return self.errors / self.n_bits if self.n_bits else 0.0


def detect(x_hat: np.ndarray, data_mask: np.ndarray, mod_order: int, tx_bits: np.ndarray | None = None) -> DetectionResult:
    """Hard-demap the data positions of an equalized grid (or a batch of grids)."""
    bits = qam_demodulate(x_hat[..., data_mask], mod_order)
    if tx_bits is None:
        return DetectionResult(x_hat, bits, 0, 0)
    tx = np.asarray(tx_bits).reshape(-1)
    if tx.size != bits.size:
        raise ValueError("transmitted bit count does not match data positions")
    return DetectionResult(x_hat, bits, int(np.count_nonzero(tx != bits)), int(bits.size))
