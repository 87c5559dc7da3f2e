"""Pilot lattices and classical pilot-aided channel estimation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True, eq=False)
class PilotPattern:
    """Pilot positions ``(k, n)`` ordered slot-column by slot-column.

    Within one pilot slot the subcarriers are ascending, so reshaping any
    per-pilot vector to ``(n_time, n_freq)`` and transposing gives the
    ``n_freq x n_time`` low-resolution image.
    """

    positions: np.ndarray  # P x 2 ints, columns (k, n)
    n_freq: int
    n_time: int
    symbols: np.ndarray  # P complex
    n_subcarriers: int
    n_slots: int

    def __post_init__(self):
        pos = self.positions
        if len(pos) != self.n_freq * self.n_time:
            raise ValueError("pilot count does not equal n_freq * n_time")
        if np.any(pos[:, 0] < 0) or np.any(pos[:, 0] >= self.n_subcarriers) \
                or np.any(pos[:, 1] < 0) or np.any(pos[:, 1] >= self.n_slots):
            raise ValueError("pilot index outside the grid")
        if len({(int(k), int(n)) for k, n in pos}) != len(pos):
            raise ValueError("duplicate pilot positions")
        if len(self.symbols) != len(pos):
            raise ValueError("need one pilot symbol per position")

    @property
    def n_pilots(self) -> int:
        return len(self.positions)

    @property
    def k(self) -> np.ndarray:
        return self.positions[:, 0]

    @property
    def n(self) -> np.ndarray:
        return self.positions[:, 1]

    @property
    def slots(self) -> np.ndarray:
        return self.positions[:: self.n_freq, 1]

    def column(self, j: int) -> np.ndarray:
        """Subcarrier indices of pilot slot ``j``."""
        return self.positions[j * self.n_freq:(j + 1) * self.n_freq, 0]

    def mask(self) -> np.ndarray:
        m = np.zeros((self.n_subcarriers, self.n_slots), dtype=bool)
        m[self.k, self.n] = True
        return m

    def data_mask(self) -> np.ndarray:
        return ~self.mask()

    def gather(self, grid: np.ndarray) -> np.ndarray:
        """Pilot-position values of a ``... x K x N`` grid, in pattern order."""
        return grid[..., self.k, self.n]

    def to_image(self, values: np.ndarray) -> np.ndarray:
        """``... x P`` per-pilot values to ``... x n_freq x n_time``."""
        lead = values.shape[:-1]
        return np.swapaxes(values.reshape(*lead, self.n_time, self.n_freq), -1, -2)

    def from_image(self, image: np.ndarray) -> np.ndarray:
        return np.swapaxes(image, -1, -2).reshape(*image.shape[:-2], -1)

    def to_text(self) -> str:
        return "".join(f"{k} {n}\n" for k, n in self.positions)


def lattice_pattern(n_subcarriers: int = 72, n_slots: int = 28, df: int = 4, dt: int = 4,
                    diamond_offset: int = 2, seed: int = 0) -> PilotPattern:
    """Diamond lattice: pilot slots ``dt*j + dt//2``, subcarriers ``df*i`` shifted by
    ``diamond_offset`` on odd pilot slots (wrapped mod K).

    Pilot symbols are unit-modulus QPSK corners from a seeded sequence.
    """
    if n_subcarriers % df or n_slots % dt:
        raise ValueError(f"K={n_subcarriers} must divide by df={df} and N={n_slots} by dt={dt}")
    n_freq, n_time = n_subcarriers // df, n_slots // dt
    pos = []
    for j in range(n_time):
        slot = dt * j + dt // 2
        ks = np.sort((df * np.arange(n_freq) + (j % 2) * diamond_offset) % n_subcarriers)
        pos.extend((int(k), slot) for k in ks)
    rng = np.random.default_rng(seed)
    corners = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, size=len(pos))))
    return PilotPattern(np.array(pos, dtype=np.int64), n_freq, n_time, corners, n_subcarriers, n_slots)


def pattern_from_text(text: str, n_freq: int, n_time: int, n_subcarriers: int, n_slots: int,
                      symbols: np.ndarray | None = None) -> PilotPattern:
    pos = np.array([[int(t) for t in line.split()] for line in text.splitlines() if line.strip()])
    sym = np.ones(len(pos), dtype=complex) if symbols is None else symbols
    return PilotPattern(pos, n_freq, n_time, sym, n_subcarriers, n_slots)


@dataclass
class PilotObservation:
    y_p: np.ndarray  # ... x P
    noise_var: float


def observe(y: np.ndarray, pattern: PilotPattern, noise_var: float) -> PilotObservation:
    return PilotObservation(pattern.gather(y), noise_var)


def ls_estimate(obs: PilotObservation, pattern: PilotPattern) -> np.ndarray:
    """Per-pilot ``Y_p / X_p``."""
    if np.any(np.abs(pattern.symbols) == 0):
        raise ValueError("pilot symbols must be nonzero")
    return obs.y_p / pattern.symbols


def estimate_correlation(realizations, pattern: PilotPattern) -> np.ndarray:
    """Sample ``E[H_p H_p^H]`` over realizations (objects with ``.h`` or a ``R x K x N`` array)."""
    if isinstance(realizations, np.ndarray):
        grids = realizations
    else:
        grids = np.stack([getattr(r, "h", r) for r in realizations]) if len(realizations) else np.empty((0,))
    if grids.ndim != 3 or grids.shape[0] == 0:
        raise ValueError("need a non-empty set of realizations")
    if grids.shape[0] < 2:
        raise ValueError("need at least 2 realizations")
    hp = pattern.gather(grids)
    r = hp.T @ hp.conj() / hp.shape[0]
    return 0.5 * (r + r.conj().T)


class IllConditionedError(np.linalg.LinAlgError):
    pass


def mmse_filter(r_h: np.ndarray, pattern: PilotPattern, noise_var: float, literal: bool = False) -> np.ndarray:
    """``R (R + s2 (X X^H)^-1)^-1`` via a linear solve.

    ``literal=True`` drops the noise variance, i.e. ``R (R + (X X^H)^-1)^-1``.
    """
    p = pattern.n_pilots
    if r_h.shape != (p, p):
        raise ValueError(f"R_H must be {p}x{p}, got {r_h.shape}")
    if noise_var == 0 and not literal:
        return np.eye(p, dtype=complex)
    scale = 1.0 if literal else noise_var
    a = r_h + np.diag(scale / np.abs(pattern.symbols) ** 2)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > 1e13:
        raise IllConditionedError(f"MMSE system ill-conditioned (cond={cond:.3g})")
    # W A = R  <=>  A^H W^H = R^H, and A, R are Hermitian
    return np.linalg.solve(a, r_h).conj().T


def mmse_estimate(obs: PilotObservation, pattern: PilotPattern, r_h: np.ndarray,
                  noise_var: float | None = None, literal: bool = False) -> np.ndarray:
    var = obs.noise_var if noise_var is None else noise_var
    h_ls = ls_estimate(obs, pattern)
    if var == 0 and not literal:
        return h_ls.copy()
    return h_ls @ mmse_filter(r_h, pattern, var, literal).T


# ---------------------------------------------------------------- interpolation


def _interp_linear_1d(xq: np.ndarray, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    return np.interp(xq, xp, fp.real) + 1j * np.interp(xq, xp, fp.imag)


def _interp_quadratic_1d(xq: np.ndarray, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    """Three-point Lagrange interpolation on the stencil centred at the nearest pilot."""
    n = len(xp)
    if n < 3:
        raise ValueError("quadratic interpolation needs at least 3 pilots per axis")
    # nearest pilot; ties go to the lower index
    centre = np.argmin(np.abs(xq[:, None] - xp[None, :]), axis=1)
    start = np.clip(centre - 1, 0, n - 3)
    x0, x1, x2 = xp[start], xp[start + 1], xp[start + 2]
    f0, f1, f2 = fp[start], fp[start + 1], fp[start + 2]
    l0 = (xq - x1) * (xq - x2) / ((x0 - x1) * (x0 - x2))
    l1 = (xq - x0) * (xq - x2) / ((x1 - x0) * (x1 - x2))
    l2 = (xq - x0) * (xq - x1) / ((x2 - x0) * (x2 - x1))
    return l0 * f0 + l1 * f1 + l2 * f2


_KERNELS = {"linear": (_interp_linear_1d, 2), "gaussian": (_interp_quadratic_1d, 3)}


def _interp_grid(h_p: np.ndarray, pattern: PilotPattern, kind: str) -> np.ndarray:
    """Separable interpolation of one pilot vector: frequency per pilot slot, then time."""
    fn, need = _KERNELS[kind]
    if pattern.n_freq < need or pattern.n_time < need:
        raise ValueError(f"{kind} interpolation needs >= {need} pilots along each axis")
    kk = np.arange(pattern.n_subcarriers, dtype=float)
    nn = np.arange(pattern.n_slots, dtype=float)
    cols = np.empty((pattern.n_subcarriers, pattern.n_time), dtype=complex)
    for j in range(pattern.n_time):
        sl = slice(j * pattern.n_freq, (j + 1) * pattern.n_freq)
        cols[:, j] = fn(kk, pattern.column(j).astype(float), h_p[sl])
    slots = pattern.slots.astype(float)
    out = np.empty((pattern.n_subcarriers, pattern.n_slots), dtype=complex)
    for k in range(pattern.n_subcarriers):
        out[k] = fn(nn, slots, cols[k])
    return out


@lru_cache(maxsize=16)
def _operator(pattern: PilotPattern, kind: str) -> np.ndarray:
    eye = np.eye(pattern.n_pilots)
    m = np.stack([_interp_grid(e.astype(complex), pattern, kind).reshape(-1) for e in eye], axis=1)
    return np.ascontiguousarray(m.real)


def interpolation_operator(pattern: PilotPattern, kind: str = "gaussian") -> np.ndarray:
    """Real ``(K*N) x P`` matrix mapping pilot estimates to the full grid."""
    if kind not in _KERNELS:
        raise ValueError(f"unknown interpolation {kind!r}")
    return _operator(pattern, kind)


def _apply(h_p: np.ndarray, pattern: PilotPattern, kind: str) -> np.ndarray:
    m = interpolation_operator(pattern, kind)
    out = np.asarray(h_p) @ m.T
    return out.reshape(*np.shape(h_p)[:-1], pattern.n_subcarriers, pattern.n_slots)


def interpolate_linear(h_p: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """Piecewise-linear fill with constant hold outside the pilot hull. Accepts ``... x P``."""
    return _apply(h_p, pattern, "linear")


def interpolate_gaussian(h_p: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """Second-order (three-point) fill; edges extrapolate from the nearest stencil."""
    return _apply(h_p, pattern, "gaussian")


def channel_mse(h_hat: np.ndarray, h: np.ndarray):
    """Mean ``|H_hat - H|^2`` over the last two (grid) axes."""
    h_hat, h = np.asarray(h_hat), np.asarray(h)
    if h_hat.shape != h.shape:
        raise ValueError(f"shape mismatch {h_hat.shape} vs {h.shape}")
    return np.mean(np.abs(h_hat - h) ** 2, axis=(-2, -1))
