"""Tapped-delay-line Rayleigh fading with Jakes Doppler, sampled on the OFDM grid."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ofdm import OfdmConfig

SPEED_OF_LIGHT = 299_792_458.0
CP_OVERHEAD = 1.07


@dataclass(frozen=True)
class TapProfile:
    name: str
    delays_ns: tuple[float, ...]
    powers_db: tuple[float, ...]

    def __post_init__(self):
        d = np.asarray(self.delays_ns, dtype=float)
        if d.size == 0 or d.size != len(self.powers_db):
            raise ValueError(f"{self.name}: need equal, non-empty delay and power lists")
        if np.any(d < 0) or np.any(np.diff(d) <= 0):
            raise ValueError(f"{self.name}: delays must be non-negative and strictly increasing")

    @property
    def n_taps(self) -> int:
        return len(self.delays_ns)

    @property
    def delays_s(self) -> np.ndarray:
        return np.asarray(self.delays_ns, dtype=float) * 1e-9

    @property
    def linear_powers(self) -> np.ndarray:
        p = 10.0 ** (np.asarray(self.powers_db, dtype=float) / 10.0)
        return p / p.sum()


# ITU-R M.1225 outdoor-to-indoor/pedestrian A and vehicular A.
VEH_A = TapProfile("VehA", (0.0, 310.0, 710.0, 1090.0, 1730.0, 2510.0),
                   (0.0, -1.0, -9.0, -10.0, -15.0, -20.0))
PED_A = TapProfile("PedA", (0.0, 110.0, 190.0, 410.0), (0.0, -9.7, -19.2, -22.8))

SCENARIO_SPEEDS_KMH = {"VehA": 80.0, "PedA": 8.0}


def builtin_profiles() -> dict[str, TapProfile]:
    return {"VehA": VEH_A, "PedA": PED_A}


def load_profiles(path) -> dict[str, TapProfile]:
    """Read profiles from JSON: a list of ``{name, delays_ns, powers_db}``."""
    raw = json.loads(Path(path).read_text())
    if isinstance(raw, dict):
        raw = raw.get("profiles", [raw])
    out = {}
    for item in raw:
        prof = TapProfile(item["name"], tuple(item["delays_ns"]), tuple(item["powers_db"]))
        out[prof.name] = prof
    return out


def get_profile(name: str, extra: dict[str, TapProfile] | None = None) -> TapProfile:
    table = {**builtin_profiles(), **(extra or {})}
    for key, prof in table.items():
        if key.lower() == name.lower():
            return prof
    raise KeyError(f"unknown scenario {name!r}; known: {sorted(table)}")


def max_doppler(speed_kmh: float, carrier_hz: float) -> float:
    if speed_kmh < 0:
        raise ValueError("speed must be non-negative")
    return speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT


@dataclass(frozen=True)
class DopplerConfig:
    speed_kmh: float
    carrier_hz: float = 2.5e9
    slot_duration: float = CP_OVERHEAD / 15e3

    @property
    def max_doppler(self) -> float:
        return max_doppler(self.speed_kmh, self.carrier_hz)

    @classmethod
    def for_config(cls, speed_kmh: float, config: OfdmConfig) -> "DopplerConfig":
        return cls(speed_kmh, config.carrier_hz, CP_OVERHEAD / config.subcarrier_spacing)


@dataclass
class ChannelRealization:
    h: np.ndarray  # K x N complex
    tap_gains: np.ndarray  # L x N complex
    seed: object = field(default=None)


def tap_gain_trajectories(profile: TapProfile, doppler: DopplerConfig, n_slots: int,
                          rng: np.random.Generator, n_sinusoids: int = 64) -> np.ndarray:
    """Sum-of-sinusoids Jakes processes, one row per tap.

    Each tap sums ``n_sinusoids`` equal-power phasors with random arrival
    angles and phases, giving autocorrelation ``J0(2 pi f_d dt)`` in ensemble.
    """
    n_taps = profile.n_taps
    alpha = rng.uniform(0.0, 2 * np.pi, size=(n_taps, n_sinusoids))
    phi = rng.uniform(0.0, 2 * np.pi, size=(n_taps, n_sinusoids))
    t = np.arange(n_slots) * doppler.slot_duration
    freq = doppler.max_doppler * np.cos(alpha)
    phase = 2 * np.pi * freq[:, :, None] * t[None, None, :] + phi[:, :, None]
    gains = np.exp(1j * phase).sum(axis=1) / np.sqrt(n_sinusoids)
    return gains * np.sqrt(profile.linear_powers)[:, None]


def frequency_response(profile: TapProfile, tap_gains: np.ndarray, config: OfdmConfig) -> np.ndarray:
    k = np.arange(config.n_subcarriers)
    steer = np.exp(-2j * np.pi * np.outer(k * config.subcarrier_spacing, profile.delays_s))
    return steer @ tap_gains


def generate_realization(profile: TapProfile, doppler: DopplerConfig, config: OfdmConfig,
                         seed, n_sinusoids: int = 64) -> ChannelRealization:
    """One H(k, n) grid; ``seed`` is anything ``np.random.default_rng`` accepts."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    gains = tap_gain_trajectories(profile, doppler, config.n_slots, rng, n_sinusoids)
    return ChannelRealization(frequency_response(profile, gains, config), gains, seed)


def frequency_correlation(profile: TapProfile, config: OfdmConfig, max_lag: int) -> np.ndarray:
    """Closed-form ``E[H(k + dk, n) conj(H(k, n))]`` for ``dk = 0..max_lag``."""
    dk = np.arange(max_lag + 1)
    return np.exp(-2j * np.pi * np.outer(dk * config.subcarrier_spacing, profile.delays_s)) @ profile.linear_powers
