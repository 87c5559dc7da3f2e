"""Frame simulation and the binary dataset format.

A dataset file is little-endian::

    b"ODLD" | version u32 | record count u32 | K u32 | N u32 | M u32 | scenario tag (8 bytes, NUL padded)
    per record: SNR f64 | seed u64 | H, X, Y as f64 planes (real K*N, then imag K*N)

Every record carries the seed from which its channel, data bits and noise were
drawn, so ``Y`` can be regenerated exactly from ``(H, X, seed, SNR)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import channel, ofdm, pilots
from ..channel import DopplerConfig, TapProfile
from ..ofdm import OfdmConfig
from ..pilots import PilotPattern
from .parallel import parallel_map

MAGIC = b"ODLD"
VERSION = 1
HEADER = struct.Struct("<4sIIIII8s")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to simulate a frame: channel, grid, modulation, pilots."""

    name: str
    profile: TapProfile
    doppler: DopplerConfig
    config: OfdmConfig
    pattern: PilotPattern

    @classmethod
    def build(cls, name: str = "VehA", mod_order: int = 256, speed_kmh: float | None = None,
              df: int = 4, dt: int = 4, diamond_offset: int = 2, pilot_seed: int = 0,
              profiles: dict[str, TapProfile] | None = None) -> "Scenario":
        profile = channel.get_profile(name, profiles)
        config = OfdmConfig(mod_order=mod_order)
        speed = channel.SCENARIO_SPEEDS_KMH.get(profile.name, 0.0) if speed_kmh is None else speed_kmh
        doppler = DopplerConfig.for_config(speed, config)
        pattern = pilots.lattice_pattern(config.n_subcarriers, config.n_slots, df, dt, diamond_offset, pilot_seed)
        return cls(profile.name, profile, doppler, config, pattern)

    def with_mod_order(self, m: int) -> "Scenario":
        return replace(self, config=replace(self.config, mod_order=m))

    @property
    def data_mask(self) -> np.ndarray:
        return self.pattern.data_mask()

    @property
    def bits_per_frame(self) -> int:
        return int(self.data_mask.sum()) * self.config.bits_per_symbol


def record_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1, dtype=np.uint64)[0])


def frame_bits(scenario: Scenario, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 1])
    return rng.integers(0, 2, size=scenario.bits_per_frame, dtype=np.uint8)


def frame_channel(scenario: Scenario, seed: int) -> np.ndarray:
    return channel.generate_realization(scenario.profile, scenario.doppler, scenario.config,
                                        np.random.default_rng([seed, 0])).h


def transmit_grid(scenario: Scenario, bits: np.ndarray) -> np.ndarray:
    x = np.zeros(scenario.config.shape, dtype=complex)
    x[scenario.data_mask] = ofdm.qam_modulate(bits, scenario.config.mod_order)
    x[scenario.pattern.k, scenario.pattern.n] = scenario.pattern.symbols
    return x


def frame_noise(scenario: Scenario, seed: int, snr_db: float) -> np.ndarray:
    w, _ = ofdm.noise_for_snr(snr_db, scenario.config, np.random.default_rng([seed, 2]))
    return w


@dataclass
class Frame:
    h: np.ndarray
    x: np.ndarray
    y: np.ndarray
    bits: np.ndarray
    snr_db: float
    seed: int


def simulate_frame(scenario: Scenario, seed: int, snr_db: float) -> Frame:
    h = frame_channel(scenario, seed)
    bits = frame_bits(scenario, seed)
    x = transmit_grid(scenario, bits)
    y = ofdm.apply_channel(x, h, frame_noise(scenario, seed, snr_db))
    return Frame(h, x, y, bits, snr_db, seed)


@dataclass
class Dataset:
    """Stacked records: ``h``, ``x``, ``y`` are ``R x K x N`` complex."""

    scenario_tag: str
    mod_order: int
    snr_db: np.ndarray
    seeds: np.ndarray
    h: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.seeds)

    @property
    def shape(self) -> tuple[int, int]:
        return self.h.shape[1:]

    def record_dtype(self) -> np.dtype:
        k, n = self.shape
        return _record_dtype(k, n)

    def save(self, path) -> None:
        k, n = self.shape
        tag = self.scenario_tag.encode("ascii")[:8].ljust(8, b"\0")
        recs = np.empty(len(self), dtype=self.record_dtype())
        recs["snr"] = self.snr_db
        recs["seed"] = self.seeds
        for key in ("h", "x", "y"):
            recs[key] = ofdm.to_channels(getattr(self, key))
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, VERSION, len(self), k, n, self.mod_order, tag))
            fh.write(recs.tobytes())

    @classmethod
    def load(cls, path) -> "Dataset":
        raw = Path(path).read_bytes()
        magic, version, count, k, n, m, tag = HEADER.unpack_from(raw, 0)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a dataset file")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported dataset version {version}")
        recs = np.frombuffer(raw, dtype=_record_dtype(k, n), count=count, offset=HEADER.size)
        if HEADER.size + recs.nbytes != len(raw):
            raise ValueError(f"{path}: size does not match header")
        return cls(tag.rstrip(b"\0").decode("ascii"), m, recs["snr"].copy(), recs["seed"].copy(),
                   ofdm.from_channels(recs["h"]), ofdm.from_channels(recs["x"]), ofdm.from_channels(recs["y"]))

    def regenerate_y(self, i: int, scenario: Scenario) -> np.ndarray:
        w = frame_noise(scenario, int(self.seeds[i]), float(self.snr_db[i]))
        return ofdm.apply_channel(self.x[i], self.h[i], w)


def _record_dtype(k: int, n: int) -> np.dtype:
    plane = ("<f8", (2, k, n))
    return np.dtype([("snr", "<f8"), ("seed", "<u8"), ("h",) + plane, ("x",) + plane, ("y",) + plane])


def snr_schedule(count: int, snr_mix: Sequence[float]) -> np.ndarray:
    """Record ``i`` gets ``snr_mix[i % len(snr_mix)]``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not len(snr_mix):
        raise ValueError("SNR mix must be non-empty")
    return np.asarray(snr_mix, dtype=float)[np.arange(count) % len(snr_mix)]


def _simulate_chunk(args):
    scenario, seeds, snrs = args
    frames = [simulate_frame(scenario, int(s), float(r)) for s, r in zip(seeds, snrs)]
    return (np.stack([f.h for f in frames]), np.stack([f.x for f in frames]), np.stack([f.y for f in frames]))


def generate_dataset(scenario: Scenario, count: int, snr_mix: Sequence[float], seed: int,
                     path=None, chunk: int = 256) -> Dataset:
    snrs = snr_schedule(count, snr_mix)
    seeds = np.array([record_seed(seed, i) for i in range(count)], dtype=np.uint64)
    jobs = [(scenario, seeds[i:i + chunk], snrs[i:i + chunk]) for i in range(0, count, chunk)]
    parts = parallel_map(_simulate_chunk, jobs)
    ds = Dataset(scenario.name, scenario.config.mod_order, snrs, seeds,
                 np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                 np.concatenate([p[2] for p in parts]))
    if path is not None:
        ds.save(path)
    return ds


def pilot_ls(scenario: Scenario, y: np.ndarray) -> np.ndarray:
    """LS pilot estimates ``... x P`` from received grids ``... x K x N``."""
    return pilots.ls_estimate(pilots.PilotObservation(scenario.pattern.gather(y), 0.0), scenario.pattern)
