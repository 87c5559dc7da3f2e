"""MSE and BER sweeps over SNR for classical and learned receivers.

Every scheme sees the same test frames. Channel, data and the unit noise draw
depend only on the frame seed, so each SNR point reuses them with the noise
rescaled (common random numbers), which keeps curve comparisons tight.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .. import ccrnet as ccr
from .. import cenet as cen
from .. import equalize, ofdm, pilots
from . import dataset as dsmod

MSE_SCHEMES = ("LS+GI", "MMSE+GI", "CENet-single", "CENet-mixed")
BER_SCHEMES = ("LS+ZF", "CENet+ZF", "CENet+RZF", "CENet+CCRNet", "Perfect+ZF")
DEFAULT_TEST_SNRS = (10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)


@dataclass
class ExperimentConfig:
    scenario: str = "VehA"
    snrs: list[float] = field(default_factory=lambda: list(DEFAULT_TEST_SNRS))
    schemes: list[str] = field(default_factory=list)
    frames: int = 2000
    seed: int = 1000
    mod_order: int = 16
    # checkpoint paths keyed by "cenet_mixed", "cenet_single", "ccrnet"
    models: dict[str, str] = field(default_factory=dict)
    df: int = 4
    dt: int = 4
    diamond_offset: int = 2
    corr_frames: int = 2000
    corr_seed: int = 7
    tau: float | None = None
    chunk: int = 250

    def __post_init__(self):
        if not self.snrs:
            raise ValueError("SNR list must be non-empty")
        if self.frames < 1:
            raise ValueError("frame count must be >= 1")

    def build_scenario(self) -> dsmod.Scenario:
        return dsmod.Scenario.build(self.scenario, self.mod_order, df=self.df, dt=self.dt,
                                    diamond_offset=self.diamond_offset)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    scenario: str
    snr_db: float
    metric: str
    value: float
    stderr: float
    n: int


# ---------------------------------------------------------------- shared pieces


class _TestBank:
    """Test frames drawn once; received grids are produced per SNR."""

    def __init__(self, cfg: ExperimentConfig, scenario: dsmod.Scenario):
        self.scenario = scenario
        self.seeds = [dsmod.record_seed(cfg.seed, i) for i in range(cfg.frames)]
        self.h = np.stack([dsmod.frame_channel(scenario, s) for s in self.seeds])
        self.bits = np.stack([dsmod.frame_bits(scenario, s) for s in self.seeds])
        self.x = np.stack([dsmod.transmit_grid(scenario, b) for b in self.bits])

    def received(self, snr_db: float, sl: slice) -> np.ndarray:
        w = np.stack([dsmod.frame_noise(self.scenario, s, snr_db) for s in self.seeds[sl]])
        return ofdm.apply_channel(self.x[sl], self.h[sl], w)


def _chunks(n: int, size: int):
    for i in range(0, n, size):
        yield slice(i, min(i + size, n))


def _load_models(cfg: ExperimentConfig, schemes) -> dict:
    need = {}
    for s in schemes:
        if s == "CENet-single":
            need["cenet_single"] = "cenet"
        elif s.startswith("CENet"):
            need["cenet_mixed"] = "cenet"
        if s == "CENet+CCRNet":
            need["ccrnet"] = "ccrnet"
    out = {}
    for key, kind in need.items():
        path = cfg.models.get(key)
        if not path or not Path(path).is_file():
            raise FileNotFoundError(f"scheme needs a {key} checkpoint (models['{key}'] = {path!r})")
        out[key] = cen.load_cenet(path) if kind == "cenet" else ccr.load_ccrnet(path)[0]
    return out


def correlation_for(cfg: ExperimentConfig, scenario: dsmod.Scenario) -> np.ndarray:
    """Pilot correlation from channel realizations disjoint from the test frames."""
    grids = np.stack([dsmod.frame_channel(scenario, dsmod.record_seed(cfg.corr_seed, i))
                      for i in range(cfg.corr_frames)])
    return pilots.estimate_correlation(grids, scenario.pattern)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    se = float(np.std(v, ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(np.mean(v)), se


# ---------------------------------------------------------------- MSE


def _check_schemes(schemes, known, kind):
    bad = set(schemes) - set(known)
    if bad:
        raise ValueError(f"unknown {kind} schemes: {sorted(bad)}")


def mse_per_frame(cfg: ExperimentConfig) -> dict[float, dict[str, np.ndarray]]:
    """Per-frame channel MSE, keyed by SNR then scheme."""
    schemes = list(cfg.schemes or MSE_SCHEMES)
    _check_schemes(schemes, MSE_SCHEMES, "MSE")
    models = _load_models(cfg, schemes)
    sc = cfg.build_scenario()
    pat = sc.pattern
    bank = _TestBank(cfg, sc)
    r_h = correlation_for(cfg, sc) if "MMSE+GI" in schemes else None
    out = {}
    for snr in cfg.snrs:
        var = ofdm.noise_variance(snr)
        w_mmse = pilots.mmse_filter(r_h, pat, var) if r_h is not None else None
        per = {s: [] for s in schemes}
        for sl in _chunks(cfg.frames, cfg.chunk):
            h_ls = dsmod.pilot_ls(sc, bank.received(snr, sl))
            h = bank.h[sl]
            for s in schemes:
                if s == "LS+GI":
                    est = pilots.interpolate_gaussian(h_ls, pat)
                elif s == "MMSE+GI":
                    est = pilots.interpolate_gaussian(h_ls @ w_mmse.T, pat)
                else:
                    model = models["cenet_single" if s == "CENet-single" else "cenet_mixed"]
                    est = ofdm.from_channels(model.predict(cen.lr_image(h_ls, pat)))
                per[s].append(pilots.channel_mse(est, h))
        out[float(snr)] = {s: np.concatenate(v) for s, v in per.items()}
    return out


def run_mse_sweep(cfg: ExperimentConfig) -> list[SweepRow]:
    name = cfg.build_scenario().name
    rows = []
    for snr, per in mse_per_frame(cfg).items():
        for s, v in per.items():
            m, se = _mean_se(v)
            rows.append(SweepRow(s, name, snr, "mse", m, se, len(v)))
    return rows


# ---------------------------------------------------------------- BER


def bit_errors_per_frame(cfg: ExperimentConfig) -> dict[float, dict[str, np.ndarray]]:
    """Per-frame bit-error counts, keyed by SNR then scheme."""
    schemes = list(cfg.schemes or BER_SCHEMES)
    _check_schemes(schemes, BER_SCHEMES, "BER")
    models = _load_models(cfg, schemes)
    sc = cfg.build_scenario()
    pat, mask, m = sc.pattern, sc.data_mask, sc.config.mod_order
    bank = _TestBank(cfg, sc)
    out = {}
    for snr in cfg.snrs:
        var = ofdm.noise_variance(snr)
        tau = var if cfg.tau is None else cfg.tau
        per = {s: [] for s in schemes}
        for sl in _chunks(cfg.frames, cfg.chunk):
            y = bank.received(snr, sl)
            h_ls = dsmod.pilot_ls(sc, y)
            h_cen = None
            if any(s.startswith("CENet") for s in schemes):
                h_cen = ofdm.from_channels(models["cenet_mixed"].predict(cen.lr_image(h_ls, pat)))
            for s in schemes:
                if s == "LS+ZF":
                    x_hat = equalize.zf_detect(y, pilots.interpolate_gaussian(h_ls, pat))
                elif s == "CENet+ZF":
                    x_hat = equalize.zf_detect(y, h_cen)
                elif s == "CENet+RZF":
                    x_hat = equalize.rzf_detect(y, h_cen, tau)
                elif s == "Perfect+ZF":
                    x_hat = equalize.zf_detect(y, bank.h[sl])
                else:
                    x_hat = models["ccrnet"].recover(y, h_cen)
                rx = ofdm.qam_demodulate(x_hat[:, mask], m).reshape(len(y), -1)
                per[s].append(np.count_nonzero(rx != bank.bits[sl], axis=1))
        out[float(snr)] = {s: np.concatenate(v) for s, v in per.items()}
    return out


def run_ber_sweep(cfg: ExperimentConfig) -> list[SweepRow]:
    sc = cfg.build_scenario()
    n_bits = cfg.frames * sc.bits_per_frame
    rows = []
    for snr, per in bit_errors_per_frame(cfg).items():
        for s, errs in per.items():
            p = int(errs.sum()) / n_bits
            rows.append(SweepRow(s, sc.name, snr, "ber", p, float(np.sqrt(p * (1 - p) / n_bits)), n_bits))
    return rows
