"""Desk-scale training protocols shared by the CLI and the acceptance suite."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import ccrnet as ccr
from .. import cenet as cen
from .. import ofdm
from . import dataset as dsmod


@dataclass
class CenetProtocol:
    snrs: tuple[float, ...] = (10.0, 20.0, 30.0)
    frames: int = 5000
    seed: int = 1
    epochs: int = 11
    lr: float = 1e-3
    lr_final: float = 1e-5
    batch: int = 16
    minutes: float = 30.0
    val_frames: int = 150


@dataclass
class CcrnetProtocol:
    snrs: tuple[float, ...] = (20.0,)
    frames: int = 3000
    seed: int = 3
    steps: int = 100000
    lr: float = 2e-4
    lam_rec: float = 100.0
    batch: int = 16
    minutes: float = 60.0
    full_widths: bool = False


def cenet_data(sc: dsmod.Scenario, frames: int, snrs, seed: int) -> cen.CenetData:
    ds = dsmod.generate_dataset(sc, frames, list(snrs), seed)
    return cen.CenetData.from_grids(dsmod.pilot_ls(sc, ds.y), ds.h, sc.pattern)


def train_cenet(sc: dsmod.Scenario, proto: CenetProtocol, out_dir, name: str, on_epoch=None) -> dict:
    """Train, save ``<name>.odlm`` plus ``<name>_log.csv`` and ``<name>.json``; return the summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = cenet_data(sc, proto.frames, proto.snrs, proto.seed)
    val = cenet_data(sc, proto.val_frames, proto.snrs, proto.seed + 10_000)
    model = cen.CenetModel(seed=proto.seed)
    logs = cen.cenet_train(model, data, proto.epochs, lr=proto.lr, batch=proto.batch, seed=proto.seed, val=val,
                           lr_final=proto.lr_final, time_budget=proto.minutes * 60,
                           log_path=out_dir / f"{name}_log.csv", on_epoch=on_epoch)
    cen.save_cenet(model, out_dir / f"{name}.odlm")
    summary = {"protocol": asdict(proto), "epochs_run": len(logs),
               "seconds": logs[-1].seconds if logs else 0.0,
               "final_val_mse": logs[-1].val_mse if logs else float("nan")}
    (out_dir / f"{name}.json").write_text(json.dumps(summary, indent=1))
    return summary


def ccrnet_data(sc: dsmod.Scenario, frames: int, snrs, seed: int, cenet_model=None) -> ccr.CcrnetData:
    """Training triples; the condition is the CENet estimate when a model is given, else the true channel."""
    ds = dsmod.generate_dataset(sc, frames, list(snrs), seed)
    if cenet_model is None:
        h = ds.h
    else:
        h = ofdm.from_channels(cenet_model.predict(cen.lr_image(dsmod.pilot_ls(sc, ds.y), sc.pattern)))
    return ccr.CcrnetData(ds.x, ds.y, h)


def train_ccrnet(sc: dsmod.Scenario, proto: CcrnetProtocol, out_dir, name: str, cenet_model=None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = ccrnet_data(sc, proto.frames, proto.snrs, proto.seed, cenet_model)
    gcfg = ccr.GeneratorConfig() if proto.full_widths else ccr.GeneratorConfig.desk()
    dcfg = ccr.DiscriminatorConfig() if proto.full_widths else ccr.DiscriminatorConfig.desk()
    gen, disc = ccr.Generator(gcfg, seed=proto.seed), ccr.Discriminator(dcfg, seed=proto.seed + 1)
    opts = ccr.gan_optimizers(gen, disc, proto.lr)
    t0 = time.perf_counter()
    logs = ccr.ccrnet_train(gen, disc, data, proto.steps, batch=proto.batch, lam_rec=proto.lam_rec, lr=proto.lr,
                            seed=proto.seed, time_budget=proto.minutes * 60,
                            log_path=out_dir / f"{name}_log.csv", opts=opts)
    seconds = time.perf_counter() - t0
    ccr.save_ccrnet(gen, disc, out_dir / f"{name}.odlm", opts)
    losses = np.array([[e.d_loss, e.g_adv, e.g_rec] for e in logs]).reshape(-1, 3)
    summary = {"protocol": asdict(proto), "steps_run": len(logs), "seconds": seconds,
               "all_finite": bool(np.isfinite(losses).all()),
               "g_rec_first": float(losses[0, 2]) if len(logs) else float("nan"),
               "g_rec_last": float(losses[-1, 2]) if len(logs) else float("nan")}
    (out_dir / f"{name}.json").write_text(json.dumps(summary, indent=1))
    return summary


# narrow networks on an 8 x 8 corner of the grid keep the overfit check near two minutes
OVERFIT_G = ccr.GeneratorConfig((8, 8, 16, 16), (8, 16, 16), 2, 3, (16, 8), 8, 8)
OVERFIT_D = ccr.DiscriminatorConfig((4, 8), 8, 8)


def gan_overfit(steps: int = 2000, lam_rec: float = 100.0, lr: float = 2e-4, seed: int = 31) -> list[ccr.StepLog]:
    """Train on 8 fixed 16-QAM VehA triples (true channel as condition); return the step log."""
    sc = dsmod.Scenario.build("VehA", 16)
    ds = dsmod.generate_dataset(sc, 8, [20.0], seed=seed)
    cut = lambda a: np.ascontiguousarray(a[:, :8, :8])
    data = ccr.CcrnetData(cut(ds.x), cut(ds.y), cut(ds.h))
    gen, disc = ccr.Generator(OVERFIT_G, seed=1), ccr.Discriminator(OVERFIT_D, seed=2)
    return ccr.ccrnet_train(gen, disc, data, steps, batch=8, lam_rec=lam_rec, lr=lr, seed=0)
