"""Command-line entry point: ``ofdmdl <subcommand> [flags]``.

A ``--config`` JSON file overrides flags with matching names (dashes become
underscores), e.g. ``{"frames": 500, "snr": [10, 20]}``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .. import cenet as cen
from . import dataset as dsmod
from . import experiment as exp
from . import training as tr
from .results import emit_results

SCENARIOS = {"veha": "VehA", "peda": "PedA"}


def _snr_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("SNR list is empty")
    return vals


def _scenario(text: str) -> str:
    key = text.lower()
    if key not in SCENARIOS:
        raise argparse.ArgumentTypeError(f"scenario must be one of vehA, pedA (got {text!r})")
    return SCENARIOS[key]


def _common(p: argparse.ArgumentParser, snr: str, frames: int, mod: int) -> None:
    p.add_argument("--scenario", type=_scenario, default="VehA", help="vehA or pedA")
    p.add_argument("--snr", type=_snr_list, default=_snr_list(snr), help="comma-separated SNRs in dB")
    p.add_argument("--frames", type=int, default=frames)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--mod", type=int, choices=(4, 16, 64, 256), default=mod)
    p.add_argument("--config", type=Path, help="JSON file whose keys override flags")
    p.add_argument("--out", type=Path, default=Path("."))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ofdmdl", description="OFDM receiver toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="simulate frames into a dataset file")
    _common(p, "10,20,30", 1000, 256)
    p.add_argument("--name", default="dataset.odld")

    p = sub.add_parser("train-cenet", help="train the channel estimation network")
    _common(p, "10,20,30", 5000, 16)
    p.add_argument("--epochs", type=int, default=tr.CenetProtocol.epochs)
    p.add_argument("--minutes", type=float, default=30.0, help="wall-clock budget")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-final", type=float, default=1e-5)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--name", default="cenet", help="checkpoint stem")

    p = sub.add_parser("train-ccrnet", help="train the conditional-GAN detector")
    _common(p, "20", 3000, 16)
    p.add_argument("--cenet", type=Path, help="CENet checkpoint providing the condition (else true H)")
    p.add_argument("--steps", type=int, default=100000)
    p.add_argument("--minutes", type=float, default=60.0)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--lam-rec", type=float, default=100.0)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--full-widths", action="store_true", help="full-width networks instead of desk widths")
    p.add_argument("--name", default="ccrnet", help="checkpoint stem")

    for name, snrs in (("sweep-mse", "10,15,20,25,30,35,40"), ("sweep-ber", "10,15,20,25,30,35,40")):
        p = sub.add_parser(name, help=f"{name.split('-')[1].upper()} vs SNR sweep")
        _common(p, snrs, 2000, 16)
        p.add_argument("--schemes", default="", help="comma-separated scheme names (default: all)")
        p.add_argument("--cenet-mixed", type=Path)
        p.add_argument("--cenet-single", type=Path)
        p.add_argument("--ccrnet", type=Path)

    sub.add_parser("selftest", help="run the oracle/invariant suite")
    return ap


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    path = getattr(args, "config", None)
    if path is None:
        return args
    data = json.loads(Path(path).read_text())
    for key, val in data.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise SystemExit(f"config key {key!r} is not an option of {args.command}")
        if attr == "scenario":
            val = _scenario(val)
        elif attr == "snr" and isinstance(val, str):
            val = _snr_list(val)
        elif attr in ("out", "cenet", "cenet_mixed", "cenet_single", "ccrnet") and val is not None:
            val = Path(val)
        setattr(args, attr, val)
    return args


def _scenario_of(args) -> dsmod.Scenario:
    return dsmod.Scenario.build(args.scenario, args.mod)


def cmd_gen_data(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / args.name
    dsmod.generate_dataset(_scenario_of(args), args.frames, args.snr, args.seed, path)
    print(f"wrote {args.frames} records to {path}")
    return 0


def cmd_train_cenet(args) -> int:
    proto = tr.CenetProtocol(snrs=tuple(args.snr), frames=args.frames, seed=args.seed, epochs=args.epochs,
                             lr=args.lr, lr_final=args.lr_final, batch=args.batch, minutes=args.minutes)
    summary = tr.train_cenet(_scenario_of(args), proto, args.out, args.name,
                             on_epoch=lambda e: print(f"epoch {e.epoch}: loss {e.train_loss:.4g} "
                                                      f"val_mse {e.val_mse:.4g} ({e.seconds:.0f} s)", flush=True))
    print(f"trained {summary['epochs_run']} epochs; checkpoint {args.out / (args.name + '.odlm')}")
    return 0


def cmd_train_ccrnet(args) -> int:
    proto = tr.CcrnetProtocol(snrs=tuple(args.snr), frames=args.frames, seed=args.seed, steps=args.steps,
                              lr=args.lr, lam_rec=args.lam_rec, batch=args.batch, minutes=args.minutes,
                              full_widths=args.full_widths)
    model = cen.load_cenet(args.cenet) if args.cenet else None
    summary = tr.train_ccrnet(_scenario_of(args), proto, args.out, args.name, model)
    print(f"trained {summary['steps_run']} steps; checkpoint {args.out / (args.name + '.odlm')}")
    return 0


def _sweep_config(args) -> exp.ExperimentConfig:
    models = {k: str(getattr(args, k)) for k in ("cenet_mixed", "cenet_single", "ccrnet") if getattr(args, k)}
    schemes = [s for s in args.schemes.split(",") if s] if isinstance(args.schemes, str) else list(args.schemes)
    return exp.ExperimentConfig(scenario=args.scenario, snrs=list(args.snr), schemes=schemes, frames=args.frames,
                                seed=args.seed, mod_order=args.mod, models=models)


def cmd_sweep(args, kind: str) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    cfg = _sweep_config(args)
    if not cfg.schemes:
        # default to the schemes whose checkpoints were supplied
        pool = exp.MSE_SCHEMES if kind == "mse" else exp.BER_SCHEMES
        cfg.schemes = [s for s in pool if _available(s, cfg.models)]
    rows = exp.run_mse_sweep(cfg) if kind == "mse" else exp.run_ber_sweep(cfg)
    path = emit_results(rows, args.out / f"{kind}.csv")
    for r in rows:
        print(f"{r.scheme:14s} {r.snr_db:5.1f} dB  {kind} {r.value:.4e} +- {r.stderr:.1e}")
    print(f"wrote {path}")
    return 0


def _available(scheme: str, models: dict) -> bool:
    if scheme == "CENet-single":
        return "cenet_single" in models
    if scheme == "CENet+CCRNet":
        return "cenet_mixed" in models and "ccrnet" in models
    if scheme.startswith("CENet"):
        return "cenet_mixed" in models
    return True


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest(sys.stdout) else 1


def main(argv=None) -> int:
    args = _apply_config(build_parser().parse_args(argv))
    handlers = {
        "gen-data": cmd_gen_data,
        "train-cenet": cmd_train_cenet,
        "train-ccrnet": cmd_train_ccrnet,
        "sweep-mse": lambda a: cmd_sweep(a, "mse"),
        "sweep-ber": lambda a: cmd_sweep(a, "ber"),
        "selftest": cmd_selftest,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
