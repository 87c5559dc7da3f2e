"""Fast oracle and invariant checks, runnable from the CLI.

Every check is seeded and prints a fixed-format line, so two runs on the same
machine produce byte-identical output.
"""

from __future__ import annotations

import sys
from typing import Callable, TextIO

import numpy as np

from .. import equalize, ofdm, pilots
from .. import numerics as nx
from ..numerics import Tensor
from . import dataset as dsmod


def _conv_loops(x, k, b, stride, pad):
    cin, h, w = x.shape
    kh, kw, _, cout = k.shape
    xp = np.zeros((cin, h + 2 * pad, w + 2 * pad))
    xp[:, pad:pad + h, pad:pad + w] = x
    ho, wo = (h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1
    out = np.zeros((cout, ho, wo))
    for co in range(cout):
        for i in range(ho):
            for j in range(wo):
                acc = b[co]
                for ci in range(cin):
                    for a in range(kh):
                        for c in range(kw):
                            acc += xp[ci, i * stride + a, j * stride + c] * k[a, c, ci, co]
                out[co, i, j] = acc
    return out


def check_conv_oracle() -> tuple[bool, float]:
    rng = np.random.default_rng(1)
    worst = 0.0
    for stride in (1, 2):
        x = rng.normal(size=(2, 3, 7, 6))
        k = rng.normal(size=(3, 3, 3, 4))
        b = rng.normal(size=4)
        got = nx.conv2d(Tensor(x), Tensor(k), Tensor(b), stride=stride, pad=1).data
        for i in range(2):
            worst = max(worst, float(np.abs(got[i] - _conv_loops(x[i], k, b, stride, 1)).max()))
    return worst < 1e-12, worst


def check_layer_gradients() -> tuple[bool, float]:
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(2, 2, 5, 4)), requires_grad=True)
    conv = nx.Conv2d(2, 3, rng)
    bn = nx.BatchNorm2d(3)
    fc = nx.Linear(3 * 5 * 4, 2, rng)
    target = rng.normal(size=(2, 3, 10, 8))
    cases = {
        "conv": (lambda: nx.tsum(nx.tanh(conv(x))), {"x": x, **conv.parameters()}),
        "bn": (lambda: nx.tsum(nx.mul(bn(conv(x)), Tensor(target[:, :, :5, :4]))), bn.parameters()),
        "linear": (lambda: nx.tsum(nx.sigmoid(fc(nx.reshape(conv(x), (2, -1))))), fc.parameters()),
        "upsample": (lambda: nx.l1_loss(nx.upsample_nearest(conv(x), 2), target), {"x": x}),
        "bce": (lambda: nx.bce_loss(nx.sigmoid(fc(nx.reshape(conv(x), (2, -1)))), 1.0), fc.parameters()),
    }
    worst = 0.0
    for f, params in cases.values():
        worst = max(worst, max(nx.check_gradients(f, params, step=1e-4).values()))
    return worst < 1e-4, worst


def check_composite_graph() -> tuple[bool, float]:
    rng = np.random.default_rng(11)
    conv, bn = nx.Conv2d(2, 3, rng), nx.BatchNorm2d(3)
    conv2, fc = nx.Conv2d(3, 2, rng, stride=2), nx.Linear(2 * 3 * 3, 1, rng)
    x = Tensor(rng.normal(size=(2, 2, 6, 5)))

    def f():
        return nx.tsum(nx.tanh(fc(conv2(nx.relu(bn(conv(x)))))))

    params = {}
    for prefix, m in (("conv", conv), ("bn", bn), ("conv2", conv2), ("fc", fc)):
        params.update({f"{prefix}.{k}": v for k, v in m.parameters().items()})
    worst = max(nx.check_gradients(f, params, step=1e-4).values())
    return worst < 1e-4, worst


def check_qam_round_trip() -> tuple[bool, float]:
    rng = np.random.default_rng(3)
    bad = 0
    for m in (4, 16, 64, 256):
        bits = rng.integers(0, 2, size=600 * ofdm.bits_per_symbol(m)).astype(np.uint8)
        bad += int(np.count_nonzero(ofdm.qam_demodulate(ofdm.qam_modulate(bits, m), m) != bits))
    return bad == 0, float(bad)


def _frames(n: int, snr: float | None, seed: int = 5):
    sc = dsmod.Scenario.build("VehA", 16)
    seeds = [dsmod.record_seed(seed, i) for i in range(n)]
    h = np.stack([dsmod.frame_channel(sc, s) for s in seeds])
    bits = np.stack([dsmod.frame_bits(sc, s) for s in seeds])
    x = np.stack([dsmod.transmit_grid(sc, b) for b in bits])
    if snr is None:
        w = np.zeros_like(x)
    else:
        w = np.stack([dsmod.frame_noise(sc, s, snr) for s in seeds])
    return sc, h, bits, ofdm.apply_channel(x, h, w)


def check_noiseless_ls() -> tuple[bool, float]:
    sc, h, _, y = _frames(20, None)
    err = float(np.abs(dsmod.pilot_ls(sc, y) - sc.pattern.gather(h)).max())
    return err < 1e-12, err


def check_zf_perfect_csi() -> tuple[bool, float]:
    sc, h, bits, y = _frames(50, None)
    rx = ofdm.qam_demodulate(equalize.zf_detect(y, h)[:, sc.data_mask], 16)
    p = equalize.ber(bits.reshape(-1), rx)
    return p == 0.0, p


def check_rzf_zero_is_zf() -> tuple[bool, float]:
    sc, h, _, y = _frames(10, 20.0)
    h_hat = pilots.interpolate_gaussian(dsmod.pilot_ls(sc, y), sc.pattern)
    diff = float(np.abs(equalize.rzf_detect(y, h_hat, 0.0) - equalize.zf_detect(y, h_hat)).max())
    return diff == 0.0, diff


def check_mmse_zero_is_ls() -> tuple[bool, float]:
    sc, h, _, y = _frames(10, 20.0)
    r_h = pilots.estimate_correlation(h, sc.pattern)
    obs = pilots.observe(y, sc.pattern, 0.0)
    diff = float(np.abs(pilots.mmse_estimate(obs, sc.pattern, r_h) - pilots.ls_estimate(obs, sc.pattern)).max())
    return diff == 0.0, diff


def check_dataset_regeneration() -> tuple[bool, float]:
    sc = dsmod.Scenario.build("VehA", 16)
    ds = dsmod.generate_dataset(sc, 30, [10.0, 20.0, 30.0], seed=9)
    worst = max(float(np.abs(ds.regenerate_y(i, sc) - ds.y[i]).max()) for i in range(len(ds)))
    return worst == 0.0, worst


CHECKS: dict[str, Callable[[], tuple[bool, float]]] = {
    "conv2d_vs_nested_loops": check_conv_oracle,
    "layer_gradients": check_layer_gradients,
    "composite_graph_gradients": check_composite_graph,
    "qam_round_trip": check_qam_round_trip,
    "noiseless_ls_at_pilots": check_noiseless_ls,
    "zf_perfect_csi_ber": check_zf_perfect_csi,
    "rzf_tau0_equals_zf": check_rzf_zero_is_zf,
    "mmse_var0_equals_ls": check_mmse_zero_is_ls,
    "dataset_regeneration": check_dataset_regeneration,
}


def run_selftest(out: TextIO = sys.stdout) -> bool:
    """Run every check; print ``PASS|FAIL name value`` lines and a summary."""
    ok_all = True
    for name, fn in CHECKS.items():
        ok, val = fn()
        ok_all &= ok
        out.write(f"{'PASS' if ok else 'FAIL'} {name} {val:.3e}\n")
    out.write(f"selftest: {'all passed' if ok_all else 'FAILED'}\n")
    return ok_all
