"""Conditional-GAN signal recovery.

The generator recovers the transmit grid from the receive grid given a channel
estimate: a data encoder and a condition encoder meet at ``K/4 x N/4``, three
bilinear residual layers (BRL) mix the two feature streams, a fusion conv joins
the result with the condition features, and a decoder restores ``K x N``.
The discriminator scores (signal, condition) pairs.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Conv2d, ConvBnRelu, Linear, Module, Tensor
from .ofdm import from_channels, qam_demodulate, to_channels


@dataclass(frozen=True)
class GeneratorConfig:
    enc_widths: tuple[int, int, int, int] = (64, 128, 256, 512)
    cond_widths: tuple[int, int, int] = (128, 256, 512)
    cond_proj: int = 2
    n_brl: int = 3
    dec_widths: tuple[int, int] = (256, 128)
    n_freq: int = 72
    n_time: int = 28

    def __post_init__(self):
        if self.n_freq % 4 or self.n_time % 4:
            raise ValueError("grid dims must be divisible by 4")
        if self.n_brl < 1:
            raise ValueError("need at least one BRL block")

    @property
    def features(self) -> int:
        return self.enc_widths[-1]

    @classmethod
    def desk(cls) -> "GeneratorConfig":
        return cls((8, 16, 32, 64), (16, 32, 64), 2, 3, (32, 16))

    def to_array(self) -> np.ndarray:
        return np.array([*self.enc_widths, *self.cond_widths, self.cond_proj, self.n_brl,
                         *self.dec_widths, self.n_freq, self.n_time], dtype=float)

    @classmethod
    def from_array(cls, a) -> "GeneratorConfig":
        v = [int(x) for x in a]
        return cls(tuple(v[0:4]), tuple(v[4:7]), v[7], v[8], tuple(v[9:11]), v[11], v[12])


@dataclass(frozen=True)
class DiscriminatorConfig:
    widths: tuple[int, int] = (64, 128)
    n_freq: int = 72
    n_time: int = 28

    @classmethod
    def desk(cls) -> "DiscriminatorConfig":
        return cls((8, 16))

    def to_array(self) -> np.ndarray:
        return np.array([*self.widths, self.n_freq, self.n_time], dtype=float)

    @classmethod
    def from_array(cls, a) -> "DiscriminatorConfig":
        v = [int(x) for x in a]
        return cls(tuple(v[0:2]), v[2], v[3])


# ---------------------------------------------------------------- generator


class BrlBlock(Module):
    """``U + f(concat(tanh(u(U)) * tanh(v(V)), U))`` with 1x1 convs ``u``, ``v``, ``f``."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.proj_u = Conv2d(channels, channels, rng, kernel=1)
        self.proj_v = Conv2d(channels, channels, rng, kernel=1)
        self.fuse = Conv2d(2 * channels, channels, rng, kernel=1)

    def forward(self, u: Tensor, v: Tensor) -> Tensor:
        if u.shape != v.shape:
            raise ValueError(f"BRL inputs differ in shape: {u.shape} vs {v.shape}")
        p = nx.tanh(self.proj_u(u)) * nx.tanh(self.proj_v(v))
        return u + self.fuse(nx.concat_channels(p, u))


class DataEncoder(Module):
    def __init__(self, widths, rng: np.random.Generator):
        w1, w2, w3, w4 = widths
        self.layers = [ConvBnRelu(2, w1, rng), ConvBnRelu(w1, w2, rng, stride=2),
                       ConvBnRelu(w2, w3, rng, stride=2), ConvBnRelu(w3, w4, rng)]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class ConditionEncoder(Module):
    def __init__(self, widths, proj: int, features: int, rng: np.random.Generator):
        w1, w2, w3 = widths
        self.layers = [ConvBnRelu(2, w1, rng), ConvBnRelu(w1, w2, rng, stride=2),
                       ConvBnRelu(w2, w3, rng, stride=2)]
        self.project = Conv2d(w3, proj, rng)
        self.expand = Conv2d(proj, features, rng, kernel=1)

    def forward(self, h: Tensor) -> Tensor:
        for layer in self.layers:
            h = layer(h)
        return self.expand(self.project(h))


class Decoder(Module):
    def __init__(self, features: int, widths, rng: np.random.Generator):
        d1, d2 = widths
        self.stage1 = ConvBnRelu(features, d1, rng)
        self.stage2 = ConvBnRelu(d1, d2, rng)
        self.out = Conv2d(d2, 2, rng)

    def forward(self, x: Tensor) -> Tensor:
        x = self.stage1.upsampled(x)
        x = self.stage2.upsampled(x)
        return self.out(x)


class Generator(Module):
    def __init__(self, config: GeneratorConfig = GeneratorConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        c = config.features
        self.config = config
        self.encoder = DataEncoder(config.enc_widths, rng)
        self.condition = ConditionEncoder(config.cond_widths, config.cond_proj, c, rng)
        self.brls = [BrlBlock(c, rng) for _ in range(config.n_brl)]
        self.fusion = Conv2d(2 * c, c, rng, kernel=1)
        self.decoder = Decoder(c, config.dec_widths, rng)
        # per-grid input/output scales fitted on the training set: Y, H_hat, X
        self.running_scales = np.ones(3)

    def _check(self, t: Tensor, what: str) -> None:
        cfg = self.config
        if t.ndim != 4 or t.shape[1:] != (2, cfg.n_freq, cfg.n_time):
            raise ValueError(f"{what}: expected B x 2 x {cfg.n_freq} x {cfg.n_time}, got {t.shape}")

    def forward(self, y: Tensor, h: Tensor) -> Tensor:
        """Normalized ``Y`` and ``H_hat`` images to the normalized transmit image."""
        self._check(y, "receive grid")
        self._check(h, "condition grid")
        if y.shape != h.shape:
            raise ValueError("receive and condition batches differ")
        u = self.encoder(y)
        v = self.condition(h)
        for brl in self.brls:
            u = brl(u, v)
        return self.decoder(self.fusion(nx.concat_channels(u, v)))

    def fit_scales(self, y: np.ndarray, h: np.ndarray, x: np.ndarray) -> None:
        for i, a in enumerate((y, h, x)):
            s = float(np.sqrt(np.mean(np.abs(a) ** 2)))
            if not np.isfinite(s) or s <= 0:
                raise ValueError("cannot fit scales on all-zero or non-finite data")
            self.running_scales[i] = s

    def recover(self, y: np.ndarray, h_hat: np.ndarray, batch: int = 64) -> np.ndarray:
        """Eval-mode recovery of complex transmit grids from complex ``Y`` and ``H_hat``."""
        single = y.ndim == 2
        y, h_hat = (y[None], h_hat[None]) if single else (y, h_hat)
        sy, sh, sx = self.running_scales
        was = self.training
        self.eval()
        outs = []
        with nx.no_grad():
            for i in range(0, len(y), batch):
                yi = Tensor(to_channels(y[i:i + batch]) / sy)
                hi = Tensor(to_channels(h_hat[i:i + batch]) / sh)
                outs.append(from_channels(self(yi, hi).data) * sx)
        self.train(was)
        out = np.concatenate(outs)
        return out[0] if single else out


# ---------------------------------------------------------------- discriminator


class Discriminator(Module):
    def __init__(self, config: DiscriminatorConfig = DiscriminatorConfig(), seed: int = 1):
        rng = np.random.default_rng(seed)
        w1, w2 = config.widths
        self.config = config
        self.block1 = ConvBnRelu(4, w1, rng)
        self.block2 = ConvBnRelu(w1, w2, rng)
        self.score = Conv2d(w2, 1, rng)
        self.fc = Linear(config.n_freq * config.n_time, 1, rng)

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        """Probability per sample (shape ``B``) that ``x`` is a genuine transmit grid for ``h``."""
        cfg = self.config
        want = (2, cfg.n_freq, cfg.n_time)
        if x.ndim != 4 or x.shape[1:] != want or h.shape != x.shape:
            raise ValueError(f"discriminator expects two B x 2 x {cfg.n_freq} x {cfg.n_time} inputs")
        z = self.score(self.block2(self.block1(nx.concat_channels(x, h))))
        return nx.reshape(nx.sigmoid(self.fc(z)), (x.shape[0],))


# ---------------------------------------------------------------- training


@dataclass
class GanBatch:
    """Normalized real images ``B x 2 x K x N``."""

    x: np.ndarray
    y: np.ndarray
    h: np.ndarray


@dataclass
class StepLog:
    step: int
    d_loss: float
    g_adv: float
    g_rec: float


def _finite(name: str, value: float, step: int) -> float:
    if not np.isfinite(value):
        raise FloatingPointError(f"step {step}: {name} became non-finite ({value})")
    return value


def gan_train_step(gen: Generator, disc: Discriminator, batch: GanBatch, lam_rec: float,
                   opt_g: nx.Adam, opt_d: nx.Adam, step: int = 0) -> StepLog:
    """One discriminator update followed by one generator update."""
    if lam_rec < 0:
        raise ValueError("lam_rec must be >= 0")
    y, h, x = Tensor(batch.y), Tensor(batch.h), Tensor(batch.x)
    n = len(batch.x)

    # discriminator: real -> 1, fake -> 0, generator frozen
    with nx.no_grad():
        fake = gen(y, h).data
    opt_d.zero_grad()
    d_loss = nx.bce_loss(disc(x, h), np.ones(n)) + nx.bce_loss(disc(Tensor(fake), h), np.zeros(n))
    _finite("d_loss", d_loss.item(), step)
    nx.backward(d_loss)
    opt_d.step()

    # generator: non-saturating adversarial term plus weighted L1 reconstruction
    opt_g.zero_grad()
    fake_t = gen(y, h)
    g_adv = nx.bce_loss(disc(fake_t, h), np.ones(n))
    g_rec = nx.l1_loss(fake_t, batch.x)
    loss = g_adv if lam_rec == 0 else g_adv + g_rec * lam_rec
    _finite("g_adv", g_adv.item(), step)
    _finite("g_rec", g_rec.item(), step)
    nx.backward(loss)
    opt_g.step()
    disc.zero_grad()
    return StepLog(step, d_loss.item(), g_adv.item(), g_rec.item())


@dataclass
class CcrnetData:
    """Complex grids ``R x K x N``: transmit ``x``, receive ``y`` and channel estimate ``h``."""

    x: np.ndarray
    y: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        if not (self.x.shape == self.y.shape == self.h.shape):
            raise ValueError("x, y and h must share one shape")

    def __len__(self) -> int:
        return len(self.x)

    def batch(self, idx: np.ndarray, scales: np.ndarray) -> GanBatch:
        sy, sh, sx = scales
        return GanBatch(to_channels(self.x[idx]) / sx, to_channels(self.y[idx]) / sy,
                        to_channels(self.h[idx]) / sh)


def gan_optimizers(gen: Generator, disc: Discriminator, lr: float = 2e-4) -> tuple[nx.Adam, nx.Adam]:
    """Adam pair with beta1 = 0.5, the usual choice for adversarial training."""
    return (nx.Adam(gen.parameters(), lr=lr, betas=(0.5, 0.999)),
            nx.Adam(disc.parameters(), lr=lr, betas=(0.5, 0.999)))


def ccrnet_train(gen: Generator, disc: Discriminator, data: CcrnetData, steps: int, batch: int = 64,
                 lam_rec: float = 100.0, lr: float = 2e-4, seed: int = 0, time_budget: float | None = None,
                 log_path=None, opts: tuple[nx.Adam, nx.Adam] | None = None,
                 fit_scales: bool = True) -> list[StepLog]:
    """Alternating updates over seed-shuffled mini-batches.

    ``time_budget`` (seconds) is a hard cap: a step only starts if the previous
    step's duration still fits.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    if fit_scales:
        gen.fit_scales(data.y, data.h, data.x)
    opt_g, opt_d = opts or gan_optimizers(gen, disc, lr)
    rng = np.random.default_rng(seed)
    gen.train()
    disc.train()
    logs: list[StepLog] = []
    order = np.empty(0, dtype=np.int64)
    start = time.perf_counter()
    step_time = 0.0
    for step in range(steps):
        t0 = time.perf_counter()
        if time_budget is not None and t0 - start + step_time > time_budget:
            break
        if len(order) < min(batch, len(data)):
            order = rng.permutation(len(data))
        idx, order = order[:batch], order[batch:]
        logs.append(gan_train_step(gen, disc, data.batch(idx, gen.running_scales), lam_rec, opt_g, opt_d, step))
        step_time = time.perf_counter() - t0
    if log_path is not None:
        write_log(logs, log_path)
    return logs


def write_log(logs: list[StepLog], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "d_loss", "g_adv", "g_rec"])
        for e in logs:
            w.writerow([e.step, repr(e.d_loss), repr(e.g_adv), repr(e.g_rec)])


# ---------------------------------------------------------------- inference


def ccrnet_detect(gen: Generator, y: np.ndarray, h_hat: np.ndarray, data_mask: np.ndarray,
                  mod_order: int) -> np.ndarray:
    """Hard bits at the data positions of each recovered grid (``... x bits``)."""
    x_hat = gen.recover(y, h_hat)
    sym = x_hat[..., data_mask]
    return qam_demodulate(sym, mod_order).reshape(*sym.shape[:-1], -1)


# ---------------------------------------------------------------- checkpoint


def save_ccrnet(gen: Generator, disc: Discriminator, path, opts: tuple[nx.Adam, nx.Adam] | None = None) -> None:
    rec = {f"gen.{k}": v for k, v in gen.state_dict().items()}
    rec.update({f"disc.{k}": v for k, v in disc.state_dict().items()})
    rec["ccrnet.gen_config"] = gen.config.to_array()
    rec["ccrnet.disc_config"] = disc.config.to_array()
    if opts is not None:
        rec.update(opts[0].state_dict("adam_g"))
        rec.update(opts[1].state_dict("adam_d"))
    nx.save_records(path, rec)


def load_ccrnet(path) -> tuple[Generator, Discriminator]:
    rec = nx.load_records(path)
    if "ccrnet.gen_config" not in rec:
        raise ValueError(f"{path}: not a CCRNet checkpoint")
    gen = Generator(GeneratorConfig.from_array(rec["ccrnet.gen_config"]))
    disc = Discriminator(DiscriminatorConfig.from_array(rec["ccrnet.disc_config"]))
    gen.load_state_dict({k[4:]: v for k, v in rec.items() if k.startswith("gen.")})
    disc.load_state_dict({k[5:]: v for k, v in rec.items() if k.startswith("disc.")})
    gen.eval()
    disc.eval()
    return gen, disc
