"""Super-resolution channel estimator.

The network maps the LS pilot estimate, arranged as a ``2 x n_freq x n_time``
low-resolution image, to the full ``2 x K x N`` channel image. It is a reduced
residual-group network with second-order channel attention:

    head conv -> G x [B residual blocks -> SOCA -> group skip] -> global skip
    -> 2 x (nearest x2 -> conv -> relu) -> reconstruction conv
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import numerics as nx
from .numerics import Conv2d, Linear, Module, Tensor
from .ofdm import from_channels, to_channels
from .pilots import PilotObservation, PilotPattern, ls_estimate


@dataclass(frozen=True)
class CenetConfig:
    channels: int = 32
    n_groups: int = 3
    n_blocks: int = 4
    reduction: int = 8
    scale: int = 4
    in_freq: int = 18
    in_time: int = 7

    def __post_init__(self):
        if self.n_groups < 1 or self.n_blocks < 1:
            raise ValueError("need at least one group and one block")
        if self.channels % self.reduction:
            raise ValueError("channels must be divisible by the reduction ratio")
        if self.scale != 4:
            raise ValueError("the upsampler is two x2 stages, so scale must be 4")

    @property
    def out_freq(self) -> int:
        return self.in_freq * self.scale

    @property
    def out_time(self) -> int:
        return self.in_time * self.scale

    def to_array(self) -> np.ndarray:
        return np.array(list(asdict(self).values()), dtype=float)

    @classmethod
    def from_array(cls, a: np.ndarray) -> "CenetConfig":
        return cls(*(int(v) for v in a))


# ---------------------------------------------------------------- blocks


def covariance(f: Tensor) -> Tensor:
    """``B x C x C`` channel covariance over the spatial positions of ``B x C x H x W``."""
    b, c, h, w = f.shape
    x = nx.reshape(f, (b, c, h * w))
    xc = x - nx.mean(x, axis=-1, keepdims=True)
    return nx.matmul(xc, nx.transpose_last(xc)) * (1.0 / (h * w))


class SecondOrderAttention(Module):
    """Channel gate driven by the row means of the spatial covariance."""

    def __init__(self, channels: int, reduction: int, rng: np.random.Generator):
        self.down = Linear(channels, channels // reduction, rng)
        self.up = Linear(channels // reduction, channels, rng)

    def gate(self, f: Tensor) -> Tensor:
        b, c, h, w = f.shape
        if h * w < 2:
            raise ValueError("attention needs at least 2 spatial positions")
        z = nx.mean(covariance(f), axis=-1)
        return nx.sigmoid(self.up(nx.relu(self.down(z))))

    def forward(self, f: Tensor) -> Tensor:
        single = f.ndim == 3
        if single:
            f = nx.reshape(f, (1,) + f.shape)
        b, c = f.shape[:2]
        out = f * nx.reshape(self.gate(f), (b, c, 1, 1))
        return nx.reshape(out, out.shape[1:]) if single else out


class ResidualBlock(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv1 = Conv2d(channels, channels, rng)
        self.conv2 = Conv2d(channels, channels, rng)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.conv2(nx.relu(self.conv1(x)))


class ResidualGroup(Module):
    def __init__(self, channels: int, n_blocks: int, reduction: int, rng: np.random.Generator):
        self.blocks = [ResidualBlock(channels, rng) for _ in range(n_blocks)]
        self.attention = SecondOrderAttention(channels, reduction, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for blk in self.blocks:
            h = blk(h)
        return x + self.attention(h)


class Upsampler(Module):
    """Two stages of nearest x2 followed by a 3x3 conv and relu."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.convs = [Conv2d(channels, channels, rng) for _ in range(2)]

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = nx.relu(conv.upsampled(x))
        return x


class CenetModel(Module):
    def __init__(self, config: CenetConfig = CenetConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        c = config.channels
        self.config = config
        self.head = Conv2d(2, c, rng)
        self.groups = [ResidualGroup(c, config.n_blocks, config.reduction, rng) for _ in range(config.n_groups)]
        self.upsampler = Upsampler(c, rng)
        self.tail = Conv2d(c, 2, rng)
        # global input scale, fitted on the training set
        self.running_scale = np.ones(1)

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.config
        if x.ndim != 4 or x.shape[1:] != (2, cfg.in_freq, cfg.in_time):
            raise ValueError(f"expected B x 2 x {cfg.in_freq} x {cfg.in_time}, got {x.shape}")
        shallow = self.head(x)
        h = shallow
        for g in self.groups:
            h = g(h)
        return self.tail(self.upsampler(h + shallow))

    @property
    def input_scale(self) -> float:
        return float(self.running_scale[0])

    def fit_scale(self, lr_images: np.ndarray) -> float:
        """Set the input scale to the RMS of the training LR images."""
        s = float(np.sqrt(np.mean(lr_images**2)))
        if not np.isfinite(s) or s <= 0:
            raise ValueError("cannot fit input scale on all-zero or non-finite data")
        self.running_scale[0] = s
        return s

    def predict(self, lr_images: np.ndarray, batch: int = 64) -> np.ndarray:
        """Eval-mode forward on raw (unnormalized) LR images; returns channel images."""
        was = self.training
        self.eval()
        outs = []
        with nx.no_grad():
            for i in range(0, len(lr_images), batch):
                outs.append(self(Tensor(lr_images[i:i + batch] / self.input_scale)).data)
        self.train(was)
        return np.concatenate(outs) if outs else np.empty((0, 2, self.config.out_freq, self.config.out_time))


# ---------------------------------------------------------------- data


def lr_image(h_ls: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """``... x P`` complex pilot estimates to ``... x 2 x n_freq x n_time`` real images."""
    return to_channels(pattern.to_image(h_ls))


@dataclass
class CenetData:
    """Training pairs: LR images ``R x 2 x f x t`` and HR channel images ``R x 2 x K x N``."""

    lr: np.ndarray
    hr: np.ndarray

    def __post_init__(self):
        if len(self.lr) != len(self.hr):
            raise ValueError("LR and HR sets differ in length")

    def __len__(self) -> int:
        return len(self.lr)

    @classmethod
    def from_grids(cls, h_ls: np.ndarray, h: np.ndarray, pattern: PilotPattern) -> "CenetData":
        return cls(lr_image(h_ls, pattern), to_channels(h))


def channel_mse_images(pred: np.ndarray, target: np.ndarray) -> float:
    """Complex-grid MSE computed from 2-channel images."""
    return float(np.mean(np.sum((pred - target) ** 2, axis=-3)))


# ---------------------------------------------------------------- training


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_mse: float
    seconds: float


def _lr_at(epoch: int, epochs: int, lr: float, lr_final: float | None) -> float:
    if lr_final is None or epochs <= 1:
        return lr
    frac = epoch / (epochs - 1)
    return lr_final + 0.5 * (lr - lr_final) * (1 + np.cos(np.pi * frac))


def cenet_train(model: CenetModel, data: CenetData, epochs: int, lr: float = 1e-5, batch: int = 16,
                seed: int = 0, val: CenetData | None = None, lr_final: float | None = None,
                time_budget: float | None = None, log_path=None, optimizer: nx.Adam | None = None,
                fit_scale: bool = True, on_epoch: Callable[[EpochLog], None] | None = None) -> list[EpochLog]:
    """Adam on the L1 loss with a seed-determined shuffle per epoch.

    ``lr_final`` enables cosine annealing from ``lr``. ``time_budget`` (seconds)
    is a hard cap: a step is only started if the previous step's duration still
    fits, so training may end mid-epoch (that epoch is logged over the samples seen).
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    if fit_scale:
        model.fit_scale(data.lr)
    opt = optimizer or nx.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    s = model.input_scale
    logs: list[EpochLog] = []
    start = time.perf_counter()
    model.train()
    step_time = 0.0
    out_of_time = False
    for epoch in range(epochs):
        opt.lr = _lr_at(epoch, epochs, lr, lr_final)
        order = rng.permutation(len(data))
        total, seen = 0.0, 0
        for i in range(0, len(order), batch):
            t0 = time.perf_counter()
            if time_budget is not None and t0 - start + step_time > time_budget:
                out_of_time = True
                break
            idx = order[i:i + batch]
            opt.zero_grad()
            loss = nx.l1_loss(model(Tensor(data.lr[idx] / s)), data.hr[idx])
            nx.backward(loss)
            opt.step()
            total += loss.item() * len(idx)
            seen += len(idx)
            step_time = time.perf_counter() - t0
        if seen == 0:
            break
        val_mse = channel_mse_images(model.predict(val.lr), val.hr) if val is not None else float("nan")
        entry = EpochLog(epoch, total / seen, val_mse, time.perf_counter() - start)
        logs.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
        if out_of_time:
            break
    if log_path is not None:
        write_log(logs, log_path)
    return logs


def write_log(logs: list[EpochLog], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_mse"])
        for e in logs:
            w.writerow([e.epoch, repr(e.train_loss), repr(e.val_mse)])


# ---------------------------------------------------------------- inference


def _check_pattern(model: CenetModel, pattern: PilotPattern) -> None:
    cfg = model.config
    if (pattern.n_freq, pattern.n_time, pattern.n_subcarriers, pattern.n_slots) != \
            (cfg.in_freq, cfg.in_time, cfg.out_freq, cfg.out_time):
        raise ValueError("pilot pattern does not match the model configuration")


def cenet_estimate(model: CenetModel, obs: PilotObservation, pattern: PilotPattern) -> np.ndarray:
    """Full-grid channel estimate from pilot observations (single grid or a batch)."""
    _check_pattern(model, pattern)
    h_ls = ls_estimate(obs, pattern)
    single = h_ls.ndim == 1
    img = lr_image(h_ls[None] if single else h_ls, pattern)
    out = from_channels(model.predict(img))
    return out[0] if single else out


# ---------------------------------------------------------------- checkpoint


def save_cenet(model: CenetModel, path, optimizer: nx.Adam | None = None) -> None:
    rec = {f"model.{k}": v for k, v in model.state_dict().items()}
    rec["cenet.config"] = model.config.to_array()
    if optimizer is not None:
        rec.update(optimizer.state_dict())
    nx.save_records(path, rec)


def load_cenet(path) -> CenetModel:
    rec = nx.load_records(path)
    if "cenet.config" not in rec:
        raise ValueError(f"{path}: not a CENet checkpoint")
    model = CenetModel(CenetConfig.from_array(rec["cenet.config"]))
    model.load_state_dict({k[len("model."):]: v for k, v in rec.items() if k.startswith("model.")})
    model.eval()
    return model
