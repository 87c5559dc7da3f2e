"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """Adam over a named parameter dict.

    Parameters without a gradient are treated as having a zero gradient, so
    their moments decay but the step counter still advances.
    """

    def __init__(self, params: dict[str, Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)
        for name, p in params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        if value <= 0:
            raise ValueError(f"learning rate must be positive, got {value}")
        self.state.lr = float(value)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        s = self.state
        s.t += 1
        c1 = 1.0 - s.beta1 ** s.t
        c2 = 1.0 - s.beta2 ** s.t
        for name, p in self.params.items():
            if p.grad is None:
                g = np.zeros_like(p.data)
            else:
                g = p.grad
            m, v = s.m[name], s.v[name]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * g * g
            p.data -= s.lr * (m / c1) / (np.sqrt(v / c2) + s.eps)

    def state_dict(self, prefix: str = "adam") -> dict[str, np.ndarray]:
        s = self.state
        out = {f"{prefix}.hyper": np.array([s.lr, s.beta1, s.beta2, s.eps, float(s.t)])}
        for name in self.params:
            out[f"{prefix}.m.{name}"] = s.m[name].copy()
            out[f"{prefix}.v.{name}"] = s.v[name].copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "adam") -> None:
        lr, b1, b2, eps, t = state[f"{prefix}.hyper"]
        s = self.state
        s.lr, s.beta1, s.beta2, s.eps, s.t = float(lr), float(b1), float(b2), float(eps), int(t)
        for name in self.params:
            s.m[name] = state[f"{prefix}.m.{name}"].copy()
            s.v[name] = state[f"{prefix}.v.{name}"].copy()
