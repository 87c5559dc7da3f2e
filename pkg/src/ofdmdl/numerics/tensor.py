"""Tape-based reverse-mode autodiff over float64 numpy arrays.

Every differentiable operation appends one entry to the active :class:`Tape`.
``backward`` walks that tape in exact reverse order of recording and then
marks it consumed, so a second ``backward`` without a new forward raises.
Leaf tensors (parameters) accumulate gradients additively until zeroed.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Ordered record of (output, parents, backward_fn) entries."""

    def __init__(self) -> None:
        self.entries: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.entries)


class _State:
    tape = Tape()
    grad_enabled = True


def current_tape() -> Tape:
    return _State.tape


def reset_tape() -> None:
    """Drop everything recorded so far (e.g. after a forward-only pass)."""
    _State.tape = Tape()


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    prev = _State.grad_enabled
    _State.grad_enabled = False
    try:
        yield
    finally:
        _State.grad_enabled = prev


class Tensor:
    """N-dimensional float64 array that may participate in the tape."""

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar()

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def _raise_not_scalar():
    raise ValueError("item() requires a single-element tensor")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data: np.ndarray, parents: tuple[Tensor, ...], fn: BackwardFn) -> Tensor:
    out = Tensor(data)
    if _State.grad_enabled and any(p.requires_grad for p in parents):
        if _State.tape.consumed:
            _State.tape = Tape()
        out.requires_grad = True
        out._tape = _State.tape
        _State.tape.entries.append((out, parents, fn))
    return out


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every leaf reachable from the scalar ``loss``."""
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise RuntimeError("loss does not depend on any tensor requiring grad")
    if loss.is_leaf:
        loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
        return
    _check_finite(loss.data, "loss")
    tape = loss._tape
    if tape.consumed:
        raise RuntimeError("stale tape: backward already ran for this forward pass")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for out, parents, fn in reversed(tape.entries):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for p, pg in zip(parents, fn(g)):
            if pg is None or not p.requires_grad:
                continue
            if p.is_leaf:
                _check_finite(pg, "backward")
                p.grad = pg.copy() if p.grad is None else p.grad + pg
            elif id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
    tape.consumed = True
    tape.entries.clear()
    if _State.tape is tape:
        _State.tape = Tape()


def _check_finite(data: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"{op} produced non-finite values")
    return data


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def fn(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _record(ad * bd, (a, b), fn)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    # split by sign to avoid overflow in exp
    e = np.exp(-np.abs(d))
    s = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _record(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _record(t, (x,), lambda g: (g * (1.0 - t * t),))


# ---------------------------------------------------------------- shape / reduction


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _record(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose_last(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    return _record(np.swapaxes(x.data, -1, -2).copy(), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(np.asarray(out), (x,), fn)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    n = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data

    def fn(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None
        return (ga if ga is None else _unbroadcast(ga, ad.shape),
                gb if gb is None else _unbroadcast(gb, bd.shape))

    return _record(ad @ bd, (a, b), fn)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack ``a`` and ``b`` along the channel axis (third from last)."""
    if a.shape[-2:] != b.shape[-2:] or a.shape[:-3] != b.shape[:-3]:
        raise ValueError(f"spatial/batch mismatch: {a.shape} vs {b.shape}")
    c1 = a.shape[-3]
    out = np.concatenate([a.data, b.data], axis=-3)
    return _record(out, (a, b), lambda g: (g[..., :c1, :, :], g[..., c1:, :, :]))


# ---------------------------------------------------------------- layers


def _pad_nhwc(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    """``B x C x H x W`` to zero-padded ``B x (H+2ph) x (W+2pw) x C`` in one copy."""
    b, c, h, w = x.shape
    out = np.zeros((b, h + 2 * ph, w + 2 * pw, c))
    out[:, ph:ph + h, pw:pw + w, :] = x.transpose(0, 2, 3, 1)
    return out


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    b, _, _, c = xp.shape
    s0, s1, s2, s3 = xp.strides
    win = as_strided(xp, shape=(b, ho, wo, kh, kw, c),
                     strides=(s0, s1 * stride, s2 * stride, s1, s2, s3), writeable=False)
    return win.reshape(b * ho * wo, kh * kw * c)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 1) -> Tensor:
    """2-D cross-correlation.

    ``x`` is ``C_in x H x W`` or ``B x C_in x H x W``; ``kernel`` is laid out as
    ``kh x kw x C_in x C_out``.
    """
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    kh, kw, cin, cout = kernel.shape
    b, c, h, w = xd.shape
    if c != cin:
        raise ValueError(f"conv2d channel mismatch: input has {c}, kernel expects {cin}")
    if stride < 1 or pad < 0:
        raise ValueError("stride must be >= 1 and pad >= 0")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ValueError(f"conv2d output dims non-positive: {ho}x{wo}")

    xp = _pad_nhwc(xd, pad, pad)
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    kmat = kernel.data.reshape(kh * kw * cin, cout)
    out = cols @ kmat
    if bias is not None:
        out += bias.data
    out = out.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2)
    if squeeze:
        out = out[0]
    hp, wp = xp.shape[1], xp.shape[2]

    def fn(g):
        g4 = g[None] if squeeze else g
        gm = g4.transpose(0, 2, 3, 1).reshape(-1, cout)
        gk = (cols.T @ gm).reshape(kernel.shape) if kernel.requires_grad else None
        gb = gm.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad and stride == 1 and kh - 1 - pad >= 0 and kw - 1 - pad >= 0:
            # full correlation of the output gradient with the flipped kernel
            ph, pw = kh - 1 - pad, kw - 1 - pad
            gp = _pad_nhwc(g4, ph, pw)
            kflip = kernel.data[::-1, ::-1].transpose(0, 1, 3, 2).reshape(kh * kw * cout, cin)
            gx = (_im2col(gp, kh, kw, 1, h, w) @ kflip).reshape(b, h, w, cin).transpose(0, 3, 1, 2)
            gx = gx[0] if squeeze else np.ascontiguousarray(gx)
        elif x.requires_grad:
            gcols = (gm @ kmat.T).reshape(b, ho, wo, kh, kw, cin)
            gxp = np.zeros((b, hp, wp, cin))
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :] += gcols[:, :, :, i, j, :]
            gx = gxp[:, pad:hp - pad, pad:wp - pad, :].transpose(0, 3, 1, 2)
            gx = gx[0] if squeeze else np.ascontiguousarray(gx)
        return (gx, gk, gb) if bias is not None else (gx, gk)

    parents = (x, kernel, bias) if bias is not None else (x, kernel)
    return _record(np.ascontiguousarray(out), parents, fn)


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
                running_var: np.ndarray, training: bool, momentum: float = 0.1,
                eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization of a ``B x C x H x W`` tensor.

    In training mode the running statistics arrays are updated in place.
    """
    if x.ndim != 4:
        raise ValueError("batchnorm2d expects B x C x H x W input")
    b, c, h, w = x.shape
    shp = (1, c, 1, 1)
    if training:
        n = b * h * w
        if n < 2:
            raise ValueError("batchnorm2d in train mode needs at least 2 values per channel")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * n / (n - 1)
    else:
        mu, var = running_mean.copy(), running_var.copy()
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(shp)) * inv.reshape(shp)
    out = xhat * gamma.data.reshape(shp) + beta.data.reshape(shp)

    def fn(g):
        gg = (g * xhat).sum(axis=(0, 2, 3))
        gb = g.sum(axis=(0, 2, 3))
        gxhat = g * gamma.data.reshape(shp)
        if training:
            n = b * h * w
            gx = (inv.reshape(shp) / n) * (
                n * gxhat
                - gxhat.sum(axis=(0, 2, 3), keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            )
        else:
            gx = gxhat * inv.reshape(shp)
        return gx, gg, gb

    return _record(out, (x, gamma, beta), fn)


def upsample_nearest(x: Tensor, scale: int) -> Tensor:
    """Replicate each pixel into a ``scale x scale`` block."""
    if scale < 1:
        raise ValueError("scale must be >= 1")
    if scale == 1:
        return reshape(x, x.shape)
    out = np.repeat(np.repeat(x.data, scale, axis=-2), scale, axis=-1)
    *lead, h, w = x.shape

    def fn(g):
        return (g.reshape(*lead, h, scale, w, scale).sum(axis=(-3, -1)),)

    return _record(out, (x,), fn)


# Row taps of nearest-x2 upsampling followed by a 3x3 conv, seen from the input
# grid: output phase p reads input offsets u-1 with weight sum_a _PHASE[p, u, a] K[a].
_PHASE = np.array([[[1, 0, 0], [0, 1, 1], [0, 0, 0]],
                   [[0, 0, 0], [1, 1, 0], [0, 0, 1]]], dtype=np.float64)


def upsample2_conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """``conv2d(upsample_nearest(x, 2), kernel, bias, stride=1, pad=1)`` for 3x3 kernels.

    Evaluated at the input resolution as one 3x3 conv producing the four output
    phases, then interleaved. Same arithmetic, a quarter of the im2col traffic.
    """
    if x.ndim != 4:
        raise ValueError("upsample2_conv2d expects B x C x H x W")
    kh, kw, cin, cout = kernel.shape
    b, c, h, w = x.shape
    if (kh, kw) != (3, 3) or c != cin:
        raise ValueError(f"need a 3x3 kernel over {c} channels, got {kernel.shape}")
    kc = np.einsum("pua,qvc,acio->uvipqo", _PHASE, _PHASE, kernel.data).reshape(9 * cin, 4 * cout)
    xp = _pad_nhwc(x.data, 1, 1)
    cols = _im2col(xp, 3, 3, 1, h, w)
    out = (cols @ kc).reshape(b, h, w, 2, 2, cout)
    if bias is not None:
        out += bias.data
    out = out.transpose(0, 5, 1, 3, 2, 4).reshape(b, cout, 2 * h, 2 * w)

    def fn(g):
        gm = g.reshape(b, cout, h, 2, w, 2).transpose(0, 2, 4, 3, 5, 1).reshape(b * h * w, 4 * cout)
        gk = None
        if kernel.requires_grad:
            gkc = (cols.T @ gm).reshape(3, 3, cin, 2, 2, cout)
            gk = np.einsum("pua,qvc,uvipqo->acio", _PHASE, _PHASE, gkc)
        gb = gm.reshape(-1, cout).sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gm @ kc.T).reshape(b, h, w, 3, 3, cin)
            gxp = np.zeros((b, h + 2, w + 2, cin))
            for i in range(3):
                for j in range(3):
                    gxp[:, i:i + h, j:j + w, :] += gcols[:, :, :, i, j, :]
            gx = np.ascontiguousarray(gxp[:, 1:h + 1, 1:w + 1, :].transpose(0, 3, 1, 2))
        return (gx, gk, gb) if bias is not None else (gx, gk)

    parents = (x, kernel, bias) if bias is not None else (x, kernel)
    return _record(np.ascontiguousarray(out), parents, fn)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map with ``weight`` laid out ``Din x Dout``.

    A 1-D input is a single sample; otherwise the first axis is the batch and
    the rest is flattened.
    """
    din, dout = weight.shape
    single = x.ndim == 1
    flat_len = x.size if single else int(np.prod(x.shape[1:]))
    if flat_len != din:
        raise ValueError(f"linear: input {x.shape} does not flatten to {din}")
    flat = reshape(x, (1, din) if single else (x.shape[0], din))
    out = matmul(flat, weight)
    if bias is not None:
        out = add(out, bias)
    return reshape(out, (dout,)) if single else out


# ---------------------------------------------------------------- losses


def l1_loss(pred: Tensor, target) -> Tensor:
    """Batch-mean of per-sample summed absolute error.

    The first axis is the batch when ``pred.ndim >= 2``; a 1-D input is one sample.
    """
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ValueError(f"l1_loss shape mismatch: {pred.shape} vs {t.shape}")
    nb = pred.shape[0] if pred.ndim >= 2 else 1
    diff = pred.data - t
    out = np.abs(diff).sum() / nb
    sgn = np.sign(diff) / nb
    return _record(np.asarray(out), (pred,), lambda g: (g * sgn,))


BCE_CLAMP = 1e-7


def bce_loss(prob: Tensor, label) -> Tensor:
    """Mean binary cross-entropy of probabilities against 0/1 labels."""
    y = np.broadcast_to(np.asarray(label, dtype=np.float64), prob.shape)
    p = np.clip(prob.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    inside = (prob.data >= BCE_CLAMP) & (prob.data <= 1.0 - BCE_CLAMP)
    n = prob.size
    out = np.sum(-y * np.log(p) - (1.0 - y) * np.log1p(-p)) / n
    dp = np.where(inside, (-y / p + (1.0 - y) / (1.0 - p)) / n, 0.0)
    return _record(np.asarray(out), (prob,), lambda g: (g * dp,))
