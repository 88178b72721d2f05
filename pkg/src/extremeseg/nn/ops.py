"""Differentiable op set: conv3d (strided / pseudo-3D), transposed conv,
instance norm, leaky ReLU, channel concat, softmax+CE, soft Dice.

Tensors are (channels, x, y, z); losses are mean-per-voxel scalars.
"""

import numpy as np

from .. import accel
from .autodiff import Tensor


def conv3d(x: Tensor, w: Tensor, b: Tensor, stride=(1, 1, 1)) -> Tensor:
    out = accel.conv3d_forward(x.data, w.data, b.data, stride)

    def backward(g):
        if x.requires_grad:
            x.accumulate(accel.conv3d_backward_x(g, w.data, x.data.shape, stride))
        if w.requires_grad:
            w.accumulate(accel.conv3d_backward_w(x.data, g, w.data.shape[2:],
                                                 stride))
        if b.requires_grad:
            b.accumulate(g.sum(axis=(1, 2, 3)))
    return Tensor(out, parents=(x, w, b), backward_fn=backward)


def tconv3d(x: Tensor, wt: Tensor, b: Tensor, stride) -> Tensor:
    out = accel.tconv3d_forward(x.data, wt.data, b.data, stride)

    def backward(g):
        if x.requires_grad:
            x.accumulate(accel.tconv3d_backward_x(g, wt.data))
        if wt.requires_grad:
            wt.accumulate(accel.tconv3d_backward_w(x.data, g, stride))
        if b.requires_grad:
            b.accumulate(g.sum(axis=(1, 2, 3)))
    return Tensor(out, parents=(x, wt, b), backward_fn=backward)


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor,
                  eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over the spatial axes (biased variance)."""
    ax = (1, 2, 3)
    mean = x.data.mean(axis=ax, keepdims=True)
    var = x.data.var(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    g4 = gamma.data[:, None, None, None]
    out = g4 * xhat + beta.data[:, None, None, None]
    n = x.data[0].size

    def backward(g):
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=ax))
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=ax))
        if x.requires_grad:
            dxhat = g * g4
            s1 = dxhat.sum(axis=ax, keepdims=True)
            s2 = (dxhat * xhat).sum(axis=ax, keepdims=True)
            x.accumulate((inv / n) * (n * dxhat - s1 - xhat * s2))
    return Tensor(out, parents=(x, gamma, beta), backward_fn=backward)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, slope * x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate(np.where(mask, g, slope * g))
    return Tensor(out, parents=(x,), backward_fn=backward)


def concat(a: Tensor, b: Tensor) -> Tensor:
    out = np.concatenate([a.data, b.data], axis=0)
    na = a.data.shape[0]

    def backward(g):
        if a.requires_grad:
            a.accumulate(g[:na])
        if b.requires_grad:
            b.accumulate(g[na:])
    return Tensor(out, parents=(a, b), backward_fn=backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Channel softmax on a raw array (inference path)."""
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def _log_softmax(z):
    m = z.max(axis=0, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=0, keepdims=True))


def softmax_ce_loss(logits: Tensor, onehot: np.ndarray) -> Tensor:
    """Mean per-voxel cross-entropy of channel softmax vs a one-hot target."""
    logp = _log_softmax(logits.data)
    n = logits.data[0].size
    loss = -(onehot * logp).sum() / n
    p = np.exp(logp)

    def backward(g):
        if logits.requires_grad:
            logits.accumulate(g * (p - onehot) / n)
    return Tensor(np.asarray(loss, dtype=logits.dtype),
                  parents=(logits,), backward_fn=backward)


def soft_dice_loss(logits: Tensor, target_fg: np.ndarray,
                   eps: float = 1e-5) -> Tensor:
    """1 - (2*sum(p*g)+eps) / (sum(p)+sum(g)+eps) on the tumor channel."""
    p = softmax(logits.data)
    p1 = p[1]
    g_ = target_fg
    s = float((p1 * g_).sum())
    a = float(p1.sum())
    b = float(g_.sum())
    denom = a + b + eps
    loss = 1.0 - (2.0 * s + eps) / denom

    def backward(g):
        if not logits.requires_grad:
            return
        # d loss / d p1, then through the 2-channel softmax Jacobian
        dp1 = (2.0 * s + eps) / denom ** 2 - 2.0 * g_ / denom
        inner = dp1 * p[1]
        grad = np.empty_like(logits.data)
        grad[0] = -p[0] * inner
        grad[1] = p[1] * dp1 - p[1] * inner
        logits.accumulate(g * grad)
    return Tensor(np.asarray(loss, dtype=logits.dtype),
                  parents=(logits,), backward_fn=backward)


def scale(x: Tensor, factor: float) -> Tensor:
    def backward(g):
        if x.requires_grad:
            x.accumulate(g * factor)
    return Tensor(x.data * factor, parents=(x,), backward_fn=backward)


def add_scalars(terms) -> Tensor:
    terms = list(terms)
    total = sum(t.data for t in terms)

    def backward(g):
        for t in terms:
            if t.requires_grad:
                t.accumulate(g)
    return Tensor(np.asarray(total), parents=tuple(terms), backward_fn=backward)
