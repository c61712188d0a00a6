"""Fake-quantization layers for small dense/conv networks.

Training keeps full-precision shadow parameters. On every forward pass
the quantized operands are rebuilt from the shadows: clip to [lo, hi],
apply the interval tanh, snap with a sign decision, dequantize back to
a float on the 2**bits-level grid. Backward treats the sign step as
identity and routes analytic gradients to the shadows and to the
quantizer's own scalars (alpha, lo, hi).

A straight-through baseline is included for comparisons: plain uniform
quantization forward, pass-through gradient inside the clip range.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .quantizer import (
    ALPHA_MAX,
    QuantParams,
    soft_quantize,
    hard_quantize,
    uniform_quantize,
    soft_quantize_backward,
)


# ------------------------------------------------------------ clip range init

def init_clipping(t, policy: str, ma_decay: float = 0.9, prev=None):
    """Initial or updated clip range for a tensor.

    policy "learned": batch min/max, later optimized by gradient.
    policy "moving-average": batch min/max folded into an exponential
    moving average of the previous range with the given decay; with
    prev=None this is the first batch and the stats are taken as-is.

    A constant tensor widens to an epsilon-scaled band around its value
    and warns, so the interval width stays positive.
    """
    if policy not in ("learned", "moving-average"):
        raise ValueError(f"unknown clip policy {policy!r}")
    arr = np.asarray(t, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot initialize clipping from an empty tensor")
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot initialize clipping from non-finite values")
    lo = float(arr.min())
    hi = float(arr.max())
    if lo == hi:
        pad = max(abs(lo), 1.0) * np.finfo(np.float64).eps * 4.0
        warnings.warn(
            f"constant tensor (value {lo}); widening clip range by {pad}",
            RuntimeWarning,
        )
        lo, hi = lo - pad, hi + pad
    if policy == "moving-average" and prev is not None:
        plo, phi = prev
        lo = ma_decay * plo + (1.0 - ma_decay) * lo
        hi = ma_decay * phi + (1.0 - ma_decay) * hi
    return lo, hi


# ------------------------------------------------------------ fake-quant ops

@dataclass
class FakeQuantContext:
    """Saved state for the backward pass."""

    x: np.ndarray
    qp: QuantParams


def fake_quant_forward(t, qp: QuantParams, mode: str = "hard"):
    """Quantize a tensor through the soft pipeline.

    mode "hard" (training/deployment parity): every output lands on the
    2**bits-level grid. mode "soft": smooth surrogate, used for
    gradient audits and sharpness sweeps. mode "uniform": plain
    round-to-nearest, no tanh.
    """
    arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("fake_quant_forward requires finite inputs")
    if mode == "hard":
        out = hard_quantize(arr, qp)
    elif mode == "soft":
        out = soft_quantize(arr, qp)
    elif mode == "uniform":
        out = uniform_quantize(arr, qp)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out, FakeQuantContext(arr, qp)


def fake_quant_backward(ctx: FakeQuantContext, upstream, alpha_reg: float = 0.0):
    """Gradients for the tensor and the quantizer scalars.

    Returns (d_input, d_alpha, d_lo, d_hi); the scalars are sums of the
    per-element streams. ``alpha_reg`` adds the derivative of the soft
    penalty alpha_reg * alpha**2 to the alpha gradient.
    """
    up = np.asarray(upstream, dtype=np.float64)
    if up.shape != ctx.x.shape:
        raise ValueError(f"upstream shape {up.shape} != input shape {ctx.x.shape}")
    g = soft_quantize_backward(ctx.x, ctx.qp, up)
    d_alpha = float(np.sum(g.d_alpha)) + 2.0 * alpha_reg * ctx.qp.alpha
    return g.d_x, d_alpha, float(np.sum(g.d_lo)), float(np.sum(g.d_hi))


def ste_forward(t, qp: QuantParams):
    """Uniform quantization forward for the straight-through baseline."""
    arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("ste_forward requires finite inputs")
    return uniform_quantize(arr, qp), FakeQuantContext(arr, qp)


def ste_backward(ctx: FakeQuantContext, upstream):
    """Pass-through gradient inside [lo, hi], zero outside."""
    up = np.asarray(upstream, dtype=np.float64)
    if up.shape != ctx.x.shape:
        raise ValueError(f"upstream shape {up.shape} != input shape {ctx.x.shape}")
    inside = (ctx.x >= ctx.qp.lo) & (ctx.x <= ctx.qp.hi)
    return np.where(inside, up, 0.0)


# ------------------------------------------------------------ quantizer slots

@dataclass
class QuantSlot:
    """One quantized operand (a weight tensor or an activation stream).

    Owns the QuantParams plus the policy for keeping the clip range up
    to date. The range is lazily initialized from the first tensor the
    slot sees.
    """

    bits: int
    alpha_init: float
    kind: str = "soft"              # "soft" | "ste"
    policy: str = "learned"         # "learned" | "moving-average"
    ma_decay: float = 0.9
    learn_alpha: bool = True
    learn_clip: bool = True
    qp: QuantParams | None = None

    def __post_init__(self):
        if self.kind not in ("soft", "ste"):
            raise ValueError(f"unknown quantizer kind {self.kind!r}")
        if self.policy == "moving-average":
            self.learn_clip = False
        if self.kind == "ste":
            self.learn_alpha = False
            self.learn_clip = False

    def observe(self, t):
        """Initialize or EMA-update the clip range from a tensor."""
        if self.qp is None:
            lo, hi = init_clipping(t, "learned")
            self.qp = QuantParams(self.bits, lo, hi, self.alpha_init)
        elif self.policy == "moving-average":
            lo, hi = init_clipping(t, "moving-average", self.ma_decay,
                                   prev=(self.qp.lo, self.qp.hi))
            self.qp.lo, self.qp.hi = lo, hi

    def apply(self, t, mode: str | None = None, update_stats: bool = False):
        """Quantize t, returning (quantized, ctx). ctx is None for STE off-modes."""
        if update_stats or self.qp is None:
            self.observe(t)
        if self.kind == "ste":
            if mode in (None, "hard", "uniform"):
                return ste_forward(t, self.qp)
            if mode == "soft":  # sweeps compare like with like
                return fake_quant_forward(t, self.qp, "soft")
            raise ValueError(f"unknown mode {mode!r}")
        return fake_quant_forward(t, self.qp, mode or "hard")


# ------------------------------------------------------------------- layers

def _relu(z):
    return np.maximum(z, 0.0)


class Dense:
    """Affine layer o = a_q @ W_q.T + b with optional relu."""

    kind = "dense"

    def __init__(self, in_dim, out_dim, *, rng, bias=True, activation="none",
                 weight_slot: QuantSlot | None = None,
                 act_slot: QuantSlot | None = None, name=""):
        limit = np.sqrt(2.0 / in_dim)
        self.W = rng.normal(0.0, limit, size=(out_dim, in_dim))
        self.b = np.zeros(out_dim, dtype=np.float64) if bias else None
        self.activation = activation
        self.weight_slot = weight_slot
        self.act_slot = act_slot
        self.name = name
        self.grads = {}
        self._cache = None

    @property
    def quantize_weights(self):
        return self.weight_slot is not None

    @property
    def quantize_acts(self):
        return self.act_slot is not None

    def forward(self, x, mode=None, update_stats=False):
        ctx_a = ctx_w = None
        xq, wq = x, self.W
        if self.act_slot is not None:
            xq, ctx_a = self.act_slot.apply(x, mode, update_stats)
        if self.weight_slot is not None:
            wq, ctx_w = self.weight_slot.apply(self.W, mode, update_stats)
        z = xq @ wq.T
        if self.b is not None:
            z = z + self.b
        out = _relu(z) if self.activation == "relu" else z
        self._cache = (x, xq, wq, z, ctx_a, ctx_w)
        return out

    def backward(self, up, alpha_reg=0.0):
        x, xq, wq, z, ctx_a, ctx_w = self._cache
        if self.activation == "relu":
            up = up * (z > 0.0)
        self.grads = {}
        if self.b is not None:
            self.grads["b"] = up.sum(axis=0)
        dwq = up.T @ xq
        dxq = up @ wq
        if ctx_w is not None:
            if self.weight_slot.kind == "ste":
                self.grads["W"] = ste_backward(ctx_w, dwq)
            else:
                dw, da, dl, dh = fake_quant_backward(ctx_w, dwq, alpha_reg)
                self.grads["W"] = dw
                self.grads["alpha_w"], self.grads["lo_w"], self.grads["hi_w"] = da, dl, dh
        else:
            self.grads["W"] = dwq
        if ctx_a is not None:
            if self.act_slot.kind == "ste":
                dx = ste_backward(ctx_a, dxq)
            else:
                dx, da, dl, dh = fake_quant_backward(ctx_a, dxq, alpha_reg)
                self.grads["alpha_a"], self.grads["lo_a"], self.grads["hi_a"] = da, dl, dh
        else:
            dx = dxq
        return dx


class Conv2d:
    """Direct 2-D convolution, stride 1, zero padding."""

    kind = "conv2d"

    def __init__(self, in_ch, out_ch, ksize, *, rng, padding=0, bias=True,
                 activation="none", weight_slot=None, act_slot=None, name=""):
        kh = kw = int(ksize)
        limit = np.sqrt(2.0 / (in_ch * kh * kw))
        self.W = rng.normal(0.0, limit, size=(out_ch, in_ch, kh, kw))
        self.b = np.zeros(out_ch, dtype=np.float64) if bias else None
        self.padding = int(padding)
        self.activation = activation
        self.weight_slot = weight_slot
        self.act_slot = act_slot
        self.name = name
        self.grads = {}
        self._cache = None

    @property
    def quantize_weights(self):
        return self.weight_slot is not None

    @property
    def quantize_acts(self):
        return self.act_slot is not None

    def forward(self, x, mode=None, update_stats=False):
        ctx_a = ctx_w = None
        xq, wq = x, self.W
        if self.act_slot is not None:
            xq, ctx_a = self.act_slot.apply(x, mode, update_stats)
        if self.weight_slot is not None:
            wq, ctx_w = self.weight_slot.apply(self.W, mode, update_stats)
        p = self.padding
        xp = np.pad(xq, ((0, 0), (0, 0), (p, p), (p, p))) if p else xq
        n, c, h, w = xp.shape
        f, _, kh, kw = wq.shape
        ho, wo = h - kh + 1, w - kw + 1
        if ho <= 0 or wo <= 0:
            raise ValueError("kernel larger than padded input")
        z = np.zeros((n, f, ho, wo), dtype=np.float64)
        for a in range(kh):
            for bcol in range(kw):
                patch = xp[:, :, a:a + ho, bcol:bcol + wo]
                z += np.tensordot(patch, wq[:, :, a, bcol], axes=([1], [1])).transpose(0, 3, 1, 2)
        if self.b is not None:
            z = z + self.b[None, :, None, None]
        out = _relu(z) if self.activation == "relu" else z
        self._cache = (x, xq, xp, wq, z, ctx_a, ctx_w)
        return out

    def backward(self, up, alpha_reg=0.0):
        x, xq, xp, wq, z, ctx_a, ctx_w = self._cache
        if self.activation == "relu":
            up = up * (z > 0.0)
        f, c, kh, kw = wq.shape
        n = up.shape[0]
        ho, wo = up.shape[2], up.shape[3]
        self.grads = {}
        if self.b is not None:
            self.grads["b"] = up.sum(axis=(0, 2, 3))
        dwq = np.zeros_like(wq)
        dxp = np.zeros_like(xp)
        for a in range(kh):
            for bcol in range(kw):
                patch = xp[:, :, a:a + ho, bcol:bcol + wo]
                dwq[:, :, a, bcol] = np.tensordot(up, patch, axes=([0, 2, 3], [0, 2, 3]))
                dxp[:, :, a:a + ho, bcol:bcol + wo] += np.tensordot(
                    up, wq[:, :, a, bcol], axes=([1], [0])).transpose(0, 3, 1, 2)
        p = self.padding
        dxq = dxp[:, :, p:-p, p:-p] if p else dxp
        if ctx_w is not None:
            if self.weight_slot.kind == "ste":
                self.grads["W"] = ste_backward(ctx_w, dwq)
            else:
                dw, da, dl, dh = fake_quant_backward(ctx_w, dwq, alpha_reg)
                self.grads["W"] = dw
                self.grads["alpha_w"], self.grads["lo_w"], self.grads["hi_w"] = da, dl, dh
        else:
            self.grads["W"] = dwq
        if ctx_a is not None:
            if self.act_slot.kind == "ste":
                dx = ste_backward(ctx_a, dxq)
            else:
                dx, da, dl, dh = fake_quant_backward(ctx_a, dxq, alpha_reg)
                self.grads["alpha_a"], self.grads["lo_a"], self.grads["hi_a"] = da, dl, dh
        else:
            dx = dxq
        return dx


class Flatten:
    """Reshape (N, ...) -> (N, features). No parameters."""

    kind = "flatten"
    quantize_weights = False
    quantize_acts = False
    weight_slot = None
    act_slot = None

    def __init__(self, name=""):
        self.name = name
        self.grads = {}
        self._shape = None

    def forward(self, x, mode=None, update_stats=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, up, alpha_reg=0.0):
        return up.reshape(self._shape)


class Network:
    """Ordered layer stack. First and last parametric layers are never
    quantized; interior layers may be."""

    def __init__(self, layers):
        self.layers = list(layers)
        parametric = [ly for ly in self.layers if ly.kind in ("dense", "conv2d")]
        if parametric:
            for ly in (parametric[0], parametric[-1]):
                if ly.quantize_weights or ly.quantize_acts:
                    raise ValueError(
                        f"first/last layer {ly.name!r} must stay unquantized")

    def forward(self, x, mode=None, update_stats=False):
        out = np.asarray(x, dtype=np.float64)
        for ly in self.layers:
            out = ly.forward(out, mode=mode, update_stats=update_stats)
        return out

    def backward(self, dout, alpha_reg=0.0):
        grad = dout
        for ly in reversed(self.layers):
            grad = ly.backward(grad, alpha_reg=alpha_reg)
        return grad

    def quant_slots(self):
        """(layer, tag, slot) triples for every quantized operand."""
        out = []
        for ly in self.layers:
            if ly.weight_slot is not None:
                out.append((ly, "w", ly.weight_slot))
            if ly.act_slot is not None:
                out.append((ly, "a", ly.act_slot))
        return out
