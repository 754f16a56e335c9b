"""Minimal deterministic convolution engine (inference only).

Tensors are numpy float32 arrays of shape (channels, height, width).
Every op is a pure function; repeated evaluation is bit-identical.
No autodiff: the network is forward-only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BN_EPS = 1e-5


@dataclass
class ConvParams:
    """Weights and bias for one convolution layer.

    weights: (out_channels, in_channels, kernel_h, kernel_w)
    bias: (out_channels,)
    """

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.weights.ndim != 4:
            raise ValueError("conv weights must be (O, I, kh, kw)")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError("bias length must equal out_channels")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]


def conv2d(x: np.ndarray, p: ConvParams, padding: str = "same") -> np.ndarray:
    """Cross-correlation convolution plus bias.

    "same" zero-pads so output dims are ceil(in / stride); extra padding
    goes to the bottom/right.  "valid" uses no padding.
    """
    if x.ndim != 3:
        raise ValueError("input must be (C, H, W)")
    if x.shape[0] != p.in_channels:
        raise ValueError(
            f"channel mismatch: input {x.shape[0]}, params {p.in_channels}"
        )
    if p.stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    if padding not in ("same", "valid"):
        raise ValueError(f"unknown padding {padding!r}")
    kh, kw = p.kernel
    _, h, w = x.shape
    s = p.stride
    if padding == "same":
        out_h = -(-h // s)
        out_w = -(-w // s)
        pad_h = max((out_h - 1) * s + kh - h, 0)
        pad_w = max((out_w - 1) * s + kw - w, 0)
        x = np.pad(
            x,
            ((0, 0), (pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2)),
        )
    else:
        out_h = (h - kh) // s + 1
        out_w = (w - kw) // s + 1
        if out_h < 1 or out_w < 1:
            raise ValueError("input smaller than kernel under valid padding")
    x = np.ascontiguousarray(x, dtype=np.float32)
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    windows = windows[:, ::s, ::s][:, :out_h, :out_w]
    # (O, I*kh*kw) @ (I*kh*kw, out_h*out_w)
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(p.in_channels * kh * kw, -1)
    flat = p.weights.reshape(p.out_channels, -1) @ cols
    return flat.reshape(p.out_channels, out_h, out_w) + p.bias[:, None, None]


def deconv2d_s2(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Transposed convolution, 2x2 kernel, stride 2: doubles H and W.

    Adjoint of the stride-2 valid 2x2 convolution with transposed
    channel axes.
    """
    kh, kw = p.kernel
    if (kh, kw) != (2, 2) or p.stride != 2:
        raise ValueError("deconv2d_s2 requires a 2x2 kernel with stride 2")
    if x.shape[0] != p.in_channels:
        raise ValueError(
            f"channel mismatch: input {x.shape[0]}, params {p.in_channels}"
        )
    _, h, w = x.shape
    # Non-overlapping taps: out[2y:2y+2, 2x:2x+2] = sum_i w[:, i] * x[i, y, x]
    spread = np.einsum("ihw,oiuv->ohuwv", x.astype(np.float32), p.weights)
    out = spread.reshape(p.out_channels, 2 * h, 2 * w)
    return out + p.bias[:, None, None]


def batchnorm_relu(
    x: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
) -> np.ndarray:
    """Inference-mode batch normalization followed by ReLU."""
    c = x.shape[0]
    for name, arr in (("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)):
        if np.asarray(arr).shape != (c,):
            raise ValueError(f"{name} must have length {c}")
    mean = np.asarray(mean, dtype=np.float32)[:, None, None]
    var = np.asarray(var, dtype=np.float32)[:, None, None]
    gamma = np.asarray(gamma, dtype=np.float32)[:, None, None]
    beta = np.asarray(beta, dtype=np.float32)[:, None, None]
    y = gamma * (x - mean) / np.sqrt(var + BN_EPS) + beta
    return np.maximum(y, 0.0).astype(np.float32)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0).astype(np.float32)


def bilinear_resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers and edge clamping."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be >= 1")
    c, h, w = x.shape
    if (out_h, out_w) == (h, w):
        return x.copy()
    src_y = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    src_x = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.clip(np.floor(src_y).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(src_x).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(src_y - y0, 0.0, 1.0).astype(np.float32)[None, :, None]
    wx = np.clip(src_x - x0, 0.0, 1.0).astype(np.float32)[None, None, :]
    top = x[:, y0][:, :, x0] * (1 - wx) + x[:, y0][:, :, x1] * wx
    bot = x[:, y1][:, :, x0] * (1 - wx) + x[:, y1][:, :, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


def concat_channels(xs: list[np.ndarray]) -> np.ndarray:
    """Stack tensors along the channel axis, in argument order."""
    if not xs:
        raise ValueError("need at least one tensor")
    hw = xs[0].shape[1:]
    for t in xs:
        if t.shape[1:] != hw:
            raise ValueError("spatial dims differ across inputs")
    return np.concatenate(xs, axis=0)
