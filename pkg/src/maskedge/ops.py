"""Operator set for YOLO-Fastest-shaped networks.

Each hot operator has two implementations selected by ``kernel_path``:

* ``"reference"`` — plain sequential loops over kernel taps, accumulating
  in float64 in a fixed (channel, ky, kx) order. Slow, obvious, and the
  order other runtimes (e.g. the browser port) reproduce bit-for-bit.
* ``"optimized"`` — im2col + GEMM. Accumulates in float64 as well, so the
  two paths only differ by summation order (well inside 1e-6 relative).

Both cast the result to float32 at the end; ops are pure and
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ShapeError
from .tensor import Tensor

KERNEL_PATHS = ("reference", "optimized")


@dataclass(frozen=True)
class ConvParams:
    out_channels: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    groups: int = 1
    has_bias: bool = True

    def __post_init__(self):
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.padding
        if kh < 1 or kw < 1 or sh < 1 or sw < 1:
            raise ShapeError(f"kernel and stride must be >= 1, got {self.kernel}/{self.stride}")
        if ph < 0 or pw < 0:
            raise ShapeError(f"padding must be >= 0, got {self.padding}")
        if self.out_channels < 1 or self.groups < 1:
            raise ShapeError("out_channels and groups must be >= 1")
        if self.out_channels % self.groups != 0:
            raise ShapeError(
                f"groups={self.groups} does not divide out_channels={self.out_channels}"
            )


@dataclass(frozen=True)
class Activation:
    kind: str = "none"  # none | relu | relu6 | leaky_relu
    slope: float = 0.1

    def __post_init__(self):
        if self.kind not in ("none", "relu", "relu6", "leaky_relu"):
            raise ShapeError(f"unknown activation kind {self.kind!r}")
        if self.kind == "leaky_relu" and not (0.0 < self.slope < 1.0):
            raise ShapeError(f"leaky_relu slope must be in (0, 1), got {self.slope}")
        # slope is stored as float32 on disk; normalize now so a graph
        # round-trips to an equal value
        object.__setattr__(self, "slope", float(np.float32(self.slope)))


def conv_output_hw(h: int, w: int, params: ConvParams) -> tuple[int, int]:
    kh, kw = params.kernel
    sh, sw = params.stride
    ph, pw = params.padding
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"conv output would be empty: input {h}x{w}, kernel {kh}x{kw}, "
            f"stride {sh}x{sw}, padding {ph}x{pw}"
        )
    return oh, ow


def _check_conv_args(x: Tensor, weights: Tensor, bias, params: ConvParams):
    n, c, h, w = x.data.shape
    oc, icg, kh, kw = weights.data.shape
    if c % params.groups != 0:
        raise ShapeError(f"groups={params.groups} does not divide input channels {c}")
    if (kh, kw) != tuple(params.kernel):
        raise ShapeError(
            f"weight kernel {kh}x{kw} does not match params kernel {params.kernel}"
        )
    if oc != params.out_channels:
        raise ShapeError(
            f"weight out_channels {oc} does not match params out_channels {params.out_channels}"
        )
    if icg != c // params.groups:
        raise ShapeError(
            f"weight in_channels/groups {icg} does not match input {c} with groups {params.groups}"
        )
    if params.has_bias:
        if bias is None:
            raise ShapeError("params.has_bias is set but no bias vector given")
        if np.asarray(bias).shape != (oc,):
            raise ShapeError(f"bias length {np.asarray(bias).shape} != out_channels {oc}")
    elif bias is not None:
        raise ShapeError("bias given but params.has_bias is false")


def _pad_input(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _conv2d_reference(x, weights, bias, params):
    n, c, h, w = x.shape
    kh, kw = params.kernel
    sh, sw = params.stride
    oh, ow = conv_output_hw(h, w, params)
    g = params.groups
    icg = c // g
    ocg = params.out_channels // g
    xpad = _pad_input(x, *params.padding).astype(np.float64)
    wts = weights.astype(np.float64)
    out = np.empty((n, params.out_channels, oh, ow), dtype=np.float64)
    for gi in range(g):
        for oj in range(ocg):
            oc = gi * ocg + oj
            acc = np.full((n, oh, ow), float(bias[oc]) if bias is not None else 0.0)
            for cj in range(icg):
                ci = gi * icg + cj
                for ky in range(kh):
                    for kx in range(kw):
                        patch = xpad[:, ci, ky : ky + oh * sh : sh, kx : kx + ow * sw : sw]
                        acc = acc + patch * wts[oc, cj, ky, kx]
            out[:, oc] = acc
    return out.astype(np.float32)


def _conv2d_optimized(x, weights, bias, params):
    n, c, h, w = x.shape
    kh, kw = params.kernel
    sh, sw = params.stride
    oh, ow = conv_output_hw(h, w, params)
    g = params.groups
    icg = c // g
    ocg = params.out_channels // g
    xpad = _pad_input(x, *params.padding)
    # im2col: (n, g, icg*kh*kw, oh*ow) built from strided views
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=np.float64)
    for ky in range(kh):
        for kx in range(kw):
            cols[:, :, ky, kx] = xpad[:, :, ky : ky + oh * sh : sh, kx : kx + ow * sw : sw]
    cols = cols.reshape(n, g, icg * kh * kw, oh * ow)
    wmat = weights.astype(np.float64).reshape(g, ocg, icg * kh * kw)
    # (g, ocg, K) x (n, g, K, P) -> (n, g, ocg, P)
    out = np.einsum("gok,ngkp->ngop", wmat, cols, optimize=True)
    out = out.reshape(n, params.out_channels, oh, ow)
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[None, :, None, None]
    return out.astype(np.float32)


def conv2d(
    x: Tensor,
    weights: Tensor,
    bias: Optional[np.ndarray],
    params: ConvParams,
    kernel_path: str = "optimized",
) -> Tensor:
    """2-D cross-correlation with optional per-output-channel bias.

    Output spatial size is floor((H + 2p - k)/s) + 1. groups == in ==
    out channels gives depthwise behaviour.
    """
    _check_conv_args(x, weights, bias, params)
    b = np.asarray(bias, dtype=np.float32) if bias is not None else None
    if kernel_path == "reference":
        out = _conv2d_reference(x.data, weights.data, b, params)
    elif kernel_path == "optimized":
        out = _conv2d_optimized(x.data, weights.data, b, params)
    else:
        raise ValueError(f"unknown kernel_path {kernel_path!r}")
    return Tensor(out)


def activate(x: Tensor, act: Activation) -> Tensor:
    if act.kind == "none":
        return x
    d = x.data
    if act.kind == "relu":
        out = np.maximum(d, np.float32(0))
    elif act.kind == "relu6":
        out = np.minimum(np.maximum(d, np.float32(0)), np.float32(6))
    else:  # leaky_relu
        out = np.where(d > 0, d, d * np.float32(act.slope))
    return Tensor(out.astype(np.float32))


def max_pool(x: Tensor, kernel: tuple[int, int], stride: tuple[int, int]) -> Tensor:
    n, c, h, w = x.data.shape
    kh, kw = kernel
    sh, sw = stride
    if kh < 1 or kw < 1 or sh < 1 or sw < 1:
        raise ShapeError(f"pool kernel and stride must be >= 1, got {kernel}/{stride}")
    if kh > h or kw > w:
        raise ShapeError(f"pool kernel {kh}x{kw} larger than input {h}x{w}")
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    out = np.full((n, c, oh, ow), -np.inf, dtype=np.float32)
    for ky in range(kh):
        for kx in range(kw):
            np.maximum(
                out,
                x.data[:, :, ky : ky + oh * sh : sh, kx : kx + ow * sw : sw],
                out=out,
            )
    return Tensor(out)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    if factor < 1:
        raise ShapeError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)
    return Tensor(out)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    na, ca, ha, wa = a.data.shape
    nb, cb, hb, wb = b.data.shape
    if (na, ha, wa) != (nb, hb, wb):
        raise ShapeError(
            f"concat inputs disagree outside the channel axis: {a.data.shape} vs {b.data.shape}"
        )
    return Tensor(np.concatenate([a.data, b.data], axis=1))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add inputs must match exactly: {a.data.shape} vs {b.data.shape}")
    return Tensor(a.data + b.data)
