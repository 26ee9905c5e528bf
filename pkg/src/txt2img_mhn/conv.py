"""2-D convolution and transposed convolution for the tape engine (NCHW layout)."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DimensionError, Tensor, _make

__all__ = ["conv2d", "conv_transpose2d", "conv_output_size", "add_channel_bias"]


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(B, C, Hp, Wp) -> (B, Ho, Wo, C, kh, kw) patch array (a copy)."""
    v = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    v = v[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    return np.ascontiguousarray(v.transpose(0, 2, 3, 1, 4, 5))


def _scatter_windows(cols: np.ndarray, out_shape, stride: int) -> np.ndarray:
    """Adjoint of :func:`_windows`: sum (B, Ho, Wo, C, kh, kw) patches into (B, C, Hp, Wp)."""
    b, ho, wo, c, kh, kw = cols.shape
    out = np.zeros(out_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    return out


def conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (B, C, H, W) with ``w`` (O, C, kh, kw)."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    b, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(wd, kw, stride, pad)
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than padded input {h}x{wd}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _windows(xp, kh, kw, stride, ho, wo).reshape(b * ho * wo, c * kh * kw)
    wmat = w.data.reshape(o, c * kh * kw)
    out = (cols @ wmat.T).reshape(b, ho, wo, o).transpose(0, 3, 1, 2)

    def _bw(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(b * ho * wo, o)
        gw = (g2.T @ cols).reshape(w.shape)
        gcols = (g2 @ wmat).reshape(b, ho, wo, c, kh, kw)
        gxp = _scatter_windows(gcols, xp.shape, stride)
        gx = gxp[:, :, pad : pad + h, pad : pad + wd] if pad else gxp
        return np.ascontiguousarray(gx), gw

    return _make(np.ascontiguousarray(out), (x, w), _bw, "conv2d")


def conv_transpose2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Transpose of :func:`conv2d`; ``w`` has shape (C_in, C_out, kh, kw).

    The output side is ``(H - 1) * stride - 2 * pad + kh``.
    """
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"conv_transpose2d: input {x.shape} incompatible with kernel {w.shape}")
    b, c, h, wd = x.shape
    _, o, kh, kw = w.shape
    hf = (h - 1) * stride + kh
    wf = (wd - 1) * stride + kw
    ho, wo = hf - 2 * pad, wf - 2 * pad
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv_transpose2d: padding {pad} removes the whole output")
    xr = x.data.transpose(0, 2, 3, 1).reshape(b * h * wd, c)
    wmat = w.data.reshape(c, o * kh * kw)
    cols = (xr @ wmat).reshape(b, h, wd, o, kh, kw)
    full = _scatter_windows(cols, (b, o, hf, wf), stride)
    out = full[:, :, pad : pad + ho, pad : pad + wo]

    def _bw(g):
        gfull = np.zeros((b, o, hf, wf), dtype=g.dtype)
        gfull[:, :, pad : pad + ho, pad : pad + wo] = g
        gcols = _windows(gfull, kh, kw, stride, h, wd).reshape(b * h * wd, o * kh * kw)
        gx = (gcols @ wmat.T).reshape(b, h, wd, c).transpose(0, 3, 1, 2)
        gw = (xr.T @ gcols).reshape(w.shape)
        return np.ascontiguousarray(gx), gw

    return _make(np.ascontiguousarray(out), (x, w), _bw, "conv_transpose2d")


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias (C,) to an NCHW tensor."""
    if bias.shape != (x.shape[1],):
        raise DimensionError(f"bias {bias.shape} does not match {x.shape[1]} channels")
    return _make(
        x.data + bias.data[None, :, None, None],
        (x, bias),
        lambda g: (g, g.sum(axis=(0, 2, 3))),
        "channel_bias",
    )
