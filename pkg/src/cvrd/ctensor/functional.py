"""Forward/backward pairs for the network ops, plus tape-aware wrappers.

The ``*_forward`` / ``*_backward`` functions work on plain numpy arrays and
return/consume a ``saved`` object; the unprefixed functions take
:class:`CTensor` inputs and record themselves on the tape.

Convolutions are cross-correlations with stride 1 and 'same' zero padding,
weights laid out ``(C_out, C_in, k, k)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError, ShapeError, TapeError
from .tensor import CTensor, record

# ---------------------------------------------------------------------------
# real convolution


def _check_conv(x, w):
    if x.ndim != 4:
        raise ShapeError(f"conv input must be (L, C, H, W), got {x.shape}")
    if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
        raise ShapeError(f"kernel must be (C_out, C_in, k, k) with odd k, got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {w.shape[1]}")


def _conv_same(x, w):
    """Stride-1 'same' cross-correlation, shifted-GEMM formulation."""
    k = w.shape[-1]
    p = k // 2
    n, _, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.zeros((w.shape[0], n, h, wd), dtype=np.result_type(x, w))
    for di in range(k):
        for dj in range(k):
            patch = xp[:, :, di:di + h, dj:dj + wd]
            out += np.tensordot(w[:, :, di, dj], patch, axes=([1], [1]))
    return out.transpose(1, 0, 2, 3)


def _conv_same_backward(g, x, w, need_x=True):
    """Gradients of ``_conv_same`` w.r.t. input and kernel."""
    k = w.shape[-1]
    p = k // 2
    n, _, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    gw = np.empty_like(w)
    gxp = np.zeros((x.shape[1], n, h + 2 * p, wd + 2 * p), dtype=g.dtype) if need_x else None
    for di in range(k):
        for dj in range(k):
            patch = xp[:, :, di:di + h, dj:dj + wd]
            gw[:, :, di, dj] = np.tensordot(g, patch, axes=([0, 2, 3], [0, 2, 3]))
            if need_x:
                gxp[:, :, di:di + h, dj:dj + wd] += np.tensordot(w[:, :, di, dj], g, axes=([0], [1]))
    gx = None
    if need_x:
        gx = gxp[:, :, p:p + h, p:p + wd].transpose(1, 0, 2, 3)
    return gx, gw


@dataclass
class ConvSaved:
    x: np.ndarray
    w: np.ndarray


def conv2d_forward(x, w, b):
    _check_conv(x, w)
    out = _conv_same(x, w)
    if b is not None:
        out = out + b[None, :, None, None]
    return out, ConvSaved(x, w)


def conv2d_backward(g, saved):
    """Returns ``(grad_x, grad_w, grad_b)``."""
    if saved is None:
        raise TapeError("conv2d_backward: missing saved state")
    gx, gw = _conv_same_backward(g, saved.x, saved.w)
    return gx, gw, g.sum(axis=(0, 2, 3))


def conv2d(x: CTensor, w: CTensor, b: CTensor = None) -> CTensor:
    if x.is_complex or w.is_complex:
        raise ShapeError("conv2d is the real-valued convolution; use cconv2d")
    out, saved = conv2d_forward(x.re, w.re, None if b is None else b.re)

    def backward(g_re, g_im, s):
        gx, gw, gb = conv2d_backward(g_re, s)
        return [(gx, None), (gw, None), (gb, None)]

    parents = [x, w] + ([] if b is None else [b])
    return record(CTensor(out), "conv2d", parents, backward, saved)


# ---------------------------------------------------------------------------
# complex convolution


@dataclass
class CConvSaved:
    x_re: np.ndarray
    x_im: np.ndarray
    a: np.ndarray
    b: np.ndarray


def _block_kernel(a, b):
    # [[A, -B], [B, A]] acting on stacked [x; y]
    top = np.concatenate([a, -b], axis=1)
    bottom = np.concatenate([b, a], axis=1)
    return np.concatenate([top, bottom], axis=0)


def cconv2d_forward(x_re, x_im, a, b, bias_re=None, bias_im=None):
    """Complex convolution ``(A + iB) * (x + iy)``.

    Real part ``A*x - B*y``, imaginary part ``B*x + A*y``, evaluated as one real
    convolution with the block kernel ``[[A, -B], [B, A]]`` on ``[x; y]``.
    """
    if a.shape != b.shape:
        raise ShapeError(f"kernel parts differ in shape: {a.shape} vs {b.shape}")
    _check_conv(x_re, a)
    c_out = a.shape[0]
    out = _conv_same(np.concatenate([x_re, x_im], axis=1), _block_kernel(a, b))
    out_re, out_im = out[:, :c_out], out[:, c_out:]
    if bias_re is not None:
        out_re = out_re + bias_re[None, :, None, None]
        out_im = out_im + bias_im[None, :, None, None]
    return out_re, out_im, CConvSaved(x_re, x_im, a, b)


def cconv2d_backward(g_re, g_im, saved):
    """Returns ``(grad_x_re, grad_x_im, grad_A, grad_B, grad_bias_re, grad_bias_im)``.

    Complex parameters are treated as independent real pairs.
    """
    if saved is None:
        raise TapeError("cconv2d_backward: missing saved state")
    c_out, c_in = saved.a.shape[:2]
    x = np.concatenate([saved.x_re, saved.x_im], axis=1)
    g = np.concatenate([g_re, g_im], axis=1)
    gx, gw = _conv_same_backward(g, x, _block_kernel(saved.a, saved.b))
    ga = gw[:c_out, :c_in] + gw[c_out:, c_in:]
    gb = gw[c_out:, :c_in] - gw[:c_out, c_in:]
    return (gx[:, :c_in], gx[:, c_in:], ga, gb,
            g_re.sum(axis=(0, 2, 3)), g_im.sum(axis=(0, 2, 3)))


def cconv2d(x: CTensor, a: CTensor, b: CTensor, bias: CTensor = None) -> CTensor:
    if not x.is_complex:
        raise ShapeError("cconv2d needs a complex input")
    out_re, out_im, saved = cconv2d_forward(
        x.re, x.im, a.re, b.re,
        None if bias is None else bias.re, None if bias is None else bias.im)

    def backward(g_re, g_im, s):
        gxr, gxi, ga, gb, gbr, gbi = cconv2d_backward(g_re, g_im, s)
        grads = [(gxr, gxi), (ga, None), (gb, None)]
        if bias is not None:
            grads.append((gbr, gbi))
        return grads

    parents = [x, a, b] + ([] if bias is None else [bias])
    return record(CTensor(out_re, out_im), "cconv2d", parents, backward, saved)


# ---------------------------------------------------------------------------
# activations


def crelu(x: CTensor) -> CTensor:
    """Component-wise ReLU: ``ReLU(Re z) + i ReLU(Im z)``; plain ReLU on real tensors."""
    mask_re = x.re > 0
    out_re = np.where(mask_re, x.re, 0.0).astype(x.dtype)
    mask_im = out_im = None
    if x.is_complex:
        mask_im = x.im > 0
        out_im = np.where(mask_im, x.im, 0.0).astype(x.dtype)

    def backward(g_re, g_im, s):
        m_re, m_im = s
        return [(g_re * m_re, None if m_im is None else g_im * m_im)]

    return record(CTensor(out_re, out_im), "crelu", [x], backward, (mask_re, mask_im))


relu = crelu


# ---------------------------------------------------------------------------
# batch normalisation


def inv_sqrt_2x2(v_rr, v_ii, v_ri):
    """Symmetric inverse square root of ``[[v_rr, v_ri], [v_ri, v_ii]]`` (closed form).

    Uses ``sqrt(V) = (V + s I) / t`` with ``s = sqrt(det V)`` and
    ``t = sqrt(tr V + 2 s)``.  Inputs are arrays of per-channel entries.
    """
    det = v_rr * v_ii - v_ri ** 2
    if np.any(det <= 0) or not np.all(np.isfinite(det)):
        raise NumericError("covariance not positive definite; increase epsilon")
    s = np.sqrt(det)
    t = np.sqrt(v_rr + v_ii + 2 * s)
    inv = 1.0 / (s * t)
    return (v_ii + s) * inv, (v_rr + s) * inv, -v_ri * inv


@dataclass
class CBNSaved:
    centered_re: np.ndarray
    centered_im: np.ndarray
    white_re: np.ndarray
    white_im: np.ndarray
    w_rr: np.ndarray
    w_ii: np.ndarray
    w_ri: np.ndarray
    cov: tuple
    gamma_rr: np.ndarray
    gamma_ii: np.ndarray
    training: bool


def _bc(v):
    return v[None, :, None, None]


def cbatchnorm_forward(x_re, x_im, gamma_rr, gamma_ii, beta_re, beta_im,
                       running_mean, running_cov, eps, momentum, training):
    """Complex BN by 2x2 whitening followed by a diagonal affine map.

    ``running_mean`` is a complex array ``(C,)``; ``running_cov`` an array
    ``(3, C)`` holding ``V_rr, V_ii, V_ri``.  Both are updated in place in
    training mode.
    """
    if x_re.ndim != 4:
        raise ShapeError(f"batch norm input must be (L, C, H, W), got {x_re.shape}")
    axes = (0, 2, 3)
    if training:
        count = x_re.shape[0] * x_re.shape[2] * x_re.shape[3]
        if count < 2:
            raise ShapeError("training-mode batch norm needs at least 2 values per channel")
        mu_re = x_re.mean(axis=axes)
        mu_im = x_im.mean(axis=axes)
        c_re = x_re - _bc(mu_re)
        c_im = x_im - _bc(mu_im)
        v_rr = (c_re ** 2).mean(axis=axes)
        v_ii = (c_im ** 2).mean(axis=axes)
        v_ri = (c_re * c_im).mean(axis=axes)
        if not all(np.all(np.isfinite(a)) for a in (mu_re, mu_im, v_rr, v_ii, v_ri)):
            raise NumericError("non-finite batch statistics")
        running_mean *= 1 - momentum
        running_mean += momentum * (mu_re + 1j * mu_im)
        running_cov *= 1 - momentum
        running_cov += momentum * np.stack([v_rr, v_ii, v_ri])
    else:
        c_re = x_re - _bc(running_mean.real.astype(x_re.dtype))
        c_im = x_im - _bc(running_mean.imag.astype(x_re.dtype))
        v_rr, v_ii, v_ri = running_cov
    cov = (v_rr + eps, v_ii + eps, v_ri)
    w_rr, w_ii, w_ri = inv_sqrt_2x2(*cov)
    h_re = _bc(w_rr) * c_re + _bc(w_ri) * c_im
    h_im = _bc(w_ri) * c_re + _bc(w_ii) * c_im
    out_re = _bc(gamma_rr) * h_re + _bc(beta_re)
    out_im = _bc(gamma_ii) * h_im + _bc(beta_im)
    saved = CBNSaved(c_re, c_im, h_re, h_im, w_rr, w_ii, w_ri, cov,
                     gamma_rr, gamma_ii, training)
    return out_re.astype(x_re.dtype), out_im.astype(x_re.dtype), saved


def _sylvester_sym_2x2(v, m):
    """Solve ``R X + X R = M`` with ``R = sqrt(V)``; ``v``, ``m`` are ``(C, 2, 2)``."""
    lam, q = np.linalg.eigh(v)
    r = np.sqrt(lam)
    mt = np.einsum("cji,cjk,ckl->cil", q, m, q)
    xt = mt / (r[:, :, None] + r[:, None, :])
    return np.einsum("cij,cjk,clk->cil", q, xt, q)


def cbatchnorm_backward(g_re, g_im, saved):
    """Returns ``(grad_x_re, grad_x_im, grad_gamma_rr, grad_gamma_ii, grad_beta_re, grad_beta_im)``."""
    if saved is None:
        raise TapeError("cbatchnorm_backward: missing saved state")
    s = saved
    axes = (0, 2, 3)
    g_beta_re = g_re.sum(axis=axes)
    g_beta_im = g_im.sum(axis=axes)
    g_gamma_rr = (g_re * s.white_re).sum(axis=axes)
    g_gamma_ii = (g_im * s.white_im).sum(axis=axes)
    q_re = g_re * _bc(s.gamma_rr)
    q_im = g_im * _bc(s.gamma_ii)
    # direct path through W (c)
    d_re = _bc(s.w_rr) * q_re + _bc(s.w_ri) * q_im
    d_im = _bc(s.w_ri) * q_re + _bc(s.w_ii) * q_im
    if not s.training:
        return d_re, d_im, g_gamma_rr, g_gamma_ii, g_beta_re, g_beta_im

    count = g_re.shape[0] * g_re.shape[2] * g_re.shape[3]
    c_re, c_im = s.centered_re, s.centered_im
    # dL/dW as a general 2x2 matrix per channel
    gw = np.empty((c_re.shape[1], 2, 2))
    gw[:, 0, 0] = (q_re * c_re).sum(axis=axes)
    gw[:, 0, 1] = (q_re * c_im).sum(axis=axes)
    gw[:, 1, 0] = (q_im * c_re).sum(axis=axes)
    gw[:, 1, 1] = (q_im * c_im).sum(axis=axes)
    w = np.empty_like(gw)
    w[:, 0, 0], w[:, 1, 1] = s.w_rr, s.w_ii
    w[:, 0, 1] = w[:, 1, 0] = s.w_ri
    v = np.empty_like(gw)
    v[:, 0, 0], v[:, 1, 1] = s.cov[0], s.cov[1]
    v[:, 0, 1] = v[:, 1, 0] = s.cov[2]
    gv = _sylvester_sym_2x2(v, -w @ gw @ w)
    gv = (gv + gv.transpose(0, 2, 1)) / count
    d_re = d_re + _bc(gv[:, 0, 0]) * c_re + _bc(gv[:, 0, 1]) * c_im
    d_im = d_im + _bc(gv[:, 1, 0]) * c_re + _bc(gv[:, 1, 1]) * c_im
    d_re = d_re - d_re.mean(axis=axes, keepdims=True)
    d_im = d_im - d_im.mean(axis=axes, keepdims=True)
    return (d_re.astype(g_re.dtype), d_im.astype(g_re.dtype),
            g_gamma_rr, g_gamma_ii, g_beta_re, g_beta_im)


@dataclass
class BNSaved:
    white: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    training: bool


def batchnorm_forward(x, gamma, beta, running_mean, running_var, eps, momentum, training):
    """Ordinary per-channel batch norm for real tensors (running stats updated in place)."""
    if x.ndim != 4:
        raise ShapeError(f"batch norm input must be (L, C, H, W), got {x.shape}")
    axes = (0, 2, 3)
    if training:
        if x.shape[0] * x.shape[2] * x.shape[3] < 2:
            raise ShapeError("training-mode batch norm needs at least 2 values per channel")
        mu = x.mean(axis=axes)
        var = ((x - _bc(mu)) ** 2).mean(axis=axes)
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(var))):
            raise NumericError("non-finite batch statistics")
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    white = (x - _bc(mu)) * _bc(inv_std)
    out = _bc(gamma) * white + _bc(beta)
    return out.astype(x.dtype), BNSaved(white, inv_std, gamma, training)


def batchnorm_backward(g, saved):
    """Returns ``(grad_x, grad_gamma, grad_beta)``."""
    if saved is None:
        raise TapeError("batchnorm_backward: missing saved state")
    axes = (0, 2, 3)
    g_beta = g.sum(axis=axes)
    g_gamma = (g * saved.white).sum(axis=axes)
    gh = g * _bc(saved.gamma)
    if not saved.training:
        return gh * _bc(saved.inv_std), g_gamma, g_beta
    gx = _bc(saved.inv_std) * (gh - gh.mean(axis=axes, keepdims=True)
                               - saved.white * (gh * saved.white).mean(axis=axes, keepdims=True))
    return gx.astype(g.dtype), g_gamma, g_beta


# ---------------------------------------------------------------------------
# layout helpers and loss


def channels_to_complex(x: CTensor) -> CTensor:
    """Real ``(L, 2, H, W)`` (re, im stacked) to complex ``(L, 1, H, W)``."""
    if x.is_complex or x.ndim != 4 or x.shape[1] != 2:
        raise ShapeError(f"expected real (L, 2, H, W), got {x}")
    out = CTensor(x.re[:, :1], x.re[:, 1:])

    def backward(g_re, g_im, s):
        return [(np.concatenate([g_re, g_im], axis=1), None)]

    return record(out, "channels_to_complex", [x], backward, True)


def complex_to_channels(x: CTensor) -> CTensor:
    """Complex ``(L, C, H, W)`` to real ``(L, 2C, H, W)`` (all re, then all im)."""
    if not x.is_complex:
        raise ShapeError("expected a complex tensor")
    c = x.shape[1]
    out = CTensor(np.concatenate([x.re, x.im], axis=1))

    def backward(g_re, g_im, s):
        return [(g_re[:, :c], g_re[:, c:])]

    return record(out, "complex_to_channels", [x], backward, True)


def split_mse_loss(pred: CTensor, target: CTensor) -> CTensor:
    """Mean over complex entries of ``((d_re)^2 + (d_im)^2) / 2``.

    Returns a scalar tensor; its gradient w.r.t. ``pred`` is ``(d_re + i d_im) / count``.
    """
    if pred.shape != target.shape or pred.is_complex != target.is_complex:
        raise ShapeError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    if not pred.is_complex:
        raise ShapeError("split_mse_loss expects complex tensors")
    d_re = pred.re - target.re
    d_im = pred.im - target.im
    count = d_re.size
    value = 0.5 * (np.sum(d_re ** 2) + np.sum(d_im ** 2)) / count
    if not np.isfinite(value):
        raise NumericError("non-finite loss")

    def backward(g_re, g_im, s):
        scale = float(np.asarray(g_re).reshape(())) / count
        return [(scale * d_re, scale * d_im), None]

    return record(CTensor(np.array(value)), "split_mse_loss", [pred, target], backward, True)
