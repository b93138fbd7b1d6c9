"""Parameterised layers built on the functional ops."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import CTensor, record


def init_bound(k, cin_real):
    """Half-width of the uniform init: variance-preserving over real fan-in."""
    return float(np.sqrt(3.0 / (k * k * cin_real)))


class Layer:
    """Base class: parameters are CTensors, buffers plain arrays."""

    training = True

    def named_parameters(self):
        return []

    def named_buffers(self):
        return []

    def train(self, mode=True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)


class Conv2d(Layer):
    def __init__(self, cin, cout, k=3, rng=None, dtype=np.float64, bias=True):
        rng = np.random.default_rng() if rng is None else rng
        bound = init_bound(k, cin)
        self.weight = CTensor(rng.uniform(-bound, bound, (cout, cin, k, k)).astype(dtype),
                              requires_grad=True)
        self.bias = CTensor(np.zeros(cout, dtype), requires_grad=True) if bias else None

    def named_parameters(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out

    def __call__(self, x):
        return F.conv2d(x, self.weight, self.bias)


class ComplexConv2d(Layer):
    """Complex kernel ``W = A + iB`` with a complex bias."""

    def __init__(self, cin, cout, k=3, rng=None, dtype=np.float64, bias=True):
        rng = np.random.default_rng() if rng is None else rng
        bound = init_bound(k, 2 * cin)
        shape = (cout, cin, k, k)
        self.A = CTensor(rng.uniform(-bound, bound, shape).astype(dtype), requires_grad=True)
        self.B = CTensor(rng.uniform(-bound, bound, shape).astype(dtype), requires_grad=True)
        self.bias = None
        if bias:
            self.bias = CTensor(np.zeros(cout, dtype), np.zeros(cout, dtype), requires_grad=True)

    def named_parameters(self):
        out = [("A", self.A), ("B", self.B)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out

    def __call__(self, x):
        return F.cconv2d(x, self.A, self.B, self.bias)


class BatchNorm2d(Layer):
    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float64):
        self.eps = eps
        self.momentum = momentum
        self.gamma = CTensor(np.ones(channels, dtype), requires_grad=True)
        self.beta = CTensor(np.zeros(channels, dtype), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def named_parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def named_buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def __call__(self, x):
        out, saved = F.batchnorm_forward(
            x.re, self.gamma.re, self.beta.re, self.running_mean, self.running_var,
            self.eps, self.momentum, self.training)

        def backward(g_re, g_im, s):
            gx, gg, gb = F.batchnorm_backward(g_re, s)
            return [(gx, None), (gg, None), (gb, None)]

        return record(CTensor(out), "batchnorm", [x, self.gamma, self.beta], backward, saved)


class ComplexBatchNorm2d(Layer):
    """Whitening batch norm with diagonal scale ``(gamma_rr, gamma_ii)`` and complex shift.

    ``running_cov`` rows are ``V_rr, V_ii, V_ri``.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float64):
        if not eps > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < momentum < 1:
            raise ValueError("momentum must lie in (0, 1)")
        self.eps = eps
        self.momentum = momentum
        self.gamma_rr = CTensor(np.ones(channels, dtype), requires_grad=True)
        self.gamma_ii = CTensor(np.ones(channels, dtype), requires_grad=True)
        self.beta = CTensor(np.zeros(channels, dtype), np.zeros(channels, dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, complex)
        self.running_cov = np.zeros((3, channels))
        self.running_cov[:2] = 1.0

    def named_parameters(self):
        return [("gamma_rr", self.gamma_rr), ("gamma_ii", self.gamma_ii), ("beta", self.beta)]

    def named_buffers(self):
        return [("running_mean.re", self.running_mean.real),
                ("running_mean.im", self.running_mean.imag),
                ("running_cov", self.running_cov)]

    def __call__(self, x):
        out_re, out_im, saved = F.cbatchnorm_forward(
            x.re, x.im, self.gamma_rr.re, self.gamma_ii.re, self.beta.re, self.beta.im,
            self.running_mean, self.running_cov, self.eps, self.momentum, self.training)

        def backward(g_re, g_im, s):
            gxr, gxi, ggr, ggi, gbr, gbi = F.cbatchnorm_backward(g_re, g_im, s)
            return [(gxr, gxi), (ggr, None), (ggi, None), (gbr, gbi)]

        parents = [x, self.gamma_rr, self.gamma_ii, self.beta]
        return record(CTensor(out_re, out_im), "cbatchnorm", parents, backward, saved)
