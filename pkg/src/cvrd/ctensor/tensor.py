"""Complex tensor with a minimal reverse-mode tape."""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import NumericError, ShapeError, TapeError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled():
    return _GRAD_ENABLED


class Node:
    """One recorded op: its inputs and the function mapping output grads to input grads."""

    __slots__ = ("op", "parents", "backward_fn", "saved")

    def __init__(self, op, parents, backward_fn, saved):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn
        self.saved = saved


class CTensor:
    """Real or complex array pair carrying gradients.

    ``im is None`` marks a purely real tensor (used for real-valued networks and
    for real parameters such as the kernel parts ``A`` and ``B``).  Shapes are
    ``(C, H, W)`` or ``(L, C, H, W)`` for activations; parameters may have any
    shape.
    """

    __slots__ = ("re", "im", "grad_re", "grad_im", "requires_grad", "_node", "name")

    def __init__(self, re, im=None, requires_grad=False, dtype=None, name=None):
        re = np.asarray(re, dtype=dtype if dtype is not None else None)
        if not np.issubdtype(re.dtype, np.floating):
            re = re.astype(np.float64)
        self.re = re
        if im is not None:
            im = np.asarray(im, dtype=re.dtype)
            if im.shape != re.shape:
                raise ShapeError(f"real part {re.shape} and imaginary part {im.shape} differ")
        self.im = im
        self.grad_re = None
        self.grad_im = None
        self.requires_grad = requires_grad
        self._node = None
        self.name = name

    @classmethod
    def from_complex(cls, z, requires_grad=False, dtype=np.float64):
        z = np.asarray(z)
        return cls(z.real.astype(dtype), z.imag.astype(dtype), requires_grad=requires_grad)

    @property
    def is_complex(self):
        return self.im is not None

    @property
    def shape(self):
        return self.re.shape

    @property
    def ndim(self):
        return self.re.ndim

    @property
    def dtype(self):
        return self.re.dtype

    @property
    def size(self):
        return self.re.size * (2 if self.is_complex else 1)

    @property
    def tape_id(self):
        return None if self._node is None else id(self._node)

    def complex(self):
        if self.im is None:
            return self.re.astype(complex)
        return self.re + 1j * self.im

    def item(self):
        if self.re.size != 1:
            raise ShapeError("item() needs a single-element tensor")
        return float(self.re.reshape(()))

    def detach(self):
        return CTensor(self.re, self.im)

    def zero_grad(self):
        self.grad_re = None
        self.grad_im = None

    def __repr__(self):
        kind = "complex" if self.is_complex else "real"
        return f"CTensor({kind}, shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g_re, g_im):
        if g_re is not None:
            self.grad_re = g_re.copy() if self.grad_re is None else self.grad_re + g_re
        if self.is_complex and g_im is not None:
            self.grad_im = g_im.copy() if self.grad_im is None else self.grad_im + g_im

    def backward(self, grad_re=None, grad_im=None):
        """Propagate gradients to every leaf that requires them.

        The tape is consumed; a second call on the same graph raises
        :class:`TapeError`.
        """
        if grad_re is None:
            if self.re.size != 1:
                raise ShapeError("backward() without a seed needs a scalar output")
            grad_re = np.ones_like(self.re)
        if self.is_complex and grad_im is None:
            grad_im = np.zeros_like(self.im)

        order = _topological(self)
        grads = {id(self): (grad_re, grad_im)}
        for t in reversed(order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            node = t._node
            if node is None:
                if t.requires_grad:
                    t._accumulate(*g)
                continue
            if node.saved is None:
                raise TapeError(f"{node.op}: saved forward state missing (tape already consumed?)")
            parent_grads = node.backward_fn(g[0], g[1], node.saved)
            node.saved = None
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pre, pim = pg
                if pre is not None and not np.all(np.isfinite(pre)):
                    raise NumericError(f"non-finite gradient from {node.op}")
                if pim is not None and not np.all(np.isfinite(pim)):
                    raise NumericError(f"non-finite gradient from {node.op}")
                key = id(parent)
                if key in grads:
                    ore, oim = grads[key]
                    grads[key] = (_add(ore, pre), _add(oim, pim))
                else:
                    grads[key] = (pre, pim)


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t._node is not None:
            for p in t._node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
    return order


def record(out, op, parents, backward_fn, saved):
    """Attach a tape node to ``out`` if any parent needs gradients."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = Node(op, tuple(parents), backward_fn, saved)
    return out
