"""Three-layer denoising CNNs in the real and complex domain.

Layer wiring for both domains::

    conv -> act,  conv -> BN -> act,  conv

The complex model maps one complex channel to one complex channel; the real
model sees the same map as two stacked real channels (re, im).
"""

from __future__ import annotations

import json
import re
import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import ctensor as ct
from .ctensor import functional as F
from .errors import ConfigError, NumericError, ShapeError, TrainingError
from .radar import RDMap

__all__ = [
    "ModelSpec",
    "Model",
    "ComplexityReport",
    "TrainResult",
    "parse_spec",
    "build_model",
    "count_params",
    "count_flops",
    "complexity",
    "train",
    "denoise",
    "denoise_batch",
    "stack_pairs",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class ModelSpec:
    domain: str
    channels: tuple
    kernel: int = 3

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.domain not in ("real", "complex"):
            raise ConfigError(f"unknown domain {self.domain!r}")
        if len(self.channels) != 3 or min(self.channels) < 1:
            raise ConfigError(f"need three positive channel counts, got {self.channels}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError("kernel size must be odd")
        out = 1 if self.domain == "complex" else 2
        if self.channels[2] != out:
            raise ConfigError(f"{self.domain} models end in {out} output channel(s)")

    @property
    def is_complex(self):
        return self.domain == "complex"

    def __str__(self):
        return ("C-" if self.is_complex else "R-") + "-".join(map(str, self.channels))

    def to_dict(self):
        return {"domain": self.domain, "channels": list(self.channels), "kernel": self.kernel}


_SPEC_RE = re.compile(r"^\s*([CRcr]|ℂ|ℝ)[\s\-_]*(\d+)-(\d+)-(\d+)\s*$")


def parse_spec(text, kernel=3) -> ModelSpec:
    """Parse names like ``"C-8-4-1"``, ``"R 16-8-2"`` or ``"ℂ-32-16-1"``."""
    if isinstance(text, ModelSpec):
        return text
    if isinstance(text, dict):
        return ModelSpec(text["domain"], tuple(text["channels"]), text.get("kernel", 3))
    m = _SPEC_RE.match(str(text))
    if not m:
        raise ConfigError(f"cannot parse model spec {text!r}")
    domain = "complex" if m.group(1) in ("C", "c", "ℂ") else "real"
    return ModelSpec(domain, tuple(int(g) for g in m.groups()[1:]), kernel)


@dataclass
class ComplexityReport:
    param_count: int
    mflop_per_rdmap: float


def count_params(spec: ModelSpec) -> int:
    """Trainable real scalars: kernels, biases and batch-norm affine terms."""
    k2 = spec.kernel ** 2
    c1, c2, c3 = spec.channels
    if spec.is_complex:
        layers = [(1, c1), (c1, c2), (c2, c3)]
        return sum(2 * k2 * ci * co + 2 * co for ci, co in layers) + 4 * c2
    layers = [(2, c1), (c1, c2), (c2, c3)]
    return sum(k2 * ci * co + co for ci, co in layers) + 2 * c2


def count_flops(spec: ModelSpec, h=96, w=96) -> float:
    """MFLOP for one forward pass on an ``h x w`` map.

    A real conv costs ``2 k^2 C_in`` per output value plus one bias add.  A
    complex conv is four real convs, two adds to combine them and two bias adds
    per output.  BN costs 4 FLOP per real and 12 per complex element; the
    activation 1 FLOP per real component.
    """
    k2 = spec.kernel ** 2
    px = h * w
    c1, c2, c3 = spec.channels
    if spec.is_complex:
        layers = [(1, c1), (c1, c2), (c2, c3)]
        conv = sum(4 * px * co * 2 * k2 * ci + 4 * px * co for ci, co in layers)
        bn = 12 * px * c2
        act = 2 * px * (c1 + c2)
    else:
        layers = [(2, c1), (c1, c2), (c2, c3)]
        conv = sum(px * co * 2 * k2 * ci + px * co for ci, co in layers)
        bn = 4 * px * c2
        act = px * (c1 + c2)
    return (conv + bn + act) / 1e6


def complexity(spec, h=96, w=96):
    spec = parse_spec(spec)
    return ComplexityReport(count_params(spec), count_flops(spec, h, w))


class Model:
    """The three-layer network for one :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec, init_seed=0, dtype=np.float64, zero_last=False,
                 bn_eps=1e-5, bn_momentum=0.1):
        self.spec = spec
        self.init_seed = init_seed
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(init_seed)
        c1, c2, c3 = spec.channels
        k = spec.kernel
        if spec.is_complex:
            self.conv1 = ct.ComplexConv2d(1, c1, k, rng, dtype)
            self.conv2 = ct.ComplexConv2d(c1, c2, k, rng, dtype)
            self.bn = ct.ComplexBatchNorm2d(c2, bn_eps, bn_momentum, dtype)
            self.conv3 = ct.ComplexConv2d(c2, c3, k, rng, dtype)
        else:
            self.conv1 = ct.Conv2d(2, c1, k, rng, dtype)
            self.conv2 = ct.Conv2d(c1, c2, k, rng, dtype)
            self.bn = ct.BatchNorm2d(c2, bn_eps, bn_momentum, dtype)
            self.conv3 = ct.Conv2d(c2, c3, k, rng, dtype)
        if zero_last:
            for _, p in self.conv3.named_parameters():
                p.re[...] = 0
                if p.im is not None:
                    p.im[...] = 0
        self.training = True

    def _modules(self):
        return [("layer1.conv", self.conv1), ("layer2.conv", self.conv2),
                ("layer2.bn", self.bn), ("layer3.conv", self.conv3)]

    def train(self, mode=True):
        self.training = mode
        for _, m in self._modules():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def named_parameters(self):
        return [(f"{prefix}.{name}", p)
                for prefix, mod in self._modules() for name, p in mod.named_parameters()]

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def registry(self):
        """Flat ordered mapping of real arrays; complex parameters split into .re/.im."""
        reg = OrderedDict()
        for name, p in self.named_parameters():
            if p.is_complex:
                reg[name + ".re"] = p.re
                reg[name + ".im"] = p.im
            else:
                reg[name] = p.re
        return reg

    def grad_registry(self):
        reg = OrderedDict()
        for name, p in self.named_parameters():
            if p.is_complex:
                reg[name + ".re"] = p.grad_re
                reg[name + ".im"] = p.grad_im
            else:
                reg[name] = p.grad_re
        return reg

    def buffers(self):
        return OrderedDict((f"{prefix}.{name}", b)
                           for prefix, mod in self._modules() for name, b in mod.named_buffers())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def num_params(self):
        return sum(a.size for a in self.registry().values())

    def __call__(self, x: ct.CTensor) -> ct.CTensor:
        if not x.is_complex or x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"model input must be complex (L, 1, H, W), got {x}")
        if not self.spec.is_complex:
            x = F.complex_to_channels(x)
        h = F.crelu(self.conv1(x))
        h = F.crelu(self.bn(self.conv2(h)))
        out = self.conv3(h)
        if not self.spec.is_complex:
            out = F.channels_to_complex(out)
        return out


def build_model(spec, init_seed=0, **kwargs) -> Model:
    return Model(parse_spec(spec), init_seed, **kwargs)


def stack_pairs(pairs, dtype=np.float64):
    """Stack standardised pairs into ``(x_re, x_im, y_re, y_im)`` arrays of shape (n, 1, H, W)."""
    if not pairs:
        raise ConfigError("dataset is empty")
    x = np.stack([p.interfered.data for p in pairs])[:, None]
    y = np.stack([p.clean.data for p in pairs])[:, None]
    return (x.real.astype(dtype), x.imag.astype(dtype),
            y.real.astype(dtype), y.imag.astype(dtype))


@dataclass
class TrainResult:
    model: Model
    losses: list = field(default_factory=list)
    adam: ct.AdamState = None

    @property
    def epoch(self):
        return len(self.losses)


def train(model: Model, dataset, epochs=20, lr=5e-3, batch=8, seed=0, adam=None,
          losses=None, on_epoch=None) -> TrainResult:
    """Mini-batch Adam on the split real/imaginary MSE.

    The loss curve holds the sample-weighted mean mini-batch loss of each epoch.
    Passing ``adam`` and ``losses`` from a checkpoint resumes training where it
    stopped; epoch ``e`` always uses the permutation drawn from ``(seed, e)``.
    """
    x_re, x_im, y_re, y_im = stack_pairs(dataset, model.dtype)
    n = x_re.shape[0]
    adam = ct.AdamState(lr=lr) if adam is None else adam
    losses = [] if losses is None else list(losses)
    params = model.registry()
    model.train()
    for epoch in range(len(losses), len(losses) + epochs):
        order = np.random.default_rng([seed, epoch]).permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            xb = ct.CTensor(x_re[idx], x_im[idx])
            yb = ct.CTensor(y_re[idx], y_im[idx])
            model.zero_grad()
            try:
                loss = F.split_mse_loss(model(xb), yb)
                loss.backward()
                ct.adam_step(params, model.grad_registry(), adam)
            except NumericError as exc:
                raise TrainingError(f"training diverged in epoch {epoch + 1}: {exc}",
                                    epoch=epoch + 1) from exc
            total += loss.item() * len(idx)
        mean = total / n
        if not np.isfinite(mean):
            raise TrainingError(f"non-finite loss in epoch {epoch + 1}", epoch=epoch + 1)
        losses.append(mean)
        if on_epoch is not None:
            on_epoch(epoch + 1, mean)
    model.eval()
    return TrainResult(model, losses, adam)


def denoise_batch(model: Model, maps, batch=16):
    """Denoise standardised RD maps; outputs keep each input's statistics."""
    maps = list(maps)
    if not maps:
        return []
    shape = maps[0].shape
    for rd in maps:
        if rd.shape != shape:
            raise ShapeError("all maps in a batch must share their shape")
    was_training = model.training
    model.eval()
    out = []
    with ct.no_grad():
        for start in range(0, len(maps), batch):
            chunk = maps[start:start + batch]
            z = np.stack([rd.data for rd in chunk])[:, None]
            pred = model(ct.CTensor(z.real.astype(model.dtype), z.imag.astype(model.dtype)))
            values = pred.complex()[:, 0]
            out.extend(rd.with_data(v) for rd, v in zip(chunk, values))
    model.train(was_training)
    return out


def denoise(model: Model, rd: RDMap) -> RDMap:
    return denoise_batch(model, [rd])[0]


# ---------------------------------------------------------------------------
# checkpoints: magic, u64 header length, JSON header, float64 LE blob

_MAGIC = b"CVCK1\n"


def save_checkpoint(path, model: Model, seed=0, losses=(), adam: ct.AdamState = None, extra=None):
    arrays = OrderedDict()
    for name, a in model.registry().items():
        arrays["param/" + name] = a
    for name, a in model.buffers().items():
        arrays["buffer/" + name] = a
    adam_meta = None
    if adam is not None:
        adam_meta = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                     "eps_adam": adam.eps_adam, "t": adam.t}
        for name in model.registry():
            if name in adam.m:
                arrays["adam_m/" + name] = adam.m[name]
                arrays["adam_v/" + name] = adam.v[name]
    header = {
        "spec": model.spec.to_dict(),
        "init_seed": model.init_seed,
        "seed": seed,
        "epoch": len(losses),
        "losses": [float(x) for x in losses],
        "dtype": model.dtype.name,
        "bn": {"eps": model.bn.eps, "momentum": model.bn.momentum},
        "adam": adam_meta,
        "arrays": [{"name": k, "shape": list(np.shape(a))} for k, a in arrays.items()],
        "extra": extra or {},
    }
    hbytes = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return ``(model, header, adam_state_or_None)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(_MAGIC):
        raise ConfigError(f"{path}: not a checkpoint file")
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    header = json.loads(raw[off:off + hlen].decode())
    off += hlen
    values = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        values[entry["name"]] = np.frombuffer(raw, "<f8", count, off).reshape(entry["shape"])
        off += 8 * count
    spec = parse_spec(header["spec"])
    model = Model(spec, header["init_seed"], dtype=header["dtype"],
                  bn_eps=header["bn"]["eps"], bn_momentum=header["bn"]["momentum"])
    for name, a in model.registry().items():
        a[...] = values["param/" + name]
    for name, a in model.buffers().items():
        a[...] = values["buffer/" + name]
    adam = None
    if header.get("adam"):
        meta = header["adam"]
        adam = ct.AdamState(lr=meta["lr"], beta1=meta["beta1"], beta2=meta["beta2"],
                            eps_adam=meta["eps_adam"], t=meta["t"])
        for name in model.registry():
            if "adam_m/" + name in values:
                adam.m[name] = values["adam_m/" + name].astype(model.dtype)
                adam.v[name] = values["adam_v/" + name].astype(model.dtype)
    model.eval()
    return model, header, adam
