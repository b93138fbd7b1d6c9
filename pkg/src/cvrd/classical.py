"""Classical interference mitigation: zeroing, IMAT and ramp filtering.

Zeroing and IMAT work on the time-domain IF frame and need a mask of
interfered samples; ramp filtering works on the range spectrum (after the
first DFT) and needs no mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .radar import IFMatrix, RDMap, doppler_spectrum, range_doppler_map, range_spectrum

__all__ = [
    "InterferenceMask",
    "ImatConfig",
    "METHODS",
    "true_interference_mask",
    "detect_interference",
    "zeroing",
    "imat",
    "ramp_filtering",
    "mitigate_pipeline",
]

METHODS = ("none", "zeroing", "imat", "rfmin")


@dataclass
class InterferenceMask:
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)

    @property
    def shape(self):
        return self.mask.shape


@dataclass(frozen=True)
class ImatConfig:
    iters: int = 10
    thresh_decay: float = 0.7


def _mask_array(mask, shape):
    m = mask.mask if isinstance(mask, InterferenceMask) else np.asarray(mask, dtype=bool)
    if m.shape != tuple(shape):
        raise ShapeError(f"mask shape {m.shape} != frame shape {tuple(shape)}")
    return m


def true_interference_mask(clean: IFMatrix, interfered: IFMatrix) -> InterferenceMask:
    if clean.data.shape != interfered.data.shape:
        raise ShapeError("clean and interfered frames differ in shape")
    return InterferenceMask(np.abs(interfered.data - clean.data) > 0)


def detect_interference(clean: IFMatrix, interfered: IFMatrix, accuracy=0.9, seed=0) -> InterferenceMask:
    """Simulated imperfect detector.

    Starts from the ground-truth mask and flips ``round((1 - accuracy) * size)``
    entries chosen uniformly without replacement, so the labelling accuracy is
    ``accuracy`` up to rounding.
    """
    if not 0.5 < accuracy <= 1.0:
        raise ConfigError("detector accuracy must lie in (0.5, 1]")
    truth = true_interference_mask(clean, interfered).mask
    n_flip = int(round((1.0 - accuracy) * truth.size))
    mask = truth.copy()
    if n_flip:
        idx = np.random.default_rng(seed).choice(truth.size, n_flip, replace=False)
        flat = mask.reshape(-1)
        flat[idx] = ~flat[idx]
    return InterferenceMask(mask)


def zeroing(s: IFMatrix, mask) -> IFMatrix:
    """Set flagged samples to zero."""
    m = _mask_array(mask, s.data.shape)
    return IFMatrix(np.where(m, 0, s.data), s.params)


def imat(s: IFMatrix, mask, cfg: ImatConfig = ImatConfig()) -> IFMatrix:
    """Iterative reconstruction of flagged samples by Fourier thresholding, per ramp.

    Flagged samples start at zero.  Iteration ``k`` keeps the fast-time DFT bins
    with magnitude at least ``tau_0 * decay**k`` (``tau_0`` the largest bin of
    the zeroed ramp), transforms back and writes the result into the flagged
    samples only.  ``iters == 0`` is plain zeroing.
    """
    if cfg.iters < 0:
        raise ConfigError("IMAT needs iters >= 0")
    m = _mask_array(mask, s.data.shape)
    cols = np.nonzero(m.any(axis=0))[0]
    out = np.where(m, 0, s.data)
    if cols.size == 0 or cfg.iters == 0:
        return IFMatrix(out, s.params)
    orig = s.data[:, cols]
    mc = m[:, cols]
    x = out[:, cols]
    tau0 = np.abs(np.fft.fft(x, axis=0)).max(axis=0)
    for k in range(cfg.iters):
        spec = np.fft.fft(x, axis=0)
        spec = np.where(np.abs(spec) >= tau0 * cfg.thresh_decay ** k, spec, 0)
        x = np.where(mc, np.fft.ifft(spec, axis=0), orig)
    out[:, cols] = x
    return IFMatrix(out, s.params)


def ramp_filtering(s_r, headroom=1.0):
    """Clip each range bin's magnitude across ramps at ``headroom * min`` (phase kept).

    ``s_r`` is the range spectrum ``(N, M)``: range bins on axis 0, ramps on axis 1.
    """
    s_r = np.asarray(s_r, dtype=complex)
    mag = np.abs(s_r)
    cap = headroom * mag.min(axis=1, keepdims=True)
    ratio = np.ones_like(mag)
    np.divide(cap, mag, out=ratio, where=mag > cap)
    return s_r * ratio


def mitigate_pipeline(method, interfered: IFMatrix, mask=None, imat_cfg=ImatConfig(),
                      headroom=1.0) -> RDMap:
    """Apply a classical method at its native stage and return the (unstandardised) RD map."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    if method in ("zeroing", "imat") and mask is None:
        raise ConfigError(f"{method} needs an interference mask")
    if method == "none":
        return range_doppler_map(interfered)
    if method == "zeroing":
        return range_doppler_map(zeroing(interfered, mask))
    if method == "imat":
        return range_doppler_map(imat(interfered, mask, imat_cfg))
    filtered = ramp_filtering(range_spectrum(interfered), headroom)
    return RDMap(doppler_spectrum(filtered, interfered.params.window))
