"""CA-CFAR peak detection and the F1 / EVM / PPMSE peak metrics."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigError, MetricError

__all__ = [
    "CfarConfig",
    "DetectionMap",
    "MetricsReport",
    "cfar_alpha",
    "ca_cfar",
    "match_detections",
    "f1_score",
    "evm",
    "ppmse",
    "empirical_cdf",
    "evaluate_sample",
    "write_metrics_csv",
    "write_summary_json",
]

# range axis clamps at the edges, Doppler axis wraps around
_EDGE_MODES = ("nearest", "wrap")


@dataclass(frozen=True)
class CfarConfig:
    guard: int = 2
    train: int = 4
    pfa: float = 1e-4

    def __post_init__(self):
        if self.guard < 0 or self.train < 1:
            raise ConfigError("need guard >= 0 and train >= 1")
        if not 0 < self.pfa < 1:
            raise ConfigError("pfa must lie in (0, 1)")

    @property
    def n_train(self):
        outer = 2 * (self.guard + self.train) + 1
        inner = 2 * self.guard + 1
        return outer * outer - inner * inner


@dataclass
class DetectionMap:
    cells: set
    shape: tuple = None

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(sorted(self.cells))

    def __contains__(self, cell):
        return tuple(cell) in self.cells


def cfar_alpha(n_train, pfa):
    """CA-CFAR threshold factor for exponentially distributed power."""
    return n_train * (pfa ** (-1.0 / n_train) - 1.0)


def ca_cfar(power, cfg: CfarConfig = CfarConfig()) -> DetectionMap:
    """Cell-averaging CFAR on a non-negative power map.

    A cell is declared when it exceeds ``alpha`` times the mean of its training
    ring and is the maximum of its guard window.
    """
    power = np.asarray(power, dtype=float)
    if power.ndim != 2:
        raise ConfigError("CFAR expects a 2-D map")
    if np.any(power < 0):
        raise ConfigError("CFAR expects non-negative values (use |x|^2)")
    outer = 2 * (cfg.guard + cfg.train) + 1
    inner = 2 * cfg.guard + 1
    if outer > power.shape[0] or outer > power.shape[1]:
        raise ConfigError(f"CFAR window {outer} exceeds map {power.shape}")
    sum_outer = ndimage.uniform_filter(power, outer, mode=_EDGE_MODES) * outer ** 2
    sum_inner = ndimage.uniform_filter(power, inner, mode=_EDGE_MODES) * inner ** 2
    noise = np.maximum(sum_outer - sum_inner, 0.0) / cfg.n_train
    peak = power >= ndimage.maximum_filter(power, inner, mode=_EDGE_MODES)
    hits = peak & (power > cfar_alpha(cfg.n_train, cfg.pfa) * noise)
    return DetectionMap({(int(n), int(m)) for n, m in zip(*np.nonzero(hits))}, power.shape)


def _cells(d):
    if isinstance(d, DetectionMap):
        return sorted(d.cells)
    return sorted({tuple(int(v) for v in c) for c in d})


def match_detections(pred, truth, tol=1):
    """Greedy nearest matching within Chebyshev distance ``tol``.

    Returns ``(tp, fp, fn)``.
    """
    pred, truth = _cells(pred), _cells(truth)
    candidates = []
    for i, (pn, pm) in enumerate(pred):
        for j, (tn, tm) in enumerate(truth):
            d = max(abs(pn - tn), abs(pm - tm))
            if d <= tol:
                candidates.append((d, i, j))
    candidates.sort()
    used_p, used_t = set(), set()
    for _, i, j in candidates:
        if i not in used_p and j not in used_t:
            used_p.add(i)
            used_t.add(j)
    tp = len(used_p)
    return tp, len(pred) - tp, len(truth) - tp


def f1_score(pred, truth, tol=1) -> float:
    """``2 tp / (2 tp + fp + fn)``; two empty sets score 1."""
    tp, fp, fn = match_detections(pred, truth, tol)
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def _peak_values(pred, clean, peaks):
    cells = _cells(peaks)
    if not cells:
        raise MetricError("empty peak set")
    idx = tuple(np.array(cells).T)
    return np.asarray(pred)[idx], np.asarray(clean)[idx]


def evm(pred, clean, peaks) -> float:
    """Mean of ``|clean - pred| / |clean|`` over the peak cells.

    Cells where the clean map is exactly zero are skipped with a warning.
    """
    p, c = _peak_values(pred, clean, peaks)
    ok = np.abs(c) > 0
    if not np.all(ok):
        warnings.warn(f"evm: skipped {np.sum(~ok)} zero-magnitude clean cells", RuntimeWarning)
    if not np.any(ok):
        raise MetricError("evm undefined: all clean peak values are zero")
    return float(np.mean(np.abs(c[ok] - p[ok]) / np.abs(c[ok])))


def ppmse(pred, clean, peaks) -> float:
    """Mean squared wrapped phase difference at the peak cells, in rad^2."""
    p, c = _peak_values(pred, clean, peaks)
    ok = (np.abs(c) > 0) & (np.abs(p) > 0)
    if not np.all(ok):
        warnings.warn(f"ppmse: skipped {np.sum(~ok)} zero-magnitude cells", RuntimeWarning)
    if not np.any(ok):
        raise MetricError("ppmse undefined: no peak with non-zero magnitude in both maps")
    delta = np.abs(np.angle(p[ok]) - np.angle(c[ok]))
    return float(np.mean(np.minimum(delta, 2 * np.pi - delta) ** 2))


def empirical_cdf(values):
    """Sorted values with cumulative fractions ``k/n``, as an ``(n, 2)`` array."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise MetricError("empirical CDF of an empty sample")
    return np.column_stack([v, np.arange(1, v.size + 1) / v.size])


@dataclass
class MetricsReport:
    f1: float
    evm: float
    ppmse_rad2: float
    per_sample: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, f1s, evms, ppmses):
        """Aggregate per-sample values; NaN entries (no ground-truth peak) are ignored."""
        per = {"f1": np.asarray(f1s, float), "evm": np.asarray(evms, float),
               "ppmse": np.asarray(ppmses, float)}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            means = {k: float(np.nanmean(v)) if v.size else float("nan") for k, v in per.items()}
        return cls(means["f1"], means["evm"], means["ppmse"], per)


def evaluate_sample(pred, clean, cfg: CfarConfig = CfarConfig(), truth=None):
    """F1, EVM and PPMSE of one physical-scale prediction against its clean map.

    The ground truth is CFAR on the clean map unless ``truth`` is given.  EVM
    and PPMSE are NaN when there is no ground-truth peak.
    """
    pred = np.asarray(pred)
    clean = np.asarray(clean)
    if truth is None:
        truth = ca_cfar(np.abs(clean) ** 2, cfg)
    detected = ca_cfar(np.abs(pred) ** 2, cfg)
    f1 = f1_score(detected, truth)
    if len(_cells(truth)) == 0:
        return f1, float("nan"), float("nan")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            e = evm(pred, clean, truth)
        except MetricError:
            e = float("nan")
        try:
            ph = ppmse(pred, clean, truth)
        except MetricError:
            ph = float("nan")
    return f1, e, ph


def write_metrics_csv(path, rows):
    """Rows of ``(sample_id, method, f1, evm, ppmse)``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "method", "f1", "evm", "ppmse"])
        for row in rows:
            writer.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:5]])


def write_summary_json(path, reports):
    """``reports`` maps method names to :class:`MetricsReport`."""
    out = {}
    for method, rep in reports.items():
        entry = {"f1": rep.f1, "evm": rep.evm, "ppmse": rep.ppmse_rad2, "cdf": {}}
        for key, vals in rep.per_sample.items():
            vals = vals[np.isfinite(vals)]
            if vals.size:
                cdf = empirical_cdf(vals)
                entry["cdf"][key] = {"value": cdf[:, 0].tolist(), "fraction": cdf[:, 1].tolist()}
        out[method] = entry
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2)
    return out
