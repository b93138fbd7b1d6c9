"""Experiment orchestration: dataset generation, training, sweeps, method comparison.

Every command takes an :class:`ExperimentConfig` and an explicit seed and
writes its artefacts under ``cfg.out``::

    results/*.csv, results/cdf_*.json, checkpoints/*.ckpt, loss_*.csv
"""

from __future__ import annotations

import copy
import csv
import json
import os
from dataclasses import dataclass, field, fields

import numpy as np

from . import classical, metrics, models, radar, records
from .errors import ConfigError

__all__ = [
    "ExperimentConfig",
    "SweepResult",
    "COMPLEX_GRID",
    "REAL_GRID",
    "ALL_METHODS",
    "full_grid",
    "evaluate_pairs",
    "cmd_generate",
    "cmd_train",
    "cmd_sweep",
    "cmd_compare_classical",
]

COMPLEX_GRID = [f"C-{a}-{b}-1" for a in (1, 2, 4, 8, 16, 32) for b in (2, 4, 8, 16)]
REAL_GRID = [f"R-{a}-{b}-2" for a in (1, 2, 4, 8, 16, 32) for b in (4, 8, 16, 32)]
ALL_METHODS = ("none", "zeroing", "imat", "rfmin", "rvcnn", "cvcnn")
AXES = ("params", "flops", "data")


def full_grid():
    return COMPLEX_GRID + REAL_GRID


_DEFAULTS = {
    "dataset": {
        "path": "data",
        "train_count": 2500,
        "eval_count": 500,
        "crop": [96, 96],
        "params": {},
        "distribution": {},
    },
    "model": "C-8-4-1",
    "grid": "full",
    "data_models": ["C-8-4-1", "R-16-8-2"],
    "training": {"epochs": 20, "lr": 5e-3, "batch": 8, "init_seed": 0, "train_limit": None},
    "data_fractions": [5, 10, 20, 50, 100],
    "repeats": 1,
    "eval_limit": None,
    "methods": list(ALL_METHODS),
    "detector_accuracy": 0.9,
    "checkpoints": {},
    "resume": False,
    "out": "results_out",
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {k!r}")
        if k == "checkpoints" or not isinstance(base[k], dict):
            out[k] = copy.deepcopy(v)
        elif isinstance(v, dict):
            for kk in v:
                if kk not in base[k]:
                    raise ConfigError(f"unknown config key {k}.{kk}")
            out[k].update(copy.deepcopy(v))
        else:
            raise ConfigError(f"config key {k!r} must be an object")
    return out


@dataclass
class ExperimentConfig:
    """JSON-backed experiment settings; see ``_DEFAULTS`` for the keys."""

    raw: dict = field(default_factory=lambda: copy.deepcopy(_DEFAULTS))
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d, base_dir="."):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls(_merge(_DEFAULTS, d), base_dir)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(d, os.path.dirname(os.path.abspath(path)))

    def __getitem__(self, key):
        return self.raw[key]

    def with_out(self, out):
        new = copy.deepcopy(self)
        if out is not None:
            new.raw["out"] = out
            new.base_dir = "."
        return new

    def path(self, p):
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    @property
    def out(self):
        return self.path(self.raw["out"])

    @property
    def dataset_path(self):
        return self.path(self.raw["dataset"]["path"])

    def radar_params(self):
        extra = self.raw["dataset"]["params"]
        unknown = set(extra) - {f.name for f in fields(radar.RadarParams)}
        if unknown:
            raise ConfigError(f"unknown radar parameter keys {sorted(unknown)}")
        return radar.RadarParams(**extra)

    def distribution(self):
        base = radar.SceneDistribution().to_dict()
        extra = self.raw["dataset"]["distribution"]
        unknown = set(extra) - set(base)
        if unknown:
            raise ConfigError(f"unknown scene distribution keys {sorted(unknown)}")
        return radar.SceneDistribution.from_dict({**base, **extra})

    def grid(self):
        g = self.raw["grid"]
        specs = full_grid() if g == "full" else list(g)
        if not specs:
            raise ConfigError("model grid is empty")
        return [models.parse_spec(s) for s in specs]


@dataclass
class SweepResult:
    """One row per (configuration point, seed)."""

    rows: list = field(default_factory=list)

    FIELDS = ("label", "domain", "param_count", "mflop", "data_fraction", "seed",
              "f1", "evm", "ppmse")

    def add(self, **row):
        self.rows.append({k: row.get(k) for k in self.FIELDS})

    def to_csv(self, path):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.FIELDS)
            for r in self.rows:
                w.writerow(["" if r[k] is None else (repr(r[k]) if isinstance(r[k], float) else r[k])
                            for k in self.FIELDS])

    @classmethod
    def from_csv(cls, path):
        res = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                conv = {}
                for k, v in row.items():
                    if v == "":
                        conv[k] = None
                    elif k in ("param_count", "seed"):
                        conv[k] = int(v)
                    elif k in ("mflop", "data_fraction", "f1", "evm", "ppmse"):
                        conv[k] = float(v)
                    else:
                        conv[k] = v
                res.rows.append(conv)
        return res


# ---------------------------------------------------------------------------
# helpers


def _ensure_dirs(cfg):
    for sub in ("", "results", "checkpoints"):
        os.makedirs(os.path.join(cfg.out, sub), exist_ok=True)


def _load_split(cfg, split, limit=None):
    path = cfg.dataset_path
    if not os.path.exists(os.path.join(path, "manifest.json")):
        raise ConfigError(f"no dataset at {path}; run 'cvrd generate' first")
    return records.load_dataset(path, split, limit)


def _spec_tag(spec):
    return str(spec)


def evaluate_pairs(preds, pairs, cfar_cfg=metrics.CfarConfig()):
    """Per-sample metrics of standardised predictions against their clean maps."""
    f1s, evms, pps = [], [], []
    for pred, pair in zip(preds, pairs):
        f, e, p = metrics.evaluate_sample(pred.physical(), pair.clean.physical(), cfar_cfg)
        f1s.append(f)
        evms.append(e)
        pps.append(p)
    return metrics.MetricsReport.from_samples(f1s, evms, pps)


def _train_spec(spec, pairs, cfg, seed, on_epoch=None):
    t = cfg["training"]
    model = models.build_model(spec, init_seed=t["init_seed"] + seed)
    res = models.train(model, pairs, epochs=t["epochs"], lr=t["lr"], batch=t["batch"],
                       seed=seed, on_epoch=on_epoch)
    return model, res


def _write_losses(path, losses):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(losses, 1):
            w.writerow([i, repr(float(v))])


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: ExperimentConfig, seed: int):
    """Simulate the training and evaluation splits and write them to disk."""
    ds = cfg["dataset"]
    n_train, n_eval = int(ds["train_count"]), int(ds["eval_count"])
    if n_train < 1 or n_eval < 1:
        raise ConfigError("dataset counts must be >= 1")
    p, dist = cfg.radar_params(), cfg.distribution()
    n_keep, m_keep = ds["crop"]
    train = radar.generate_dataset(n_train, p, dist, seed, n_keep, m_keep, stream=0)
    ev = radar.generate_dataset(n_eval, p, dist, seed, n_keep, m_keep, stream=1)
    return records.save_dataset(cfg.dataset_path, {"train": (0, train), "eval": (1, ev)},
                                p, dist, seed, (n_keep, m_keep))


def cmd_train(cfg: ExperimentConfig, seed: int, log=None):
    """Train ``cfg['model']``; ``training.epochs`` is the total epoch target when resuming."""
    spec = models.parse_spec(cfg["model"])
    t = cfg["training"]
    pairs = _load_split(cfg, "train", t["train_limit"])
    _ensure_dirs(cfg)
    tag = f"{_spec_tag(spec)}_s{seed}"
    ckpt = os.path.join(cfg.out, "checkpoints", f"{tag}.ckpt")
    losses, adam = [], None
    if cfg["resume"] and os.path.exists(ckpt):
        model, header, adam = models.load_checkpoint(ckpt)
        if models.parse_spec(header["spec"]) != spec:
            raise ConfigError(f"checkpoint {ckpt} holds {header['spec']}, not {spec}")
        losses = header["losses"]
    else:
        model = models.build_model(spec, init_seed=t["init_seed"] + seed)
    remaining = max(0, int(t["epochs"]) - len(losses))
    res = models.train(model, pairs, epochs=remaining, lr=t["lr"], batch=t["batch"], seed=seed,
                       adam=adam, losses=losses, on_epoch=log)
    models.save_checkpoint(ckpt, model, seed=seed, losses=res.losses, adam=res.adam,
                           extra={"train_count": len(pairs)})
    _write_losses(os.path.join(cfg.out, f"loss_{tag}.csv"), res.losses)
    return ckpt, res


def cmd_sweep(cfg: ExperimentConfig, seed: int, axis="params", log=None):
    """Architecture sweep (``params``/``flops``) or training-data sweep (``data``)."""
    if axis not in AXES:
        raise ConfigError(f"axis must be one of {AXES}")
    t = cfg["training"]
    seeds = [seed + r for r in range(int(cfg["repeats"]))]
    if axis == "data":
        specs = [models.parse_spec(s) for s in cfg["data_models"]]
        fractions = [float(f) for f in cfg["data_fractions"]]
        if not specs or not fractions:
            raise ConfigError("data sweep needs models and fractions")
        if any(not 0 < f <= 100 for f in fractions):
            raise ConfigError("data fractions are percentages in (0, 100]")
    else:
        specs = cfg.grid()
        fractions = [100.0]
    train = _load_split(cfg, "train", t["train_limit"])
    ev = _load_split(cfg, "eval", cfg["eval_limit"])
    _ensure_dirs(cfg)
    result = SweepResult()
    for spec in specs:
        report = models.complexity(spec)
        for frac in fractions:
            for s in seeds:
                k = max(1, int(round(len(train) * frac / 100.0)))
                idx = np.sort(np.random.default_rng([s, 1]).permutation(len(train))[:k])
                model, _ = _train_spec(spec, [train[i] for i in idx], cfg, s)
                rep = evaluate_pairs(models.denoise_batch(model, [p.interfered for p in ev]), ev)
                result.add(label=str(spec), domain=spec.domain, param_count=report.param_count,
                           mflop=report.mflop_per_rdmap, data_fraction=frac, seed=s,
                           f1=rep.f1, evm=rep.evm, ppmse=rep.ppmse_rad2)
                if log:
                    log(result.rows[-1])
    key = {"params": "param_count", "flops": "mflop", "data": "data_fraction"}[axis]
    result.rows.sort(key=lambda r: (r["domain"], r[key], r["label"], r["seed"]))
    result.to_csv(os.path.join(cfg.out, "results", f"sweep_{axis}_s{seed}.csv"))
    return result


def _eval_frames(cfg, manifest, count):
    p = manifest["params_obj"]
    dist = manifest["distribution_obj"]
    stream = manifest["splits"]["eval"]["stream"]
    for ss in radar.sample_seeds(manifest["seed"], count, stream):
        yield radar.simulate_frames(p, dist, ss)


def cmd_compare_classical(cfg: ExperimentConfig, seed: int, log=None):
    """Per-sample comparison of classical methods and trained networks on the eval split."""
    methods = list(cfg["methods"])
    if not methods:
        raise ConfigError("no methods to compare")
    unknown = set(methods) - set(ALL_METHODS)
    if unknown:
        raise ConfigError(f"unknown methods {sorted(unknown)}")
    nets = {}
    for m in ("rvcnn", "cvcnn"):
        if m in methods:
            path = cfg["checkpoints"].get(m)
            if not path or not os.path.exists(cfg.path(path)):
                raise ConfigError(f"method {m} needs an existing checkpoint (checkpoints.{m})")
            nets[m] = models.load_checkpoint(cfg.path(path))[0]
    ev = _load_split(cfg, "eval", cfg["eval_limit"])
    manifest = records.load_manifest(cfg.dataset_path)
    n_keep, m_keep = manifest["crop"]
    _ensure_dirs(cfg)

    preds = {m: [] for m in methods}
    for m, net in nets.items():
        preds[m] = [x.physical() for x in models.denoise_batch(net, [p.interfered for p in ev])]
    clean_maps = []
    for i, (_, clean, interfered) in enumerate(_eval_frames(cfg, manifest, len(ev))):
        clean_maps.append(radar.crop_rd(radar.range_doppler_map(clean).data, n_keep, m_keep))
        mask = None
        if {"zeroing", "imat"} & set(methods):
            mask = classical.detect_interference(clean, interfered, cfg["detector_accuracy"],
                                                 seed=[seed, i])
        for m in methods:
            if m in nets:
                continue
            rd = classical.mitigate_pipeline(m, interfered, mask)
            preds[m].append(radar.crop_rd(rd.data, n_keep, m_keep))

    rows, reports = [], {}
    result = SweepResult()
    for m in methods:
        per = [metrics.evaluate_sample(pred, clean) for pred, clean in zip(preds[m], clean_maps)]
        for i, (f, e, p) in enumerate(per):
            rows.append((i, m, f, e, p))
        rep = metrics.MetricsReport.from_samples(*zip(*per))
        reports[m] = rep
        label_spec = nets[m].spec if m in nets else None
        result.add(label=m, domain=None if label_spec is None else label_spec.domain,
                   param_count=None if label_spec is None else models.count_params(label_spec),
                   mflop=None if label_spec is None else models.count_flops(label_spec),
                   data_fraction=100.0, seed=seed, f1=rep.f1, evm=rep.evm, ppmse=rep.ppmse_rad2)
        if log:
            log(result.rows[-1])
    metrics.write_metrics_csv(os.path.join(cfg.out, "results", f"compare_s{seed}.csv"), rows)
    metrics.write_summary_json(os.path.join(cfg.out, "results", f"cdf_compare_s{seed}.json"), reports)
    result.to_csv(os.path.join(cfg.out, "results", f"compare_summary_s{seed}.csv"))
    return result
