"""On-disk dataset: ``manifest.json`` plus one binary record per sample.

Record layout (little-endian)::

    b"CVRD1"                      magic, 5 bytes
    u32 n, u32 m                  map dimensions
    u32 flags                     bit 0: maps are standardised
    u32 n_truth                   number of truth cells
    f64 mean_re, f64 mean_im      standardisation mean
    f64 scale                     standardisation scale
    f32[n*m*2]                    interfered map, interleaved re/im, row-major
    f32[n*m*2]                    clean map, same layout
    (u16, u16)[n_truth]           truth cells (range bin, Doppler bin)
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import ConfigError
from .radar import RadarParams, RDMap, SamplePair, SceneDistribution

MAGIC = b"CVRD1"
_HEADER = struct.Struct("<5sIIIIddd")
FLAG_STANDARDIZED = 1


def encode_record(pair: SamplePair) -> bytes:
    n, m = pair.interfered.shape
    if pair.clean.shape != (n, m):
        raise ConfigError("interfered and clean maps differ in shape")
    flags = FLAG_STANDARDIZED if pair.interfered.standardized else 0
    mean = complex(pair.interfered.mean)
    head = _HEADER.pack(MAGIC, n, m, flags, len(pair.truth_cells),
                        mean.real, mean.imag, float(pair.interfered.scale))

    def interleave(z):
        out = np.empty((n, m, 2), dtype="<f4")
        out[..., 0] = z.real
        out[..., 1] = z.imag
        return out.tobytes()

    truth = np.asarray(pair.truth_cells, dtype="<u2").reshape(-1, 2)
    return head + interleave(pair.interfered.data) + interleave(pair.clean.data) + truth.tobytes()


def decode_record(raw: bytes) -> SamplePair:
    magic, n, m, flags, n_truth, mre, mim, scale = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ConfigError("not a CVRD1 record")
    off = _HEADER.size
    size = n * m * 2

    def read_map(offset):
        a = np.frombuffer(raw, "<f4", size, offset).astype(np.float64).reshape(n, m, 2)
        return a[..., 0] + 1j * a[..., 1]

    x = read_map(off)
    y = read_map(off + 4 * size)
    truth = np.frombuffer(raw, "<u2", 2 * n_truth, off + 8 * size).reshape(-1, 2)
    std = bool(flags & FLAG_STANDARDIZED)
    mean = complex(mre, mim)
    return SamplePair(RDMap(x, std, mean, scale), RDMap(y, std, mean, scale),
                      [tuple(int(v) for v in c) for c in truth])


def write_record(path, pair: SamplePair):
    with open(path, "wb") as fh:
        fh.write(encode_record(pair))


def read_record(path) -> SamplePair:
    with open(path, "rb") as fh:
        return decode_record(fh.read())


def save_dataset(root, splits, params: RadarParams, dist: SceneDistribution, seed, crop):
    """Write ``splits`` (name -> (stream, pairs)) under ``root`` with a manifest."""
    os.makedirs(root, exist_ok=True)
    manifest = {
        "format": "CVRD1",
        "params": params.to_dict(),
        "distribution": dist.to_dict(),
        "seed": int(seed),
        "crop": list(crop),
        "splits": {},
    }
    for name, (stream, pairs) in splits.items():
        os.makedirs(os.path.join(root, name), exist_ok=True)
        files = []
        for i, pair in enumerate(pairs):
            rel = f"{name}/{i:05d}.cvrd"
            write_record(os.path.join(root, rel), pair)
            files.append(rel)
        manifest["splits"][name] = {"stream": stream, "count": len(pairs), "files": files}
    manifest["count"] = manifest["splits"].get("train", {}).get("count", 0)
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def load_manifest(root):
    path = os.path.join(root, "manifest.json")
    if not os.path.exists(path):
        raise ConfigError(f"no dataset manifest at {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    manifest["params_obj"] = RadarParams(**manifest["params"])
    manifest["distribution_obj"] = SceneDistribution.from_dict(manifest["distribution"])
    return manifest


def load_dataset(root, split="train", limit=None):
    manifest = load_manifest(root)
    if split not in manifest["splits"]:
        raise ConfigError(f"dataset at {root} has no split {split!r}")
    files = manifest["splits"][split]["files"]
    if limit is not None:
        files = files[:limit]
    return [read_record(os.path.join(root, f)) for f in files]
