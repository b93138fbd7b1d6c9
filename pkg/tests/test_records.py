import json
import struct

import numpy as np
import pytest

from cvrd.errors import ConfigError
from cvrd.radar import RadarParams, RDMap, SamplePair, SceneDistribution, generate_dataset
from cvrd.records import (
    decode_record,
    encode_record,
    load_dataset,
    load_manifest,
    read_record,
    save_dataset,
    write_record,
)


def pair(n=6, m=5, truth=((1, 2), (3, 4))):
    rng = np.random.default_rng(0)
    x = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))).astype(np.complex64)
    y = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))).astype(np.complex64)
    return SamplePair(RDMap(x, True, 1 + 2j, 3.5), RDMap(y, True, 1 + 2j, 3.5), list(truth))


def test_record_layout():
    p = pair()
    raw = encode_record(p)
    assert raw[:5] == b"CVRD1"
    n, m, flags, n_truth = struct.unpack_from("<IIII", raw, 5)
    assert (n, m, flags, n_truth) == (6, 5, 1, 2)
    off = 5 + 16 + 24
    body = np.frombuffer(raw, "<f4", 6 * 5 * 2, off).reshape(6, 5, 2)
    assert np.array_equal(body[..., 0], p.interfered.data.real)
    assert np.array_equal(body[..., 1], p.interfered.data.imag)
    truth = np.frombuffer(raw, "<u2", 4, off + 2 * 6 * 5 * 8)
    assert truth.tolist() == [1, 2, 3, 4]
    assert len(raw) == off + 2 * 6 * 5 * 8 + 8


def test_record_round_trip(tmp_path):
    p = pair(truth=())
    write_record(tmp_path / "r.cvrd", p)
    q = read_record(tmp_path / "r.cvrd")
    assert np.array_equal(q.interfered.data, p.interfered.data)
    assert np.array_equal(q.clean.data, p.clean.data)
    assert q.truth_cells == [] and q.interfered.mean == 1 + 2j and q.clean.scale == 3.5


def test_bad_magic():
    with pytest.raises(ConfigError):
        decode_record(b"XXXXX" + bytes(60))


def test_dataset_directory(tmp_path):
    params, dist = RadarParams(), SceneDistribution()
    train = generate_dataset(3, params, dist, seed=2)
    ev = generate_dataset(2, params, dist, seed=2, stream=1)
    save_dataset(tmp_path, {"train": (0, train), "eval": (1, ev)}, params, dist, 2, (96, 96))
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 2 and manifest["count"] == 3
    assert manifest["splits"]["eval"]["count"] == 2
    loaded = load_manifest(tmp_path)
    assert loaded["params_obj"] == params and loaded["distribution_obj"] == dist
    back = load_dataset(tmp_path, "train")
    for a, b in zip(train, back):
        assert np.allclose(a.interfered.data, b.interfered.data, rtol=1e-6, atol=1e-6)
        assert a.truth_cells == b.truth_cells
    assert len(load_dataset(tmp_path, "eval", limit=1)) == 1
    with pytest.raises(ConfigError):
        load_dataset(tmp_path, "test")
    with pytest.raises(ConfigError):
        load_manifest(tmp_path / "missing")
