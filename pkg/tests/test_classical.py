import numpy as np
import pytest

from cvrd.classical import (
    ImatConfig,
    InterferenceMask,
    detect_interference,
    imat,
    mitigate_pipeline,
    ramp_filtering,
    true_interference_mask,
    zeroing,
)
from cvrd.errors import ConfigError, ShapeError
from cvrd.metrics import ca_cfar, f1_score
from cvrd.radar import (
    IFMatrix,
    InterfererSpec,
    ObjectSpec,
    RadarParams,
    Scene,
    SceneDistribution,
    crop_rd,
    range_doppler_map,
    range_spectrum,
    sample_seeds,
    simulate_frames,
    synthesize_if,
)

P = RadarParams()


def noisy_frame(seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return IFMatrix(scale * (rng.standard_normal(P.shape) + 1j * rng.standard_normal(P.shape)), P)


def interfered_scene():
    obj = [ObjectSpec(0.2, 0.1, 1.0), ObjectSpec(0.35, -0.2, 0.3, 1.0)]
    intf = [InterfererSpec(P.chirp_slope_hz_per_s + 2e13, P.chirp_start_hz - 6e7, 0.0, 30.0, 0.0, 2e-9)]
    return synthesize_if(Scene(obj, intf, 0.1, 4), P)


# ---------------------------------------------------------------- detector

def test_detector_perfect_accuracy():
    clean, intf = interfered_scene()
    truth = true_interference_mask(clean, intf).mask
    assert truth.any()
    assert np.array_equal(detect_interference(clean, intf, 1.0).mask, truth)


def test_detector_accuracy_on_frame():
    clean, intf = interfered_scene()
    truth = true_interference_mask(clean, intf).mask
    for seed in range(5):
        m = detect_interference(clean, intf, 0.9, seed=seed).mask
        acc = np.mean(m == truth)
        assert 0.895 <= acc <= 0.905


def test_detector_false_positives_without_interference():
    clean = noisy_frame()
    m = detect_interference(clean, clean, 0.9, seed=1).mask
    assert np.mean(m) == pytest.approx(0.1, abs=0.005)


def test_detector_deterministic_and_validated():
    clean, intf = interfered_scene()
    a = detect_interference(clean, intf, 0.9, seed=3).mask
    b = detect_interference(clean, intf, 0.9, seed=3).mask
    assert np.array_equal(a, b)
    for acc in (0.5, 1.2):
        with pytest.raises(ConfigError):
            detect_interference(clean, intf, acc)
    small = IFMatrix(np.zeros((8, 8)), RadarParams(n_fast=8, n_ramps=8))
    with pytest.raises(ShapeError):
        detect_interference(small, clean)


# ---------------------------------------------------------------- zeroing

def test_zeroing_cases():
    s = noisy_frame(1)
    assert np.array_equal(zeroing(s, np.zeros(P.shape, bool)).data, s.data)
    assert not np.any(zeroing(s, np.ones(P.shape, bool)).data)
    half = np.zeros(P.shape, bool)
    half[:64] = True
    out = zeroing(s, InterferenceMask(half)).data
    assert np.sum(np.abs(out) ** 2) == np.sum(np.abs(s.data[64:]) ** 2)
    assert np.array_equal(out[64:], s.data[64:])


def test_mask_shape_checked():
    with pytest.raises(ShapeError):
        zeroing(noisy_frame(), np.zeros((4, 4), bool))


# ---------------------------------------------------------------- IMAT

def test_imat_empty_mask_identity():
    s = noisy_frame(2)
    for k in (0, 1, 10):
        assert np.array_equal(imat(s, np.zeros(P.shape, bool), ImatConfig(k)).data, s.data)


def test_imat_zero_iterations_is_zeroing():
    s = noisy_frame(3)
    mask = np.random.default_rng(0).random(P.shape) < 0.2
    assert np.array_equal(imat(s, mask, ImatConfig(0)).data, zeroing(s, mask).data)
    with pytest.raises(ConfigError):
        imat(s, mask, ImatConfig(-1))


def test_imat_reconstructs_sinusoid():
    n = np.arange(P.n_fast)
    tone = 1.7 * np.exp(1j * (2 * np.pi * 0.1875 * n + 0.4))
    frame = np.tile(tone[:, None], (1, P.n_ramps))
    rng = np.random.default_rng(4)
    mask = np.zeros(P.shape, bool)
    for m in range(P.n_ramps):
        start = rng.integers(0, P.n_fast - 26)
        mask[start:start + 26, m] = True  # ~20 % of each ramp, one burst
    out = imat(IFMatrix(frame, P), mask).data
    err = np.abs(out[mask] - frame[mask])
    assert np.max(err) < 0.05 * 1.7
    assert np.array_equal(out[~mask], frame[~mask])


def test_imat_noise_energy_not_increased():
    s = noisy_frame(5)
    mask = np.random.default_rng(6).random(P.shape) < 0.2
    out = imat(s, mask).data
    assert np.sum(np.abs(out[mask]) ** 2) <= np.sum(np.abs(s.data[mask]) ** 2)


def test_imat_keeps_unflagged_bitwise():
    clean, intf = interfered_scene()
    mask = detect_interference(clean, intf, 0.9, seed=0).mask
    out = imat(intf, mask).data
    assert np.array_equal(out[~mask], intf.data[~mask])


# ---------------------------------------------------------------- ramp filtering

def test_ramp_filtering_cases():
    rng = np.random.default_rng(7)
    phase = np.exp(1j * rng.uniform(0, 2 * np.pi, (4, 16)))
    const = 3.0 * phase
    assert np.allclose(ramp_filtering(const), const, rtol=1e-15)
    spiky = phase.copy()
    spiky[2, 5] *= 100
    out = ramp_filtering(spiky)
    assert abs(out[2, 5]) == pytest.approx(1.0)
    assert np.angle(out[2, 5]) == pytest.approx(np.angle(spiky[2, 5]))
    assert not np.any(ramp_filtering(np.zeros((4, 16))))


def test_ramp_filtering_never_amplifies_or_rotates():
    s = range_spectrum(interfered_scene()[1])
    out = ramp_filtering(s, headroom=1.5)
    assert np.all(np.abs(out) <= np.abs(s) * (1 + 1e-12))
    nz = np.abs(s) > 0
    assert np.allclose(np.angle(out[nz] / s[nz]), 0, atol=1e-12)


# ---------------------------------------------------------------- pipeline

def test_pipeline_routes():
    clean, intf = interfered_scene()
    none = mitigate_pipeline("none", intf)
    assert np.array_equal(none.data, range_doppler_map(intf).data)
    z = mitigate_pipeline("zeroing", clean, true_interference_mask(clean, clean))
    assert np.array_equal(z.data, range_doppler_map(clean).data)
    with pytest.raises(ConfigError):
        mitigate_pipeline("zeroing", intf)
    with pytest.raises(ConfigError):
        mitigate_pipeline("wiener", intf)


def test_zeroing_improves_f1_on_desk_set():
    dist = SceneDistribution()
    f_none, f_zero = [], []
    for ss in sample_seeds(31, 50):
        _, clean, intf = simulate_frames(P, dist, ss)
        truth = ca_cfar(np.abs(crop_rd(range_doppler_map(clean).data, 96, 96)) ** 2)
        mask = true_interference_mask(clean, intf)
        for method, acc in (("none", f_none), ("zeroing", f_zero)):
            rd = mitigate_pipeline(method, intf, mask)
            acc.append(f1_score(ca_cfar(np.abs(crop_rd(rd.data, 96, 96)) ** 2), truth))
    assert np.mean(f_zero) > np.mean(f_none)
