import numpy as np
import pytest

from cvrd.errors import DegenerateInputError, DomainError
from cvrd.radar import (
    IFMatrix,
    InterfererSpec,
    ObjectSpec,
    RadarParams,
    RDMap,
    Scene,
    SceneDistribution,
    crop_and_standardize,
    generate_dataset,
    interference_component,
    interference_support,
    object_component,
    range_doppler_map,
    sample_scene,
    sample_seeds,
    standardize,
    synthesize_if,
    truth_cells,
)

RECT = RadarParams(window="rect")


def small(n=8, m=8, window="rect"):
    # sample_rate * ramp_duration must cover n samples
    return RadarParams(n_fast=n, n_ramps=m, sample_rate_hz=20e6,
                       ramp_duration_s=max(n, 8) / 20e6, window=window)


def naive_rd(x):
    """Direct double-sum DFT with the Doppler axis shifted so bin 0 sits at M//2."""
    n, m = x.shape
    out = np.zeros((n, m), dtype=complex)
    nn = np.arange(n)[:, None]
    mm = np.arange(m)[None, :]
    for k in range(n):
        for l in range(m):
            out[k, l] = np.sum(x * np.exp(-2j * np.pi * (k * nn / n + l * mm / m)))
    return np.roll(out, m // 2, axis=1)


# ---------------------------------------------------------------- parameters

def test_radar_params_validation():
    with pytest.raises(DomainError):
        RadarParams(n_fast=4)
    with pytest.raises(DomainError):
        RadarParams(sample_rate_hz=1e6)  # ramp too short for 128 samples
    with pytest.raises(DomainError):
        RadarParams(if_bandwidth_hz=11e6)
    with pytest.raises(DomainError):
        RadarParams(window="kaiser")


@pytest.mark.parametrize("beat,dop", [(0.5, 0.0), (-0.1, 0.0), (0.1, 0.5), (0.1, -0.6)])
def test_object_frequency_range(beat, dop):
    with pytest.raises(DomainError):
        ObjectSpec(beat, dop)


# ---------------------------------------------------------------- objects

def test_object_zero_frequency_is_ones():
    s = object_component(ObjectSpec(0.0, 0.0, 1.0, 0.0), RECT)
    assert np.array_equal(s.data, np.ones(RECT.shape))


def test_object_quarter_beat_pattern_and_peak():
    p = small()
    s = object_component(ObjectSpec(0.25, 0.0), p).data
    expected_col = np.array([1, 1j, -1, -1j] * 2)
    for m in range(8):
        assert np.allclose(s[:, m], expected_col, atol=1e-15)
    rd = naive_rd(s)
    peak = np.unravel_index(np.argmax(np.abs(rd)), rd.shape)
    # zero Doppler sits at the centre bin after the shift
    assert peak == (2, 4)
    assert abs(rd[2, 4]) == pytest.approx(64.0)
    assert np.allclose(range_doppler_map(IFMatrix(s, p)).data, rd, atol=1e-10)


def test_object_amplitude_linear():
    a = object_component(ObjectSpec(0.1, 0.2, 1.0, 0.3), RECT).data
    b = object_component(ObjectSpec(0.1, 0.2, 2.0, 0.3), RECT).data
    assert np.array_equal(b, 2 * a)


@pytest.mark.parametrize("beat,dop", [(0.1, 0.2), (0.33, -0.41), (0.47, 0.0)])
def test_object_peak_location(beat, dop):
    rd = range_doppler_map(object_component(ObjectSpec(beat, dop), RECT))
    peak = np.unravel_index(np.argmax(np.abs(rd.data)), rd.shape)
    n = round(beat * 128) % 128
    m = (round(dop * 128) + 64) % 128
    assert peak == (n, m)


# ---------------------------------------------------------------- interference

def _intf(slope_diff, f_diff0, amp=1.0, drift=0.0):
    p = RECT
    return InterfererSpec(p.chirp_slope_hz_per_s + slope_diff, p.chirp_start_hz + f_diff0,
                          0.0, amp, 0.3, drift)


def test_interference_out_of_band_is_zero():
    # difference frequency starts at 50 MHz and moves away
    s = interference_component(_intf(1e12, 50e6), RECT)
    assert not np.any(s.data)


def test_interference_equal_slope_rejected():
    with pytest.raises(DomainError):
        interference_component(_intf(0.0, 0.0), RECT)


@pytest.mark.parametrize("slope_diff", [2e13, -3.3e13, 1.6e13])
def test_interference_burst_length(slope_diff):
    p = RECT
    t_mid = 3.2e-6
    intf = _intf(slope_diff, -slope_diff * t_mid)
    s = interference_component(intf, p).data
    counts = np.count_nonzero(s, axis=0)
    expected = 2 * p.if_bandwidth_hz / abs(slope_diff) * p.sample_rate_hz
    # crossing interval closed form: t in [(-B - f0)/dk, (B - f0)/dk]
    t = np.arange(p.n_fast) / p.sample_rate_hz
    lo = (-p.if_bandwidth_hz + slope_diff * t_mid) / slope_diff
    hi = (p.if_bandwidth_hz + slope_diff * t_mid) / slope_diff
    lo, hi = min(lo, hi), max(lo, hi)
    analytic = np.count_nonzero((t >= lo - 1e-15) & (t <= hi + 1e-15))
    assert np.all(counts == analytic)
    assert abs(analytic - round(expected)) <= 1


def test_interference_support_contiguous_and_exact():
    p = RECT
    intf = _intf(-2.5e13, 4e7, drift=3e-9)
    s = interference_component(intf, p).data
    t_lo, t_hi = interference_support(intf, p)
    t = np.arange(p.n_fast) / p.sample_rate_hz
    for m in range(p.n_ramps):
        inside = (t >= t_lo[m]) & (t <= t_hi[m])
        nz = np.nonzero(s[:, m])[0]
        assert np.all(s[~inside, m] == 0)
        if nz.size:
            assert nz[-1] - nz[0] + 1 == nz.size
        # tolerate one boundary sample that the rounding of t puts on the edge
        assert abs(nz.size - inside.sum()) <= 1


def test_interference_amplitude_linear():
    a = interference_component(_intf(2e13, -4e7, amp=1.0), RECT).data
    b = interference_component(_intf(2e13, -4e7, amp=2.0), RECT).data
    assert np.array_equal(a != 0, b != 0)
    assert np.allclose(b, 2 * a, rtol=0, atol=1e-15)


# ---------------------------------------------------------------- synthesis

def test_synthesize_empty_scene():
    clean, intf = synthesize_if(Scene(), RECT)
    assert not np.any(clean.data) and not np.any(intf.data)


def test_synthesize_no_interferers_bitwise():
    scene = Scene([ObjectSpec(0.1, 0.1), ObjectSpec(0.3, -0.2, 0.5)], [], 0.1, 7)
    clean, intf = synthesize_if(scene, RECT)
    assert np.array_equal(clean.data, intf.data)


def test_synthesize_object_plus_interferer():
    obj = ObjectSpec(0.2, 0.05, 1.3, 1.0)
    it = _intf(2e13, -4e7, amp=10.0, drift=1e-9)
    _, intf = synthesize_if(Scene([obj], [it], 0.0, 0), RECT)
    expected = object_component(obj, RECT).data + interference_component(it, RECT).data
    assert np.allclose(intf.data, expected, rtol=0, atol=1e-12)


def test_synthesize_difference_is_interference():
    its = [_intf(2e13, -4e7, 5.0, 1e-9), _intf(-3e13, 6e7, 3.0, -2e-9)]
    scene = Scene([ObjectSpec(0.2, 0.05)], its, 0.3, 11)
    clean, intf = synthesize_if(scene, RECT)
    total = sum(interference_component(i, RECT).data for i in its)
    assert np.allclose(intf.data - clean.data, total, rtol=0, atol=1e-12)


def test_synthesize_linearity_in_objects():
    a = [ObjectSpec(0.1, 0.1, 1.0, 0.2), ObjectSpec(0.4, -0.3, 0.3, 2.0)]
    b = [ObjectSpec(0.25, 0.2, 0.7, 1.1)]
    both, _ = synthesize_if(Scene(a + b, [], 0.5, 3), RECT)
    sa, _ = synthesize_if(Scene(a, [], 0.5, 3), RECT)
    sb, _ = synthesize_if(Scene(b, [], 0.5, 3), RECT)
    noise, _ = synthesize_if(Scene([], [], 0.5, 3), RECT)
    assert np.allclose(both.data, sa.data + sb.data - noise.data, rtol=0, atol=1e-12)


def test_noise_statistics():
    clean, _ = synthesize_if(Scene([], [], 0.5, 123), RECT)
    z = clean.data
    assert np.std(z.real) == pytest.approx(0.5, rel=0.03)
    assert np.std(z.imag) == pytest.approx(0.5, rel=0.03)
    assert abs(np.mean(z.real * z.imag)) < 0.01


def test_scene_limits():
    with pytest.raises(DomainError):
        Scene([ObjectSpec(0.1, 0.1)] * 65)
    with pytest.raises(DomainError):
        Scene([], [_intf(1e13, 0.0)] * 9)


# ---------------------------------------------------------------- DFT chain

def test_rd_of_constant():
    p = small()
    rd = range_doppler_map(IFMatrix(np.ones((8, 8)), p)).data
    expected = np.zeros((8, 8), complex)
    expected[0, 4] = 64
    assert np.allclose(rd, expected, atol=1e-12)


@pytest.mark.parametrize("n,m", [(8, 8), (8, 16), (16, 12), (12, 9), (16, 16)])
def test_rd_matches_naive_dft(n, m):
    p = small(n, m)
    rng = np.random.default_rng(n * 100 + m)
    x = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    rd = range_doppler_map(IFMatrix(x, p)).data
    ref = naive_rd(x)
    assert np.max(np.abs(rd - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_parseval():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(RECT.shape) + 1j * rng.standard_normal(RECT.shape)
    rd = range_doppler_map(IFMatrix(x, RECT)).data
    lhs = np.sum(np.abs(rd) ** 2)
    rhs = RECT.n_fast * RECT.n_ramps * np.sum(np.abs(x) ** 2)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_hann_peak_location():
    p = RadarParams()
    rd = range_doppler_map(object_component(ObjectSpec(0.25, 0.125), p))
    peak = np.unravel_index(np.argmax(np.abs(rd.data)), rd.shape)
    assert peak == (32, 64 + 16)


# ---------------------------------------------------------------- standardisation

def test_constant_map_is_degenerate():
    m = RDMap(np.full((128, 128), 3 + 1j))
    with pytest.raises(DegenerateInputError):
        crop_and_standardize(m, m)


def test_standardized_fixed_point():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((96, 96)) + 1j * rng.standard_normal((96, 96))
    z -= z.mean()
    z /= np.sqrt(np.mean(z.real ** 2 + z.imag ** 2) / 2)
    pair = crop_and_standardize(RDMap(z), RDMap(z), 96, 96)
    assert pair.interfered.scale == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(pair.interfered.data, z, atol=1e-12)


def test_crop_statistics_and_sharing():
    rng = np.random.default_rng(2)
    x = 3 + 2j + 5 * (rng.standard_normal((128, 128)) + 1j * rng.standard_normal((128, 128)))
    y = rng.standard_normal((128, 128)) + 1j * rng.standard_normal((128, 128))
    pair = crop_and_standardize(RDMap(x), RDMap(y), 96, 96)
    out = pair.interfered.data
    assert out.shape == (96, 96)
    assert abs(out.mean()) < 1e-12
    assert abs(np.mean(np.concatenate([out.real.ravel(), out.imag.ravel()]) ** 2) - 1) < 1e-9
    # target uses the interfered statistics
    assert pair.clean.mean == pair.interfered.mean
    assert pair.clean.scale == pair.interfered.scale
    # crop anchored at range 0, centred in Doppler
    assert np.allclose(pair.clean.physical(), y[:96, 16:112], rtol=1e-12)


def test_standardize_invertible():
    rng = np.random.default_rng(3)
    x = 1e3 * (rng.standard_normal((40, 30)) + 1j * rng.standard_normal((40, 30))) + 7j
    s, mean, scale = standardize(x)
    back = RDMap(s, True, mean, scale).unstandardize().data
    assert np.max(np.abs(back - x)) <= 1e-12 * np.max(np.abs(x))


# ---------------------------------------------------------------- datasets

def test_generate_deterministic():
    p = RadarParams()
    a = generate_dataset(1, p, seed=42)[0]
    b = generate_dataset(1, p, seed=42)[0]
    assert np.array_equal(a.interfered.data, b.interfered.data)
    assert np.array_equal(a.clean.data, b.clean.data)
    assert a.truth_cells == b.truth_cells


def test_generate_streams_independent_of_count():
    p = RadarParams()
    a = generate_dataset(3, p, seed=5)
    b = generate_dataset(1, p, seed=5)
    assert np.array_equal(a[0].interfered.data, b[0].interfered.data)


def test_generate_without_interference():
    dist = SceneDistribution(n_interferers=(0, 0))
    for pair in generate_dataset(3, RadarParams(), dist, seed=1):
        assert np.array_equal(pair.interfered.data, pair.clean.data)


def test_generate_count_validation():
    with pytest.raises(DomainError):
        generate_dataset(0, RadarParams())


def test_object_count_histogram():
    p = RadarParams()
    dist = SceneDistribution()
    counts = np.zeros(21, int)
    for ss in sample_seeds(9, 2500):
        scene = sample_scene(dist, p, np.random.default_rng(ss), 0)
        counts[len(scene.objects)] += 1
    assert counts[0] == 0
    obs = counts[1:]
    prob = 1 / 20
    sigma = np.sqrt(2500 * prob * (1 - prob))
    assert np.all(np.abs(obs - 2500 * prob) <= 3 * sigma)
    from scipy.stats import chisquare
    assert chisquare(obs).pvalue > 1e-3


def test_truth_cells_dedup_and_crop():
    p = RadarParams()
    objs = [ObjectSpec(0.25, 0.0), ObjectSpec(0.2501, 0.0001), ObjectSpec(0.1, 0.45)]
    # third object lies outside the 96-wide Doppler crop
    assert truth_cells(objs, p, 96, 96) == [(32, 48)]
    assert truth_cells(objs, p) == [(32, 64), (13, 122)]
