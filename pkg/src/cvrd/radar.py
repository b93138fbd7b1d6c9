"""FMCW/chirp-sequence frame simulation and range-Doppler processing.

A frame is an ``N x M`` complex matrix: ``N`` fast-time samples (axis 0) for
each of ``M`` ramps (axis 1).  Objects are 2-D complex exponentials, the
interference of another radar is a chirp burst that is only visible while the
difference frequency between both chirps lies inside the IF band, and receiver
noise is circular complex Gaussian.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, DomainError

__all__ = [
    "RadarParams",
    "ObjectSpec",
    "InterfererSpec",
    "Scene",
    "IFMatrix",
    "RDMap",
    "SamplePair",
    "SceneDistribution",
    "object_component",
    "interference_component",
    "interference_support",
    "synthesize_if",
    "range_spectrum",
    "doppler_spectrum",
    "range_doppler_map",
    "crop_window",
    "crop_rd",
    "standardize",
    "crop_and_standardize",
    "truth_cells",
    "sample_scene",
    "simulate_frames",
    "make_pair",
    "sample_seeds",
    "generate_dataset",
]

_WINDOWS = ("rect", "hann")


@dataclass(frozen=True)
class RadarParams:
    """Transmit and sampling parameters of the ego radar."""

    n_fast: int = 128
    n_ramps: int = 128
    sample_rate_hz: float = 20e6
    ramp_duration_s: float = 8e-6
    chirp_start_hz: float = 77e9
    chirp_slope_hz_per_s: float = 1.25e14
    if_bandwidth_hz: float = 10e6
    window: str = "hann"

    def __post_init__(self):
        if self.n_fast < 8 or self.n_ramps < 8:
            raise DomainError("need at least 8 fast-time samples and 8 ramps")
        if not (self.sample_rate_hz > 0 and self.ramp_duration_s > 0):
            raise DomainError("sample rate and ramp duration must be positive")
        if not self.chirp_start_hz > 0:
            raise DomainError("chirp start frequency must be positive")
        if not self.if_bandwidth_hz > 0:
            raise DomainError("IF bandwidth must be positive")
        # small slack so that e.g. 20e6 * 6.4e-6 == 128 survives rounding
        if self.sample_rate_hz * self.ramp_duration_s < self.n_fast * (1 - 1e-9):
            raise DomainError("ramp too short for n_fast samples")
        if self.if_bandwidth_hz > self.sample_rate_hz / 2:
            raise DomainError("IF bandwidth exceeds Nyquist")
        if self.window not in _WINDOWS:
            raise DomainError(f"unknown window {self.window!r}")

    @property
    def shape(self):
        return (self.n_fast, self.n_ramps)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ObjectSpec:
    """One reflecting object, given by its normalised beat and Doppler frequency."""

    beat_freq_norm: float
    doppler_freq_norm: float
    amplitude: float = 1.0
    phase_rad: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.beat_freq_norm < 0.5:
            raise DomainError(f"beat_freq_norm {self.beat_freq_norm} not in [0, 0.5)")
        if not -0.5 <= self.doppler_freq_norm < 0.5:
            raise DomainError(
                f"doppler_freq_norm {self.doppler_freq_norm} not in [-0.5, 0.5)")
        if not (np.isfinite(self.amplitude) and self.amplitude > 0):
            raise DomainError("object amplitude must be finite and positive")
        if not np.isfinite(self.phase_rad):
            raise DomainError("object phase must be finite")


@dataclass(frozen=True)
class InterfererSpec:
    """A non-coherent interfering chirp.

    ``time_offset_s`` is the interferer's chirp time at the start of ego ramp 0;
    ``ramp_drift_s`` is how much that offset grows from one ego ramp to the next
    (ego ramp period minus interferer ramp period).
    """

    chirp_slope_hz_per_s: float
    chirp_start_hz: float
    time_offset_s: float = 0.0
    amplitude: float = 1.0
    phase_rad: float = 0.0
    ramp_drift_s: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude > 0):
            raise DomainError("interferer amplitude must be finite and positive")


@dataclass(frozen=True)
class Scene:
    objects: tuple = ()
    interferers: tuple = ()
    noise_std: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "interferers", tuple(self.interferers))
        if len(self.objects) > 64:
            raise DomainError("at most 64 objects per scene")
        if len(self.interferers) > 8:
            raise DomainError("at most 8 interferers per scene")
        if not self.noise_std >= 0:
            raise DomainError("noise_std must be >= 0")
        if self.rng_seed < 0:
            raise DomainError("rng_seed must be unsigned")


@dataclass
class IFMatrix:
    data: np.ndarray
    params: RadarParams

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != self.params.shape:
            raise DomainError(
                f"IF data shape {self.data.shape} != {self.params.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DomainError("IF data contains non-finite entries")

    def __add__(self, other):
        return IFMatrix(self.data + other.data, self.params)

    def __sub__(self, other):
        return IFMatrix(self.data - other.data, self.params)


@dataclass
class RDMap:
    """Complex range-Doppler spectrum, optionally standardised.

    A standardised map stores ``(physical - mean) / scale``; ``mean`` and
    ``scale`` are kept so the physical values can be restored exactly.
    """

    data: np.ndarray
    standardized: bool = False
    mean: complex = 0j
    scale: float = 1.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if not self.scale > 0:
            raise DomainError("RDMap scale must be positive")

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def physical(self):
        """Values on the original (unstandardised) scale."""
        if not self.standardized:
            return self.data
        return self.data * self.scale + self.mean

    def unstandardize(self):
        return RDMap(self.physical(), standardized=False)

    def with_data(self, data):
        """Same standardisation statistics, new values."""
        return RDMap(data, self.standardized, self.mean, self.scale)


@dataclass
class SamplePair:
    interfered: RDMap
    clean: RDMap
    truth_cells: list = field(default_factory=list)


@dataclass(frozen=True)
class SceneDistribution:
    """Randomisation of scenes for dataset generation.

    Object amplitudes are log-uniform over ``amplitude_span_db`` below
    ``max_amplitude``; interferers are ``interferer_db`` above the strongest
    object of the scene.  Bursts last ``burst_samples`` fast-time samples and
    the burst position drifts by ``drift_frames`` fast-time spans across the
    frame, so each interferer hits only part of the ramps.
    """

    n_objects: tuple = (1, 20)
    max_amplitude: float = 1.0
    amplitude_span_db: float = 30.0
    beat_range: tuple = (0.02, 0.47)
    doppler_range: tuple = (-0.35, 0.35)
    min_separation: int = 0
    interfered_probability: float = 1.0
    n_interferers: tuple = (1, 3)
    interferer_db: tuple = (10.0, 30.0)
    burst_samples: tuple = (4.0, 24.0)
    drift_frames: tuple = (0.5, 4.0)
    noise_std: float = 0.2

    def __post_init__(self):
        lo, hi = self.n_objects
        if not 0 <= lo <= hi <= 64:
            raise DomainError("n_objects range must lie in [0, 64]")
        lo, hi = self.n_interferers
        if not 0 <= lo <= hi <= 8:
            raise DomainError("n_interferers range must lie in [0, 8]")
        if not 0.0 <= self.interfered_probability <= 1.0:
            raise DomainError("interfered_probability must be a probability")

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v
                for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) if isinstance(v, list) else v
                      for k, v in d.items()})


def object_component(obj: ObjectSpec, p: RadarParams) -> IFMatrix:
    """IF contribution of one object: a 2-D complex exponential."""
    if not isinstance(obj, ObjectSpec):
        raise DomainError("expected an ObjectSpec")
    n = np.arange(p.n_fast)[:, None]
    m = np.arange(p.n_ramps)[None, :]
    arg = 2 * np.pi * (obj.beat_freq_norm * n + obj.doppler_freq_norm * m) + obj.phase_rad
    return IFMatrix(obj.amplitude * np.exp(1j * arg), p)


def _difference_terms(intf: InterfererSpec, p: RadarParams):
    slope_diff = intf.chirp_slope_hz_per_s - p.chirp_slope_hz_per_s
    if slope_diff == 0:
        raise DomainError("equal chirp slopes (coherent interference) are not supported")
    t = np.arange(p.n_fast) / p.sample_rate_hz
    d = intf.time_offset_s + np.arange(p.n_ramps) * intf.ramp_drift_s
    # difference frequency at t=0 of every ramp
    f_diff0 = (intf.chirp_start_hz - p.chirp_start_hz) + intf.chirp_slope_hz_per_s * d
    return slope_diff, t, d, f_diff0


def interference_support(intf: InterfererSpec, p: RadarParams):
    """Analytic per-ramp time interval where the difference frequency is in band.

    Returns ``(t_lo, t_hi)`` arrays of length ``M`` (seconds from ramp start),
    the solution of ``|f_diff0 + slope_diff * t| <= B``.
    """
    slope_diff, _, _, f_diff0 = _difference_terms(intf, p)
    b = p.if_bandwidth_hz
    ta = (-b - f_diff0) / slope_diff
    tb = (b - f_diff0) / slope_diff
    return np.minimum(ta, tb), np.maximum(ta, tb)


def interference_component(intf: InterfererSpec, p: RadarParams) -> IFMatrix:
    """IF contribution of one interferer.

    Per ramp the interferer is a linear chirp whose difference frequency with the
    ego chirp sweeps linearly; samples whose difference frequency falls outside
    the IF band are zero, the rest carry the mixed chirp phase.
    """
    slope_diff, t, d, f_diff0 = _difference_terms(intf, p)
    f_diff = f_diff0[None, :] + slope_diff * t[:, None]
    inside = np.abs(f_diff) <= p.if_bandwidth_hz

    # Phase in cycles of interferer(t + d) minus ego(t); the carrier term f0_I * d
    # is reduced modulo 1 per ramp to keep precision.
    k_i, k_e = intf.chirp_slope_hz_per_s, p.chirp_slope_hz_per_s
    tt = t[:, None]
    dd = d[None, :]
    carrier = np.mod(intf.chirp_start_hz * d, 1.0)[None, :]
    cycles = ((intf.chirp_start_hz - p.chirp_start_hz) * tt + carrier
              + 0.5 * k_i * (tt + dd) ** 2 - 0.5 * k_e * tt ** 2)
    phase = 2 * np.pi * np.mod(cycles, 1.0) + intf.phase_rad
    data = np.where(inside, intf.amplitude * np.exp(1j * phase), 0)
    return IFMatrix(data, p)


def synthesize_if(scene: Scene, p: RadarParams):
    """Clean and interfered IF frames of a scene.

    Both frames share the same noise draw, so ``interfered - clean`` is exactly
    the sum of the interference components.
    """
    clean = np.zeros(p.shape, dtype=complex)
    for obj in scene.objects:
        clean += object_component(obj, p).data
    if scene.noise_std > 0:
        rng = np.random.default_rng(scene.rng_seed)
        noise = rng.standard_normal(p.shape) + 1j * rng.standard_normal(p.shape)
        clean += scene.noise_std * noise
    interference = np.zeros(p.shape, dtype=complex)
    for intf in scene.interferers:
        interference += interference_component(intf, p).data
    return IFMatrix(clean, p), IFMatrix(clean + interference, p)


def _window(name, n):
    if name == "rect":
        return None
    return np.hanning(n)


def range_spectrum(s: IFMatrix) -> np.ndarray:
    """First DFT stage: fast time to range, per ramp."""
    x = s.data
    w = _window(s.params.window, s.params.n_fast)
    if w is not None:
        x = x * w[:, None]
    return np.fft.fft(x, axis=0)


def doppler_spectrum(s_r: np.ndarray, window="rect") -> np.ndarray:
    """Second DFT stage: slow time to Doppler, zero velocity centred."""
    w = _window(window, s_r.shape[1])
    if w is not None:
        s_r = s_r * w[None, :]
    return np.fft.fftshift(np.fft.fft(s_r, axis=1), axes=1)


def range_doppler_map(s: IFMatrix) -> RDMap:
    """Two-stage DFT of an IF frame (unstandardised)."""
    return RDMap(doppler_spectrum(range_spectrum(s), s.params.window))


def crop_window(shape, n_keep, m_keep):
    """Slices of the crop: range from bin 0, Doppler centred on zero velocity."""
    n, m = shape
    if not (1 <= n_keep <= n and 1 <= m_keep <= m):
        raise DomainError(f"cannot crop {shape} to ({n_keep}, {m_keep})")
    start = m // 2 - m_keep // 2
    return slice(0, n_keep), slice(start, start + m_keep)


def crop_rd(data, n_keep, m_keep):
    rows, cols = crop_window(np.shape(data), n_keep, m_keep)
    return np.asarray(data)[rows, cols]


def standardize(data):
    """Return ``(standardised, mean, scale)``.

    ``mean`` is the complex mean; ``scale`` the standard deviation of the pooled
    real and imaginary parts after removing it.
    """
    data = np.asarray(data, dtype=complex)
    mean = data.mean()
    centered = data - mean
    scale = float(np.sqrt(np.mean(centered.real ** 2 + centered.imag ** 2) / 2))
    if not scale > 1e-12 * abs(mean) or scale == 0:
        raise DegenerateInputError("map has zero variance; cannot standardise")
    return centered / scale, complex(mean), scale


def crop_and_standardize(rd_in: RDMap, rd_target: RDMap, n_keep=96, m_keep=96) -> SamplePair:
    """Crop both maps identically and scale them with the input map's statistics."""
    if rd_in.shape != rd_target.shape:
        raise DomainError("input and target maps differ in shape")
    x = crop_rd(rd_in.physical(), n_keep, m_keep)
    y = crop_rd(rd_target.physical(), n_keep, m_keep)
    xs, mean, scale = standardize(x)
    ys = (y - mean) / scale
    return SamplePair(RDMap(xs, True, mean, scale), RDMap(ys, True, mean, scale))


def truth_cells(objects: Sequence[ObjectSpec], p: RadarParams, n_keep=None, m_keep=None):
    """Nearest RD cell of each object, in crop coordinates, deduplicated in order."""
    n_keep = p.n_fast if n_keep is None else n_keep
    m_keep = p.n_ramps if m_keep is None else m_keep
    rows, cols = crop_window(p.shape, n_keep, m_keep)
    cells = []
    for obj in objects:
        n = int(np.round(obj.beat_freq_norm * p.n_fast)) % p.n_fast
        m = (int(np.round(obj.doppler_freq_norm * p.n_ramps)) + p.n_ramps // 2) % p.n_ramps
        if rows.start <= n < rows.stop and cols.start <= m < cols.stop:
            cell = (n - rows.start, m - cols.start)
            if cell not in cells:
                cells.append(cell)
    return cells


def _sample_objects(dist: SceneDistribution, p: RadarParams, rng):
    count = int(rng.integers(dist.n_objects[0], dist.n_objects[1] + 1))
    objects = []
    cells = []
    attempts = 0
    while len(objects) < count and attempts < 100 * (count + 1):
        attempts += 1
        beat = rng.uniform(*dist.beat_range)
        dop = rng.uniform(*dist.doppler_range)
        cell = np.array([beat * p.n_fast, dop * p.n_ramps])
        if dist.min_separation > 0 and any(
                np.max(np.abs(cell - c)) < dist.min_separation for c in cells):
            continue
        amp_db = rng.uniform(0.0, dist.amplitude_span_db)
        objects.append(ObjectSpec(
            beat_freq_norm=float(beat),
            doppler_freq_norm=float(dop),
            amplitude=float(dist.max_amplitude * 10 ** (-amp_db / 20)),
            phase_rad=float(rng.uniform(0, 2 * np.pi)),
        ))
        cells.append(cell)
    return objects


def _sample_interferer(dist: SceneDistribution, p: RadarParams, rng, ref_amplitude):
    fs = p.sample_rate_hz
    span = p.n_fast / fs
    burst = rng.uniform(*dist.burst_samples)
    slope_diff = 2 * p.if_bandwidth_hz * fs / burst * rng.choice([-1.0, 1.0])
    k_i = p.chirp_slope_hz_per_s + slope_diff
    # burst centre in ramp 0 and its drift over the whole frame
    t_cross0 = rng.uniform(-0.25, 1.25) * span
    drift_total = rng.uniform(*dist.drift_frames) * span * rng.choice([-1.0, 1.0])
    cross_step = drift_total / p.n_ramps
    ramp_drift = -cross_step * slope_diff / k_i
    offset = rng.uniform(0.0, p.ramp_duration_s)
    f_diff0 = -slope_diff * t_cross0 - k_i * offset
    amp_db = rng.uniform(*dist.interferer_db)
    return InterfererSpec(
        chirp_slope_hz_per_s=float(k_i),
        chirp_start_hz=float(p.chirp_start_hz + f_diff0),
        time_offset_s=float(offset),
        amplitude=float(ref_amplitude * 10 ** (amp_db / 20)),
        phase_rad=float(rng.uniform(0, 2 * np.pi)),
        ramp_drift_s=float(ramp_drift),
    )


def sample_scene(dist: SceneDistribution, p: RadarParams, rng, noise_seed: int) -> Scene:
    """Draw one random scene; ``noise_seed`` seeds the scene's own noise."""
    objects = _sample_objects(dist, p, rng)
    interferers = []
    if rng.uniform() < dist.interfered_probability:
        n_i = int(rng.integers(dist.n_interferers[0], dist.n_interferers[1] + 1))
        ref = max((o.amplitude for o in objects), default=dist.max_amplitude)
        interferers = [_sample_interferer(dist, p, rng, ref) for _ in range(n_i)]
    return Scene(objects, interferers, dist.noise_std, int(noise_seed))


def sample_seeds(seed, count, stream=0):
    """Per-sample seed sequences; independent of how samples are distributed."""
    root = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return root.spawn(count)


def simulate_frames(p: RadarParams, dist: SceneDistribution, seed_seq):
    """Scene plus clean and interfered IF frames for one sample seed."""
    scene_rng = np.random.default_rng(seed_seq)
    noise_seed = int(seed_seq.generate_state(1, dtype=np.uint32)[0])
    scene = sample_scene(dist, p, scene_rng, noise_seed)
    clean, interfered = synthesize_if(scene, p)
    return scene, clean, interfered


def make_pair(scene: Scene, clean: IFMatrix, interfered: IFMatrix, n_keep=96, m_keep=96):
    pair = crop_and_standardize(range_doppler_map(interfered), range_doppler_map(clean),
                                n_keep, m_keep)
    pair.truth_cells = truth_cells(scene.objects, clean.params, n_keep, m_keep)
    return pair


def generate_dataset(count: int, p: RadarParams, scene_dist: SceneDistribution = None,
                     seed: int = 0, n_keep=96, m_keep=96, stream=0):
    """Simulate ``count`` standardised training pairs, deterministic in ``seed``."""
    if count < 1:
        raise DomainError("count must be >= 1")
    scene_dist = SceneDistribution() if scene_dist is None else scene_dist
    pairs = []
    for ss in sample_seeds(seed, count, stream):
        scene, clean, interfered = simulate_frames(p, scene_dist, ss)
        pairs.append(make_pair(scene, clean, interfered, n_keep, m_keep))
    return pairs
