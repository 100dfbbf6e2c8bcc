"""Frequency-domain synthetic scene generator with exact ground truth.

Scenes are built directly from the statistical assumptions of the
estimation model: far-field or near-field sources with per-frame random
phases, reverberation as a frozen set of random plane-wave directions with
frame-independent circular complex Gaussian gains, and diffuse noise as a
dense fan of free-field plane waves whose inter-microphone correlation
converges to Phi_z * j0(k * distance).  This makes the modal correlation
model an exact oracle for the rendered scenes.

All randomness is drawn from counter-style seed sequences keyed by
(seed, purpose, index), so rendering is bit-reproducible and independent
of scheduling.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .arraymodal import ConfigurationError, FrequencyGrid, StftConfig, StftSpectra, stft_analyze
from .sphcore import (
    ArrayKind,
    bn_all_orders,
    direction_vector,
    ipow,
    mode_orders,
    num_modes,
    sph_hankel1,
    sh_matrix,
)

FOUR_PI = 4 * math.pi


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceSpec:
    """One source: DOA, optional range (metres) and a spectrum description.

    ``spectrum`` is one of
      {"type": "flat", "level_db": 0.0}
      {"type": "band", "low_hz": f1, "high_hz": f2, "level_db": 0.0}
      {"type": "wav", "path": "..."}
    Analytic spectra have a deterministic amplitude per bin and an
    independent uniform random phase per frame (constant-modulus model).
    """

    theta: float
    phi: float
    range_m: float | None = None
    spectrum: dict = field(default_factory=lambda: {"type": "flat", "level_db": 0.0})


@dataclass(frozen=True)
class ReverbSpec:
    """Aggregate reverberant field description.

    The angular power density is ``g(y) = sum_vu Gamma_vu Y_vu(y)`` with
    ``Gamma_vu = gamma00 * profile_vu``; ``profile`` lists real entries
    [v, u, value] relative to profile_00 = 1 (isotropic by default).
    ``gamma00`` may be given directly (scalar or per bin) or derived from
    a direct-to-reverberant ratio in dB.
    """

    enabled: bool = False
    num_plane_waves: int = 512
    gamma00: float | list | None = None
    drr_db: float | None = None
    profile: tuple = ((0, 0, 1.0),)

    def __post_init__(self):
        if self.enabled and self.gamma00 is None and self.drr_db is None:
            raise ConfigurationError("reverb needs gamma00 or drr_db")
        if self.num_plane_waves < 1:
            raise ConfigurationError("need at least one reverberant plane wave")
        prof = tuple((int(v), int(u), float(val)) for v, u, val in self.profile)
        object.__setattr__(self, "profile", prof)
        if not any(v == 0 and u == 0 for v, u, _ in prof):
            raise ConfigurationError("reverb profile must include the (0, 0) term")

    @property
    def v_order(self):
        return max(v for v, _, _ in self.profile)


@dataclass(frozen=True)
class NoiseSpec:
    """Diffuse coherent-noise description.

    ``psd`` (scalar or per bin) or ``snr_db`` relative to the summed
    source PSDs; the noise occupies [0, band_hz].
    """

    enabled: bool = False
    psd: float | list | None = None
    snr_db: float | None = None
    band_hz: float = 1000.0
    num_plane_waves: int = 256

    def __post_init__(self):
        if self.enabled and self.psd is None and self.snr_db is None:
            raise ConfigurationError("noise needs psd or snr_db")
        if self.num_plane_waves < 192:
            raise ConfigurationError("diffuse noise needs at least 192 plane waves")


@dataclass(frozen=True)
class SceneConfig:
    sources: tuple
    num_frames: int = 500
    reverb: ReverbSpec = field(default_factory=ReverbSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if len(self.sources) < 1:
            raise ConfigurationError("scene needs at least one source")
        if self.num_frames < 2:
            raise ConfigurationError("scene needs at least two frames")

    @property
    def num_sources(self):
        return len(self.sources)


@dataclass
class GroundTruth:
    """Exact per-component reference values for a rendered scene.

    ``phi_sources`` holds the per-frame source PSDs |S_l(tau, k)|^2 at the
    origin (unit direct-path gain for far-field sources; for near-field
    sources this is the source-strength convention of the near-field
    direct-path model).  ``gamma_true`` is the target reverberant-power
    profile per bin, ``realized_profile`` the direction-sampled one.
    """

    phi_sources: np.ndarray          # (frames, bins, L)
    gamma_true: np.ndarray           # (bins, (V_true+1)^2)
    realized_profile: np.ndarray     # ((V_true+1)^2,) complex, per unit gamma00
    phi_noise: np.ndarray            # (bins,)
    stems_stft: np.ndarray           # (frames, bins, L) origin signals
    seed: int = 0

    @property
    def phi_reverb(self):
        """Total reverberant PSD per bin, Gamma_00 / sqrt(4*pi)."""
        return self.gamma_true[:, 0] / math.sqrt(FOUR_PI)

    @property
    def num_sources(self):
        return self.phi_sources.shape[2]


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

_STREAM_SOURCE = 1
_STREAM_REVERB_DIRS = 2
_STREAM_REVERB_GAIN = 3
_STREAM_NOISE_GAIN = 4


def _rng(seed, purpose, index=0):
    return np.random.default_rng(np.random.SeedSequence((int(seed), purpose, index)))


def _complex_normal(rng, shape):
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# field synthesis primitives
# ---------------------------------------------------------------------------

def _sim_order(k, radius):
    """Truncation order for rigid-sphere synthesis, ceil(k*e*r) + 4."""
    return int(math.ceil(k * math.e * radius)) + 4


def _plane_wave_steering(directions, geometry, k):
    """Pressure at each microphone for unit plane waves, shape (R, Q).

    Open arrays evaluate exp(i k y.x) directly; rigid arrays use the
    scattering-corrected modal sum truncated well above k*e*r.
    """
    mic_u = geometry.unit_vectors
    if geometry.kind is ArrayKind.OPEN or k <= 0:
        phase = k * geometry.radius * (directions @ mic_u.T)
        return np.exp(1j * phase)
    order = _sim_order(k, geometry.radius)
    b = bn_all_orders(order, k * geometry.radius, geometry.kind)
    coeffs = ipow(np.arange(order + 1)) * (2 * np.arange(order + 1) + 1) * b
    cosg = np.clip(directions @ mic_u.T, -1.0, 1.0)
    return np.polynomial.legendre.legval(cosg, coeffs)


def synth_plane_wave(doa, amplitude, geometry, grid):
    """Microphone pressures for a far-field plane wave per bin.

    Parameters
    ----------
    doa : (theta, phi)
    amplitude : complex ndarray of shape (bins,) or (frames, bins)
        Source STFT values S(tau, k).

    Returns
    -------
    ndarray of shape (..., bins, Q)
    """
    d = direction_vector(*doa)[None, :]
    steer = np.stack(
        [_plane_wave_steering(d, geometry, kk)[0] for kk in grid.k]
    )  # (bins, Q)
    amp = np.asarray(amplitude)
    return amp[..., None] * steer


def _point_source_steering(doa, range_m, geometry, k):
    """Pressure at each microphone for a unit-strength point source."""
    if range_m <= geometry.radius:
        raise ValueError("point source must lie outside the array sphere")
    mic_u = geometry.unit_vectors
    src = range_m * direction_vector(*doa)
    if geometry.kind is ArrayKind.OPEN:
        dist = np.linalg.norm(geometry.radius * mic_u - src[None, :], axis=-1)
        return np.exp(1j * k * dist) / (FOUR_PI * dist)
    order = _sim_order(k, geometry.radius)
    n = np.arange(order + 1)
    h = np.array([sph_hankel1(nn, k * range_m) for nn in n])
    b = bn_all_orders(order, k * geometry.radius, geometry.kind)
    coeffs = 1j * k * h * b * (2 * n + 1) / FOUR_PI
    cosg = np.clip((src / range_m) @ mic_u.T, -1.0, 1.0)
    return np.polynomial.legendre.legval(cosg, coeffs)


def synth_point_source(position, amplitude, geometry, grid):
    """Microphone pressures for a near-field point source per bin.

    ``position`` is (range_m, theta, phi).  For an open array the
    free-space Green's function is evaluated directly; the rigid-array
    modal synthesis matches it in the open limit.
    """
    range_m, th, ph = position
    steer = np.stack(
        [
            _point_source_steering((th, ph), range_m, geometry, kk)
            if kk > 0
            else np.zeros(geometry.num_mics, dtype=complex)
            for kk in grid.k
        ]
    )
    amp = np.asarray(amplitude)
    return amp[..., None] * steer


def _uniform_directions(rng, count):
    z = rng.uniform(-1.0, 1.0, count)
    phi = rng.uniform(0.0, 2 * np.pi, count)
    s = np.sqrt(1 - z**2)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def _fibonacci_directions(count):
    i = np.arange(count)
    z = 1 - (2 * i + 1) / count
    golden = np.pi * (3 - math.sqrt(5))
    phi = golden * i
    s = np.sqrt(np.maximum(0.0, 1 - z**2))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def _profile_gamma(profile, v_order):
    gam = np.zeros(num_modes(v_order))
    for v, u, val in profile:
        gam[v * v + v + u] = val
    return gam


def synth_reverb_field(gamma00_per_bin, profile, num_waves, num_frames, geometry, grid, seed):
    """Reverberant pressures realising a target angular power profile.

    ``num_waves`` plane-wave directions are drawn once (frozen) uniformly
    at random; their per-direction expected powers follow the profile's
    angular density so the realized Gamma_vu matches the request in
    expectation.  Gains are circular complex Gaussian, independent per
    frame, bin and direction.

    Returns
    -------
    pressures : (frames, bins, Q) complex
    realized_profile : ((max(V, 2)+1)^2,) complex
        Direction-sampled Gamma_vu per unit gamma00; orders above the
        target profile expose the direction-sampling leakage.
    """
    rng_dirs = _rng(seed, _STREAM_REVERB_DIRS)
    dirs = _uniform_directions(rng_dirs, num_waves)
    v_order = max(v for v, _, _ in profile)
    v_report = max(v_order, 2)
    gam_unit = _profile_gamma(profile, v_order)
    th = np.arccos(np.clip(dirs[:, 2], -1, 1))
    ph = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2 * np.pi)
    Yd = sh_matrix(v_report, th, ph)  # (R, G_report)
    density = (Yd[:, : num_modes(v_order)] @ gam_unit).real
    if np.min(density) < -1e-9 * max(1.0, np.max(np.abs(density))):
        raise ConfigurationError("reverb profile has negative angular power")
    density = np.maximum(density, 0.0)
    sigma2_unit = FOUR_PI / num_waves * density  # per unit gamma00
    realized = Yd.conj().T @ sigma2_unit  # Gamma_vu per unit gamma00

    bins_ = grid.num_bins
    out = np.zeros((num_frames, bins_, geometry.num_mics), dtype=complex)
    gamma00_per_bin = np.broadcast_to(np.asarray(gamma00_per_bin, dtype=float), (bins_,))
    for b, kk in enumerate(grid.k):
        if kk <= 0 or gamma00_per_bin[b] <= 0 or b == bins_ - 1:
            continue
        steer = _plane_wave_steering(dirs, geometry, kk)  # (R, Q)
        gains = _complex_normal(_rng(seed, _STREAM_REVERB_GAIN, b), (num_frames, num_waves))
        gains *= np.sqrt(gamma00_per_bin[b] * sigma2_unit)[None, :]
        out[:, b, :] = gains @ steer
    return out, realized


def synth_diffuse_noise(psd_per_bin, num_waves, num_frames, geometry, grid, seed):
    """Diffuse-noise pressures with correlation Phi_z * j0(k * distance).

    A dense fan of plane waves on a deterministic near-uniform direction
    set, free-field propagation (no scattering) so the inter-microphone
    correlation follows the sinc law of the diffuse model exactly, with
    independent circular complex Gaussian gains per frame and bin.
    """
    dirs = _fibonacci_directions(num_waves)
    bins_ = grid.num_bins
    out = np.zeros((num_frames, bins_, geometry.num_mics), dtype=complex)
    psd_per_bin = np.broadcast_to(np.asarray(psd_per_bin, dtype=float), (bins_,))
    mic_u = geometry.unit_vectors
    for b, kk in enumerate(grid.k):
        if kk <= 0 or psd_per_bin[b] <= 0 or b == bins_ - 1:
            continue
        steer = np.exp(1j * kk * geometry.radius * (dirs @ mic_u.T))  # (R, Q)
        gains = _complex_normal(_rng(seed, _STREAM_NOISE_GAIN, b), (num_frames, num_waves))
        out[:, b, :] = math.sqrt(psd_per_bin[b] / num_waves) * (gains @ steer)
    return out


# ---------------------------------------------------------------------------
# scene rendering
# ---------------------------------------------------------------------------

def _source_amplitude(spec, grid, stft_config):
    """Deterministic amplitude per bin for an analytic spectrum."""
    bins_ = grid.num_bins
    amp = np.zeros(bins_)
    level = 10 ** (spec.get("level_db", 0.0) / 20)
    kind = spec.get("type", "flat")
    if kind == "flat":
        amp[:] = level
    elif kind == "band":
        f = grid.freq_hz
        lo = spec.get("low_hz", 0.0)
        hi = spec.get("high_hz", f[-1])
        amp[(f >= lo) & (f <= hi)] = level
    else:
        raise ConfigurationError(f"unknown analytic spectrum type {kind!r}")
    amp[0] = 0.0
    amp[-1] = 0.0
    return amp


def _source_frames(spec_dict, num_frames, grid, stft_config, seed, index):
    """Per-frame source STFT values S(tau, k) for one source."""
    kind = spec_dict.get("type", "flat")
    if kind == "wav":
        from .audioio import read_wav

        fs, data = read_wav(spec_dict["path"])
        if fs != stft_config.sample_rate:
            raise ConfigurationError(
                f"wav sample rate {fs} does not match config {stft_config.sample_rate}"
            )
        mono = data[:, 0] if data.ndim == 2 else data
        spectra = stft_analyze(mono, stft_config)
        s = spectra.data[:, :, 0]
        if s.shape[0] < num_frames:
            reps = int(np.ceil(num_frames / s.shape[0]))
            s = np.tile(s, (reps, 1))
        s = s[:num_frames].copy()
        s[:, 0] = 0.0
        s[:, -1] = 0.0
        return s
    amp = _source_amplitude(spec_dict, grid, stft_config)
    rng = _rng(seed, _STREAM_SOURCE, index)
    phases = rng.uniform(0.0, 2 * np.pi, (num_frames, grid.num_bins))
    return amp[None, :] * np.exp(1j * phases)


def render_scene(config, geometry, grid, stft_config=None):
    """Render a scene to microphone STFT spectra plus exact ground truth.

    Superposes per-source direct fields, the reverberant plane-wave fan
    and diffuse noise per frame and bin.  Fixed seeds give bit-identical
    output.

    Returns
    -------
    (StftSpectra, GroundTruth)
    """
    if stft_config is None:
        stft_config = StftConfig(sample_rate=grid.sample_rate, fft_size=grid.fft_size)
    if stft_config.fft_size != grid.fft_size:
        raise ConfigurationError("stft config and frequency grid disagree on fft_size")
    frames = config.num_frames
    bins_ = grid.num_bins
    L = config.num_sources
    Q = geometry.num_mics

    stems = np.zeros((frames, bins_, L), dtype=complex)
    pressure = np.zeros((frames, bins_, Q), dtype=complex)
    phi_sources = np.zeros((frames, bins_, L))

    for ell, src in enumerate(config.sources):
        s = _source_frames(src.spectrum, frames, grid, stft_config, config.seed, ell)
        phi_sources[:, :, ell] = np.abs(s) ** 2
        if src.range_m is None:
            pressure += synth_plane_wave((src.theta, src.phi), s, geometry, grid)
            stems[:, :, ell] = s
        else:
            pressure += synth_point_source((src.range_m, src.theta, src.phi), s, geometry, grid)
            k = grid.k
            g0 = np.zeros(bins_, dtype=complex)
            pos = k > 0
            g0[pos] = np.exp(1j * k[pos] * src.range_m) / (FOUR_PI * src.range_m)
            stems[:, :, ell] = s * g0[None, :]

    v_order = config.reverb.v_order if config.reverb.enabled else 0
    gamma_true = np.zeros((bins_, num_modes(v_order)))
    realized = np.zeros(num_modes(max(v_order, 2)), dtype=complex)
    if config.reverb.enabled:
        gamma00 = _resolve_gamma00(config.reverb, phi_sources, bins_)
        prof = _profile_gamma(config.reverb.profile, v_order)
        gamma_true = gamma00[:, None] * prof[None, :]
        rev, realized = synth_reverb_field(
            gamma00,
            config.reverb.profile,
            config.reverb.num_plane_waves,
            frames,
            geometry,
            grid,
            config.seed,
        )
        pressure += rev

    phi_noise = np.zeros(bins_)
    if config.noise.enabled:
        phi_noise = _resolve_noise_psd(config.noise, phi_sources, grid)
        pressure += synth_diffuse_noise(
            phi_noise, config.noise.num_plane_waves, frames, geometry, grid, config.seed
        )

    num_samples = max((frames - 1) * stft_config.hop - stft_config.window_len, 0)
    spectra = StftSpectra(data=pressure, config=stft_config, num_samples=num_samples)
    truth = GroundTruth(
        phi_sources=phi_sources,
        gamma_true=gamma_true,
        realized_profile=realized,
        phi_noise=phi_noise,
        stems_stft=stems,
        seed=config.seed,
    )
    return spectra, truth


def _resolve_gamma00(reverb, phi_sources, bins_):
    if reverb.gamma00 is not None:
        return np.broadcast_to(np.asarray(reverb.gamma00, dtype=float), (bins_,)).copy()
    mean_phi = phi_sources.mean(axis=0).sum(axis=1)  # (bins,)
    phi_r = mean_phi * 10 ** (-reverb.drr_db / 10)
    return math.sqrt(FOUR_PI) * phi_r


def _resolve_noise_psd(noise, phi_sources, grid):
    bins_ = grid.num_bins
    if noise.psd is not None:
        psd = np.broadcast_to(np.asarray(noise.psd, dtype=float), (bins_,)).copy()
    else:
        mean_phi = phi_sources.mean(axis=0).sum(axis=1)
        psd = mean_phi * 10 ** (-noise.snr_db / 10)
    psd[grid.freq_hz > noise.band_hz] = 0.0
    return psd
