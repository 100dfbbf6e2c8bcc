"""Array geometry, STFT analysis/synthesis and modal coefficient estimation.

A spherical microphone array samples the pressure field at Q points on a
sphere of radius r; per STFT bin the sound-field coefficients alpha_nm are
recovered by a weighted spherical-harmonic projection divided by the radial
function b_n.  Near-zeros of |b_n| are regularised by magnitude floors
(phase preserved) so the inversion stays bounded.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .sphcore import (
    ArrayKind,
    bn_radial,
    direction_vector,
    mode_orders,
    num_modes,
    sh_matrix,
)


class ConfigurationError(ValueError):
    """Raised for invalid geometry, STFT or run configurations."""


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions on a sphere with quadrature weights.

    Parameters
    ----------
    radius : float
        Sphere radius in metres (> 0); all microphones share it.
    theta, phi : ndarrays of shape (Q,)
        Colatitude / azimuth of each microphone in radians.
    weights : ndarray of shape (Q,)
        Quadrature weights, sum approximately 4*pi.
    kind : ArrayKind
    """

    radius: float
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    kind: ArrayKind

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "weights", weights)
        if self.radius <= 0:
            raise ConfigurationError("array radius must be positive")
        if theta.ndim != 1 or theta.shape != phi.shape or theta.shape != weights.shape:
            raise ConfigurationError("theta, phi and weights must be 1-D and equal length")
        if theta.size < 1:
            raise ConfigurationError("geometry needs at least one microphone")
        if abs(weights.sum() - 4 * np.pi) > 1e-6 * 4 * np.pi:
            raise ConfigurationError(
                f"quadrature weights must sum to 4*pi (got {weights.sum():.6f})"
            )

    @property
    def num_mics(self):
        return self.theta.size

    @property
    def unit_vectors(self):
        """Microphone direction unit vectors, shape (Q, 3)."""
        return direction_vector(self.theta, self.phi)

    @property
    def positions(self):
        """Cartesian microphone positions in metres, shape (Q, 3)."""
        return self.radius * self.unit_vectors

    def max_supported_order(self):
        """Largest N with (N + 1)**2 <= Q (spatial-aliasing guard)."""
        return int(math.isqrt(self.num_mics)) - 1

    def to_json(self, path):
        payload = {
            "radius_m": self.radius,
            "kind": self.kind.value,
            "mics": [
                {"theta": float(t), "phi": float(p), "weight": float(w)}
                for t, p, w in zip(self.theta, self.phi, self.weights)
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            payload = json.load(fh)
        try:
            mics = payload["mics"]
            return cls(
                radius=float(payload["radius_m"]),
                theta=np.array([m["theta"] for m in mics], dtype=float),
                phi=np.array([m["phi"] for m in mics], dtype=float),
                weights=np.array([m["weight"] for m in mics], dtype=float),
                kind=ArrayKind(payload["kind"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid geometry file {path}: {exc}") from exc


def _pentakis_dodecahedron():
    # 12 icosahedron vertices plus the 20 dual dodecahedron vertices,
    # orientation matched so the union keeps full icosahedral symmetry.
    gold = (1 + math.sqrt(5)) / 2
    ico = []
    for a in (-1.0, 1.0):
        for b in (-gold, gold):
            ico += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    dod = [(sx, sy, sz) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    for a in (-gold, gold):
        for b in (-1 / gold, 1 / gold):
            dod += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    pts = np.array(ico + dod, dtype=float)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def em32_geometry(radius=0.042, kind=ArrayKind.RIGID, equal_weights=False):
    """Bundled 32-microphone pentakis-dodecahedron layout.

    With the default per-orbit weights (5*pi/42 on the 12 icosahedron
    vertices, 9*pi/70 on the 20 dodecahedron vertices) the layout
    integrates spherical harmonics exactly up to degree 9, so the
    orthonormality condition holds to machine precision for N <= 4.
    ``equal_weights=True`` selects the uniform 4*pi/32 weighting instead.
    """
    pts = _pentakis_dodecahedron()
    theta = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
    if equal_weights:
        weights = np.full(32, 4 * np.pi / 32)
    else:
        weights = np.concatenate(
            [np.full(12, 5 * np.pi / 42), np.full(20, 9 * np.pi / 70)]
        )
    return ArrayGeometry(radius=radius, theta=theta, phi=phi, weights=weights, kind=kind)


def orthonormality_error(geometry, max_order):
    """Residual |sum_q w_q Y_nm Y*_n'm' - delta| for all mode pairs.

    Returns a real matrix of shape (M, M), M = (max_order + 1)**2,
    quantifying how well the discrete layout realises the orthonormal
    property of the continuous harmonics.
    """
    Y = sh_matrix(max_order, geometry.theta, geometry.phi)
    gram = (Y * geometry.weights[:, None]).conj().T @ Y
    return np.abs(gram.T - np.eye(num_modes(max_order)))


# ---------------------------------------------------------------------------
# STFT
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StftConfig:
    """Analysis/synthesis configuration; defaults follow the 16 kHz /
    8 ms Hann / 50% overlap / 128-point FFT processing setup."""

    sample_rate: float = 16000.0
    window_len: int = 128
    hop: int = 64
    fft_size: int = 128

    def __post_init__(self):
        if self.window_len > self.fft_size:
            raise ConfigurationError("window length must not exceed fft_size")
        if self.window_len % self.hop != 0:
            raise ConfigurationError("hop must divide the window length")
        w = self.window
        # overlap-add constancy check (COLA): sum of shifted windows
        n_shift = self.window_len // self.hop
        cola = np.zeros(self.hop)
        for j in range(n_shift):
            cola += w[j * self.hop : (j + 1) * self.hop]
        if np.max(np.abs(cola - cola[0])) > 1e-9 or cola[0] <= 0:
            raise ConfigurationError("window/hop combination does not satisfy COLA")
        object.__setattr__(self, "_cola_gain", float(cola[0]))

    @property
    def window(self):
        # periodic Hann
        t = np.arange(self.window_len)
        return 0.5 - 0.5 * np.cos(2 * np.pi * t / self.window_len)

    @property
    def num_bins(self):
        return self.fft_size // 2 + 1

    @property
    def cola_gain(self):
        return self._cola_gain


@dataclass(frozen=True)
class FrequencyGrid:
    """Per-bin frequency and wavenumber axis for an STFT configuration."""

    sample_rate: float
    fft_size: int
    speed_of_sound: float = 343.0

    @property
    def num_bins(self):
        return self.fft_size // 2 + 1

    @property
    def freq_hz(self):
        return np.fft.rfftfreq(self.fft_size, d=1.0 / self.sample_rate)

    @property
    def k(self):
        """Wavenumber 2*pi*f/c per bin, rad/m."""
        return 2 * np.pi * self.freq_hz / self.speed_of_sound

    @classmethod
    def from_stft(cls, config, speed_of_sound=343.0):
        return cls(config.sample_rate, config.fft_size, speed_of_sound)


@dataclass
class StftSpectra:
    """STFT-domain pressure data, shape (frames, bins, channels)."""

    data: np.ndarray
    config: StftConfig
    num_samples: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError("spectra must have shape (frames, bins, channels)")
        if self.data.shape[1] != self.config.num_bins:
            raise ValueError(
                f"bin count {self.data.shape[1]} does not match config "
                f"({self.config.num_bins})"
            )

    @property
    def num_frames(self):
        return self.data.shape[0]

    @property
    def num_channels(self):
        return self.data.shape[2]


def stft_analyze(signals, config):
    """Multichannel STFT with zero-padding of one window at both ends.

    Parameters
    ----------
    signals : ndarray of shape (samples,) or (samples, channels)
    config : StftConfig

    Returns
    -------
    StftSpectra
    """
    x = np.asarray(signals, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("signals must be 1-D or 2-D (samples, channels)")
    n = x.shape[0]
    win = config.window_len
    pad = np.zeros((win, x.shape[1]))
    xp = np.concatenate([pad, x, pad], axis=0)
    n_frames = (xp.shape[0] - win) // config.hop + 1
    offs = np.arange(n_frames) * config.hop
    segs = np.stack([xp[o : o + win] for o in offs])  # (frames, win, ch)
    segs = segs * config.window[None, :, None]
    spec = np.fft.rfft(segs, n=config.fft_size, axis=1)
    return StftSpectra(data=spec, config=config, num_samples=n)


def stft_synthesize(spectra):
    """Inverse STFT by plain overlap-add of the analysis grains.

    Round trip ``stft_synthesize(stft_analyze(x, cfg))`` reconstructs x up
    to floating rounding for any COLA-satisfying configuration.
    """
    cfg = spectra.config
    frames, _, n_ch = spectra.data.shape
    grains = np.fft.irfft(spectra.data, n=cfg.fft_size, axis=1)
    out_len = (frames - 1) * cfg.hop + cfg.fft_size
    y = np.zeros((out_len, n_ch))
    for i in range(frames):
        o = i * cfg.hop
        y[o : o + cfg.fft_size] += grains[i]
    y /= cfg.cola_gain
    start = cfg.window_len
    n = spectra.num_samples or out_len - 2 * cfg.window_len
    return y[start : start + n]


# ---------------------------------------------------------------------------
# truncation order and Bessel-zero floors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BesselFloorPolicy:
    """Minimum sound-field order and magnitude floors for b_n.

    ``n_min`` keeps extra low-frequency modes active; for orders
    1 <= n <= n_min the magnitude of b_n is floored at ``b_floor``, and for
    n > n_min at |b_n| evaluated at the activation point of the stricter
    N = ceil(k*r) rule (argument k*r = n).  ``n_max`` optionally caps the
    truncation order at the array capability.
    """

    n_min: int = 2
    b_floor: float = 0.05
    enabled: bool = True
    n_max: int | None = None

    def __post_init__(self):
        if self.b_floor <= 0:
            raise ConfigurationError("b_floor must be positive")
        if self.n_min < 0:
            raise ConfigurationError("n_min must be non-negative")


def truncation_order(k, radius, policy):
    """Active sound-field order N = max(ceil(k*e*r/2), n_min) for a bin."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if k < 0:
        raise ValueError("wavenumber must be non-negative")
    order = max(math.ceil(k * math.e * radius / 2), policy.n_min)
    if policy.n_max is not None:
        order = min(order, policy.n_max)
    return order


def floored_bn(n, k, geometry, policy):
    """b_n(k*r) with the Bessel-zero magnitude floor applied.

    The floor only rescales the magnitude; the phase of the original
    complex b_n is kept because the modal projection divides by the
    complex value.  Order 0 is never modified.
    """
    b = bn_radial(n, k * geometry.radius, geometry.kind)
    if not policy.enabled or n == 0:
        return b
    if n <= policy.n_min:
        floor = policy.b_floor
    else:
        floor = abs(bn_radial(n, float(n), geometry.kind))
    mag = abs(b)
    if mag >= floor:
        return b
    if mag == 0.0:
        return complex(floor)
    return b * (floor / mag)


@dataclass
class ModalFrame:
    """Per-frame, per-bin sound-field coefficients alpha_nm.

    ``alpha`` has shape (frames, bins, M) with M = (max(orders) + 1)**2;
    modes are stored in ACN order and entries with n > orders[bin] are
    zero.  Bins with k = 0 are skipped (zero coefficients).
    """

    alpha: np.ndarray
    orders: np.ndarray
    grid: FrequencyGrid

    @property
    def num_frames(self):
        return self.alpha.shape[0]

    @property
    def num_bins(self):
        return self.alpha.shape[1]

    @property
    def max_order(self):
        return int(self.orders.max())


def modal_coefficients(spectra, geometry, grid, policy):
    """Estimate sound-field coefficients from microphone spectra.

    Per bin and frame: ``alpha_nm = (1 / b~_n) sum_q w_q P(x_q) Y*_nm(x_q)``
    with the floored radial function b~_n.  Linear in the pressures.

    Raises
    ------
    ConfigurationError
        If any bin requires (N + 1)**2 > Q modes (spatial aliasing guard).
    """
    if spectra.num_channels != geometry.num_mics:
        raise ConfigurationError(
            f"spectra have {spectra.num_channels} channels but geometry has "
            f"{geometry.num_mics} microphones"
        )
    k = grid.k
    if spectra.data.shape[1] != k.size:
        raise ConfigurationError("frequency grid does not match spectra bins")
    orders = np.array(
        [truncation_order(kk, geometry.radius, policy) for kk in k], dtype=int
    )
    for b, order in enumerate(orders):
        if num_modes(order) > geometry.num_mics:
            raise ConfigurationError(
                f"bin {b} ({grid.freq_hz[b]:.0f} Hz) needs order {order} "
                f"({num_modes(order)} modes) but only {geometry.num_mics} "
                "microphones are available; cap the order via the floor policy"
            )
    max_order = int(orders.max())
    n_arr, _ = mode_orders(max_order)
    Y = sh_matrix(max_order, geometry.theta, geometry.phi)  # (Q, M)
    proj = geometry.weights[:, None] * Y.conj()
    raw = spectra.data @ proj  # (frames, bins, M)

    alpha = np.zeros_like(raw)
    for b, order in enumerate(orders):
        if k[b] <= 0:
            continue
        m_act = num_modes(order)
        bvals = np.array(
            [floored_bn(n, k[b], geometry, policy) for n in range(order + 1)]
        )
        alpha[:, b, :m_act] = raw[:, b, :m_act] / bvals[n_arr[:m_act]]
    return ModalFrame(alpha=alpha, orders=orders, grid=grid)
