"""Least-squares PSD estimation from modal cross-correlations.

Per frequency bin, the expected cross-correlation of the sound-field
coefficients is linear in the unknown PSD components:

    Lambda = T Theta,   Theta = [Phi_1 .. Phi_L, Gamma_00 .. Gamma_VV, Phi_z]

where the columns of T are the direct-path terms (Upsilon, one per source),
the reverberant-power terms (Psi, one per (v, u)) and the diffuse-noise term
(Omega).  Lambda is tracked with an exponentially weighted moving average
and the system is solved per frame and bin by an SVD pseudo-inverse over
the stacked real/imaginary parts, followed by half-wave rectification of
the PSD-like entries.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .arraymodal import ConfigurationError, floored_bn, modal_coefficients, truncation_order
from .sphcore import (
    ArrayKind,
    bn_radial,
    direction_vector,
    gaunt_w,
    ipow,
    mode_orders,
    num_modes,
    sph_bessel_j,
    sph_harmonic,
    sph_hankel1,
    sh_matrix,
)

FOUR_PI = 4 * math.pi


# ---------------------------------------------------------------------------
# configuration and source set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning parameters of the PSD estimator.

    ``v_order`` is the reverberant-power expansion order V, ``beta`` the
    EWMA smoothing factor, and ``noise_band_hz`` the upper frequency up to
    which the coherent-noise unknown is retained (the noise column is
    dropped above it and Phi_z forced to 0).
    """

    v_order: int = 0
    beta: float = 0.8
    noise_band_hz: float = 1000.0
    rectify: bool = True
    svd_tolerance: float = 1e-8
    use_noise_column: bool = True
    use_reverb_columns: bool = True

    def __post_init__(self):
        if self.v_order < 0:
            raise ConfigurationError("v_order must be non-negative")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError("beta must lie in [0, 1]")
        if self.svd_tolerance <= 0:
            raise ConfigurationError("svd_tolerance must be positive")


@dataclass(frozen=True)
class SourceSet:
    """Known source directions (and optional ranges for near-field).

    ``doas`` has shape (L, 2) holding (theta, phi) per source; ``ranges``
    is None for the far-field model or an (L,) array of source distances
    in metres (NaN entries fall back to far-field).
    """

    doas: np.ndarray
    ranges: np.ndarray | None = None

    def __post_init__(self):
        doas = np.atleast_2d(np.asarray(self.doas, dtype=float))
        object.__setattr__(self, "doas", doas)
        if doas.ndim != 2 or doas.shape[1] != 2:
            raise ConfigurationError("doas must have shape (L, 2)")
        if doas.shape[0] < 1:
            raise ConfigurationError("at least one source is required")
        if self.ranges is not None:
            ranges = np.asarray(self.ranges, dtype=float)
            object.__setattr__(self, "ranges", ranges)
            if ranges.shape != (doas.shape[0],):
                raise ConfigurationError("ranges must have shape (L,)")
        d = direction_vector(doas[:, 0], doas[:, 1])
        gram = d @ d.T
        np.fill_diagonal(gram, 0.0)
        if np.any(gram > 1 - 1e-12):
            raise ConfigurationError("source DOAs must be pairwise distinct")

    @property
    def num_sources(self):
        return self.doas.shape[0]


# ---------------------------------------------------------------------------
# translation-matrix entries
# ---------------------------------------------------------------------------

def upsilon_farfield(n, m, n2, m2, doa):
    """Direct-path entry 16*pi^2 i^(n-n') Y*_nm(y) Y_n'm'(y)."""
    th, ph = doa
    return (
        16 * math.pi**2
        * ipow(n - n2)
        * np.conj(sph_harmonic(n, m, th, ph))
        * sph_harmonic(n2, m2, th, ph)
    )


def upsilon_nearfield(n, m, n2, m2, doa, range_m, k):
    """Near-field direct-path entry k^2 h_n(kr_l) h*_n'(kr_l) Y*_nm Y_n'm'."""
    if range_m <= 0:
        raise ValueError("source range must be positive")
    th, ph = doa
    x = k * range_m
    return (
        k**2
        * sph_hankel1(n, x)
        * np.conj(sph_hankel1(n2, x))
        * np.conj(sph_harmonic(n, m, th, ph))
        * sph_harmonic(n2, m2, th, ph)
    )


def psi_coeff(n, m, n2, m2, v, u):
    """Reverberant-power entry 16*pi^2 i^(n-n') W_(v,n,n')^(u,m,m')."""
    return 16 * math.pi**2 * ipow(n - n2) * gaunt_w(v, u, n, m, n2, m2)


def omega_closed(n, m, n2, m2, k, geometry, policy=None):
    """Closed-form diffuse-noise entry.

    ``(4*pi)^(3/2) i^(n-n'+2m+2m') j_n(kr) j_n'(kr) W_(n,n',0)^(-m,-m',0)
    / |b_n(kr)|^2`` with the floored |b_n| whenever a floor policy is
    supplied and enabled.
    """
    if k <= 0:
        raise ValueError("wavenumber must be positive")
    x = k * geometry.radius
    w = gaunt_w(n, -m, n2, -m2, 0, 0)
    if w == 0.0:
        return 0j
    if policy is not None:
        bmag = abs(floored_bn(n, k, geometry, policy))
    else:
        bmag = abs(bn_radial(n, x, geometry.kind))
    return (
        FOUR_PI**1.5
        * ipow(n - n2 + 2 * m + 2 * m2)
        * sph_bessel_j(n, x)
        * sph_bessel_j(n2, x)
        * w
        / bmag**2
    )


def omega_quadrature(n, m, n2, m2, k, geometry, policy=None, quadrature=None):
    """Diffuse-noise entry by double summation over sampling points.

    ``quadrature`` may supply (theta, phi, weights) of a dense grid; by
    default the geometry's own microphones and weights are used.  The
    sinc-correlation kernel j_0(k * distance) couples every point pair.
    """
    if quadrature is None:
        th, ph, w = geometry.theta, geometry.phi, geometry.weights
    else:
        th, ph, w = quadrature
    pos = geometry.radius * direction_vector(th, ph)
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    kern = sph_bessel_j(0, k * dist)
    ya = np.conj(sph_harmonic(n, m, th, ph))
    yb = sph_harmonic(n2, m2, th, ph)
    total = np.einsum("q,p,qp,q,p->", w, np.conj(w), kern, ya, yb)
    if policy is not None:
        bmag = abs(floored_bn(n, k, geometry, policy))
    else:
        bmag = abs(bn_radial(n, k * geometry.radius, geometry.kind))
    return total / bmag**2


@dataclass
class TranslationMatrix:
    """Per-bin matrix T mapping PSD unknowns to modal cross-correlations.

    Rows run over mode pairs (nm, n'm') in row-major ACN order; columns
    are the L source terms, then the (V + 1)**2 reverberant terms, then
    the noise term (when present).
    """

    matrix: np.ndarray
    order: int
    num_sources: int
    v_order: int
    has_noise_column: bool
    has_reverb_columns: bool

    @property
    def num_rows(self):
        return self.matrix.shape[0]

    @property
    def num_columns(self):
        return self.matrix.shape[1]

    @property
    def underdetermined(self):
        return self.num_rows < self.num_columns

    def condition_number(self):
        s = np.linalg.svd(self.matrix, compute_uv=False)
        if s[0] == 0:
            raise ValueError("zero translation matrix has no condition number")
        return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")

    def column_slices(self):
        """(sources, reverb, noise) column index slices."""
        L = self.num_sources
        g = num_modes(self.v_order) if self.has_reverb_columns else 0
        src = slice(0, L)
        rev = slice(L, L + g)
        noi = slice(L + g, L + g + (1 if self.has_noise_column else 0))
        return src, rev, noi


def _steering_modal(order, doas, ranges, k):
    """Modal steering vectors v with Lambda_direct = Phi * v v^H, (L, M)."""
    n_arr, m_arr = mode_orders(order)
    Y = sh_matrix(order, doas[:, 0], doas[:, 1])  # (L, M)
    vecs = FOUR_PI * ipow(n_arr)[None, :] * Y.conj()
    if ranges is not None:
        for ell, r_l in enumerate(ranges):
            if np.isnan(r_l):
                continue
            if r_l <= 0:
                raise ValueError("source range must be positive")
            h = np.array([sph_hankel1(n, k * r_l) for n in range(order + 1)])
            vecs[ell] = k * h[n_arr] * Y[ell].conj()
    return vecs


def build_translation_matrix(config, sources, order, k, geometry, policy=None):
    """Assemble T for one frequency bin.

    Dimensions are (M^2, L + (V+1)^2 + 1) with M = (order + 1)**2 when all
    column groups are enabled.  An underdetermined shape (fewer rows than
    columns) is flagged, not rejected; estimation then yields the
    minimum-norm solution.
    """
    M = num_modes(order)
    n_arr, m_arr = mode_orders(order)
    cols = []
    vecs = _steering_modal(order, sources.doas, sources.ranges, k)
    for ell in range(sources.num_sources):
        v = vecs[ell]
        cols.append(np.outer(v, v.conj()).ravel())
    if config.use_reverb_columns:
        iphase = ipow(n_arr[:, None] - n_arr[None, :])
        for v in range(config.v_order + 1):
            for u in range(-v, v + 1):
                w = np.array(
                    [
                        [gaunt_w(v, u, ni, mi, nj, mj) for nj, mj in zip(n_arr, m_arr)]
                        for ni, mi in zip(n_arr, m_arr)
                    ]
                )
                cols.append((16 * math.pi**2 * iphase * w).ravel())
    if config.use_noise_column:
        col = np.zeros((M, M), dtype=complex)
        for i, (ni, mi) in enumerate(zip(n_arr, m_arr)):
            for j, (nj, mj) in enumerate(zip(n_arr, m_arr)):
                if ni == nj and mi == mj:
                    col[i, j] = omega_closed(ni, mi, nj, mj, k, geometry, policy)
        cols.append(col.ravel())
    T = np.stack(cols, axis=1)
    return TranslationMatrix(
        matrix=T,
        order=order,
        num_sources=sources.num_sources,
        v_order=config.v_order if config.use_reverb_columns else -1,
        has_noise_column=config.use_noise_column,
        has_reverb_columns=config.use_reverb_columns,
    )


# ---------------------------------------------------------------------------
# correlation tracking
# ---------------------------------------------------------------------------

@dataclass
class CorrelationState:
    """EWMA-tracked Hermitian modal cross-correlation, per bin."""

    lam: np.ndarray  # (bins, M, M) complex

    @classmethod
    def zeros(cls, num_bins, num_modes_):
        return cls(lam=np.zeros((num_bins, num_modes_, num_modes_), dtype=complex))

    def vec(self, bin_index):
        """Row-major flattening of the bin's correlation matrix."""
        return self.lam[bin_index].reshape(-1)


def update_correlation(state, alpha, beta):
    """One EWMA step: Lambda <- beta * Lambda + (1 - beta) * a a^H.

    ``alpha`` holds the modal coefficients of a single STFT frame with
    shape (bins, M).  Returns a new state; the input is not mutated.
    """
    alpha = np.asarray(alpha)
    if alpha.ndim != 2 or alpha.shape != state.lam.shape[:2]:
        raise ValueError(
            f"frame shape {alpha.shape} does not match state {state.lam.shape[:2]}"
        )
    inst = alpha[:, :, None] * alpha.conj()[:, None, :]
    return CorrelationState(lam=beta * state.lam + (1 - beta) * inst)


def ewma_series(products, beta):
    """EWMA along the leading (frame) axis, zero initial state."""
    b = [1 - beta]
    a = [1.0, -beta]
    return lfilter(b, a, products, axis=0)


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

@dataclass
class PsdVector:
    """Solved PSD components for one frame and bin."""

    phi_sources: np.ndarray
    gamma: np.ndarray
    phi_noise: float

    @property
    def phi_reverb(self):
        return reverb_total_psd(self.gamma[0]) if self.gamma.size else 0.0


def reverb_total_psd(gamma00):
    """Total reverberant PSD at the origin, Gamma_00 / sqrt(4*pi)."""
    return gamma00 / math.sqrt(FOUR_PI)


def _real_stack(T):
    return np.concatenate([T.real, T.imag], axis=0)


def _solve_matrix(T, config, drop_noise):
    """Pseudo-inverse of the real-stacked system, shape (C, 2*M^2)."""
    A = T.matrix
    if drop_noise and T.has_noise_column:
        A = A[:, :-1]
    return np.linalg.pinv(_real_stack(A), rcond=config.svd_tolerance)


def _rectify(theta, src, rev, noi, config):
    if not config.rectify:
        return theta
    out = theta.copy()
    out[..., src] = np.maximum(out[..., src], 0.0)
    if rev.stop > rev.start:
        g0 = rev.start
        out[..., g0] = np.maximum(out[..., g0], 0.0)
    if noi.stop > noi.start:
        out[..., noi] = np.maximum(out[..., noi], 0.0)
    return out


def solve_psd(state_or_lam, T, config, freq_hz=0.0, bin_index=None):
    """Least-squares solve of Lambda = T Theta for one bin.

    The complex system is solved as a stacked real/imaginary least-squares
    problem (Theta is real); negatives of the PSD-like entries (source
    PSDs, Gamma_00, noise PSD) are clamped to zero when rectification is
    on.  Above ``config.noise_band_hz`` the noise column is dropped and
    Phi_z reported as 0.
    """
    if isinstance(state_or_lam, CorrelationState):
        lam = state_or_lam.vec(bin_index if bin_index is not None else 0)
    else:
        lam = np.asarray(state_or_lam).reshape(-1)
    if lam.size != T.num_rows:
        raise ValueError("correlation vector does not match T row count")
    drop_noise = T.has_noise_column and freq_hz > config.noise_band_hz
    pinv = _solve_matrix(T, config, drop_noise)
    y = np.concatenate([lam.real, lam.imag])
    theta = pinv @ y
    L = T.num_sources
    g = num_modes(T.v_order) if T.has_reverb_columns else 0
    full = np.zeros(L + g + (1 if T.has_noise_column else 0))
    full[: theta.size] = theta
    src, rev, noi = T.column_slices()
    full = _rectify(full, src, rev, noi, config)
    gamma = full[rev] if g else np.zeros(1)
    phi_noise = float(full[noi][0]) if (T.has_noise_column and not drop_noise) else 0.0
    return PsdVector(phi_sources=full[src].copy(), gamma=gamma.copy(), phi_noise=phi_noise)


def max_reverb_order(order, num_sources):
    """Bounds on the reverberant-power order V.

    Returns ``(paper_bound, shape_bound)``: the published bound
    ``floor(sqrt((N+1)^2 - L - 1) - 1)`` and the one implied by the actual
    row count of T, ``floor(sqrt((N+1)^4 - L - 1) - 1)``.  The two differ;
    neither is silently enforced.
    """
    M = num_modes(order)
    if M <= num_sources + 1:
        raise ValueError(
            f"(N+1)^2 = {M} must exceed L + 1 = {num_sources + 1} for the bound"
        )
    paper = int(math.floor(math.sqrt(M - num_sources - 1) - 1))
    shape = int(math.floor(math.sqrt(M * M - num_sources - 1) - 1))
    return paper, shape


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

@dataclass
class PsdEstimate:
    """Per-frame, per-bin PSD components plus solver diagnostics."""

    phi_sources: np.ndarray     # (frames, bins, L)
    gamma: np.ndarray           # (frames, bins, (V+1)^2)
    phi_noise: np.ndarray       # (frames, bins)
    orders: np.ndarray          # (bins,)
    condition: np.ndarray       # (bins,)
    underdetermined: np.ndarray  # (bins,) bool
    freq_hz: np.ndarray

    @property
    def phi_reverb(self):
        return reverb_total_psd(self.gamma[..., 0])

    @property
    def num_sources(self):
        return self.phi_sources.shape[2]


def _estimate_bin(alpha_bin, T, config, freq_hz):
    """Per-frame Theta series for one bin from its modal coefficients."""
    frames, M = alpha_bin.shape
    prods = alpha_bin[:, :, None] * alpha_bin.conj()[:, None, :]
    lam = ewma_series(prods.reshape(frames, -1), config.beta)
    drop_noise = T.has_noise_column and freq_hz > config.noise_band_hz
    pinv = _solve_matrix(T, config, drop_noise)
    y = np.concatenate([lam.real, lam.imag], axis=1)  # (frames, 2 M^2)
    theta = y @ pinv.T
    src, rev, noi = T.column_slices()
    ncols = T.num_columns
    full = np.zeros((frames, ncols))
    full[:, : theta.shape[1]] = theta
    full = _rectify(full, src, rev, noi, config)
    if drop_noise:
        full[:, noi] = 0.0
    return full, src, rev, noi


def estimate_psds(spectra, geometry, sources, config, policy, grid, threads=1):
    """Run the complete per-bin PSD estimation pipeline.

    Steps per bin: modal coefficients via the floored projection, the
    translation matrix from the known DOAs, EWMA tracking of the modal
    cross-correlation, and the rectified least-squares solve per frame.

    Returns
    -------
    PsdEstimate
    """
    frame = modal_coefficients(spectra, geometry, grid, policy)
    return estimate_psds_from_modal(frame, geometry, sources, config, policy, threads)


def estimate_psds_from_modal(frame, geometry, sources, config, policy, threads=1):
    """PSD estimation from precomputed modal coefficients (see
    :func:`estimate_psds`)."""
    grid = frame.grid
    k = grid.k
    freqs = grid.freq_hz
    frames = frame.num_frames
    bins_ = frame.num_bins
    L = sources.num_sources
    G = num_modes(config.v_order)
    phi_sources = np.zeros((frames, bins_, L))
    gamma = np.zeros((frames, bins_, G))
    phi_noise = np.zeros((frames, bins_))
    condition = np.full(bins_, np.nan)
    underdet = np.zeros(bins_, dtype=bool)

    def run_bin(b):
        if k[b] <= 0:
            return None
        order = int(frame.orders[b])
        M = num_modes(order)
        T = build_translation_matrix(config, sources, order, k[b], geometry, policy)
        full, src, rev, noi = _estimate_bin(frame.alpha[:, b, :M], T, config, freqs[b])
        return b, T, full, src, rev, noi

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_bin, range(bins_)))
    else:
        results = [run_bin(b) for b in range(bins_)]

    for res in results:
        if res is None:
            continue
        b, T, full, src, rev, noi = res
        phi_sources[:, b, :] = full[:, src]
        if T.has_reverb_columns:
            gamma[:, b, : num_modes(T.v_order)] = full[:, rev]
        if T.has_noise_column:
            phi_noise[:, b] = full[:, noi].reshape(-1)
        condition[b] = T.condition_number()
        underdet[b] = T.underdetermined

    return PsdEstimate(
        phi_sources=phi_sources,
        gamma=gamma,
        phi_noise=phi_noise,
        orders=frame.orders.copy(),
        condition=condition,
        underdetermined=underdet,
        freq_hz=freqs.copy(),
    )
