"""Modal-domain beamforming and PSD-driven Wiener post-filtering.

A maximum-directivity (MD) or delay-and-sum (DS) beamformer is applied in
the sound-field coefficient domain, then each per-source output is scaled
by a Wiener gain built from the estimated source/reverberation/noise PSDs
and resynthesised by overlap-add.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .arraymodal import StftSpectra, modal_coefficients, stft_synthesize
from .estimator import reverb_total_psd
from .sphcore import ArrayKind, bn_radial, ipow, mode_orders, num_modes, sh_matrix


class BeamformerKind(Enum):
    MAX_DIRECTIVITY = "md"
    DELAY_SUM = "ds"


def beam_weights(kind, n, kr, order, array_kind=ArrayKind.RIGID):
    """Modal beamformer weight d_n.

    MD: ``i^-n / (N + 1)^2`` (distortionless at the steering direction);
    DS: ``4*pi*|b_n(kr)|^2 / i^n``.
    """
    if n > order:
        raise ValueError("mode order exceeds the beamformer order")
    if kind is BeamformerKind.MAX_DIRECTIVITY:
        return ipow(-n) / (order + 1) ** 2
    if kind is BeamformerKind.DELAY_SUM:
        return 4 * math.pi * abs(bn_radial(n, kr, array_kind)) ** 2 * ipow(-n)
    raise ValueError(f"unknown beamformer kind {kind!r}")


def beamform_modal(frame, doa, kind, geometry):
    """Beamformer output per frame and bin, steered to a far-field DOA.

    ``sum_nm d_n(kr) alpha_nm Y_nm(theta, phi)`` over the modes active in
    each bin.

    Returns
    -------
    ndarray of shape (frames, bins) complex
    """
    th, ph = doa
    if not 0 <= th <= np.pi or not 0 <= ph < 2 * np.pi + 1e-12:
        raise ValueError("steering DOA outside [0, pi] x [0, 2*pi)")
    max_order = frame.max_order
    n_arr, _ = mode_orders(max_order)
    Y = sh_matrix(max_order, np.array([th]), np.array([ph]))[0]  # (M,)
    k = frame.grid.k
    out = np.zeros((frame.num_frames, frame.num_bins), dtype=complex)
    for b in range(frame.num_bins):
        if k[b] <= 0:
            continue
        order = int(frame.orders[b])
        m_act = num_modes(order)
        d = np.array(
            [
                beam_weights(kind, n, k[b] * geometry.radius, order, geometry.kind)
                for n in range(order + 1)
            ]
        )
        w = d[n_arr[:m_act]] * Y[:m_act]
        out[:, b] = frame.alpha[:, b, :m_act] @ w
    return out


def wiener_gain(estimate, source_index):
    """Wiener post-filter gain for one source, per frame and bin.

    ``H = Phi_l / (sum_l' Phi_l' + Phi_r + Phi_z)``; 0 where the
    denominator vanishes.  Values lie in [0, 1] for rectified PSDs.
    """
    num = estimate.phi_sources[..., source_index]
    den = (
        estimate.phi_sources.sum(axis=-1)
        + reverb_total_psd(estimate.gamma[..., 0])
        + estimate.phi_noise
    )
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass
class SeparationOutput:
    """Separated per-source signals: STFT frames, gains and time signals."""

    stft: np.ndarray          # (frames, bins, L) complex
    gains: np.ndarray         # (frames, bins, L)
    time_signals: np.ndarray  # (samples, L)


def separate_sources(
    spectra,
    geometry,
    sources,
    estimate,
    grid,
    policy,
    kind=BeamformerKind.MAX_DIRECTIVITY,
    bypass_wiener=False,
    gain_floor=0.0,
):
    """Beamform towards every source and apply the Wiener post-filter.

    Per source: modal beamforming steered at its DOA, multiplication by
    the per-(frame, bin) Wiener gain (or unity when bypassed) and inverse
    STFT with overlap-add.  Output length equals the input length.

    Returns
    -------
    SeparationOutput
    """
    frame = modal_coefficients(spectra, geometry, grid, policy)
    L = sources.num_sources
    out_stft = np.zeros((frame.num_frames, frame.num_bins, L), dtype=complex)
    gains = np.ones((frame.num_frames, frame.num_bins, L))
    for ell in range(L):
        bf = beamform_modal(frame, tuple(sources.doas[ell]), kind, geometry)
        if not bypass_wiener:
            g = np.maximum(wiener_gain(estimate, ell), gain_floor)
            gains[:, :, ell] = g
            bf = bf * g
        out_stft[:, :, ell] = bf
    time_signals = stft_synthesize(
        StftSpectra(data=out_stft, config=spectra.config, num_samples=spectra.num_samples)
    )
    return SeparationOutput(stft=out_stft, gains=gains, time_signals=time_signals)
