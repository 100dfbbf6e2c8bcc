"""Spherical-array PSD estimation and source separation.

Estimates per-source, reverberation and diffuse-noise power spectral
densities from spherical microphone array recordings by least-squares
inversion of the modal cross-correlation model, and separates sources
with modal beamforming plus a PSD-driven Wiener post-filter.  A built-in
frequency-domain scene simulator provides exact ground truth.
"""

from .sphcore import (
    ArrayKind,
    acn_index,
    bn_radial,
    gaunt_w,
    mode_orders,
    num_modes,
    sph_bessel_j,
    sph_bessel_j_prime,
    sph_hankel1,
    sph_hankel1_prime,
    sph_harmonic,
    sh_matrix,
    sphere_quadrature,
    wigner3j,
)
from .arraymodal import (
    ArrayGeometry,
    BesselFloorPolicy,
    ConfigurationError,
    FrequencyGrid,
    ModalFrame,
    StftConfig,
    StftSpectra,
    em32_geometry,
    floored_bn,
    modal_coefficients,
    orthonormality_error,
    stft_analyze,
    stft_synthesize,
    truncation_order,
)
from .estimator import (
    CorrelationState,
    EstimatorConfig,
    PsdEstimate,
    PsdVector,
    SourceSet,
    TranslationMatrix,
    build_translation_matrix,
    estimate_psds,
    estimate_psds_from_modal,
    max_reverb_order,
    omega_closed,
    omega_quadrature,
    psi_coeff,
    reverb_total_psd,
    solve_psd,
    update_correlation,
    upsilon_farfield,
    upsilon_nearfield,
)
from .separation import (
    BeamformerKind,
    SeparationOutput,
    beam_weights,
    beamform_modal,
    separate_sources,
    wiener_gain,
)
from .scene import (
    GroundTruth,
    NoiseSpec,
    ReverbSpec,
    SceneConfig,
    SourceSpec,
    render_scene,
    synth_diffuse_noise,
    synth_plane_wave,
    synth_point_source,
    synth_reverb_field,
)
from .metrics import condition_number, psd_error, sir_snr_improvement

__version__ = "0.1.0"
