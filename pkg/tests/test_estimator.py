"""Translation-matrix entries, correlation tracking and the PSD solve."""

import math

import numpy as np
import pytest
from oracles import dense_sphere_grid

from sphpsd import (
    ArrayKind,
    BesselFloorPolicy,
    ConfigurationError,
    CorrelationState,
    EstimatorConfig,
    SourceSet,
    build_translation_matrix,
    em32_geometry,
    max_reverb_order,
    mode_orders,
    omega_closed,
    omega_quadrature,
    psi_coeff,
    reverb_total_psd,
    solve_psd,
    sph_harmonic,
    update_correlation,
    upsilon_farfield,
    upsilon_nearfield,
)

FOUR_PI = 4 * math.pi


# ---------------------------------------------------------------------------
# Upsilon
# ---------------------------------------------------------------------------

def test_upsilon_farfield_monopole():
    val = upsilon_farfield(0, 0, 0, 0, (0.7, 1.3))
    assert val == pytest.approx(FOUR_PI)
    assert val.real == pytest.approx(12.566, abs=1e-3)


def test_upsilon_farfield_hermitian_swap():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n, n2 = rng.integers(0, 4, 2)
        m = rng.integers(-n, n + 1)
        m2 = rng.integers(-n2, n2 + 1)
        doa = (rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi))
        a = upsilon_farfield(int(n), int(m), int(n2), int(m2), doa)
        b = upsilon_farfield(int(n2), int(m2), int(n), int(m), doa)
        assert a == pytest.approx(np.conj(b))


def test_upsilon_farfield_equatorial_null():
    # Y_10 vanishes at theta = pi/2
    assert upsilon_farfield(1, 0, 0, 0, (np.pi / 2, 0.0)) == pytest.approx(0.0, abs=1e-12)


def test_upsilon_nearfield_monopole_inverse_square():
    k, r_l = 30.0, 1.7
    val = upsilon_nearfield(0, 0, 0, 0, (1.0, 2.0), r_l, k)
    assert val == pytest.approx(1 / (FOUR_PI * r_l**2))


def test_upsilon_nearfield_inverse_square_scaling():
    # magnitude falls as 1/r^2 in the large-argument regime
    k = 40.0
    v1 = abs(upsilon_nearfield(2, 1, 1, 0, (0.9, 0.3), 1.0, k))
    v2 = abs(upsilon_nearfield(2, 1, 1, 0, (0.9, 0.3), 2.0, k))
    assert v1 / v2 == pytest.approx(4.0, rel=1e-2)


def test_upsilon_nearfield_rejects_zero_range():
    with pytest.raises(ValueError):
        upsilon_nearfield(0, 0, 0, 0, (1.0, 1.0), 0.0, 10.0)


def test_upsilon_near_far_phase_relation():
    # asymptotically the near-field entry matches the far-field one up to
    # 16 pi^2 / (4 pi r^2) scaling and a (-1)^(n - n') phase from the
    # opposing plane-wave/outgoing-wave conventions
    k, r_l = 200.0, 50.0
    doa = (1.2, 0.7)
    for (n, m, n2, m2) in [(1, 0, 0, 0), (2, 1, 1, -1), (3, 2, 2, 0)]:
        near = upsilon_nearfield(n, m, n2, m2, doa, r_l, k)
        far = upsilon_farfield(n, m, n2, m2, doa)
        scale = (FOUR_PI * r_l) ** 2
        ratio = near * scale / far
        assert ratio == pytest.approx((-1) ** (n - n2), rel=2e-2)


# ---------------------------------------------------------------------------
# Psi
# ---------------------------------------------------------------------------

def test_psi_all_zero_indices():
    val = psi_coeff(0, 0, 0, 0, 0, 0)
    assert val == pytest.approx(16 * np.pi**2 * 0.2820948, abs=1e-4)
    assert val == pytest.approx(44.546, abs=1e-3)


def test_psi_selection_rules():
    assert psi_coeff(1, 1, 1, 1, 1, 1) == 0.0  # azimuthal rule
    assert psi_coeff(1, 0, 1, 0, 5, 0) == 0.0  # triangle rule v > n + n'


# ---------------------------------------------------------------------------
# Omega
# ---------------------------------------------------------------------------

def test_omega_monopole_open_array(open_array):
    # b_0 = j_0 cancels, leaving exactly 4 pi
    for k in (10.0, 40.0, 80.0):
        val = omega_closed(0, 0, 0, 0, k, open_array)
        assert val == pytest.approx(FOUR_PI, abs=1e-9)


def omega_quadrature_all(geometry, k, order, grid):
    """Dense-grid evaluation of every Omega entry at once (oracle)."""
    from sphpsd import bn_radial, sh_matrix
    from sphpsd.sphcore import direction_vector, sph_bessel_j

    th, ph, w = grid
    pos = geometry.radius * direction_vector(th, ph)
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    kern = sph_bessel_j(0, k * dist)
    Y = sh_matrix(order, th, ph)
    C = w[:, None] * Y
    core = C.conj().T @ kern @ C  # (M, M)
    n_arr, _ = mode_orders(order)
    b2 = np.array(
        [abs(bn_radial(n, k * geometry.radius, geometry.kind)) ** 2 for n in n_arr]
    )
    return core / b2[:, None]


def test_omega_closed_vs_quadrature(open_array, rigid_array):
    grid = dense_sphere_grid(30)
    order = 3
    n_arr, m_arr = mode_orders(order)
    for geometry in (open_array, rigid_array):
        for k in (10.0, 40.0, 80.0):
            quad = omega_quadrature_all(geometry, k, order, grid)
            for i, (n, m) in enumerate(zip(n_arr, m_arr)):
                for j, (n2, m2) in enumerate(zip(n_arr, m_arr)):
                    closed = omega_closed(int(n), int(m), int(n2), int(m2), k, geometry)
                    if abs(closed) > 1e-9:
                        assert abs(quad[i, j] - closed) / abs(closed) < 1e-3
                    else:
                        scale = max(1.0, np.abs(np.diagonal(quad)).max())
                        assert abs(quad[i, j]) < 1e-6 * scale


def test_omega_quadrature_entry_matches_vectorised(open_array):
    grid = dense_sphere_grid(16)
    quad = omega_quadrature_all(open_array, 40.0, 2, grid)
    for (n, m, n2, m2) in [(0, 0, 0, 0), (1, 0, 1, 0), (2, 1, 2, 1), (2, -1, 1, 0)]:
        i = n * n + n + m
        j = n2 * n2 + n2 + m2
        val = omega_quadrature(n, m, n2, m2, 40.0, open_array, quadrature=grid)
        assert val == pytest.approx(quad[i, j], abs=1e-10)


def test_omega_selection_zeros(rigid_array):
    assert omega_closed(1, 0, 1, 1, 25.0, rigid_array) == 0.0
    assert omega_closed(2, 0, 1, 0, 25.0, rigid_array) == 0.0


def test_omega_quadrature_small_k_limit(open_array):
    # kernel j0 -> 1 as k -> 0: the monopole entry tends to
    # (sum_q w_q Y*_00)^2 / |b_0|^2 = 4 pi on an open array
    val = omega_quadrature(0, 0, 0, 0, 1.0, open_array)
    assert val == pytest.approx(FOUR_PI, rel=2e-3)
    # n >= 1 entries are 0/0 limits that stay at 4 pi for open arrays;
    # checked at moderate k against the closed form
    val1 = omega_quadrature(1, 0, 1, 0, 5.0, open_array)
    assert val1 == pytest.approx(FOUR_PI, rel=2e-2)


# ---------------------------------------------------------------------------
# translation matrix
# ---------------------------------------------------------------------------

def _sources(L, seed=0):
    rng = np.random.default_rng(seed)
    doas = np.stack(
        [np.arccos(rng.uniform(-1, 1, L)), rng.uniform(0, 2 * np.pi, L)], axis=1
    )
    return SourceSet(doas=doas)


def test_translation_matrix_dimensions(rigid_array):
    cfg = EstimatorConfig(v_order=3)
    T = build_translation_matrix(cfg, _sources(4), 1, 20.0, rigid_array)
    assert T.matrix.shape == (16, 4 + 16 + 1)
    assert T.underdetermined

    cfg0 = EstimatorConfig(v_order=0)
    T2 = build_translation_matrix(cfg0, _sources(4), 4, 20.0, rigid_array)
    assert T2.matrix.shape == (625, 6)
    assert not T2.underdetermined

    T3 = build_translation_matrix(cfg0, _sources(1), 2, 20.0, rigid_array)
    assert T3.matrix.shape == (81, 3)


def test_translation_matrix_farfield_k_invariance(rigid_array):
    cfg = EstimatorConfig(v_order=1)
    src = _sources(3)
    Ta = build_translation_matrix(cfg, src, 2, 20.0, rigid_array)
    Tb = build_translation_matrix(cfg, src, 2, 80.0, rigid_array)
    np.testing.assert_allclose(Ta.matrix[:, :-1], Tb.matrix[:, :-1], atol=1e-12)
    assert np.abs(Ta.matrix[:, -1] - Tb.matrix[:, -1]).max() > 1e-3


def test_translation_rows_match_upsilon(rigid_array):
    cfg = EstimatorConfig(v_order=0)
    src = _sources(2, seed=3)
    order = 2
    T = build_translation_matrix(cfg, src, order, 30.0, rigid_array)
    n_arr, m_arr = mode_orders(order)
    M = len(n_arr)
    for ell in range(2):
        doa = tuple(src.doas[ell])
        for i in (0, 3, 7):
            for j in (1, 4, 8):
                want = upsilon_farfield(n_arr[i], m_arr[i], n_arr[j], m_arr[j], doa)
                assert T.matrix[i * M + j, ell] == pytest.approx(want, abs=1e-12)


# ---------------------------------------------------------------------------
# correlation tracking
# ---------------------------------------------------------------------------

def test_update_correlation_arithmetic():
    state = CorrelationState.zeros(1, 1)
    new = update_correlation(state, np.array([[1.0 + 0j]]), beta=0.8)
    assert new.lam[0, 0, 0] == pytest.approx(0.2)


def test_update_correlation_beta_one_freezes():
    state = CorrelationState(lam=np.full((1, 2, 2), 0.5 + 0j))
    new = update_correlation(state, np.array([[1.0, 2.0]]), beta=1.0)
    np.testing.assert_allclose(new.lam, state.lam)


def test_update_correlation_geometric_convergence():
    rng = np.random.default_rng(8)
    alpha = rng.standard_normal((1, 3)) + 1j * rng.standard_normal((1, 3))
    target = alpha[0][:, None] * alpha[0].conj()[None, :]
    state = CorrelationState.zeros(1, 3)
    beta = 0.8
    for tau in range(1, 60):
        state = update_correlation(state, alpha, beta)
        expected_gap = beta**tau
        gap = np.abs(state.lam[0] - target).max() / np.abs(target).max()
        assert gap == pytest.approx(expected_gap, rel=1e-8)


def test_update_correlation_hermitian():
    rng = np.random.default_rng(9)
    state = CorrelationState.zeros(2, 4)
    for _ in range(20):
        a = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
        state = update_correlation(state, a, 0.8)
        lam = state.lam
        np.testing.assert_allclose(lam, lam.conj().transpose(0, 2, 1), atol=1e-12)
        diag = np.diagonal(lam, axis1=1, axis2=2)
        assert np.all(diag.real >= 0)
        assert np.abs(diag.imag).max() < 1e-12


def test_update_correlation_shape_mismatch():
    state = CorrelationState.zeros(1, 4)
    with pytest.raises(ValueError):
        update_correlation(state, np.zeros((1, 9)), 0.8)


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

def _analytic_lambda_single_source(order, doa, power=1.0):
    n_arr, m_arr = mode_orders(order)
    v = np.array(
        [
            FOUR_PI * 1j**n * np.conj(sph_harmonic(n, m, *doa))
            for n, m in zip(n_arr, m_arr)
        ]
    )
    return power * np.outer(v, v.conj())


def test_solve_single_source_exact(rigid_array):
    cfg = EstimatorConfig(v_order=0)
    doa = (1.2, 0.4)
    src = SourceSet(doas=np.array([[1.2, 0.4]]))
    order = 2
    T = build_translation_matrix(cfg, src, order, 30.0, rigid_array)
    lam = _analytic_lambda_single_source(order, doa, power=1.0)
    out = solve_psd(lam, T, cfg, freq_hz=500.0)
    assert out.phi_sources[0] == pytest.approx(1.0, abs=1e-6)
    assert out.gamma[0] == pytest.approx(0.0, abs=1e-6)
    assert out.phi_noise == pytest.approx(0.0, abs=1e-6)


def test_solve_pure_diffuse_noise(rigid_array):
    cfg = EstimatorConfig(v_order=0)
    src = _sources(2, seed=1)
    order = 2
    k = 30.0
    T = build_translation_matrix(cfg, src, order, k, rigid_array)
    sigma2 = 0.37
    lam = sigma2 * T.matrix[:, -1].reshape(num_modes_sq(order))
    out = solve_psd(lam, T, cfg, freq_hz=500.0)
    assert out.phi_noise == pytest.approx(sigma2, abs=1e-6)
    np.testing.assert_allclose(out.phi_sources, 0.0, atol=1e-6)


def num_modes_sq(order):
    M = (order + 1) ** 2
    return (M, M)


def test_solve_rectification_clamps():
    # build a tiny system whose unclamped solution is negative
    from sphpsd.estimator import TranslationMatrix

    T = TranslationMatrix(
        matrix=np.eye(2, 1, dtype=complex),
        order=0,
        num_sources=1,
        v_order=-1,
        has_noise_column=False,
        has_reverb_columns=False,
    )
    cfg = EstimatorConfig(v_order=0)
    lam = np.array([-0.3 + 0j, 0.0])
    out = solve_psd(lam, T, cfg)
    assert out.phi_sources[0] == 0.0
    cfg_raw = EstimatorConfig(v_order=0, rectify=False)
    out_raw = solve_psd(lam, T, cfg_raw)
    assert out_raw.phi_sources[0] == pytest.approx(-0.3)


def test_solve_drops_noise_above_band(rigid_array):
    cfg = EstimatorConfig(v_order=0, noise_band_hz=1000.0)
    src = _sources(1)
    T = build_translation_matrix(cfg, src, 2, 40.0, rigid_array)
    lam = 0.5 * T.matrix[:, -1].reshape(9, 9)
    out = solve_psd(lam, T, cfg, freq_hz=2500.0)
    assert out.phi_noise == 0.0


def test_solve_free_field_specialisation(rigid_array):
    # dropping the Psi and Omega columns leaves a free-field scene's
    # source estimates unchanged
    doa = (0.8, 4.1)
    src = SourceSet(doas=np.array([doa]))
    order = 2
    lam = _analytic_lambda_single_source(order, doa, power=2.5)
    full_cfg = EstimatorConfig(v_order=1)
    bare_cfg = EstimatorConfig(v_order=1, use_noise_column=False, use_reverb_columns=False)
    T_full = build_translation_matrix(full_cfg, src, order, 30.0, rigid_array)
    T_bare = build_translation_matrix(bare_cfg, src, order, 30.0, rigid_array)
    assert T_bare.matrix.shape[1] == 1
    a = solve_psd(lam, T_full, full_cfg, freq_hz=500.0)
    b = solve_psd(lam, T_bare, bare_cfg, freq_hz=500.0)
    assert a.phi_sources[0] == pytest.approx(b.phi_sources[0], abs=1e-6)


# ---------------------------------------------------------------------------
# reverberant PSD and V bounds
# ---------------------------------------------------------------------------

def test_reverb_total_psd():
    assert reverb_total_psd(1.0) == pytest.approx(0.2820948, abs=1e-7)
    assert reverb_total_psd(0.0) == 0.0
    assert reverb_total_psd(2.0) == pytest.approx(2 * reverb_total_psd(1.0))


def test_max_reverb_order_bounds():
    paper, shape = max_reverb_order(4, 4)
    assert paper == 3
    assert shape == 23


def test_max_reverb_order_precondition():
    with pytest.raises(ValueError):
        max_reverb_order(1, 4)
