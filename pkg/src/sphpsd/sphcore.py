"""Spherical special-function kernel.

Complex orthonormal spherical harmonics (Condon-Shortley phase), spherical
Bessel/Hankel functions with derivatives, the radial mode-strength function
b_n for open and rigid spherical arrays, exact Wigner-3j symbols, and the
triple-harmonic constants W used by the reverberant-power model.

Conventions
-----------
* ``int Y_nm Y*_n'm' dOmega = delta_nn' delta_mm'`` (orthonormal).
* ``Y*_nm = (-1)^m Y_n(-m)`` (conjugation symmetry).
* Modes are linearised in ACN order: ``index = n**2 + n + m``.

All functions are pure; the Wigner-3j / W caches are read-safe under
concurrent use.
"""

import math
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import sph_harm_y, spherical_jn, spherical_yn


class ArrayKind(Enum):
    """Spherical array configuration: open (transparent) or rigid baffle."""

    OPEN = "open"
    RIGID = "rigid"


# ---------------------------------------------------------------------------
# mode indexing
# ---------------------------------------------------------------------------

def acn_index(n, m):
    """Linear ACN index of mode (n, m): n**2 + n + m.

    Bijective from {(n, m): |m| <= n} onto the non-negative integers.
    """
    n = int(n)
    m = int(m)
    if n < 0 or abs(m) > n:
        raise ValueError(f"invalid mode index (n={n}, m={m})")
    return n * n + n + m


def num_modes(max_order):
    """Number of modes with order <= max_order, i.e. (max_order + 1)**2."""
    return (int(max_order) + 1) ** 2


def mode_orders(max_order):
    """Order/degree arrays (n, m) for all modes up to max_order, ACN order.

    Returns
    -------
    n, m : int ndarrays of shape ((max_order + 1)**2,)
    """
    n = []
    m = []
    for nn in range(int(max_order) + 1):
        for mm in range(-nn, nn + 1):
            n.append(nn)
            m.append(mm)
    return np.array(n), np.array(m)


def ipow(e):
    """i**e evaluated exactly for integer exponents (array friendly)."""
    table = np.array([1 + 0j, 1j, -1 + 0j, -1j])
    return table[np.asarray(e) % 4]


# ---------------------------------------------------------------------------
# spherical harmonics
# ---------------------------------------------------------------------------

def sph_harmonic(n, m, theta, phi):
    """Orthonormal complex spherical harmonic Y_nm(theta, phi).

    Parameters
    ----------
    n, m : int
        Order and degree, |m| <= n.
    theta : float or ndarray
        Colatitude in radians, 0 <= theta <= pi.
    phi : float or ndarray
        Azimuth in radians.
    """
    n = int(n)
    m = int(m)
    if n < 0 or abs(m) > n:
        raise ValueError(f"invalid mode index (n={n}, m={m})")
    if np.any(np.asarray(theta) < -1e-12) or np.any(np.asarray(theta) > np.pi + 1e-12):
        raise ValueError("colatitude theta must lie in [0, pi]")
    return sph_harm_y(n, m, theta, phi)


def sh_matrix(max_order, theta, phi):
    """Spherical-harmonic matrix for a set of directions.

    Parameters
    ----------
    max_order : int
    theta, phi : ndarrays of shape (npts,)

    Returns
    -------
    Y : complex ndarray of shape (npts, (max_order + 1)**2)
        Column j holds Y_nm at all points, modes in ACN order.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    n, m = mode_orders(max_order)
    return sph_harm_y(n[None, :], m[None, :], theta[:, None], phi[:, None])


# ---------------------------------------------------------------------------
# spherical Bessel / Hankel functions
# ---------------------------------------------------------------------------

def sph_bessel_j(n, x):
    """Spherical Bessel function of the first kind j_n(x), x >= 0."""
    if np.any(np.asarray(x) < 0):
        raise ValueError("spherical Bessel argument must be non-negative")
    return spherical_jn(n, x)


def sph_bessel_j_prime(n, x):
    """First derivative j'_n(x)."""
    return spherical_jn(n, x, derivative=True)


def sph_hankel1(n, x):
    """Spherical Hankel function of the first kind, h_n = j_n + i y_n.

    Singular at the origin; x must be strictly positive.
    """
    if np.any(np.asarray(x) <= 0):
        raise ValueError("spherical Hankel argument must be positive")
    return spherical_jn(n, x) + 1j * spherical_yn(n, x)


def sph_hankel1_prime(n, x):
    """First derivative h'_n(x), x > 0."""
    if np.any(np.asarray(x) <= 0):
        raise ValueError("spherical Hankel argument must be positive")
    return spherical_jn(n, x, derivative=True) + 1j * spherical_yn(n, x, derivative=True)


def bn_radial(n, x, kind):
    """Radial mode-strength function b_n for a spherical array.

    Open array: ``b_n(x) = j_n(x)``.  Rigid array:
    ``b_n(x) = j_n(x) - j'_n(x) / h'_n(x) * h_n(x)``, which has no real
    zeros for x > 0.

    Parameters
    ----------
    n : int
        Mode order.
    x : float or ndarray
        Dimensionless argument k*r; must be > 0 for a rigid array.
    kind : ArrayKind
    """
    if kind is ArrayKind.OPEN:
        return sph_bessel_j(n, x) + 0j
    if kind is ArrayKind.RIGID:
        if np.any(np.asarray(x) <= 0):
            raise ValueError("rigid-array b_n is undefined at kr = 0")
        j = spherical_jn(n, x)
        jp = spherical_jn(n, x, derivative=True)
        h = j + 1j * spherical_yn(n, x)
        hp = jp + 1j * spherical_yn(n, x, derivative=True)
        return j - jp / hp * h
    raise ValueError(f"unknown array kind: {kind!r}")


def bn_all_orders(max_order, x, kind):
    """b_n(x) for every order n <= max_order, shape (max_order + 1,)."""
    return np.array([bn_radial(n, x, kind) for n in range(max_order + 1)])


# ---------------------------------------------------------------------------
# Wigner-3j and triple-harmonic constants
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _wigner3j_exact(j1, j2, j3, m1, m2, m3):
    # Racah single-sum formula with exact rational arithmetic; the square
    # of the result is rational, so only one final sqrt is taken in float.
    tmin = max(0, j2 - j3 - m1, j1 - j3 + m2)
    tmax = min(j1 + j2 - j3, j1 - m1, j2 + m2)
    s = Fraction(0)
    for t in range(tmin, tmax + 1):
        den = (
            math.factorial(t)
            * math.factorial(j3 - j2 + t + m1)
            * math.factorial(j3 - j1 + t - m2)
            * math.factorial(j1 + j2 - j3 - t)
            * math.factorial(j1 - t - m1)
            * math.factorial(j2 - t + m2)
        )
        s += Fraction((-1) ** t, den)
    if s == 0:
        return 0.0
    rsq = Fraction(
        math.factorial(j1 + j2 - j3)
        * math.factorial(j1 - j2 + j3)
        * math.factorial(-j1 + j2 + j3),
        math.factorial(j1 + j2 + j3 + 1),
    )
    rsq *= (
        math.factorial(j1 + m1)
        * math.factorial(j1 - m1)
        * math.factorial(j2 + m2)
        * math.factorial(j2 - m2)
        * math.factorial(j3 + m3)
        * math.factorial(j3 - m3)
    )
    sign = (-1) ** (j1 - j2 - m3) * (1 if s > 0 else -1)
    return sign * math.sqrt(float(s * s * rsq))


def wigner3j(j1, j2, j3, m1, m2, m3):
    """Wigner-3j symbol (j1 j2 j3; m1 m2 m3) for integer arguments.

    Selection-rule failures (triangle inequality, m1 + m2 + m3 != 0,
    |m_i| > j_i) return 0.  Evaluated with exact integer-factorial
    arithmetic and a single final floating square root.
    """
    args = (j1, j2, j3, m1, m2, m3)
    if any(a != int(a) for a in args):
        raise ValueError("half-integer angular momenta are not supported")
    j1, j2, j3, m1, m2, m3 = (int(a) for a in args)
    if min(j1, j2, j3) < 0:
        raise ValueError("orders must be non-negative")
    if m1 + m2 + m3 != 0:
        return 0.0
    if not abs(j1 - j2) <= j3 <= j1 + j2:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0
    return _wigner3j_exact(j1, j2, j3, m1, m2, m3)


@lru_cache(maxsize=None)
def gaunt_w(v, u, n, m, np_, mp):
    """Triple-harmonic constant W = int Y_vu Y*_nm Y_n'm' dOmega.

    Equals ``(-1)^m sqrt((2v+1)(2n+1)(2n'+1)/4pi) * 3j(v,n,n';0,0,0)
    * 3j(v,n,n';u,-m,m')``.  Zero whenever the azimuthal selection rule
    ``u - m + m' = 0`` or the triangle rule fails.
    """
    v, u, n, m, np_, mp = (int(a) for a in (v, u, n, m, np_, mp))
    if u - m + mp != 0:
        return 0.0
    w0 = wigner3j(v, n, np_, 0, 0, 0)
    if w0 == 0.0:
        return 0.0
    wm = wigner3j(v, n, np_, u, -m, mp)
    if wm == 0.0:
        return 0.0
    norm = math.sqrt((2 * v + 1) * (2 * n + 1) * (2 * np_ + 1) / (4 * math.pi))
    return (-1) ** m * norm * w0 * wm


# ---------------------------------------------------------------------------
# sphere quadrature (oracle-grade Gauss-Legendre x uniform-azimuth grid)
# ---------------------------------------------------------------------------

def sphere_quadrature(n_polar, n_azimuth=None):
    """Product quadrature grid over the unit sphere.

    Gauss-Legendre in cos(theta) with ``n_polar`` nodes and a uniform
    azimuth grid; integrates spherical harmonics exactly up to degree
    2*n_polar - 1 (or n_azimuth - 1 azimuthally if that is smaller).

    Returns
    -------
    theta, phi, w : ndarrays of shape (n_polar * n_azimuth,)
        Node angles and weights with sum(w) = 4*pi.
    """
    if n_azimuth is None:
        n_azimuth = 2 * n_polar
    x, wx = np.polynomial.legendre.leggauss(n_polar)
    theta = np.arccos(x)
    phi = 2 * np.pi * np.arange(n_azimuth) / n_azimuth
    th_grid, ph_grid = np.meshgrid(theta, phi, indexing="ij")
    w_grid = np.repeat(wx[:, None], n_azimuth, axis=1) * (2 * np.pi / n_azimuth)
    return th_grid.ravel(), ph_grid.ravel(), w_grid.ravel()


def direction_vector(theta, phi):
    """Cartesian unit vector(s) for colatitude/azimuth angles."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)
