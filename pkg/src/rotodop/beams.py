"""Spatial Laguerre-Gauss modes, temporal Hermite-Gauss wave packets and the
coefficients that re-expand a frequency-shifted wave packet over a fixed basis.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.special import eval_genlaguerre, gammaln, roots_hermite

from .errors import ConvergenceError, DomainError

C_LIGHT = 299792458.0


@dataclass(frozen=True)
class BasisParams:
    """Temporal basis {omega0, tau0, theta0, sigma} (rad/s, s, rad, rad/s)."""

    omega0: float
    tau0: float = 0.0
    theta0: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if not self.omega0 > 0:
            raise DomainError("omega0 must be positive")


@dataclass(frozen=True)
class LGGeometry:
    w0: float
    wavelength: float
    refractive_index: float = 1.0

    def __post_init__(self):
        if not (self.w0 > 0 and self.wavelength > 0 and self.refractive_index > 0):
            raise DomainError("w0, wavelength and refractive index must be positive")

    @property
    def k(self):
        return 2 * np.pi * self.refractive_index / self.wavelength

    @property
    def z_R(self):
        return np.pi * self.w0 ** 2 * self.refractive_index / self.wavelength

    def w(self, z):
        return self.w0 * np.sqrt(1 + (z / self.z_R) ** 2)


def lg_mode(l, p, r, phi, z, geom):
    """Laguerre-Gauss mode u_{l,p}(r, phi, z), normalized over the transverse plane.

    The Gouy phase is (|l| + 2p + 1) * arctan2(z_R, z), the continuous form of
    arctan(z_R / z); it equals (|l| + 2p + 1) * pi / 2 in the waist plane.
    """
    if p < 0:
        raise DomainError("radial index p must be non-negative")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("r must be non-negative")
    al = abs(l)
    w = geom.w(z)
    C = np.sqrt(2 / np.pi * np.exp(gammaln(p + 1) - gammaln(p + al + 1)))
    rho = r * np.sqrt(2) / w
    u = (C / w) * rho ** al * np.exp(-(r / w) ** 2) * eval_genlaguerre(p, al, rho ** 2)
    if z != 0:
        R = z * (1 + (geom.z_R / z) ** 2)
        u = u * np.exp(-1j * geom.k * r ** 2 / (2 * R))
    gouy = (al + 2 * p + 1) * np.arctan2(geom.z_R, z)
    return u * np.exp(-1j * l * np.asarray(phi)) * np.exp(1j * gouy)


def hermite_functions(nmax, x):
    """Orthonormal Hermite functions psi_0..psi_nmax at x (three-term recurrence)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = np.pi ** -0.25 * np.exp(-x ** 2 / 2)
    if nmax >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for k in range(1, nmax):
        out[k + 1] = np.sqrt(2.0 / (k + 1)) * x * out[k] - np.sqrt(k / (k + 1)) * out[k - 1]
    return out


def hg_temporal(n, t, basis):
    """Temporal Hermite-Gauss wave packet Phi_n(t; tau0, omega0, theta0, sigma)."""
    if n < 0:
        raise DomainError("n must be non-negative")
    t = np.asarray(t, dtype=float)
    x = basis.sigma * (t - basis.tau0) / np.sqrt(2)
    env = np.sqrt(basis.sigma / np.sqrt(2)) * hermite_functions(n, x)[n]
    return env * np.exp(-1j * (basis.omega0 * t + basis.theta0))


def _log_fact_ratio_sqrt(a, b):
    return 0.5 * (gammaln(a + 1) - gammaln(b + 1))


def k_coefficient(m, n, beta):
    """Coefficient K_{m;n}(beta) of Phi_n at the shifted carrier over Phi_m.

    This is the displaced-oscillator element
        sqrt(m!/n!) (-i beta)^(n-m) exp(-beta^2/2) L_m^(n-m)(beta^2),   m <= n,
    and K is symmetric in (m, n).  The frequently quoted variant with an extra
    factor 2^(n-m)/2 and L_n in place of L_m is not unitary and gives 1/2 at
    beta = 0; see ``k_coefficient_as_printed``.
    """
    if m < 0 or n < 0:
        raise DomainError("indices must be non-negative")
    lo, hi = (m, n) if m <= n else (n, m)
    d = hi - lo
    b = np.asarray(beta, dtype=float)
    pref = np.exp(_log_fact_ratio_sqrt(lo, hi) - b ** 2 / 2)
    val = pref * (-1j * b) ** d * eval_genlaguerre(lo, d, b ** 2)
    return complex(val) if val.ndim == 0 else val


def k_coefficient_as_printed(m, n, beta):
    """Literal form with the 1/2, (2 beta)^(n-m) and L_n^(n-m) factors; n >= m."""
    if n < m:
        raise DomainError("printed form is defined for n >= m only")
    d = n - m
    return complex(
        (-1j) ** d / 2 * np.exp(_log_fact_ratio_sqrt(m, n)) * (2 * beta) ** d
        * np.exp(-beta ** 2 / 2) * eval_genlaguerre(n, d, beta ** 2)
    )


def k_matrix(nmax, beta):
    """(nmax+1) x (nmax+1) matrix K[m, n] = K_{m;n}(beta)."""
    K = np.empty((nmax + 1, nmax + 1), dtype=complex)
    for m in range(nmax + 1):
        for n in range(m, nmax + 1):
            K[m, n] = K[n, m] = k_coefficient(m, n, beta)
    return K


class OracleResult(NamedTuple):
    value: complex
    error: float
    order: int


def _gh_overlap(m, n, omega_in, omega_out, basis, order):
    x, w = roots_hermite(order)
    t = basis.tau0 + np.sqrt(2) * x / basis.sigma
    theta_out = (omega_in - omega_out) * basis.tau0 + basis.theta0
    b_in = BasisParams(omega_in, basis.tau0, basis.theta0, basis.sigma)
    b_out = BasisParams(omega_out, basis.tau0, theta_out, basis.sigma)
    f = hg_temporal(n, t, b_in) * np.conj(hg_temporal(m, t, b_out))
    # dt = sqrt(2)/sigma dx; the e^{-x^2} weight is divided back out
    return np.sum(w * f * np.exp(x ** 2)) * np.sqrt(2) / basis.sigma


def k_oracle(m, n, omega_in, omega_out, basis, order=None, tol=1e-10):
    """Overlap integral of Phi_n(omega_in) with Phi_m(omega_out) by quadrature.

    The output phase is fixed to theta_out = (omega_in - omega_out) tau0 + theta_in.
    Gauss-Hermite quadrature at two successive orders; an adaptive integration
    on tau0 +- 12/sigma is used as fallback when they disagree.
    """
    if m < 0 or n < 0:
        raise DomainError("indices must be non-negative")
    q = order or max(64, 2 * (n + m) + 40)
    v1 = _gh_overlap(m, n, omega_in, omega_out, basis, q)
    v2 = _gh_overlap(m, n, omega_in, omega_out, basis, q + 32)
    err = abs(v2 - v1)
    if err <= tol:
        return OracleResult(complex(v2), float(err), q + 32)

    theta_out = (omega_in - omega_out) * basis.tau0 + basis.theta0
    b_in = BasisParams(omega_in, basis.tau0, basis.theta0, basis.sigma)
    b_out = BasisParams(omega_out, basis.tau0, theta_out, basis.sigma)
    lo, hi = basis.tau0 - 12 / basis.sigma, basis.tau0 + 12 / basis.sigma

    def part(fn):
        return integrate.quad(
            lambda t: fn(hg_temporal(n, t, b_in) * np.conj(hg_temporal(m, t, b_out))),
            lo, hi, limit=400, epsabs=1e-13, epsrel=1e-12,
        )

    re, e_re = part(np.real)
    im, e_im = part(np.imag)
    val = complex(re, im)
    err = max(abs(val - v2), e_re + e_im)
    if abs(val - v2) > 1e-9 and e_re + e_im > 1e-9:
        raise ConvergenceError(f"overlap K_{m};{n} did not converge (err {err:.2e})")
    return OracleResult(val, float(e_re + e_im), -1)


def hg_frequency_derivative(n, t, basis, l=1):
    """l * d/domega Phi_n from the ladder identity

        -i sqrt(2)/sigma [sqrt(n/2) Phi_{n-1} + sqrt((n+1)/2) Phi_{n+1}] - i tau0 Phi_n.
    """
    s2 = np.sqrt(2) / basis.sigma
    val = -1j * basis.tau0 * hg_temporal(n, t, basis)
    val = val - 1j * s2 * np.sqrt((n + 1) / 2) * hg_temporal(n + 1, t, basis)
    if n > 0:
        val = val - 1j * s2 * np.sqrt(n / 2) * hg_temporal(n - 1, t, basis)
    return l * val


class ParaxialityReport(NamedTuple):
    epsilon_p: float
    paraxial: bool
    sufficient: bool
    hierarchy: bool


def paraxiality_ratio(geom, omega, k, l=0, Omega=0.0, threshold=0.01, c=C_LIGHT):
    """Paraxiality ratio and the associated much-less-than checks.

    ``a << b`` is evaluated as ``a < threshold * b``.
    """
    if not (k > 0 and geom.w0 > 0):
        raise DomainError("k and w0 must be positive")
    inv = 1.0 / (k * geom.w0) ** 2
    Ck = ((omega / c) ** 2 - k ** 2) / (2 * k)
    if Ck == 0:
        eps = inv
    else:
        den = 2 * k * (Ck - 1.0 / (k * geom.w0 ** 2))
        eps = abs(inv - Ck ** 2 / den) if den != 0 else np.inf
    detune = abs((omega / (c * k)) ** 2 - 1)
    sufficient = detune < threshold * inv and inv < threshold
    # Rayleigh range at the wavenumber under test, k w0^2 / 2 (= geom.z_R when k = geom.k)
    kzr = 2.0 / (k * k * geom.w0 ** 2)
    hierarchy = abs(4 * l * Omega / omega) < threshold * kzr and kzr < threshold
    return ParaxialityReport(float(eps), bool(eps < threshold), bool(sufficient), bool(hierarchy))
