"""Scattering coefficients c_{l',p';l,p} of reflecting surfaces.

Two phenomenological models (a metasurface imposing a fixed OAM change and a
Gaussian rough-surface model) plus a weak-scattering overlap evaluated from an
explicit height profile h(r, phi).
"""
import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import roots_genlaguerre

from .beams import lg_mode
from .errors import ConvergenceError, DomainError, TruncationError


@dataclass(frozen=True)
class Metasurface:
    delta_l_star: int

    def __post_init__(self):
        if int(self.delta_l_star) != self.delta_l_star or self.delta_l_star == 0:
            raise DomainError("a metasurface needs a non-zero integer OAM change")

    @property
    def dominant_delta_l(self):
        return self.delta_l_star


def jacobi_theta3(u, q, tol=1e-16):
    """theta_3(u, q) = 1 + 2 sum_{n>=1} q^{n^2} cos(2 n u), summed until q^{n^2} < tol."""
    if not 0 <= q < 1:
        raise DomainError("nome must satisfy 0 <= q < 1")
    total, n = 1.0, 1
    while True:
        term = q ** (n * n)
        if term < tol:
            return total
        total += 2 * term * math.cos(2 * n * u)
        n += 1


def lattice_gaussian_sum(sigma):
    """sum_{k in Z} exp(-k^2 / 2 sigma^2), through its Poisson-resummed theta form."""
    return math.sqrt(2 * math.pi) * sigma * jacobi_theta3(math.pi, math.exp(-2 * math.pi ** 2 * sigma ** 2))


def normalization(sigma_l, sigma_p):
    """Normalization constant N of the rough-surface model, as displayed:

        N^2 = (sqrt(2 pi) s_l theta3(pi, e^{-2 pi^2 s_l^2}) - 1)(same with s_p).

    The product only counts index changes with both dl != 0 and dp != 0, so
    it does not normalize the columns of the displayed coefficient; the model
    itself uses ``RoughGaussian.norm`` unless ``norm_convention="printed"``.
    """
    if not (sigma_l > 0 and sigma_p > 0):
        raise DomainError("widths must be positive")
    return math.sqrt((lattice_gaussian_sum(sigma_l) - 1) * (lattice_gaussian_sum(sigma_p) - 1))


def _splitmix64(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def _pair_uniform(seed, a_l, a_p, b_l, b_p):
    with np.errstate(over="ignore"):
        h = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
        for v in (a_l, a_p, b_l, b_p):
            h = _splitmix64(h ^ (np.asarray(v, dtype=np.int64).astype(np.uint64) + np.uint64(1 << 32)))
    return (h >> np.uint64(11)).astype(float) / float(1 << 53)


@dataclass(frozen=True)
class RoughGaussian:
    """Gaussian model of a rough reflector.

    ``phase_seed=None`` gives the all-zero phase table; an integer seed gives
    a reproducible random table with theta(a, b) = -theta(b, a) exactly.
    ``norm_convention`` is "column" (columns of c normalized, default) or
    "printed" (constant N from ``normalization``).
    """

    epsilon: float
    sigma_l: float
    sigma_p: float
    phase_seed: Optional[int] = None
    norm_convention: str = "column"

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise DomainError("epsilon must lie in [0, 1)")
        if not (self.sigma_l > 0 and self.sigma_p > 0):
            raise DomainError("widths must be positive")
        if self.norm_convention not in ("column", "printed"):
            raise DomainError("norm_convention must be 'column' or 'printed'")

    def norm(self, p_in=0):
        """N for the column with radial index p_in.

        With p >= 0 the sum over dp is one-sided for small p_in, so the
        normalizer uses sum_{dp >= -p_in} instead of the full lattice sum.
        """
        if self.norm_convention == "printed":
            return normalization(self.sigma_l, self.sigma_p)
        sl = lattice_gaussian_sum(self.sigma_l)
        sp = lattice_gaussian_sum(self.sigma_p)
        k = np.arange(1, int(p_in) + 1)
        sp_half = 0.5 * (sp + 1) + np.exp(-k ** 2 / (2 * self.sigma_p ** 2)).sum()
        return math.sqrt(sl * sp_half - 1)

    def phase(self, l_a, p_a, l_b, p_b):
        """theta_{a;b}, antisymmetric in its two index pairs."""
        l_a, p_a, l_b, p_b = np.broadcast_arrays(*(np.asarray(v, dtype=np.int64) for v in (l_a, p_a, l_b, p_b)))
        if self.phase_seed is None:
            return np.zeros(l_a.shape)
        a_first = (l_a < l_b) | ((l_a == l_b) & (p_a < p_b))
        same = (l_a == l_b) & (p_a == p_b)
        lo_l = np.where(a_first, l_a, l_b)
        lo_p = np.where(a_first, p_a, p_b)
        hi_l = np.where(a_first, l_b, l_a)
        hi_p = np.where(a_first, p_b, p_a)
        u = _pair_uniform(int(self.phase_seed), lo_l, lo_p, hi_l, hi_p)
        th = np.pi * (2 * u - 1)
        return np.where(same, 0.0, np.where(a_first, th, -th))

    @property
    def dominant_delta_l(self):
        return None


def scatter_coeff(model, l_out, p_out, l_in, p_in):
    """c_{l_out,p_out; l_in,p_in}; broadcasts over array arguments."""
    l_out, p_out, l_in, p_in = np.broadcast_arrays(
        *(np.asarray(v, dtype=np.int64) for v in (l_out, p_out, l_in, p_in))
    )
    if np.any(p_out < 0) or np.any(p_in < 0):
        raise DomainError("radial indices must be non-negative")
    if isinstance(model, Metasurface):
        c = np.where((l_out == l_in + model.delta_l_star) & (p_out == p_in), -1.0 + 0j, 0j)
    elif isinstance(model, RoughGaussian):
        eps = model.epsilon
        uniq, inv = np.unique(p_in, return_inverse=True)
        norms = np.array([model.norm(int(p)) for p in uniq])[inv].reshape(p_in.shape)
        dl, dp = l_out - l_in, p_out - p_in
        diag = (dl == 0) & (dp == 0)
        diffuse = (1j * eps / norms) * np.exp(-dl ** 2 / (4 * model.sigma_l ** 2) - dp ** 2 / (4 * model.sigma_p ** 2))
        diffuse = diffuse * np.exp(1j * model.phase(l_in, p_in, l_out, p_out))
        c = np.where(diag, -np.sqrt(1 - eps ** 2) - 1j * eps / norms, 0j) + diffuse
    else:
        raise DomainError(f"unknown surface model {model!r}")
    return complex(c) if c.ndim == 0 else c


def default_window(model):
    """(L, P) half-widths giving Gaussian tails below e^{-25}."""
    if isinstance(model, Metasurface):
        return abs(model.delta_l_star), 0
    return math.ceil(10 * model.sigma_l), math.ceil(10 * model.sigma_p)


def column_norm_check(model, l_in, p_in, L=None, P=None, tail_tol=1e-10):
    """Sum of |c|^2 over outputs l_in +- L, p_in +- P (p >= 0)."""
    dL, dP = default_window(model)
    L = dL if L is None else L
    P = dP if P is None else P
    if isinstance(model, RoughGaussian) and model.epsilon > 0:
        tail = math.exp(-((L + 1) ** 2) / (2 * model.sigma_l ** 2)) + math.exp(-((P + 1) ** 2) / (2 * model.sigma_p ** 2))
        if model.epsilon ** 2 * tail * 4 / model.norm(p_in) ** 2 > tail_tol:
            raise TruncationError(f"window L={L}, P={P} leaves Gaussian tail above {tail_tol:g}")
    if isinstance(model, Metasurface) and abs(model.delta_l_star) > L:
        raise TruncationError("window does not reach the metasurface output")
    ls = np.arange(l_in - L, l_in + L + 1)
    ps = np.arange(max(0, p_in - P), p_in + P + 1)
    lo, po = np.meshgrid(ls, ps, indexing="ij")
    c = scatter_coeff(model, lo, po, l_in, p_in)
    return float(np.sum(np.abs(c) ** 2))


def scattering_table(model, l_range, p_range):
    """Rows (l_out, p_out, l_in, p_in, c) for every pair in the given ranges."""
    rows = []
    for l_in in l_range:
        for p_in in p_range:
            for l_out in l_range:
                for p_out in p_range:
                    c = scatter_coeff(model, l_out, p_out, l_in, p_in)
                    if c != 0:
                        rows.append((l_out, p_out, l_in, p_in, c))
    return rows


@dataclass(frozen=True)
class HeightField:
    """Surface height h(r, phi) in metres with rms value sigma_h."""

    h: Callable
    rms: float
    description: str = ""

    def weak_scattering_ok(self, k, threshold=0.01):
        return k * self.rms < threshold

    @classmethod
    def constant(cls, h0):
        return cls(lambda r, phi: np.full(np.broadcast(r, phi).shape, float(h0)), abs(h0), "constant")

    @classmethod
    def from_grid(cls, r, phi, h, description="sampled grid"):
        """Bilinear interpolation of h sampled on a (r, phi) grid; periodic in phi."""
        r = np.asarray(r, dtype=float)
        phi = np.asarray(phi, dtype=float)
        h = np.asarray(h, dtype=float).reshape(len(r), len(phi))
        order = np.argsort(phi)
        phi, h = phi[order], h[:, order]
        phi_ext = np.concatenate([phi, [phi[0] + 2 * np.pi]])
        h_ext = np.concatenate([h, h[:, :1]], axis=1)
        interp = RegularGridInterpolator((r, phi_ext), h_ext, method="linear", bounds_error=False, fill_value=None)

        def fn(rr, pp):
            rr, pp = np.broadcast_arrays(np.asarray(rr, float), np.asarray(pp, float))
            pp = phi[0] + np.mod(pp - phi[0], 2 * np.pi)
            rr = np.clip(rr, r[0], r[-1])
            return interp(np.stack([rr.ravel(), pp.ravel()], axis=-1)).reshape(rr.shape)

        rms = float(np.sqrt(np.mean(h ** 2)))
        return cls(fn, rms, description)

    @classmethod
    def from_csv(cls, path):
        """Read rows ``r,phi,h`` (header optional) sampled on a full grid."""
        data = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                try:
                    data.append([float(v) for v in row[:3]])
                except ValueError:
                    continue
        data = np.array(data)
        rs = np.unique(data[:, 0])
        ps = np.unique(data[:, 1])
        if len(rs) * len(ps) != len(data):
            raise DomainError("height samples do not form a full (r, phi) grid")
        grid = np.full((len(rs), len(ps)), np.nan)
        grid[np.searchsorted(rs, data[:, 0]), np.searchsorted(ps, data[:, 1])] = data[:, 2]
        return cls.from_grid(rs, ps, grid, description=f"grid from {path}")


def _overlap(field, geom, l_out, p_out, l_in, p_in, n_r, n_phi):
    alpha = 0.5 * (abs(l_out) + abs(l_in))
    t, wt = roots_genlaguerre(n_r, alpha)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    T, PHI = np.meshgrid(t, phi, indexing="ij")
    r = geom.w0 * np.sqrt(T / 2)
    f = np.conj(lg_mode(l_out, p_out, r, PHI, 0.0, geom)) * field.h(r, PHI) * lg_mode(l_in, p_in, r, PHI, 0.0, geom)
    # r dr = w0^2/4 dt; divide out the t^alpha e^{-t} quadrature weight
    f = f * (geom.w0 ** 2 / 4) * np.exp(T) * T ** (-alpha)
    return complex(np.sum(wt[:, None] * f) * (2 * np.pi / n_phi))


def height_overlap(field, geom, l_out, p_out, l_in, p_in, n_r=64, n_phi=512, tol=1e-10, max_doublings=3):
    """Matrix element of h between LG modes in the waist plane.

    Generalized Gauss-Laguerre in t = 2 r^2 / w0^2 times a periodic trapezoid
    in phi; both orders are doubled until successive values agree.
    Returns (value, error estimate).
    """
    v = _overlap(field, geom, l_out, p_out, l_in, p_in, n_r, n_phi)
    for _ in range(max_doublings):
        n_r, n_phi = 2 * n_r, 2 * n_phi
        v2 = _overlap(field, geom, l_out, p_out, l_in, p_in, n_r, n_phi)
        err = abs(v2 - v)
        v = v2
        if err <= tol * max(1.0, abs(v)) or err <= tol * field.rms:
            return v, err
    raise ConvergenceError(f"height overlap did not converge (last change {err:.2e})")


def height_field_coeffs(field, geom, k, l_out, p_out, l_in, p_in, strict=False, **quad):
    """Weak-scattering coefficient -delta delta - 2ik <u_out| h |u_in>."""
    if k * field.rms >= 0.1:
        msg = f"k*sigma_h = {k * field.rms:.3g} is outside the weak-scattering regime"
        if strict:
            raise DomainError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    elif not field.weak_scattering_ok(k):
        warnings.warn(f"k*sigma_h = {k * field.rms:.3g} is not much smaller than 1", RuntimeWarning, stacklevel=2)
    val, _ = height_overlap(field, geom, l_out, p_out, l_in, p_in, **quad)
    diag = -1.0 if (l_out == l_in and p_out == p_in) else 0.0
    return complex(diag - 2j * k * val)
