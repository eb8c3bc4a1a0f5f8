"""Finite-mode Gaussian states in the real quadrature basis.

Conventions: hbar = 2, vacuum covariance = identity, x = a^dag + a,
p = i(a^dag - a).  The mean vector is ordered (x_1, p_1, ..., x_d, p_d) and
modes are sorted lexicographically on (n, l, p).
"""
from dataclasses import dataclass
from typing import NamedTuple

import json

import numpy as np

from . import io
from .errors import (
    DomainError,
    InvalidModeSet,
    ModeNotFound,
    NonUnitaryError,
    PhysicalityError,
    UnsupportedComposition,
)


class ModeIndex(NamedTuple):
    """Temporal Hermite-Gauss index n, OAM l and radial index p."""

    n: int
    l: int
    p: int

    def validate(self):
        if self.n < 0 or self.p < 0:
            raise InvalidModeSet(f"negative index in {tuple(self)}")
        return self


class QuadratureStats(NamedTuple):
    mean: float
    var: float


def symplectic_form(d):
    return np.kron(np.eye(d), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def realify(U):
    """Real 2d x 2d matrix acting on (x, p) pairs for a complex mode map U.

    Each complex entry u becomes the block [[Re u, -Im u], [Im u, Re u]].
    """
    U = np.atleast_2d(np.asarray(U, dtype=complex))
    a, b = U.shape
    T = np.empty((2 * a, 2 * b))
    T[0::2, 0::2] = U.real
    T[0::2, 1::2] = -U.imag
    T[1::2, 0::2] = U.imag
    T[1::2, 1::2] = U.real
    return T


def squeezed_block(s, theta):
    c, sh = np.cosh(2 * s), np.sinh(2 * s)
    return np.array(
        [
            [c - np.cos(theta) * sh, np.sin(theta) * sh],
            [np.sin(theta) * sh, c + np.cos(theta) * sh],
        ]
    )


@dataclass(frozen=True)
class GaussianState:
    modes: tuple
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        modes = tuple(ModeIndex(*m).validate() for m in self.modes)
        if not modes:
            raise InvalidModeSet("mode list is empty")
        if len(set(modes)) != len(modes):
            raise InvalidModeSet("duplicate modes")
        d = len(modes)
        mean = np.array(self.mean, dtype=float).reshape(2 * d)
        cov = np.array(self.cov, dtype=float).reshape(2 * d, 2 * d)
        scale = max(1.0, np.max(np.abs(cov)))
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise PhysicalityError("covariance matrix is not symmetric")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def d(self):
        return len(self.modes)

    def index(self, mode):
        try:
            return self.modes.index(ModeIndex(*mode))
        except ValueError:
            raise ModeNotFound(f"mode {tuple(mode)} not in state") from None

    def block(self, mode):
        k = self.index(mode)
        return self.mean[2 * k:2 * k + 2].copy(), self.cov[2 * k:2 * k + 2, 2 * k:2 * k + 2].copy()

    def _replace(self, mean=None, cov=None):
        return GaussianState(self.modes, self.mean if mean is None else mean, self.cov if cov is None else cov)

    def min_uncertainty_eigenvalue(self):
        """Smallest eigenvalue of cov + i*Omega; non-negative for physical states."""
        H = self.cov + 1j * symplectic_form(self.d)
        return float(np.linalg.eigvalsh(H)[0])

    def is_physical(self, tol=1e-10):
        return self.min_uncertainty_eigenvalue() >= -tol

    def mean_photon_number(self, mode=None):
        if mode is None:
            mean, cov = self.mean, self.cov
            return float(mean @ mean / 4 + (np.trace(cov) - 2 * self.d) / 4)
        mean, cov = self.block(mode)
        return float(mean @ mean / 4 + (np.trace(cov) - 2) / 4)

    def to_dict(self):
        return {
            "modes": [list(m) for m in self.modes],
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
        }

    def to_json(self):
        return io.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(tuple(ModeIndex(*m) for m in data["modes"]), data["mean"], data["cov"])


def sorted_modes(modes):
    modes = [ModeIndex(*m).validate() for m in modes]
    if len(set(modes)) != len(modes):
        raise InvalidModeSet("duplicate modes")
    return tuple(sorted(modes))


def vacuum(modes):
    modes = tuple(ModeIndex(*m) for m in modes)
    if not modes:
        raise InvalidModeSet("mode list is empty")
    d = len(modes)
    return GaussianState(modes, np.zeros(2 * d), np.eye(2 * d))


def displace(state, mode, alpha):
    k = state.index(mode)
    mean = state.mean.copy()
    mean[2 * k] += 2 * np.real(alpha)
    mean[2 * k + 1] += 2 * np.imag(alpha)
    return state._replace(mean=mean)


def squeeze(state, mode, s, theta=0.0):
    """Prepare a squeezed vacuum on ``mode`` (its block must be the vacuum)."""
    if s < 0:
        raise DomainError("squeezing parameter must be non-negative")
    k = state.index(mode)
    sl = slice(2 * k, 2 * k + 2)
    cov = state.cov.copy()
    others = np.delete(cov[sl, :], [2 * k, 2 * k + 1], axis=1)
    if not np.allclose(cov[sl, sl], np.eye(2), atol=1e-12, rtol=0) or np.any(np.abs(others) > 1e-12):
        raise UnsupportedComposition("squeeze acts only on an uncorrelated vacuum covariance block")
    cov[sl, sl] = squeezed_block(s, theta)
    return state._replace(cov=cov)


def apply_complex_transform(state, U, *, allow_nonunitary=False, unitarity_tol=1e-8):
    U = np.asarray(U, dtype=complex)
    if U.shape != (state.d, state.d):
        raise DomainError(f"transform shape {U.shape} does not match {state.d} modes")
    if not allow_nonunitary:
        err = np.max(np.abs(U.conj().T @ U - np.eye(state.d)))
        if err > unitarity_tol:
            raise NonUnitaryError(f"||U^dag U - I||_max = {err:.3e} exceeds {unitarity_tol:g}")
    T = realify(U)
    cov = T @ state.cov @ T.T
    return state._replace(mean=T @ state.mean, cov=0.5 * (cov + cov.T))


def loss_channel(state, mode, eta):
    if not 0.0 <= eta <= 1.0:
        raise DomainError("eta must lie in [0, 1]")
    k = state.index(mode)
    g = np.ones(2 * state.d)
    g[2 * k:2 * k + 2] = np.sqrt(1.0 - eta)
    mean = g * state.mean
    cov = state.cov * np.outer(g, g)
    cov[2 * k:2 * k + 2, 2 * k:2 * k + 2] += eta * np.eye(2)
    return state._replace(mean=mean, cov=cov)


def homodyne_stats(state, mode, quadrature_angle=0.0):
    mean, cov = state.block(mode)
    v = np.array([np.cos(quadrature_angle), np.sin(quadrature_angle)])
    return QuadratureStats(float(v @ mean), float(v @ cov @ v))


def purity(state, mode):
    _, cov = state.block(mode)
    det = np.linalg.det(cov)
    if not det > 0:
        raise PhysicalityError("singular or non-positive covariance block")
    P = det ** -0.5
    if P > 1 + 1e-10:
        raise PhysicalityError(f"purity {P} exceeds 1")
    return float(P)


def output_mode_moments(u_row, means, covs):
    """Mean and covariance of a single output mode fed by independent inputs.

    ``u_row`` holds the complex coefficients of that output mode over the
    inputs, ``means`` is (k, 2) and ``covs`` is (k, 2, 2).  Cheaper than a full
    ``apply_complex_transform`` when only one mode is measured.
    """
    u_row = np.asarray(u_row, dtype=complex)
    T = realify(u_row[None, :]).reshape(2, len(u_row), 2).transpose(1, 0, 2)
    mean = np.einsum("kij,kj->i", T, means)
    cov = np.einsum("kij,kjl,kml->im", T, covs, T)
    return mean, 0.5 * (cov + cov.T)
