"""Input-to-output mode map of a rotating reflector over a truncated mode set.

The output mode a = (n, l, p) receives the input i = (n', l', p') with weight

    U_{a,i} = c_{l',p'; l,p} K_{n;n'}(beta),  beta = (omega_in - dl Omega - omega_out)/sigma,

dl = l' - l, i.e. the output row at OAM l collects inputs at l + dl (for a
metasurface, the inputs at l + dl*).  Around the prior Omega0 the map is
U(Omega0 + dOmega) ~ U~ G~ with G~ = 1 + dOmega g and, per OAM change dl,

    g[n, n-1] = nu = -i sqrt(n) dl / sigma,  g[n, n] = mu = -i tau0 dl,
    g[n, n+1] = gamma = -i sqrt(n+1) dl / sigma.
"""
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import io
from .beams import BasisParams, k_coefficient, k_matrix
from .errors import ConfigError, TruncationError, ValidityWarning
from .gaussian import ModeIndex
from .surfaces import Metasurface, RoughGaussian, scatter_coeff

SUPPORT_THRESHOLD = 1e-12


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything needed to assemble the transform.

    ``shift_convention`` selects which OAM change drives the frequency shift
    of a coupling: "pairwise" uses each coupling's own dl (a specular
    reflection is unshifted); "probe" applies the probe's dl to every block.
    The two coincide for a metasurface.
    """

    surface: object
    basis: BasisParams
    measured_mode: ModeIndex = ModeIndex(0, 0, 0)
    Omega0: float = 0.0
    omega_in: Optional[float] = None
    omega_out: Optional[float] = None
    n_max: Optional[int] = None
    l_window: Optional[int] = None
    p_window: Optional[int] = None
    probe_delta_l: int = 1
    shift_convention: str = "pairwise"
    threshold: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "measured_mode", ModeIndex(*self.measured_mode).validate())
        if self.shift_convention not in ("pairwise", "probe"):
            raise ConfigError("shift_convention must be 'pairwise' or 'probe'")
        if isinstance(self.surface, RoughGaussian) and self.probe_delta_l == 0:
            raise ConfigError("the rough-surface probe needs a non-zero OAM change")

    @property
    def w_in(self):
        return self.basis.omega0 if self.omega_in is None else self.omega_in

    @property
    def dominant_delta_l(self):
        if isinstance(self.surface, Metasurface):
            return self.surface.delta_l_star
        return self.probe_delta_l

    @property
    def w_out(self):
        if self.omega_out is not None:
            return self.omega_out
        return self.w_in - self.dominant_delta_l * self.Omega0

    @property
    def sigma(self):
        return self.basis.sigma

    @property
    def tau0(self):
        return self.basis.tau0

    def windows(self):
        m = self.measured_mode
        n_max = m.n + 2 if self.n_max is None else self.n_max
        if isinstance(self.surface, Metasurface):
            L = abs(self.surface.delta_l_star) if self.l_window is None else self.l_window
            P = 0 if self.p_window is None else self.p_window
        elif isinstance(self.surface, RoughGaussian):
            L = math.ceil(10 * self.surface.sigma_l) if self.l_window is None else self.l_window
            P = math.ceil(10 * self.surface.sigma_p) if self.p_window is None else self.p_window
        else:
            raise ConfigError(f"unknown surface model {self.surface!r}")
        if n_max < m.n + 1:
            raise ConfigError("n_max must exceed the measured n")
        return n_max, L, P

    def scaled(self, factor):
        """Copy with every truncation window enlarged by ``factor``."""
        n_max, L, P = self.windows()
        return replace(self, n_max=math.ceil(n_max * factor), l_window=math.ceil(L * factor),
                       p_window=math.ceil(P * factor))

    def validity_flags(self):
        flags = []
        if abs(self.Omega0) >= self.threshold * self.w_in:
            flags.append("Omega0/omega_in not small")
        return flags


def build_generator(config, n=None, delta_l=None):
    """Per-unit-dOmega coefficients (nu, mu, gamma) for temporal index n and OAM change dl."""
    n = config.measured_mode.n if n is None else n
    dl = config.dominant_delta_l if delta_l is None else delta_l
    s = config.sigma
    nu = -1j * math.sqrt(n) * dl / s
    mu = -1j * config.tau0 * dl
    gamma = -1j * math.sqrt(n + 1) * dl / s
    return nu, mu, gamma


def generator_matrix(n_max, delta_l, sigma, tau0):
    """Tridiagonal g (per unit dOmega) on temporal indices 0..n_max."""
    k = np.arange(1, n_max + 1)
    g = np.diag(np.full(n_max + 1, -1j * tau0 * delta_l))
    off = -1j * np.sqrt(k) * delta_l / sigma
    g[np.arange(n_max), k] = off
    g[k, np.arange(n_max)] = off
    return g


@dataclass
class _Layout:
    modes: tuple
    blocks: list
    N: int

    def index(self, mode):
        return self.modes.index(ModeIndex(*mode))


def _layout(config):
    n_max, L, P = config.windows()
    m = config.measured_mode
    blocks = [(l, p) for l in range(m.l - L, m.l + L + 1) for p in range(max(0, m.p - P), m.p + P + 1)]
    modes = tuple(ModeIndex(n, l, p) for n in range(n_max + 1) for (l, p) in blocks)
    return _Layout(modes, blocks, n_max + 1)


def _coupling(config, layout):
    bl = np.array(layout.blocks)
    la, pa = bl[:, 0][:, None], bl[:, 1][:, None]
    li, pi_ = bl[:, 0][None, :], bl[:, 1][None, :]
    C = scatter_coeff(config.surface, li, pi_, la, pa)
    dl = li - la
    return C, np.broadcast_to(dl, C.shape)


def _beta(config, dl):
    return (config.w_in - dl * config.Omega0 - config.w_out) / config.sigma


def _shift_dl(config, dl):
    if config.shift_convention == "probe":
        return np.full_like(dl, config.dominant_delta_l)
    return dl


def _assemble(config, layout, block_fn):
    C, dl = _coupling(config, layout)
    N, B = layout.N, len(layout.blocks)
    out = np.zeros((N, B, N, B), dtype=complex)
    nonzero = np.abs(C) > 0
    for key in np.unique(dl[nonzero]):
        a, i = np.nonzero(nonzero & (dl == key))
        # advanced indices split by a slice move to the front: shape (k, N, N)
        out[:, a, :, i] = C[a, i][:, None, None] * block_fn(int(key))[None]
    return out.reshape(N * B, N * B)


def build_U(config):
    """U~ = U(Omega0) over the truncated mode set (mode order lexicographic on (n, l, p))."""
    layout = _layout(config)
    N = layout.N
    return _assemble(config, layout, lambda dl: k_matrix(N - 1, _beta(config, dl)))


def build_dU(config):
    """dU/dOmega at Omega0, i.e. U~ g with the per-coupling generator."""
    layout = _layout(config)
    N = layout.N

    def blk(dl):
        g_dl = int(_shift_dl(config, np.array(dl)))
        # one extra temporal index makes the top column of K g exact (g is tridiagonal)
        Kg = k_matrix(N, _beta(config, dl)) @ generator_matrix(N, g_dl, config.sigma, config.tau0)
        return Kg[:N, :N]

    return _assemble(config, layout, blk)


def first_order_transform(config, dOmega):
    """U~ G~(dOmega); a ValidityWarning is issued outside first-order validity."""
    n_max, L, _ = config.windows()
    dl_max = max(2 * L, abs(config.dominant_delta_l))
    if abs(dOmega) * dl_max * max(math.sqrt(n_max + 1) / config.sigma, abs(config.tau0)) >= 0.1:
        warnings.warn("dOmega outside first-order validity", ValidityWarning, stacklevel=2)
    return build_U(config) + dOmega * build_dU(config)


def exact_transform(config, dOmega):
    """U(Omega0 + dOmega) to all orders, with the output basis re-centred at the
    shifted carrier and projected back (the construction whose first-order
    expansion is U~ G~).  Displacements along one axis compose additively, so
    each block is a phase times K at the shifted beta.
    """
    layout = _layout(config)
    N = layout.N

    def blk(dl):
        g_dl = int(_shift_dl(config, np.array(dl)))
        beta = _beta(config, dl) + g_dl * dOmega / config.sigma
        return np.exp(-1j * g_dl * dOmega * config.tau0) * k_matrix(N - 1, beta)

    return _assemble(config, layout, blk)


@dataclass(frozen=True)
class MeasuredRow:
    """The measured-mode row restricted to its input support.

    Enough to propagate product-state probes without the full matrix.
    """

    measured_mode: ModeIndex
    support: tuple
    c: np.ndarray
    beta0: np.ndarray
    shift_dl: np.ndarray
    sigma: float
    tau0: float

    def _k(self, beta):
        n = self.measured_mode.n
        return np.array([k_coefficient(n, s.n, b) for s, b in zip(self.support, np.broadcast_to(beta, self.c.shape))])

    def value(self, dOmega=0.0):
        """Row of U(Omega0 + dOmega), all orders."""
        beta = self.beta0 + self.shift_dl * dOmega / self.sigma
        return self.c * np.exp(-1j * self.shift_dl * dOmega * self.tau0) * self._k(beta)

    def derivative(self):
        """Row of dU/dOmega at Omega0 through (nu, mu, gamma)."""
        n = self.measured_mode.n
        out = np.empty(len(self.support), dtype=complex)
        for j, s in enumerate(self.support):
            dl = self.shift_dl[j]
            b = self.beta0[j]
            # (K g)[n, n_i] = K[n, n_i] mu + K[n, n_i - 1] gamma(n_i - 1) + K[n, n_i + 1] nu(n_i + 1)
            acc = k_coefficient(n, s.n, b) * (-1j * self.tau0 * dl)
            if s.n > 0:
                acc += k_coefficient(n, s.n - 1, b) * (-1j * math.sqrt(s.n) * dl / self.sigma)
            acc += k_coefficient(n, s.n + 1, b) * (-1j * math.sqrt(s.n + 1) * dl / self.sigma)
            out[j] = self.c[j] * acc
        return out

    def first_order(self, dOmega):
        return self.value(0.0) + dOmega * self.derivative()

    def position(self, mode):
        return self.support.index(ModeIndex(*mode))


@dataclass(frozen=True)
class TransformPair:
    config: ProtocolConfig
    modes: tuple
    U_tilde: np.ndarray
    dU_dOmega: np.ndarray
    input_support: tuple
    row: MeasuredRow
    tail_mass: float
    flags: tuple = field(default_factory=tuple)

    @property
    def measured_index(self):
        return self.modes.index(self.config.measured_mode)

    def coupling_map(self):
        """(input mode, U~_{m,i}, dU_{m,i}) for the measured row's support."""
        k = self.measured_index
        out = []
        for s in self.input_support:
            j = self.modes.index(s)
            out.append((s, complex(self.U_tilde[k, j]), complex(self.dU_dOmega[k, j])))
        return out

    def to_dict(self):
        def cpx(M):
            return [[[z.real, z.imag] for z in row] for row in M]

        return {
            "measured_mode": list(self.config.measured_mode),
            "modes": [list(m) for m in self.modes],
            "input_support": [list(m) for m in self.input_support],
            "U_tilde": cpx(self.U_tilde),
            "dU_dOmega": cpx(self.dU_dOmega),
            "tail_mass": self.tail_mass,
            "flags": list(self.flags),
        }

    def to_json(self):
        return io.dumps(self.to_dict())


def build_transform_pair(config, tail_tol=1e-8):
    layout = _layout(config)
    U = build_U(config)
    dU = build_dU(config)
    k = layout.index(config.measured_mode)
    mask = (np.abs(U[k]) > SUPPORT_THRESHOLD) | (np.abs(dU[k]) > SUPPORT_THRESHOLD)
    support = tuple(layout.modes[j] for j in np.nonzero(mask)[0])
    flags = list(config.validity_flags())

    tail = 1.0 - float(np.sum(np.abs(U[k]) ** 2))
    if tail > tail_tol:
        raise TruncationError(f"measured row misses {tail:.2e} of its norm; enlarge the truncation")
    if tail < -tail_tol:
        flags.append(f"measured row norm exceeds 1 by {-tail:.3g}")

    m = config.measured_mode
    c = np.array([scatter_coeff(config.surface, s.l, s.p, m.l, m.p) for s in support])
    dl = np.array([s.l - m.l for s in support])
    row = MeasuredRow(m, support, c, _beta(config, dl), _shift_dl(config, dl), config.sigma, config.tau0)
    return TransformPair(config, layout.modes, U, dU, support, row, tail, tuple(flags))
