"""Fisher information of homodyne detection on the measured mode, single-mode
quantum Fisher information, closed forms for both surface models and the
optimal displacement/squeezing energy split.

All Fisher values are in (rad/s)^-2.
"""
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConsistencyError, DomainError, PhysicalityError, ValidityWarning
from .gaussian import (
    GaussianState,
    ModeIndex,
    apply_complex_transform,
    displace,
    homodyne_stats,
    loss_channel,
    output_mode_moments,
    realify,
    squeeze,
    squeezed_block,
    vacuum,
)
from .optimize import golden_section_max
from .surfaces import Metasurface, RoughGaussian
from .transform import exact_transform, first_order_transform

UNITS = "(rad/s)^-2"


# ---------------------------------------------------------------- probes

class ProbeEntry(NamedTuple):
    mode: ModeIndex
    alpha: complex = 0j
    s: float = 0.0
    theta: float = 0.0


@dataclass(frozen=True)
class ProbeSpec:
    """Product of displaced squeezed vacua D(alpha) S(s e^{i theta}) |0>."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(ProbeEntry(ModeIndex(*e[0]), *e[1:]) for e in self.entries)
        if len({e.mode for e in entries}) != len(entries):
            raise DomainError("a probe lists each mode once")
        if any(e.s < 0 for e in entries):
            raise DomainError("squeezing parameters must be non-negative")
        object.__setattr__(self, "entries", entries)

    @property
    def N_coh(self):
        return float(sum(abs(e.alpha) ** 2 for e in self.entries))

    @property
    def N_sq(self):
        return float(sum(math.sinh(e.s) ** 2 for e in self.entries))

    @property
    def N(self):
        return self.N_coh + self.N_sq

    @property
    def is_classical(self):
        return all(e.s == 0 for e in self.entries)


def squeezing_from_photons(N_sq):
    return math.asinh(math.sqrt(N_sq))


def exp_minus_2s(N_sq):
    """e^{-2s} = 1 + 2N - 2 sqrt(N(N+1)) for sinh^2 s = N, in cancellation-free form."""
    return 1.0 / (math.sqrt(N_sq + 1) + math.sqrt(N_sq)) ** 2


def optimal_squeeze_angle(u):
    """Angle theta whose squeezed quadrature lands on x after the weight u.

    A weight u = |u| e^{i phi} rotates phase space by phi and the input
    block of angle theta is squeezed along -theta/2, so theta = 2 phi.
    """
    return float(np.mod(2 * np.angle(u), 2 * np.pi))


def aligned_alpha(du, amplitude):
    """Displacement amplitude with phase -arg(dU) so that dU * alpha is real positive."""
    if abs(du) == 0:
        return complex(amplitude)
    return complex(amplitude * np.exp(-1j * np.angle(du)))


def probe_modes(pair):
    """(displaced mode, squeezed mode) of the canonical probe for this surface."""
    cfg = pair.config
    m = cfg.measured_mode
    if isinstance(cfg.surface, Metasurface):
        l_in = m.l + cfg.surface.delta_l_star
        return ModeIndex(m.n + 1, l_in, m.p), ModeIndex(m.n, l_in, m.p)
    return ModeIndex(m.n + 1, m.l + cfg.probe_delta_l, m.p), ModeIndex(m.n, m.l, m.p)


def quantum_probe(pair, N_coh, N_sq):
    """Displacement on the Doppler-coupled neighbour, squeezing on the mode
    reflected into the measured mode, both phase-aligned."""
    d_mode, s_mode = probe_modes(pair)
    row = pair.row
    for mode in (d_mode, s_mode):
        if mode not in row.support:
            raise DomainError(f"probe mode {tuple(mode)} is not coupled to the measured mode")
    alpha = aligned_alpha(row.derivative()[row.position(d_mode)], math.sqrt(N_coh))
    s = squeezing_from_photons(N_sq)
    theta = optimal_squeeze_angle(row.value(0.0)[row.position(s_mode)])
    return ProbeSpec((ProbeEntry(d_mode, alpha, 0.0, 0.0), ProbeEntry(s_mode, 0j, s, theta)))


def classical_probe(pair, N, mode=None):
    """Coherent probe with all photons in ``mode`` (default: the canonical displaced mode)."""
    row = pair.row
    mode = probe_modes(pair)[0] if mode is None else ModeIndex(*mode)
    if mode not in row.support:
        raise DomainError(f"probe mode {tuple(mode)} is not coupled to the measured mode")
    alpha = aligned_alpha(row.derivative()[row.position(mode)], math.sqrt(N))
    return ProbeSpec((ProbeEntry(mode, alpha),))


# ------------------------------------------------ measured-mode moments

def _input_moments(pair, probe):
    row = pair.row
    k = len(row.support)
    means = np.zeros((k, 2))
    covs = np.tile(np.eye(2), (k, 1, 1))
    for e in probe.entries:
        try:
            j = row.position(e.mode)
        except ValueError:
            raise DomainError(f"probe mode {tuple(e.mode)} is outside the input support") from None
        covs[j] = squeezed_block(e.s, e.theta)
        means[j] = (2 * e.alpha.real, 2 * e.alpha.imag)
    return means, covs


def measured_moments(pair, probe, eta, dOmega=0.0, order="exact"):
    """(mean, cov) of the measured mode after the surface and the loss."""
    row = pair.row
    u = row.value(dOmega) if order == "exact" else row.first_order(dOmega)
    means, covs = _input_moments(pair, probe)
    mean, cov = output_mode_moments(u, means, covs)
    return math.sqrt(1 - eta) * mean, (1 - eta) * cov + eta * np.eye(2)


def measured_state(pair, probe, eta, dOmega=0.0, order="exact"):
    mean, cov = measured_moments(pair, probe, eta, dOmega, order)
    return GaussianState((pair.config.measured_mode,), mean, cov)


def moment_derivatives(pair, probe, eta):
    """Analytic d(mean)/dOmega, d(cov)/dOmega through (nu, mu, gamma)."""
    row = pair.row
    means, covs = _input_moments(pair, probe)
    T = realify(row.value(0.0)[None, :]).reshape(2, -1, 2).transpose(1, 0, 2)
    dT = realify(row.derivative()[None, :]).reshape(2, -1, 2).transpose(1, 0, 2)
    dmean = np.einsum("kij,kj->i", dT, means)
    dcov = np.einsum("kij,kjl,kml->im", dT, covs, T)
    dcov = dcov + dcov.T
    return math.sqrt(1 - eta) * dmean, (1 - eta) * dcov


def pipeline_state(pair, probe, eta, dOmega=0.0, order="exact"):
    """Measured-mode state through the generic Gaussian operations.

    Prepares the probe on the coupled input modes, applies the
    (sub-block of the) mode transform, the loss channel and returns the full
    output state; independent of the row-only shortcut in ``measured_moments``.
    """
    cfg = pair.config
    m = cfg.measured_mode
    modes = tuple(sorted(set(pair.input_support) | {m}))
    U_full = exact_transform(cfg, dOmega) if order == "exact" else first_order_transform(cfg, dOmega)
    idx = [pair.modes.index(x) for x in modes]
    U = U_full[np.ix_(idx, idx)]
    st = vacuum(modes)
    for e in probe.entries:
        st = squeeze(st, e.mode, e.s, e.theta)
        st = displace(st, e.mode, e.alpha)
    st = apply_complex_transform(st, U, allow_nonunitary=True)
    return loss_channel(st, m, eta)


def richardson_derivative(f, h):
    """Central difference at 0 with one Richardson step; f may return arrays."""
    d1 = (np.asarray(f(h)) - np.asarray(f(-h))) / (2 * h)
    d2 = (np.asarray(f(h / 2)) - np.asarray(f(-h / 2))) / h
    return (4 * d2 - d1) / 3


def default_step(config):
    return max(abs(config.Omega0), config.sigma) * 1e-6


def gaussian_cfi(dq, var, dvar):
    """Fisher information of a 1D Gaussian: dq^2/var + (dvar/var)^2 / 2."""
    if not var > 0:
        raise PhysicalityError("homodyne variance must be positive")
    return dq ** 2 / var + 0.5 * (dvar / var) ** 2


class HomodyneFisher(NamedTuple):
    F: float
    F_finite_difference: float
    q: float
    var: float
    dq: float
    dvar: float


def homodyne_cfi_details(pair, probe, eta, angle=0.0, rtol=1e-6, h=None):
    v = np.array([math.cos(angle), math.sin(angle)])
    mean, cov = measured_moments(pair, probe, eta)
    dmean, dcov = moment_derivatives(pair, probe, eta)
    q, var = float(v @ mean), float(v @ cov @ v)
    dq, dvar = float(v @ dmean), float(v @ dcov @ v)
    F = gaussian_cfi(dq, var, dvar)

    m = pair.config.measured_mode
    h = default_step(pair.config) if h is None else h

    def stats(d):
        st = homodyne_stats(pair_state_cache(d), m, angle)
        return np.array([st.mean, st.var])

    cache = {}

    def pair_state_cache(d):
        if d not in cache:
            cache[d] = pipeline_state(pair, probe, eta, d, order="exact")
        return cache[d]

    var0 = homodyne_stats(pair_state_cache(0.0), m, angle).var
    dq_fd, dvar_fd = richardson_derivative(stats, h)
    F_fd = gaussian_cfi(dq_fd, var0, dvar_fd)
    scale = max(abs(F), abs(F_fd), 1e-300)
    # absolute floor for probes that carry (almost) no information
    natural = 4 * (1 - eta) * (probe.N + 1) * float(np.sum(np.abs(pair.row.derivative()) ** 2)) / var
    floor = 1e-10 * natural
    if abs(F - F_fd) > rtol * scale and abs(F - F_fd) > floor:
        raise ConsistencyError(f"homodyne CFI: chain rule {F!r} vs finite difference {F_fd!r}")
    return HomodyneFisher(F, float(F_fd), q, var, dq, dvar)


def homodyne_cfi(pair, probe, eta, angle=0.0, check=True):
    """Classical Fisher information of homodyne detection at ``angle``.

    With ``check`` the chain-rule value is confirmed against Richardson
    finite differences through the generic Gaussian pipeline.
    """
    if check:
        return homodyne_cfi_details(pair, probe, eta, angle).F
    v = np.array([math.cos(angle), math.sin(angle)])
    _, cov = measured_moments(pair, probe, eta)
    dmean, dcov = moment_derivatives(pair, probe, eta)
    return gaussian_cfi(float(v @ dmean), float(v @ cov @ v), float(v @ dcov @ v))


# ------------------------------------------------------------------ QFI

def qfi_from_derivatives(cov, dmean, dcov):
    """J = Tr[(S^-1 S')^2] / (2(1+P)) + r'^T S^-1 r' with P = det(S)^-1/2."""
    det = np.linalg.det(cov)
    if not det > 0:
        raise PhysicalityError("singular covariance")
    P = det ** -0.5
    A = np.linalg.solve(cov, dcov)
    return float(0.5 * np.trace(A @ A) / (1 + P) + dmean @ np.linalg.solve(cov, dmean))


def qfi_single_mode(state_at, mode, h=1e-6, purity_tol=1e-6):
    """Single-mode QFI for a parametrized Gaussian state ``state_at(dOmega)``.

    Derivatives by Richardson-extrapolated central differences.  The formula
    assumes constant purity; a ValidityWarning is issued if |dP/dOmega| * h
    exceeds ``purity_tol``.
    """
    def moments(d):
        mean, cov = state_at(d).block(mode)
        return np.concatenate([mean, cov.ravel()])

    mean0, cov0 = state_at(0.0).block(mode)
    D = richardson_derivative(moments, h)
    dmean, dcov = D[:2], D[2:].reshape(2, 2)
    dcov = 0.5 * (dcov + dcov.T)
    # purity variation, d(det^-1/2) = -1/2 det^-3/2 d(det)
    ddet = np.linalg.det(cov0) * np.trace(np.linalg.solve(cov0, dcov))
    dP = -0.5 * np.linalg.det(cov0) ** -1.5 * ddet
    if abs(dP) * h > purity_tol:
        warnings.warn("purity varies with the parameter; single-mode QFI formula not exact",
                      ValidityWarning, stacklevel=2)
    return qfi_from_derivatives(cov0, dmean, dcov)


def pipeline_qfi(pair, probe, eta, order="first_order", h=None):
    """QFI of the measured mode built from the first-order transform."""
    h = default_step(pair.config) if h is None else h
    m = pair.config.measured_mode
    return qfi_single_mode(lambda d: measured_state(pair, probe, eta, d, order=order), m, h)


# ---------------------------------------------------------- closed forms

class SurfaceFactors(NamedTuple):
    w2: float          # |dU/dOmega|^2 of the displaced mode
    specular: float    # |U~|^2 of the squeezed mode
    dl_sq: int         # OAM change driving the squeezed mode's frequency shift
    tau0: float


def surface_factors(pair):
    cfg = pair.config
    m = cfg.measured_mode
    sig = cfg.sigma
    if isinstance(cfg.surface, Metasurface):
        dl = cfg.surface.delta_l_star
        return SurfaceFactors((m.n + 1) * dl ** 2 / sig ** 2, 1.0, dl, cfg.tau0)
    if isinstance(cfg.surface, RoughGaussian):
        sf = cfg.surface
        dl = cfg.probe_delta_l
        Nn = sf.norm(m.p)
        w2 = sf.epsilon ** 2 * math.exp(-dl ** 2 / (2 * sf.sigma_l ** 2)) * (m.n + 1) * dl ** 2 / (sig ** 2 * Nn ** 2)
        dl_sq = dl if cfg.shift_convention == "probe" else 0
        return SurfaceFactors(w2, 1 - sf.epsilon ** 2, dl_sq, cfg.tau0)
    raise DomainError(f"unknown surface model {cfg.surface!r}")


def effective_noise(eta, epsilon=0.0):
    """Vacuum fraction reaching the measured mode: (1-eta) eps^2 + eta."""
    return (1 - eta) * epsilon ** 2 + eta


def classical_cfi_closed(pair, N, eta):
    return 4 * (1 - eta) * N * surface_factors(pair).w2


def quantum_cfi_closed(pair, N_coh, N_sq, eta):
    f = surface_factors(pair)
    A = (1 - eta) * f.specular
    return 4 * (1 - eta) * N_coh * f.w2 / (A * exp_minus_2s(N_sq) + (1 - A))


def qfi_closed(pair, N_coh, N_sq, eta):
    """Closed-form QFI of the canonical quantum probe (metasurface: J_meta).

    For the rough surface this is the corrected counterpart of J_cs: the
    displacement term carries eps^2 e^{-dl^2/2 s_l^2}(n+1), the vacuum
    fraction enters as +(1-eta) eps^2, and the phase-diffusion term is
    added with the squeezed coupling's own OAM change.
    """
    f = surface_factors(pair)
    A = (1 - eta) * f.specular
    b = 1 - A
    em = exp_minus_2s(N_sq)
    ep = 1 / em
    lo, hi = A * em + b, A * ep + b
    J = 4 * (1 - eta) * N_coh * f.w2 / lo
    tau_term = (A * f.tau0 * f.dl_sq * (ep - em)) ** 2 / (lo * hi * (1 + 1 / math.sqrt(lo * hi)))
    return J + tau_term


def j_meta_as_printed(n, alpha2, delta_l, sigma, s, eta, tau):
    em, ep = math.exp(-2 * s), math.exp(2 * s)
    D = 1 - 2 * eta + em * eta + ep * eta + 2 * eta ** 2 - em * eta ** 2 - ep * eta ** 2
    t1 = 4 * (1 + n) * alpha2 * delta_l ** 2 * (1 - eta) / (sigma ** 2 * (em * (1 - eta) + eta))
    t2 = ((em - ep) ** 2 * delta_l ** 2 * (1 - eta) ** 2 * tau ** 2
          / ((em * (1 - eta) + eta) * (ep * (1 - eta) + eta) * (1 + 1 / math.sqrt(D))))
    return t1 + t2


def j_cs_as_printed(n, alpha2, delta_l, sigma, sigma_l, s, eta, eps, norm, tau):
    """Rough-surface QFI expression exactly as typeset (kept for comparison only).

    NaN where its discriminant D is negative and the expression is undefined.
    """
    em, ep = math.exp(-2 * s), math.exp(2 * s)
    e2 = eps ** 2
    D = (1 - em * (1 - e2) * (e2 * (1 - eta) - eta) * (1 - eta) - ep * (1 - e2) * (e2 * (1 - eta) - eta) * (1 - eta)
         + 2 * e2 ** 2 * (1 - eta) ** 2 - 2 * eta + 2 * eta ** 2 + e2 * (-2 + 6 * eta - 4 * eta ** 2))
    if D < 0:
        return float("nan")
    pref = delta_l ** 2 * (1 - eta) / (-e2 * (1 - eta) + em * (1 - e2) * (1 - eta) + eta)
    t1 = 4 * math.exp(delta_l ** 2 / (2 * sigma_l)) * n * alpha2 * e2 / (norm ** 2 * sigma ** 2)
    t2 = (math.exp(-4 * s) * (-1 + math.exp(4 * s)) ** 2 * (1 - e2) ** 2 * (1 - eta) * math.sqrt(D) * tau ** 2
          / ((-e2 * (1 - eta) + ep * (1 - e2) * (1 - eta) + eta) * (1 + math.sqrt(D))))
    return pref * (t1 - t2)


# ---------------------------------------------------- energy allocation

def ratio_fq_fc(N_coh, N_sq, eta, epsilon=0.0):
    """F_Q / F_C at equal total photon number N = N_coh + N_sq."""
    N = N_coh + N_sq
    b = effective_noise(eta, epsilon)
    return (N_coh / N) / ((1 - b) * exp_minus_2s(N_sq) + b)


def r_opt_closed(N, eta, epsilon=0.0):
    """Maximal F_Q/F_C; 1 + N at zero effective noise b.

    (1 + 2Nb - q) / (2Nb^2) with q = sqrt(1 + 4N(1-b)b), evaluated in the
    rationalized form 2(N+1) / (1 + 2Nb + q) which has no cancellation at small b.
    """
    b = effective_noise(eta, epsilon)
    q = math.sqrt(1 + 4 * N * (1 - b) * b)
    return 2 * (N + 1) / (1 + 2 * N * b + q)


def n_coh_opt_closed(N, eta, epsilon=0.0):
    """Optimal coherent photon number; N(1+N)/(1+2N) at zero effective noise.

    Rationalized form 2N(N+1) q / (2N(1-b) + 1 + (2N+1) q) of the rational
    expression in b and q.
    """
    b = effective_noise(eta, epsilon)
    q = math.sqrt(1 + 4 * N * (1 - b) * b)
    return 2 * N * (N + 1) * q / (2 * N * (1 - b) + 1 + (2 * N + 1) * q)


class Allocation(NamedTuple):
    N_coh_opt: float
    R: float
    N_coh_numeric: float
    R_numeric: float


def optimize_allocation(N, eta, epsilon=0.0, tol=1e-10, rtol=1e-6):
    """Best split of N photons between displacement and squeezing.

    Returns closed-form and golden-section values; raises ConsistencyError if
    the two optimal ratios differ by more than ``rtol``.
    """
    if not N > 0:
        raise DomainError("N must be positive")

    def f(nc):
        return ratio_fq_fc(nc, N - nc, eta, epsilon)

    x, fx = golden_section_max(f, 0.0, float(N), tol=tol)
    R = r_opt_closed(N, eta, epsilon)
    nc = n_coh_opt_closed(N, eta, epsilon)
    if abs(fx - R) > rtol * abs(R):
        raise ConsistencyError(f"optimal ratio: closed form {R!r} vs numeric {fx!r} (N={N}, eta={eta}, eps={epsilon})")
    return Allocation(nc, R, x, fx)


# ------------------------------------------------ classical optimality

@dataclass
class ClassicalOptimalityReport:
    best_mode: ModeIndex
    best_value: float
    per_mode: list
    multimode_optimum: float
    multimode_homodyne: float
    multimode_qfi: float
    misaligned_homodyne: float
    violations: list = field(default_factory=list)


def classical_optimality_check(pair, N, eta, tol=1e-9):
    """Single-mode coherent probes with phases -arg dU: homodyne CFI = QFI =
    4(1-eta) N |dU|^2 for each coupled mode; the largest |dU| wins among
    single-mode probes.  Spreading the photons as |alpha_i| ~ |dU_i| reaches
    4(1-eta) N sum|dU|^2 (Cauchy-Schwarz), which is also reported.
    """
    row = pair.row
    du = row.derivative()
    per_mode = []
    violations = []
    order = np.argsort(-np.abs(du), kind="stable")
    for j in order:
        if abs(du[j]) <= 1e-12:
            continue
        mode = row.support[j]
        probe = classical_probe(pair, N, mode)
        closed = 4 * (1 - eta) * N * abs(du[j]) ** 2
        F = homodyne_cfi(pair, probe, eta, check=False)
        J = pipeline_qfi(pair, probe, eta)
        per_mode.append((mode, F, J, closed))
        for name, val in (("homodyne", F), ("qfi", J)):
            if abs(val - closed) > tol * max(closed, 1e-300):
                violations.append(f"{name} {val!r} != {closed!r} for mode {tuple(mode)}")
    best = max(per_mode, key=lambda t: t[3])
    # homodyne check through the finite-difference route for the winner
    F_best = homodyne_cfi(pair, classical_probe(pair, N, best[0]), eta, check=True)
    if abs(F_best - best[3]) > tol * best[3]:
        violations.append(f"best-mode homodyne {F_best!r} != {best[3]!r}")

    w = np.abs(du)
    amp = np.sqrt(N) * w / np.linalg.norm(w)
    spread = ProbeSpec(tuple(ProbeEntry(row.support[j], aligned_alpha(du[j], amp[j]))
                             for j in range(len(du)) if amp[j] > 0))
    multi = 4 * (1 - eta) * N * float(np.sum(w ** 2))
    F_multi = homodyne_cfi(pair, spread, eta, check=False)
    J_multi = pipeline_qfi(pair, spread, eta)
    for name, val in (("multimode homodyne", F_multi), ("multimode qfi", J_multi)):
        if abs(val - multi) > tol * multi:
            violations.append(f"{name} {val!r} != {multi!r}")

    mis = classical_probe(pair, N, best[0])
    e = mis.entries[0]
    mis = ProbeSpec((ProbeEntry(e.mode, e.alpha * 1j),))
    F_mis = homodyne_cfi(pair, mis, eta, check=False)
    return ClassicalOptimalityReport(best[0], best[3], per_mode, multi, F_multi, J_multi, F_mis, violations)


# ------------------------------------------------------------ reports

@dataclass
class FisherReport:
    N: float
    eta: float
    epsilon: float
    sigma_l: float
    N_coh_opt: float
    F_homodyne: float
    F_closed_form: float
    F_classical: float
    J_qfi: float
    ratio: float
    flags: list = field(default_factory=list)
    units: str = UNITS

    CSV_HEADER = ("N", "eta", "epsilon", "sigma_l", "N_coh_opt", "F_Q", "F_C", "J", "R", "flags")

    def csv_row(self):
        return (float(self.N), float(self.eta), float(self.epsilon), float(self.sigma_l), self.N_coh_opt,
                self.F_homodyne, self.F_classical, self.J_qfi, self.ratio, ";".join(self.flags))


def fisher_report(pair, N, eta, check=True):
    """Optimal quantum probe versus the matched classical probe at N photons."""
    cfg = pair.config
    eps = cfg.surface.epsilon if isinstance(cfg.surface, RoughGaussian) else 0.0
    sig_l = cfg.surface.sigma_l if isinstance(cfg.surface, RoughGaussian) else 0.0
    flags = list(pair.flags)
    alloc = optimize_allocation(N, eta, eps)
    nc = min(max(alloc.N_coh_opt, 0.0), N)
    ns = N - nc
    probe = quantum_probe(pair, nc, ns) if ns > 0 else classical_probe(pair, N)
    F_Q = homodyne_cfi(pair, probe, eta, check=check)
    F_Q_closed = quantum_cfi_closed(pair, nc, ns, eta)
    F_C = classical_cfi_closed(pair, N, eta)
    J = qfi_closed(pair, nc, ns, eta)
    if F_Q_closed > 0 and abs(F_Q - F_Q_closed) > 1e-6 * F_Q_closed:
        flags.append("closed form differs from pipeline")
    R = F_Q / F_C if F_C > 0 else float("nan")
    return FisherReport(N, eta, eps, sig_l, nc, F_Q, F_Q_closed, F_C, J, R, flags)
