"""Monte-Carlo homodyne records and maximum-likelihood estimation of dOmega."""
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, PhysicalityError, ValidityWarning
from .fisher import gaussian_cfi, measured_moments, moment_derivatives
from .optimize import golden_section_max

RNG_ALGORITHM = "PCG64"


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class MeasurementRun:
    samples: np.ndarray
    true_dOmega: float
    rng_seed: int
    angle: float = 0.0
    rng_algorithm: str = RNG_ALGORITHM

    @property
    def M(self):
        return len(self.samples)


@dataclass(frozen=True)
class EstimateReport:
    dOmega_hat: float
    stderr: float
    crb: float
    ratio_var_to_crb: float


@dataclass(frozen=True)
class HomodyneModel:
    """Linearized outcome model q(d) = q0 + dq d, var(d) = var0 + dvar d."""

    q0: float
    var0: float
    dq: float
    dvar: float

    @property
    def fisher(self):
        return gaussian_cfi(self.dq, self.var0, self.dvar)


def homodyne_model(pair, probe, eta, angle=0.0):
    v = np.array([math.cos(angle), math.sin(angle)])
    mean, cov = measured_moments(pair, probe, eta)
    dmean, dcov = moment_derivatives(pair, probe, eta)
    return HomodyneModel(float(v @ mean), float(v @ cov @ v), float(v @ dmean), float(v @ dcov @ v))


def first_order_scale(pair):
    """Largest relative rate of change of the measured row, in rad/s^-1."""
    cfg = pair.config
    dl = np.max(np.abs(pair.row.shift_dl)) if len(pair.row.shift_dl) else 0
    n_top = max(s.n for s in pair.row.support) + 1
    return dl * (math.sqrt(n_top) / cfg.sigma + abs(cfg.tau0))


def sample_homodyne(pair, probe, eta, dOmega_true, M, seed, angle=0.0, first_order_tol=0.1):
    """M i.i.d. homodyne outcomes at Omega0 + dOmega_true from a seeded PCG64 stream."""
    if M < 1:
        raise DomainError("M must be at least 1")
    if abs(dOmega_true) * first_order_scale(pair) > first_order_tol:
        warnings.warn("dOmega_true is outside the first-order regime", ValidityWarning, stacklevel=2)
    v = np.array([math.cos(angle), math.sin(angle)])
    mean, cov = measured_moments(pair, probe, eta, dOmega_true, order="exact")
    q, var = float(v @ mean), float(v @ cov @ v)
    if var < 0:
        raise PhysicalityError(f"negative homodyne variance {var}")
    z = make_rng(seed).standard_normal(M)
    return MeasurementRun(q + math.sqrt(var) * z, float(dOmega_true), int(seed), angle)


def _loglik_parts(model, M, S1, S2, d):
    q = model.q0 + model.dq * d
    var = model.var0 + model.dvar * d
    Q = S2 - 2 * q * S1 + M * q * q
    return q, var, Q


def log_likelihood(model, M, S1, S2, d):
    """Gaussian log-likelihood (up to a constant) from the sufficient statistics."""
    _, var, Q = _loglik_parts(model, M, S1, S2, d)
    if var <= 0:
        return -math.inf
    return -0.5 * M * math.log(var) - Q / (2 * var)


def score(model, M, S1, S2, d):
    """d/d(dOmega) of the log-likelihood."""
    q, var, Q = _loglik_parts(model, M, S1, S2, d)
    dQ = 2 * M * model.dq * (q - S1 / M)
    return -0.5 * M * model.dvar / var - dQ / (2 * var) + Q * model.dvar / (2 * var ** 2)


def observed_information(model, M, S1, S2, d):
    q, var, Q = _loglik_parts(model, M, S1, S2, d)
    dv, dq = model.dvar, model.dq
    dQ = 2 * M * dq * (q - S1 / M)
    d2Q = 2 * M * dq * dq
    d2l = M * dv ** 2 / (2 * var ** 2) - d2Q / (2 * var) + dQ * dv / var ** 2 - Q * dv ** 2 / var ** 3
    return -d2l


def mle_dOmega(run, model, width=10.0):
    """Maximize the Gaussian likelihood over dOmega in a +-width/sqrt(M F)
    window around the moment estimate."""
    M = run.M
    F = model.fisher
    if not F > 0:
        raise DomainError("the probe carries no information on dOmega")
    x = np.asarray(run.samples, dtype=float)
    S1, S2 = float(x.sum()), float(x @ x)
    if model.dq != 0:
        d0 = (S1 / M - model.q0) / model.dq
    else:
        d0 = (S2 / M - (S1 / M) ** 2 - model.var0) / model.dvar
    crb = 1 / math.sqrt(M * F)
    a, b = d0 - width * crb, d0 + width * crb
    d, _ = golden_section_max(lambda t: log_likelihood(model, M, S1, S2, t), a, b, tol=1e-10 * (b - a))
    if min(d - a, b - d) < 1e-6 * (b - a):
        raise ConvergenceError("likelihood maximum sits on the search-window edge")
    # golden section resolves a smooth maximum only to ~sqrt(machine eps); polish with Newton
    for _ in range(3):
        info = observed_information(model, M, S1, S2, d)
        if not info > 0:
            break
        step = score(model, M, S1, S2, d) / info
        if not (a < d + step < b) or log_likelihood(model, M, S1, S2, d + step) < log_likelihood(model, M, S1, S2, d):
            break
        d += step
    info = observed_information(model, M, S1, S2, d)
    if not info > 0:
        raise ConvergenceError("observed information is not positive at the maximum")
    stderr = 1 / math.sqrt(info)
    return EstimateReport(float(d), stderr, crb, (stderr / crb) ** 2)


@dataclass
class ReplicaSummary:
    label: str
    M: int
    replicas: int
    dOmega_true: float
    mean_hat: float
    se_mean: float
    var_emp: float
    crb: float
    ratio: float
    ratio_se: float
    records: list = field(default_factory=list)

    def summary_row(self):
        return (self.label, self.M, self.replicas, self.var_emp, self.crb, self.ratio)


def _replica(args):
    pair, probe, eta, dOmega_true, M, seed, model = args
    run = sample_homodyne(pair, probe, eta, dOmega_true, M, seed)
    est = mle_dOmega(run, model)
    return {"seed": seed, "dOmega_hat": est.dOmega_hat, "stderr": est.stderr}


def run_replicas(pair, probe, eta, dOmega_true=0.0, M=100_000, replicas=200, base_seed=1, jobs=1, label=""):
    """Independent replicas, replica i seeded with base_seed + i.

    ``crb`` is the variance bound 1/(M F) and ``ratio`` = var_emp / crb.
    """
    if replicas < 1:
        raise DomainError("replicas must be at least 1")
    model = homodyne_model(pair, probe, eta)
    tasks = [(pair, probe, eta, dOmega_true, M, base_seed + i, model) for i in range(replicas)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_replica, tasks, chunksize=max(1, replicas // (4 * jobs))))
    else:
        records = [_replica(t) for t in tasks]
    est = np.array([r["dOmega_hat"] for r in records])
    var_emp = float(est.var(ddof=1)) if replicas > 1 else float("nan")
    crb = 1 / (M * model.fisher)
    ratio = var_emp / crb
    return ReplicaSummary(label, M, replicas, float(dOmega_true), float(est.mean()),
                          math.sqrt(var_emp / replicas) if replicas > 1 else float("nan"),
                          var_emp, crb, ratio, ratio * math.sqrt(2 / max(replicas - 1, 1)), records)


def summary_dict(s):
    d = asdict(s)
    d.pop("records")
    d["rng_algorithm"] = RNG_ALGORITHM
    return d
