"""Oracle cross-checks run by ``rotodop validate``.

Every check compares two independent evaluation routes and returns a
CheckResult; ``tol`` overrides the per-check tolerance when given.
"""
import math
from typing import NamedTuple

import numpy as np

from . import fisher
from .beams import BasisParams, LGGeometry, k_coefficient, k_oracle
from .errors import ConsistencyError
from .optimize import golden_section_max
from .surfaces import HeightField, Metasurface, RoughGaussian, column_norm_check, height_field_coeffs
from .transform import ProtocolConfig, build_transform_pair


class CheckResult(NamedTuple):
    name: str
    passed: bool
    worst: float
    tol: float
    detail: str = ""


def _rel(a, b, atol=0.0):
    return abs(a - b) / max(abs(b), atol, 1e-300)


def check_k_oracle(tol=None):
    tol = 1e-8 if tol is None else tol
    basis = BasisParams(50.0, 0.4, 0.0, 1.0)
    worst, where = 0.0, ""
    for beta in (0.0, 0.5, 3.0):
        for m in range(0, 7, 2):
            for n in range(0, 7, 3):
                ref = k_oracle(m, n, basis.omega0, basis.omega0 - beta * basis.sigma, basis).value
                err = abs(k_coefficient(m, n, beta) - ref) / max(abs(ref), 1e-6)
                if err > worst:
                    worst, where = err, f"m={m} n={n} beta={beta}"
    return CheckResult("K closed form vs quadrature", worst <= tol, worst, tol, where)


def check_parseval(tol=None):
    tol = 1e-8 if tol is None else tol
    worst = 0.0
    for beta in (0.1, 1.0, 3.0):
        for n in range(11):
            s = sum(abs(k_coefficient(m, n, beta)) ** 2 for m in range(120))
            worst = max(worst, abs(s - 1))
    return CheckResult("K Parseval sum", worst <= tol, worst, tol)


def check_column_norms(tol=None):
    tol = 1e-6 if tol is None else tol
    worst = 0.0
    for eps in (0.05, 0.1, 0.2):
        for sig in (0.5, 1.0, 2.0):
            model = RoughGaussian(eps, sig, sig)
            for p_in in (0, 2):
                worst = max(worst, abs(column_norm_check(model, 0, p_in) - 1))
    return CheckResult("rough-surface column norms", worst <= tol, worst, tol)


def _configs():
    basis = BasisParams(1e3, 0.8, 0.0, 1.2)
    yield ProtocolConfig(Metasurface(2), basis)
    yield ProtocolConfig(RoughGaussian(0.1, 1.0, 1.0), basis, shift_convention="probe")


def check_qfi_closed_forms(tol=None):
    tol = 1e-9 if tol is None else tol
    worst, where = 0.0, ""
    for cfg in _configs():
        pair = build_transform_pair(cfg)
        for eta in (0.0, 0.3):
            for nc, ns in ((3.0, 2.0), (1.0, 8.0)):
                probe = fisher.quantum_probe(pair, nc, ns)
                err = _rel(fisher.pipeline_qfi(pair, probe, eta), fisher.qfi_closed(pair, nc, ns, eta))
                if err > worst:
                    worst, where = err, f"{type(cfg.surface).__name__} eta={eta} N_coh={nc} N_sq={ns}"
    return CheckResult("closed-form QFI vs generic single-mode QFI", worst <= tol, worst, tol, where)


def check_optimizer(tol=None):
    """Golden-section maximum of F_Q/F_C against the closed-form R."""
    tol = 1e-6 if tol is None else tol
    worst, where = 0.0, ""
    for eps in (0.0, 0.1):
        for eta in (0.0, 0.05, 0.1, 0.2, 0.5):
            for N in (1.0, 5.0, 20.0, 100.0):
                _, R_num = golden_section_max(lambda nc: fisher.ratio_fq_fc(nc, N - nc, eta, eps), 0.0, N)
                err = _rel(fisher.r_opt_closed(N, eta, eps), R_num)
                if err > worst:
                    worst, where = err, f"N={N} eta={eta} eps={eps}"
    return CheckResult("optimal ratio: golden section vs closed form", worst <= tol, worst, tol, where)


def check_homodyne_routes(tol=None):
    tol = 1e-6 if tol is None else tol
    worst, where = 0.0, ""
    for cfg in _configs():
        pair = build_transform_pair(cfg)
        for eta in (0.0, 0.2):
            probe = fisher.quantum_probe(pair, 4.0, 3.0)
            try:
                d = fisher.homodyne_cfi_details(pair, probe, eta, rtol=max(tol, 1.0))
            except ConsistencyError as exc:
                return CheckResult("homodyne CFI: chain rule vs finite difference", False, math.inf, tol, str(exc))
            err = _rel(d.F_finite_difference, d.F)
            if err > worst:
                worst, where = err, f"{type(cfg.surface).__name__} eta={eta}"
    return CheckResult("homodyne CFI: chain rule vs finite difference", worst <= tol, worst, tol, where)


def check_homodyne_closed_form(tol=None):
    tol = 1e-9 if tol is None else tol
    worst = 0.0
    for cfg in _configs():
        pair = build_transform_pair(cfg)
        for eta in (0.0, 0.1, 0.5):
            probe = fisher.quantum_probe(pair, 5.0, 5.0)
            F = fisher.homodyne_cfi(pair, probe, eta, check=False)
            worst = max(worst, _rel(F, fisher.quantum_cfi_closed(pair, 5.0, 5.0, eta)))
    return CheckResult("homodyne CFI vs closed form", worst <= tol, worst, tol)


def check_height_field(tol=None):
    tol = 1e-8 if tol is None else tol
    geom = LGGeometry(w0=1e-3, wavelength=1e-6)
    k = geom.k
    h0 = 1e-3 / k
    field = HeightField(lambda r, phi: h0 * np.cos(phi), h0 / math.sqrt(2), "cos phi")
    worst = 0.0
    for l_in in (0, 1):
        for dl in (-3, -2, 0, 2, 3):
            c = height_field_coeffs(field, geom, k, l_in + dl, 0, l_in, 0)
            # the specular term is -1 exactly; the cos(phi) field adds nothing to it
            worst = max(worst, abs(c + 1) if dl == 0 else abs(c))
    # presence of the |dl| = 1 coupling is judged at a fixed floor, not the residual tolerance
    ok_coupling = abs(height_field_coeffs(field, geom, k, 1, 0, 0, 0)) > 1e-8
    return CheckResult("height field: cos phi couples only |dl| = 1", worst <= tol and ok_coupling, worst, tol)


CHECKS = (
    check_k_oracle,
    check_parseval,
    check_column_norms,
    check_qfi_closed_forms,
    check_optimizer,
    check_homodyne_routes,
    check_homodyne_closed_form,
    check_height_field,
)


def run_all(tol=None):
    return [chk(tol) for chk in CHECKS]
