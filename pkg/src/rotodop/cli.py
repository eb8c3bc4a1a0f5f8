"""rotodop command line: fisher, figure, simulate, validate, kcoef, surface.

Exit codes: 0 ok, 1 error, 2 ok with validity warnings.
"""
import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import fisher, io
from .beams import BasisParams, k_coefficient, k_oracle
from .errors import ConfigError, RotodopError, ValidityWarning
from .estimator import run_replicas, summary_dict
from .gaussian import ModeIndex
from .optimize import golden_section_max
from .surfaces import Metasurface, RoughGaussian, scattering_table
from .transform import ProtocolConfig, build_transform_pair

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2
FIG3_ETAS = (0.0, 0.05, 0.1, 0.2, 0.5)


# ---------------------------------------------------------------- config

def load_schema(name):
    text = resources.files("rotodop").joinpath("schemas", f"{name}.json").read_text()
    schema = json.loads(text)
    if "protocol" in schema.get("properties", {}):
        proto = json.loads(resources.files("rotodop").joinpath("schemas", "protocol.json").read_text())
        proto.pop("$id", None)
        proto.pop("$schema", None)
        schema["properties"]["protocol"] = proto
    return schema


def read_config(path, schema_name):
    """Parse and schema-check a JSON config; ConfigError carries line/field diagnostics."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON ({exc.msg})") from None
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{path}: field '{where}': {e.message}")
        raise ConfigError("\n".join(lines))
    return cfg


def axis_values(spec):
    if isinstance(spec, dict):
        a, b, n = spec["linspace"]
        return [float(v) for v in np.linspace(a, b, n)]
    return [float(v) for v in spec]


def surface_from_dict(d, epsilon=None):
    if d["type"] == "metasurface":
        return Metasurface(d["delta_l"])
    return RoughGaussian(
        d["epsilon"] if epsilon is None else epsilon,
        d["sigma_l"],
        d["sigma_p"],
        phase_seed=d.get("phase_seed"),
        norm_convention=d.get("norm_convention", "column"),
    )


def protocol_from_dict(d, epsilon=None):
    b = d["basis"]
    basis = BasisParams(b["omega0"], b.get("tau0", 0.0), b.get("theta0", 0.0), b.get("sigma", 1.0))
    kw = {k: d[k] for k in ("Omega0", "n_max", "l_window", "p_window", "probe_delta_l", "shift_convention", "threshold") if k in d}
    if "measured_mode" in d:
        kw["measured_mode"] = ModeIndex(*d["measured_mode"])
    return ProtocolConfig(surface_from_dict(d["surface"], epsilon), basis, **kw)


def resolve_jobs(flag):
    env = os.environ.get("ROTODOP_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ROTODOP_JOBS must be an integer, got {env!r}") from None
    return max(1, flag or 1)


def parallel_map(fn, items, jobs):
    """Order-preserving map over a process pool (serial for jobs == 1)."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


# -------------------------------------------------------------- fisher

def _fisher_point(args):
    proto, eps, N, eta, check = args
    pair = build_transform_pair(protocol_from_dict(proto, eps))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        return fisher.fisher_report(pair, N, eta, check=check)


def cmd_fisher(args):
    cfg = read_config(args.config, "fisher")
    grid = cfg["grid"]
    proto = cfg["protocol"]
    eps_axis = [None]
    if "epsilon" in grid:
        if proto["surface"]["type"] != "rough":
            raise ConfigError("grid.epsilon applies to the rough surface only")
        eps_axis = axis_values(grid["epsilon"])
    points = [(proto, e, N, eta, cfg.get("check", True))
              for e in eps_axis for N in axis_values(grid["N"]) for eta in axis_values(grid["eta"])]
    reports = parallel_map(_fisher_point, points, resolve_jobs(args.jobs))
    text = io.csv_text(fisher.FisherReport.CSV_HEADER, [r.csv_row() for r in reports])
    _emit(text, args.out or cfg.get("output"))
    return EXIT_WARN if any(r.flags for r in reports) else EXIT_OK


# -------------------------------------------------------------- figures

def fig2_rows(eta=0.1, n_points=60, n_max=30.0):
    axis = np.linspace(n_max / n_points, n_max, n_points)
    return [(float(ns), float(nc), fisher.ratio_fq_fc(nc, ns, eta)) for ns in axis for nc in axis]


def _fig3_point(args):
    N, eta = args
    a = fisher.optimize_allocation(N, eta)
    return (N, eta, a.R, a.R_numeric, a.N_coh_opt, a.N_coh_opt / N)


def fig3_rows(etas=FIG3_ETAS, N_values=range(1, 101), jobs=1):
    return parallel_map(_fig3_point, [(float(N), eta) for eta in etas for N in N_values], jobs)


def _fig4_point(args):
    N, eta, eps = args
    R = fisher.r_opt_closed(N, eta, eps)
    _, R_num = golden_section_max(lambda nc: fisher.ratio_fq_fc(nc, N - nc, eta, eps), 0.0, N)
    return (eta, eps, R, R_num, R <= 1 + 1e-12)


def fig4_rows(N=20.0, n_eta=51, n_eps=21, jobs=1):
    pts = [(N, float(eta), float(eps)) for eps in np.linspace(0, 0.2, n_eps) for eta in np.linspace(0, 1, n_eta)]
    return parallel_map(_fig4_point, pts, jobs)


FIGURES = {
    "fig2": ("fig2_ratio.csv", ("N_sq", "N_coh", "ratio")),
    "fig3": ("fig3_R_vs_N.csv", ("N", "eta", "R", "R_numeric", "N_coh_opt", "N_coh_over_N")),
    "fig4": ("fig4_R_eta_epsilon.csv", ("eta", "epsilon", "R", "R_numeric", "no_advantage")),
}


def cmd_figure(args):
    jobs = resolve_jobs(args.jobs)
    name, header = FIGURES[args.name]
    if args.name == "fig2":
        rows = fig2_rows()
    elif args.name == "fig3":
        rows = fig3_rows(jobs=jobs)
    else:
        rows = fig4_rows(jobs=jobs)
    out = Path(args.out_dir) / name
    io.atomic_write_text(out, io.csv_text(header, rows))
    print(out)
    return EXIT_OK


# ------------------------------------------------------------- simulate

SUMMARY_HEADER = ("config_id", "M", "replicas", "var_emp", "crb", "ratio", "var_ratio_classical_over_quantum", "R_predicted")


def cmd_simulate(args):
    cfg = read_config(args.config, "simulate")
    replicas = cfg["replicas"] if args.replicas is None else args.replicas
    if replicas < 1:
        raise ConfigError("--replicas must be at least 1")
    M = cfg["M"] if args.M is None else args.M
    config_id = cfg.get("config_id", Path(args.config).stem)
    pair = build_transform_pair(protocol_from_dict(cfg["protocol"]))
    N, eta = cfg["N"], cfg["eta"]
    eps = pair.config.surface.epsilon if isinstance(pair.config.surface, RoughGaussian) else 0.0
    nc = cfg["N_coh"] if "N_coh" in cfg else fisher.optimize_allocation(N, eta, eps).N_coh_opt
    if nc > N:
        raise ConfigError("N_coh exceeds N")
    R_pred = fisher.ratio_fq_fc(nc, N - nc, eta, eps)
    probe = fisher.quantum_probe(pair, nc, N - nc) if N - nc > 0 else fisher.classical_probe(pair, N)
    jobs = resolve_jobs(args.jobs)
    common = dict(dOmega_true=cfg.get("dOmega_true", 0.0), M=M, replicas=replicas,
                  base_seed=cfg.get("base_seed", 1), jobs=jobs)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ValidityWarning)
        runs = [run_replicas(pair, probe, eta, label=f"{config_id}:quantum", **common)]
        if cfg.get("paired_classical", True):
            runs.append(run_replicas(pair, fisher.classical_probe(pair, N), eta, label=f"{config_id}:classical", **common))
    flagged = bool(pair.flags) or any(issubclass(w.category, ValidityWarning) for w in caught)

    lines = []
    for s in runs:
        for r in s.records:
            lines.append(io.dumps({"config_id": s.label, **r}))
    rows = []
    for s in runs:
        ratio_col = runs[-1].var_emp / runs[0].var_emp if len(runs) > 1 else float("nan")
        rows.append((*s.summary_row(), ratio_col, R_pred))
    out_dir = Path(args.out_dir or cfg.get("output_dir", "."))
    io.atomic_write_text(out_dir / f"{config_id}_replicas.jsonl", "\n".join(lines) + "\n")
    io.atomic_write_text(out_dir / f"{config_id}_summary.csv", io.csv_text(SUMMARY_HEADER, rows))
    io.atomic_write_text(out_dir / f"{config_id}_summary.json", io.dumps([summary_dict(s) for s in runs]) + "\n")
    print(out_dir / f"{config_id}_summary.csv")
    return EXIT_WARN if flagged else EXIT_OK


# ------------------------------------------------------------- validate

def cmd_validate(args):
    from .validate import run_all

    results = run_all(args.tol)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        extra = f" ({r.detail})" if r.detail else ""
        print(f"{status}  {r.name}: worst {r.worst:.3e} tol {r.tol:.1e}{extra}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ERROR


# ------------------------------------------------------ kcoef / surface

def cmd_kcoef(args):
    """K table with the quadrature oracle alongside (beta in units of sigma)."""
    basis = BasisParams(1e3, 0.0, 0.0, 1.0)
    rows = []
    for beta in args.beta:
        for n in range(args.nmax + 1):
            for m in range(args.nmax + 1):
                k = k_coefficient(m, n, beta)
                ref = k_oracle(m, n, basis.omega0, basis.omega0 - beta, basis).value
                rows.append((n, m, float(beta), k.real, k.imag, ref.real, ref.imag, abs(k - ref)))
    header = ("n", "m", "beta", "re", "im", "oracle_re", "oracle_im", "abs_err")
    _emit(io.csv_text(header, rows), args.out)
    return EXIT_OK


def cmd_surface(args):
    if args.model == "metasurface":
        model = Metasurface(args.delta_l_star)
    else:
        model = RoughGaussian(args.epsilon, args.sigma_l, args.sigma_p, phase_seed=args.phase_seed)
    ls = range(args.l_range[0], args.l_range[1] + 1)
    ps = range(args.p_range[0], args.p_range[1] + 1)
    rows = [(lo, po, li, pi, c.real, c.imag) for lo, po, li, pi, c in scattering_table(model, ls, ps)]
    _emit(io.csv_text(("l_out", "p_out", "l_in", "p_in", "re", "im"), rows), args.out)
    return EXIT_OK


def _emit(text, out):
    if out:
        io.atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------- main

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=1, help="worker processes (ROTODOP_JOBS overrides)")
    ap = argparse.ArgumentParser(prog="rotodop", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fisher", parents=[common], help="Fisher-information report over a grid")
    p.add_argument("config")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_fisher)

    p = sub.add_parser("figure", parents=[common], help="figure data as CSV")
    p.add_argument("name", choices=sorted(FIGURES))
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo homodyne estimation")
    p.add_argument("config")
    p.add_argument("--out-dir")
    p.add_argument("--replicas", type=int)
    p.add_argument("--M", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", parents=[common], help="run the oracle cross-checks")
    p.add_argument("--tol", type=float, help="override every check tolerance")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("kcoef", parents=[common], help="export K coefficient tables")
    p.add_argument("--nmax", type=int, default=10)
    p.add_argument("--beta", type=float, nargs="+", default=[0.0, 0.1, 0.5, 1.0, 3.0])
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_kcoef)

    p = sub.add_parser("surface", parents=[common], help="export a scattering matrix")
    p.add_argument("--model", choices=("metasurface", "rough"), default="rough")
    p.add_argument("--delta-l-star", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--sigma-l", type=float, default=1.0)
    p.add_argument("--sigma-p", type=float, default=1.0)
    p.add_argument("--phase-seed", type=int)
    p.add_argument("--l-range", type=int, nargs=2, default=[-5, 5])
    p.add_argument("--p-range", type=int, nargs=2, default=[0, 3])
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_surface)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RotodopError, ValueError, OSError) as exc:
        print(f"rotodop {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
