"""Command-line front end: ``conelab <subcommand> ...``.

Exit codes: 0 success, 2 invalid input or configuration, 3 solver
non-convergence when ``--strict`` is given, 1 failed selftest.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .conic_stats import gaussian_width_mc, stat_dim_closed, stat_dim_mc, stat_dim_mc_sup
from .grammar import GrammarError, parse_cone, parse_vector
from .intersect import detect_nontrivial_intersection
from .options import DEFAULTS, DetectorOptions, SolverOptions, defaults_table
from .phase_lab import ConfigError, ExperimentConfig, run_experiment
from .rng import RNG_ALGORITHM, derive_stream, gaussian_matrix, tag
from .support_solver import logistic_mle_exists, solve_conic_program

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

PHASE_NAMES = {
    "kinematic": "kinematic",
    "preimage": "preimage",
    "escape": "escape",
    "logistic": "logistic",
    "cp": "cp",
    "local-dm": "local_dm",
    "support-conc": "dm_concentration",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=88, max_help_position=32)


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def build_parser():
    p = _Parser(prog="conelab", description="Monte Carlo laboratory for random linear images of convex cones.",
                formatter_class=_formatter)
    p.add_argument("--version", action="version", version=f"conelab {__version__}")
    sub = p.add_subparsers(dest="command", metavar="<command>", parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, help=help_, description=help_, formatter_class=_formatter)

    def out(sp):
        sp.add_argument("--out", metavar="PATH", help="write CSV here instead of standard output")

    s = add("stat-dim", "Monte Carlo statistical dimension of a cone.")
    s.add_argument("--cone", required=True, metavar="SPEC", help="cone spec, e.g. orthant:40")
    s.add_argument("--trials", type=int, default=DEFAULTS["experiment"]["trials"], help="Gaussian draws")
    s.add_argument("--seed", type=_u64, default=0, help="master seed")
    s.add_argument("--route", choices=("direct", "polar"), default="direct",
                   help="project onto the cone, or use the distance to its polar")
    out(s)

    s = add("width", "Monte Carlo Gaussian width of a cone capped by the ball or sphere.")
    s.add_argument("--cone", required=True, metavar="SPEC", help="cone spec")
    s.add_argument("--cap", choices=("ball", "sphere"), default="ball", help="unit ball or unit sphere cap")
    s.add_argument("--trials", type=int, default=DEFAULTS["experiment"]["trials"], help="Gaussian draws")
    s.add_argument("--seed", type=_u64, default=0, help="master seed")
    out(s)

    s = add("intersect", "Decide whether two cones meet outside the origin.")
    s.add_argument("--A", dest="cone_a", required=True, metavar="SPEC", help="first cone")
    s.add_argument("--B", dest="cone_b", required=True, metavar="SPEC", help="second cone")
    s.add_argument("--dim", type=int, help="ambient dimension (checked against both cones)")
    s.add_argument("--seed", type=_u64, default=0, help="master seed")
    s.add_argument("--starts", type=int, default=DEFAULTS["detector"].starts, help="random starts")
    s.add_argument("--max-iters", type=int, default=DEFAULTS["detector"].max_iters, help="iterations per start")
    out(s)

    s = add("cp", "Classify max <x, mu> s.t. G mu = b, mu in K for Gaussian G.")
    s.add_argument("--cone", required=True, metavar="SPEC", help="cone K in R^n")
    s.add_argument("--m", type=int, required=True, help="number of constraints")
    s.add_argument("--x", default=DEFAULTS["experiment"]["x_spec"], metavar="VEC", help="objective (normalized)")
    s.add_argument("--b", default="zero", metavar="VEC", help="right-hand side: zero, unit (= e1) or a vector spec")
    s.add_argument("--matrix", metavar="PATH", help="CSV file holding G instead of drawing it")
    s.add_argument("--seed", type=_u64, default=0, help="master seed")
    s.add_argument("--strict", action="store_true", help="exit 3 when the solver flags non-convergence")
    out(s)

    s = add("logistic-exists", "Check existence of the cone-constrained logistic MLE.")
    s.add_argument("--cone", required=True, metavar="SPEC", help="parameter cone K in R^n")
    s.add_argument("--m", type=int, help="sample size when drawing Gaussian data")
    s.add_argument("--file", metavar="PATH", help="CSV with columns y,x1,...,xn (labels +-1)")
    s.add_argument("--seed", type=_u64, default=0, help="master seed")
    s.add_argument("--strict", action="store_true", help="exit 3 when an inner projection did not converge")
    out(s)

    s = add("phase", "Run a phase-transition experiment from a JSON config.")
    s.add_argument("experiment", choices=tuple(PHASE_NAMES), help="experiment family")
    s.add_argument("--config", required=True, metavar="PATH", help="flat JSON experiment config")
    s.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $CONELAB_WORKERS or 1)")
    out(s)

    add("defaults", "Print the table of numeric defaults.")
    add("selftest", "Run the quick invariant suites.")
    return p


# ------------------------------------------------------------------ helpers


def _emit(text, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _meta(seed, resolved):
    body = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return (
        f"# conelab v{__version__} seed={seed} rng={RNG_ALGORITHM} config={_sha(body)}\n"
        f"# resolved {body}\n"
    )


def _sha(text):
    return hashlib.sha256(text.encode()).hexdigest()


def _fmt(v):
    return format(float(v), ".10g")


def _row(*values):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(values)
    return buf.getvalue()


def _cone(spec, seed, domain="cone-K"):
    try:
        return parse_cone(spec, seed, domain)
    except GrammarError as exc:
        raise ConfigError(f"--cone: {exc}") from exc


def _positive(value, name, minimum=1):
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")


def _workers(arg):
    if arg is not None:
        w = arg
    else:
        env = os.environ.get("CONELAB_WORKERS", "1")
        try:
            w = int(env)
        except ValueError as exc:
            raise ConfigError(f"CONELAB_WORKERS must be an integer, got {env!r}") from exc
    _positive(w, "--workers")
    return w


# ------------------------------------------------------------------ commands


def cmd_stat_dim(a):
    _positive(a.trials, "--trials", 2)
    K = _cone(a.cone, a.seed)
    stream = derive_stream(a.seed, tag("stat-dim"), 0)
    est = (stat_dim_mc if a.route == "direct" else stat_dim_mc_sup)(K, a.trials, stream)
    closed = stat_dim_closed(K)
    text = _meta(a.seed, {"cone": a.cone, "trials": a.trials, "route": a.route, "closed_form": closed})
    text += "cone,delta_hat,se,ci_lo,ci_hi,n\n"
    text += _row(a.cone, _fmt(est.mean), _fmt(est.se), _fmt(est.ci95[0]), _fmt(est.ci95[1]), est.n_samples)
    _emit(text, a.out)
    return EXIT_OK


def cmd_width(a):
    _positive(a.trials, "--trials", 2)
    K = _cone(a.cone, a.seed)
    est = gaussian_width_mc(K, a.cap, a.trials, derive_stream(a.seed, tag("width"), 0))
    text = _meta(a.seed, {"cone": a.cone, "cap": a.cap, "trials": a.trials})
    text += "cone,cap,estimate,se,trials,ci_lo,ci_hi\n"
    text += _row(a.cone, a.cap, _fmt(est.mean), _fmt(est.se), est.n_samples, _fmt(est.ci95[0]), _fmt(est.ci95[1]))
    _emit(text, a.out)
    return EXIT_OK


def cmd_intersect(a):
    A = _cone(a.cone_a, a.seed, "cone-A")
    B = _cone(a.cone_b, a.seed, "cone-B")
    if A.dim != B.dim:
        raise ConfigError(f"--A lives in R^{A.dim} but --B lives in R^{B.dim}")
    if a.dim is not None and a.dim != A.dim:
        raise ConfigError(f"--dim {a.dim} does not match the cones' dimension {A.dim}")
    opts = DetectorOptions().with_(starts=a.starts, max_iters=a.max_iters)
    v = detect_nontrivial_intersection(A, B, A.dim, opts, derive_stream(a.seed, tag("intersect"), 0))
    text = _meta(a.seed, {"A": a.cone_a, "B": a.cone_b, "detector": opts.__dict__})
    text += "verdict,rho,iters\n"
    text += f"{v.verdict},{_fmt(v.rho)},{v.iterations_used}\n"
    _emit(text, a.out)
    return EXIT_OK


def _load_csv(path, what):
    try:
        return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))
    except OSError as exc:
        raise ConfigError(f"{what}: cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{what}: {path} is not a numeric CSV: {exc}") from exc


def cmd_cp(a):
    K = _cone(a.cone, a.seed)
    n = K.dim
    if a.matrix:
        G = _load_csv(a.matrix, "--matrix")
        if G.shape != (a.m, n):
            raise ConfigError(f"--matrix has shape {G.shape}, expected ({a.m}, {n})")
    else:
        _positive(a.m, "--m")
        G = gaussian_matrix(derive_stream(a.seed, tag("cp"), 0), a.m, n)
    try:
        x = parse_vector(a.x, n, unit=True)
    except GrammarError as exc:
        raise ConfigError(f"--x: {exc}") from exc
    try:
        b = parse_vector("e1" if a.b == "unit" else a.b, a.m)
    except GrammarError as exc:
        raise ConfigError(f"--b: {exc}") from exc
    res = solve_conic_program(x, G, b, K, SolverOptions(), DetectorOptions(), derive_stream(a.seed, tag("cp"), 1))
    text = _meta(a.seed, {"cone": a.cone, "m": a.m, "x": a.x, "b": a.b, "matrix": a.matrix,
                          "solver": SolverOptions().__dict__})
    text += "kind,value,flag\n"
    value = "nan" if res.value is None else _fmt(res.value)
    text += f"{res.kind},{value},{res.flag}\n"
    _emit(text, a.out)
    if a.strict and res.flag:
        print(f"conelab: solver flagged {res.flag}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_logistic(a):
    K = _cone(a.cone, a.seed)
    n = K.dim
    if a.file:
        D = _load_csv(a.file, "--file")
        if D.shape[1] != n + 1:
            raise ConfigError(f"--file needs a label column and {n} feature columns, got {D.shape[1]} columns")
        Y, X = D[:, 0], D[:, 1:]
        if not np.all(np.isin(Y, (-1.0, 1.0))):
            raise ConfigError("--file labels must be +1 or -1")
    else:
        if a.m is None:
            raise ConfigError("give --m or --file")
        _positive(a.m, "--m")
        s = derive_stream(a.seed, tag("logistic"), 0)
        X = gaussian_matrix(s.child(0), a.m, n)
        Y = s.child(1).signs(a.m)
    exists, info = logistic_mle_exists(X, Y, K, stream=derive_stream(a.seed, tag("logistic"), 1), full_output=True)
    text = _meta(a.seed, {"cone": a.cone, "m": int(X.shape[0]), "file": a.file})
    text += "exists,samples,rho\n"
    text += f"{str(exists).lower()},{X.shape[0]},{_fmt(info['verdict'].rho)}\n"
    _emit(text, a.out)
    if a.strict and not info["converged"]:
        print("conelab: image-cone projection did not converge", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_phase(a):
    workers = _workers(a.workers)
    try:
        raw = Path(a.config).read_text()
    except OSError as exc:
        raise ConfigError(f"--config: cannot read {a.config}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--config: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("--config must hold a JSON object")
    expected = PHASE_NAMES[a.experiment]
    data.setdefault("experiment", expected)
    if data["experiment"] != expected:
        raise ConfigError(f"config experiment {data['experiment']!r} does not match subcommand {a.experiment!r}")
    cfg = ExperimentConfig.from_dict(data)
    result = run_experiment(cfg, workers=workers)
    _emit(result.to_csv(), a.out)
    return EXIT_OK


def cmd_defaults(a):
    lines = ["group,name,value"]
    for group, name, value in defaults_table():
        lines.append(f"{group},{name},{json.dumps(value) if isinstance(value, (tuple, list)) else value}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_selftest(a):
    from .selftest import run_selftest

    ok = run_selftest(sys.stdout)
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "stat-dim": cmd_stat_dim,
    "width": cmd_width,
    "intersect": cmd_intersect,
    "cp": cmd_cp,
    "logistic-exists": cmd_logistic,
    "phase": cmd_phase,
    "defaults": cmd_defaults,
    "selftest": cmd_selftest,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, GrammarError) as exc:
        print(f"conelab {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"conelab {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
