"""Seeded phase-transition experiments over a grid of a control parameter.

Every trial draws from its own stream keyed by
``(seed, tag(experiment), grid_index, trial_index)``, so results do not
depend on the number of workers or on scheduling.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import __version__
from .cones import Full, Subspace, Trivial
from .conic_stats import stat_dim_closed, stat_dim_mc
from .grammar import GrammarError, parse_cone, parse_vector
from .intersect import detect_nontrivial_intersection
from .options import DEFAULTS, DetectorOptions, SolverOptions
from .rng import RNG_ALGORITHM, derive_stream, gaussian_matrix, tag
from .sets import Ball, ImageCone, preimage_oracle
from .support_solver import BOUNDED, INFEASIBLE, UNBOUNDED, logistic_mle_exists, solve_conic_program, support_function

__all__ = [
    "ConfigError",
    "EXPERIMENTS",
    "ExperimentConfig",
    "GridRow",
    "PhaseGrid",
    "Report",
    "fit_transition",
    "run_experiment",
    "wilson_interval",
]

EXPERIMENTS = ("kinematic", "preimage", "escape", "logistic", "cp", "local_dm", "dm_concentration")
GRID_EXPERIMENTS = EXPERIMENTS[:5]
AXES = ("ell", "m", "delta")
Z95 = 1.959963984540054


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description, loadable from a JSON object.

    Cone specs use the grammar of :mod:`conelab.grammar` and may contain
    ``{m}``, ``{n}``, ``{ell}`` and ``{delta}`` placeholders, filled in per
    grid point. Without ``cone_L`` the cone ``L`` is the coordinate subspace
    spanned by the first ``ell`` axes of ``R^m``.
    """

    experiment: str
    cone_K: str
    cone_L: str | None = None
    m: int | None = None
    n: int | None = None
    ell: int | None = None
    axis: str = "ell"
    grid: tuple = ()
    trials: int = DEFAULTS["experiment"]["trials"]
    seed: int = 0
    epsilon: float = DEFAULTS["experiment"]["epsilon"]
    k: int = DEFAULTS["experiment"]["k"]
    tau: float = DEFAULTS["experiment"]["tau"]
    n_dir: int = DEFAULTS["experiment"]["n_dir"]
    x_spec: str = DEFAULTS["experiment"]["x_spec"]
    b_mode: str = DEFAULTS["experiment"]["b_mode"]
    slack: float = 2.0
    delta_trials: int = 20000
    detector_starts: int = DEFAULTS["detector"].starts
    detector_max_iters: int = DEFAULTS["detector"].max_iters
    detector_rho_tol: float = DEFAULTS["detector"].rho_tol
    detector_dist_tol: float = DEFAULTS["detector"].dist_tol
    solver_max_iters: int = DEFAULTS["solver"].max_iters
    solver_tol: float = DEFAULTS["solver"].tol
    solver_dist_tol: float = DEFAULTS["solver"].dist_tol

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key in ("experiment", "cone_K"):
            if key not in data:
                raise ConfigError(f"missing required field {key!r}")
        data = dict(data)
        if "grid" in data:
            if not isinstance(data["grid"], (list, tuple)):
                raise ConfigError("grid must be a list")
            data["grid"] = tuple(data["grid"])
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def solver_options(self):
        return SolverOptions().with_(max_iters=self.solver_max_iters, tol=self.solver_tol, dist_tol=self.solver_dist_tol)

    def detector_options(self):
        return DetectorOptions().with_(
            starts=self.detector_starts,
            max_iters=self.detector_max_iters,
            rho_tol=self.detector_rho_tol,
            dist_tol=self.detector_dist_tol,
        )

    # -- validation

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}; got {self.experiment!r}")
        _int_field(self, "trials", minimum=20)
        _int_field(self, "seed", minimum=0)
        if self.seed >= 2**64:
            raise ConfigError("seed must fit in 64 bits")
        for name in ("m", "n", "ell"):
            if getattr(self, name) is not None:
                _int_field(self, name, minimum=0)
        try:
            self.solver_options()
            self.detector_options()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"solver options: {exc}") from exc
        if self.experiment in GRID_EXPERIMENTS:
            self._validate_grid()
        else:
            if self.grid:
                raise ConfigError(f"grid is not used by {self.experiment}")
            self._validate_dm()
        # Resolve every grid point once so spec errors surface up front.
        for gi in range(max(1, len(self.grid))):
            self.setup(gi)

    def _validate_grid(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {', '.join(AXES)}; got {self.axis!r}")
        if len(self.grid) < 1:
            raise ConfigError("grid must be non-empty")
        for v in self.grid:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
                raise ConfigError(f"grid values must be integers, got {v!r}")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ConfigError("grid must be strictly increasing")
        allowed = {
            "kinematic": AXES,
            "preimage": AXES,
            "escape": ("ell", "delta"),
            "logistic": ("m", "delta"),
            "cp": ("m",),
        }[self.experiment]
        if self.axis not in allowed:
            raise ConfigError(f"axis {self.axis!r} is not supported by {self.experiment}")
        if self.experiment == "cp" and self.b_mode not in ("zero", "unit"):
            raise ConfigError(f"b_mode must be 'zero' or 'unit', got {self.b_mode!r}")
        if self.experiment == "escape" and self.cone_L is not None:
            raise ConfigError("cone_L is not used by escape")

    def _validate_dm(self):
        for name in ("m", "ell"):
            if getattr(self, name) is None:
                raise ConfigError(f"{self.experiment} needs {name}")
        if not 0 <= self.ell <= self.m:
            raise ConfigError(f"ell must lie in 0..m, got ell={self.ell}, m={self.m}")
        if self.cone_L is not None:
            raise ConfigError(f"{self.experiment} uses the coordinate subspace for L; drop cone_L")
        if self.experiment == "local_dm":
            _int_field(self, "k", minimum=1)
            _int_field(self, "n_dir", minimum=1)
            if self.k > self.ell:
                raise ConfigError(f"k must satisfy k <= ell, got k={self.k}, ell={self.ell}")
            if not 0 < self.epsilon < 1:
                raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
            if not 0 < self.tau < 0.5:
                raise ConfigError(f"tau must lie in (0, 1/2), got {self.tau}")
        elif not self.slack > 0:
            raise ConfigError("slack must be positive")
        _int_field(self, "delta_trials", minimum=2)

    # -- per grid point resolution

    def control(self, gi):
        return int(self.grid[gi]) if self.grid else None

    def setup(self, gi):
        """Resolve ``(m, n, ell, K, L)`` at grid index ``gi``."""
        return _setup(self, gi)


def _int_field(cfg, name, minimum):
    v = getattr(cfg, name)
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {v}")


@dataclass(frozen=True)
class Setup:
    m: int | None
    n: int
    ell: int | None
    K: object
    L: object


def _fill(template, **values):
    try:
        return template.format(**values)
    except (KeyError, IndexError, ValueError) as exc:
        raise ConfigError(f"bad placeholder in cone spec {template!r}: {exc}") from exc


@lru_cache(maxsize=256)
def _setup(cfg, gi):
    vals = {"m": cfg.m, "n": cfg.n, "ell": cfg.ell, "delta": None}
    if cfg.grid:
        vals[cfg.axis] = int(cfg.grid[gi])
    try:
        K = parse_cone(_fill(cfg.cone_K, **vals), cfg.seed, "cone-K")
    except GrammarError as exc:
        raise ConfigError(f"cone_K: {exc}") from exc
    if cfg.n is not None and K.dim != cfg.n:
        raise ConfigError(f"cone_K lives in R^{K.dim} but n={cfg.n}")
    n = K.dim
    vals["n"] = n
    m, ell = vals["m"], vals["ell"]
    exp = cfg.experiment
    if exp in ("kinematic", "preimage", "escape", "logistic", "cp") and isinstance(K, Trivial):
        raise ConfigError("cone_K must be nontrivial")
    if exp == "escape":
        if ell is None:
            raise ConfigError("escape needs ell")
        if not 1 <= ell <= n:
            raise ConfigError(f"ell must lie in 1..n={n}, got {ell}")
        return Setup(None, n, ell, K, None)
    if m is None or m < 1:
        raise ConfigError(f"{exp} needs a positive m")
    L = None
    if exp in ("kinematic", "preimage"):
        if cfg.cone_L is not None:
            try:
                L = parse_cone(_fill(cfg.cone_L, **vals), cfg.seed, "cone-L")
            except GrammarError as exc:
                raise ConfigError(f"cone_L: {exc}") from exc
            if L.dim != m:
                raise ConfigError(f"cone_L lives in R^{L.dim} but m={m}")
        else:
            if ell is None:
                raise ConfigError(f"{exp} needs ell or cone_L")
            if not 0 <= ell <= m:
                raise ConfigError(f"ell must lie in 0..m={m}, got {ell}")
            L = coordinate_subspace(m, ell)
    elif exp in ("local_dm", "dm_concentration"):
        L = coordinate_subspace(m, ell)
    if exp == "cp":
        try:
            parse_vector(cfg.x_spec, n, unit=True)
        except GrammarError as exc:
            raise ConfigError(f"x_spec: {exc}") from exc
    if exp == "dm_concentration":
        try:
            parse_vector(cfg.x_spec, m, unit=True)
        except GrammarError as exc:
            raise ConfigError(f"x_spec: {exc}") from exc
    return Setup(m, n, ell, K, L)


def coordinate_subspace(m, ell):
    """Span of the first ``ell`` coordinate axes of ``R^m``."""
    if ell == 0:
        return Trivial(m)
    if ell == m:
        return Full(m)
    return Subspace(np.eye(m)[:, :ell])


# ------------------------------------------------------------------ results


def wilson_interval(successes, trials, z=Z95):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class GridRow:
    control: int
    trials: int
    successes: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    # CP only: outcome tallies keyed by kind
    outcomes: tuple = ()

    @classmethod
    def from_counts(cls, control, trials, successes, outcomes=()):
        lo, hi = wilson_interval(successes, trials)
        return cls(control, trials, successes, successes / trials, lo, hi, tuple(outcomes))


@dataclass
class PhaseGrid:
    rows: list
    fitted: tuple
    metadata: dict = field(default_factory=dict)

    def row(self, control):
        for r in self.rows:
            if r.control == control:
                return r
        raise KeyError(control)

    def to_csv(self):
        out = io.StringIO()
        out.write(_header(self.metadata))
        cp = bool(self.rows and self.rows[0].outcomes)
        cols = "control,trials,successes,p_hat,ci_lo,ci_hi"
        if cp:
            cols += ",p_infeasible,p_bounded,p_unbounded"
        out.write(cols + "\n")
        for r in self.rows:
            fields_ = [str(r.control), str(r.trials), str(r.successes), _fmt(r.p_hat), _fmt(r.ci_lo), _fmt(r.ci_hi)]
            if cp:
                tally = dict(r.outcomes)
                fields_ += [_fmt(tally[k] / r.trials) for k in (INFEASIBLE, BOUNDED, UNBOUNDED)]
            out.write(",".join(fields_) + "\n")
        theta0, slope, ok = self.fitted
        out.write(f"# theta0={_fmt(theta0)} slope={_fmt(slope)} fit_ok={str(ok).lower()}\n")
        return out.getvalue()


@dataclass
class Report:
    """Per-trial table plus summary for the non-grid experiments."""

    columns: tuple
    rows: list
    summary: dict
    metadata: dict = field(default_factory=dict)

    def to_csv(self):
        out = io.StringIO()
        out.write(_header(self.metadata))
        out.write(",".join(self.columns) + "\n")
        for r in self.rows:
            out.write(",".join(_fmt(v) for v in r) + "\n")
        out.write("# " + " ".join(f"{k}={_fmt(v)}" for k, v in self.summary.items()) + "\n")
        return out.getvalue()


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return format(float(v), ".6g")


def _header(meta):
    return f"# conelab v{meta.get('version', __version__)} seed={meta.get('seed')} rng={meta.get('rng', RNG_ALGORITHM)} config={meta.get('config_sha256')}\n"


def _metadata(cfg):
    return {"version": __version__, "seed": cfg.seed, "rng": RNG_ALGORITHM, "config_sha256": cfg.digest(), "config": cfg.to_dict()}


# ------------------------------------------------------------------ fitting


def _logit(p):
    return math.log(p / (1 - p))


def fit_transition(rows):
    """Fit ``logit(p_hat) ~ a + b * control`` and return ``(theta0, slope, fit_ok)``.

    ``p_hat`` is clipped to ``[1/(2T), 1 - 1/(2T)]``. Saturated runs at the
    two ends of the grid are trimmed to the point nearest the transition so
    that the plateaus do not dominate the fit. ``fit_ok`` is false when fewer
    than 5 rows are given, all ``p_hat`` agree, the crossing lies outside
    the grid, or ``p_hat`` moves against the fitted trend by more than the
    Wilson intervals allow.
    """
    rows = sorted(rows, key=lambda r: r.control)
    nan = float("nan")
    if len(rows) < 5:
        return nan, nan, False
    ps = [r.p_hat for r in rows]
    if max(ps) == min(ps):
        return nan, nan, False
    lo_idx, hi_idx = 0, len(rows) - 1
    if ps[0] in (0.0, 1.0):
        while lo_idx + 1 < len(rows) and ps[lo_idx + 1] == ps[0]:
            lo_idx += 1
    if ps[-1] in (0.0, 1.0):
        while hi_idx - 1 > lo_idx and ps[hi_idx - 1] == ps[-1]:
            hi_idx -= 1
    used = rows[lo_idx:hi_idx + 1]
    xs = np.array([r.control for r in used], dtype=float)
    zs = np.array([_logit(min(max(r.p_hat, 1 / (2 * r.trials)), 1 - 1 / (2 * r.trials))) for r in used])
    A = np.column_stack([np.ones_like(xs), xs])
    (a, b), *_ = np.linalg.lstsq(A, zs, rcond=None)
    if b == 0 or not np.isfinite(b):
        return nan, float(b), False
    theta0 = float(-a / b)
    ok = rows[0].control <= theta0 <= rows[-1].control
    sign = 1 if b > 0 else -1
    for r0, r1 in zip(rows, rows[1:]):
        if sign * (r1.p_hat - r0.p_hat) < 0:
            if (sign > 0 and r1.ci_hi < r0.ci_lo) or (sign < 0 and r1.ci_lo > r0.ci_hi):
                ok = False
    return theta0, float(b), bool(ok)


# ------------------------------------------------------------------ trials


def trial_stream(cfg, gi, ti):
    return derive_stream(cfg.seed, tag(cfg.experiment), gi).child(ti)


def run_trial(cfg, gi, ti):
    """Outcome of one trial: a bool for intersection-type experiments, an
    outcome kind for ``cp``, or a tuple of numbers for the DM experiments."""
    st = cfg.setup(gi)
    s = trial_stream(cfg, gi, ti)
    det, sol = cfg.detector_options(), cfg.solver_options()
    exp = cfg.experiment
    if exp == "kinematic":
        G = gaussian_matrix(s.child(0), st.m, st.n)
        return detect_nontrivial_intersection(st.L, ImageCone(G, st.K, sol), st.m, det, s.child(2)).nontrivial
    if exp == "preimage":
        G = gaussian_matrix(s.child(0), st.m, st.n)
        return detect_nontrivial_intersection(st.K, preimage_oracle(G, st.L, sol), st.n, det, s.child(2)).nontrivial
    if exp == "escape":
        if st.ell == st.n:
            return True
        G = gaussian_matrix(s.child(0), st.n - st.ell, st.n)
        N = preimage_oracle(G, Trivial(st.n - st.ell))
        return detect_nontrivial_intersection(st.K, N, st.n, det, s.child(2)).nontrivial
    if exp == "logistic":
        X = gaussian_matrix(s.child(0), st.m, st.n)
        Y = s.child(1).signs(st.m)
        return logistic_mle_exists(X, Y, st.K, sol, det, s.child(2))
    if exp == "cp":
        G = gaussian_matrix(s.child(0), st.m, st.n)
        x = parse_vector(cfg.x_spec, st.n, unit=True)
        b = np.zeros(st.m)
        if cfg.b_mode == "unit":
            b[0] = 1.0
        return solve_conic_program(x, G, b, st.K, sol, det, s.child(2)).kind
    if exp == "local_dm":
        return _local_dm_trial(cfg, st, s, sol)
    if exp == "dm_concentration":
        G = gaussian_matrix(s.child(0), st.m, st.n)
        x = parse_vector(cfg.x_spec, st.m, unit=True)
        return (_dm_support(G, st, x[None, :], sol)[0] ** 2,)
    raise ConfigError(f"unknown experiment {exp!r}")


def _dm_support(G, st, X, sol):
    """``sup <x, G mu>`` over ``mu`` in ``K ∩ B_n`` with ``G mu`` in ``L``,
    for each row ``x`` of ``X`` (in ``R^m``)."""
    V = preimage_oracle(G, st.L, sol)
    out = np.empty(len(X))
    for i, x in enumerate(X):
        out[i], _ = support_function(G.T @ x, [st.K, V, Ball(st.n)], sol)
    return out


def _local_dm_trial(cfg, st, s, sol):
    G = gaussian_matrix(s.child(0), st.m, st.n)
    D = s.child(1).normal((cfg.n_dir, cfg.k))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    X = np.zeros((cfg.n_dir, st.m))
    X[:, :cfg.k] = D
    r = _dm_support(G, st, X, sol) / _dm_radius(cfg)
    cover = float(np.mean(np.abs(r - 1) <= cfg.epsilon))
    return (cover, float(r.min()), float(np.median(r)), float(r.max()))


def _delta(cfg, K):
    d = stat_dim_closed(K)
    if d is None:
        d = stat_dim_mc(K, cfg.delta_trials, derive_stream(cfg.seed, tag("delta-estimate"), 0)).mean
    return float(d)


@lru_cache(maxsize=64)
def _dm_radius(cfg):
    st = cfg.setup(0)
    gap = _delta(cfg, st.K) - st.m + st.ell
    if gap <= 0:
        raise ConfigError("target radius sqrt(delta(K) - m + ell) is not positive")
    return math.sqrt(gap)


# ------------------------------------------------------------------ running


def _task(args):
    cfg, gi, ti = args
    return run_trial(cfg, gi, ti)


def _map(cfg, tasks, workers):
    if workers <= 1:
        return [_task(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        # map preserves task order, so the reduction is keyed by position.
        return list(ex.map(_task, tasks, chunksize=chunk))


def run_experiment(cfg, workers=1):
    """Run ``cfg`` and return a :class:`PhaseGrid` or, for the DM
    experiments, a :class:`Report`."""
    if not isinstance(cfg, ExperimentConfig):
        cfg = ExperimentConfig.from_dict(cfg)
    exp = cfg.experiment
    if exp == "local_dm":
        _check_tau(cfg)
        _dm_radius(cfg)
    n_points = len(cfg.grid) if cfg.grid else 1
    tasks = [(cfg, gi, ti) for gi in range(n_points) for ti in range(cfg.trials)]
    results = _map(cfg, tasks, workers)
    meta = _metadata(cfg)
    if exp in GRID_EXPERIMENTS:
        rows = []
        for gi in range(n_points):
            chunk = results[gi * cfg.trials:(gi + 1) * cfg.trials]
            if exp == "cp":
                tally = {k: sum(1 for o in chunk if o == k) for k in (INFEASIBLE, BOUNDED, UNBOUNDED)}
                rows.append(GridRow.from_counts(cfg.control(gi), cfg.trials, tally[BOUNDED], sorted(tally.items())))
            else:
                rows.append(GridRow.from_counts(cfg.control(gi), cfg.trials, sum(bool(o) for o in chunk)))
        return PhaseGrid(rows, fit_transition(rows), meta)
    if exp == "local_dm":
        table = [(ti, *r) for ti, r in enumerate(results)]
        cover = np.array([r[0] for r in results])
        summary = {
            "coverage": float(cover.mean()),
            "coverage_min": float(cover.min()),
            "target_radius": _dm_radius(cfg),
            "directions": cfg.n_dir,
            "epsilon": cfg.epsilon,
        }
        return Report(("trial", "coverage", "ratio_min", "ratio_median", "ratio_max"), table, summary, meta)
    h2 = np.array([r[0] for r in results])
    st = cfg.setup(0)
    dk = _delta(cfg, st.K)
    dl = float(st.m - st.ell)
    target = dk - dl
    scale = math.sqrt(max(dk, dl))
    median = float(np.median(h2))
    dev = h2 - target
    summary = {
        "median": median,
        "target": target,
        "median_abs_dev": float(np.median(np.abs(dev))),
        "dev_q05": float(np.quantile(dev, 0.05)),
        "dev_q95": float(np.quantile(dev, 0.95)),
        "zero_fraction": float(np.mean(h2 <= 1e-12)),
        "passed": bool(abs(median - max(target, 0.0)) <= cfg.slack * scale),
    }
    return Report(("trial", "h2"), [(ti, v) for ti, v in enumerate(h2)], summary, meta)


def _check_tau(cfg):
    st = cfg.setup(0)
    dk = _delta(cfg, st.K)
    if st.m - st.ell > (1 - cfg.tau) * dk:
        raise ConfigError(
            f"local_dm requires (m - ell) <= (1 - tau) * delta(K): "
            f"m - ell = {st.m - st.ell}, (1 - tau) * delta(K) = {(1 - cfg.tau) * dk:.4g} with tau = {cfg.tau}"
        )
