"""Statistical dimension, Gaussian width and related scalar utilities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cones import Trivial, polar
from .intersect import sphere_mesh
from .sets import sigma_max

__all__ = [
    "NEG_INF",
    "ConcentrationReport",
    "ConicSingularValue",
    "EstimateCI",
    "concentration_check",
    "gaussian_width_mc",
    "is_neg_inf",
    "min_conic_singular_value",
    "p_inf",
    "q_inf",
    "stat_dim_closed",
    "stat_dim_mc",
    "stat_dim_mc_sup",
]


class _NegInf:
    """Tagged ``-infinity`` returned by the scalar infimum utilities.

    Deliberately not a float: callers must branch on :func:`is_neg_inf`.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NEG_INF"

    def __reduce__(self):
        return (_NegInf, ())


NEG_INF = _NegInf()


def is_neg_inf(value):
    return value is NEG_INF


@dataclass(frozen=True)
class EstimateCI:
    mean: float
    se: float
    n_samples: int
    ci95: tuple

    @classmethod
    def from_samples(cls, samples):
        x = np.asarray(samples, dtype=float).ravel()
        n = x.size
        if n < 1:
            raise ValueError("need at least one sample")
        mean = float(x.mean())
        se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, se, n, (mean - 1.96 * se, mean + 1.96 * se))

    def agrees_with(self, value, k=4.0):
        return abs(self.mean - value) <= k * self.se + 1e-12


def combined_se(*estimates):
    return math.sqrt(sum(e.se**2 for e in estimates))


def stat_dim_closed(cone):
    """Exact statistical dimension when a closed form is known, else None."""
    return cone.stat_dim()


def _check_trials(trials, minimum=2):
    if isinstance(trials, bool) or not isinstance(trials, (int, np.integer)) or trials < minimum:
        raise ValueError(f"trials must be an integer >= {minimum}, got {trials!r}")
    return int(trials)


def _draws(cone, trials, stream, batch=4096):
    """Yield blocks of Gaussian vectors; the concatenation is row-major."""
    d = cone.dim
    left = trials
    while left:
        b = min(batch, left)
        yield stream.normal((b, d))
        left -= b


def stat_dim_mc(cone, trials, stream):
    """Monte Carlo estimate of ``E ||Pi_K(g)||^2``."""
    trials = _check_trials(trials)
    vals = [np.sum(cone.project(g) ** 2, axis=1) for g in _draws(cone, trials, stream)]
    return EstimateCI.from_samples(np.concatenate(vals))


def stat_dim_mc_sup(cone, trials, stream):
    """Estimate ``E (sup_{K ∩ B} <g, mu>)^2`` through the polar cone.

    The capped supremum equals ``dist(g, K polar) = ||g - Pi_{K polar}(g)||``,
    so this route never calls the projection onto ``K`` itself and gives a
    cross-check on :func:`stat_dim_mc`.
    """
    trials = _check_trials(trials)
    kp = polar(cone)
    vals = [np.sum((g - kp.project(g)) ** 2, axis=1) for g in _draws(cone, trials, stream)]
    return EstimateCI.from_samples(np.concatenate(vals))


def _sphere_sup(cone, g, stream, starts=8, iters=300):
    """max <g, mu> over unit mu in K, for g with Pi_K(g) = 0."""
    best = -math.inf
    gn = np.linalg.norm(g)
    if gn == 0:
        return 0.0
    found = 0
    for _ in range(20 * starts):
        if found == starts:
            break
        mu = cone.project(stream.normal(cone.dim))
        n = np.linalg.norm(mu)
        if n < 1e-12:
            continue
        found += 1
        mu /= n
        eta = 0.5 / gn
        for _ in range(iters):
            p = cone.project(mu + eta * g)
            pn = np.linalg.norm(p)
            if pn < 1e-12:
                eta *= 0.5
                continue
            new = p / pn
            moved = np.linalg.norm(new - mu)
            mu = new
            if moved <= 1e-12:
                break
        best = max(best, float(g @ mu))
    if not found:
        raise RuntimeError("could not find a nonzero point of the cone")
    return best


def gaussian_width_mc(cone, cap, trials, stream):
    """Monte Carlo Gaussian width of ``K ∩ B`` (``cap='ball'``) or ``K ∩ S``.

    For the ball cap the supremum is ``||Pi_K(g)||``. For the sphere cap it
    is the same whenever ``Pi_K(g) != 0``; otherwise ``g`` lies in the polar
    cone and the (nonpositive) maximum over ``K ∩ S`` is found by projected
    ascent.
    """
    trials = _check_trials(trials)
    if cap not in ("ball", "sphere"):
        raise ValueError("cap must be 'ball' or 'sphere'")
    if cap == "sphere" and isinstance(cone, Trivial):
        raise ValueError("the sphere cap of the trivial cone is empty")
    aux = stream.child(1)
    vals = []
    for g in _draws(cone, trials, stream):
        s = np.linalg.norm(cone.project(g), axis=1)
        if cap == "sphere":
            for i in np.flatnonzero(s <= 1e-12):
                s[i] = _sphere_sup(cone, g[i], aux)
        vals.append(s)
    return EstimateCI.from_samples(np.concatenate(vals))


# ------------------------------------------------------- scalar minimization


def p_inf(a1, a2, a3):
    """``inf_{beta >= 0} -a1 beta + a3 sqrt(beta^2 + 2 a2 beta + 1)``.

    Returns :data:`NEG_INF` when the infimum is ``-infinity``.
    """
    a1, a2, a3 = float(a1), float(a2), float(a3)
    if not (a1 >= 0 and 0 <= a2 <= 1 and a3 >= 0) or not all(map(math.isfinite, (a1, a2, a3))):
        raise ValueError(f"p_inf needs a1 >= 0, a2 in [0, 1], a3 >= 0; got {(a1, a2, a3)}")
    if a1 < a2 * a3:
        return a3
    if a1 <= a3:
        return math.sqrt((a3 * a3 - a1 * a1) * (1 - a2 * a2)) + a1 * a2
    return NEG_INF


def q_inf(a1, a2, R=math.inf):
    """``inf_{1 <= beta <= R} a1 beta - a2 sqrt(beta^2 - 1)``.

    ``R = inf`` gives the unconstrained infimum over ``beta >= 1``, which is
    :data:`NEG_INF` when ``a1 < a2``.
    """
    a1, a2, R = float(a1), float(a2), float(R)
    if not (a1 >= 0 and a2 >= 0) or not (math.isfinite(a1) and math.isfinite(a2)):
        raise ValueError(f"q_inf needs a1, a2 >= 0; got {(a1, a2)}")
    if not R > 1:
        raise ValueError(f"q_inf needs R > 1, got {R}")
    if math.isinf(R):
        if a1 >= a2:
            return math.sqrt(a1 - a2) * math.sqrt(a1 + a2)
        return NEG_INF
    # Q' is nondecreasing; the stationary point is a1 / sqrt(a1^2 - a2^2).
    if a1 > a2:
        root = math.sqrt(a1 - a2) * math.sqrt(a1 + a2)
        if a1 <= R * root:
            return root
    return a1 * R - a2 * math.sqrt(R * R - 1)


# ------------------------------------------------- conic singular values


@dataclass(frozen=True)
class ConicSingularValue:
    value: float
    argmin: np.ndarray
    converged: bool
    # certified lower bound from the dense sphere sweep (dim <= 3 only)
    lower: float | None = None


def min_conic_singular_value(G, K, restarts, stream, max_iters=3000, tol=1e-10, sweep_mesh=1e-2):
    """Upper-bound estimate of ``min ||G mu||`` over unit ``mu`` in ``K``.

    Multi-start projected gradient on ``||G mu||^2`` over ``K ∩ S`` (gradient
    step, project onto ``K``, renormalize). In ambient dimension at most 3 a
    dense sweep of the sphere at ``sweep_mesh`` radians is added, which
    certifies the value to within ``sweep_mesh * sigma_max(G)``.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[1] != K.dim:
        raise ValueError("G columns must match the cone dimension")
    if isinstance(K, Trivial):
        raise ValueError("the conic singular value of the trivial cone is undefined")
    restarts = _check_trials(restarts, 1)
    smax = sigma_max(G)
    if smax == 0:
        x = K.project(stream.normal(K.dim))
        return ConicSingularValue(0.0, x / max(np.linalg.norm(x), 1e-300), True)
    eta = 1.0 / (smax * smax)
    GtG = G.T @ G
    best, best_mu, all_conv = math.inf, None, True
    for r in range(restarts):
        sub = stream.child(r)
        mu = None
        for _ in range(100):
            cand = K.project(sub.normal(K.dim))
            if np.linalg.norm(cand) > 1e-12:
                mu = cand / np.linalg.norm(cand)
                break
        if mu is None:
            continue
        f = float(np.linalg.norm(G @ mu))
        conv = False
        for _ in range(max_iters):
            p = K.project(mu - eta * (GtG @ mu))
            pn = np.linalg.norm(p)
            if pn < 1e-14:
                break
            new = p / pn
            f_new = float(np.linalg.norm(G @ new))
            moved = np.linalg.norm(new - mu)
            mu = new
            if abs(f - f_new) <= tol * max(f, 1e-300) and moved <= math.sqrt(tol):
                f = f_new
                conv = True
                break
            f = f_new
        all_conv &= conv
        if f < best:
            best, best_mu = f, mu
    lower = None
    if K.dim <= 3:
        sweep_val, sweep_mu = _sweep_min(G, K, sweep_mesh)
        if sweep_val < best:
            best, best_mu = sweep_val, sweep_mu
        lower = max(0.0, sweep_val - sweep_mesh * smax)
    return ConicSingularValue(float(best), best_mu, bool(all_conv), lower)


def _sweep_min(G, K, mesh, chunk=500_000):
    # Half-mesh spacing: projected, renormalized mesh points are within
    # `mesh` of every unit vector in K.
    pts = sphere_mesh(K.dim, mesh / 2)
    best, best_mu = math.inf, None
    for lo in range(0, len(pts), chunk):
        P = K.project(pts[lo:lo + chunk])
        n = np.linalg.norm(P, axis=1)
        ok = n > 1e-12
        if not np.any(ok):
            continue
        C = P[ok] / n[ok, None]
        vals = np.linalg.norm(C @ G.T, axis=1)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, best_mu = float(vals[i]), C[i]
    return best, best_mu


# ------------------------------------------------------------ concentration


@dataclass(frozen=True)
class ConcentrationReport:
    levels: tuple
    tails: tuple
    bounds: tuple
    binomial_se: tuple
    mean: float
    trials: int
    passed: bool
    degenerate: bool = False


def concentration_check(cone, cap, trials, stream, levels=(1.0, 2.0, 3.0), slack_se=3.0):
    """Empirical tails of ``sup_{mu in K ∩ cap} <g, mu>`` around its mean.

    Each tail ``P(|S - mean S| > s)`` is compared with the Gaussian
    concentration envelope ``2 exp(-s^2 / 2)`` (the sets are inside the unit
    ball), allowing ``slack_se`` binomial standard errors.
    """
    trials = _check_trials(trials)
    if isinstance(cone, Trivial):
        z = tuple(0.0 for _ in levels)
        return ConcentrationReport(tuple(levels), z, z, z, 0.0, trials, True, True)
    if cap == "ball":
        S = np.concatenate([np.linalg.norm(cone.project(g), axis=1) for g in _draws(cone, trials, stream)])
    elif cap == "sphere":
        S = []
        aux = stream.child(1)
        for g in _draws(cone, trials, stream):
            s = np.linalg.norm(cone.project(g), axis=1)
            for i in np.flatnonzero(s <= 1e-12):
                s[i] = _sphere_sup(cone, g[i], aux)
            S.append(s)
        S = np.concatenate(S)
    else:
        raise ValueError("cap must be 'ball' or 'sphere'")
    mean = float(S.mean())
    tails, bounds, ses = [], [], []
    ok = True
    for s in levels:
        tail = float(np.mean(np.abs(S - mean) > s))
        bound = min(1.0, 2 * math.exp(-s * s / 2))
        se = math.sqrt(bound * (1 - bound) / trials)
        ok &= tail <= bound + slack_se * se
        tails.append(tail)
        bounds.append(bound)
        ses.append(se)
    return ConcentrationReport(tuple(levels), tuple(tails), tuple(bounds), tuple(ses), mean, trials, bool(ok))

