"""Support functions, the conic-program trichotomy and logistic MLE existence."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cones import Cone, Orthant, Restricted, Trivial, subspace_from_columns
from .dykstra import dykstra
from .intersect import detect_nontrivial_intersection
from .options import DetectorOptions, SolverOptions
from .rng import RngStream
from .sets import AffineSet, Ball, ImageCone, _image_pg, null_space, sigma_max

__all__ = [
    "BOUNDED",
    "INFEASIBLE",
    "UNBOUNDED",
    "CpOutcome",
    "dykstra",
    "logistic_loglik",
    "logistic_mle_exists",
    "restricted_cone",
    "softplus",
    "solve_conic_program",
    "support_function",
]

INFEASIBLE = "infeasible"
BOUNDED = "bounded"
UNBOUNDED = "unbounded"


def support_function(x_obj, sets, opts=None):
    """Maximize ``<x_obj, mu>`` over the intersection of ``sets``.

    At least one set must be bounded. Returns ``(value, argmax)`` where
    ``argmax`` is feasible up to the projection tolerance and
    ``value == <x_obj, argmax>`` exactly, so the value is a lower bound on
    the true maximum.

    When every set except one origin-centred :class:`Ball` is a cone, the
    maximum is ``r * ||Pi_C(x_obj)||`` with ``C`` the intersection of the
    cones, attained at ``r * Pi_C(x) / ||Pi_C(x)||``; the projection onto
    ``C`` is computed by Dykstra. Otherwise a cone and a ball are merged
    into one set with an exact projection; if two sets remain, the maximum
    is found by ADMM over the pair, and with more sets projected gradient
    ascent ``mu <- dykstra(sets, mu + step * x_obj)`` runs until the
    objective gains less than ``opts.tol`` over a sweep of 20 iterations.
    """
    opts = opts or SolverOptions()
    x = np.asarray(x_obj, dtype=float).ravel()
    sets = list(sets)
    balls = [s for s in sets if isinstance(s, Ball)]
    if not any(getattr(s, "is_bounded", False) for s in sets):
        raise ValueError("support_function needs a bounded set (a Ball) to keep the maximum finite")
    for s in sets:
        if s.dim != x.size:
            raise ValueError("set dimensions must match the objective")
    others = [s for s in sets if not isinstance(s, Ball)]
    if len(balls) == 1 and all(getattr(s, "is_cone", False) for s in others):
        r = balls[0].radius
        if not others:
            p = x.copy()
        else:
            p = dykstra(others, x, max_iters=opts.dykstra_iters, tol=opts.tol)
        n = np.linalg.norm(p)
        mu = np.zeros_like(x) if n <= 1e-14 else r * p / n
        return float(x @ mu), mu

    sets = _merge_cone_ball(sets)
    if len(sets) == 2:
        mu = _admm_linear(x, sets[0], sets[1], opts)
        return float(x @ mu), mu
    mu = dykstra(sets, np.zeros_like(x), max_iters=opts.dykstra_iters, tol=opts.tol)
    best = float(x @ mu)
    best_mu = mu
    sweep_start = best
    for it in range(1, opts.max_iters + 1):
        mu = dykstra(sets, mu + opts.step * x, max_iters=opts.dykstra_iters, tol=opts.tol)
        val = float(x @ mu)
        if val > best:
            best, best_mu = val, mu
        if it % 20 == 0:
            if best - sweep_start < opts.tol * max(1.0, abs(best)):
                break
            sweep_start = best
    return best, best_mu


def _admm_linear(x, first, second, opts, rho=1.0):
    """ADMM for ``max <x, mu>`` with ``mu`` in ``first ∩ second``.

    Returns the ``first``-feasible iterate; its distance to ``second`` is
    below ``opts.tol`` on convergence.
    """
    nu = np.zeros_like(x)
    u = np.zeros_like(x)
    mu = first.project(nu)
    for _ in range(opts.max_iters):
        mu = first.project(nu - u + x / rho)
        nu_old = nu
        nu = second.project(mu + u)
        u = u + mu - nu
        if np.linalg.norm(mu - nu) <= opts.tol and rho * np.linalg.norm(nu - nu_old) <= opts.tol:
            break
    return mu


class _ConeBall:
    """``K ∩ B(r)`` for a cone ``K``; its projection is the ball-clipped
    projection onto ``K``."""

    is_cone = False
    is_bounded = True

    def __init__(self, cone, radius):
        self.cone, self.radius, self.dim = cone, radius, cone.dim

    def project(self, v):
        p = self.cone.project(v)
        n = np.linalg.norm(p, axis=-1, keepdims=True)
        return p * np.minimum(1.0, self.radius / np.maximum(n, 1e-300))


def _merge_cone_ball(sets):
    balls = [s for s in sets if isinstance(s, Ball)]
    cones = [s for s in sets if isinstance(s, Cone)]
    if len(balls) != 1 or not cones:
        return sets
    merged = _ConeBall(cones[0], balls[0].radius)
    return [merged] + [s for s in sets if s is not balls[0] and s is not cones[0]]


def restricted_cone(K, x):
    """``K_x = K ∩ {mu : <x, mu> >= 0}`` for a unit vector ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    if abs(np.linalg.norm(x) - 1) > 1e-10:
        raise ValueError("x must be a unit vector")
    return Restricted(K, x)


@dataclass
class CpOutcome:
    kind: str
    value: float | None = None
    certificate: np.ndarray | None = None
    # diagnostic, e.g. "suspected-unbounded" or "not-converged"
    flag: str = ""
    info: dict = field(default_factory=dict)


def solve_conic_program(x, G, b, K, opts=None, detector=None, stream=None):
    """Classify ``max <x, mu> s.t. G mu = b, mu in K``.

    1. Feasibility: projected gradient on ``||G mu - b||`` over ``K``; a
       residual that stalls above ``opts.dist_tol * (1 + ||b||)`` means
       infeasible.
    2. Unboundedness: a nonzero ``nu`` in ``null(G) ∩ K_x`` with
       ``<x, nu> >= opts.dist_tol`` is a recession direction along which the
       objective grows without bound.
    3. Otherwise the value is bounded; for ``b = 0`` it is 0, else it is
       computed by support-function ascent over ``K ∩ {G mu = b} ∩ B(R)``
       with ``R`` doubling until the maximizer is interior for two
       consecutive radii.
    """
    opts = opts or SolverOptions()
    detector = detector or DetectorOptions()
    stream = stream or RngStream((0, 0, 0))
    x = np.asarray(x, dtype=float).ravel()
    G = np.atleast_2d(np.asarray(G, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    m, n = G.shape
    if x.size != n or K.dim != n or b.size != m:
        raise ValueError(f"inconsistent dimensions: G {m}x{n}, x {x.size}, b {b.size}, cone {K.dim}")
    if abs(np.linalg.norm(x) - 1) > 1e-10:
        raise ValueError("objective x must be a unit vector")
    bnorm = float(np.linalg.norm(b))
    homogeneous = bnorm == 0

    # (i) feasibility
    if homogeneous:
        mu_feas = np.zeros(n)
    else:
        threshold = opts.dist_tol * (1 + bnorm)
        mu_feas, info = _image_pg(G, K, b, opts, sigma_max(G), None, stall_above=threshold)
        resid = float(np.linalg.norm(G @ mu_feas - b))
        if resid > threshold:
            return CpOutcome(INFEASIBLE, info={"residual": resid, "stalled": info["stalled"]})
        # Snap onto the affine set; keeps the cone constraint within tolerance.
        mu_feas = mu_feas - np.linalg.pinv(G) @ (G @ mu_feas - b)

    # (ii) recession direction in null(G) ∩ K_x
    N = subspace_from_columns(null_space(G), n)
    if not isinstance(N, Trivial):
        Kx = Restricted(K, x)
        verdict = detect_nontrivial_intersection(N, Kx, n, detector, stream.child(1))
        if verdict.nontrivial:
            nu = verdict.witness
            if x @ nu < opts.dist_tol:
                _, nu = support_function(x, [N, K, Ball(n)], opts)
            if x @ nu >= opts.dist_tol:
                return CpOutcome(UNBOUNDED, math.inf, nu, info={"feasible_point": mu_feas})

    # (iii) bounded value
    if homogeneous:
        return CpOutcome(BOUNDED, 0.0, np.zeros(n))
    aff = AffineSet(G, b)
    R = 1.0
    while R < 2 * np.linalg.norm(mu_feas):
        R *= 2
    interior_streak = 0
    last = None
    for _ in range(opts.max_radius_doublings + 1):
        val, mu = support_function(x, [K, aff, Ball(n, R)], opts)
        interior = np.linalg.norm(mu) < (1 - 1e-3) * R
        interior_streak = interior_streak + 1 if interior else 0
        last = (val, mu)
        if interior_streak >= 2:
            return CpOutcome(BOUNDED, val, mu, info={"radius": R})
        R *= 2
    return CpOutcome(UNBOUNDED, math.inf, None, flag="suspected-unbounded", info={"last": last})


# ------------------------------------------------------------------ logistic


def softplus(t):
    """``log(1 + exp(t))`` without overflow."""
    t = np.asarray(t, dtype=float)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def _labels(Y):
    Y = np.asarray(Y, dtype=float).ravel()
    if not np.all(np.isin(Y, (-1.0, 1.0))):
        raise ValueError("labels must be +1 or -1")
    return Y


def logistic_loglik(beta, X, Y):
    """``-sum_i log(1 + exp(-Y_i <X_i, beta>))``."""
    Y = _labels(Y)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != Y.size:
        raise ValueError("X and Y must have the same number of rows")
    z = Y * (X @ np.asarray(beta, dtype=float).ravel())
    return -float(np.sum(softplus(-z)))


def logistic_mle_exists(X, Y, K, opts=None, detector=None, stream=None, full_output=False):
    """Whether the ``K``-constrained logistic MLE exists.

    The MLE fails to exist exactly when some nonzero ``beta`` in ``K``
    satisfies ``Y_i <X_i, beta> >= 0`` for all ``i``, i.e. when the image
    cone ``diag(Y) X K`` meets the nonnegative orthant outside the origin.
    """
    Y = _labels(Y)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, n = X.shape
    if Y.size != m:
        raise ValueError("X and Y must have the same number of rows")
    if not isinstance(K, Cone) or K.dim != n:
        raise ValueError(f"cone must live in R^{n}")
    D = Y[:, None] * X
    image = ImageCone(D, K, opts)
    verdict = detect_nontrivial_intersection(Orthant(m), image, m, detector, stream)
    exists = not verdict.nontrivial
    if full_output:
        return exists, {"verdict": verdict, "converged": image.last_converged}
    return exists
