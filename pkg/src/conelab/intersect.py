"""Deciding whether two closed convex cones meet outside the origin."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cones import Full, Subspace, Trivial
from .options import DetectorOptions
from .rng import RngStream

__all__ = [
    "IntersectionVerdict",
    "NONTRIVIAL",
    "TRIVIAL",
    "brute_force_intersection_oracle",
    "detect_nontrivial_intersection",
    "sphere_mesh",
]

NONTRIVIAL = "nontrivial"
TRIVIAL = "trivial"


@dataclass
class IntersectionVerdict:
    verdict: str
    rho: float
    witness: np.ndarray | None
    iterations_used: int
    starts_used: int
    # max over starts of (rho_t - rho_{t+1}); positive values are monotonicity violations
    max_rho_drop: float = 0.0

    @property
    def nontrivial(self):
        return self.verdict == NONTRIVIAL

    def __bool__(self):
        return self.nontrivial


def _dist(oracle, x):
    return float(np.linalg.norm(x - oracle.project(x)))


def _random_unit(stream, d):
    while True:
        x = stream.normal(d)
        n = np.linalg.norm(x)
        if n > 1e-12:
            return x / n


def _start(A, stream, d, tries=20):
    """A random unit point of ``A`` (a raw random direction if ``A`` keeps
    collapsing). Starting inside ``A`` makes the overlap monotone from the
    first step."""
    for _ in range(tries):
        x = A.project(_random_unit(stream, d))
        n = np.linalg.norm(x)
        if n > 1e-12:
            return x / n
    return _random_unit(stream, d)


def detect_nontrivial_intersection(A, B, dim, opts=None, stream=None):
    """Test ``A ∩ B != {0}`` by normalized alternating projections.

    From each of ``opts.starts`` random unit points of ``A`` the iteration
    ``x <- Pi_A(Pi_B(x)) / ||Pi_A(Pi_B(x))||`` runs for at most
    ``opts.max_iters`` steps, tracking the overlap ``rho = ||Pi_A(Pi_B(x))||``.
    A start succeeds once ``1 - rho <= opts.rho_tol`` and the current iterate
    lies within ``opts.dist_tol`` of both cones. If a projection collapses
    below ``opts.collapse_tol`` the start is retried from a fresh direction.

    Once a start reaches the overlap level it may keep iterating for up to
    ``opts.polish_iters`` extra steps to pass the distance checks. A start
    whose overlap gap is forecast (geometric extrapolation over windows of
    ``opts.extrapolation_window`` steps) to level off well above
    ``opts.rho_tol`` is abandoned early.

    Pairs of subspaces are decided exactly from their principal angles.

    Otherwise the result is a heuristic verdict: it can only err when the cones are
    nearly tangent.
    """
    opts = opts or DetectorOptions()
    if A.dim != dim or B.dim != dim:
        raise ValueError(f"oracle dimensions ({A.dim}, {B.dim}) do not match dim={dim}")
    if stream is None:
        stream = RngStream((0, 0, 0))
    exact = _subspace_pair(A, B, dim)
    if exact is not None:
        return exact

    best_rho = 0.0
    total_iters = 0
    max_drop = 0.0
    starts_used = 0
    win = opts.extrapolation_window
    for s in range(opts.starts):
        starts_used += 1
        sub = stream.child(s)
        x = _start(A, sub, dim)
        restarts = 0
        prev_rho = None
        gaps = []
        polishing = 0
        t = 0
        while t < opts.max_iters + polishing:
            t += 1
            total_iters += 1
            y = A.project(B.project(x))
            if not np.all(np.isfinite(y)):
                raise FloatingPointError("projection returned non-finite values")
            rho = float(np.linalg.norm(y))
            if rho < opts.collapse_tol:
                if restarts >= opts.max_restarts:
                    break
                restarts += 1
                x = _start(A, sub, dim)
                prev_rho = None
                gaps = []
                continue
            if prev_rho is not None:
                max_drop = max(max_drop, prev_rho - rho)
            x = y / rho
            best_rho = max(best_rho, min(rho, 1.0))
            prev_rho = rho
            if 1.0 - rho <= opts.rho_tol:
                # Close in overlap; keep iterating (within the polishing
                # budget) until the witness passes both distance checks.
                polishing = opts.polish_iters
                if _dist(A, x) <= opts.dist_tol and _dist(B, x) <= opts.dist_tol:
                    return IntersectionVerdict(NONTRIVIAL, min(rho, 1.0), x, total_iters, starts_used, max_drop)
                continue
            gaps.append(1.0 - rho)
            if win and len(gaps) >= 2 * win and len(gaps) % win == 0:
                if _stalled(gaps[-2 * win - 1 if len(gaps) > 2 * win else 0], gaps[-win - 1], gaps[-1], opts):
                    break
    return IntersectionVerdict(TRIVIAL, best_rho, None, total_iters, starts_used, max_drop)


def _basis(S, dim):
    S = getattr(S, "exact_cone", None) or S
    if isinstance(S, Trivial):
        return np.zeros((dim, 0))
    if isinstance(S, Full):
        return np.eye(dim)
    if isinstance(S, Subspace):
        return S.basis
    return None


def _subspace_pair(A, B, dim, cutoff=1e-10):
    """Exact answer when both oracles are subspaces.

    More than ``dim`` combined dimensions always meet. Otherwise the sine of
    the smallest principal angle (the least singular value of the part of
    ``B``'s basis orthogonal to ``A``) decides; it stays accurate for tiny
    angles where ``1 - cos`` does not.
    """
    Ua, Ub = _basis(A, dim), _basis(B, dim)
    if Ua is None or Ub is None:
        return None
    if Ua.shape[1] == 0 or Ub.shape[1] == 0:
        return IntersectionVerdict(TRIVIAL, 0.0, None, 0, 0)
    u, s, _ = np.linalg.svd(Ua.T @ Ub)
    rho = float(min(s[0], 1.0))
    if Ua.shape[1] + Ub.shape[1] <= dim:
        resid = Ub - Ua @ (Ua.T @ Ub)
        if np.linalg.svd(resid, compute_uv=False)[-1] > cutoff:
            return IntersectionVerdict(TRIVIAL, rho, None, 0, 0)
    w = Ua @ u[:, 0]
    return IntersectionVerdict(NONTRIVIAL, rho, w / np.linalg.norm(w), 0, 0)


def _stalled(g0, g1, g2, opts):
    """Aitken-style forecast: will the overlap gap level off above rho_tol?"""
    d1, d2 = g0 - g1, g1 - g2
    if d2 <= 0:
        return g2 > 10 * opts.rho_tol and d2 > -1e-12 and d1 <= 0
    if d1 <= 0:
        return False
    q = d2 / d1
    if q >= opts.stall_ratio:
        return False
    return g2 - d2 * q / (1 - q) > 10 * opts.rho_tol


def sphere_mesh(dim, mesh):
    """Unit directions covering ``S^{dim-1}`` at angular spacing about ``mesh``.

    ``dim = 2`` uses an equiangular circle, ``dim = 3`` a Fibonacci lattice
    with one point per ``mesh^2`` of area.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        n = int(math.ceil(2 * math.pi / mesh))
        th = np.arange(n) * (2 * math.pi / n)
        return np.column_stack([np.cos(th), np.sin(th)])
    if dim == 3:
        n = int(math.ceil(4 * math.pi / mesh**2))
        i = np.arange(n) + 0.5
        z = 1 - 2 * i / n
        r = np.sqrt(1 - z * z)
        phi = i * math.pi * (3 - math.sqrt(5))
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    raise ValueError(f"sphere mesh only supports dim <= 3, got {dim}")


def _scores(A, B, P):
    da = np.linalg.norm(P - A.project(P), axis=1)
    db = np.linalg.norm(P - B.project(P), axis=1)
    return np.maximum(da, db)


def _best(A, B, pts, chunk):
    best, best_x = math.inf, None
    for lo in range(0, len(pts), chunk):
        P = pts[lo:lo + chunk]
        score = _scores(A, B, P)
        i = int(np.argmin(score))
        if score[i] < best:
            best, best_x = float(score[i]), P[i]
    return best, best_x


def _patch(c, radius, step):
    """Unit directions covering the spherical cap of chord ``radius`` at ``c``."""
    u = np.cross(c, [1.0, 0.0, 0.0] if abs(c[0]) < 0.9 else [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    v = np.cross(c, u)
    t = np.arange(-radius, radius + step / 2, step)
    a, b = np.meshgrid(t, t)
    P = c + a.reshape(-1, 1) * u + b.reshape(-1, 1) * v
    return P / np.linalg.norm(P, axis=1, keepdims=True)


# Fibonacci covering radius is about 0.70 * mesh; 1.0 leaves room.
_COARSE_MESH = 0.02
_COVER = 1.0


def brute_force_intersection_oracle(A, B, dim, mesh=1e-2, chunk=200_000):
    """Exhaustive low-dimensional check of ``A ∩ B != {0}``.

    Declares Nontrivial iff some direction of a sphere mesh at resolution
    ``mesh`` lies within ``2 * mesh`` of both cones. In three dimensions fine
    meshes are swept coarse-to-fine: ``max(dist_A, dist_B)`` is 1-Lipschitz,
    so coarse cells scoring above ``2 * mesh`` plus their covering radius
    cannot contain a qualifying direction and are skipped.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"brute-force oracle needs dim <= 3, got {dim}")
    if mesh > 1e-2:
        raise ValueError("mesh must be at most 1e-2")
    if A.dim != dim or B.dim != dim:
        raise ValueError("oracle dimensions do not match dim")
    if dim < 3 or mesh >= _COARSE_MESH / 2:
        pts = sphere_mesh(dim, mesh)
        best, best_x = _best(A, B, pts, chunk)
        swept = len(pts)
    else:
        coarse = sphere_mesh(3, _COARSE_MESH)
        sc = _scores(A, B, coarse)
        radius = _COVER * _COARSE_MESH
        keep = np.flatnonzero(sc <= 2 * mesh + radius)
        i = int(np.argmin(sc))
        best, best_x = float(sc[i]), coarse[i]
        swept = len(coarse)
        for j in keep[np.argsort(sc[keep])]:
            if best <= 2 * mesh:
                break
            pts = _patch(coarse[j], radius, mesh / 2)
            b, x = _best(A, B, pts, chunk)
            swept += len(pts)
            if b < best:
                best, best_x = b, x
    nontrivial = best <= 2 * mesh
    return IntersectionVerdict(
        NONTRIVIAL if nontrivial else TRIVIAL,
        float(max(0.0, 1.0 - best)),
        best_x if nontrivial else None,
        swept,
        1,
    )
