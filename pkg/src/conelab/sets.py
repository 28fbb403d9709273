"""Projection oracles for convex sets built from cones and Gaussian matrices.

Cones from :mod:`conelab.cones` are themselves valid oracles; this module
adds balls, affine sets, shifted halfspaces, linear images ``G K`` and
preimages ``G^{-1} L``.
"""
from __future__ import annotations

import logging

import numpy as np

from .cones import (
    RANK_CUTOFF,
    Cone,
    Full,
    Halfspace,
    Orthant,
    Subspace,
    Trivial,
    subspace_from_columns,
)
from .options import SolverOptions

__all__ = [
    "AffineSet",
    "Ball",
    "ConvexSet",
    "HalfspaceSet",
    "ImageCone",
    "SplitPreimage",
    "PolyhedralCone",
    "null_space",
    "preimage_oracle",
    "project_image_cone",
    "sigma_max",
]

log = logging.getLogger(__name__)


class ConvexSet:
    """Base class for non-cone oracles; subclasses define ``_project_one``."""

    is_cone = False
    is_bounded = False
    exact = True
    dim: int

    def project(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim or v.ndim not in (1, 2):
            raise ValueError(f"expected vector(s) of dimension {self.dim}, got shape {v.shape}")
        return self._project(v)

    def _project(self, v):
        if v.ndim == 1:
            return self._project_one(v)
        return np.stack([self._project_one(row) for row in v]) if len(v) else v.copy()

    def _project_one(self, v):  # pragma: no cover - abstract
        raise NotImplementedError


class Ball(ConvexSet):
    """Euclidean ball of ``radius`` centered at the origin."""

    is_bounded = True

    def __init__(self, dim, radius=1.0):
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        self.dim = int(dim)
        self.radius = float(radius)

    def _project(self, v):
        nrm = np.linalg.norm(v, axis=-1, keepdims=True)
        scale = np.minimum(1.0, self.radius / np.maximum(nrm, 1e-300))
        return v * scale

    def __repr__(self):
        return f"Ball(dim={self.dim}, radius={self.radius})"


class AffineSet(ConvexSet):
    """``{mu : A mu = b}`` with a cached SVD of ``A``.

    When ``b`` is not in the range of ``A`` the projection lands on the
    least-squares solution set instead.
    """

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if b.size != A.shape[0]:
            raise ValueError("affine set: b must have one entry per row of A")
        self.A, self.b = A, b
        self.dim = A.shape[1]
        u, s, vt = np.linalg.svd(A, full_matrices=False)
        keep = s > RANK_CUTOFF * s[0] if s.size and s[0] > 0 else np.zeros(s.size, bool)
        self._u, self._s, self._vt = u[:, keep], s[keep], vt[keep]

    def _project(self, v):
        r = v @ self.A.T - self.b
        coef = (r @ self._u) / self._s
        return v - coef @ self._vt

    def residual(self, v):
        return np.linalg.norm(self.A @ v - self.b)


class HalfspaceSet(ConvexSet):
    """``{mu : <normal, mu> >= offset}``."""

    def __init__(self, normal, offset=0.0):
        n = np.asarray(normal, dtype=float).ravel()
        nrm = np.linalg.norm(n)
        if nrm == 0:
            raise ValueError("halfspace normal must be nonzero")
        self.normal = n / nrm
        self.offset = float(offset) / nrm
        self.dim = n.size
        self.is_cone = self.offset == 0

    def _project(self, v):
        s = np.minimum(v @ self.normal - self.offset, 0.0)
        return v - np.multiply.outer(s, self.normal)


def sigma_max(G, tol=1e-12, max_iters=2000):
    """Largest singular value of ``G`` by power iteration on ``G^T G``."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n = G.shape[1]
    x = np.cos(np.arange(1, n + 1))  # fixed, generic start
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iters):
        y = G.T @ (G @ x)
        new = float(np.linalg.norm(y))
        if new == 0:
            return 0.0
        x = y / new
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    return float(np.sqrt(lam))


def null_space(M, cutoff=RANK_CUTOFF):
    """Orthonormal basis (columns) of the null space of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[1]
    if M.size == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    if s.size == 0 or s[0] == 0:
        return np.eye(n)
    rank = int(np.sum(s > cutoff * s[0]))
    return vt[rank:].T


def _range_space(M, cutoff=RANK_CUTOFF):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return u[:, :0]
    return u[:, s > cutoff * s[0]]


def project_image_cone(G, K, y, opts=None, full_output=False):
    """Project ``y`` onto the image cone ``G K``.

    Runs projected gradient on ``min_{mu in K} ||y - G mu||^2 / 2`` with step
    ``1 / sigma_max(G)^2`` (Nesterov momentum with adaptive restart unless
    ``opts.accelerate`` is off) and returns ``G mu*``.

    With ``full_output`` also returns a dict holding ``mu``, ``converged``,
    ``iterations`` and ``objective``.
    """
    opts = opts or SolverOptions()
    G = np.atleast_2d(np.asarray(G, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    m, n = G.shape
    if K.dim != n or y.size != m:
        raise ValueError(f"dimension mismatch: G is {m}x{n}, cone dim {K.dim}, y has {y.size}")
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite entries in G or y")
    mu, info = _image_pg(G, K, y, opts, sigma_max(G), None)
    out = G @ mu
    return (out, info) if full_output else out


def _image_pg(G, K, y, opts, smax, mu0, stall_above=None):
    """Projected gradient core; with ``stall_above`` set, stop early once the
    residual has stopped shrinking (relative decrease below
    ``opts.stall_rel`` over ``opts.stall_window`` iterations) while still
    above that level."""
    n = G.shape[1]
    ynorm2 = float(y @ y)
    if smax == 0 or ynorm2 == 0:
        mu = np.zeros(n)
        return mu, {"mu": mu, "converged": True, "stalled": False, "iterations": 0, "objective": 0.5 * ynorm2}
    eta = 1.0 / (smax * smax * (1 + 1e-9))
    mu = K.project(mu0) if mu0 is not None else np.zeros(n)
    z = mu.copy()
    t = 1.0
    r = y - G @ mu
    f = 0.5 * float(r @ r)
    converged = False
    stalled = False
    window_f = f
    target = opts.kkt_tol * (1 + np.sqrt(ynorm2))
    it = 0
    for it in range(1, opts.max_iters + 1):
        if stall_above is not None and it % opts.stall_window == 0:
            if window_f - f <= opts.stall_rel * window_f and np.sqrt(2 * f) > stall_above:
                stalled = True
                break
            window_f = f
        rz = y - G @ z
        mu_new = K.project(z + eta * (G.T @ rz))
        r_new = y - G @ mu_new
        f_new = 0.5 * float(r_new @ r_new)
        step = float(np.linalg.norm(mu_new - mu))
        if opts.accelerate:
            # Gradient restart: objective comparisons lose resolution near
            # the optimum, the momentum direction test does not.
            if float((z - mu_new) @ (mu_new - mu)) > 0:
                t = 1.0
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
            z = mu_new + ((t - 1) / t_new) * (mu_new - mu)
            t = t_new
        else:
            z = mu_new
        mu, f = mu_new, f_new
        if 2 * f <= opts.tol**2 * ynorm2 or (step <= target and _kkt_bound(G, K, y, mu) <= target):
            converged = True
            break
    return mu, {"mu": mu, "converged": converged, "stalled": stalled, "iterations": it, "objective": f}


def _kkt_bound(G, K, y, mu):
    """Upper bound on ``||G mu - Pi_{GK}(y)||``.

    With ``p = G mu`` and ``r = y - p``, the variational inequality gives
    ``||p - p*||^2 <= <p* - p, r>``, and ``<p*, r> = <mu*, G^T r>`` is at most
    ``||mu*|| ||Pi_K(G^T r)||``; ``||mu||`` stands in for ``||mu*||``.
    """
    p = G @ mu
    r = y - p
    gap = -float(p @ r) + (1 + float(np.linalg.norm(mu))) * float(np.linalg.norm(K.project(G.T @ r)))
    return np.sqrt(max(gap, 0.0))


class ImageCone(ConvexSet):
    """The linear image ``G K`` as a projection oracle in ``R^m``.

    When ``K`` is a subspace (or Full/Trivial) the image is a subspace and
    the projection is exact; otherwise each call solves a projected-gradient
    problem (``last_converged`` records whether the latest solve met its
    tolerance).
    """

    is_cone = True

    def __init__(self, G, K, opts=None):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        if G.shape[1] != K.dim:
            raise ValueError(f"G has {G.shape[1]} columns but the cone lives in R^{K.dim}")
        self.G, self.K = G, K
        self.dim = G.shape[0]
        self.opts = opts or SolverOptions()
        self.exact_cone = _image_subspace(G, K)
        self.exact = self.exact_cone is not None
        self._smax = None
        self._warm = None
        self.last_converged = True

    def _project_one(self, v):
        if self.exact_cone is not None:
            return self.exact_cone.project(v)
        if self._smax is None:
            self._smax = sigma_max(self.G)
        # Callers such as the detector project nearby points in sequence, so
        # the previous multiplier is usually a far better start than zero.
        warm = self._warm
        if warm is not None:
            r = v - self.G @ warm
            if float(r @ r) >= float(v @ v):
                warm = None
        mu, info = _image_pg(self.G, self.K, v, self.opts, self._smax, warm)
        self._warm = mu
        self.last_converged = info["converged"]
        return self.G @ mu

    def _project(self, v):
        if self.exact_cone is not None:
            return self.exact_cone.project(v)
        return super()._project(v)


def _image_subspace(G, K):
    m = G.shape[0]
    if isinstance(K, Trivial):
        return Trivial(m)
    if isinstance(K, Full):
        return subspace_from_columns(_range_space(G), m)
    if isinstance(K, Subspace):
        if K.k == 0:
            return Trivial(m)
        return subspace_from_columns(_range_space(G @ K.basis), m)
    return None


class PolyhedralCone(ConvexSet):
    """``{mu : R mu >= 0}`` projected by Dykstra over the rows' halfspaces."""

    is_cone = True
    exact = False

    def __init__(self, rows, max_iters=5000, tol=1e-12):
        R = np.atleast_2d(np.asarray(rows, dtype=float))
        norms = np.linalg.norm(R, axis=1)
        R = R[norms > 0] / norms[norms > 0, None]
        self.rows = R
        self.dim = R.shape[1]
        self.max_iters = max_iters
        self.tol = tol
        self.last_converged = True

    def _project(self, v):
        x = np.array(v, dtype=float)
        if x.ndim == 1 and np.all(self.rows @ x >= 0):
            return x
        R = self.rows
        incs = np.zeros((R.shape[0],) + x.shape)
        scale = max(1.0, float(np.max(np.linalg.norm(x, axis=-1))))
        converged = False
        for _ in range(self.max_iters):
            prev = x
            for i, a in enumerate(R):
                w = x + incs[i]
                s = np.minimum(w @ a, 0.0)
                y = w - np.multiply.outer(s, a)
                incs[i] = w - y
                x = y
            if np.max(np.linalg.norm(x - prev, axis=-1)) <= self.tol * scale:
                converged = True
                break
        self.last_converged = converged
        return x


class SplitPreimage(ConvexSet):
    """Projection onto ``{mu : G mu in L}`` for general ``L``.

    ADMM on the split ``G mu = w, w in L``: a cached Cholesky solve for
    ``mu``, a projection onto ``L`` for ``w``, then the scaled dual update.
    """

    is_cone = True
    exact = False

    def __init__(self, G, L, opts=None):
        self.G = np.atleast_2d(np.asarray(G, dtype=float))
        self.L = L
        self.dim = self.G.shape[1]
        self.opts = opts or SolverOptions()
        self.rho = self.opts.split_rho / max(sigma_max(self.G) ** 2, 1e-300)
        self._chol = np.linalg.cholesky(np.eye(self.dim) + self.rho * self.G.T @ self.G)
        self.last_converged = True

    def _solve(self, rhs):
        c = self._chol
        return np.linalg.solve(c.T, np.linalg.solve(c, rhs))

    def _project_one(self, z):
        G, L, rho, tol = self.G, self.L, self.rho, self.opts.tol
        w = L.project(G @ z)
        u = np.zeros_like(w)
        scale = 1.0 + np.linalg.norm(z)
        mu = z
        self.last_converged = False
        for _ in range(self.opts.max_iters):
            mu = self._solve(z + rho * (G.T @ (w - u)))
            Gm = G @ mu
            w_old = w
            w = L.project(Gm + u)
            u = u + Gm - w
            if np.linalg.norm(Gm - w) <= tol * scale and rho * np.linalg.norm(G.T @ (w - w_old)) <= tol * scale:
                self.last_converged = True
                break
        return mu


def preimage_oracle(G, L, opts=None):
    """Oracle for ``G^{-1} L = {mu : G mu in L}``.

    Subspace-like ``L`` give an exact subspace (null space of the component
    of ``G`` orthogonal to ``L``); a halfspace gives an exact halfspace; an
    orthant gives a polyhedral cone projected by Dykstra; anything else falls
    back to an ADMM splitting.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    m, n = G.shape
    if L.dim != m:
        raise ValueError(f"L lives in R^{L.dim} but G has {m} rows")
    if isinstance(L, Full):
        return Full(n)
    if isinstance(L, Trivial):
        return subspace_from_columns(null_space(G), n)
    if isinstance(L, Subspace):
        comp = G - L.basis @ (L.basis.T @ G)
        return subspace_from_columns(null_space(comp), n)
    if isinstance(L, Halfspace):
        normal = G.T @ L.normal
        if np.linalg.norm(normal) <= RANK_CUTOFF * max(np.linalg.norm(G), 1.0):
            return Full(n)
        return Halfspace(normal)
    if isinstance(L, Orthant):
        if m == 1:
            return preimage_oracle(G, Halfspace(np.ones(1)))
        return PolyhedralCone(G)
    if isinstance(L, Cone) or getattr(L, "is_cone", False):
        return SplitPreimage(G, L, opts)
    raise TypeError(f"unsupported cone for preimage: {L!r}")
