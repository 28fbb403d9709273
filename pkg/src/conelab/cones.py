"""Closed convex cones with metric projections.

Every cone acts on the last axis of its input, so ``project`` accepts a single
vector of shape ``(d,)`` or a batch of shape ``(N, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dykstra import dykstra

__all__ = [
    "Cone",
    "Trivial",
    "Full",
    "Orthant",
    "Subspace",
    "SecondOrder",
    "Circular",
    "Halfspace",
    "Product",
    "Polar",
    "Reflected",
    "Restricted",
    "ambient_dim",
    "contains",
    "moreau_decompose",
    "polar",
    "project",
    "ray",
    "reflect",
    "subspace_from_columns",
]

RANK_CUTOFF = 1e-10


def _as_points(cone, v):
    v = np.asarray(v, dtype=float)
    if v.ndim not in (1, 2) or v.shape[-1] != cone.dim:
        raise ValueError(f"expected vector(s) of dimension {cone.dim}, got shape {v.shape}")
    return v


def _unit(vec, what):
    vec = np.asarray(vec, dtype=float).ravel()
    nrm = np.linalg.norm(vec)
    if vec.size == 0 or not np.isfinite(nrm) or nrm == 0:
        raise ValueError(f"{what} must be a nonzero finite vector")
    return vec / nrm


def _check_dim(d):
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)) or d < 1:
        raise ValueError(f"cone dimension must be a positive integer, got {d!r}")
    return int(d)


class Cone:
    """Base class for closed convex cones in ``R^dim``."""

    is_cone = True
    is_bounded = False
    #: True when ``project`` is a closed form (no inner iteration).
    exact = True

    dim: int

    def project(self, v):
        v = _as_points(self, v)
        if v.ndim == 1:
            return self._project(v[None, :])[0]
        return self._project(v)

    def _project(self, v):  # pragma: no cover - abstract
        """Project each row of the 2-D array ``v``."""
        raise NotImplementedError

    def polar(self):
        return Polar(self)

    def stat_dim(self):
        """Closed-form statistical dimension, or None when unknown."""
        return None


@dataclass(frozen=True)
class Trivial(Cone):
    """The zero cone ``{0}``."""

    dim: int

    def __post_init__(self):
        object.__setattr__(self, "dim", _check_dim(self.dim))

    def _project(self, v):
        return np.zeros_like(v)

    def polar(self):
        return Full(self.dim)

    def stat_dim(self):
        return 0.0


@dataclass(frozen=True)
class Full(Cone):
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "dim", _check_dim(self.dim))

    def _project(self, v):
        return v.copy()

    def polar(self):
        return Trivial(self.dim)

    def stat_dim(self):
        return float(self.dim)


@dataclass(frozen=True)
class Orthant(Cone):
    """Nonnegative orthant."""

    dim: int

    def __post_init__(self):
        object.__setattr__(self, "dim", _check_dim(self.dim))

    def _project(self, v):
        return np.maximum(v, 0.0)

    def polar(self):
        return Reflected(self)

    def stat_dim(self):
        return self.dim / 2


@dataclass(frozen=True, eq=False)
class Subspace(Cone):
    """Linear span of the columns of ``basis``.

    The basis is re-orthonormalized at construction (SVD with a relative
    cutoff), so any spanning set of columns may be passed.
    """

    basis: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.ndim != 2 or b.shape[0] < 1:
            raise ValueError("subspace basis must be a d x k matrix")
        if not np.all(np.isfinite(b)):
            raise ValueError("subspace basis has non-finite entries")
        if b.shape[1]:
            u, s, _ = np.linalg.svd(b, full_matrices=False)
            keep = s > RANK_CUTOFF * s[0] if s.size and s[0] > 0 else np.zeros(0, bool)
            b = u[:, keep]
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "dim", b.shape[0])

    @property
    def k(self):
        return self.basis.shape[1]

    def _project(self, v):
        return (v @ self.basis) @ self.basis.T

    def complement(self):
        d, k = self.basis.shape
        if k == 0:
            return Subspace(np.eye(d))
        u, _, _ = np.linalg.svd(self.basis, full_matrices=True)
        return Subspace(u[:, k:])

    def polar(self):
        return self.complement()

    def stat_dim(self):
        return float(self.k)

    def __repr__(self):
        return f"Subspace(dim={self.dim}, k={self.k})"


@dataclass(frozen=True)
class SecondOrder(Cone):
    """Lorentz cone ``{(z, t) : ||z|| <= t}``; the last coordinate is ``t``."""

    dim: int

    def __post_init__(self):
        object.__setattr__(self, "dim", _check_dim(self.dim))

    def _project(self, v):
        z = v[..., :-1]
        t = v[..., -1]
        r = np.linalg.norm(z, axis=-1)
        out = np.zeros_like(v)
        inside = r <= t
        out[inside] = v[inside]
        mid = ~inside & (r > -t)
        if np.any(mid):
            a = (r[mid] + t[mid]) / 2
            out[mid, :-1] = (a / r[mid])[:, None] * z[mid]
            out[mid, -1] = a
        return out

    def polar(self):
        return Reflected(self)

    def stat_dim(self):
        return self.dim / 2


@dataclass(frozen=True)
class Circular(Cone):
    """Circular cone of half-aperture ``alpha`` around the first basis vector."""

    dim: int
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "dim", _check_dim(self.dim))
        a = float(self.alpha)
        if not 0 < a < math.pi / 2:
            raise ValueError(f"circular cone angle must lie in (0, pi/2), got {a}")
        object.__setattr__(self, "alpha", a)

    def _project(self, v):
        ca, sa = math.cos(self.alpha), math.sin(self.alpha)
        x1 = v[..., 0]
        w = v[..., 1:]
        r = np.linalg.norm(w, axis=-1)
        out = np.zeros_like(v)
        inside = r * ca <= x1 * sa
        out[inside] = v[inside]
        # polar region: angle to -e1 at most pi/2 - alpha
        mid = ~inside & ~(r * sa <= -x1 * ca)
        if np.any(mid):
            s = x1[mid] * ca + r[mid] * sa  # length along the boundary ray
            out[mid, 0] = s * ca
            scale = s * sa / r[mid]
            out[mid, 1:] = scale[:, None] * w[mid]
        return out

    def polar(self):
        return Reflected(Circular(self.dim, math.pi / 2 - self.alpha))


@dataclass(frozen=True, eq=False)
class Halfspace(Cone):
    """``{mu : <normal, mu> >= 0}``."""

    normal: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        n = _unit(self.normal, "halfspace normal")
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "dim", n.size)

    def _project(self, v):
        s = np.minimum(v @ self.normal, 0.0)
        return v - np.multiply.outer(s, self.normal)

    def stat_dim(self):
        return self.dim - 0.5

    def __repr__(self):
        return f"Halfspace(dim={self.dim})"


@dataclass(frozen=True)
class Product(Cone):
    """Direct product; coordinates are the children's, concatenated."""

    children: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        kids = tuple(self.children)
        if not kids or not all(isinstance(c, Cone) for c in kids):
            raise ValueError("product needs at least one child cone")
        object.__setattr__(self, "children", kids)
        object.__setattr__(self, "dim", sum(c.dim for c in kids))

    @property
    def exact(self):
        return all(c.exact for c in self.children)

    def _project(self, v):
        out = np.empty_like(v)
        start = 0
        for c in self.children:
            sl = slice(start, start + c.dim)
            out[..., sl] = c.project(v[..., sl])
            start += c.dim
        return out

    def polar(self):
        return Product(tuple(polar(c) for c in self.children))

    def stat_dim(self):
        parts = [c.stat_dim() for c in self.children]
        return None if any(p is None for p in parts) else float(sum(parts))


@dataclass(frozen=True)
class Polar(Cone):
    """Lazy polar cone, projected through the Moreau identity."""

    inner: Cone
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dim", self.inner.dim)

    @property
    def exact(self):
        return self.inner.exact

    def _project(self, v):
        return v - self.inner.project(v)

    def polar(self):
        return self.inner

    def stat_dim(self):
        s = self.inner.stat_dim()
        return None if s is None else self.dim - s


@dataclass(frozen=True)
class Reflected(Cone):
    """The cone ``-inner``."""

    inner: Cone
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dim", self.inner.dim)

    @property
    def exact(self):
        return self.inner.exact

    def _project(self, v):
        return -self.inner.project(-v)

    def polar(self):
        return reflect(polar(self.inner))

    def stat_dim(self):
        return self.inner.stat_dim()


@dataclass(frozen=True, eq=False)
class Restricted(Cone):
    """``K_x = K ∩ {mu : <x, mu> >= 0}``.

    The projection is ``Pi_K(v + lam * x)`` for the smallest multiplier
    ``lam >= 0`` making ``<x, .>`` nonnegative; ``lam`` is found by bisection
    (the map ``lam -> <x, Pi_K(v + lam x)>`` is nondecreasing). Batches whose
    bracket cannot be found fall back to Dykstra on ``{K, halfspace}``.
    """

    inner: Cone
    x: np.ndarray
    dykstra_iters: int = 200
    dykstra_tol: float = 1e-10
    dim: int = field(init=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        if x.size != self.inner.dim:
            raise ValueError(f"restriction vector has dimension {x.size}, cone has {self.inner.dim}")
        if abs(np.linalg.norm(x) - 1) > 1e-10:
            raise ValueError("restriction vector must be a unit vector")
        x = x / np.linalg.norm(x)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "dim", self.inner.dim)
        # A half-subspace (x inside the subspace) has a closed-form projection.
        flat = isinstance(self.inner, (Subspace, Full)) and np.linalg.norm(self.inner.project(x) - x) <= 1e-12
        object.__setattr__(self, "_flat", flat)

    @property
    def exact(self):
        return self._flat

    def _project(self, v):
        out = self.inner.project(v)
        if self._flat:
            return out - np.minimum(out @ self.x, 0.0)[..., None] * self.x
        bad = out @ self.x < 0
        if np.any(bad):
            out[bad] = self._search(v[bad])
        return out

    def _search(self, V):
        x = self.x
        lo = np.zeros(len(V))
        hi = np.maximum(np.linalg.norm(V, axis=1), 1e-300)
        phi = lambda lam: self.inner.project(V + lam[:, None] * x) @ x  # noqa: E731
        for _ in range(80):
            short = phi(hi) < 0
            if not np.any(short):
                break
            hi = np.where(short, 2 * hi, hi)
        ok = phi(hi) >= 0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.all((mid == lo) | (mid == hi)):
                break
            neg = phi(mid) < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        res = self.inner.project(V + hi[:, None] * x)
        if not np.all(ok):
            res[~ok] = dykstra(
                [self.inner, Halfspace(x)], V[~ok], max_iters=self.dykstra_iters, tol=self.dykstra_tol
            )
        return res

    def __repr__(self):
        return f"Restricted({self.inner!r}, x)"


# ---------------------------------------------------------------- helpers


def reflect(cone):
    """``-cone`` with double reflections collapsed."""
    if isinstance(cone, Reflected):
        return cone.inner
    if isinstance(cone, (Trivial, Full, Subspace)):
        return cone
    return Reflected(cone)


def ray(direction):
    """The ray ``{t * direction : t >= 0}``."""
    u = _unit(direction, "ray direction")
    return Restricted(Subspace(u[:, None]), u)


def subspace_from_columns(cols, dim):
    """Span of ``cols`` as the tightest cone type (Trivial/Subspace/Full)."""
    cols = np.asarray(cols, dtype=float).reshape(dim, -1)
    if cols.shape[1] == 0:
        return Trivial(dim)
    s = Subspace(cols)
    if s.k == 0:
        return Trivial(dim)
    if s.k == dim:
        return Full(dim)
    return s


def ambient_dim(cone):
    return cone.dim


def project(cone, v):
    """Nearest point of ``cone`` to ``v`` (or to each row of ``v``)."""
    return cone.project(v)


def polar(cone):
    """Polar cone, in closed form where one is known."""
    return cone.polar()


def moreau_decompose(cone, v):
    """Split ``v`` as ``Pi_K(v) + Pi_{K polar}(v)``.

    The polar part is computed from the polar's own projection (closed form
    when available), so the identity ``v = vK + vKpolar`` is a genuine check.
    """
    return cone.project(v), polar(cone).project(v)


def contains(cone, v, tol=1e-9):
    """True iff ``||v - Pi_K(v)|| <= tol * (1 + ||v||)``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.asarray(v, dtype=float)
    gap = np.linalg.norm(v - cone.project(v), axis=-1)
    res = gap <= tol * (1 + np.linalg.norm(v, axis=-1))
    return bool(res) if np.ndim(res) == 0 else res
