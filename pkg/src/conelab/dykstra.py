"""Dykstra's alternating projection with correction terms."""
from __future__ import annotations

import numpy as np

__all__ = ["dykstra"]


def dykstra(sets, point, max_iters=2000, tol=1e-10, full_output=False):
    """Project ``point`` onto the intersection of ``sets``.

    Parameters
    ----------
    sets : sequence
        Objects exposing ``project(v)`` and ``dim``. Their intersection is
        assumed nonempty; when it is empty the iterates stall at a positive
        inter-set distance and ``converged`` stays False.
    point : ndarray
        Shape ``(d,)`` or a batch ``(N, d)`` projected row by row.
    max_iters : int
        Maximum number of full cycles over ``sets``.
    tol : float
        Stop once the cycle-to-cycle displacement is at most
        ``tol * max(1, ||point||)`` (and the iterate is feasible for every set
        to the same tolerance).
    full_output : bool
        Also return a dict with ``converged``, ``iterations`` and
        ``displacement``.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("dykstra needs at least one set")
    x = np.array(point, dtype=float)
    d = x.shape[-1]
    for s in sets:
        if s.dim != d:
            raise ValueError(f"set dimension {s.dim} does not match point dimension {d}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite entries")

    scale = max(1.0, float(np.max(np.linalg.norm(x, axis=-1))))
    if len(sets) == 1:
        y = sets[0].project(x)
        info = {"converged": True, "iterations": 1, "displacement": 0.0}
        return (y, info) if full_output else y

    incs = [np.zeros_like(x) for _ in sets]
    converged = False
    disp = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        x_prev = x
        for i, s in enumerate(sets):
            y = s.project(x + incs[i])
            incs[i] = x + incs[i] - y
            x = y
        disp = float(np.max(np.linalg.norm(x - x_prev, axis=-1)))
        if disp <= tol * scale:
            # The last set is satisfied exactly; check the others too.
            gap = max(float(np.max(np.linalg.norm(x - s.project(x), axis=-1))) for s in sets[:-1])
            if gap <= 10 * tol * scale:
                converged = True
                break
    info = {"converged": converged, "iterations": it, "displacement": disp}
    return (x, info) if full_output else x
