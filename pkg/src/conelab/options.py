"""Solver option bundles and the central table of numeric defaults."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

__all__ = ["DEFAULTS", "DetectorOptions", "SolverOptions", "defaults_table"]


@dataclass(frozen=True)
class SolverOptions:
    """Iteration limits and tolerances for the convex solvers.

    ``tol`` controls inner convergence, ``dist_tol`` is the feasibility /
    certificate threshold and must sit strictly between ``tol`` and 1.
    ``kkt_tol`` bounds the error of image-cone projections relative to
    ``1 + ||y||``.
    """

    max_iters: int = 20000
    tol: float = 1e-10
    kkt_tol: float = 1e-6
    dist_tol: float = 1e-6
    step: float = 0.5
    dykstra_iters: int = 2000
    stall_window: int = 50
    stall_rel: float = 1e-10
    split_rho: float = 10.0
    max_radius_doublings: int = 30
    accelerate: bool = True

    def __post_init__(self):
        if not (0 < self.tol < self.dist_tol < 1):
            raise ValueError("solver options need 0 < tol < dist_tol < 1")
        if self.max_iters < 1 or self.dykstra_iters < 1:
            raise ValueError("iteration limits must be positive")
        if self.kkt_tol <= 0 or self.step <= 0 or self.split_rho <= 0:
            raise ValueError("kkt_tol, step and split_rho must be positive")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class DetectorOptions:
    """Options for the nontrivial-intersection detector."""

    starts: int = 16
    max_iters: int = 400
    rho_tol: float = 1e-4
    dist_tol: float = 1e-6
    collapse_tol: float = 1e-14
    max_restarts: int = 4
    polish_iters: int = 4000
    extrapolation_window: int = 25
    stall_ratio: float = 0.9

    def __post_init__(self):
        if self.starts < 1 or self.max_iters < 1:
            raise ValueError("starts and max_iters must be positive")
        if not (0 < self.rho_tol < 1 and self.dist_tol > 0):
            raise ValueError("rho_tol must lie in (0, 1) and dist_tol must be positive")

    def with_(self, **kw):
        return replace(self, **kw)


DEFAULTS = {
    "solver": SolverOptions(),
    "detector": DetectorOptions(),
    "experiment": {
        "trials": 100,
        "n_dir": 50,
        "tau": 0.25,
        "epsilon": 0.2,
        "k": 1,
        "b_mode": "zero",
        "x_spec": "e1",
        "workers": 1,
    },
}


def defaults_table():
    """Rows ``(group, name, value)`` for every documented default."""
    rows = []
    for group in ("solver", "detector"):
        obj = DEFAULTS[group]
        for f in fields(obj):
            rows.append((group, f.name, getattr(obj, f.name)))
    for name, value in DEFAULTS["experiment"].items():
        rows.append(("experiment", name, value))
    return rows


def as_dict(opts):
    return asdict(opts)
