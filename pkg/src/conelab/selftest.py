"""Quick invariant suites behind ``conelab selftest``."""
from __future__ import annotations

import math
import time

import numpy as np

from .cones import (
    Circular,
    Full,
    Halfspace,
    Orthant,
    Product,
    SecondOrder,
    Subspace,
    Trivial,
    moreau_decompose,
    polar,
    ray,
    reflect,
)
from .conic_stats import NEG_INF, is_neg_inf, p_inf, q_inf
from .intersect import brute_force_intersection_oracle, detect_nontrivial_intersection
from .phase_lab import ExperimentConfig, run_experiment
from .rng import derive_stream, tag

__all__ = ["cone_catalog", "projection_residuals", "run_selftest"]


def cone_catalog(seed=0):
    """A fixed list of cones covering every closed-form projection."""
    s = derive_stream(seed, tag("catalog"), 0)
    u = s.child(0).normal(6)
    return [
        Trivial(5),
        Full(5),
        Orthant(7),
        SecondOrder(6),
        SecondOrder(2),
        Circular(5, math.pi / 5),
        Circular(4, 1.3),
        Subspace(s.child(1).normal((8, 3))),
        Halfspace(u / np.linalg.norm(u)),
        ray(u / np.linalg.norm(u)),
        Product((Orthant(2), SecondOrder(3), Full(1))),
        polar(Circular(5, 0.4)),
        reflect(Orthant(4)),
    ]


def projection_residuals(cone, V, rng_scale):
    """Worst relative residuals of idempotence, nonexpansiveness,
    homogeneity and the Moreau identities over the rows of ``V``."""
    P = cone.project(V)
    scale = np.maximum(1.0, np.linalg.norm(V, axis=1))
    idem = np.linalg.norm(cone.project(P) - P, axis=1) / scale
    W = np.roll(V, 1, axis=0)
    Q = cone.project(W)
    excess = np.linalg.norm(P - Q, axis=1) - np.linalg.norm(V - W, axis=1)
    nonexp = np.maximum(excess, 0) / np.maximum(1.0, np.linalg.norm(V - W, axis=1))
    homog = np.linalg.norm(cone.project(rng_scale[:, None] * V) - rng_scale[:, None] * P, axis=1)
    homog /= np.maximum(1.0, rng_scale * np.linalg.norm(V, axis=1))
    pk, pp = moreau_decompose(cone, V)
    sum_res = np.linalg.norm(pk + pp - V, axis=1) / scale
    orth = np.abs(np.sum(pk * pp, axis=1)) / scale**2
    return {
        "idempotence": float(idem.max()),
        "nonexpansive": float(nonexp.max()),
        "homogeneity": float(homog.max()),
        "moreau_sum": float(sum_res.max()),
        "moreau_orth": float(orth.max()),
    }


def grid_p_inf(a1, a2, a3, hi=1e4, n=20001):
    b = np.concatenate([[0.0], np.geomspace(1e-6, hi, n)])
    return float(np.min(-a1 * b + a3 * np.sqrt(b * b + 2 * a2 * b + 1)))


def run_selftest(out):
    ok_all = True

    def line(name, ok, detail, t0):
        nonlocal ok_all
        ok_all &= bool(ok)
        out.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({time.time() - t0:.2f}s)\n")

    t0 = time.time()
    s = derive_stream(0, tag("selftest"), 0)
    worst = 0.0
    for i, cone in enumerate(cone_catalog()):
        V = s.child(i).normal((500, cone.dim)) * 3
        lam = np.exp(s.child(i, 1).normal(500))
        worst = max(worst, max(projection_residuals(cone, V, lam).values()))
    line("cone projections", worst <= 1e-9, f"worst residual {worst:.2e}", t0)

    t0 = time.time()
    bad = 0
    rs = s.child(100)
    for j in range(200):
        a1, a2, a3 = rs.child(j).uniform(3) * np.array([3.0, 1.0, 3.0])
        v = p_inf(a1, a2, a3)
        if is_neg_inf(v):
            bad += not (a1 > a3)
        else:
            g = grid_p_inf(a1, a2, a3)
            bad += abs(v - g) > 1e-3 * max(1.0, abs(g))
    line("scalar minimizers", bad == 0, f"{bad} mismatches in 200", t0)

    t0 = time.time()
    cfg = ExperimentConfig.from_dict(
        {"experiment": "escape", "cone_K": "subspace:12:4", "axis": "ell", "grid": list(range(1, 13)), "trials": 20, "seed": 1}
    )
    grid = run_experiment(cfg)
    bad = sum(r.p_hat != (1.0 if r.control + 4 > 12 else 0.0) for r in grid.rows)
    line("subspace escape law", bad == 0, f"{bad} mismatching grid points", t0)

    t0 = time.time()
    bad = 0
    pairs = [(Circular(3, 0.5), reflect(Circular(3, 0.9))), (Orthant(3), SecondOrder(3)), (Circular(2, 0.3), Halfspace(np.array([-1.0, 0.0])))]
    for j, (A, B) in enumerate(pairs):
        d = detect_nontrivial_intersection(A, B, A.dim, stream=s.child(200, j))
        o = brute_force_intersection_oracle(A, B, A.dim)
        bad += d.verdict != o.verdict
    line("detector vs brute force", bad == 0, f"{bad} disagreements in {len(pairs)}", t0)

    t0 = time.time()
    okq = abs(q_inf(2.0, 1.0) - math.sqrt(3)) < 1e-12 and q_inf(1.0, 2.0) is NEG_INF
    line("q_inf closed form", okq, "sqrt(3) at (2, 1) and -inf at (1, 2)", t0)
    return ok_all
