"""Monte Carlo laboratory for random linear images of convex cones."""

__version__ = "0.1.0"

from .cones import (  # noqa: E402
    Circular,
    Cone,
    Full,
    Halfspace,
    Orthant,
    Polar,
    Product,
    Reflected,
    Restricted,
    SecondOrder,
    Subspace,
    Trivial,
    contains,
    moreau_decompose,
    polar,
    project,
)
from .conic_stats import NEG_INF, gaussian_width_mc, p_inf, q_inf, stat_dim_mc  # noqa: E402
from .grammar import parse_cone, parse_vector  # noqa: E402
from .intersect import detect_nontrivial_intersection  # noqa: E402
from .rng import RngStream, derive_stream  # noqa: E402
from .sets import Ball, ImageCone, preimage_oracle  # noqa: E402
from .support_solver import logistic_mle_exists, solve_conic_program, support_function  # noqa: E402

__all__ = [
    "Ball",
    "Circular",
    "Cone",
    "Full",
    "Halfspace",
    "ImageCone",
    "NEG_INF",
    "Orthant",
    "Polar",
    "Product",
    "Reflected",
    "Restricted",
    "RngStream",
    "SecondOrder",
    "Subspace",
    "Trivial",
    "contains",
    "derive_stream",
    "detect_nontrivial_intersection",
    "gaussian_width_mc",
    "logistic_mle_exists",
    "moreau_decompose",
    "p_inf",
    "parse_cone",
    "parse_vector",
    "polar",
    "preimage_oracle",
    "project",
    "q_inf",
    "solve_conic_program",
    "stat_dim_mc",
    "support_function",
]
