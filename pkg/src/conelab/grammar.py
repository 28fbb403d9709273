"""Text grammar for cones and vectors used by the CLI and experiment configs.

Cones::

    orthant:<d>  full:<d>  trivial:<d>  soc:<d>  circ:<d>:<alpha>
    subspace:<d>:<k>          random k-dim subspace (basis drawn from the seed)
    half:<d>:<vec>            halfspace {<vec, mu> >= 0}
    ray:<d>:<vec>
    prod:(<spec>,<spec>,...)  polar:(<spec>)  neg:(<spec>)
    restrict:(<spec>,<vec>)

Vectors (dimension supplied by context)::

    e<i>  (1-based)   ones   neg-ones   zero   <v1>,<v2>,...
"""
from __future__ import annotations

import math

import numpy as np

from .cones import (
    Circular,
    Full,
    Halfspace,
    Orthant,
    Product,
    Restricted,
    SecondOrder,
    Subspace,
    Trivial,
    polar,
    ray,
    reflect,
)
from .rng import derive_stream, tag

__all__ = ["GrammarError", "parse_cone", "parse_vector", "split_top"]


class GrammarError(ValueError):
    pass


def split_top(text):
    """Split on commas that are not nested inside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise GrammarError(f"unbalanced parentheses in {text!r}")
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if depth:
        raise GrammarError(f"unbalanced parentheses in {text!r}")
    parts.append("".join(cur).strip())
    return parts


def parse_vector(text, d, unit=False):
    """Parse a vector spec of dimension ``d``; optionally normalize it."""
    t = text.strip().lower()
    if t.startswith("e") and t[1:].isdigit():
        i = int(t[1:])
        if not 1 <= i <= d:
            raise GrammarError(f"basis index {i} out of range 1..{d}")
        v = np.zeros(d)
        v[i - 1] = 1.0
    elif t == "ones":
        v = np.ones(d)
    elif t == "neg-ones":
        v = -np.ones(d)
    elif t == "zero":
        v = np.zeros(d)
    else:
        try:
            v = np.array([float(p) for p in t.split(",")])
        except ValueError as exc:
            raise GrammarError(f"bad vector spec {text!r}") from exc
        if v.size != d:
            raise GrammarError(f"vector {text!r} has {v.size} entries, expected {d}")
    if not np.all(np.isfinite(v)):
        raise GrammarError(f"vector {text!r} has non-finite entries")
    if unit:
        n = np.linalg.norm(v)
        if n == 0:
            raise GrammarError("a unit vector spec cannot be zero")
        v = v / n
    return v


def _int(text, what):
    try:
        val = int(text)
    except ValueError as exc:
        raise GrammarError(f"{what} must be an integer, got {text!r}") from exc
    if val < 1:
        raise GrammarError(f"{what} must be positive, got {val}")
    return val


class _Parser:
    def __init__(self, seed, domain):
        self.seed = seed
        self.domain = tag(domain)
        self.n_bases = 0

    def _inner(self, rest, name):
        if not (rest.startswith("(") and rest.endswith(")")):
            raise GrammarError(f"{name} expects a parenthesized argument list")
        return split_top(rest[1:-1])

    def parse(self, text):
        text = text.strip()
        head, _, rest = text.partition(":")
        head = head.strip().lower()
        if head in ("orthant", "full", "trivial", "soc"):
            d = _int(rest, f"{head} dimension")
            return {"orthant": Orthant, "full": Full, "trivial": Trivial, "soc": SecondOrder}[head](d)
        if head == "circ":
            parts = rest.split(":")
            if len(parts) != 2:
                raise GrammarError("circ expects circ:<d>:<alpha>")
            d = _int(parts[0], "circ dimension")
            alpha = _angle(parts[1])
            if not 0 < alpha < math.pi / 2:
                raise GrammarError(f"circ angle must lie in (0, pi/2), got {alpha}")
            return Circular(d, alpha)
        if head == "subspace":
            parts = rest.split(":")
            if len(parts) != 2:
                raise GrammarError("subspace expects subspace:<d>:<k>")
            d = _int(parts[0], "subspace dimension")
            try:
                k = int(parts[1])
            except ValueError as exc:
                raise GrammarError("subspace rank must be an integer") from exc
            if not 0 <= k <= d:
                raise GrammarError(f"subspace rank {k} must lie in 0..{d}")
            stream = derive_stream(self.seed, self.domain, self.n_bases)
            self.n_bases += 1
            if k == 0:
                return Trivial(d)
            if k == d:
                return Full(d)
            return Subspace(stream.normal((d, k)))
        if head in ("half", "ray"):
            d_text, _, vec = rest.partition(":")
            d = _int(d_text, f"{head} dimension")
            v = parse_vector(vec, d, unit=True)
            return Halfspace(v) if head == "half" else ray(v)
        if head == "prod":
            return Product(tuple(self.parse(p) for p in self._inner(rest, "prod")))
        if head == "polar":
            args = self._inner(rest, "polar")
            if len(args) != 1:
                raise GrammarError("polar takes exactly one cone")
            return polar(self.parse(args[0]))
        if head == "neg":
            args = self._inner(rest, "neg")
            if len(args) != 1:
                raise GrammarError("neg takes exactly one cone")
            return reflect(self.parse(args[0]))
        if head == "restrict":
            args = self._inner(rest, "restrict")
            if len(args) < 2:
                raise GrammarError("restrict expects (<cone>,<vector>)")
            inner = self.parse(args[0])
            x = parse_vector(",".join(args[1:]), inner.dim, unit=True)
            return Restricted(inner, x)
        raise GrammarError(f"unknown cone kind {head!r} in {text!r}")


def _angle(text):
    t = text.strip().lower().replace(" ", "")
    try:
        if "pi" in t:
            num, _, den = t.partition("/")
            coef = num.replace("*", "").replace("pi", "")
            val = (float(coef) if coef else 1.0) * math.pi
            return val / float(den) if den else val
        return float(t)
    except ValueError as exc:
        raise GrammarError(f"bad angle {text!r}") from exc


def parse_cone(text, seed=0, domain="cone-basis"):
    """Parse a cone spec.

    Random subspace bases draw from streams keyed by ``(seed, tag(domain), i)``
    where ``i`` counts the subspaces in the spec; give two specs different
    domains to keep their bases independent.
    """
    if not isinstance(text, str) or not text.strip():
        raise GrammarError("empty cone spec")
    try:
        return _Parser(seed, domain).parse(text)
    except GrammarError:
        raise
    except ValueError as exc:
        raise GrammarError(str(exc)) from exc
