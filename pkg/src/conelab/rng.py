"""Deterministic, splittable random streams.

Every stream is identified by its lineage ``(master_seed, domain_tag, index,
*children)``. The lineage, length-prefixed with two 32-bit words per entry, is
hashed through :class:`numpy.random.SeedSequence` into the key of a Philox4x64
counter-based generator, so a stream depends only on its lineage and never on
how many other streams were consumed before it.
Normal variates come from numpy's ziggurat sampler.
"""
from __future__ import annotations

import hashlib

import numpy as np

__all__ = [
    "RNG_ALGORITHM",
    "RngStream",
    "derive_stream",
    "gaussian_matrix",
    "gaussian_vector",
    "tag",
]

#: Frozen identifier written into every CSV header.
RNG_ALGORITHM = f"philox4x64-seedseq-ziggurat/numpy{np.__version__}"

_U64 = (1 << 64) - 1


def tag(name: str) -> int:
    """Map a human-readable domain name to a stable 64-bit tag."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _check_u64(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{what} must be an integer, got {type(value).__name__}")
    value = int(value)
    if not 0 <= value <= _U64:
        raise ValueError(f"{what} must fit in an unsigned 64-bit integer, got {value}")
    return value


class RngStream:
    """A random stream whose output is a pure function of its lineage.

    Instances carry mutable generator state (drawing advances the stream),
    but two instances built from the same lineage always produce the same
    sequence. Use :meth:`child` to derive independent sub-streams.
    """

    __slots__ = ("lineage", "_gen")

    def __init__(self, lineage):
        self.lineage = tuple(_check_u64(v, "lineage entry") for v in lineage)
        # Fixed-width words plus a length prefix: SeedSequence zero-pads and
        # uses variable-width ints, so (a, b) and (a, b, 0) would collide.
        words = np.array((len(self.lineage),) + self.lineage, dtype=np.uint64).view(np.uint32)
        seq = np.random.SeedSequence(words)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def __repr__(self):
        return f"RngStream(lineage={self.lineage})"

    @property
    def master_seed(self):
        return self.lineage[0]

    @property
    def domain_tag(self):
        return self.lineage[1]

    @property
    def index(self):
        return self.lineage[2]

    def child(self, *indices):
        """Return a fresh stream whose lineage extends this one."""
        return RngStream(self.lineage + tuple(indices))

    def fresh(self):
        """Return a stream with the same lineage, rewound to the start."""
        return RngStream(self.lineage)

    # Thin wrappers; everything else in the package draws through these.
    def normal(self, shape):
        return self._gen.standard_normal(shape)

    def uniform(self, shape=None):
        return self._gen.random(shape)

    def signs(self, size):
        """Fair +/-1 labels."""
        return np.where(self._gen.random(size) < 0.5, -1.0, 1.0)


def derive_stream(master_seed: int, domain_tag: int, index: int) -> RngStream:
    """Build the stream with lineage ``(master_seed, domain_tag, index)``."""
    return RngStream((master_seed, domain_tag, index))


def _positive(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def gaussian_vector(stream: RngStream, d: int) -> np.ndarray:
    """Draw ``d`` i.i.d. standard normals, advancing ``stream``."""
    return stream.normal(_positive(d, "d"))


def gaussian_matrix(stream: RngStream, m: int, n: int) -> np.ndarray:
    """Draw an ``m x n`` standard Gaussian matrix.

    Entries are filled in row-major order: entry ``(i, j)`` is draw number
    ``i * n + j``. Consequently ``gaussian_matrix(s, m, n)`` and
    ``gaussian_matrix(s, n, m)`` consume exactly the same variates.
    """
    m = _positive(m, "m")
    n = _positive(n, "n")
    return stream.normal(m * n).reshape(m, n)
