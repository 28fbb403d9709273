import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conelab.rng import RNG_ALGORITHM, RngStream, derive_stream, gaussian_matrix, gaussian_vector, tag

u64 = st.integers(min_value=0, max_value=2**64 - 1)

# Frozen from the first run of the correlation check below; the bound (0.05)
# is the contract, the value pins the generator.
FROZEN_SIBLING_CORR = 0.0119250794812154


def test_identical_lineage_is_byte_identical():
    a = derive_stream(7, 1, 0).normal(1000)
    b = derive_stream(7, 1, 0).normal(1000)
    assert a.tobytes() == b.tobytes()


def test_sibling_streams_uncorrelated():
    a = derive_stream(7, 1, 0).normal(10_000)
    b = derive_stream(7, 1, 1).normal(10_000)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 0.05
    assert r == pytest.approx(FROZEN_SIBLING_CORR, abs=1e-6)


def test_seed_sensitivity():
    assert not np.array_equal(derive_stream(7, 2, 0).normal(16), derive_stream(8, 2, 0).normal(16))


def test_correlation_battery_across_lineage_components():
    base = derive_stream(11, 3, 5)
    others = [derive_stream(12, 3, 5), derive_stream(11, 4, 5), derive_stream(11, 3, 6), base.child(0), base.child(1)]
    x = base.fresh().normal(20_000)
    for s in others:
        y = s.normal(20_000)
        # |r| * sqrt(N) is approximately N(0, 1); 3.29 is the two-sided 0.001 level.
        assert abs(np.corrcoef(x, y)[0, 1]) * np.sqrt(20_000) < 3.29
        # lag-1 cross correlation as well
        assert abs(np.corrcoef(x[1:], y[:-1])[0, 1]) * np.sqrt(20_000) < 3.29


def test_lineage_properties():
    s = derive_stream(5, 6, 7)
    assert (s.master_seed, s.domain_tag, s.index) == (5, 6, 7)
    assert s.child(1, 2).lineage == (5, 6, 7, 1, 2)


def test_fresh_rewinds():
    s = derive_stream(1, 1, 1)
    first = s.normal(5)
    s.normal(5)
    assert np.array_equal(s.fresh().normal(5), first)


def test_gaussian_vector_moments():
    g = gaussian_vector(derive_stream(3, tag("moments"), 0), 100_000)
    assert abs(g.mean()) <= 0.02
    assert 0.98 <= g.var() <= 1.02


def test_gaussian_vector_repeatable_triples():
    a = gaussian_vector(derive_stream(9, 9, 9), 3)
    b = gaussian_vector(derive_stream(9, 9, 9), 3)
    assert np.array_equal(a, b)


def test_gaussian_vector_coverage_of_196():
    g = gaussian_vector(derive_stream(4, tag("coverage"), 0), 1_000_000)
    frac = np.mean(np.abs(g) < 1.96)
    assert 0.947 <= frac <= 0.953


def test_gaussian_matrix_operator_norm():
    hits = 0
    for i in range(100):
        s = np.linalg.norm(gaussian_matrix(derive_stream(5, tag("opnorm"), i), 50, 50), 2)
        hits += 2 * np.sqrt(50) - 6 <= s <= 2 * np.sqrt(50) + 6
    assert hits >= 99


def test_gaussian_matrix_scalar_and_transpose_multiset():
    s = derive_stream(1, 2, 3)
    one = gaussian_matrix(s, 1, 1)
    assert one.shape == (1, 1)
    assert one[0, 0] == derive_stream(1, 2, 3).normal(1)[0]
    a = gaussian_matrix(derive_stream(1, 2, 4), 3, 5)
    b = gaussian_matrix(derive_stream(1, 2, 4), 5, 3)
    assert np.array_equal(np.sort(a.ravel()), np.sort(b.ravel()))
    assert np.array_equal(a.ravel(), b.ravel())


@pytest.mark.parametrize("bad", [0, -1, 2.5, True])
def test_gaussian_vector_rejects_bad_dims(bad):
    with pytest.raises(ValueError):
        gaussian_vector(derive_stream(0, 0, 0), bad)


def test_lineage_range_checked():
    with pytest.raises(ValueError):
        RngStream((2**64, 0, 0))
    with pytest.raises(TypeError):
        RngStream((1.5, 0, 0))


def test_algorithm_id_mentions_generator():
    assert RNG_ALGORITHM.startswith("philox4x64")


def test_tag_is_stable():
    assert tag("escape") == tag("escape") != tag("logistic")
    assert 0 <= tag("escape") < 2**64


@given(u64, u64, u64)
def test_determinism_property(a, b, c):
    assert np.array_equal(derive_stream(a, b, c).normal(4), derive_stream(a, b, c).normal(4))


@given(u64, st.integers(0, 2**32), st.integers(0, 2**32))
def test_children_differ(a, i, j):
    if i != j:
        s = derive_stream(a, 0, 0)
        assert not np.array_equal(s.child(i).normal(4), s.child(j).normal(4))


def test_child_zero_differs_from_parent():
    s = derive_stream(11, 3, 5)
    assert not np.array_equal(s.fresh().normal(8), s.child(0).normal(8))


def test_word_boundaries_do_not_collide():
    assert not np.array_equal(RngStream((2**32,)).normal(4), RngStream((0, 1)).normal(4))
