import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from causalkt import autodiff as ad
from causalkt.errors import ConfigError, DimensionError
from causalkt.sinkhorn import SinkhornConfig, hardness, permutation_matrix, round_to_permutation, sinkhorn

from conftest import numeric_grad, rel_error

logit_matrices = st.integers(1, 8).flatmap(
    lambda c: hnp.arrays(np.float64, (c, c), elements=st.floats(-5, 5, allow_nan=False))
)


def test_single_skill_is_one():
    for cfg in (SinkhornConfig(), SinkhornConfig(50.0, 1)):
        np.testing.assert_array_equal(sinkhorn(np.array([[-3.7]]), cfg).value, [[1.0]])


def test_dominant_diagonal_converges_to_identity():
    logits = 10 * np.eye(4) - 10 * (1 - np.eye(4))
    P = sinkhorn(logits, SinkhornConfig(10.0, 20)).value
    assert np.max(np.abs(P - np.eye(4))) < 1e-3


@pytest.mark.parametrize("c", [1, 2, 5, 9])
def test_uniform_logits_give_exact_uniform(c):
    P = sinkhorn(np.full((c, c), 0.3), SinkhornConfig(7.0, 3)).value
    # exact up to the rounding of C * (1/C)
    np.testing.assert_array_max_ulp(P, np.full((c, c), 1.0 / c), maxulp=2)


def test_non_square_rejected():
    with pytest.raises(DimensionError):
        sinkhorn(np.zeros((2, 3)))


@pytest.mark.parametrize("kwargs", [dict(temperature=0.0), dict(temperature=-1.0), dict(unroll=0), dict(unroll=2.5)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SinkhornConfig(**kwargs)


@settings(max_examples=60, deadline=None)
@given(logit_matrices, st.floats(0.1, 20), st.integers(1, 30))
def test_doubly_stochastic_shape(logits, temperature, unroll):
    P = sinkhorn(logits, SinkhornConfig(temperature, unroll)).value
    assert np.all(P >= 0) and np.all(np.isfinite(P))
    np.testing.assert_allclose(P.sum(axis=0), 1.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(logit_matrices, st.floats(-100, 100))
def test_shift_invariance(logits, shift):
    cfg = SinkhornConfig(3.0, 10)
    a = sinkhorn(logits, cfg).value
    b = sinkhorn(logits + shift, cfg).value
    assert np.max(np.abs(a - b)) < 1e-12


def test_rows_converge_with_unroll(rng):
    logits = rng.normal(size=(6, 6))
    errs = [np.abs(sinkhorn(logits, SinkhornConfig(2.0, k)).value.sum(axis=1) - 1).max() for k in (1, 5, 50)]
    assert errs[2] < errs[0]
    assert errs[2] < 1e-6


def test_gradient_matches_finite_differences(rng):
    logits = ad.tensor(rng.normal(size=(4, 4)), requires_grad=True)
    weights = rng.normal(size=(4, 4))
    cfg = SinkhornConfig(3.0, 6)
    ad.backward(ad.sum(ad.mul(sinkhorn(logits, cfg), weights)))
    fd = numeric_grad(lambda: (sinkhorn(logits.value, cfg).value * weights).sum(), logits.value)
    assert rel_error(logits.grad, fd) < 1e-5


def test_hardness_examples():
    assert hardness(permutation_matrix([2, 0, 1])) == 1.0
    assert hardness(np.full((4, 4), 0.25)) == 0.25


def test_hardness_grows_with_temperature(rng):
    logits = rng.normal(size=(10, 10))
    values = [hardness(sinkhorn(logits, SinkhornConfig(t, 50))) for t in (1, 5, 20)]
    assert values[0] <= values[1] + 0.02 <= values[2] + 0.04


def test_rounding_examples():
    np.testing.assert_array_equal(round_to_permutation(np.eye(3)), [0, 1, 2])
    np.testing.assert_array_equal(round_to_permutation(np.array([[0.1, 0.9], [0.9, 0.1]])), [1, 0])


def test_rounding_ties_prefer_first_index():
    np.testing.assert_array_equal(round_to_permutation(np.full((3, 3), 1 / 3)), [0, 1, 2])


@settings(max_examples=100, deadline=None)
@given(logit_matrices)
def test_rounding_is_a_bijection(logits):
    perm = round_to_permutation(logits)
    assert sorted(perm) == list(range(len(logits)))


def _sharp_doubly_stochastic(rng, n, c, temperature=10.0, unroll=25):
    # batched sampler, as sharp as the relaxation is at the end of the default schedule
    x = np.exp(temperature * rng.normal(size=(n, c, c)))
    for _ in range(unroll):
        x /= x.sum(axis=2, keepdims=True)
        x /= x.sum(axis=1, keepdims=True)
    return x


def test_greedy_rounding_matches_exhaustive_assignment(rng):
    perms = np.array(list(itertools.permutations(range(5))))
    samples = _sharp_doubly_stochastic(rng, 20000, 5)
    scores = samples[:, np.arange(5), perms].sum(axis=2)  # (n, 120)
    best = perms[np.argmax(scores, axis=1)]
    agree = np.mean([np.array_equal(round_to_permutation(P), b) for P, b in zip(samples, best)])
    assert agree >= 0.95


def test_permutation_matrix_layout():
    P = permutation_matrix([1, 2, 0])
    np.testing.assert_array_equal(P, [[0, 1, 0], [0, 0, 1], [1, 0, 0]])
