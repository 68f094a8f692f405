import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_mlr_spec
from quickint.belief import (
    first_order_update,
    observation_likelihood,
    predict,
    update,
    update_all,
)
from quickint.model import make_paper_family

beliefs = st.floats(min_value=0.0, max_value=1.0)


def test_predict_examples():
    assert predict(1.0, 0.3) == 1.0
    assert predict(0.0, 0.03) == pytest.approx(0.03, abs=1e-15)
    assert predict(0.5, 0.03) == pytest.approx(0.515, abs=1e-15)


def test_likelihood_endpoints(paper):
    np.testing.assert_allclose(observation_likelihood(paper.replace(lam=0.0), 0.0, 1),
                               paper.alpha, atol=0)
    np.testing.assert_allclose(observation_likelihood(paper, 1.0, 2), paper.betas[2],
                               atol=1e-16)


def test_likelihood_reference_family(paper):
    sigma = observation_likelihood(paper, 0.0, 0)
    np.testing.assert_allclose(sigma, [0.1964, 0.1982, 0.2, 0.2018, 0.2036], atol=1e-14)


def test_update_hand_example(paper):
    # z=5 in one-based numbering
    expected = 0.515 * 0.32 / (0.515 * 0.32 + 0.485 * 0.2)
    assert update(paper, 0.5, 0, 4) == pytest.approx(expected, abs=1e-14)
    # quoted to four places
    assert update(paper, 0.5, 0, 4) == pytest.approx(0.6295, abs=5e-5)


@given(a=st.integers(0, 3), z=st.integers(0, 4))
def test_update_absorbing(paper, a, z):
    assert update(paper, 1.0, a, z) == 1.0


@given(pi=beliefs, z=st.integers(0, 4))
def test_strictest_action_uninformative(paper, pi, z):
    assert update(paper, pi, 3, z) == pytest.approx(predict(pi, paper.lam), abs=1e-15)


def test_update_all_matches_update(paper):
    pi = np.linspace(0, 1, 11)
    table = update_all(paper, pi, 1)
    for z in range(5):
        np.testing.assert_array_equal(table[:, z], update(paper, pi, 1, z))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), pi=beliefs)
def test_martingale_and_range(seed, pi):
    spec = random_mlr_spec(np.random.default_rng(seed))
    for a in range(spec.num_actions + 1):
        sigma = observation_likelihood(spec, pi, a)
        post = update_all(spec, pi, a)
        assert np.all((post >= 0) & (post <= 1))
        assert abs(sigma.sum() - 1.0) < 1e-12
        assert abs(sigma @ post - predict(pi, spec.lam)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_monotone_in_belief_and_symptom(seed):
    spec = random_mlr_spec(np.random.default_rng(seed))
    pi = np.linspace(0.0, 1.0, 401)
    for a in range(spec.num_actions + 1):
        post = update_all(spec, pi, a)
        assert np.all(np.diff(post, axis=0) >= -1e-15)
        assert np.all(np.diff(post, axis=1) >= -1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lo=beliefs, hi=beliefs)
def test_likelihood_stochastic_dominance(seed, lo, hi):
    lo, hi = min(lo, hi), max(lo, hi)
    spec = random_mlr_spec(np.random.default_rng(seed))
    for a in range(spec.num_actions + 1):
        tail_lo = np.cumsum(observation_likelihood(spec, lo, a)[::-1])
        tail_hi = np.cumsum(observation_likelihood(spec, hi, a)[::-1])
        assert np.all(tail_hi >= tail_lo - 1e-14)


def test_first_order_trivial_cases(paper):
    assert first_order_update(paper, 0.4, 3, 2) == pytest.approx(predict(0.4, paper.lam))
    assert first_order_update(paper.replace(lam=0.0), 0.0, 0, 4) == 0.0


@pytest.mark.parametrize("delta", [1e-3, 1e-4])
def test_first_order_close_for_small_delta(delta):
    spec = make_paper_family(delta)
    gap = abs(first_order_update(spec, 0.5, 0, 4) - update(spec, 0.5, 0, 4))
    # beta_0 deviates from alpha by 30*delta relative at z=5; measured C is about 115
    assert gap <= 200 * delta**2


def test_first_order_clamped():
    spec = make_paper_family(0.03)
    out = first_order_update(spec, np.linspace(0, 1, 101)[:, None], 0, np.arange(5)[None, :])
    assert np.all((out >= 0) & (out <= 1))
