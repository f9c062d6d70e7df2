import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chd.errors import NumericError, ParameterError
from chd.optim import AdagradState, adagrad_step, format_trace, minimize, sgd_step


def quadratic(A):
    def oracle(theta):
        return 0.5 * float(theta @ (A * theta)), A * theta
    return oracle


def test_zero_gradient_is_fixed_point():
    state = AdagradState(s=np.array([1.0, 2.0]))
    theta, new = adagrad_step(state, np.array([3.0, 4.0]), np.zeros(2))
    assert theta.tolist() == [3.0, 4.0]
    assert new.s.tolist() == [1.0, 2.0]
    assert new.t == 1


def test_scalar_hand_example():
    theta, state = adagrad_step(AdagradState(), np.array([1.0]), np.array([2.0]))
    assert state.s.tolist() == [4.0]
    assert theta[0] == pytest.approx(1 - 0.1 * 2 / (2 + 1e-8), abs=1e-15)
    assert abs(theta[0] - 0.9) <= 1e-8


def test_constant_gradient_step_is_alpha_over_root_t():
    c = 3.0
    state, theta = AdagradState(alpha=0.1), np.array([0.0])
    steps = {}
    for t in range(1, 10):
        new_theta, state = adagrad_step(state, theta, np.array([c]))
        steps[t] = abs(new_theta[0] - theta[0])
        theta = new_theta
    for t in (1, 4, 9):
        assert math.isclose(steps[t], 0.1 / math.sqrt(t), rel_tol=1e-6)


def test_non_finite_gradient_reports_index():
    with pytest.raises(NumericError) as err:
        adagrad_step(AdagradState(), np.zeros(3), np.array([0.0, 0.0, np.inf]))
    assert err.value.index == 2


def test_arity_mismatch():
    with pytest.raises(ValueError):
        adagrad_step(AdagradState(), np.zeros(2), np.zeros(3))


def test_state_is_not_mutated():
    state = AdagradState(s=np.array([1.0]))
    adagrad_step(state, np.array([1.0]), np.array([5.0]))
    assert state.s.tolist() == [1.0] and state.t == 0


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 5, elements=st.floats(-10, 10)), st.integers(1, 20))
def test_accumulator_monotone(g0, n):
    state, theta = AdagradState(), np.zeros(5)
    rng = np.random.default_rng(n)
    prev = np.zeros(5)
    for _ in range(n):
        theta, state = adagrad_step(state, theta, g0 * rng.random(5))
        assert np.all(state.s >= prev)
        prev = state.s


def test_step_size_decays_with_fixed_gradient():
    state, theta, last = AdagradState(), np.zeros(3), np.full(3, np.inf)
    for _ in range(30):
        new, state = adagrad_step(state, theta, np.array([1.0, -2.0, 0.5]))
        size = np.abs(new - theta)
        assert np.all(size <= last + 1e-15)
        last, theta = size, new


def test_minimize_quadratic_example():
    theta, trace, _ = minimize(lambda t: (float(t @ t), 2 * t), np.array([1.0, 1.0]), 100)
    assert np.all(np.abs(theta) < 0.5)
    assert all(b < a for a, b in zip(trace, trace[1:]))
    assert len(trace) == 100


def test_minimize_one_step_equals_adagrad_step():
    oracle = quadratic(np.array([2.0, 3.0]))
    theta0 = np.array([1.0, -1.0])
    theta, _, state = minimize(oracle, theta0, 1)
    ref, ref_state = adagrad_step(AdagradState(), theta0, oracle(theta0)[1])
    assert np.array_equal(theta, ref)
    assert np.array_equal(state.s, ref_state.s)


def test_minimize_at_minimum():
    theta, trace, _ = minimize(quadratic(np.ones(2)), np.zeros(2), 10)
    assert theta.tolist() == [0.0, 0.0]
    assert set(trace) == {0.0}


def test_minimize_requires_a_step():
    with pytest.raises(ParameterError):
        minimize(quadratic(np.ones(1)), np.ones(1), 0)


def test_minimize_propagates_oracle_errors():
    with pytest.raises(NumericError):
        minimize(lambda t: (0.0, np.array([np.nan])), np.ones(1), 3)


def test_descent_on_random_diagonal_quadratics():
    rng = np.random.default_rng(0)
    for _ in range(50):
        A = rng.uniform(0.1, 10, 4)
        theta0 = rng.uniform(0.5, 2, 4) * rng.choice([-1, 1], 4)
        _, trace, _ = minimize(quadratic(A), theta0, 100)
        assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_sgd_step():
    assert sgd_step(np.array([1.0]), np.array([2.0]), 0.1)[0] == pytest.approx(0.8)
    assert sgd_step(np.array([1.5]), np.array([0.0]), 0.1)[0] == 1.5


def test_sgd_coincides_when_denominator_is_one():
    theta = np.array([1.0])
    a, _ = adagrad_step(AdagradState(alpha=0.1, delta=0.0), theta, np.array([1.0]))
    assert np.array_equal(a, sgd_step(theta, np.array([1.0]), 0.1))


def test_trace_format():
    assert format_trace([2.0, 1.5]) == "1 2.0\n2 1.5\n"
