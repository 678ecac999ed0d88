import numpy as np
import pytest

import support
from maxplus_regulator import (FeasibilityError, PartitionedHessian,
                               RegulatorProblem, SpaceKind, StructuralError,
                               compose, dre_step, initial_kernel, initial_state,
                               kernel_dual, kernel_step, propagate,
                               steering_value_oracle)


def theta_by_primal_steps(problem, space, base_kernel, base, horizon):
    """Independent route to the dual kernel: primal recursion, then one dual."""
    q = base_kernel
    for _ in range(horizon - base):
        q = kernel_step(q, problem)
    return kernel_dual(q, space)


# ---------------------------------------------------------------------------
# initializations
# ---------------------------------------------------------------------------

def test_initial_kernel_convex(lqr):
    q, base = initial_kernel(lqr, SpaceKind.convex())
    assert base == 1
    expect = np.block([[lqr.Phi, lqr.A.T],
                       [lqr.A, lqr.B @ lqr.B.T / 10.0]])
    assert np.allclose(q.mat, expect, atol=1e-14)


def test_initial_dual_convex_closed_form(lqr):
    q, _ = initial_kernel(lqr, SpaceKind.convex())
    theta = kernel_dual(q, SpaceKind.convex())
    phi_inv = np.linalg.inv(lqr.Phi)
    expect = np.block([
        [phi_inv, -phi_inv @ lqr.A.T],
        [-lqr.A @ phi_inv, lqr.A @ phi_inv @ lqr.A.T - lqr.B @ lqr.B.T / 10.0]])
    assert np.abs(theta.mat - expect).max() <= 1e-12


def test_initial_dual_semiconvex_matches_printout(semiconvex):
    space = SpaceKind.semiconvex(support.SC_M)
    q, base = initial_kernel(semiconvex, space)
    assert base == 1
    theta = kernel_dual(q, space)
    assert np.abs(theta.mat - support.SC_THETA_1).max() <= 5e-4


def test_initial_kernel_indicator_square(square_input):
    q, base = initial_kernel(square_input, SpaceKind.indicator())
    assert base == 1
    g2 = support.SQ_GAMMA**2
    a = support.SQ_A
    expect = np.block([[support.SQ_PHI - g2 * a.T @ a, g2 * a.T],
                       [g2 * a, -g2 * np.eye(2)]])
    assert np.abs(q.mat - expect).max() <= 1e-12


def test_initial_kernel_indicator_needs_invertible_b():
    problem = RegulatorProblem([[0.1, 0.0], [0.0, 0.1]],
                               [[1.0, 1.0], [1.0, 1.0]], np.eye(2), 2.0)
    with pytest.raises(FeasibilityError):
        initial_kernel(problem, SpaceKind.indicator())


@pytest.mark.parametrize("m", [1, 2])
def test_initial_kernel_indicator_tall_matches_oracle(rng, m):
    problem = support.random_problem(rng, n=3, m=m, gamma=6.0)
    q, base = initial_kernel(problem, SpaceKind.indicator())
    assert base == 3
    for _ in range(25):
        x = rng.uniform(-1.0, 1.0, size=3)
        z = rng.uniform(-1.0, 1.0, size=3)
        direct = steering_value_oracle(problem, 3, x, z)
        xz = np.concatenate([x, z])
        assert direct == pytest.approx(0.5 * xz @ q.mat @ xz, abs=1e-8)


def test_initial_state_carries_base_horizon(rng):
    problem = support.random_problem(rng, n=3, m=1, gamma=6.0)
    state = initial_state(problem, SpaceKind.indicator())
    assert state.base_horizon == 3 and state.horizon == 3


# ---------------------------------------------------------------------------
# the one-step primal recursion
# ---------------------------------------------------------------------------

def test_kernel_step_decouples_when_off_blocks_vanish(lqr, rng):
    p = rng.normal(size=(2, 2)) * 0.3
    p = 0.5 * (p + p.T)
    q22 = rng.normal(size=(2, 2))
    q = PartitionedHessian.from_blocks(p, np.zeros((2, 2)), 0.5 * (q22 + q22.T))
    out = kernel_step(q, lqr)
    assert np.allclose(out.q11, dre_step(p, lqr), atol=1e-14)
    assert np.array_equal(out.q12, np.zeros((2, 2)))
    assert np.array_equal(out.q22, q.q22)


def test_kernel_step_matches_two_step_steering_oracle(square_input, rng):
    q1, _ = initial_kernel(square_input, SpaceKind.indicator())
    q2 = kernel_step(q1, square_input)
    for _ in range(10):
        x = rng.uniform(-1.0, 1.0, size=2)
        z = rng.uniform(-1.0, 1.0, size=2)
        xz = np.concatenate([x, z])
        assert steering_value_oracle(square_input, 2, x, z) == \
            pytest.approx(0.5 * xz @ q2.mat @ xz, abs=1e-9)


def test_kernel_step_reports_gain_failure():
    problem = RegulatorProblem([[0.9]], [[1.0]], [[1.0]], 0.5)
    q = PartitionedHessian.from_blocks([[1.0]], [[0.0]], [[0.0]])
    with pytest.raises(FeasibilityError) as err:
        kernel_step(q, problem)
    assert err.value.min_eigenvalue is not None


# ---------------------------------------------------------------------------
# duality involution
# ---------------------------------------------------------------------------

def test_dual_is_involution_on_random_kernels(rng):
    for _ in range(60):
        problem = support.random_problem(rng)
        space = support.random_space(rng, problem)
        n = problem.n
        raw = rng.normal(size=(2 * n, 2 * n))
        q = PartitionedHessian(raw + (2.0 + n) * np.eye(2 * n))
        if space.index == 1 and np.linalg.cond(q.q11) > 1e8:
            continue
        back = kernel_dual(kernel_dual(q, space), space)
        assert np.abs(back.mat - q.mat).max() <= 1e-10


def test_dual_indicator_is_negation(rng):
    q = PartitionedHessian(rng.normal(size=(4, 4)))
    assert np.array_equal(kernel_dual(q, SpaceKind.indicator()).mat, -q.mat)


def test_dual_rejects_singular_11_block():
    q = PartitionedHessian.from_blocks(np.zeros((2, 2)), np.eye(2), np.eye(2))
    with pytest.raises(FeasibilityError) as err:
        kernel_dual(q, SpaceKind.convex())
    assert "duality" in str(err.value)


def test_dual_rejects_thin_semiconvex_margin():
    space = SpaceKind.semiconvex(np.eye(2))
    q = PartitionedHessian.from_blocks(-2.0 * np.eye(2), np.zeros((2, 2)), np.eye(2))
    with pytest.raises(FeasibilityError):
        kernel_dual(q, space)


# ---------------------------------------------------------------------------
# dual-space composition
# ---------------------------------------------------------------------------

def test_compose_block_diagonal_inputs(rng):
    a = np.diag([1.0, 2.0])
    b = np.diag([3.0, 0.5])
    t1 = PartitionedHessian.from_blocks(rng.normal(size=(2, 2)), np.zeros((2, 2)), a)
    t2 = PartitionedHessian.from_blocks(b, np.zeros((2, 2)), rng.normal(size=(2, 2)))
    out = compose(t1, t2)
    assert np.allclose(out.q11, t1.q11)
    assert np.allclose(out.q22, t2.q22)
    assert np.array_equal(out.q12, np.zeros((2, 2)))


def test_compose_agrees_with_primal_horizon_two(lqr):
    space = SpaceKind.convex()
    q1, _ = initial_kernel(lqr, space)
    theta1 = kernel_dual(q1, space)
    via_dual = compose(theta1, theta1)
    via_primal = kernel_dual(kernel_step(q1, lqr), space)
    assert np.abs(via_dual.mat - via_primal.mat).max() <= 1e-10


def test_compose_requires_positive_coupling():
    t = PartitionedHessian.from_blocks(np.eye(2), np.eye(2), -np.eye(2))
    with pytest.raises(FeasibilityError) as err:
        compose(t, t)
    assert err.value.min_eigenvalue is not None and err.value.min_eigenvalue <= 0


def test_doubling_reaches_square_input_limit(square_input):
    space = SpaceKind.indicator()
    q1, _ = initial_kernel(square_input, space)
    theta = kernel_dual(q1, space)
    for _ in range(30):
        theta = compose(theta, theta)
    assert np.abs(theta.q11 - support.SQ_THETA_INF_11).max() <= 1e-3
    assert np.abs(theta.q22 - support.SQ_THETA_INF_22).max() <= 1e-3
    assert np.abs(theta.q12).max() <= 1e-8


# ---------------------------------------------------------------------------
# propagation by doubling
# ---------------------------------------------------------------------------

def test_propagate_multiplier_one_is_free(lqr):
    state = initial_state(lqr, SpaceKind.convex())
    result = propagate(state, 1, lqr)
    assert result.compose_ops == 0
    assert np.array_equal(result.state.theta.mat, state.theta.mat)


def test_propagate_op_counts(lqr):
    state = initial_state(lqr, SpaceKind.convex())
    assert propagate(state, 50, lqr).compose_ops == 7      # 50 = 110010b: 5 + 2
    assert propagate(state, 64, lqr).compose_ops == 6      # 64 = 2^6
    assert propagate(state, 3, lqr).compose_ops == 2


def test_propagate_matches_primal_path(lqr):
    space = SpaceKind.convex()
    q1, base = initial_kernel(lqr, space)
    state = initial_state(lqr, space)
    expected = theta_by_primal_steps(lqr, space, q1, base, 64)
    result = propagate(state, 64, lqr)
    got = kernel_dual(result.state.theta, space)
    want = kernel_dual(expected, space)
    assert np.abs(got.q11 - want.q11).max() <= 1e-9


def test_propagate_remainder_uses_primal_steps(rng):
    problem = support.random_problem(rng, n=2, m=1, gamma=6.0)
    space = SpaceKind.indicator()
    state = initial_state(problem, space)
    assert state.base_horizon == 2
    result = propagate(state, 5, problem)        # 2*2 + 1
    assert result.state.horizon == 5
    q5 = kernel_dual(result.state.theta, space)
    for _ in range(10):
        x = rng.uniform(-1.0, 1.0, size=2)
        z = rng.uniform(-1.0, 1.0, size=2)
        xz = np.concatenate([x, z])
        assert steering_value_oracle(problem, 5, x, z) == \
            pytest.approx(0.5 * xz @ q5.mat @ xz, abs=1e-7)


def test_propagate_rejects_sub_base_targets(rng):
    problem = support.random_problem(rng, n=3, m=1, gamma=6.0)
    state = initial_state(problem, SpaceKind.indicator())
    with pytest.raises(StructuralError):
        propagate(state, 2, problem)


def test_propagate_requires_base_state(lqr):
    state = initial_state(lqr, SpaceKind.convex())
    advanced = propagate(state, 4, lqr).state
    with pytest.raises(StructuralError):
        propagate(advanced, 8, lqr)
