import numpy as np
import pytest

import support
from maxplus_regulator import (GrowthBound, PartitionedHessian, RegulatorProblem,
                               SpaceKind, StructuralError, controllability_matrix,
                               validate_problem)


def test_benchmark_problem_is_valid(lqr):
    assert validate_problem(lqr) == []


def test_uncontrollable_pair_is_reported():
    problem = RegulatorProblem(np.eye(2), [[1.0], [0.0]], np.eye(2), 1.0)
    report = validate_problem(problem)
    assert any("controllable" in msg for msg in report)


def test_semidefinite_phi_is_reported():
    problem = RegulatorProblem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]],
                               [[1.0, 0.0], [0.0, 0.0]], 1.0)
    assert any("positive definite" in msg for msg in validate_problem(problem))


def test_validation_is_idempotent(lqr):
    assert validate_problem(lqr) == validate_problem(lqr) == []


def test_dimension_mismatch_raises():
    with pytest.raises(StructuralError):
        RegulatorProblem(np.eye(2), np.ones((3, 1)), np.eye(2), 1.0)
    with pytest.raises(StructuralError):
        RegulatorProblem(np.eye(2), np.ones((2, 1)), np.eye(3), 1.0)
    with pytest.raises(StructuralError):
        RegulatorProblem(np.eye(2), np.ones((2, 1)), np.eye(2), -1.0)


def test_controllability_matrix_of_benchmark(lqr):
    cbar = controllability_matrix(lqr)
    assert cbar.shape == (2, 2)
    ab = lqr.A @ lqr.B
    assert np.allclose(cbar, np.hstack([ab, lqr.B]))
    # determinant (-0.01)(0.03) - (0.1)(-0.023) = 0.002
    assert np.linalg.det(cbar) == pytest.approx(0.002, abs=1e-12)


def test_controllability_matrix_trivial_cases():
    problem = RegulatorProblem(np.zeros((2, 2)), np.eye(2), np.eye(2), 1.0)
    assert np.allclose(controllability_matrix(problem), np.hstack([np.zeros((2, 2)), np.eye(2)]))
    assert np.linalg.matrix_rank(controllability_matrix(problem)) == 2
    scalar = RegulatorProblem([[0.5]], [[2.0]], [[1.0]], 1.0)
    assert np.allclose(controllability_matrix(scalar), [[2.0]])


def test_partitioned_hessian_symmetry_and_blocks(rng):
    raw = rng.normal(size=(6, 6))
    q = PartitionedHessian(raw)
    assert np.abs(q.mat - q.mat.T).max() <= 1e-12
    assert q.n == 3
    rebuilt = np.block([[q.q11, q.q12], [q.q21, q.q22]])
    assert np.array_equal(rebuilt, q.mat)
    assert np.array_equal(q.q21, q.q12.T)


def test_partitioned_hessian_from_blocks(rng):
    q11 = rng.normal(size=(2, 2))
    q12 = rng.normal(size=(2, 2))
    q22 = rng.normal(size=(2, 2))
    q = PartitionedHessian.from_blocks(q11, q12, q22)
    assert np.allclose(q.q11, 0.5 * (q11 + q11.T))
    assert np.allclose(q.q12, q12)
    labels = q.blocks()
    assert set(labels) == {"11", "12", "21", "22"}


def test_partitioned_hessian_is_immutable(rng):
    q = PartitionedHessian(rng.normal(size=(4, 4)))
    with pytest.raises(ValueError):
        q.mat[0, 0] = 1.0


def test_partitioned_hessian_rejects_odd_sizes():
    with pytest.raises(StructuralError):
        PartitionedHessian(np.eye(3))


def test_space_kind_variants():
    assert SpaceKind.convex().index == 1
    assert SpaceKind.indicator().M is None
    semi = SpaceKind.semiconvex(2.0 * np.eye(2))
    assert semi.index == 2 and semi.M.shape == (2, 2)
    with pytest.raises(StructuralError):
        SpaceKind(4)
    with pytest.raises(StructuralError):
        SpaceKind(2)  # M missing
    with pytest.raises(StructuralError):
        SpaceKind.semiconvex(-np.eye(2))
    with pytest.raises(StructuralError):
        SpaceKind(1, M=np.eye(2))


def test_growth_bound_requires_positive_r():
    GrowthBound(1.0, -3.0)
    with pytest.raises(StructuralError):
        GrowthBound(0.0, 0.0)


def test_problem_matrices_are_frozen(lqr):
    with pytest.raises(ValueError):
        lqr.A[0, 0] = 5.0
