"""Shared fixtures' data and random-problem generation for the test suite."""
from __future__ import annotations

import numpy as np

from maxplus_regulator import (RegulatorProblem, SpaceKind, check_duality_feasibility,
                               validate_problem)

# Benchmark problem: two states, one input, gamma = sqrt(10),
# terminal weight LAMBDA, horizon-64 Riccati solution P64 (4 printed decimals).
LQR_A = np.array([[-0.1, 0.0], [-0.2, -0.1]])
LQR_B = np.array([[0.1], [0.03]])
LQR_PHI = np.array([[1.0, 0.2], [0.2, 2.0]])
LQR_GAMMA = np.sqrt(10.0)
LQR_LAMBDA = np.array([[1.0, 0.2], [0.2, 0.5]])
LQR_P64 = np.array([[1.1016, 0.2429], [0.2429, 2.0202]])

# Square-input problem (B = I) used for the doubling-convergence study.
SQ_A = np.array([[-0.2, 0.1], [-0.15, 0.0]])
SQ_B = np.eye(2)
SQ_PHI = np.array([[0.6, 0.0], [0.0, 0.2]])
SQ_GAMMA = np.sqrt(8.0)
SQ_SIGMA = 4.4321
SQ_LAMBDA_MIN = 7.7297
SQ_THETA_INF_11 = np.array([[-0.6313, 0.0135], [0.0135, -0.2069]])
SQ_THETA_INF_22 = np.array([[7.5921, -0.2502], [-0.2502, 7.8072]])

# Semiconvex study: non-quadratic payoff 3|x2+1||sin(x1-1)|, M = 10 I.
SC_A = np.array([[-0.12, 0.0], [0.1, 0.15]])
SC_B = np.array([[-0.2], [0.1]])
SC_PHI = np.array([[3.0, -1.4], [-1.4, 2.4]])
SC_GAMMA = 2.0
SC_M = np.diag([10.0, 10.0])
SC_THETA_1 = np.array([
    [-2.0555, 1.0036, 0.8266, -0.8816],
    [1.0036, -1.6630, 0.0497, -1.3155],
    [0.8266, 0.0497, 9.1975, 0.3607],
    [-0.8816, -1.3155, 0.3607, 10.0522]])
SC_SIGMA = 2.8054
SC_LAMBDA_MIN = 6.2655
SC_THETA_INF_11 = np.array([[-2.2859, 0.8275], [0.8275, -1.8835]])
SC_THETA_INF_22 = np.array([[9.0986, 0.4467], [0.4467, 9.7773]])
SC_Q_INF_11 = np.array([[3.1067, -1.3362], [-1.3362, 2.4568]])
SC_Q22_EIGS = np.array([-9.990, -8.8770])
SC_KAPPA = 2.5785


def lqr_problem() -> RegulatorProblem:
    return RegulatorProblem(LQR_A, LQR_B, LQR_PHI, LQR_GAMMA)


def square_input_problem() -> RegulatorProblem:
    return RegulatorProblem(SQ_A, SQ_B, SQ_PHI, SQ_GAMMA)


def semiconvex_problem() -> RegulatorProblem:
    return RegulatorProblem(SC_A, SC_B, SC_PHI, SC_GAMMA)


def random_problem(rng: np.random.Generator, n: int | None = None,
                   m: int | None = None, gamma: float | None = None,
                   spectral_radius: float = 0.5) -> RegulatorProblem:
    """Well-conditioned random controllable problem (rejection sampled)."""
    for _ in range(200):
        dim = n if n is not None else int(rng.integers(1, 4))
        inputs = m if m is not None else int(rng.integers(1, dim + 1))
        a = rng.normal(size=(dim, dim))
        radius = max(np.abs(np.linalg.eigvals(a)).max(), 1e-6)
        a *= spectral_radius * rng.uniform(0.3, 1.0) / radius
        b = rng.normal(size=(dim, inputs))
        b /= max(np.linalg.norm(b, 2), 1e-9)
        r = rng.normal(size=(dim, dim))
        phi = r.T @ r / dim + 0.3 * np.eye(dim)
        problem = RegulatorProblem(a, b, phi, gamma if gamma is not None else rng.uniform(4.0, 6.0))
        if not validate_problem(problem):
            return problem
    raise RuntimeError("could not draw a valid random problem")


def random_space(rng: np.random.Generator, problem: RegulatorProblem,
                 index: int | None = None, horizon: int = 40) -> SpaceKind:
    """Random space whose duality stays feasible along the recursion."""
    idx = index if index is not None else int(rng.integers(1, 4))
    if idx == 1:
        return SpaceKind.convex()
    if idx == 3:
        return SpaceKind.indicator()
    for _ in range(50):
        scale = rng.uniform(2.0, 6.0)
        mmat = scale * np.eye(problem.n)
        if rng.uniform() < 0.5:
            q = np.linalg.qr(rng.normal(size=(problem.n, problem.n)))[0]
            mmat = q @ np.diag(rng.uniform(2.0, 6.0, size=problem.n)) @ q.T
        space = SpaceKind.semiconvex(0.5 * (mmat + mmat.T))
        if check_duality_feasibility(problem, space, horizon).ok:
            return space
    raise RuntimeError("could not draw a feasible semiconvex space")
