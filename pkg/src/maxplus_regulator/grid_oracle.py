"""Independent grid-based dynamic programming oracle.

Deliberately shares no code path with the fundamental-solution modules: the
input maximization is an exhaustive scan of the w grid, state projection is
clamp-then-floor, and the constrained steering oracle evaluates payoffs by
simulating trajectories.  Used as ground truth in tests.
"""
from __future__ import annotations

import numpy as np

from .duality import GridSpec
from .model import RegulatorProblem, StructuralError

_FLOOR_EPS = 1e-9


def projection_indices(points: np.ndarray, xgrid: GridSpec) -> np.ndarray:
    """Flat row-major indices of clamp-then-floor projections of points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    clamped = np.clip(pts, xgrid.lower, xgrid.upper)
    steps = np.floor((clamped - xgrid.lower) / xgrid.spacing + _FLOOR_EPS).astype(np.intp)
    steps = np.clip(steps, 0, np.array(xgrid.shape) - 1)
    return np.ravel_multi_index(tuple(steps.T), xgrid.shape)


def project_to_grid(x, xgrid: GridSpec) -> np.ndarray:
    """Clamp each coordinate to the grid box, then floor onto the lattice."""
    idx = projection_indices(np.atleast_2d(np.asarray(x, dtype=float)), xgrid)[0]
    steps = np.unravel_index(idx, xgrid.shape)
    return xgrid.lower + xgrid.spacing * np.array(steps, dtype=float)


def _tables(problem: RegulatorProblem, wgrid: GridSpec, xgrid: GridSpec):
    if xgrid.dim != problem.n or wgrid.dim != problem.m:
        raise StructuralError("grid dimensions do not match the problem")
    xpts = xgrid.points()
    wpts = wgrid.points()
    quad = 0.5 * np.einsum("ij,jk,ik->i", xpts, problem.Phi, xpts)
    cost = -0.5 * problem.gamma**2 * np.einsum("ij,ij->i", wpts, wpts)
    drift = xpts @ problem.A.T
    index = np.empty((wpts.shape[0], xpts.shape[0]), dtype=np.intp)
    for j, w in enumerate(wpts):
        index[j] = projection_indices(drift + (problem.B @ w)[None, :], xgrid)
    return quad, cost, index


def _apply(values: np.ndarray, quad: np.ndarray, cost: np.ndarray,
           index: np.ndarray) -> np.ndarray:
    best = values[index[0]] + cost[0]
    for j in range(1, index.shape[0]):
        np.maximum(best, values[index[j]] + cost[j], out=best)
    return quad + best


def dp_step(values: np.ndarray, problem: RegulatorProblem, wgrid: GridSpec,
            xgrid: GridSpec) -> np.ndarray:
    """W'(x) = max_w {(1/2)x^T Phi x - (gamma^2/2)|w|^2 + W[project(Ax + Bw)]}."""
    values = np.asarray(values, dtype=float).ravel()
    if values.shape[0] != xgrid.size:
        raise StructuralError("value array does not match the state grid")
    return _apply(values, *_tables(problem, wgrid, xgrid))


def dp_solve(psi_values: np.ndarray, horizon: int, problem: RegulatorProblem,
             wgrid: GridSpec, xgrid: GridSpec,
             step_seconds: list[float] | None = None) -> np.ndarray:
    """Iterate dp_step horizon times from the payoff samples.

    The projection tables depend only on the problem and grids, so they are
    built once; each step is arithmetically identical to a dp_step call.
    """
    import time

    values = np.asarray(psi_values, dtype=float).ravel()
    if values.shape[0] != xgrid.size:
        raise StructuralError("payoff samples do not match the state grid")
    if horizon == 0:
        return values.copy()
    quad, cost, index = _tables(problem, wgrid, xgrid)
    for _ in range(horizon):
        tic = time.perf_counter()
        values = _apply(values, quad, cost, index)
        if step_seconds is not None:
            step_seconds.append(time.perf_counter() - tic)
    return values


def steering_value_oracle(problem: RegulatorProblem, horizon: int, x, z) -> float:
    """Exact optimal payoff steering x to z in `horizon` steps, else -inf.

    Brute-force route: stack the input sequence, solve the endpoint
    constraint by least squares, parametrize its null space from an SVD,
    maximize the reduced concave quadratic, then score the winning input
    sequence by simulating the trajectory and summing stage payoffs.
    Returns -inf when no input sequence reaches z or the supremum is not
    attained.
    """
    if horizon < 1:
        raise StructuralError("the steering oracle needs at least one step")
    n, m = problem.n, problem.m
    a, b, phi, gamma = problem.A, problem.B, problem.Phi, problem.gamma
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()

    # reach[j] maps w_j into x_K; stage[j] maps (x, w_0..w_{j-1}) into x_j
    powers = [np.eye(n)]
    for _ in range(horizon):
        powers.append(a @ powers[-1])
    reach = np.hstack([powers[horizon - 1 - j] @ b for j in range(horizon)])
    rhs = z - powers[horizon] @ x

    w0, *_ = np.linalg.lstsq(reach, rhs, rcond=None)
    if np.linalg.norm(reach @ w0 - rhs) > 1e-9 * max(1.0, float(np.linalg.norm(rhs))):
        return float("-inf")

    u, s, vt = np.linalg.svd(reach)
    rank = int((s > max(reach.shape) * np.finfo(float).eps * s[0]).sum()) if s.size else 0
    basis = vt[rank:].T
    if basis.shape[1] > 0:
        # build the reduced quadratic g(h) = 1/2 h^T Om h + b^T h by stacking
        bbar = np.zeros((horizon * n, horizon * m))
        for row in range(horizon):
            for col in range(row):
                bbar[row * n:(row + 1) * n, col * m:(col + 1) * m] = powers[row - 1 - col] @ b
        abar = np.vstack(powers[:horizon])
        phibar = np.kron(np.eye(horizon), phi)
        gmat = bbar.T @ phibar @ bbar - gamma**2 * np.eye(horizon * m)
        omega = basis.T @ gmat @ basis
        if np.linalg.eigvalsh(0.5 * (omega + omega.T)).max() >= 0:
            return float("-inf")
        grad = basis.T @ (gmat @ w0 + bbar.T @ phibar @ abar @ x)
        w0 = w0 + basis @ np.linalg.solve(omega, -grad)

    # score by simulation
    total = 0.0
    state = x.copy()
    for j in range(horizon):
        w_j = w0[j * m:(j + 1) * m]
        total += 0.5 * state @ phi @ state - 0.5 * gamma**2 * float(w_j @ w_j)
        state = a @ state + b @ w_j
    return float(total)
