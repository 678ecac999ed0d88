"""Difference Riccati recursion, its fixed point, and duality feasibility checks.

The recursion is

    P_{k+1} = Phi + A^T P_k A + A^T P_k B (gamma^2 I - B^T P_k B)^{-1} B^T P_k A,

well defined while gamma^2 I - B^T P_k B stays positive definite.  Its fixed
point is the algebraic Riccati solution used as the quadratic-payoff benchmark.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (FeasibilityError, NonConvergenceError, RegulatorProblem,
                    SpaceKind, as_matrix, matrix_rank, min_eigenvalue, solve_spd, sym)


def dre_step(p_mat: np.ndarray, problem: RegulatorProblem) -> np.ndarray:
    """One Riccati step; raises FeasibilityError when the gain condition fails."""
    p_mat = as_matrix(p_mat, "P")
    a, b, gamma = problem.A, problem.B, problem.gamma
    s = gamma**2 * np.eye(problem.m) - b.T @ p_mat @ b
    gain = solve_spd(s, b.T @ p_mat @ a,
                     context="gamma^2 I - B^T P B (input penalty too small or horizon blow-up)")
    return sym(problem.Phi + a.T @ p_mat @ a + a.T @ p_mat @ b @ gain)


def dre_solve(problem: RegulatorProblem, p0: np.ndarray, horizon: int) -> list[np.ndarray]:
    """Trajectory [P_0, ..., P_K]; the failing step index is attached on error."""
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    out = [sym(as_matrix(p0, "P0"))]
    for k in range(horizon):
        try:
            out.append(dre_step(out[-1], problem))
        except FeasibilityError as err:
            raise FeasibilityError(f"{err} at recursion step {k}",
                                   min_eigenvalue=err.min_eigenvalue, step=k) from None
    return out


def are_fixed_point(problem: RegulatorProblem, tol: float = 1e-12,
                    max_iter: int = 10_000) -> np.ndarray:
    """Fixed point of dre_step from P_0 = 0, to sup-norm increment <= tol."""
    p_mat = np.zeros((problem.n, problem.n))
    for k in range(max_iter):
        try:
            p_next = dre_step(p_mat, problem)
        except FeasibilityError as err:
            raise FeasibilityError(f"{err} at recursion step {k}",
                                   min_eigenvalue=err.min_eigenvalue, step=k) from None
        if np.abs(p_next - p_mat).max() <= tol:
            residual = float(np.abs(p_next - dre_step(p_next, problem)).max())
            if residual > 10 * tol:
                raise NonConvergenceError(
                    f"fixed point residual {residual:.3e} exceeds 10*tol", residual=residual)
            return p_next
        p_mat = p_next
    raise NonConvergenceError(
        f"Riccati iteration did not converge in {max_iter} steps "
        f"(last increment {np.abs(p_next - p_mat).max():.3e})",
        residual=float(np.abs(p_next - p_mat).max()))


@dataclass(frozen=True)
class DualityFeasibilityReport:
    """Whether the dual pairing stays well defined along the recursion.

    For the convex space the requirement is invertibility of every P_k from
    P_0 = 0; for the semiconvex space, positivity of P_k + M from P_0 = -M.
    The indicator space has no requirement.
    """

    space_index: int
    horizon: int
    applicable: bool
    ok: bool
    detail: str
    margins: list[float] = field(default_factory=list)


def check_duality_feasibility(problem: RegulatorProblem, space: SpaceKind,
                              horizon: int) -> DualityFeasibilityReport:
    """Run the recursion and report (never raise) the per-step margins."""
    if space.index == 3:
        return DualityFeasibilityReport(3, horizon, applicable=False, ok=True,
                                        detail="not applicable")
    p0 = np.zeros((problem.n, problem.n)) if space.index == 1 else -space.M
    try:
        trajectory = dre_solve(problem, p0, horizon)
    except FeasibilityError as err:
        return DualityFeasibilityReport(
            space.index, horizon, applicable=True, ok=False,
            detail=f"recursion infeasible: {err}")
    margins: list[float] = []
    ok = True
    for p_k in trajectory[1:]:
        if space.index == 1:
            s = np.linalg.svd(p_k, compute_uv=False)
            margins.append(float(s.min()))
            if matrix_rank(p_k) < problem.n:
                ok = False
        else:
            margins.append(min_eigenvalue(p_k + space.M))
            if margins[-1] <= 0:
                ok = False
    detail = ("every P_k is invertible" if space.index == 1 else
              "P_k + M stays positive definite") if ok else \
             ("some P_k is singular" if space.index == 1 else
              "P_k + M loses positivity")
    return DualityFeasibilityReport(space.index, horizon, applicable=True,
                                    ok=ok, detail=detail, margins=margins)
