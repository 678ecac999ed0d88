"""Infinite-horizon limits of the dual kernels and the payoff offset.

Sufficient conditions for the doubled sequence Theta <- compose(Theta, Theta)
to converge to a block-diagonal limit are expressed through two scalars of
the starting kernel,

    sigma = max eig(Theta12 Theta21),   lambda = min eig(Theta11 + Theta22),

and a margin rho in (sqrt(sigma), lambda) with
f(rho) = lambda - rho - 2 sigma / (rho (1 - sigma/rho^2)) > 0.  Once the
limit exists, a non-quadratic terminal payoff only shifts the quadratic
infinite-horizon value by the scalar offset

    kappa = max_z { a(z) + (1/2) z^T Q22_inf z }.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .duality import DualFunction
from .fundamental import compose, kernel_dual
from .model import (FeasibilityError, HypothesisError, NonConvergenceError,
                    PartitionedHessian, SpaceKind, StructuralError, sym)

_RHO_SCAN = 10_000


def comparison_sequence(sigma: float, lam: float, count: int) -> list[tuple[float, float]]:
    """Scalar comparison recursion dominating the doubled kernels.

        sigma_{k+1} = sigma_k^2 / lambda_k^2,
        lambda_{k+1} = lambda_k - 2 sigma_k / lambda_k,

    starting from (sigma, lambda); returns count pairs.  Raises when some
    lambda_k becomes non-positive (the sufficient conditions fail there).
    """
    if sigma < 0 or lam <= 0:
        raise StructuralError("need sigma >= 0 and lambda > 0")
    pairs = [(float(sigma), float(lam))]
    for k in range(1, count):
        s_k, l_k = pairs[-1]
        s_next = s_k**2 / l_k**2
        l_next = l_k - 2 * s_k / l_k
        if l_next <= 0:
            raise NonConvergenceError(
                f"comparison sequence failed: lambda_{k + 1} = {l_next:.6g} <= 0",
                residual=l_next)
        pairs.append((s_next, l_next))
    return pairs[:count]


def margin_function(rho: float, sigma: float, lam: float) -> float:
    """f(rho) = lambda - rho - 2 sigma / (rho (1 - sigma/rho^2))."""
    return lam - rho - 2 * sigma / (rho * (1.0 - sigma / rho**2))


@dataclass(frozen=True)
class Margins:
    sigma: float
    lam: float
    rho: float | None

    @property
    def feasible(self) -> bool:
        return self.rho is not None


def convergence_margins(theta: PartitionedHessian) -> Margins:
    """sigma, lambda of a dual kernel and the best certified rho, if any.

    rho maximizes f over a dense scan of (sqrt(sigma), lambda) in
    (lambda - sqrt(sigma)) / 10000 steps and is reported only when f > 0.
    """
    sigma = float(np.linalg.eigvalsh(sym(theta.q12 @ theta.q21)).max())
    sigma = max(sigma, 0.0)
    lam = float(np.linalg.eigvalsh(sym(theta.q11 + theta.q22)).min())
    lo = np.sqrt(sigma)
    if lam <= lo:
        return Margins(sigma, lam, None)
    step = (lam - lo) / _RHO_SCAN
    candidates = lo + step * np.arange(1, _RHO_SCAN)
    values = np.array([margin_function(r, sigma, lam) for r in candidates])
    best = int(np.argmax(values))
    if values[best] <= 0:
        return Margins(sigma, lam, None)
    return Margins(sigma, lam, float(candidates[best]))


@dataclass(frozen=True)
class DoublingRecord:
    horizon: int
    sigma: float
    lam: float
    off_norm: float


@dataclass
class ConvergenceReport:
    sigma: float
    lam: float
    rho: float | None
    feasible: bool
    trace: list[DoublingRecord] = field(default_factory=list)
    theta_inf: PartitionedHessian | None = None
    kappa: float | None = None


def _record(theta: PartitionedHessian, horizon: int) -> DoublingRecord:
    return DoublingRecord(
        horizon=horizon,
        sigma=float(np.linalg.eigvalsh(sym(theta.q12 @ theta.q21)).max()),
        lam=float(np.linalg.eigvalsh(sym(theta.q11 + theta.q22)).min()),
        off_norm=float(np.linalg.norm(theta.q12, 2)))


def doubling_limit(theta_base: PartitionedHessian, tol: float = 1e-10,
                   max_doublings: int = 60,
                   base_horizon: int = 1) -> ConvergenceReport:
    """Iterate Theta <- compose(Theta, Theta) to its block-diagonal limit.

    Runs even when the sufficient conditions fail (feasible=False then);
    stops once the off-blocks fall below tol and the diagonal blocks move
    by at most tol.  The reported limit has its off-blocks zeroed.
    """
    margins = convergence_margins(theta_base)
    report = ConvergenceReport(margins.sigma, margins.lam, margins.rho, margins.feasible)
    theta = theta_base
    horizon = base_horizon
    report.trace.append(_record(theta, horizon))
    for _ in range(max_doublings):
        try:
            nxt = compose(theta, theta)
        except FeasibilityError as err:
            raise FeasibilityError(
                f"{err} while doubling from horizon {horizon}",
                min_eigenvalue=err.min_eigenvalue, step=horizon) from None
        horizon *= 2
        report.trace.append(_record(nxt, horizon))
        off = float(np.linalg.norm(nxt.q12, 2))
        moved = max(float(np.abs(nxt.q11 - theta.q11).max()),
                    float(np.abs(nxt.q22 - theta.q22).max()))
        theta = nxt
        if off <= tol and moved <= tol:
            zero = np.zeros((theta.n, theta.n))
            report.theta_inf = PartitionedHessian.from_blocks(theta.q11, zero, theta.q22)
            return report
    raise NonConvergenceError(
        f"dual kernel did not converge within {max_doublings} doublings "
        f"(off-block norm {report.trace[-1].off_norm:.3e})",
        trace=report.trace)


def primal_limit(theta_inf: PartitionedHessian, space: SpaceKind) -> PartitionedHessian:
    """Block-diagonal primal limit; equals kernel_dual of the dual limit.

    Convex:      diag(Theta11^{-1}, -Theta22)
    Semiconvex:  diag(M (Theta11 + M)^{-1} M - M, -Theta22)
    Indicator:   diag(-Theta11, -Theta22)
    """
    return kernel_dual(theta_inf, space)


def limit_offset(a: DualFunction, q22_limit: np.ndarray, eps0: float = 1e-3,
                 r0: float | None = None) -> float:
    """Payoff offset kappa = max_z {a(z) + (1/2) z^T Q22_inf z} on the dual grid.

    Before maximizing, certifies the coercivity margin
    a(z) <= -(1/2) z^T (Q22_inf + eps0 I) z for every grid z with |z| > r0
    (default r0: half the dual-grid radius), and rejects a maximizer on the
    grid boundary: both guard against a dual grid too small to contain the
    true maximizer.
    """
    grid = a.grid
    q22 = sym(np.asarray(q22_limit, dtype=float))
    if r0 is None:
        r0 = 0.5 * float(np.min((grid.upper - grid.lower) / 2))
    pts = grid.points()
    norms = np.sqrt(np.einsum("ij,ij->i", pts, pts))
    outer = norms > r0
    if outer.any():
        bound = -0.5 * np.einsum("ij,jk,ik->i", pts[outer],
                                 q22 + eps0 * np.eye(grid.dim), pts[outer])
        gap = a.values[outer] - bound
        worst = int(np.argmax(gap))
        if gap[worst] > 0:
            raise HypothesisError(
                "the dual payoff violates the coercivity margin needed for a finite "
                f"offset: a(z) = {a.values[outer][worst]:.6g} > {bound[worst]:.6g} "
                f"at z = {pts[outer][worst].tolist()} (|z| > r0 = {r0:.4g})")
    objective = a.values + 0.5 * np.einsum("ij,jk,ik->i", pts, q22, pts)
    flat = int(np.argmax(objective))
    steps = np.unravel_index(flat, grid.shape)
    shape = grid.shape
    if any(s == 0 or s == c - 1 for s, c in zip(steps, shape)):
        raise HypothesisError(
            f"the offset maximizer {pts[flat].tolist()} lies on the dual grid "
            "boundary; the dual grid is too small")
    return float(objective[flat])
