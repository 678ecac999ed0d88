"""Kernel Hessians of the max-plus fundamental solution and their propagation.

The k-step action of the dynamic programming operator on a basis function of
the chosen space is a quadratic kernel (1/2)[x; z]^T Q_k [x; z].  Its dual
kernel Theta_k propagates under a semigroup composition that lets horizon
doubling reach horizon k in O(log k) matrix operations, independently of the
terminal payoff.

Conventions:
  * primal kernels Q advance one horizon at a time via kernel_step;
  * dual kernels Theta combine via compose: Theta_{k1+k2} = compose(Theta_k1, Theta_k2);
  * kernel_dual converts between the two and is an involution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (FeasibilityError, PartitionedHessian, RegulatorProblem,
                    SpaceKind, StructuralError, controllability_matrix,
                    is_invertible, min_eigenvalue, null_space,
                    right_pseudo_inverse, solve_spd, sym)


@dataclass(frozen=True, eq=False)
class KernelState:
    """A dual kernel at a given horizon.

    base_horizon is 1 except in the indicator space with strictly fewer
    inputs than states, where the earliest quadratic kernel lives at
    horizon n.  Dual-space composition only combines kernels at multiples
    of the base; horizons with a remainder are reached through the primal
    recursion (see propagate).
    """

    space: SpaceKind
    base_horizon: int
    theta: PartitionedHessian
    horizon: int

    def __post_init__(self):
        if self.base_horizon < 1 or self.horizon < self.base_horizon:
            raise StructuralError("horizon must be at least the base horizon")


@dataclass(frozen=True)
class PropagationResult:
    state: KernelState
    compose_ops: int


# ---------------------------------------------------------------------------
# initializations
# ---------------------------------------------------------------------------

def _initial_indicator_tall(problem: RegulatorProblem) -> PartitionedHessian:
    """Earliest-horizon kernel for the indicator space when n > m.

    The horizon-n problem constrained to x_0 = x, x_n = z is solved in
    closed form: stack the first n states as xbar = Abar x + Bbar wbar,
    parametrize the constraint set by wbar = C+ (z - A^n x) + D what with
    D an orthonormal kernel basis of the stacked reachability map, and
    maximize the resulting concave quadratic in what exactly.
    """
    n, m = problem.n, problem.m
    a, b, phi, gamma = problem.A, problem.B, problem.Phi, problem.gamma
    powers = [np.eye(n)]
    for _ in range(n):
        powers.append(a @ powers[-1])
    abar = np.vstack(powers[:n])                      # (n*n, n)
    bbar = np.zeros((n * n, n * m))
    for row in range(n):
        for col in range(row):
            bbar[row * n:(row + 1) * n, col * m:(col + 1) * m] = powers[row - 1 - col] @ b
    cbar = controllability_matrix(problem)            # (n, n*m)
    phibar = np.kron(np.eye(n), phi)

    cplus = right_pseudo_inverse(cbar)
    dmat = null_space(cbar)                           # (n*m, r)
    gmat = bbar.T @ phibar @ bbar - gamma**2 * np.eye(n * m)
    ex = np.hstack([np.eye(n), np.zeros((n, n))])     # [x; z] -> x
    lmat = np.hstack([-cplus @ powers[n], cplus])     # [x; z] -> particular wbar
    fmat = bbar.T @ phibar @ abar
    if dmat.shape[1] > 0:
        omega = sym(dmat.T @ gmat @ dmat)
        top = float(np.linalg.eigvalsh(omega).max())
        if top >= 0:
            raise FeasibilityError(
                "supremum not attained: the reduced input Hessian is not "
                f"negative definite (max eigenvalue {top:.6g})",
                min_eigenvalue=-top)
        wmap = lmat - dmat @ np.linalg.solve(omega, dmat.T @ (gmat @ lmat + fmat @ ex))
    else:
        wmap = lmat
    quad = (wmap.T @ gmat @ wmap + ex.T @ fmat.T @ wmap + wmap.T @ fmat @ ex
            + ex.T @ abar.T @ phibar @ abar @ ex)
    return PartitionedHessian(quad)


def initial_kernel(problem: RegulatorProblem, space: SpaceKind) -> tuple[PartitionedHessian, int]:
    """Earliest primal kernel Hessian and its base horizon.

    Convex space:      Q_1 = [[Phi, A^T], [A, gamma^{-2} B B^T]].
    Semiconvex space:  Q_1 = [[A^T D A + Phi, -A^T D], [-D A, D]] with
                       D = M B (gamma^2 I + B^T M B)^{-1} B^T M - M.
    Indicator space:   with m = n, the one-step transfer is unique and
                       Q_1 = [[Phi - g^2 A^T W A, g^2 A^T W], [g^2 W A, -g^2 W]],
                       W = (B B^T)^{-1}; with n > m the base horizon is n.
    """
    n, m = problem.n, problem.m
    a, b, phi, gamma = problem.A, problem.B, problem.Phi, problem.gamma
    if space.index == 1:
        q = PartitionedHessian.from_blocks(phi, a.T, b @ b.T / gamma**2)
        return q, 1
    if space.index == 2:
        mmat = space.M
        delta = mmat @ b @ solve_spd(gamma**2 * np.eye(m) + b.T @ mmat @ b,
                                     b.T @ mmat,
                                     context="gamma^2 I + B^T M B") - mmat
        q = PartitionedHessian.from_blocks(a.T @ delta @ a + phi, -a.T @ delta, delta)
        return q, 1
    if m == n:
        if not is_invertible(b):
            raise FeasibilityError("the indicator-space one-step kernel needs an invertible B")
        w = solve_spd(b @ b.T, np.eye(n), context="B B^T")
        q = PartitionedHessian.from_blocks(phi - gamma**2 * a.T @ w @ a,
                                           gamma**2 * a.T @ w,
                                           -gamma**2 * w)
        return q, 1
    return _initial_indicator_tall(problem), n


def initial_state(problem: RegulatorProblem, space: SpaceKind) -> KernelState:
    """Initial dual kernel: build the primal kernel, then apply kernel_dual."""
    q, base = initial_kernel(problem, space)
    return KernelState(space, base, kernel_dual(q, space), base)


# ---------------------------------------------------------------------------
# one-step primal recursion
# ---------------------------------------------------------------------------

def kernel_step(q: PartitionedHessian, problem: RegulatorProblem) -> PartitionedHessian:
    """Advance the primal kernel by one horizon.

    Block updates (S = gamma^2 I - B^T Q11 B, required positive definite):
        Q11' = Phi + A^T Q11 A + A^T Q11 B S^{-1} B^T Q11 A
        Q12' = A^T Q12 + A^T Q11 B S^{-1} B^T Q12
        Q22' = Q22 + Q21 B S^{-1} B^T Q12
    """
    a, b, gamma = problem.A, problem.B, problem.gamma
    q11, q12, q22 = q.q11, q.q12, q.q22
    s = gamma**2 * np.eye(problem.m) - b.T @ q11 @ b
    gain11 = solve_spd(s, b.T @ q11 @ a,
                       context="gamma^2 I - B^T Q11 B (input penalty too small)")
    gain12 = np.linalg.solve(sym(s), b.T @ q12)
    new11 = problem.Phi + a.T @ q11 @ a + a.T @ q11 @ b @ gain11
    new12 = a.T @ q12 + a.T @ q11 @ b @ gain12
    new22 = q22 + q12.T @ b @ gain12
    return PartitionedHessian.from_blocks(sym(new11), new12, sym(new22))


# ---------------------------------------------------------------------------
# primal <-> dual involution
# ---------------------------------------------------------------------------

def kernel_dual(q: PartitionedHessian, space: SpaceKind) -> PartitionedHessian:
    """Dual of a kernel Hessian under the space's pairing; self-inverse.

    Convex:      [[Q11^{-1}, -Q11^{-1} Q12], [., Q21 Q11^{-1} Q12 - Q22]]
                 (Q11 must be invertible).
    Semiconvex:  [[M S^{-1} M - M, -M S^{-1} Q12], [., Q21 S^{-1} Q12 - Q22]]
                 with S = Q11 + M required positive definite.
    Indicator:   -Q.
    """
    if space.index == 3:
        return PartitionedHessian(-q.mat)
    q11, q12, q22 = q.q11, q.q12, q.q22
    if space.index == 1:
        if not is_invertible(q11):
            raise FeasibilityError(
                "the 11 block is singular, so the convex-space dual is undefined; "
                "the duality feasibility check on the Riccati recursion diagnoses this",
                min_eigenvalue=min_eigenvalue(q11))
        inv11 = np.linalg.solve(q11, np.eye(q.n))
        x = np.linalg.solve(q11, q12)
        return PartitionedHessian.from_blocks(sym(inv11), -x, sym(q12.T @ x - q22))
    mmat = space.M
    s = q11 + mmat
    y = solve_spd(s, mmat,
                  context="Q11 + M (semiconvex duality margin; enlarge M or shorten the horizon)")
    x = np.linalg.solve(sym(s), q12)
    return PartitionedHessian.from_blocks(sym(mmat @ y - mmat), -mmat @ x,
                                          sym(q12.T @ x - q22))


# ---------------------------------------------------------------------------
# dual-space semigroup composition
# ---------------------------------------------------------------------------

def compose(t1: PartitionedHessian, t2: PartitionedHessian) -> PartitionedHessian:
    """Semigroup product of dual kernels (max-plus kernel convolution).

        compose(T1, T2) = diag(T1_11, T2_22)
                          - [T1_12; T2_21] (T1_22 + T2_11)^{-1} [T1_21, T2_12]

    Requires T1_22 + T2_11 > 0; failure signals that the semigroup
    feasibility of the underlying horizons is violated.
    """
    if t1.n != t2.n:
        raise StructuralError("kernel dimensions differ")
    k = t1.q22 + t2.q11
    x1 = solve_spd(k, t1.q21, context="T1_22 + T2_11 (dual composition margin)")
    x2 = np.linalg.solve(sym(k), t2.q12)
    r11 = t1.q11 - t1.q12 @ x1
    r12 = -t1.q12 @ x2
    r22 = t2.q22 - t2.q21 @ x2
    return PartitionedHessian.from_blocks(sym(r11), r12, sym(r22))


# ---------------------------------------------------------------------------
# fast propagation by horizon doubling
# ---------------------------------------------------------------------------

def propagate(state: KernelState, target_horizon: int,
              problem: RegulatorProblem) -> PropagationResult:
    """Propagate the base dual kernel to target_horizon.

    With multiplier t = target_horizon // base written in binary
    (m_t = 1 + floor(log2 t) bits, n_t of them set), the dual kernel at
    t * base is produced by m_t - 1 doubling compositions plus n_t - 1
    sub-doubling compositions; compose_ops records exactly that count.
    Any remainder r = target_horizon mod base is applied in the primal:
    Q = kernel_dual(Theta), r kernel_steps, Theta = kernel_dual(Q).
    """
    if state.horizon != state.base_horizon:
        raise StructuralError("propagation starts from the base kernel")
    base = state.base_horizon
    if target_horizon < base:
        raise StructuralError(
            f"target horizon {target_horizon} is below the base horizon {base}")
    multiplier, remainder = divmod(target_horizon, base)
    ops = 0
    bits = multiplier.bit_length()
    powers = [state.theta]                      # powers[j] is the kernel at 2^j * base
    try:
        for j in range(1, bits):
            powers.append(compose(powers[-1], powers[-1]))
            ops += 1
        theta = powers[bits - 1]
        for j in range(bits - 2, -1, -1):
            if multiplier & (1 << j):
                theta = compose(theta, powers[j])
                ops += 1
    except FeasibilityError as err:
        raise FeasibilityError(f"{err} during doubling (after {ops} compositions)",
                               min_eigenvalue=err.min_eigenvalue, step=ops) from None
    if remainder:
        q = kernel_dual(theta, state.space)
        for j in range(remainder):
            try:
                q = kernel_step(q, problem)
            except FeasibilityError as err:
                raise FeasibilityError(
                    f"{err} during the primal remainder step {j}",
                    min_eigenvalue=err.min_eigenvalue, step=j) from None
        theta = kernel_dual(q, state.space)
    new_state = KernelState(state.space, base, theta, multiplier * base + remainder)
    return PropagationResult(new_state, ops)
