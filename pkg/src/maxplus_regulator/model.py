"""Problem data, validation, and shared dense linear algebra.

Everything here treats matrices as small and dense (n up to a few tens);
all decompositions are direct.  Values are immutable after construction
and safe to share between threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative singular-value threshold used for every rank / definiteness
# decision; scale-invariant by construction.
RANK_RTOL = 1e-10


class StructuralError(ValueError):
    """Inputs are malformed: inconsistent shapes, bad grids, bad config."""


class FeasibilityError(RuntimeError):
    """A positivity condition required by the matrix recursions failed.

    Carries the offending minimum eigenvalue and, when known, the
    recursion step at which the failure occurred.
    """

    def __init__(self, message: str, *, min_eigenvalue: float | None = None,
                 step: int | None = None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
        self.step = step


class NonConvergenceError(RuntimeError):
    """An iteration hit its step budget before reaching its tolerance."""

    def __init__(self, message: str, *, residual: float | None = None, trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace


class HypothesisError(RuntimeError):
    """A checkable hypothesis of the infinite-horizon limit failed."""


# ---------------------------------------------------------------------------
# small dense helpers
# ---------------------------------------------------------------------------

def as_matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise StructuralError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


def sym(x: np.ndarray) -> np.ndarray:
    """Symmetrize: (X + X^T)/2.  Applied after every update to stop drift."""
    return 0.5 * (x + x.T)


def min_eigenvalue(x: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(sym(x)).min())


def is_positive_definite(x: np.ndarray) -> bool:
    """Eigenvalue test with relative threshold RANK_RTOL * largest |eig|."""
    evs = np.linalg.eigvalsh(sym(x))
    scale = float(np.abs(evs).max()) if evs.size else 0.0
    return bool(evs.size) and float(evs.min()) > RANK_RTOL * scale


def matrix_rank(x: np.ndarray) -> int:
    """Rank by SVD with relative threshold RANK_RTOL * largest singular value."""
    s = np.linalg.svd(x, compute_uv=False)
    if s.size == 0:
        return 0
    return int((s > RANK_RTOL * s[0]).sum())


def is_invertible(x: np.ndarray) -> bool:
    return x.shape[0] == x.shape[1] and matrix_rank(x) == x.shape[0]


def solve_spd(s: np.ndarray, rhs: np.ndarray, *, context: str = "matrix",
              step: int | None = None) -> np.ndarray:
    """Solve s @ x = rhs after certifying s > 0 by Cholesky.

    Raises FeasibilityError (with the minimum eigenvalue) when s is not
    positive definite, so callers get a diagnosable failure instead of a
    garbage solve.
    """
    s = sym(s)
    try:
        np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        raise FeasibilityError(
            f"{context} is not positive definite "
            f"(min eigenvalue {min_eigenvalue(s):.6g})",
            min_eigenvalue=min_eigenvalue(s), step=step) from None
    return np.linalg.solve(s, rhs)


def right_pseudo_inverse(c: np.ndarray) -> np.ndarray:
    """C^T (C C^T)^{-1} for a full-row-rank C."""
    return c.T @ solve_spd(c @ c.T, np.eye(c.shape[0]),
                           context="C C^T in the pseudo-inverse")


def null_space(c: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ker(C), columns; SVD with the shared threshold."""
    u, s, vt = np.linalg.svd(c)
    rank = int((s > RANK_RTOL * s[0]).sum()) if s.size else 0
    return vt[rank:].T.copy()


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RegulatorProblem:
    """Dynamics x' = A x + B w with running payoff (1/2) x'Phi x - (gamma^2/2)|w|^2."""

    A: np.ndarray
    B: np.ndarray
    Phi: np.ndarray
    gamma: float

    def __post_init__(self):
        a = as_matrix(self.A, "A")
        b = as_matrix(self.B, "B")
        phi = as_matrix(self.Phi, "Phi")
        n = a.shape[0]
        if a.shape != (n, n):
            raise StructuralError(f"A must be square, got {a.shape}")
        if b.shape[0] != n:
            raise StructuralError(f"B must have {n} rows, got {b.shape}")
        if phi.shape != (n, n):
            raise StructuralError(f"Phi must be {n}x{n}, got {phi.shape}")
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise StructuralError("gamma must be a positive real")
        object.__setattr__(self, "A", _freeze(a))
        object.__setattr__(self, "B", _freeze(b))
        object.__setattr__(self, "Phi", _freeze(phi))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


def controllability_matrix(problem: RegulatorProblem) -> np.ndarray:
    """[A^{n-1} B, A^{n-2} B, ..., A B, B], shape n x (n m)."""
    n = problem.n
    blocks = [problem.B]
    for _ in range(n - 1):
        blocks.append(problem.A @ blocks[-1])
    return np.hstack(blocks[::-1])


def validate_problem(problem: RegulatorProblem) -> list[str]:
    """Return the list of violated invariants (empty when the problem is valid).

    Side-effect free and idempotent: the checks are Phi = Phi^T > 0,
    rank(B) = m <= n, and full rank of the controllability matrix.
    """
    violations: list[str] = []
    n, m = problem.n, problem.m
    scale = float(np.abs(problem.Phi).max()) or 1.0
    if np.abs(problem.Phi - problem.Phi.T).max() > 1e-12 * scale:
        violations.append("Phi is not symmetric")
    if not is_positive_definite(problem.Phi):
        violations.append(
            f"Phi is not positive definite (min eigenvalue {min_eigenvalue(problem.Phi):.6g})")
    if m > n:
        violations.append(f"B has more columns than rows (m={m} > n={n})")
    elif matrix_rank(problem.B) < m:
        violations.append(f"B does not have full column rank (rank {matrix_rank(problem.B)} < m={m})")
    if matrix_rank(controllability_matrix(problem)) < n:
        violations.append("the pair (A, B) is not controllable")
    return violations


@dataclass(frozen=True, eq=False)
class PartitionedHessian:
    """Symmetric 2n x 2n matrix with named n x n blocks 11/12/21/22.

    Symmetry is enforced on construction by averaging with the transpose,
    so assembled matrices stay exactly symmetric through long iterations.
    """

    mat: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.mat, "partitioned Hessian")
        if m.shape[0] != m.shape[1] or m.shape[0] % 2 != 0:
            raise StructuralError(f"partitioned Hessian must be square with even size, got {m.shape}")
        object.__setattr__(self, "mat", _freeze(sym(m)))

    @classmethod
    def from_blocks(cls, q11: np.ndarray, q12: np.ndarray, q22: np.ndarray) -> "PartitionedHessian":
        q11, q12, q22 = (np.asarray(blk, dtype=float) for blk in (q11, q12, q22))
        return cls(np.block([[q11, q12], [q12.T, q22]]))

    @property
    def n(self) -> int:
        return self.mat.shape[0] // 2

    @property
    def q11(self) -> np.ndarray:
        return self.mat[: self.n, : self.n]

    @property
    def q12(self) -> np.ndarray:
        return self.mat[: self.n, self.n:]

    @property
    def q21(self) -> np.ndarray:
        return self.mat[self.n:, : self.n]

    @property
    def q22(self) -> np.ndarray:
        return self.mat[self.n:, self.n:]

    def blocks(self) -> dict[str, list[list[float]]]:
        """Row-major nested lists keyed by block label, for JSON output."""
        return {"11": self.q11.tolist(), "12": self.q12.tolist(),
                "21": self.q21.tolist(), "22": self.q22.tolist()}


@dataclass(frozen=True, eq=False)
class SpaceKind:
    """Which max-plus space the computation runs in.

    index 1: convex functions, pairing psi(x, z) = z^T x.
    index 2: semiconvex functions, pairing -(1/2)(x-z)^T M (x-z), M > 0.
    index 3: quadratically bounded functions, pairing the indicator of x = z.
    """

    index: int
    M: np.ndarray | None = None

    def __post_init__(self):
        if self.index not in (1, 2, 3):
            raise StructuralError(f"space index must be 1, 2 or 3, got {self.index}")
        if self.index == 2:
            if self.M is None:
                raise StructuralError("the semiconvex space requires the matrix M")
            m = as_matrix(self.M, "M")
            if np.abs(m - m.T).max() > 1e-12 * (np.abs(m).max() or 1.0):
                raise StructuralError("M must be symmetric")
            if not is_positive_definite(m):
                raise StructuralError("M must be positive definite")
            object.__setattr__(self, "M", _freeze(m))
        elif self.M is not None:
            raise StructuralError("M is only meaningful for the semiconvex space (index 2)")

    @classmethod
    def convex(cls) -> "SpaceKind":
        return cls(1)

    @classmethod
    def semiconvex(cls, m) -> "SpaceKind":
        return cls(2, as_matrix(m, "M"))

    @classmethod
    def indicator(cls) -> "SpaceKind":
        return cls(3)


@dataclass(frozen=True)
class GrowthBound:
    """Certifies a payoff satisfies psi(x) <= (r/2)|x|^2 + c."""

    r: float
    c: float

    def __post_init__(self):
        if not np.isfinite(self.r) or self.r <= 0:
            raise StructuralError("growth coefficient r must be positive")
