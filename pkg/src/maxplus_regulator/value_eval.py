"""Assemble value functions from a kernel Hessian and a dual payoff.

W_k(x) = max_z { (1/2)[x; z]^T Q_k [x; z] + a(z) }
       = (1/2) x^T Q11 x + max_z { x^T Q12 z + (1/2) z^T Q22 z + a(z) },

with the z maximization running over the dual grid (first-index tie-break,
deterministic).  In the infinite-horizon limit the value collapses to a
quadratic plus a scalar offset.
"""
from __future__ import annotations

import numpy as np

from .duality import DualFunction, GridSpec, run_chunked
from .model import PartitionedHessian, StructuralError, as_matrix


def _z_profile(q: PartitionedHessian, a: DualFunction) -> np.ndarray:
    zpts = a.grid.points()
    return 0.5 * np.einsum("ij,jk,ik->i", zpts, q.q22, zpts) + a.values


def value_at(q: PartitionedHessian, a: DualFunction, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != q.n or a.grid.dim != q.n:
        raise StructuralError("kernel, dual function and point dimensions disagree")
    cross = a.grid.points() @ (x @ q.q12)
    return float(0.5 * x @ q.q11 @ x + np.max(cross + _z_profile(q, a)))


def value_grid(q: PartitionedHessian, a: DualFunction, xgrid: GridSpec) -> np.ndarray:
    """value_at on every xgrid point; flat row-major array."""
    if xgrid.dim != q.n or a.grid.dim != q.n:
        raise StructuralError("kernel, dual function and grid dimensions disagree")
    xpts = xgrid.points()
    profile = _z_profile(q, a)
    zq = a.grid.points() @ q.q12.T                 # (Nz, n); cross term is zq @ x
    quad = 0.5 * np.einsum("ij,jk,ik->i", xpts, q.q11, xpts)
    out = np.empty(xpts.shape[0])

    def scan(start: int, stop: int) -> None:
        scores = zq @ xpts[start:stop].T + profile[:, None]
        out[start:stop] = scores.max(axis=0)

    run_chunked(xpts.shape[0], scan, chunk=64)
    return quad + out


def infinite_horizon_value(q11_limit, kappa: float, x) -> float:
    """(1/2) x^T Q11_inf x + kappa."""
    q11 = as_matrix(q11_limit, "Q11 limit")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(0.5 * x @ q11 @ x + kappa)


def infinite_horizon_grid(q11_limit, kappa: float, xgrid: GridSpec) -> np.ndarray:
    q11 = as_matrix(q11_limit, "Q11 limit")
    pts = xgrid.points()
    return 0.5 * np.einsum("ij,jk,ik->i", pts, q11, pts) + kappa


def relative_error(values: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """|values - reference| / (1 + reference), elementwise."""
    values = np.asarray(values, dtype=float)
    reference = np.asarray(reference, dtype=float)
    return np.abs((values - reference) / (1.0 + reference))
