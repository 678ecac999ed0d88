"""Numerical max-plus duals of terminal payoffs, grids, and payoff ingestion.

The dual of a payoff psi with respect to the pairing of space i is

    a(z) = -max_x { pairing_i(x, z) - psi(x) },

computed by exhaustive maximization over a user-supplied x grid (the payoff
may be non-concave, so no fast-transform shortcuts are taken).  For the
indicator space the dual is the payoff itself.  The inverse dual is
max_z { pairing_i(x, z) + a(z) } over the dual grid.

Minus infinity is a legal value throughout; IEEE -inf saturates correctly
under the max/plus arithmetic used here.  Grid scans break ties toward the
first index in row-major order and are chunked deterministically, so results
are byte-identical regardless of the MAXPLUS_THREADS setting.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .model import (FeasibilityError, GrowthBound, SpaceKind, StructuralError,
                    as_matrix, is_positive_definite, min_eigenvalue, solve_spd, sym)

_COUNT_EPS = 1e-9
_CHUNK = 2048


def worker_count() -> int:
    """Grid-scan parallelism cap: MAXPLUS_THREADS, default all cores."""
    raw = os.environ.get("MAXPLUS_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise StructuralError(f"MAXPLUS_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def run_chunked(total: int, fn, chunk: int = _CHUNK) -> None:
    """Apply fn(start, stop) over fixed-size spans, possibly in threads.

    Span boundaries never depend on the worker count, and each span writes
    a disjoint output slice, so the result is identical to a serial run.
    """
    spans = [(i, min(i + chunk, total)) for i in range(0, total, chunk)]
    workers = worker_count()
    if workers <= 1 or len(spans) <= 1:
        for start, stop in spans:
            fn(start, stop)
        return
    with ThreadPoolExecutor(max_workers=min(workers, len(spans))) as pool:
        list(pool.map(lambda span: fn(*span), spans))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform rectangular grid: per-dimension lower, upper, spacing.

    Points per dimension: floor((upper - lower)/spacing) + 1; enumeration is
    row-major (last dimension fastest).
    """

    lower: np.ndarray
    upper: np.ndarray
    spacing: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        sp = np.atleast_1d(np.asarray(self.spacing, dtype=float))
        if not (lo.shape == hi.shape == sp.shape) or lo.ndim != 1:
            raise StructuralError("grid lower/upper/spacing must be 1-D and the same length")
        if not np.all(sp > 0):
            raise StructuralError("grid spacing must be positive")
        if not np.all(lo < hi):
            raise StructuralError("grid lower bounds must be below upper bounds")
        for arr in (lo, hi, sp):
            arr.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "spacing", sp)

    @classmethod
    def cube(cls, lower: float, upper: float, spacing: float, dim: int) -> "GridSpec":
        return cls(np.full(dim, lower), np.full(dim, upper), np.full(dim, spacing))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(np.floor((u - l) / s + _COUNT_EPS)) + 1
                     for l, u, s in zip(self.lower, self.upper, self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list[np.ndarray]:
        return [l + s * np.arange(c) for l, s, c in zip(self.lower, self.spacing, self.shape)]

    @cached_property
    def _points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts.setflags(write=False)
        return pts

    def points(self) -> np.ndarray:
        """All grid points, shape (size, dim), row-major order."""
        return self._points

    def nearest_index(self, x) -> int:
        """Flat row-major index of the grid point nearest to x (clamped)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.rint((x - self.lower) / self.spacing).astype(int)
        idx = np.clip(idx, 0, np.array(self.shape) - 1)
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def same_lattice(self, other: "GridSpec") -> bool:
        return (self.dim == other.dim
                and np.allclose(self.lower, other.lower, atol=1e-12)
                and np.allclose(self.upper, other.upper, atol=1e-12)
                and np.allclose(self.spacing, other.spacing, atol=1e-12))


# ---------------------------------------------------------------------------
# terminal payoffs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadraticPayoff:
    """psi(x) = (1/2) x^T weight x."""

    weight: np.ndarray
    growth: GrowthBound

    def __post_init__(self):
        object.__setattr__(self, "weight", sym(as_matrix(self.weight, "payoff weight")))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return 0.5 * np.einsum("ij,jk,ik->i", pts, self.weight, pts)

    def sample_on(self, grid: GridSpec) -> np.ndarray:
        return self(grid.points())


@dataclass(frozen=True, eq=False)
class NamedPayoff:
    """An analytic payoff from the registry, with its parameters."""

    name: str
    params: dict
    growth: GrowthBound

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return _REGISTRY[self.name](np.atleast_2d(points), self.params)

    def sample_on(self, grid: GridSpec) -> np.ndarray:
        return self(grid.points())


@dataclass(frozen=True, eq=False)
class SampledPayoff:
    """Payoff known only through samples on its own grid."""

    grid: GridSpec
    values: np.ndarray
    growth: GrowthBound

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if vals.shape[0] != self.grid.size:
            raise StructuralError(
                f"sampled payoff has {vals.shape[0]} values for a grid of {self.grid.size} points")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def sample_on(self, grid: GridSpec) -> np.ndarray:
        if not grid.same_lattice(self.grid):
            raise StructuralError("sampled payoff can only be evaluated on its own grid")
        return self.values


TerminalPayoff = QuadraticPayoff | NamedPayoff | SampledPayoff


def _abs_sine(points: np.ndarray, params: dict) -> np.ndarray:
    if points.shape[1] != 2:
        raise StructuralError("the abs-sine payoff is two-dimensional")
    scale = float(params.get("scale", 3.0))
    shift1 = float(params.get("shift1", 1.0))
    shift2 = float(params.get("shift2", 1.0))
    return scale * np.abs(points[:, 1] + shift2) * np.abs(np.sin(points[:, 0] - shift1))


def _abs_weighted(points: np.ndarray, params: dict) -> np.ndarray:
    weights = np.asarray(params.get("weights", np.ones(points.shape[1])), dtype=float)
    if weights.shape != (points.shape[1],):
        raise StructuralError("abs-weighted needs one weight per dimension")
    return np.abs(points) @ np.abs(weights)


_REGISTRY = {"abs-sine": _abs_sine, "abs-weighted": _abs_weighted}


def _default_growth(name: str, params: dict) -> GrowthBound:
    if name == "abs-sine":
        scale = float(params.get("scale", 3.0))
        shift2 = float(params.get("shift2", 1.0))
        # scale*(t + shift2) <= t^2/2 + (scale^2/2 + scale*shift2)
        return GrowthBound(1.0, scale**2 / 2 + scale * abs(shift2))
    weights = np.abs(np.asarray(params.get("weights", [1.0]), dtype=float))
    return GrowthBound(1.0, float((weights**2).sum()) / 2)


def named_payoff(name: str, params: dict | None = None,
                 growth: GrowthBound | None = None) -> NamedPayoff:
    if name not in _REGISTRY:
        raise StructuralError(f"unknown payoff {name!r}; registry: {sorted(_REGISTRY)}")
    params = dict(params or {})
    return NamedPayoff(name, params, growth or _default_growth(name, params))


def quadratic_payoff(weight, growth: GrowthBound | None = None) -> QuadraticPayoff:
    weight = sym(as_matrix(weight, "payoff weight"))
    if growth is None:
        top = float(np.linalg.eigvalsh(weight).max())
        growth = GrowthBound(max(top, 0.0) + 1e-9, 0.0)
    return QuadraticPayoff(weight, growth)


def check_growth(payoff: TerminalPayoff, grid: GridSpec) -> list[str]:
    """Violations of psi(x) <= (r/2)|x|^2 + c on the grid samples."""
    pts = grid.points()
    vals = payoff.sample_on(grid)
    bound = 0.5 * payoff.growth.r * np.einsum("ij,ij->i", pts, pts) + payoff.growth.c
    bad = vals > bound + 1e-12 * np.maximum(1.0, np.abs(bound))
    if not bad.any():
        return []
    worst = int(np.argmax(vals - bound))
    return [f"growth bound violated at {pts[worst].tolist()}: "
            f"payoff {vals[worst]:.6g} > bound {bound[worst]:.6g} "
            f"({int(bad.sum())} grid points in violation)"]


# ---------------------------------------------------------------------------
# dual transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DualFunction:
    """Dual coefficients a(z) over a z grid; entries may be -inf."""

    space: SpaceKind
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if vals.shape[0] != self.grid.size:
            raise StructuralError("dual values do not match the grid size")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def _pairwise_dual(psi_vals: np.ndarray, xpts: np.ndarray, zpts: np.ndarray,
                   space: SpaceKind) -> np.ndarray:
    """a(z) = -max_x {pairing(x, z) - psi(x)} by chunked full scan over x."""
    out = np.empty(zpts.shape[0])
    if space.index == 2:
        mx = xpts @ space.M
        xquad = 0.5 * np.einsum("ij,ij->i", mx, xpts)
        zquad = 0.5 * np.einsum("ij,jk,ik->i", zpts, space.M, zpts)

    def scan(start: int, stop: int) -> None:
        zc = zpts[start:stop]
        if space.index == 1:
            scores = xpts @ zc.T - psi_vals[:, None]
        else:
            # -(1/2)(x-z)^T M (x-z) = -xquad + x^T M z - zquad
            scores = mx @ zc.T - (xquad + psi_vals)[:, None] - zquad[start:stop][None, :]
        out[start:stop] = -scores.max(axis=0)

    run_chunked(zpts.shape[0], scan)
    return out


def _separable_envelope(psi_vals: np.ndarray, xgrid: GridSpec, zgrid: GridSpec,
                        mdiag: np.ndarray) -> np.ndarray:
    """min_x {(1/2)(x-z)^T M (x-z) + psi(x)} for diagonal M, one axis at a time.

    Exact: the diagonal quadratic splits across axes, so sweeping the
    minimization dimension by dimension visits every x for every z.
    """
    xaxes, zaxes = xgrid.axes(), zgrid.axes()
    work = psi_vals.reshape(xgrid.shape)
    for d in range(xgrid.dim):
        dist = 0.5 * mdiag[d] * (xaxes[d][:, None] - zaxes[d][None, :])**2
        moved = np.moveaxis(work, d, -1)                       # (..., nx_d)
        flat = moved.reshape(-1, moved.shape[-1])
        res = np.empty((flat.shape[0], dist.shape[1]))

        def scan(start: int, stop: int) -> None:
            res[start:stop] = (flat[start:stop, :, None] + dist[None, :, :]).min(axis=1)

        run_chunked(flat.shape[0], scan, chunk=256)
        work = np.moveaxis(res.reshape(*moved.shape[:-1], dist.shape[1]), -1, d)
    return work.ravel()


def dual_transform(payoff: TerminalPayoff, space: SpaceKind, zgrid: GridSpec,
                   xgrid: GridSpec) -> DualFunction:
    """Dual coefficients of the payoff over zgrid, maximizing over xgrid.

    For the indicator space the dual of any payoff is the payoff itself,
    sampled directly on zgrid.
    """
    if zgrid.size == 0 or xgrid.size == 0:
        raise StructuralError("grids must contain at least one point")
    if space.index == 3:
        return DualFunction(space, zgrid, payoff.sample_on(zgrid))
    psi_vals = payoff.sample_on(xgrid)
    if space.index == 2 and np.count_nonzero(space.M - np.diag(np.diag(space.M))) == 0 \
            and np.all(np.isfinite(psi_vals)):
        vals = _separable_envelope(psi_vals, xgrid, zgrid, np.diag(space.M))
    else:
        vals = _pairwise_dual(psi_vals, xgrid.points(), zgrid.points(), space)
    return DualFunction(space, zgrid, vals)


def quadratic_dual(weight, space: SpaceKind) -> tuple[np.ndarray, float]:
    """Exact dual of (1/2) x^T weight x as quadratic-form parameters (H, c).

    The dual is a(z) = (1/2) z^T H z + c with
        convex:      H = -weight^{-1}          (weight > 0 required),
        semiconvex:  H = M - M (weight + M)^{-1} M   (weight + M > 0 required),
        indicator:   H = weight.
    """
    weight = sym(as_matrix(weight, "payoff weight"))
    if space.index == 3:
        return weight, 0.0
    if space.index == 1:
        if not is_positive_definite(weight):
            raise FeasibilityError(
                "the convex-space dual of a quadratic needs a positive definite weight "
                f"(min eigenvalue {min_eigenvalue(weight):.6g})",
                min_eigenvalue=min_eigenvalue(weight))
        return sym(-np.linalg.solve(weight, np.eye(weight.shape[0]))), 0.0
    mmat = space.M
    y = solve_spd(weight + mmat, mmat,
                  context="weight + M (semiconvex duality margin)")
    return sym(mmat - mmat @ y), 0.0


def quadratic_dual_on_grid(weight, space: SpaceKind, zgrid: GridSpec) -> DualFunction:
    """Sample the closed-form quadratic dual on a grid."""
    hess, offset = quadratic_dual(weight, space)
    pts = zgrid.points()
    vals = 0.5 * np.einsum("ij,jk,ik->i", pts, hess, pts) + offset
    return DualFunction(space, zgrid, vals)


def inverse_dual(a: DualFunction, x) -> float:
    """max_z {pairing(x, z) + a(z)} over the dual grid.

    For the indicator space this selects a(z) at the grid point nearest x.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if a.space.index == 3:
        return float(a.values[a.grid.nearest_index(x)])
    zpts = a.grid.points()
    if a.space.index == 1:
        return float(np.max(zpts @ x + a.values))
    diff = zpts - x[None, :]
    quad = 0.5 * np.einsum("ij,jk,ik->i", diff, a.space.M, diff)
    return float(np.max(a.values - quad))


# ---------------------------------------------------------------------------
# CSV grid files: header x1,...,xn,value; one row per point, row-major
# ---------------------------------------------------------------------------

def write_grid_csv(path, grid: GridSpec, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=float).ravel()
    if values.shape[0] != grid.size:
        raise StructuralError("values do not match the grid size")
    pts = grid.points()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{d + 1}" for d in range(grid.dim)] + ["value"])
        for row, val in zip(pts, values):
            writer.writerow([repr(float(c)) for c in row] + [repr(float(val))])


def read_grid_csv(path) -> tuple[GridSpec, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "value" or len(header) < 2:
            raise StructuralError(f"{path}: expected header x1,...,xn,value")
        dim = len(header) - 1
        rows = [[float(cell) for cell in row] for row in reader if row]
    if not rows:
        raise StructuralError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    coords, values = data[:, :dim], data[:, dim]
    lower, upper = coords.min(axis=0), coords.max(axis=0)
    spacing = np.empty(dim)
    for d in range(dim):
        uniq = np.unique(coords[:, d])
        spacing[d] = np.diff(uniq).min() if uniq.size > 1 else 1.0
    grid = GridSpec(lower, np.where(upper > lower, upper, lower + spacing / 2), spacing)
    if grid.size != data.shape[0] or not np.allclose(grid.points(), coords, atol=1e-9):
        raise StructuralError(f"{path}: rows do not form a row-major uniform grid")
    return grid, values
