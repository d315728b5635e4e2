"""Discretized Hilbert-space arithmetic and subspace algebra.

The ambient space is a grid of nodes with positive quadrature weights, and
the inner product is the quadrature form <u, v> = sum_i w_i u_i v_i.  All
subspace computations are carried out in the W^{1/2}-scaled Euclidean
frame, so plain SVD factorizations realize the weighted geometry exactly.

Rank decisions are relative: singular values below ``tol * sigma_max`` are
treated as zero (default ``tol = 1e-10``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NumericalError

DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GridSpace:
    """Grid nodes with positive quadrature weights; stands in for the ambient space."""

    grid: np.ndarray
    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        grid = np.ascontiguousarray(self.grid, dtype=float)
        weights = np.ascontiguousarray(self.weights, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be one-dimensional with at least 2 nodes")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        if weights.shape != grid.shape:
            raise ValueError("need one quadrature weight per grid node")
        if np.any(weights <= 0.0) or not np.all(np.isfinite(weights)):
            raise ValueError("quadrature weights must be positive and finite")
        grid.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "weights", weights)
        sw = np.sqrt(weights)
        sw.setflags(write=False)
        object.__setattr__(self, "sqrt_weights", sw)

    @property
    def dim(self) -> int:
        return self.grid.size

    def vector(self, values) -> "HVector":
        return HVector(self, np.asarray(values, dtype=float))


def unit_grid(n: int, label: str = "") -> GridSpace:
    """R^n with unit weights (plain Euclidean inner product)."""
    return GridSpace(np.arange(n, dtype=float), np.ones(n), label=label)


def trapezoid_grid(points, label: str = "") -> GridSpace:
    """Grid with composite-trapezoid quadrature weights."""
    pts = np.asarray(points, dtype=float)
    w = np.zeros_like(pts)
    d = np.diff(pts)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return GridSpace(pts, w, label=label)


@dataclass(frozen=True, eq=False)
class HVector:
    """Element of a GridSpace: one coefficient per node."""

    space: GridSpace
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        if vals.shape != (self.space.dim,):
            raise DimensionMismatchError(
                f"vector has {vals.shape} entries, space has dimension {self.space.dim}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("vector entries must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __add__(self, other: "HVector") -> "HVector":
        _same_space(self, other)
        return HVector(self.space, self.values + other.values)

    def __sub__(self, other: "HVector") -> "HVector":
        _same_space(self, other)
        return HVector(self.space, self.values - other.values)

    def __mul__(self, c: float) -> "HVector":
        return HVector(self.space, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "HVector":
        return HVector(self.space, -self.values)


def _same_space(u: HVector, v: HVector) -> None:
    if u.space.dim != v.space.dim or u.space is not v.space and (
            not np.array_equal(u.space.grid, v.space.grid)
            or not np.array_equal(u.space.weights, v.space.weights)):
        raise DimensionMismatchError("vectors live on different grid spaces")


def inner(u: HVector, v: HVector) -> float:
    """Quadrature inner product sum_i w_i u_i v_i."""
    _same_space(u, v)
    return float(np.dot(u.space.weights * u.values, v.values))


def norm(u: HVector) -> float:
    return float(np.sqrt(max(inner(u, u), 0.0)))


@dataclass(frozen=True, eq=False)
class Subspace:
    """Subspace given by a weighted-orthonormal basis (B^T W B = I)."""

    space: GridSpace
    basis: np.ndarray  # shape (n, d)
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        basis = np.ascontiguousarray(self.basis, dtype=float)
        n = self.space.dim
        if basis.ndim != 2 or basis.shape[0] != n:
            raise DimensionMismatchError("basis must be an n x d matrix")
        if basis.shape[1] > n:
            raise DimensionMismatchError("subspace dimension exceeds ambient dimension")
        if basis.shape[1] > 0:
            gram = basis.T @ (self.space.weights[:, None] * basis)
            defect = np.max(np.abs(gram - np.eye(basis.shape[1])))
            if defect > 10.0 * max(self.tol, 1e-14):
                raise NumericalError(f"basis not W-orthonormal (defect {defect:.2e})")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def zero_subspace(space: GridSpace, tol: float = DEFAULT_TOL) -> Subspace:
    return Subspace(space, np.zeros((space.dim, 0)), tol)


def full_subspace(space: GridSpace, tol: float = DEFAULT_TOL) -> Subspace:
    # columns e_i / sqrt(w_i) are W-orthonormal
    return Subspace(space, np.diag(1.0 / space.sqrt_weights), tol)


def orthonormalize_columns(space: GridSpace, columns: np.ndarray,
                           tol: float = DEFAULT_TOL) -> Subspace:
    """Numerical column space of an n x k matrix, W-orthonormalized.

    Rank is the number of singular values of the W^{1/2}-scaled matrix
    above ``tol * sigma_max``.
    """
    cols = np.asarray(columns, dtype=float)
    if cols.ndim != 2 or cols.shape[0] != space.dim:
        raise DimensionMismatchError("columns must be an n x k matrix")
    if cols.shape[1] == 0:
        return zero_subspace(space, tol)
    if not np.all(np.isfinite(cols)):
        raise ValueError("column entries must be finite")
    scaled = space.sqrt_weights[:, None] * cols
    u, s, _ = np.linalg.svd(scaled, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return zero_subspace(space, tol)
    rank = int(np.sum(s > tol * s[0]))
    basis = u[:, :rank] / space.sqrt_weights[:, None]
    return Subspace(space, basis, tol)


def orthonormalize(vectors: list[HVector], tol: float = DEFAULT_TOL) -> Subspace:
    """Subspace spanned by the given vectors (all-zero input gives dimension 0)."""
    if not vectors:
        raise ValueError("need at least one vector")
    space = vectors[0].space
    for v in vectors[1:]:
        _same_space(vectors[0], v)
    cols = np.column_stack([v.values for v in vectors])
    return orthonormalize_columns(space, cols, tol)


def project(v: HVector, s: Subspace) -> HVector:
    """Orthogonal projection of v onto s in the quadrature inner product."""
    if v.space.dim != s.space.dim:
        raise DimensionMismatchError("vector and subspace on different spaces")
    if s.dim == 0:
        return HVector(v.space, np.zeros(v.space.dim))
    coef = s.basis.T @ (s.space.weights * v.values)
    return HVector(v.space, s.basis @ coef)


def complement(s: Subspace) -> Subspace:
    """Orthogonal complement; dim = n - dim(s)."""
    n = s.space.dim
    if s.dim == 0:
        return full_subspace(s.space, s.tol)
    scaled = s.space.sqrt_weights[:, None] * s.basis
    u, _, _ = np.linalg.svd(scaled, full_matrices=True)
    basis = u[:, s.dim:] / s.space.sqrt_weights[:, None]
    return Subspace(s.space, basis, s.tol)


def principal_angles(s1: Subspace, s2: Subspace) -> np.ndarray:
    """Canonical angles in radians, ascending; empty if either space is trivial.

    Small angles come from the sine-based residual SVD instead of arccos of
    cosines near 1, which would lose half the working precision."""
    if s1.space.dim != s2.space.dim:
        raise DimensionMismatchError("subspaces on different spaces")
    if s1.dim == 0 or s2.dim == 0:
        return np.zeros(0)
    sw = s1.space.sqrt_weights
    a, b = sw[:, None] * s1.basis, sw[:, None] * s2.basis
    if a.shape[1] > b.shape[1]:
        a, b = b, a
    g = b.T @ a
    cos = np.clip(np.linalg.svd(g, compute_uv=False), 0.0, 1.0)  # descending
    sin = np.clip(np.sort(np.linalg.svd(a - b @ g, compute_uv=False)), 0.0, 1.0)
    angles = np.where(cos ** 2 >= 0.5, np.arcsin(sin), np.arccos(cos))
    return np.sort(angles)


def containment_angle(sub: Subspace, sup: Subspace) -> float:
    """Largest principal angle of ``sub`` into ``sup``; 0 for a trivial sub."""
    if sub.dim == 0:
        return 0.0
    if sub.dim > sup.dim:
        return float(np.pi / 2)
    return float(principal_angles(sub, sup)[-1])


def _intersect_pair(a: Subspace, b: Subspace, tol: float) -> Subspace:
    if a.dim == 0 or b.dim == 0:
        return zero_subspace(a.space, tol)
    stacked = np.hstack([complement(a).basis, complement(b).basis])
    union = orthonormalize_columns(a.space, stacked, tol)
    return complement(union)


def intersect(spaces: list[Subspace], tol: float = DEFAULT_TOL) -> Subspace:
    """Common subspace of all inputs, via rank-revealing SVD of stacked complements.

    Folds pairwise left-to-right; the result is re-checked for containment
    in every input (largest principal angle below ``max(10 tol, 1e-12)``).
    """
    if not spaces:
        raise ValueError("need at least one subspace")
    result = spaces[0]
    for s in spaces[1:]:
        if s.space.dim != result.space.dim:
            raise DimensionMismatchError("subspaces on different spaces")
        result = _intersect_pair(result, s, tol)
        if result.dim == 0:
            break
    if result.dim > 0:
        check = max(10.0 * tol, 1e-12)
        for s in spaces:
            ang = containment_angle(result, s)
            if ang > check:
                raise NumericalError(
                    f"intersection not contained in an input (angle {ang:.2e})")
    return result
