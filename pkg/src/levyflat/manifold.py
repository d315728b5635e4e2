"""Finite dimensional submanifolds via explicit parametrizations.

A chart is a map phi from an axis-aligned coordinate box into the grid
space, with a Jacobian of full column rank.  On top of that: tangent
spaces, Gauss-Newton point projection, flatness estimation from sampled
tangent-space intersections, direct-sum decomposition against a candidate
common subspace, and the affine/foliation classification.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import hilbert
from .errors import (ConvergenceError, DegenerateChartError, DimensionMismatchError,
                     DomainExitError, NumericalError)
from .hilbert import GridSpace, HVector, Subspace

GN_MAX_ITER = 100
GN_GRAD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ManifoldChart:
    """Parametrization phi of a coordinate box into the ambient grid space.

    ``phi`` maps an m-vector of coordinates to an n-vector of grid values.
    ``jacobian``, when given, maps coordinates to the n x m derivative
    matrix; otherwise a central finite difference with step ``fd_step``
    is used.
    """

    lower: np.ndarray
    upper: np.ndarray
    phi: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    fd_step: float = 1e-6

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(lo >= hi):
            raise ValueError("chart domain must be a nondegenerate box")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, y, slack: float = 1e-12) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(np.all(y >= self.lower - slack) and np.all(y <= self.upper + slack))

    def clip(self, y) -> np.ndarray:
        return np.clip(np.asarray(y, dtype=float), self.lower, self.upper)

    def fd_jacobian(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        cols = []
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = self.fd_step
            cols.append((self.phi(y + e) - self.phi(y - e)) / (2.0 * self.fd_step))
        return np.column_stack(cols)

    def jac(self, y) -> np.ndarray:
        if self.jacobian is not None:
            return np.asarray(self.jacobian(np.asarray(y, dtype=float)), dtype=float)
        return self.fd_jacobian(y)


@dataclass(frozen=True, eq=False)
class Manifold:
    """Atlas of charts sharing one ambient space and coordinate dimension."""

    charts: tuple[ManifoldChart, ...]
    space: GridSpace
    dim: int
    smoothness_class: int = 3
    closed: bool = True  # declared metadata, not numerically verifiable
    name: str = ""

    def __post_init__(self):
        charts = tuple(self.charts)
        if not charts:
            raise ValueError("manifold needs at least one chart")
        for c in charts:
            if c.dim != self.dim:
                raise DimensionMismatchError("all charts must share the manifold dimension")
        if self.dim > self.space.dim:
            raise DimensionMismatchError("manifold dimension exceeds ambient dimension")
        if self.smoothness_class < 1:
            raise ValueError("smoothness class must be >= 1")
        object.__setattr__(self, "charts", charts)

    def point(self, y, chart_index: int = 0) -> HVector:
        return self.space.vector(self.charts[chart_index].phi(np.asarray(y, dtype=float)))


@dataclass(frozen=True, eq=False)
class FlatnessReport:
    """Sampled-tangent flatness estimate at one base point."""

    base_point: HVector
    flatness: int
    common_subspace: Subspace
    samples_used: int
    radius: float
    singular_value_gap: float
    seed: int = 0
    chart_index: int = 0
    spectrum: np.ndarray = field(default_factory=lambda: np.zeros(0))


class Classification(enum.Enum):
    AFFINE_SPACE = "AffineSpace"
    FOLIATION = "Foliation"
    GENERAL = "General"


def tangent_at(manifold: Manifold, y, chart_index: int = 0,
               tol: float = hilbert.DEFAULT_TOL) -> Subspace:
    """Tangent space at phi(y): orthonormalized range of the chart Jacobian."""
    chart = manifold.charts[chart_index]
    if not chart.contains(y):
        raise DomainExitError(f"coordinates {np.asarray(y)} outside chart domain")
    jac = chart.jac(y)
    if jac.shape != (manifold.space.dim, manifold.dim):
        raise DimensionMismatchError("Jacobian has wrong shape")
    sub = hilbert.orthonormalize_columns(manifold.space, jac, tol)
    if sub.dim < manifold.dim:
        raise DegenerateChartError(
            f"chart Jacobian rank {sub.dim} < manifold dimension {manifold.dim}")
    return sub


def closest_point(manifold: Manifold, h: HVector, y0, chart_index: int = 0, *,
                  clip_to_domain: bool = False, max_iter: int = GN_MAX_ITER
                  ) -> tuple[np.ndarray, HVector, float]:
    """Gauss-Newton projection of h onto the chart, warm-started at y0.

    Converges to first-order stationarity ||Dphi(y)^T W (phi(y) - h)|| <
    1e-10 (1 + ||h||).  With ``clip_to_domain`` iterates are clipped to the
    coordinate box (stationarity then means no descent along the clipped
    step); otherwise an iterate leaving the box raises DomainExitError.
    """
    chart = manifold.charts[chart_index]
    space = manifold.space
    w = space.weights
    sw = space.sqrt_weights
    hv = h.values
    y = np.asarray(y0, dtype=float).copy()
    if not chart.contains(y):
        if clip_to_domain:
            y = chart.clip(y)
        else:
            raise DomainExitError(f"initial coordinates {y} outside chart domain")
    grad_tol = GN_GRAD_TOL * (1.0 + hilbert.norm(h))

    def residual(yy):
        return chart.phi(yy) - hv

    def wnorm(r):
        return float(np.sqrt(max(np.dot(w * r, r), 0.0)))

    r = residual(y)
    dist = wnorm(r)
    for _ in range(max_iter):
        jac = chart.jac(y)
        grad = jac.T @ (w * r)
        if np.linalg.norm(grad) < grad_tol:
            return y, space.vector(hv + r), dist
        step, *_ = np.linalg.lstsq(sw[:, None] * jac, -(sw * r), rcond=None)

        def try_step(lam):
            y_new = y + lam * step
            if clip_to_domain:
                y_new = chart.clip(y_new)
            elif not chart.contains(y_new):
                raise DomainExitError(
                    f"Gauss-Newton iterate {y_new} left the chart domain")
            r_new = residual(y_new)
            return y_new, r_new, wnorm(r_new)

        lam = 1.0
        accepted = False
        for _ in range(40):
            cand = try_step(lam)
            # a half step can beat the full one on curved large-residual
            # problems where the plain iteration oscillates
            half = try_step(lam * 0.5)
            if half[2] < cand[2]:
                cand = half
            if cand[2] < dist * (1.0 - 1e-14) or cand[2] < grad_tol:
                y, r, dist = cand
                accepted = True
                break
            lam *= 0.25
        if not accepted:
            if clip_to_domain and np.linalg.norm(chart.clip(y + step) - y) < 1e-13 * (
                    1.0 + np.linalg.norm(y)):
                # pinned against the box boundary: best point within the chart
                return y, space.vector(hv + r), dist
            raise ConvergenceError("Gauss-Newton stalled without reaching stationarity",
                                   last_y=y, last_dist=dist)
    jac = chart.jac(y)
    if np.linalg.norm(jac.T @ (w * r)) < grad_tol:
        return y, space.vector(hv + r), dist
    raise ConvergenceError(f"Gauss-Newton did not converge in {max_iter} iterations",
                           last_y=y, last_dist=dist)


def global_closest_point(manifold: Manifold, h: HVector, chart_index: int = 0, *,
                         warm=None, n_coarse: int = 256, n_starts: int = 3
                         ) -> tuple[np.ndarray, HVector, float]:
    """Distance to the chart via a coarse grid scan followed by Gauss-Newton.

    The local projection can be fooled by far-away targets on periodic or
    folded charts; scanning a tensor grid over the coordinate box and
    polishing the best few candidates recovers the global minimum at the
    grid's resolution.
    """
    chart = manifold.charts[chart_index]
    m = chart.dim
    per_dim = max(4, int(round(n_coarse ** (1.0 / m))))
    axes = [np.linspace(chart.lower[i], chart.upper[i], per_dim) for i in range(m)]
    mesh = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    w = manifold.space.weights
    dists = np.empty(mesh.shape[0])
    for i, y in enumerate(mesh):
        r = chart.phi(y) - h.values
        dists[i] = np.dot(w * r, r)
    order = np.argsort(dists)
    candidates = [mesh[i] for i in order[:n_starts]]
    if warm is not None:
        candidates.append(np.asarray(warm, dtype=float))
    best = None
    for y0 in candidates:
        try:
            y, p, dist = closest_point(manifold, h, y0, chart_index,
                                       clip_to_domain=True)
        except ConvergenceError as err:
            if err.last_y is None or not np.isfinite(err.last_dist):
                continue
            y, p, dist = err.last_y, manifold.point(err.last_y, chart_index), \
                err.last_dist
        if best is None or dist < best[2]:
            best = (y, p, dist)
    if best is None:
        raise ConvergenceError("no candidate start converged")
    return best


def sample_ball(chart: ManifoldChart, y0, radius: float, n_samples: int,
                rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform samples in the coordinate ball around y0, intersected with the box."""
    y0 = np.asarray(y0, dtype=float)
    m = y0.size
    out: list[np.ndarray] = []
    attempts = 0
    while len(out) < n_samples:
        if attempts > 1000 * n_samples:
            raise NumericalError("coordinate ball barely intersects the chart domain")
        attempts += 1
        u = rng.standard_normal(m)
        nu = np.linalg.norm(u)
        if nu == 0.0:
            continue
        y = y0 + radius * rng.uniform() ** (1.0 / m) * u / nu
        if chart.contains(y):
            out.append(y)
    return out


def _mean_projector_spectrum(tangents: Sequence[Subspace]) -> np.ndarray:
    """Eigenvalues (descending) of the averaged tangent projector in the weighted frame."""
    space = tangents[0].space
    n = space.dim
    acc = np.zeros((n, n))
    for t in tangents:
        bw = space.sqrt_weights[:, None] * t.basis
        acc += bw @ bw.T
    acc /= len(tangents)
    return np.sort(np.linalg.eigvalsh(acc))[::-1]


def flatness_at(manifold: Manifold, y0, radius: float = 0.1, n_samples: int = 32,
                tol: float = 1e-8, seed: int = 0, chart_index: int = 0) -> FlatnessReport:
    """Flatness estimate at phi(y0) from tangent spaces sampled in a coordinate ball.

    The estimate is the dimension of the intersection of the tangent space
    at y0 and at ``n_samples`` uniformly sampled nearby coordinates;
    deterministic for a fixed seed.  Adding samples can only shrink the
    intersection, so the estimate is an upper bound that stabilizes under
    refinement.
    """
    if radius <= 0.0 or n_samples < 1:
        raise ValueError("radius must be positive and n_samples >= 1")
    chart = manifold.charts[chart_index]
    rng = np.random.default_rng(seed)
    coords = [np.asarray(y0, dtype=float)] + sample_ball(chart, y0, radius, n_samples, rng)
    tangents = [tangent_at(manifold, y, chart_index) for y in coords]
    common = hilbert.intersect(tangents, tol)
    d = common.dim
    spectrum = _mean_projector_spectrum(tangents)
    upper = 1.0 if d == 0 else float(spectrum[d - 1])
    lower = 0.0 if d >= manifold.space.dim else float(spectrum[d])
    return FlatnessReport(
        base_point=manifold.point(y0, chart_index),
        flatness=d,
        common_subspace=common,
        samples_used=len(coords),
        radius=radius,
        singular_value_gap=upper - lower,
        seed=seed,
        chart_index=chart_index,
        spectrum=spectrum,
    )


def flatness_global(manifold: Manifold, sample_plan: Sequence[tuple[int, np.ndarray]],
                    radius: float = 0.1, n_samples: int = 32, tol: float = 1e-8,
                    seed: int = 0) -> tuple[int, list[FlatnessReport]]:
    """Minimum of the per-point flatness over a sample plan of (chart, coords)."""
    if not sample_plan:
        raise ValueError("sample plan must be nonempty")
    reports = []
    for i, (ci, y) in enumerate(sample_plan):
        reports.append(flatness_at(manifold, y, radius, n_samples, tol,
                                   seed=seed + i, chart_index=ci))
    return min(r.flatness for r in reports), reports


def chain_consistency(manifold: Manifold, reports: Sequence[FlatnessReport],
                      overlap_pairs: Sequence[tuple[int, int]],
                      angle_tol: float = 1e-6) -> tuple[bool, list[float]]:
    """Check that overlapping flatness reports agree on one common subspace.

    Returns the verdict and the largest principal angle per pair (pairs with
    mismatched flatness count as inconsistent, angle pi/2).
    """
    ok = True
    angles = []
    for i, j in overlap_pairs:
        a, b = reports[i], reports[j]
        if a.flatness != b.flatness:
            ok = False
            angles.append(float(np.pi / 2))
            continue
        if a.flatness == 0:
            angles.append(0.0)
            continue
        ang = float(hilbert.principal_angles(a.common_subspace, b.common_subspace)[-1])
        angles.append(ang)
        if ang >= angle_tol:
            ok = False
    return ok, angles


@dataclass(frozen=True, eq=False)
class DecomposeResult:
    n_points: list[HVector]
    max_residual: float
    tangency_defect: float
    failures: int


def decompose(manifold: Manifold, common: Subspace,
              sample_plan: Sequence[tuple[int, np.ndarray]], tol: float = 1e-8,
              shift_extent: float = 1.0, n_shifts: int = 5) -> DecomposeResult:
    """Direct-sum test M = N (+) L for a candidate common subspace L.

    Projects sampled manifold points onto the complement of L, and measures
    the worst distance back to M of sampled points translated by elements
    of L with norms up to ``shift_extent``.  A residual near zero witnesses
    translation invariance of M along L; a large residual falsifies it.
    """
    if common.space.dim != manifold.space.dim:
        raise DimensionMismatchError("subspace and manifold on different spaces")
    n_points: list[HVector] = []
    max_residual = 0.0
    tangency_defect = 0.0
    failures = 0
    if common.dim == 0:
        for ci, y in sample_plan:
            n_points.append(manifold.point(y, ci))
        return DecomposeResult(n_points, 0.0, 0.0, 0)

    directions = [common.basis[:, i] for i in range(common.dim)]
    if common.dim > 1:
        mix = common.basis.sum(axis=1)
        mix = mix / np.sqrt(np.dot(common.space.weights * mix, mix))
        directions.append(mix)
    magnitudes = np.linspace(shift_extent / n_shifts, shift_extent, n_shifts)

    for ci, y in sample_plan:
        h = manifold.point(y, ci)
        tangent = tangent_at(manifold, y, ci)
        tangency_defect = max(tangency_defect,
                              hilbert.containment_angle(common, tangent))
        n_points.append(h - hilbert.project(h, common))
        for direction in directions:
            for mag in magnitudes:
                for sign in (1.0, -1.0):
                    shifted = h + manifold.space.vector(sign * mag * direction)
                    try:
                        _, _, dist = closest_point(manifold, shifted, y, ci,
                                                   clip_to_domain=True)
                    except ConvergenceError as err:
                        failures += 1
                        dist = err.last_dist
                    if dist > tol:
                        # rule out a local-minimum artifact before counting it
                        _, _, dist = global_closest_point(manifold, shifted, ci,
                                                          warm=y)
                    max_residual = max(max_residual, dist)
    return DecomposeResult(n_points, max_residual, tangency_defect, failures)


def classify(m: int, d: int) -> Classification:
    """Affine space iff d = m, foliation iff d = m - 1, general otherwise."""
    if not 0 <= d <= m:
        raise ValueError(f"need 0 <= d <= m, got d={d}, m={m}")
    if d == m:
        return Classification.AFFINE_SPACE
    if d == m - 1:
        return Classification.FOLIATION
    return Classification.GENERAL
