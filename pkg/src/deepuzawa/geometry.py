"""Domains, Cartesian collocation grids, quadrature and discrete norms.

A collocation set is a tensor-product grid over a box domain in one or two
dimensions, together with trapezoidal quadrature weights and a mask marking
interior points.  All reductions run in index order so that repeated
evaluations of the same data are bitwise reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridError, ShapeError


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in R^d, d in {1, 2}.

    Parameters
    ----------
    bounds : tuple of (low, high) pairs, one per axis.
    """

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.bounds) not in (1, 2):
            raise ValueError(f"only 1d and 2d domains are supported, got d={len(self.bounds)}")
        for a, b in self.bounds:
            if not a < b:
                raise ValueError(f"invalid axis bounds ({a}, {b}): need low < high")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def volume(self) -> float:
        out = 1.0
        for a, b in self.bounds:
            out *= b - a
        return out

    @staticmethod
    def unit_interval() -> "Domain":
        return Domain(((0.0, 1.0),))

    @staticmethod
    def unit_square() -> "Domain":
        return Domain(((0.0, 1.0), (0.0, 1.0)))


@dataclass(frozen=True)
class CollocationSet:
    """Quadrature points with weights over a domain.

    Attributes
    ----------
    points : (n, d) array of point coordinates.
    weights : (n,) array of nonnegative quadrature weights, summing to the
        domain volume.
    interior_mask : (n,) boolean array, False exactly on boundary points.
    """

    domain: Domain
    points: np.ndarray
    weights: np.ndarray
    interior_mask: np.ndarray
    n_per_axis: int | None = None

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_interior(self) -> int:
        return int(self.interior_mask.sum())

    def interior_points(self) -> np.ndarray:
        return self.points[self.interior_mask]


@dataclass
class GridField:
    """One scalar value per collocation point of a given set."""

    values: np.ndarray
    cset: CollocationSet

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.cset.n_points,):
            raise ShapeError(
                f"field has {self.values.shape} values for a set of {self.cset.n_points} points"
            )


def build_grid(domain: Domain, n_per_axis: int) -> CollocationSet:
    """Uniform Cartesian grid (boundary included) with trapezoidal weights.

    In 1d the weights are h/2 at the endpoints and h elsewhere; in 2d they
    are the tensor product of the 1d weights.  Points are ordered with the
    last axis varying fastest.

    Raises
    ------
    GridError
        If ``n_per_axis < 3`` (no interior point otherwise).
    """
    if n_per_axis < 3:
        raise GridError(f"need at least 3 points per axis, got {n_per_axis}")
    axes, axis_weights, axis_interior = [], [], []
    for a, b in domain.bounds:
        x = np.linspace(a, b, n_per_axis)
        h = (b - a) / (n_per_axis - 1)
        w = np.full(n_per_axis, h)
        w[0] = w[-1] = h / 2
        inner = np.ones(n_per_axis, dtype=bool)
        inner[0] = inner[-1] = False
        axes.append(x)
        axis_weights.append(w)
        axis_interior.append(inner)
    if domain.dim == 1:
        points = axes[0][:, None]
        weights = axis_weights[0]
        interior = axis_interior[0]
    else:
        x0, x1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        points = np.stack([x0.ravel(), x1.ravel()], axis=1)
        weights = np.outer(axis_weights[0], axis_weights[1]).ravel()
        interior = np.outer(axis_interior[0], axis_interior[1]).ravel()
    return CollocationSet(domain, points, weights, interior, n_per_axis)


def _as_values(field, cset: CollocationSet) -> np.ndarray:
    values = field.values if isinstance(field, GridField) else np.asarray(field, dtype=float)
    if values.shape != (cset.n_points,):
        raise ShapeError(
            f"field has shape {values.shape}, expected ({cset.n_points},)"
        )
    return values


def quadrature_sum(cset: CollocationSet, field) -> float:
    """Weighted sum over all collocation points: sum_y w_y g(y)."""
    values = _as_values(field, cset)
    return float(np.dot(cset.weights, values))


def l2_norm(cset: CollocationSet, field) -> float:
    """Discrete L2 norm sqrt(sum_y w_y g(y)^2)."""
    values = _as_values(field, cset)
    return float(np.sqrt(np.dot(cset.weights, values * values)))


def boundary_cutoff(domain: Domain, point) -> float:
    """Smooth function vanishing exactly on the domain boundary.

    Per-axis parabolic bumps, normalised so the maximum over the domain is
    one.  The product structure makes the value exactly zero whenever any
    coordinate sits exactly on its axis boundary.
    """
    point = np.atleast_1d(np.asarray(point, dtype=float))
    out = 1.0
    for i, (a, b) in enumerate(domain.bounds):
        half = (b - a) / 2
        out *= (point[i] - a) * (b - point[i]) / (half * half)
    return float(out)


@dataclass(frozen=True)
class CutoffJet:
    """Cutoff value with first and second derivatives at a batch of points.

    Attributes (n points, d axes): ``b`` (n,), ``grad`` (n, d), ``lap`` (n,).
    """

    b: np.ndarray
    grad: np.ndarray
    lap: np.ndarray


def cutoff_jet(domain: Domain, points: np.ndarray) -> CutoffJet:
    """Evaluate :func:`boundary_cutoff` with gradient and Laplacian.

    The cutoff is a product of per-axis quadratics g_i(x_i), so
    grad_i = g_i' * prod_{j != i} g_j and the second derivative along axis i
    is g_i'' * prod_{j != i} g_j with g_i'' constant.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    g = np.empty((n, d))
    g1 = np.empty((n, d))
    g2 = np.empty((n, d))
    for i, (a, b) in enumerate(domain.bounds):
        half = (b - a) / 2
        scale = 1.0 / (half * half)
        x = points[:, i]
        g[:, i] = (x - a) * (b - x) * scale
        g1[:, i] = (a + b - 2 * x) * scale
        g2[:, i] = -2.0 * scale
    value = np.prod(g, axis=1)
    grad = np.empty((n, d))
    lap = np.zeros(n)
    for i in range(d):
        others = np.prod(np.delete(g, i, axis=1), axis=1) if d > 1 else np.ones(n)
        grad[:, i] = g1[:, i] * others
        lap += g2[:, i] * others
    return CutoffJet(value, grad, lap)
