"""Tensor-product spline interpolation on rectilinear grids (degrees 1 and 3).

Cubic interpolation uses not-a-knot end conditions.  Every 1D interpolant
is a linear map from sample values to values at query points; the
interpolant in several dimensions applies these maps axis by axis.
"""
from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

DEGREES = (1, 3)


def _check_coords(x, q):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("coordinates must be one dimensional")
    if len(x) < q + 1:
        raise ConfigError(f"too few samples for interpolation degree {q}: {len(x)} < {q + 1}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("sample coordinates must be strictly increasing")
    return x


def notaknot_slope_matrix(x):
    """Matrix ``G`` mapping sample values to the node slopes of the not-a-knot cubic."""
    n = len(x)
    dx = np.diff(x)
    A = np.zeros((n, n))
    R = np.zeros((n, n))
    # secant slope s_k = (y_{k+1} - y_k) / dx_k as rows acting on y
    S = np.zeros((n - 1, n))
    S[np.arange(n - 1), np.arange(n - 1)] = -1.0 / dx
    S[np.arange(n - 1), np.arange(1, n)] = 1.0 / dx
    for i in range(1, n - 1):
        A[i, i - 1] = dx[i]
        A[i, i] = 2.0 * (dx[i - 1] + dx[i])
        A[i, i + 1] = dx[i - 1]
        R[i] = 3.0 * (dx[i] * S[i - 1] + dx[i - 1] * S[i])
    # third derivative continuous across the first and last interior node
    d = x[2] - x[0]
    A[0, 0], A[0, 1] = dx[1], d
    R[0] = ((dx[0] + 2.0 * d) * dx[1] * S[0] + dx[0] ** 2 * S[1]) / d
    d = x[-1] - x[-3]
    A[-1, -2], A[-1, -1] = d, dx[-2]
    R[-1] = (dx[-1] ** 2 * S[-2] + (2.0 * d + dx[-1]) * dx[-2] * S[-1]) / d
    return np.linalg.solve(A, R)


def _locate(x, t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < x[0]) or np.any(t > x[-1]):
        raise ValueError("interpolation query outside the sample range (extrapolation is not allowed)")
    k = np.clip(np.searchsorted(x, t, side="right") - 1, 0, len(x) - 2)
    return k, t


def cardinal_matrix(x, t, q, slopes=None):
    """Matrix ``E`` with ``E @ y`` = degree-`q` interpolant of ``(x, y)`` at `t`.

    A query equal to a node reproduces that node's value exactly.
    """
    x = _check_coords(x, q)
    k, t = _locate(x, t)
    nq, n = t.size, len(x)
    rows = np.arange(nq)
    h = x[k + 1] - x[k]
    s = (t - x[k]) / h
    E = np.zeros((nq, n))
    if q == 1:
        E[rows, k] += 1.0 - s
        E[rows, k + 1] += s
        return E
    if q != 3:
        raise ConfigError(f"interpolation degree must be one of {DEGREES}, got {q}")
    G = notaknot_slope_matrix(x) if slopes is None else slopes
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    E[rows, k] += h00
    E[rows, k + 1] += h01
    E += (h * h10)[:, None] * G[k] + (h * h11)[:, None] * G[k + 1]
    return E


@dataclass(frozen=True, eq=False)
class GridInterpolant:
    """Degree-`q` tensor spline through ``values`` on the grid ``coords``."""

    coords: tuple
    values: np.ndarray
    q: int
    slopes: tuple = field(default=(), repr=False)

    @property
    def dim(self):
        return len(self.coords)

    def axis_matrices(self, axis_points):
        return [cardinal_matrix(x, t, self.q, G if self.q == 3 else None)
                for x, t, G in zip(self.coords, axis_points, self._slopes())]

    def _slopes(self):
        return self.slopes if self.slopes else (None,) * self.dim

    def evaluate(self, points):
        """Values at scattered points of shape ``(P, dim)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim:
            raise ValueError(f"expected points with {self.dim} coordinates")
        mats = self.axis_matrices([pts[:, d] for d in range(self.dim)])
        letters = string.ascii_lowercase[: self.dim]
        spec = ",".join(f"p{c}" for c in letters) + f",{letters}->p"
        return np.einsum(spec, *mats, self.values)

    def evaluate_grid(self, axis_points):
        """Values on the tensor grid ``axis_points[0] x axis_points[1] x ...``."""
        return apply_axis_matrices(self.values, self.axis_matrices(axis_points))


def apply_axis_matrices(values, mats):
    """Apply one 1D linear map per axis of a value grid."""
    out = values
    for axis, E in enumerate(mats):
        out = np.moveaxis(np.tensordot(E, out, axes=(1, axis)), 0, axis)
    return out


def build_interpolant(coords, values, q):
    if q not in DEGREES:
        raise ConfigError(f"interpolation degree must be one of {DEGREES}, got {q}")
    coords = tuple(_check_coords(c, q) for c in coords)
    values = np.asarray(values, dtype=float)
    if values.shape != tuple(len(c) for c in coords):
        raise ValueError("value grid does not match the coordinate vectors")
    slopes = tuple(notaknot_slope_matrix(c) for c in coords) if q == 3 else ()
    return GridInterpolant(coords, values, q, slopes)


def evaluate(interp, points):
    return interp.evaluate(points)
