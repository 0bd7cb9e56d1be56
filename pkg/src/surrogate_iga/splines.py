"""Univariate and tensor-product B-spline spaces.

All indices are 0-based.  The analysis space always uses open uniform knot
vectors on [0, 1] with the same degree and element count in every direction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError


def find_span(knots, p, x):
    """Knot span index ``s`` with ``knots[s] <= x < knots[s+1]`` (vectorized).

    The right end point of the parameter domain is assigned to the last
    non-empty span.
    """
    knots = np.asarray(knots, dtype=float)
    nb = len(knots) - p - 1
    span = np.searchsorted(knots, x, side="right") - 1
    return np.clip(span, p, nb - 1)


def basis_funs(knots, p, x, span=None):
    """Nonzero B-spline values and first derivatives at the points `x`.

    Parameters
    ----------
    knots : array_like
        Full (open) knot sequence.
    p : int
        Spline degree.
    x : array_like
        Evaluation points, shape ``(P,)``.
    span : array_like, optional
        Precomputed knot spans; computed with :func:`find_span` if omitted.

    Returns
    -------
    span : ndarray of int, shape (P,)
    vals : ndarray, shape (P, p+1)
        ``vals[:, r]`` is the value of basis function ``span - p + r``.
    ders : ndarray, shape (P, p+1)
        First derivatives, same layout.
    """
    knots = np.asarray(knots, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if span is None:
        span = find_span(knots, p, x)
    span = np.asarray(span)

    def _ratio(num, den):
        out = np.zeros_like(num)
        nz = den != 0
        out[nz] = num[nz] / den[nz]
        return out

    # N[r] holds N_{span-k+r, k}; degree raised one step at a time
    N = np.ones((1, x.size))
    prev = N
    for k in range(1, p + 1):
        new = np.zeros((k + 1, x.size))
        for r in range(k + 1):
            i = span - k + r
            if r >= 1:
                left = _ratio(x - knots[i], knots[i + k] - knots[i])
                new[r] += left * N[r - 1]
            if r < k:
                right = _ratio(knots[i + k + 1] - x, knots[i + k + 1] - knots[i + 1])
                new[r] += right * N[r]
        prev, N = N, new

    ders = np.zeros_like(N)
    if p >= 1:
        for r in range(p + 1):
            i = span - p + r
            if r >= 1:
                ders[r] += p * _ratio(prev[r - 1], knots[i + p] - knots[i])
            if r < p:
                ders[r] -= p * _ratio(prev[r], knots[i + p + 1] - knots[i + 1])
    return span, N.T.copy(), ders.T.copy()


@dataclass(frozen=True)
class KnotVector:
    """Open uniform knot vector of degree `degree` with `nel` elements on [0, 1]."""

    degree: int
    nel: int

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ConfigError(f"spline degree must be >= 1, got {self.degree}")
        if int(self.nel) != self.nel or self.nel < 1:
            raise ConfigError(f"number of elements must be >= 1, got {self.nel}")

    @classmethod
    def from_knots(cls, knots, p):
        """Build from an explicit knot sequence; only open uniform ones are accepted."""
        knots = np.asarray(knots, dtype=float)
        inner = knots[p:len(knots) - p]
        nel = len(inner) - 1
        if nel < 1:
            raise ConfigError("knot vector has no elements")
        kv = cls(p, nel)
        if len(knots) != len(kv.knots) or np.any(knots != kv.knots):
            raise ConfigError("only open uniform knot vectors on [0, 1] are supported")
        return kv

    @property
    def h(self):
        return 1.0 / self.nel

    @property
    def n_basis(self):
        return self.nel + self.degree

    @cached_property
    def breakpoints(self):
        return np.arange(self.nel + 1) / self.nel

    @cached_property
    def knots(self):
        p = self.degree
        return np.concatenate([np.zeros(p), self.breakpoints, np.ones(p)])


def make_open_uniform_knots(p, nel):
    return KnotVector(p, nel)


def eval_basis(kv, x):
    """Evaluate the ``p+1`` nonzero basis functions of `kv` and their derivatives.

    Returns ``(element, values, derivatives)``.  `element` is the 0-based
    element containing `x`; the nonzero functions are ``element, ...,
    element + p``.  Scalar `x` gives 1D outputs, array `x` stacked outputs.
    """
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(~np.isfinite(xa)) or np.any(xa < 0.0) or np.any(xa > 1.0):
        raise ValueError("evaluation point outside [0, 1]")
    span, vals, ders = basis_funs(kv.knots, kv.degree, xa)
    elem = span - kv.degree
    if scalar:
        return int(elem[0]), vals[0], ders[0]
    return elem, vals, ders


@dataclass(frozen=True)
class TensorSpace:
    """Tensor-product spline space with identical knot vectors in all directions.

    Dofs are numbered lexicographically with the first direction running
    fastest.
    """

    dim: int
    kv: KnotVector

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigError(f"dimension must be 1, 2 or 3, got {self.dim}")

    @property
    def degree(self):
        return self.kv.degree

    @property
    def nel(self):
        return self.kv.nel

    @property
    def shape(self):
        return (self.kv.n_basis,) * self.dim

    @property
    def n_dofs(self):
        return self.kv.n_basis ** self.dim

    @property
    def strides(self):
        return tuple(self.kv.n_basis ** d for d in range(self.dim))

    def flat_index(self, multi):
        """Flat dof index of a multi-index array with last axis of length `dim`."""
        multi = np.asarray(multi)
        return np.ravel_multi_index(tuple(np.moveaxis(multi, -1, 0)), self.shape, order="F")

    def multi_index(self, flat):
        return np.stack(np.unravel_index(flat, self.shape, order="F"), axis=-1)


def tensor_space(dim, p, nel):
    return TensorSpace(dim, KnotVector(p, nel))


@dataclass(frozen=True)
class InteriorLattice:
    """Dofs far enough from the boundary to carry stencil functions.

    ``indices`` are the per-direction dof indices ``2p, ..., nel + p - 1 - 2p``
    and ``coords`` their uniform parameterization of [0, 1].
    """

    space: TensorSpace

    @property
    def size(self):
        return self.space.nel - 3 * self.space.degree

    @property
    def offset(self):
        return 2 * self.space.degree

    @cached_property
    def indices(self):
        return np.arange(self.offset, self.offset + self.size)

    @cached_property
    def coords(self):
        return np.arange(self.size) / (self.size - 1)

    def rows(self, sub=None):
        """Flat dof indices of the lattice points selected by `sub` in each direction.

        The result is a grid of shape ``(len(sub),) * dim`` indexed in
        direction order.
        """
        sub = np.arange(self.size) if sub is None else np.asarray(sub)
        grids = np.meshgrid(*([sub + self.offset] * self.space.dim), indexing="ij")
        return self.space.flat_index(np.stack(grids, axis=-1))


def interior_lattice(space):
    p, nel = space.degree, space.nel
    if nel <= 3 * p + 1:
        raise ConfigError(
            f"mesh too coarse for surrogate: nel={nel} must exceed 3p+1={3 * p + 1}"
        )
    return InteriorLattice(space)
