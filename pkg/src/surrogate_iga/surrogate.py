"""Surrogate stiffness matrices from sampled and interpolated stencil functions.

Quadrature is performed only on the *active* elements: those near the
boundary and the small element patches supporting the sampled rows of the
interior lattice.  For every positive dof offset the sampled matrix entries
are interpolated over the lattice; entries coupling two lattice dofs are
replaced by the interpolated values (mirrored to keep the matrix symmetric),
all remaining off-diagonal entries come from quadrature, and each diagonal
entry is set to minus its off-diagonal row sum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import ElementMask, OffsetMatrix, assemble_offsets, offset_index, offset_table
from .errors import ConfigError
from .interpolation import DEGREES, apply_axis_matrices, build_interpolant, cardinal_matrix
from .splines import interior_lattice


@dataclass(frozen=True)
class SurrogateConfig:
    skip: int = 10
    q: int = 3

    def __post_init__(self):
        if int(self.skip) != self.skip or self.skip < 1:
            raise ConfigError(f"skip parameter M must be a positive integer, got {self.skip}")
        if self.q not in DEGREES:
            raise ConfigError(f"interpolation degree q must be one of {DEGREES}, got {self.q}")

    def sampling_length(self, h):
        return self.skip * h


@dataclass(frozen=True, eq=False)
class ShiftIndex:
    """Dof offset ``delta`` in {-p..p}^dim and its flat shift in the dof numbering."""

    delta: tuple
    shift: int


def shift_indices(space):
    deltas, shifts = offset_table(space.dim, space.degree, space.kv.n_basis)
    return [ShiftIndex(tuple(int(v) for v in d), int(s)) for d, s in zip(deltas, shifts)]


@dataclass(frozen=True, eq=False)
class StencilSampleGrid:
    """Samples of one stencil function on the ``S x S (x S)`` subgrid of the lattice."""

    delta: tuple
    indices: np.ndarray   # S, lattice indices per direction
    coords: np.ndarray    # S / (L - 1)
    values: np.ndarray    # shape (len(S),) * dim


def count_interpolated_stencils(p, n):
    return ((2 * p + 1) ** n - 1) // 2


# ---------------------------------------------------------------------------
# Element masks (0-based)

def boundary_mask(p, nel):
    """Near-boundary elements: the first and last ``2p`` elements in a direction."""
    if nel <= 4 * p:
        raise ConfigError(f"surrogate assembly needs nel > 4p: nel={nel}, p={p}")
    return np.concatenate([np.arange(2 * p), np.arange(nel - 2 * p, nel)])


def interior_mask(p, skip, nel):
    """Boundary elements together with the ``p+1``-element patches under each sampled row."""
    B = boundary_mask(p, nel)
    if skip < 1:
        raise ConfigError("skip parameter M must be >= 1")
    K = nel - 3 * p - 1
    starts = list(range(0, K // skip * skip + 1, skip)) + [K]
    patches = [np.arange(k + p, k + 2 * p + 1) for k in starts]
    return np.union1d(np.concatenate(patches), B)


def active_element_mask(p, skip, nel):
    return ElementMask(nel, boundary_mask(p, nel), interior_mask(p, skip, nel))


def sample_indices(L, skip, q=None):
    if L < 2:
        raise ConfigError("lattice needs at least two points per direction")
    S = np.union1d(np.arange(0, L, skip), [L - 1])
    if q is not None and len(S) < q + 1:
        raise ConfigError(
            f"too few samples for interpolation degree {q}: {len(S)} samples per direction "
            f"(lattice size {L}, skip {skip})")
    return S


def active_row_subset(lattice, S, p=None, nel=None, first_layer_only=False):
    """Flat dof indices of the sample rows (a grid of shape ``(len(S),) * dim``).

    With `first_layer_only`, only rows with flat index below ``(2p+1)(nel+p)``
    are kept (returned flattened): enough to read off the column mask.
    """
    rows = lattice.rows(S)
    if first_layer_only:
        flat = rows.ravel(order="F")
        return flat[flat < (2 * p + 1) * (nel + p)]
    return rows


def support_elements(space, rows):
    """Elements in the support of the given dofs (brute force, sorted multi-indices)."""
    multi = space.multi_index(np.asarray(rows).ravel())
    p = space.degree
    local = np.stack(np.meshgrid(*([np.arange(-p, 1)] * space.dim), indexing="ij"),
                     axis=-1).reshape(-1, space.dim)
    elems = (multi[:, None, :] + local[None, :, :]).reshape(-1, space.dim)
    elems = elems[np.all((elems >= 0) & (elems < space.nel), axis=1)]
    return np.unique(elems, axis=0)


# ---------------------------------------------------------------------------
# Stencil sampling and interpolation

def _grid_of(lattice, S):
    return S / (lattice.size - 1)


def extract_stencil_samples(A_partial, delta, lattice, S):
    """Read ``A[i, i + shift(delta)]`` at every sample row ``i``.

    `A_partial` may be a sparse matrix or an :class:`OffsetMatrix`.
    """
    space = lattice.space
    delta = np.asarray(delta)
    if delta.shape != (space.dim,) or np.any(np.abs(delta) > space.degree):
        raise ValueError(f"offset {tuple(delta)} outside {{-p..p}}^{space.dim}")
    rows = lattice.rows(S)
    shift = int(delta @ np.asarray(space.strides))
    # lattice dofs keep a 2p layer to the boundary, so i + delta stays on the grid
    assert lattice.offset - space.degree >= 0
    if isinstance(A_partial, OffsetMatrix):
        vals = A_partial.values[rows, offset_index(delta, space.degree)]
    else:
        A = sp.csr_matrix(A_partial)
        vals = np.asarray(A[rows.ravel(), rows.ravel() + shift]).reshape(rows.shape)
    return StencilSampleGrid(tuple(int(v) for v in delta), np.asarray(S), _grid_of(lattice, S),
                             vals)


def interpolate_stencil(samples, q, L):
    """Evaluate the degree-`q` interpolant of a sample grid on the full ``L**dim`` lattice."""
    coords = (samples.coords,) * samples.values.ndim
    interp = build_interpolant(coords, samples.values, q)
    t = np.arange(L) / (L - 1)
    return interp.evaluate_grid((t,) * samples.values.ndim)


# ---------------------------------------------------------------------------
# Assembly

@dataclass(eq=False)
class SurrogateParts:
    """Intermediate results of a surrogate assembly, kept for inspection."""

    partial: OffsetMatrix
    surrogate: OffsetMatrix
    mask: ElementMask
    samples: np.ndarray

    def n_active(self):
        return self.mask.count(self.partial.dim)


def assemble_surrogate_parts(space, geometry, cfg, m=None, threads=1):
    p, nel, dim = space.degree, space.nel, space.dim
    lattice = interior_lattice(space)
    L = lattice.size
    S = sample_indices(L, cfg.skip, cfg.q)
    mask = active_element_mask(p, cfg.skip, nel)
    partial = assemble_offsets(space, geometry, m, mask, threads)

    V = partial.values.copy()
    deltas = partial.deltas
    diag = partial.diag_index
    rows_all = lattice.rows()
    # the same 1D interpolation operator serves every stencil and direction
    E = cardinal_matrix(_grid_of(lattice, S), lattice.coords, cfg.q)
    sample_rows = lattice.rows(S)
    for k in range(diag + 1, len(deltas)):
        delta = deltas[k]
        full = apply_axis_matrices(partial.values[sample_rows, k], [E] * dim)
        # only pairs whose target is also a lattice dof are replaced
        src = tuple(slice(max(0, -d), L - max(0, d)) for d in delta)
        rows = rows_all[src].ravel()
        vals = full[src].ravel()
        V[rows, k] = vals
        V[rows + partial.shifts[k], 2 * diag - k] = vals
    V[:, diag] = 0.0
    V[:, diag] = -V.sum(axis=1)
    sur = OffsetMatrix(dim, p, partial.n1d, V)
    return SurrogateParts(partial, sur, mask, S)


def assemble_surrogate(space, geometry, cfg=None, m=None, threads=1):
    """Surrogate stiffness matrix (CSR)."""
    cfg = SurrogateConfig() if cfg is None else cfg
    return assemble_surrogate_parts(space, geometry, cfg, m, threads).surrogate.to_csr()
