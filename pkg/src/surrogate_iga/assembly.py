"""Galerkin stiffness assembly for the pulled-back Poisson operator.

Element contributions are accumulated in *offset form*: a dense array
``values[i, k]`` holding the entry ``A[i, i + shift_k]`` for each of the
``(2p+1)**dim`` dof offsets a tensor B-spline couples to.  The offset form is
finalized into CSR once at the end.  Elements are visited column by column
(first direction outermost), optionally skipping inactive elements given by
an :class:`ElementMask`.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .geometry import det_and_pullback
from .quadrature import gauss_rule, tensor_rule
from .splines import basis_funs

# target number of (element, quad point, basis function, direction) values per batch
BATCH_BUDGET = 2 ** 21


@dataclass(frozen=True, eq=False)
class ElementMask:
    """Active elements for masked quadrature.

    An element is active when any of its indices lies in ``boundary`` or all
    of its indices lie in ``interior``.  Both are sorted 0-based index sets
    shared by all directions.  In a column sweep over the first direction a
    column ``e`` is fully active for ``e`` in ``boundary``; other columns
    reuse the same rule on the remaining directions.
    """

    nel: int
    boundary: np.ndarray
    interior: np.ndarray

    def __post_init__(self):
        for name in ("boundary", "interior"):
            idx = np.unique(np.asarray(getattr(self, name), dtype=np.int64))
            if idx.size and (idx[0] < 0 or idx[-1] >= self.nel):
                raise ValueError(f"{name} mask indices out of range [0, {self.nel})")
            object.__setattr__(self, name, idx)
        object.__setattr__(self, "interior", np.union1d(self.interior, self.boundary))

    @classmethod
    def full(cls, nel):
        return cls(nel, np.arange(nel), np.arange(nel))

    @cached_property
    def _in_boundary(self):
        flags = np.zeros(self.nel, dtype=bool)
        flags[self.boundary] = True
        return flags

    @cached_property
    def _in_interior(self):
        flags = np.zeros(self.nel, dtype=bool)
        flags[self.interior] = True
        return flags

    def is_active(self, elements):
        elements = np.asarray(elements)
        return (np.any(self._in_boundary[elements], axis=-1)
                | np.all(self._in_interior[elements], axis=-1))

    def column(self, e, dim):
        """Active elements (full multi-indices) in column `e` of the first direction."""
        rest = _grid(self.nel, dim - 1)
        if dim > 1 and not self._in_boundary[e]:
            sub = np.any(self._in_boundary[rest], axis=-1)
            if self._in_interior[e]:
                sub |= np.all(self._in_interior[rest], axis=-1)
            rest = rest[sub]
        return np.column_stack([np.full(len(rest), e), rest])

    def count(self, dim):
        return sum(len(self.column(e, dim)) for e in range(self.nel))


@lru_cache(maxsize=32)
def _grid(nel, dim):
    """All multi-indices in ``[0, nel)^dim``, first direction fastest."""
    if dim == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.meshgrid(*([np.arange(nel)] * dim), indexing="ij")
    return np.stack([g.ravel(order="F") for g in grids], axis=-1)


def element_columns(space, mask=None):
    """Yield the element multi-indices of each first-direction column in order."""
    for e in range(space.nel):
        if mask is None:
            rest = _grid(space.nel, space.dim - 1)
            yield np.column_stack([np.full(len(rest), e), rest])
        else:
            yield mask.column(e, space.dim)


def element_batches(space, batch_size, mask=None):
    """Group consecutive columns into batches of about `batch_size` elements.

    Batch boundaries depend only on the space, never on the mask, so every
    matrix entry is summed in the same order with and without a mask.
    """
    per_batch = max(1, batch_size // space.nel ** (space.dim - 1))
    pending = []
    for e, col in enumerate(element_columns(space, mask)):
        if len(col):
            pending.append(col)
        if (e + 1) % per_batch == 0 or e + 1 == space.nel:
            if pending:
                yield np.concatenate(pending)
            pending = []


# ---------------------------------------------------------------------------
# Offsets

@lru_cache(maxsize=16)
def offset_table(dim, p, n1d):
    """Dof offsets coupled by degree-`p` tensor B-splines.

    Returns ``(deltas, shifts)``: the ``(2p+1)**dim`` offset vectors in
    {-p..p}^dim ordered so that the flat shifts ``deltas @ strides`` increase.
    """
    rng = np.arange(-p, p + 1)
    grids = np.meshgrid(*([rng] * dim), indexing="ij")
    deltas = np.stack([g.ravel(order="F") for g in grids], axis=-1)
    strides = n1d ** np.arange(dim)
    return deltas, deltas @ strides


def offset_index(delta, p):
    """Position of the offset vector(s) `delta` in :func:`offset_table`."""
    delta = np.asarray(delta) + p
    return np.ravel_multi_index(tuple(np.moveaxis(delta, -1, 0)), (2 * p + 1,) * delta.shape[-1],
                                order="F")


@lru_cache(maxsize=16)
def _local_layout(dim, p, n1d):
    """Local basis offsets, local flat dofs, and local (a, b) -> offset index table."""
    loc = _grid(p + 1, dim)
    strides = n1d ** np.arange(dim)
    local_flat = loc @ strides
    pair_delta = loc[None, :, :] - loc[:, None, :]
    return loc, local_flat, offset_index(pair_delta, p)


@lru_cache(maxsize=16)
def _valid_offsets(dim, p, n1d):
    deltas, _ = offset_table(dim, p, n1d)
    multi = _grid(n1d, dim)
    tgt = multi[:, None, :] + deltas[None, :, :]
    return np.all((tgt >= 0) & (tgt < n1d), axis=-1)


@dataclass(eq=False)
class OffsetMatrix:
    """Symmetric banded matrix on a tensor dof grid in offset form.

    ``values[i, k] = A[i, i + shifts[k]]``; entries pointing outside the dof
    grid are always zero.
    """

    dim: int
    p: int
    n1d: int
    values: np.ndarray

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def deltas(self):
        return offset_table(self.dim, self.p, self.n1d)[0]

    @property
    def shifts(self):
        return offset_table(self.dim, self.p, self.n1d)[1]

    @property
    def valid(self):
        return _valid_offsets(self.dim, self.p, self.n1d)

    @property
    def diag_index(self):
        return (len(self.shifts) - 1) // 2

    def to_csr(self):
        valid = self.valid
        cols = np.arange(self.n)[:, None] + self.shifts[None, :]
        indptr = np.concatenate([[0], np.cumsum(valid.sum(axis=1))])
        return sp.csr_matrix((self.values[valid], cols[valid], indptr), shape=(self.n, self.n))


# ---------------------------------------------------------------------------
# Element tabulation

@dataclass(eq=False)
class ElementValues:
    """Quadrature data for a batch of ``E`` elements with ``Q`` points and ``A`` basis functions."""

    elements: np.ndarray   # (E, dim)
    dofs: np.ndarray       # (E, A) flat global dofs
    phi: np.ndarray        # (E, A, Q)
    grad: np.ndarray       # (E, A, Q, dim), reference gradients
    x: np.ndarray          # (E, Q, dim), physical points
    jac: np.ndarray        # (E, Q, dim, dim)
    weights: np.ndarray    # (E, Q), reference weights incl. element measure


def _outer(factors, dim):
    """Tensor product of per-direction ``(E, m, k)`` tables -> ``(E, k**dim, m**dim)``.

    Both the basis and the quadrature index run first-direction fastest.
    """
    E, m, k = factors[0].shape
    out = np.ones((E,) + (1,) * (2 * dim))
    for d, f in enumerate(factors):
        shape = [E] + [1] * (2 * dim)
        shape[dim - d] = k
        shape[2 * dim - d] = m
        out = out * f.transpose(0, 2, 1).reshape(shape)
    return out.reshape(E, k ** dim, m ** dim)


class Tabulation:
    """Basis and geometry data at the Gauss points of every element.

    Basis tables are univariate (``nel * m`` points per direction) and are
    multiplied out per element batch.  The geometry is evaluated on the
    tensor grid of one first-direction column at a time.
    """

    def __init__(self, space, geometry, m):
        if geometry.dim != space.dim:
            raise ValueError("geometry and space dimensions differ")
        self.space, self.geometry = space, geometry
        self.dim, self.p, self.nel = space.dim, space.degree, space.nel
        self.rule = gauss_rule(m)
        self.m = m
        h = space.kv.h
        self.t = ((np.arange(self.nel)[:, None] + self.rule.nodes[None, :]) * h).ravel()
        elem = np.repeat(np.arange(self.nel), m)
        _, vals, ders = basis_funs(space.kv.knots, self.p, self.t, elem + self.p)
        self.vals = vals.reshape(self.nel, m, self.p + 1)
        self.ders = ders.reshape(self.nel, m, self.p + 1)
        _, wref = tensor_rule(self.rule, self.dim)
        self.wref = wref * h ** self.dim
        n1d = space.kv.n_basis
        self.strides = n1d ** np.arange(self.dim)
        _, self.local_flat, self.local_offset = _local_layout(self.dim, self.p, n1d)
        self.qloc = _grid(m, self.dim)
        self.geo_mats = [geometry.basis_matrices(d, self.t) for d in range(self.dim)]

    def batch_size(self):
        per_elem = self.m ** self.dim * (self.p + 1) ** self.dim * self.dim
        return max(1, BATCH_BUDGET // per_elem)

    def block_geometry(self, elements):
        """Geometry at the Gauss points of `elements`.

        The map is evaluated on the tensor grid spanned by the element indices
        used in each direction, so `elements` should form (nearly) a tensor
        block.
        """
        m, dim = self.m, self.dim
        local = np.arange(m)
        mats, pos = [], []
        for d in range(dim):
            used = np.unique(elements[:, d])
            rows = (used[:, None] * m + local[None, :]).ravel()
            mats.append((self.geo_mats[d][0][rows], self.geo_mats[d][1][rows]))
            pos.append(np.searchsorted(used, elements[:, d])[:, None] * m + self.qloc[None, :, d])
        xg, jg = self.geometry.evaluate_tensor(mats)
        return xg[tuple(pos)], jg[tuple(pos)]

    def evaluate(self, elements):
        elements = np.asarray(elements, dtype=np.int64).reshape(-1, self.dim)
        E, dim = len(elements), self.dim
        Q = self.qloc.shape[0]
        vals = [self.vals[elements[:, d]] for d in range(dim)]
        ders = [self.ders[elements[:, d]] for d in range(dim)]
        phi = _outer(vals, dim)
        grad = np.empty(phi.shape + (dim,))
        for k in range(dim):
            grad[..., k] = _outer([ders[d] if d == k else vals[d] for d in range(dim)], dim)
        x = np.empty((E, Q, dim))
        jac = np.empty((E, Q, dim, dim))
        # columns sharing the same active pattern form one tensor block
        groups = {}
        for e0 in np.unique(elements[:, 0]):
            sel = np.flatnonzero(elements[:, 0] == e0)
            key = elements[sel, 1:].tobytes()
            groups.setdefault(key, []).append(sel)
        for sels in groups.values():
            sel = np.concatenate(sels)
            x[sel], jac[sel] = self.block_geometry(elements[sel])
        dofs = (elements @ self.strides)[:, None] + self.local_flat[None, :]
        return ElementValues(elements, dofs, phi, grad, x, jac, np.broadcast_to(self.wref, (E, Q)))


def stiffness_kernel(ev):
    """Local stiffness matrices ``(E, A, A)`` of a tabulated batch (exactly symmetric)."""
    E, A, Q, dim = ev.grad.shape
    _, K = det_and_pullback(ev.jac)
    Kw = K * ev.weights[..., None, None]
    T = ev.grad[..., 0, None] * Kw[:, None, :, :, 0]
    for j in range(1, dim):
        T += ev.grad[..., j, None] * Kw[:, None, :, :, j]
    local = np.matmul(ev.grad.reshape(E, A, Q * dim), T.reshape(E, A, Q * dim).transpose(0, 2, 1))
    return 0.5 * (local + local.transpose(0, 2, 1))


def local_stiffness(element, space, geometry, m=None):
    """Dense local stiffness matrix of one element and its global dof indices."""
    m = space.degree + 1 if m is None else m
    element = np.asarray(element)
    if element.shape != (space.dim,) or np.any(element < 0) or np.any(element >= space.nel):
        raise ValueError(f"invalid element index {tuple(element)}")
    tab = Tabulation(space, geometry, m)
    ev = tab.evaluate(element[None, :])
    return stiffness_kernel(ev)[0], ev.dofs[0]


def assemble_offsets(space, geometry, m=None, mask=None, threads=1):
    """Stiffness matrix in offset form, quadrature restricted to active elements of `mask`."""
    m = space.degree + 1 if m is None else m
    tab = Tabulation(space, geometry, m)
    n1d = space.kv.n_basis
    D = (2 * space.degree + 1) ** space.dim
    N = space.n_dofs
    batches = element_batches(space, tab.batch_size(), mask)

    def work(elements):
        ev = tab.evaluate(elements)
        local = stiffness_kernel(ev)
        flat = (ev.dofs[:, :, None] * D + tab.local_offset[None, :, :]).ravel()
        return flat, local.ravel()

    acc = np.zeros(N * D)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = pool.map(work, batches)
            for flat, vals in results:
                acc += np.bincount(flat, vals, minlength=N * D)
    else:
        for elements in batches:
            flat, vals = work(elements)
            acc += np.bincount(flat, vals, minlength=N * D)
    return OffsetMatrix(space.dim, space.degree, n1d, acc.reshape(N, D))


def assemble_stiffness(space, geometry, m=None, mask=None, threads=1):
    """Sparse stiffness matrix (CSR); with a `mask`, quadrature only on active elements."""
    return assemble_offsets(space, geometry, m, mask, threads).to_csr()


# ---------------------------------------------------------------------------
# Matrix Market

def write_matrix_market(A, path, symmetric=False):
    """Write a sparse matrix in Matrix Market coordinate format with 17 significant digits."""
    A = sp.coo_matrix(A)
    if symmetric:
        keep = A.row >= A.col
        rows, cols, vals = A.row[keep], A.col[keep], A.data[keep]
        kind = "symmetric"
    else:
        rows, cols, vals = A.row, A.col, A.data
        kind = "general"
    order = np.lexsort((rows, cols))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {len(vals)}\n")
        for r, c, v in zip(rows[order], cols[order], vals[order]):
            fh.write(f"{r + 1} {c + 1} {v:.17g}\n")


def read_matrix_market(path):
    import scipy.io
    return sp.csr_matrix(scipy.io.mmread(path))
