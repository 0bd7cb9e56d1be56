"""Dirichlet problems, linear solves and error measurement for the Poisson problem."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import Tabulation, _grid, _outer, element_batches
from .errors import ConfigError, ConvergenceError
from .geometry import _adjugate, _det
from .interpolation import apply_axis_matrices
from .quadrature import gauss_rule, tensor_rule
from .splines import basis_funs


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    """Exact solution ``u`` with gradient and load ``f = -laplace(u)``.

    All callables take physical points of shape ``(P, dim)``.
    """

    dim: int
    u: Callable
    grad_u: Callable
    f: Callable
    name: str = "custom"

    def g(self, x):
        return self.u(x)


def _sine_product(dim, freq, name):
    k = freq * math.pi

    def u(x):
        return np.prod(np.sin(k * x), axis=-1)

    def grad_u(x):
        s, c = np.sin(k * x), np.cos(k * x)
        out = np.empty_like(x)
        for d in range(dim):
            out[:, d] = k * c[:, d] * np.prod(np.delete(s, d, axis=1), axis=1)
        return out

    def f(x):
        return dim * k * k * u(x)

    return ManufacturedCase(dim, u, grad_u, f, name)


def oscillatory_case(dim):
    """``u = prod_d sin(20 pi x_d)``, so ``f = dim * 400 pi^2 u``."""
    return _sine_product(dim, 20, "oscillatory")


def smooth_case(dim):
    """``u = prod_d sin(pi x_d)``, so ``f = dim * pi^2 u``."""
    return _sine_product(dim, 1, "smooth")


CASES = {"oscillatory": oscillatory_case, "smooth": smooth_case}


def manufactured_case(name, dim):
    try:
        return CASES[name](dim)
    except KeyError:
        raise ConfigError(f"unknown manufactured solution {name!r}; choose from {', '.join(CASES)}")


def _batches(tab):
    return element_batches(tab.space, tab.batch_size())


def assemble_load(space, geometry, f, m=None):
    """Load vector ``b_i = int f(phi(xhat)) N_i(xhat) |det Dphi| dxhat``."""
    m = space.degree + 1 if m is None else m
    tab = Tabulation(space, geometry, m)
    b = np.zeros(space.n_dofs)
    for elements in _batches(tab):
        ev = tab.evaluate(elements)
        E, Q, dim = ev.x.shape
        fx = np.asarray(f(ev.x.reshape(-1, dim)), dtype=float).reshape(E, Q)
        dx = np.abs(_det(ev.jac)) * ev.weights
        local = np.einsum("eaq,eq->ea", ev.phi, fx * dx)
        b += np.bincount(ev.dofs.ravel(), local.ravel(), minlength=space.n_dofs)
    return b


# ---------------------------------------------------------------------------
# Dirichlet boundary

def boundary_faces(dim):
    return [(d, side) for d in range(dim) for side in (0, 1)]


def face_dofs(space, d, side):
    n1d = space.kv.n_basis
    rest = _grid(n1d, space.dim - 1)
    multi = np.insert(rest, d, 0 if side == 0 else n1d - 1, axis=1)
    return space.flat_index(multi)


def boundary_dofs(space):
    return np.unique(np.concatenate([face_dofs(space, d, s) for d, s in boundary_faces(space.dim)]))


def _face_system(space, geometry, g, d, side, m):
    """Boundary mass matrix and right-hand side contributions of one face (COO pieces)."""
    dim, p, nel = space.dim, space.degree, space.nel
    n1d = space.kv.n_basis
    others = [k for k in range(dim) if k != d]
    rule = gauss_rule(m)
    t = ((np.arange(nel)[:, None] + rule.nodes[None, :]) * space.kv.h).ravel()
    _, vals, _ = basis_funs(space.kv.knots, p, t, np.repeat(np.arange(nel), m) + p)
    vals = vals.reshape(nel, m, p + 1)
    axes = [np.array([float(side)]) if k == d else t for k in range(dim)]
    xg, jg = geometry.evaluate_grid(axes)
    xg, jg = xg.take(0, axis=d), jg.take(0, axis=d)
    tangents = [jg[..., :, k] for k in others]
    if dim == 2:
        ds = np.linalg.norm(tangents[0], axis=-1)
    else:
        ds = np.linalg.norm(np.cross(tangents[0], tangents[1]), axis=-1)

    elems = _grid(nel, dim - 1)
    qloc = _grid(m, dim - 1)
    _, wref = tensor_rule(rule, dim - 1)
    phi = _outer([vals[elems[:, j]] for j in range(dim - 1)], dim - 1)   # (E, A, Q)
    pos = tuple(elems[:, j][:, None] * m + qloc[None, :, j] for j in range(dim - 1))
    x = xg[pos]
    w = wref[None, :] * space.kv.h ** (dim - 1) * ds[pos]
    E, Q = w.shape
    gx = np.asarray(g(x.reshape(-1, dim)), dtype=float).reshape(E, Q)

    aloc = _grid(p + 1, dim - 1)
    multi = elems[:, None, :] + aloc[None, :, :]
    multi = np.insert(multi, d, 0 if side == 0 else n1d - 1, axis=2)
    dofs = space.flat_index(multi)
    mass = np.einsum("eaq,ebq,eq->eab", phi, phi, w)
    rhs = np.einsum("eaq,eq->ea", phi, gx * w)
    A = phi.shape[1]
    rows = np.repeat(dofs, A, axis=1).ravel()
    cols = np.tile(dofs, (1, A)).ravel()
    return rows, cols, mass.ravel(), dofs.ravel(), rhs.ravel()


def project_boundary(space, geometry, g, m=None):
    """Boundary coefficients from the L2 projection of `g` onto the boundary trace space.

    Returns ``(boundary_dofs, coefficients)``.
    """
    m = space.degree + 1 if m is None else m
    bdofs = boundary_dofs(space)
    N = space.n_dofs
    r, c, v, rd, rv = zip(*(_face_system(space, geometry, g, d, s, m)
                            for d, s in boundary_faces(space.dim)))
    M = sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=(N, N))
    rhs = np.bincount(np.concatenate(rd), np.concatenate(rv), minlength=N)
    MB = M[bdofs][:, bdofs].tocsc()
    assert MB.diagonal().min() > 0, "singular boundary mass matrix"
    return bdofs, spla.spsolve(MB, rhs[bdofs])


@dataclass(eq=False)
class DirichletSystem:
    """Interior system ``A_II u_I = b_I - A_IB u_B``."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    boundary_values: np.ndarray
    space: object
    geometry: object


def apply_dirichlet(A, b, g, space, geometry, m=None, boundary=None):
    """Reduce ``A u = b`` by the Dirichlet datum `g`.

    `boundary` may pass a precomputed ``(dofs, coefficients)`` pair to avoid
    repeating the projection.
    """
    bdofs, ub = project_boundary(space, geometry, g, m) if boundary is None else boundary
    interior = np.setdiff1d(np.arange(space.n_dofs), bdofs)
    A = sp.csr_matrix(A)
    Ai = A[interior]
    rhs = b[interior] - Ai[:, bdofs] @ ub
    return DirichletSystem(Ai[:, interior].tocsr(), rhs, interior, bdofs, ub, space, geometry)


# ---------------------------------------------------------------------------
# Solver

def pcg(A, b, tol=1e-12, maxiter=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops when the true relative residual ``||b - A x|| / ||b||`` is at most
    `tol`.  Returns ``(x, iterations)``.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxiter = 10 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    x = np.zeros(n)
    if bnorm == 0.0:
        return x, 0
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise ConvergenceError("matrix has a non-positive diagonal entry; not SPD")
    dinv = 1.0 / diag
    r = b.copy()
    z = dinv * r
    d = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ad = A @ d
        dAd = d @ Ad
        if dAd <= 0:
            raise ConvergenceError(f"negative curvature in CG at iteration {it}; matrix not SPD")
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        if np.linalg.norm(r) <= tol * bnorm:
            r = b - A @ x
            if np.linalg.norm(r) <= tol * bnorm:
                return x, it
            # recurrence drifted; restart from the true residual
            z = dinv * r
            d = z.copy()
            rz = r @ z
            continue
        z = dinv * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise ConvergenceError(f"CG did not reach relative residual {tol:g} in {maxiter} iterations")


@dataclass(eq=False)
class DiscreteSolution:
    coefficients: np.ndarray
    space: object
    geometry: object
    iterations: int = 0


def solve(system, tol=1e-12, maxiter=None):
    u_i, its = pcg(system.matrix, system.rhs, tol, maxiter)
    u = np.zeros(system.space.n_dofs)
    u[system.interior] = u_i
    u[system.boundary] = system.boundary_values
    return DiscreteSolution(u, system.space, system.geometry, its)


# ---------------------------------------------------------------------------
# Errors

def compute_errors(sol, case, m=None):
    """Relative L2 and H1 errors of `sol` against the exact solution of `case`."""
    space, geometry = sol.space, sol.geometry
    m = space.degree + 2 if m is None else m
    tab = Tabulation(space, geometry, m)
    acc = np.zeros(4)   # |e|_0^2, |e|_1^2, |u|_0^2, |u|_1^2
    for elements in _batches(tab):
        ev = tab.evaluate(elements)
        E, Q, dim = ev.x.shape
        c = sol.coefficients[ev.dofs]
        uh = np.einsum("ea,eaq->eq", c, ev.phi)
        gref = np.einsum("ea,eaqd->eqd", c, ev.grad)
        det = _det(ev.jac)
        adj = _adjugate(ev.jac)
        gh = np.einsum("eqki,eqk->eqi", adj, gref) / det[..., None]
        pts = ev.x.reshape(-1, dim)
        u = case.u(pts).reshape(E, Q)
        gu = case.grad_u(pts).reshape(E, Q, dim)
        dx = np.abs(det) * ev.weights
        acc += [np.sum((u - uh) ** 2 * dx), np.sum(np.sum((gu - gh) ** 2, axis=-1) * dx),
                np.sum(u ** 2 * dx), np.sum(np.sum(gu ** 2, axis=-1) * dx)]
    l2 = math.sqrt(acc[0] / acc[2])
    h1 = math.sqrt((acc[0] + acc[1]) / (acc[2] + acc[3]))
    return l2, h1


def matrix_max_diff(A, B):
    """``max |A_ij - B_ij|`` over the union of both sparsity patterns."""
    if A.shape != B.shape:
        raise ValueError(f"matrix shapes differ: {A.shape} vs {B.shape}")
    D = sp.csr_matrix(A) - sp.csr_matrix(B)
    return float(abs(D).max()) if D.nnz else 0.0


def greville_interpolant(space, fn):
    """Coefficients of the spline interpolating `fn` (of the parameter) at Greville points."""
    kv, p = space.kv, space.degree
    n1d = kv.n_basis
    gr = np.array([kv.knots[i + 1:i + p + 1].mean() for i in range(n1d)])
    span, vals, _ = basis_funs(kv.knots, p, gr)
    C = np.zeros((n1d, n1d))
    C[np.arange(n1d)[:, None], span[:, None] - p + np.arange(p + 1)] = vals
    grids = np.meshgrid(*([gr] * space.dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    values = np.asarray(fn(pts)).reshape((n1d,) * space.dim)
    Cinv = np.linalg.inv(C)
    coef = apply_axis_matrices(values, [Cinv] * space.dim)
    return coef.ravel(order="F")
