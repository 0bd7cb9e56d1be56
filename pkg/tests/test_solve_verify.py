import numpy as np
import pytest
import scipy.sparse as sp

from surrogate_iga.assembly import assemble_stiffness
from surrogate_iga.errors import ConfigError, ConvergenceError
from surrogate_iga.geometry import builtin_geometry, jacobian, map_point
from surrogate_iga.quadrature import element_quadrature
from surrogate_iga.solve_verify import (DiscreteSolution, apply_dirichlet, assemble_load,
                                        boundary_dofs, compute_errors, greville_interpolant,
                                        manufactured_case, matrix_max_diff, oscillatory_case,
                                        pcg, project_boundary, smooth_case, solve)
from surrogate_iga.splines import tensor_space
from surrogate_iga.surrogate import SurrogateConfig, assemble_surrogate


@pytest.mark.parametrize("make", [oscillatory_case, smooth_case])
@pytest.mark.parametrize("dim", [2, 3])
def test_manufactured_fields(make, dim):
    case = make(dim)
    x = np.random.default_rng(dim).random((100, dim))
    eps = 1e-4
    lap = np.zeros(100)
    grad = np.zeros((100, dim))
    for d in range(dim):
        e = np.zeros(dim)
        e[d] = eps
        up, um = case.u(x + e), case.u(x - e)
        lap += (up - 2 * case.u(x) + um) / eps ** 2
        grad[:, d] = (up - um) / (2 * eps)
    f = case.f(x)
    assert np.max(np.abs(-lap - f)) <= 1e-4 * np.abs(f).max()
    assert np.max(np.abs(grad - case.grad_u(x))) <= 1e-4 * np.abs(grad).max()


def test_load_constants():
    x = np.array([[0.013, 0.31, 0.77]])
    s = np.prod(np.sin(20 * np.pi * x))
    assert np.isclose(oscillatory_case(3).f(x)[0], 1200 * np.pi ** 2 * s)
    assert np.isclose(oscillatory_case(2).f(x[:, :2])[0], 800 * np.pi ** 2 * np.prod(np.sin(20 * np.pi * x[0, :2])))
    with pytest.raises(ConfigError):
        manufactured_case("wave", 2)


def test_load_vector():
    space = tensor_space(2, 2, 6)
    ident = builtin_geometry("identity", 2)
    assert not np.any(assemble_load(space, ident, lambda x: np.zeros(len(x))))
    assert abs(assemble_load(space, ident, lambda x: np.ones(len(x))).sum() - 1) < 1e-12

    g = builtin_geometry("quarter_annulus_bumps", 2)
    f = lambda x: np.exp(x[:, 0]) * np.cos(x[:, 1])
    total = 0.0
    for e in np.ndindex(6, 6):
        q = element_quadrature(space, e, 3)
        det = np.abs(np.linalg.det(jacobian(g, q.points)))
        total += np.sum(f(map_point(g, q.points)) * det * q.weights)
    assert abs(assemble_load(space, g, f).sum() - total) < 1e-12


@pytest.mark.parametrize("dim,name", [(2, "quarter_annulus_bumps"), (3, "bent_box")])
def test_boundary_projection_constants(dim, name):
    space = tensor_space(dim, 2, 5)
    g = builtin_geometry(name, dim)
    b, u0 = project_boundary(space, g, lambda x: np.zeros(len(x)))
    assert not np.any(u0)
    _, u1 = project_boundary(space, g, lambda x: np.ones(len(x)))
    assert np.max(np.abs(u1 - 1)) < 1e-12
    assert len(b) == space.n_dofs - (space.kv.n_basis - 2) ** dim


@pytest.mark.parametrize("dim", [2, 3])
def test_boundary_projection_reproduces_splines(dim):
    space = tensor_space(dim, 2, 4)
    poly = lambda x: 1 + x[:, 0] ** 2 - 3 * x[:, 0] * x[:, -1] + x[:, 1] ** 2
    bd, ub = project_boundary(space, builtin_geometry("identity", dim), poly)
    exact = greville_interpolant(space, poly)
    assert np.array_equal(bd, boundary_dofs(space))
    assert np.max(np.abs(ub - exact[bd])) < 1e-10


def test_pcg():
    b = np.arange(1.0, 6.0)
    x, _ = pcg(sp.identity(5, format="csr"), b)
    assert np.allclose(x, b)
    rng = np.random.default_rng(0)
    n = 40
    T = sp.diags([-np.ones(n - 1), 2.5 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()
    T = T + sp.diags(rng.random(n))
    b = rng.normal(size=n)
    x, its = pcg(T, b)
    assert np.max(np.abs(x - np.linalg.solve(T.toarray(), b))) < 1e-10
    assert np.linalg.norm(T @ x - b) <= 1e-12 * np.linalg.norm(b)
    assert 0 < its <= 10 * n
    assert not np.any(pcg(T, np.zeros(n))[0])
    with pytest.raises(ConvergenceError):
        pcg(T, b, maxiter=2)
    with pytest.raises(ConvergenceError):
        pcg(sp.diags([1.0, -1.0]).tocsr(), np.ones(2))


def test_errors_of_exact_and_zero_solutions():
    space = tensor_space(2, 2, 5)
    g = builtin_geometry("identity", 2)
    u = lambda x: 1 + x[:, 0] ** 2 - x[:, 0] * x[:, 1]
    grad = lambda x: np.stack([2 * x[:, 0] - x[:, 1], -x[:, 0]], axis=1)
    case = type(smooth_case(2))(2, u, grad, lambda x: np.full(len(x), -2.0))
    sol = DiscreteSolution(greville_interpolant(space, u), space, g)
    assert max(compute_errors(sol, case)) <= 1e-10
    zero = DiscreteSolution(np.zeros(space.n_dofs), space, g)
    assert np.allclose(compute_errors(zero, smooth_case(2)), 1.0, atol=1e-14)


def solve_case(space, g, case, A):
    b = assemble_load(space, g, case.f)
    sol = solve(apply_dirichlet(A, b, case.g, space, g))
    return compute_errors(sol, case), sol


def test_convergence_rates_identity():
    g = builtin_geometry("identity", 2)
    case = smooth_case(2)
    errs = []
    for nel in (10, 20, 40):
        space = tensor_space(2, 2, nel)
        errs.append(solve_case(space, g, case, assemble_stiffness(space, g))[0])
    errs = np.array(errs)
    orders = np.log2(errs[:-1] / errs[1:])
    assert np.all(np.abs(orders[:, 0] - 3) <= 0.2), orders
    assert np.all(np.abs(orders[:, 1] - 2) <= 0.2), orders


def test_surrogate_solution_tracks_standard():
    space = tensor_space(2, 2, 80)
    g = builtin_geometry("quarter_annulus_bumps", 2)
    case = oscillatory_case(2)
    (e_std, s1) = solve_case(space, g, case, assemble_stiffness(space, g))
    (e_sur, s2) = solve_case(space, g, case, assemble_surrogate(space, g, SurrogateConfig(10, 3)))
    assert np.all(np.abs(np.subtract(e_sur, e_std)) <= 1e-2 * np.array(e_std))
    assert s1.iterations > 0 and s2.iterations > 0


def test_matrix_max_diff():
    A = assemble_stiffness(tensor_space(2, 2, 6), builtin_geometry("quarter_annulus", 2))
    assert matrix_max_diff(A, A) == 0
    B = A.tolil()
    B[3, 40] = 0.5
    assert matrix_max_diff(A, B.tocsr()) == 0.5
    with pytest.raises(ValueError):
        matrix_max_diff(A, A[:-1, :-1])
