import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from surrogate_iga.errors import ConfigError, SingularJacobianError
from surrogate_iga.geometry import (GEOMETRIES, PatchMap, builtin_geometry, det_and_pullback,
                                    jacobian, map_point, pullback_coefficient, read_geometry,
                                    write_geometry)

GEOS = [("identity", 2), ("identity", 3), ("quarter_annulus", 2),
        ("quarter_annulus_bumps", 2), ("bent_box", 3)]

unit = st.floats(0.0, 1.0)


def affine(Amat, b):
    n = len(b)
    grids = np.meshgrid(*([np.array([0.0, 1.0])] * n), indexing="ij")
    corners = np.stack(grids, axis=-1)
    return PatchMap((1,) * n, ([0, 0, 1, 1],) * n, corners @ np.asarray(Amat).T + b)


def test_identity():
    g = builtin_geometry("identity", 2)
    x = np.array([0.3, 0.8])
    assert np.allclose(map_point(g, x), x, rtol=0, atol=1e-15)
    assert np.allclose(jacobian(g, x), np.eye(2))
    assert np.allclose(pullback_coefficient(g, x), np.eye(2))


def test_affine_jacobian_and_pullback():
    rng = np.random.default_rng(3)
    for n in (2, 3):
        Amat = rng.normal(size=(n, n)) + 3 * np.eye(n)
        g = affine(Amat, rng.normal(size=n))
        pts = rng.random((20, n))
        J = jacobian(g, pts)
        assert np.allclose(J, Amat, atol=1e-13)
        inv = np.linalg.inv(Amat)
        K_oracle = abs(np.linalg.det(Amat)) * inv @ inv.T
        K = pullback_coefficient(g, pts)
        assert np.max(np.abs(K - K_oracle)) < 1e-12 * max(1, np.abs(K_oracle).max())


def test_scaling_cancels_in_2d():
    g = affine(2.5 * np.eye(2), np.zeros(2))
    assert np.allclose(pullback_coefficient(g, [0.4, 0.1]), np.eye(2), atol=1e-14)


def test_annulus_is_exact_circle():
    g = builtin_geometry("quarter_annulus", 2)
    assert abs(np.linalg.norm(map_point(g, [0.0, 0.0])) - 1) < 1e-12
    assert abs(np.linalg.norm(map_point(g, [1.0, 1.0])) - 2) < 1e-12
    t = np.linspace(0, 1, 101)
    for s, r in ((0.0, 1.0), (1.0, 2.0), (0.5, 1.5)):
        x = map_point(g, np.stack([np.full_like(t, s), t], axis=1))
        assert np.max(np.abs(np.linalg.norm(x, axis=1) - r)) < 1e-12
        assert np.all(x >= -1e-15)


@pytest.mark.parametrize("name,n", GEOS)
@settings(max_examples=25, deadline=None)
@given(data=st.data())
def test_jacobian_finite_differences(name, n, data):
    g = builtin_geometry(name, n)
    x = np.array([data.draw(st.floats(1e-5, 1 - 1e-5)) for _ in range(n)])
    J = jacobian(g, x)
    eps = 1e-6
    for k in range(n):
        e = np.zeros(n)
        e[k] = eps
        fd = (map_point(g, x + e) - map_point(g, x - e)) / (2 * eps)
        assert np.max(np.abs(fd - J[:, k])) < 1e-6


@pytest.mark.parametrize("name,n", GEOS)
def test_orientation_and_spd_pullback(name, n):
    g = builtin_geometry(name, n)
    t = np.linspace(0, 1, 20)
    grids = np.meshgrid(*([t] * n), indexing="ij")
    pts = np.stack([a.ravel() for a in grids], axis=1)
    det, K = det_and_pullback(jacobian(g, pts))
    assert np.all(det > 0)
    assert np.max(np.abs(K - np.swapaxes(K, 1, 2))) <= 1e-13 * np.abs(K).max()
    assert np.linalg.eigvalsh(K).min() > 0


def test_bumps_perturb_the_annulus():
    plain = builtin_geometry("quarter_annulus", 2)
    bumps = builtin_geometry("quarter_annulus_bumps", 2)
    # inner arc is untouched, the interior and the outer arc are displaced
    t = np.linspace(0, 1, 11)
    inner = np.stack([np.zeros_like(t), t], axis=1)
    assert np.allclose(map_point(bumps, inner), map_point(plain, inner), atol=1e-14)
    assert np.linalg.norm(map_point(bumps, [0.5, 0.5]) - map_point(plain, [0.5, 0.5])) > 1e-3


def test_singular_and_bad_input():
    collapsed = PatchMap((1, 1), ([0, 0, 1, 1],) * 2,
                         [[[0, 0], [0, 1]], [[0, 0], [1, 1]]])
    with pytest.raises(SingularJacobianError):
        pullback_coefficient(collapsed, [0.0, 0.0])
    g = builtin_geometry("identity", 2)
    with pytest.raises(ValueError):
        map_point(g, [1.2, 0.3])
    with pytest.raises(ConfigError):
        builtin_geometry("torus", 2)
    with pytest.raises(ConfigError):
        builtin_geometry("bent_box", 2)
    with pytest.raises(ConfigError):
        PatchMap((1, 1), ([0, 0, 1, 1],) * 2, np.zeros((2, 2, 2)), weights=-np.ones((2, 2)))


@pytest.mark.parametrize("name", GEOMETRIES)
def test_file_round_trip(name, tmp_path):
    n = 3 if name == "bent_box" else 2
    g = builtin_geometry(name, n)
    path = tmp_path / "g.txt"
    write_geometry(g, path)
    h = read_geometry(path)
    assert h.degrees == g.degrees and h.rational == g.rational
    assert np.array_equal(h.control, g.control)
    for a, b in zip(h.knots, g.knots):
        assert np.array_equal(a, b)
    if g.rational:
        assert np.array_equal(h.weights, g.weights)
    x = np.random.default_rng(0).random((10, n))
    assert np.array_equal(map_point(h, x), map_point(g, x))


def test_malformed_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("dim 2\nrational 0\ndegrees 1 1\nknots 0 0 1 1\nknots 0 0 1 1\nshape 2 2\n0 0\n")
    with pytest.raises(ConfigError):
        read_geometry(path)


def test_rational_weights_match_quotient():
    # middle control point of a 90 degree arc, weight 1/sqrt(2), at t = 1/2
    g = builtin_geometry("quarter_annulus", 2)
    x = map_point(g, [0.0, 0.5])
    assert np.allclose(x, [math.sqrt(0.5)] * 2, atol=1e-15)
