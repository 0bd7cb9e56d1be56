import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _checks import structure_violations
from surrogate_iga.assembly import assemble_offsets, assemble_stiffness
from surrogate_iga.errors import ConfigError
from surrogate_iga.geometry import builtin_geometry
from surrogate_iga.solve_verify import matrix_max_diff
from surrogate_iga.splines import interior_lattice, tensor_space
from surrogate_iga.surrogate import (SurrogateConfig, active_element_mask, active_row_subset,
                                     assemble_surrogate, assemble_surrogate_parts, boundary_mask,
                                     count_interpolated_stencils, extract_stencil_samples,
                                     interior_mask, interpolate_stencil, sample_indices,
                                     shift_indices, support_elements)


def one_based(idx):
    return [int(i) + 1 for i in idx]


def test_boundary_mask():
    assert one_based(boundary_mask(2, 39)) == [1, 2, 3, 4, 36, 37, 38, 39]
    assert one_based(boundary_mask(3, 39)) == list(range(1, 7)) + list(range(34, 40))
    assert one_based(boundary_mask(1, 5)) == [1, 2, 4, 5]
    with pytest.raises(ConfigError):
        boundary_mask(2, 8)


def test_interior_mask():
    assert one_based(interior_mask(2, 10, 39)) == [1, 2, 3, 4, 5, 13, 14, 15, 23, 24, 25,
                                                   33, 34, 35, 36, 37, 38, 39]
    assert one_based(interior_mask(2, 1, 39)) == list(range(1, 40))
    expect = sorted({3, 4, 5} | {35, 36, 37} | set(one_based(boundary_mask(2, 39))))
    assert one_based(interior_mask(2, 32, 39)) == expect


@settings(max_examples=40, deadline=None)
@given(p=st.integers(1, 3), extra=st.integers(1, 40), skip=st.integers(1, 15))
def test_interior_mask_is_sample_row_support(p, extra, skip):
    nel = 4 * p + extra
    space = tensor_space(2, p, nel)
    lat = interior_lattice(space)
    S = sample_indices(lat.size, skip)
    rows = active_row_subset(lat, S, p, nel, first_layer_only=True)
    # the first layer of sample rows runs along the first direction
    support = np.unique(support_elements(space, rows)[:, 0])
    assert np.array_equal(np.union1d(support, boundary_mask(p, nel)), interior_mask(p, skip, nel))


def test_sample_indices():
    assert list(sample_indices(33, 10)) == [0, 10, 20, 30, 32]
    assert list(sample_indices(33, 1)) == list(range(33))
    assert list(sample_indices(5, 4)) == [0, 4]
    with pytest.raises(ConfigError, match="too few samples"):
        sample_indices(5, 4, q=3)


def test_active_rows():
    space = tensor_space(2, 2, 39)
    lat = interior_lattice(space)
    rows = active_row_subset(lat, sample_indices(33, 10))
    assert rows.size == 25
    assert tuple(space.multi_index(rows[0, 0])) == (4, 4)
    assert active_row_subset(lat, np.arange(33)).size == 33 ** 2


def test_counts():
    assert count_interpolated_stencils(2, 2) == 12
    assert count_interpolated_stencils(2, 3) == 62
    assert count_interpolated_stencils(1, 2) == 4
    space = tensor_space(3, 2, 20)
    shifts = shift_indices(space)
    assert len(shifts) == 125
    assert sum(s.shift > 0 for s in shifts) == 62
    assert all(s.shift == np.dot(s.delta, space.strides) for s in shifts)


def test_config_validation():
    assert SurrogateConfig(10, 3).sampling_length(1 / 159) == pytest.approx(10 / 159)
    for bad in ((0, 3), (2.5, 3), (10, 2)):
        with pytest.raises(ConfigError):
            SurrogateConfig(*bad)


def test_stencil_samples():
    space = tensor_space(2, 2, 39)
    lat = interior_lattice(space)
    S = sample_indices(lat.size, 10)
    for name in ("quarter_annulus_bumps", "identity"):
        g = builtin_geometry(name, 2)
        A = assemble_stiffness(space, g)
        part = assemble_offsets(space, g, mask=active_element_mask(2, 10, 39))
        for sh in shift_indices(space):
            s = extract_stencil_samples(part, sh.delta, lat, S)
            ref = extract_stencil_samples(A, sh.delta, lat, S)
            assert np.max(np.abs(s.values - ref.values)) <= 1e-14 * abs(A).max()
            if sh.shift == 0:
                assert np.all(s.values > 0)
            if name == "identity":
                assert np.ptp(s.values) <= 1e-12
    with pytest.raises(ValueError):
        extract_stencil_samples(A, (3, 0), lat, S)


def test_interpolate_stencil():
    space = tensor_space(2, 2, 30)
    lat = interior_lattice(space)
    A = assemble_stiffness(space, builtin_geometry("quarter_annulus", 2))
    full = extract_stencil_samples(A, (1, -1), lat, np.arange(lat.size))
    assert np.array_equal(interpolate_stencil(full, 3, lat.size), full.values)
    S = sample_indices(lat.size, 4)
    s = extract_stencil_samples(A, (1, 0), lat, S)
    t = s.coords
    poly = lambda x, y: 1 + x ** 3 - 2 * x * y ** 2 + y ** 3
    s = type(s)(s.delta, s.indices, t, poly(*np.meshgrid(t, t, indexing="ij")))
    c = lat.coords
    out = interpolate_stencil(s, 3, lat.size)
    assert np.max(np.abs(out - poly(*np.meshgrid(c, c, indexing="ij")))) < 1e-12


@pytest.mark.parametrize("dim,p,nel,name", [(2, 2, 40, "quarter_annulus_bumps"),
                                            (2, 3, 45, "quarter_annulus"),
                                            (3, 2, 24, "bent_box")])
@pytest.mark.parametrize("q", [1, 3])
def test_structural_invariants(dim, p, nel, name, q):
    space = tensor_space(dim, p, nel)
    g = builtin_geometry(name, dim)
    A = assemble_stiffness(space, g)
    cfg = SurrogateConfig(3 if dim == 3 else 5, q)
    parts = assemble_surrogate_parts(space, g, cfg)
    At = parts.surrogate.to_csr()
    asym, rows, outside, pattern_ok = structure_violations(A, At, space)
    assert asym == 0 and pattern_ok
    assert rows <= 1e-12 and outside <= 1e-14 * abs(A).max()
    # sample rows keep their quadrature values for positive shifts
    lat = interior_lattice(space)
    rows = lat.rows(parts.samples).ravel()
    pos = parts.surrogate.shifts > 0
    Av = assemble_offsets(space, g).values
    assert np.max(np.abs(parts.surrogate.values[np.ix_(rows, pos)] - Av[np.ix_(rows, pos)])) \
        <= 1e-14 * np.abs(Av).max()
    assert parts.n_active() <= nel ** dim


@pytest.mark.parametrize("p", [2, 3])
def test_skip_one_is_exact(p):
    space = tensor_space(2, p, 30)
    g = builtin_geometry("quarter_annulus_bumps", 2)
    A = assemble_stiffness(space, g)
    At = assemble_surrogate(space, g, SurrogateConfig(1, 3))
    assert matrix_max_diff(A, At) <= 1e-12 * abs(A).max()


@pytest.mark.parametrize("dim,nel", [(2, 40), (3, 26)])
@pytest.mark.parametrize("skip", [2, 5])
def test_identity_exact(dim, nel, skip):
    space = tensor_space(dim, 2, nel)
    g = builtin_geometry("identity", dim)
    A = assemble_stiffness(space, g)
    assert matrix_max_diff(A, assemble_surrogate(space, g, SurrogateConfig(skip, 3))) \
        <= 1e-12 * abs(A).max()


def test_fewer_active_elements_at_defaults():
    mask = active_element_mask(2, 10, 159)
    assert mask.count(2) < 0.2 * 159 ** 2
    assert active_element_mask(2, 10, 39).count(3) < 0.55 * 39 ** 3


def test_accuracy_improves_with_smaller_skip():
    space = tensor_space(2, 2, 159)
    g = builtin_geometry("quarter_annulus_bumps", 2)
    A = assemble_stiffness(space, g)
    d = [matrix_max_diff(A, assemble_surrogate(space, g, SurrogateConfig(M, 3))) for M in (5, 20)]
    assert d[0] <= d[1]


def test_rejects_coarse_meshes():
    g = builtin_geometry("quarter_annulus", 2)
    with pytest.raises(ConfigError):
        assemble_surrogate(tensor_space(2, 2, 8), g)
    with pytest.raises(ConfigError, match="too few samples"):
        assemble_surrogate(tensor_space(2, 2, 12), g, SurrogateConfig(10, 3))
