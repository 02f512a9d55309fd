import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fimrate.geometry import (SurfaceGeometry, assemble_positions, build_reference_positions,
                              pairwise_distances, project_morph)
from oracles import naive_positions


def test_single_element_at_origin():
    np.testing.assert_array_equal(build_reference_positions(1, 1, 0.1, 0.1), [[0.0, 0.0]])


def test_two_by_two_row_major():
    d = 0.3
    np.testing.assert_allclose(build_reference_positions(2, 2, d, d),
                               [[0, 0], [d, 0], [0, d], [d, d]])


def test_element_six_of_four_wide_grid():
    pos = build_reference_positions(4, 3, 0.2, 0.5)
    np.testing.assert_allclose(pos[6 - 1], [0.2, 0.5])


@pytest.mark.parametrize("args", [(0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0), (2, 2, 0.0, 1.0), (2, 2, 1.0, -1.0)])
def test_reference_positions_reject_bad_input(args):
    with pytest.raises(ValueError):
        build_reference_positions(*args)


def test_flat_surface_lies_in_xz_plane():
    geo = SurfaceGeometry(3, 2, 0.1, 0.2, 0.4, 0.1)
    np.testing.assert_array_equal(assemble_positions(geo)[:, 1], 0.0)


def test_single_element_with_displacement():
    geo = SurfaceGeometry(1, 1, 0.1, 0.1, 0.4, 0.5, y=[0.25])
    np.testing.assert_allclose(assemble_positions(geo), [[0.0, 0.25, 0.0]])


def test_two_elements_one_displaced():
    geo = SurfaceGeometry(2, 1, 0.1, 0.1, 0.4, 0.05, y=[0.0, 0.05])
    np.testing.assert_allclose(assemble_positions(geo), [[0, 0, 0], [0.1, 0.05, 0]])


def test_assembly_matches_index_formula():
    rng = np.random.default_rng(0)
    y = rng.uniform(0, 0.1, 12)
    geo = SurfaceGeometry(4, 3, 0.07, 0.09, 0.3, 0.1, y=y)
    np.testing.assert_allclose(assemble_positions(geo), naive_positions(4, 3, 0.07, 0.09, y))


def test_morph_length_mismatch_rejected():
    with pytest.raises(ValueError):
        SurfaceGeometry(2, 2, 0.1, 0.1, 0.4, 0.1, y=[0.0, 0.0, 0.0])


def test_geometry_validation():
    with pytest.raises(ValueError):
        SurfaceGeometry(2, 2, 0.1, 0.1, -0.4, 0.1)
    with pytest.raises(ValueError):
        SurfaceGeometry(2, 2, 0.1, 0.1, 0.4, -0.1)


def test_morph_vector_is_read_only():
    geo = SurfaceGeometry(2, 1, 0.1, 0.1, 0.4, 0.1)
    with pytest.raises(ValueError):
        geo.y[0] = 1.0


def test_with_morph_projects_by_default():
    geo = SurfaceGeometry(3, 1, 0.1, 0.1, 0.4, 0.1).with_morph([-1.0, 0.05, 1.0])
    np.testing.assert_allclose(geo.y, [0.0, 0.05, 0.1])
    assert geo.is_feasible()
    raw = SurfaceGeometry(3, 1, 0.1, 0.1, 0.4, 0.1).with_morph([-1.0, 0.05, 1.0], project=False)
    assert not raw.is_feasible()


def test_projection_examples():
    ym = 0.2
    np.testing.assert_allclose(project_morph([-0.1 * ym, 0.5 * ym, 2 * ym], ym), [0, 0.5 * ym, ym])
    y = np.array([0.0, 0.1, 0.2])
    np.testing.assert_array_equal(project_morph(y, ym), y)
    np.testing.assert_array_equal(project_morph([0.3, -0.2, 0.1], 0.0), [0.0, 0.0, 0.0])


def test_distance_examples():
    np.testing.assert_array_equal(pairwise_distances([[0.0, 0.0, 0.0]]), [[0.0]])
    d = pairwise_distances([[0, 0, 0], [0.3, 0.4, 0]])
    np.testing.assert_allclose(d, [[0, 0.5], [0.5, 0]])


finite = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(float, st.integers(1, 20), elements=st.floats(-2, 2, allow_nan=False)),
       st.floats(0, 1, allow_nan=False))
def test_projection_idempotent_and_nonexpansive(y, ym):
    once = project_morph(y, ym)
    np.testing.assert_array_equal(project_morph(once, ym), once)
    assert np.all((once >= 0) & (once <= ym))
    other = y[::-1]
    assert np.max(np.abs(once - project_morph(other, ym))) <= np.max(np.abs(y - other)) + 1e-15


@settings(max_examples=40, deadline=None)
@given(arrays(float, (6, 3), elements=finite))
def test_distances_symmetric_and_metric(pts):
    d = pairwise_distances(pts)
    np.testing.assert_array_equal(d, d.T)
    np.testing.assert_array_equal(np.diag(d), 0.0)
    assert np.all(d >= 0)
    viol = d[:, :, None] - (d[:, None, :] + d[None, :, :])
    assert np.max(viol) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.05))
def test_common_shift_keeps_distances(seed, c):
    rng = np.random.default_rng(seed)
    y = rng.uniform(0, 0.05, 9)
    geo = SurfaceGeometry(3, 3, 0.08, 0.08, 0.3, 0.1, y=y)
    shifted = geo.with_morph(y + c)
    np.testing.assert_allclose(pairwise_distances(assemble_positions(shifted)),
                               pairwise_distances(assemble_positions(geo)), atol=1e-15)


def test_reference_coordinates_independent_of_morph():
    geo = SurfaceGeometry(3, 2, 0.1, 0.15, 0.4, 0.2)
    a = assemble_positions(geo)
    b = assemble_positions(geo.with_morph(np.linspace(0, 0.2, 6)))
    np.testing.assert_array_equal(a[:, [0, 2]], b[:, [0, 2]])
