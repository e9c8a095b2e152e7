import numpy as np
import pytest

from fdhom.errors import DiscretizationError, InvalidDirectionError
from fdhom.geometry import (
    boundary_strip,
    box_domain,
    cube_vertices,
    face_masks,
    interface_mask,
    perpendicular_strip,
    rotated_rectangle,
    rotation_matrix,
)


def test_rotation_of_last_axis_is_identity():
    for n in (1, 2):
        rot = rotation_matrix(np.eye(n)[-1])
        assert np.array_equal(rot.matrix, np.eye(n))
        assert rot.multiplier == 1


def test_rotation_to_minus_e2():
    rot = rotation_matrix([0.0, -1.0])
    R = rot.matrix
    assert np.max(np.abs(R.T @ R - np.eye(2))) < 1e-12
    assert np.allclose(R @ [0.0, 1.0], [0.0, -1.0], atol=1e-12)


def test_rational_rotation():
    rot = rotation_matrix([0.6, 0.8])
    assert rot.rational
    assert np.allclose(rot.matrix[:, -1], [0.6, 0.8], atol=1e-15)
    M, frame = rot.integer_frame()
    assert M == 5
    assert np.array_equal(frame, np.round(5 * rot.matrix).astype(np.int64))


def test_irrational_direction_has_no_multiplier():
    rot = rotation_matrix([1 / np.sqrt(2), 1 / np.sqrt(2)])
    assert np.max(np.abs(rot.matrix.T @ rot.matrix - np.eye(2))) < 1e-12
    if not rot.rational:
        with pytest.raises(InvalidDirectionError):
            rot.multiplier


@pytest.mark.parametrize("nu", [[0.0, 1.0], [0.6, 0.8], [1.0, 0.0], [-0.28, 0.96]])
def test_opposite_normals_give_same_cube(nu):
    a = cube_vertices(rotation_matrix(nu))
    b = cube_vertices(rotation_matrix(-np.asarray(nu)))
    assert np.allclose(a, b, atol=1e-12)


def test_unit_cube_volume():
    d = rotated_rectangle([0.0], 1.0, h=0.125)
    assert d.volume == pytest.approx(1.0)
    d2 = rotated_rectangle([0.0, 0.0], 1.0, h=0.125)
    assert d2.volume == pytest.approx(1.0)


def test_elongated_rectangle_area():
    d = rotated_rectangle([0.0, 0.0], 2.0, k=3, h=0.25)
    assert d.volume == pytest.approx(12.0)
    assert d.shape == (24, 8)


def test_rotated_square_area():
    d = rotated_rectangle([0.0, 0.0], 5.0, nu=[0.6, 0.8], h=0.5)
    assert int(np.prod(d.shape)) * d.cell_volume == pytest.approx(25.0, abs=1e-12)


def test_strip_1d():
    d = rotated_rectangle([0.0], 1.0, h=0.125)
    assert np.nonzero(boundary_strip(d))[0].tolist() == [0, 1, 6, 7]


def test_strip_covers_everything_at_half_side():
    d = rotated_rectangle([0.0], 1.0, h=0.125, bc_width=0.5)
    assert boundary_strip(d).all()


def test_strip_2d_counts():
    d = rotated_rectangle([0.0, 0.0], 1.0, h=0.125)
    m = boundary_strip(d)
    assert m.sum() == 48 and (~m).sum() == 16


def test_strip_touches_boundary():
    d = rotated_rectangle([0.0, 0.0], 1.0, h=0.125)
    m = boundary_strip(d)
    assert m[0].all() and m[-1].all() and m[:, 0].all() and m[:, -1].all()


def test_face_masks_1d():
    perp, par, _ = face_masks(rotated_rectangle([0.0], 1.0, h=0.125))
    assert perp.count == 2 and par.count == 0


def test_face_masks_2d():
    d = rotated_rectangle([0.0, 0.0], 1.0, h=0.125)
    perp, par, inter = face_masks(d)
    assert perp.count == 16 and par.count == 16 and inter.count == 8


def test_interface_mask_midline():
    d = rotated_rectangle([0.0, 0.0], 1.0, h=0.125)
    m = interface_mask(d, [0.0, 0.0])
    assert m[0].sum() == 0 and m[1].sum() == 8
    assert m[1][:, 3].all()


def test_perpendicular_strip_leaves_parallel_sides_free():
    d = rotated_rectangle([0.0, 0.0], 1.0, h=0.125)
    m = perpendicular_strip(d)
    assert m.sum() == 32
    assert not m[:, 3].any()


def test_discretization_errors():
    with pytest.raises(DiscretizationError):
        rotated_rectangle([0.0], 1.0, h=0.3)
    with pytest.raises(DiscretizationError):
        rotated_rectangle([0.0], 1.0, h=0.5)
    with pytest.raises(DiscretizationError):
        rotated_rectangle([0.0], 1.0, h=0.125, bc_width=0.1)


def test_translated_box_centers():
    d = box_domain(np.eye(1), [0.0], [2.0], 0.5, translation=[3.0])
    assert d.cell_centers[:, 0].tolist() == [3.25, 3.75, 4.25, 4.75]
    assert d.translated([1.0]).cell_centers[0, 0] == 4.25
