import numpy as np
import pytest

from scanfield.geom import Aabb
from scanfield.meshing import (
    PolylineSet,
    TriangleMesh,
    marching_cubes,
    marching_squares,
    sample_grid,
)


def sphere_field(pts):
    return np.linalg.norm(pts, axis=1) - 1.0


def edge_counts(triangles):
    edges = {}
    for a, b, c in triangles:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            edges[key] = edges.get(key, 0) + 1
    return edges


def test_sample_grid_layout():
    box = Aabb.cube(np.zeros(2), 1.0)
    vals = sample_grid(lambda p: p[:, 0] + 10.0 * p[:, 1], box, 4)
    assert vals.shape == (5, 5)
    # index order (x, y): first axis advances x
    assert vals[4, 0] == pytest.approx(1.0 + 10.0 * -1.0)
    assert vals[0, 4] == pytest.approx(-1.0 + 10.0)
    vals3 = sample_grid(lambda p: p[:, 2], Aabb.cube(np.zeros(3), 1.0), 2)
    assert vals3.shape == (3, 3, 3)
    np.testing.assert_allclose(vals3[:, :, 0], -1.0)
    np.testing.assert_allclose(vals3[:, :, 2], 1.0)
    with pytest.raises(ValueError):
        sample_grid(lambda p: p[:, 0], box, 1)


def test_mesh_validation():
    with pytest.raises(ValueError):
        TriangleMesh(np.zeros((2, 3)), np.array([[0, 1, 2]]))
    with pytest.raises(ValueError):
        PolylineSet(np.zeros((1, 2)), np.array([[0, 1]]))


def test_empty_mesh_when_level_set_absent():
    box = Aabb.cube(np.zeros(3), 1.0)
    mesh = marching_cubes(lambda p: np.full(p.shape[0], 2.0), box, 8)
    assert mesh.vertices.shape == (0, 3)
    assert mesh.triangles.shape == (0, 3)


def test_sphere_mesh_accuracy_and_topology():
    box = Aabb.cube(np.zeros(3), 2.0)
    mesh = marching_cubes(sphere_field, box, 64)
    r = np.linalg.norm(mesh.vertices, axis=1)
    # error bound: one cell diagonal (4/64 * sqrt(3)/2 ~ 0.054); spec-level
    # slack is half the cell diagonal of the 2-unit box at res 64
    assert np.max(np.abs(r - 1.0)) < 0.108
    # closed 2-manifold: every edge shared by exactly two triangles
    counts = edge_counts(mesh.triangles)
    assert set(counts.values()) == {2}
    v = mesh.vertices.shape[0]
    e = len(counts)
    f = mesh.triangles.shape[0]
    assert v - e + f == 2  # genus-0 Euler characteristic
    # no unreferenced vertices survive pruning
    assert np.unique(mesh.triangles).size == v


def test_vertices_interpolate_between_corners():
    # Every output vertex lies on a lattice edge between corners of opposite
    # sign, so its field magnitude is below the larger corner magnitude.
    box = Aabb.cube(np.zeros(3), 2.0)
    res = 16
    mesh = marching_cubes(sphere_field, box, res)
    h = 4.0 / res
    d = np.abs(sphere_field(mesh.vertices))
    # |D| at an interpolated vertex can't exceed the field change across one cell
    assert np.max(d) < np.sqrt(3.0) * h


def test_resolution_doubling_halves_error():
    box = Aabb.cube(np.zeros(3), 2.0)
    errs = []
    for res in (16, 32, 64):
        mesh = marching_cubes(sphere_field, box, res)
        errs.append(np.max(np.abs(np.linalg.norm(mesh.vertices, axis=1) - 1.0)))
    assert errs[1] < 0.6 * errs[0]
    assert errs[2] < 0.6 * errs[1]


def test_triangles_wind_outward():
    # With distance increasing outward, right-hand-rule normals must point
    # along the gradient (away from the interior).
    box = Aabb.cube(np.zeros(3), 2.0)
    mesh = marching_cubes(sphere_field, box, 24)
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    n = np.cross(b - a, c - a)
    centers = (a + b + c) / 3.0
    # for the unit sphere the outward direction is the center direction
    assert np.all(np.sum(n * centers, axis=1) > 0.0)


def test_two_blob_mesh_is_manifold():
    # Coarse two-sphere union exercises ambiguous-face cells; the face-center
    # decision keeps the surface watertight.
    def blobs(p):
        d1 = np.linalg.norm(p - np.array([0.55, 0.0, 0.0]), axis=1) - 0.5
        d2 = np.linalg.norm(p + np.array([0.55, 0.0, 0.0]), axis=1) - 0.5
        return np.minimum(d1, d2)

    box = Aabb.cube(np.zeros(3), 1.5)
    for res in (6, 7, 9, 11):
        mesh = marching_cubes(blobs, box, res)
        counts = edge_counts(mesh.triangles)
        assert set(counts.values()) == {2}, res


def test_marching_cubes_rejects_2d_box():
    with pytest.raises(ValueError):
        marching_cubes(sphere_field, Aabb.cube(np.zeros(2), 1.0), 8)


def test_circle_polyline_closed_and_accurate():
    box = Aabb.cube(np.zeros(2), 2.0)
    lines = marching_squares(lambda p: np.linalg.norm(p, axis=1) - 1.0, box, 64)
    r = np.linalg.norm(lines.vertices, axis=1)
    assert np.max(np.abs(r - 1.0)) < 0.01
    # closed curve: every vertex appears in exactly two segments
    degree = np.zeros(lines.vertices.shape[0], dtype=int)
    for a, b in lines.segments:
        degree[a] += 1
        degree[b] += 1
    assert np.all(degree == 2)


def test_squares_saddle_resolved_by_center_sample():
    # The hyperbolic field -x*y is negative in two opposite quadrants; at the
    # origin cell the corner signs alone are ambiguous.  Center sampling picks
    # the topology consistent with the actual field.
    def saddle(p):
        return -(p[:, 0] * p[:, 1])

    box = Aabb.cube(np.zeros(2), 1.0)
    lines = marching_squares(saddle, box, 5)  # odd res: cells straddle the axes
    # segments exist and no vertex dangles more than the 4 hyperbola branch ends
    degree = np.zeros(lines.vertices.shape[0], dtype=int)
    for a, b in lines.segments:
        degree[a] += 1
        degree[b] += 1
    assert np.all(degree >= 1)
    assert lines.segments.shape[0] > 0
    # all vertices lie near the zero set xy = 0
    prods = np.abs(lines.vertices[:, 0] * lines.vertices[:, 1])
    assert np.max(prods) < 0.05


def test_squares_empty():
    box = Aabb.cube(np.zeros(2), 1.0)
    lines = marching_squares(lambda p: np.full(p.shape[0], -1.0), box, 8)
    assert lines.segments.shape[0] == 0
