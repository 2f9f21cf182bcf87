import numpy as np
import pytest

from scanfield.geom import (
    Aabb,
    Pose,
    Ray,
    Scan,
    SceneTransform,
    normalize_scene,
    rays_from_arrays,
    rays_to_arrays,
    to_world,
)


def test_pose_identity_roundtrip():
    p = Pose.identity(3)
    pts = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    np.testing.assert_array_equal(p.apply(pts), pts)
    np.testing.assert_array_equal(p.inverse_apply(pts), pts)


def test_pose_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        Pose(np.array([[1.0, 0.1], [0.0, 1.0]]), np.zeros(2))


def test_pose_rejects_reflection():
    # det = -1 is a valid orthogonal matrix but not a rotation
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, -1.0]), np.zeros(2))


def test_pose_apply_inverse_apply_roundtrip():
    rng = np.random.default_rng(3)
    p = Pose.from_xytheta(0.3, -1.2, 0.7)
    pts = rng.normal(size=(17, 2))
    np.testing.assert_allclose(p.inverse_apply(p.apply(pts)), pts, atol=1e-12)


def test_from_xytheta_matches_manual_rotation():
    p = Pose.from_xytheta(1.0, 2.0, np.pi / 2)
    out = p.apply(np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(out, [[1.0, 3.0]], atol=1e-12)


def test_ray_validation():
    with pytest.raises(ValueError):
        Ray(np.zeros(3), np.zeros(3))  # zero length
    with pytest.raises(ValueError):
        Ray(np.zeros(3), np.array([np.inf, 0.0, 0.0]))
    r = Ray(np.zeros(3), np.array([0.0, 3.0, 4.0]))
    assert r.length == 5.0
    np.testing.assert_allclose(r.direction, [0.0, 0.6, 0.8])


def test_scan_dim_mismatch():
    with pytest.raises(ValueError):
        Scan(Pose.identity(3), np.zeros((4, 2)))


def test_aabb_contains_boundary():
    box = Aabb(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    inside = box.contains(np.array([[0.0, 0.0], [1.0, 2.0], [0.5, 1.0], [1.1, 1.0]]))
    np.testing.assert_array_equal(inside, [True, True, True, False])
    with pytest.raises(ValueError):
        Aabb(np.array([0.0, 1.0]), np.array([1.0, 1.0]))


def test_aabb_cube():
    box = Aabb.cube(np.array([1.0, 1.0, 1.0]), 2.0)
    np.testing.assert_array_equal(box.lo, [-1.0, -1.0, -1.0])
    np.testing.assert_array_equal(box.hi, [3.0, 3.0, 3.0])


def test_to_world_transforms_sensor_points():
    pose = Pose.from_xytheta(1.0, 0.0, np.pi / 2)
    scan = Scan(pose, np.array([[2.0, 0.0]]))  # ahead of the sensor
    (ray,) = to_world(scan)
    np.testing.assert_allclose(ray.origin, [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(ray.endpoint, [1.0, 2.0], atol=1e-12)


def test_to_world_rejects_zero_range_point():
    scan = Scan(Pose.identity(2), np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError, match="1"):
        to_world(scan)


def test_ray_array_roundtrip():
    rays = [Ray(np.zeros(2), np.array([1.0, float(i + 1)])) for i in range(3)]
    o, e = rays_to_arrays(rays)
    back = rays_from_arrays(o, e)
    assert len(back) == 3
    for a, b in zip(rays, back):
        np.testing.assert_array_equal(a.origin, b.origin)
        np.testing.assert_array_equal(a.endpoint, b.endpoint)


def test_scene_transform_roundtrip():
    tf = SceneTransform(np.array([1.0, -2.0]), 4.0, 0)
    pts = np.array([[1.0, -2.0], [5.0, 2.0]])
    canon = tf.to_canonical(pts)
    np.testing.assert_allclose(canon, [[0.0, 0.0], [1.0, 1.0]])
    np.testing.assert_allclose(tf.to_world(canon), pts)


def test_normalize_scene_scale_is_max_half_extent():
    box = Aabb(np.array([-1.0, -4.0]), np.array([3.0, 2.0]))
    rays = [Ray(np.array([0.0, 0.0]), np.array([1.0, 1.0]))]
    canon, tf = normalize_scene(rays, box)
    assert tf.scale == 3.0  # half extents (2, 3)
    np.testing.assert_array_equal(tf.center, [1.0, -1.0])
    np.testing.assert_allclose(canon[0].origin, (np.array([0.0, 0.0]) - tf.center) / 3.0)


def test_normalize_scene_drops_rays_leaving_box():
    box = Aabb(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    keep = Ray(np.array([0.0, 0.0]), np.array([0.5, 0.5]))
    endpoint_out = Ray(np.array([0.0, 0.0]), np.array([2.0, 0.0]))
    origin_out = Ray(np.array([-3.0, 0.0]), np.array([0.5, 0.0]))
    canon, tf = normalize_scene([keep, endpoint_out, origin_out], box)
    assert len(canon) == 1
    assert tf.dropped == 2


def test_normalized_rays_fit_unit_cube():
    rng = np.random.default_rng(0)
    origins = rng.uniform(-5, 5, size=(40, 3))
    endpoints = rng.uniform(-5, 5, size=(40, 3))
    rays = rays_from_arrays(origins, endpoints)
    box = Aabb(-5 * np.ones(3), 5 * np.ones(3))
    canon, _ = normalize_scene(rays, box)
    o, e = rays_to_arrays(canon)
    assert np.all(np.abs(o) <= 1.0 + 1e-12)
    assert np.all(np.abs(e) <= 1.0 + 1e-12)
