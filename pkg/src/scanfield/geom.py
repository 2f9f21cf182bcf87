"""Core geometric types and the scene normalization used before training.

Points are float64 arrays of shape (m,) with m in {2, 3}; batches are (N, m).
The dimension is fixed per run and everything here works for both values.
World units are meters by convention; the canonical frame produced by
``normalize_scene`` maps the working box onto the cube [-1, 1]^m with a single
uniform scale so that distances (and the eikonal property) survive the change
of coordinates up to that scale factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

_F = npt.NDArray[np.floating]

# Orthonormality / determinant tolerance for pose rotations.
ROT_TOL = 1e-9


def _as_float_array(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))
        raise ValueError(f"{name} contains non-finite entries at index {bad[0].tolist()}")
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid transform taking sensor-frame points to the world frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _as_float_array(self.rotation, "rotation")
        t = _as_float_array(self.translation, "translation")
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError(f"rotation must be square, got shape {r.shape}")
        m = r.shape[0]
        if t.shape != (m,):
            raise ValueError(f"translation shape {t.shape} does not match rotation {r.shape}")
        if not np.allclose(r.T @ r, np.eye(m), atol=ROT_TOL, rtol=0.0):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation determinant is not +1 (reflection or scale)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def dim(self) -> int:
        return self.translation.shape[0]

    def apply(self, points: _F) -> np.ndarray:
        """Map sensor-frame points (..., m) into the world frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse_apply(self, points: _F) -> np.ndarray:
        """Map world-frame points (..., m) into the sensor frame."""
        p = np.asarray(points, dtype=np.float64)
        return (p - self.translation) @ self.rotation

    @staticmethod
    def identity(dim: int) -> "Pose":
        return Pose(np.eye(dim), np.zeros(dim))

    @staticmethod
    def from_xytheta(x: float, y: float, theta: float) -> "Pose":
        return Pose(rot2d(theta), np.array([x, y], dtype=np.float64))


def rot2d(theta: float) -> np.ndarray:
    """Counterclockwise planar rotation matrix."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=np.float64)


@dataclass(frozen=True)
class Ray:
    """Directed segment from a sensor origin to a measured surface point."""

    origin: np.ndarray
    endpoint: np.ndarray

    def __post_init__(self):
        o = _as_float_array(self.origin, "origin")
        e = _as_float_array(self.endpoint, "endpoint")
        if o.shape != e.shape or o.ndim != 1:
            raise ValueError(f"origin/endpoint shapes {o.shape}/{e.shape} are incompatible")
        if float(np.linalg.norm(e - o)) <= 0.0:
            raise ValueError("ray has zero length")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "endpoint", e)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.endpoint - self.origin))

    @property
    def direction(self) -> np.ndarray:
        d = self.endpoint - self.origin
        return d / np.linalg.norm(d)


@dataclass(frozen=True)
class Scan:
    """One range scan: sensor pose plus hit points in the sensor frame."""

    pose: Pose
    points: np.ndarray

    def __post_init__(self):
        p = _as_float_array(self.points, "points")
        if p.ndim != 2 or p.shape[0] == 0:
            raise ValueError(f"points must be a non-empty (N, m) array, got shape {p.shape}")
        if p.shape[1] != self.pose.dim:
            raise ValueError(f"points dim {p.shape[1]} does not match pose dim {self.pose.dim}")
        object.__setattr__(self, "points", p)

    @property
    def dim(self) -> int:
        return self.pose.dim


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box, lo strictly below hi in every coordinate."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _as_float_array(self.lo, "lo")
        hi = _as_float_array(self.hi, "hi")
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"lo/hi shapes {lo.shape}/{hi.shape} are incompatible")
        if not np.all(lo < hi):
            raise ValueError("box must satisfy lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_extent(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def contains(self, points: _F) -> np.ndarray:
        """Boolean mask over (..., m) points, boundary inclusive."""
        p = np.asarray(points, dtype=np.float64)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)

    @staticmethod
    def cube(center, half: float) -> "Aabb":
        c = np.asarray(center, dtype=np.float64)
        return Aabb(c - half, c + half)


def to_world(scan: Scan) -> list[Ray]:
    """Turn a scan into world-frame rays, one per hit point.

    Every ray starts at the sensor position and ends at the transformed hit.
    Raises if any point is non-finite or coincides with the origin.
    """
    pts = scan.points
    bad = ~np.all(np.isfinite(pts), axis=1)
    if np.any(bad):
        raise ValueError(f"scan point {int(np.argmax(bad))} is non-finite")
    world = scan.pose.apply(pts)
    origin = scan.pose.translation
    lengths = np.linalg.norm(world - origin, axis=1)
    if np.any(lengths <= 0.0):
        raise ValueError(f"scan point {int(np.argmax(lengths <= 0.0))} coincides with the sensor origin")
    return [Ray(origin, world[i]) for i in range(world.shape[0])]


def rays_to_arrays(rays) -> tuple[np.ndarray, np.ndarray]:
    """Stack a ray sequence into (origins, endpoints) arrays of shape (R, m)."""
    if len(rays) == 0:
        raise ValueError("empty ray sequence")
    o = np.stack([r.origin for r in rays])
    e = np.stack([r.endpoint for r in rays])
    return o, e


def rays_from_arrays(origins: _F, endpoints: _F) -> list[Ray]:
    o = np.asarray(origins, dtype=np.float64)
    e = np.asarray(endpoints, dtype=np.float64)
    return [Ray(o[i], e[i]) for i in range(o.shape[0])]


@dataclass(frozen=True)
class SceneTransform:
    """Uniform similarity between world and canonical [-1, 1]^m coordinates.

    canonical = (world - center) / scale.  ``scale`` is the world length of one
    canonical unit, so world distances are canonical distances times scale.
    ``dropped`` records how many rays normalization discarded.
    """

    center: np.ndarray
    scale: float
    dropped: int = 0

    def __post_init__(self):
        c = _as_float_array(self.center, "center")
        if self.scale <= 0.0 or not np.isfinite(self.scale):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "dropped", int(self.dropped))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def to_canonical(self, points: _F) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) / self.scale

    def to_world(self, points: _F) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.center


def normalize_scene(rays, box: Aabb) -> tuple[list[Ray], SceneTransform]:
    """Map rays from world coordinates into the canonical cube [-1, 1]^m.

    Rays whose endpoint or origin falls outside ``box`` are dropped (and
    counted on the returned transform); every surviving sample position,
    origin through endpoint, then lies inside the cube.  The scale is the
    largest half-extent of the box, applied uniformly so the distance metric
    is preserved up to that single factor.
    """
    if len(rays) == 0:
        raise ValueError("empty ray sequence")
    o, e = rays_to_arrays(rays)
    keep = box.contains(e) & box.contains(o)
    dropped = int(np.sum(~keep))
    if not np.any(keep):
        raise ValueError("no rays remain inside the box after filtering")
    scale = float(np.max(box.half_extent))
    tf = SceneTransform(center=box.center, scale=scale, dropped=dropped)
    oc = tf.to_canonical(o[keep])
    ec = tf.to_canonical(e[keep])
    return rays_from_arrays(oc, ec), tf
