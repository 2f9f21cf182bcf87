"""Analytic signed-distance scenes with exact derivatives, plus a range scanner.

Every primitive returns its exact signed distance (negative inside) together
with exact gradient and Hessian where the distance is smooth.  At non-smooth
loci (box edges and corners, interior creases, union seams) the jet comes
from the active feature, ties broken by lowest index, and ``nonsmooth_mask``
reports proximity to those loci so callers can exclude them.

The scanner sphere-traces beams through a scene to synthesize range scans:
the input modality for field training, with exact geometry as ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .field import FieldJet
from .geom import Pose, Scan

_F = npt.NDArray[np.floating]

TRACE_EPS = 1e-6
TRACE_SAFETY = 0.99
TRACE_MAX_STEPS = 10_000
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def _pts(points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    return p[None, :] if p.ndim == 1 else p


@dataclass(frozen=True)
class Sphere:
    """Sphere (circle in 2D): distance |x - c| - r, smooth except at the center."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64)
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def sdf(self, points: _F) -> np.ndarray:
        p = _pts(points)
        return np.linalg.norm(p - self.center, axis=1) - self.radius

    def jet(self, points: _F):
        p = _pts(points)
        n, m = p.shape
        rel = p - self.center
        dist = np.linalg.norm(rel, axis=1)
        safe = np.maximum(dist, 1e-300)
        u = rel / safe[:, None]
        # Center singularity: pick a fixed axis direction.
        at_center = dist == 0.0
        if np.any(at_center):
            u[at_center] = 0.0
            u[at_center, 0] = 1.0
        vals = dist - self.radius
        grads = u
        hess = (np.eye(m)[None, :, :] - u[:, :, None] * u[:, None, :]) / safe[:, None, None]
        hess[at_center] = 0.0
        return vals, grads, hess

    def nonsmooth_mask(self, points: _F, tol: float) -> np.ndarray:
        p = _pts(points)
        return np.linalg.norm(p - self.center, axis=1) < tol


@dataclass(frozen=True)
class Plane:
    """Half-space boundary: distance n.x - offset, positive on the normal side."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        norm = float(np.linalg.norm(n))
        if norm == 0.0:
            raise ValueError("plane normal must be nonzero")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    @property
    def dim(self) -> int:
        return self.normal.shape[0]

    def sdf(self, points: _F) -> np.ndarray:
        return _pts(points) @ self.normal - self.offset

    def jet(self, points: _F):
        p = _pts(points)
        n, m = p.shape
        vals = p @ self.normal - self.offset
        grads = np.broadcast_to(self.normal, (n, m)).copy()
        hess = np.zeros((n, m, m), dtype=np.float64)
        return vals, grads, hess

    def nonsmooth_mask(self, points: _F, tol: float) -> np.ndarray:
        return np.zeros(_pts(points).shape[0], dtype=bool)


@dataclass(frozen=True)
class Box:
    """Axis-aligned solid box; exact distance inside and out.

    Outside, the closest feature is a face, edge, or corner depending on how
    many coordinates exceed the half-extents; the Hessian is the cylindrical /
    spherical bending around that feature.  Inside, the distance is the
    largest (negative) face deficit and the field is locally planar.
    """

    center: np.ndarray
    half: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64)
        h = np.asarray(self.half, dtype=np.float64)
        if c.shape != h.shape or np.any(h <= 0.0):
            raise ValueError("box half-extents must be positive and match the center")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half", h)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def _q(self, points: _F) -> tuple[np.ndarray, np.ndarray]:
        rel = _pts(points) - self.center
        return np.abs(rel) - self.half, np.where(rel >= 0.0, 1.0, -1.0)

    def sdf(self, points: _F) -> np.ndarray:
        q, _ = self._q(points)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside

    def jet(self, points: _F):
        p = _pts(points)
        n, m = p.shape
        q, sign = self._q(p)
        pos = np.maximum(q, 0.0)
        out_dist = np.linalg.norm(pos, axis=1)
        is_out = out_dist > 0.0
        vals = np.where(is_out, out_dist, np.max(q, axis=1))
        grads = np.zeros((n, m), dtype=np.float64)
        hess = np.zeros((n, m, m), dtype=np.float64)
        if np.any(is_out):
            safe = np.maximum(out_dist, 1e-300)
            g_out = sign * pos / safe[:, None]
            active = (q > 0.0).astype(np.float64)
            # H_ij = (delta_ij [q_i > 0] - g_i g_j) / D on the active axes.
            h_out = -g_out[:, :, None] * g_out[:, None, :]
            idx = np.arange(m)
            h_out[:, idx, idx] += active
            h_out /= safe[:, None, None]
            grads[is_out] = g_out[is_out]
            hess[is_out] = h_out[is_out]
        ins = ~is_out
        if np.any(ins):
            face = np.argmax(q[ins], axis=1)
            rows = np.arange(np.sum(ins))
            g_in = np.zeros((rows.size, m), dtype=np.float64)
            s = sign[ins][rows, face]
            s = np.where(s == 0.0, 1.0, s)
            g_in[rows, face] = s
            grads[ins] = g_in
        return vals, grads, hess

    def nonsmooth_mask(self, points: _F, tol: float) -> np.ndarray:
        q, _ = self._q(points)
        out_dist = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        # Outside: near a face-extension boundary (feature set changes there).
        near_boundary = np.any(np.abs(q) < tol, axis=1) & (out_dist > 0.0)
        # Inside: two face deficits within tol of each other (crease).
        srt = np.sort(q, axis=1)
        crease = (out_dist == 0.0) & (srt[:, -1] - srt[:, -2] < tol)
        return near_boundary | crease


@dataclass(frozen=True)
class ConvexPolygon2D:
    """Convex polygon, counterclockwise vertices; exact distance both sides."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("need at least 3 vertices of shape (k, 2)")
        edges = np.roll(v, -1, axis=0) - v
        cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if np.all(cross < 0.0):
            v = v[::-1].copy()
            edges = np.roll(v, -1, axis=0) - v
            cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if not np.all(cross > 0.0):
            raise ValueError("vertices must form a strictly convex polygon")
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self) -> int:
        return 2

    def _features(self, points: _F):
        """Per-edge line distances, segment parameters, and vertex geometry."""
        p = _pts(points)
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        elen = np.linalg.norm(e, axis=1)
        tang = e / elen[:, None]
        nrm = np.stack([tang[:, 1], -tang[:, 0]], axis=1)  # outward for CCW
        rel = p[:, None, :] - v[None, :, :]
        line = np.einsum("pki,ki->pk", rel, nrm)
        t = np.einsum("pki,ki->pk", rel, tang)
        return p, v, nrm, tang, line, t, elen

    def sdf(self, points: _F) -> np.ndarray:
        p, v, nrm, tang, line, t, elen = self._features(points)
        inside = np.all(line <= 0.0, axis=1)
        tc = np.clip(t, 0.0, elen[None, :])
        closest = v[None, :, :] + tc[:, :, None] * tang[None, :, :]
        seg = np.min(np.linalg.norm(p[:, None, :] - closest, axis=2), axis=1)
        return np.where(inside, np.max(line, axis=1), seg)

    def jet(self, points: _F):
        p, v, nrm, tang, line, t, elen = self._features(points)
        n = p.shape[0]
        inside = np.all(line <= 0.0, axis=1)
        tc = np.clip(t, 0.0, elen[None, :])
        closest = v[None, :, :] + tc[:, :, None] * tang[None, :, :]
        dists = np.linalg.norm(p[:, None, :] - closest, axis=2)
        best = np.argmin(dists, axis=1)
        rows = np.arange(n)
        vals = np.where(inside, np.max(line, axis=1), dists[rows, best])
        grads = np.zeros((n, 2), dtype=np.float64)
        hess = np.zeros((n, 2, 2), dtype=np.float64)
        # Inside: planar field of the nearest edge line.
        face = np.argmax(line, axis=1)
        grads[inside] = nrm[face[inside]]
        # Outside: edge-interior feature is planar, vertex feature bends.
        out = ~inside
        if np.any(out):
            bo = best[out]
            on_edge = (t[out, bo] > 0.0) & (t[out, bo] < elen[bo])
            oi = np.where(out)[0]
            grads[oi[on_edge]] = nrm[bo[on_edge]]
            at_vertex = ~on_edge
            vi = oi[at_vertex]
            if vi.size:
                rel = p[vi] - closest[vi, best[vi]]
                d = np.maximum(np.linalg.norm(rel, axis=1), 1e-300)
                u = rel / d[:, None]
                grads[vi] = u
                hess[vi] = (np.eye(2)[None] - u[:, :, None] * u[:, None, :]) / d[:, None, None]
        return vals, grads, hess

    def nonsmooth_mask(self, points: _F, tol: float) -> np.ndarray:
        p, v, nrm, tang, line, t, elen = self._features(points)
        inside = np.all(line <= 0.0, axis=1)
        # Inside creases: two edge lines nearly tied.
        srt = np.sort(line, axis=1)
        crease = inside & (srt[:, -1] - srt[:, -2] < tol)
        # Outside: near an edge/vertex feature boundary.
        near_split = np.any((np.abs(t) < tol) | (np.abs(t - elen[None, :]) < tol), axis=1) & ~inside
        return crease | near_split


@dataclass(frozen=True)
class AnalyticScene:
    """Union (pointwise min) of primitives sharing one dimension."""

    primitives: tuple

    def __post_init__(self):
        prims = tuple(self.primitives)
        if not prims:
            raise ValueError("scene needs at least one primitive")
        dims = {p.dim for p in prims}
        if len(dims) != 1:
            raise ValueError(f"mixed primitive dimensions {sorted(dims)}")
        object.__setattr__(self, "primitives", prims)

    @property
    def dim(self) -> int:
        return self.primitives[0].dim

    def _all_sdf(self, points: _F) -> np.ndarray:
        return np.stack([p.sdf(points) for p in self.primitives], axis=1)

    def sdf(self, points: _F) -> np.ndarray:
        return np.min(self._all_sdf(points), axis=1)

    def active_index(self, points: _F) -> np.ndarray:
        """Index of the winning primitive; argmin takes the lowest on ties."""
        return np.argmin(self._all_sdf(points), axis=1)

    def jet(self, points: _F):
        p = _pts(points)
        n, m = p.shape
        active = self.active_index(p)
        vals = np.empty(n, dtype=np.float64)
        grads = np.empty((n, m), dtype=np.float64)
        hess = np.empty((n, m, m), dtype=np.float64)
        for i, prim in enumerate(self.primitives):
            sel = active == i
            if np.any(sel):
                v, g, h = prim.jet(p[sel])
                vals[sel] = v
                grads[sel] = g
                hess[sel] = h
        return vals, grads, hess

    def nonsmooth_mask(self, points: _F, tol: float = 1e-6) -> np.ndarray:
        p = _pts(points)
        all_d = self._all_sdf(p)
        mask = np.zeros(p.shape[0], dtype=bool)
        for i, prim in enumerate(self.primitives):
            mask |= prim.nonsmooth_mask(p, tol)
        if len(self.primitives) > 1:
            srt = np.sort(all_d, axis=1)
            mask |= srt[:, 1] - srt[:, 0] < tol  # union seam
        return mask


def oracle_sdf(scene: AnalyticScene, x: _F) -> float:
    return float(scene.sdf(np.asarray(x, dtype=np.float64)[None, :])[0])


def oracle_jet(scene: AnalyticScene, x: _F) -> FieldJet:
    v, g, h = scene.jet(np.asarray(x, dtype=np.float64)[None, :])
    return FieldJet(value=float(v[0]), gradient=g[0], hessian=h[0])


@dataclass(frozen=True)
class ScannerConfig:
    """Virtual range scanner parameters; fov is the full angular spread."""

    beams: int = 64
    fov: float = 2.0 * math.pi
    max_range: float = 100.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.beams < 1:
            raise ValueError("need at least one beam")
        if self.max_range <= 0.0:
            raise ValueError("max range must be positive")
        if not 0.0 < self.fov <= 2.0 * math.pi:
            raise ValueError("fov must be in (0, 2*pi]")


def beam_directions(cfg: ScannerConfig, dim: int) -> np.ndarray:
    """Unit beam directions in the sensor frame, centered on the +x axis.

    2D: evenly spaced across the fov arc (bin centers, so a full-circle fov
    has no duplicate beam).  3D: a golden-angle spiral over the spherical cap
    of half-angle fov/2 around +x, which spreads beams nearly uniformly.
    """
    k = np.arange(cfg.beams, dtype=np.float64)
    if dim == 2:
        ang = cfg.fov * ((k + 0.5) / cfg.beams - 0.5)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if dim == 3:
        cap = math.cos(cfg.fov / 2.0)
        u = 1.0 - (1.0 - cap) * (k + 0.5) / cfg.beams
        rad = np.sqrt(np.maximum(1.0 - u * u, 0.0))
        phi = GOLDEN_ANGLE * k
        return np.stack([u, rad * np.cos(phi), rad * np.sin(phi)], axis=1)
    raise ValueError(f"unsupported dimension {dim}")


def sphere_trace(scene: AnalyticScene, origins: _F, directions: _F, max_range: float):
    """March each ray by the local distance value until it hits or escapes.

    Returns (hit mask, range) arrays.  The 0.99 step safety factor is enough
    because the scene distances are exact; termination at |D| < 1e-6.
    """
    o = np.asarray(origins, dtype=np.float64)
    u = np.asarray(directions, dtype=np.float64)
    n = o.shape[0]
    t = np.zeros(n, dtype=np.float64)
    hit = np.zeros(n, dtype=bool)
    alive = np.ones(n, dtype=bool)
    for _ in range(TRACE_MAX_STEPS):
        if not np.any(alive):
            break
        idx = np.where(alive)[0]
        d = scene.sdf(o[idx] + t[idx, None] * u[idx])
        close = np.abs(d) < TRACE_EPS
        hit[idx[close]] = True
        alive[idx[close]] = False
        step = TRACE_SAFETY * d[~close]
        rest = idx[~close]
        t[rest] += step
        escaped = t[rest] > max_range
        alive[rest[escaped]] = False
    return hit, t


def simulate_scan(scene: AnalyticScene, pose: Pose, cfg: ScannerConfig, rng=None) -> Scan:
    """Synthesize one scan by tracing the scanner's beams from the pose.

    Misses (beam escapes past max range) are dropped; optional Gaussian range
    noise perturbs hit distances.  The pose origin must be in free space.
    Passing an external generator chains noise across scans; by default a
    fresh seeded generator makes the scan self-deterministic.
    """
    if oracle_sdf(scene, pose.translation) <= 0.0:
        raise ValueError("scanner pose is not in free space")
    dirs = beam_directions(cfg, scene.dim) @ pose.rotation.T
    origins = np.broadcast_to(pose.translation, dirs.shape)
    hit, t = sphere_trace(scene, origins, dirs, cfg.max_range)
    if not np.any(hit):
        raise ValueError("all beams missed the scene")
    ranges = t[hit]
    if cfg.noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        ranges = ranges + cfg.noise_sigma * rng.standard_normal(ranges.shape)
    endpoints = pose.translation + ranges[:, None] * dirs[hit]
    return Scan(pose=pose, points=pose.inverse_apply(endpoints))


def scene_bounds(scene: AnalyticScene, pad: float = 0.0):
    """Loose bounding box over bounded primitives; None if none are bounded."""
    lo = None
    hi = None
    for p in scene.primitives:
        if isinstance(p, Sphere):
            plo, phi = p.center - p.radius, p.center + p.radius
        elif isinstance(p, Box):
            plo, phi = p.center - p.half, p.center + p.half
        elif isinstance(p, ConvexPolygon2D):
            plo, phi = p.vertices.min(axis=0), p.vertices.max(axis=0)
        else:
            continue
        lo = plo if lo is None else np.minimum(lo, plo)
        hi = phi if hi is None else np.maximum(hi, phi)
    if lo is None:
        return None
    from .geom import Aabb

    return Aabb(lo - pad, hi + pad)


def parse_scene_text(text: str) -> AnalyticScene:
    """Build a scene from one primitive per line, implicit union.

    Grammar (floats whitespace-separated, '#' comments):
        sphere cx cy cz r        circle cx cy r
        box cx cy cz hx hy hz    box cx cy hx hy
        plane nx ny nz d         plane nx ny d
        polygon x1 y1 x2 y2 x3 y3 ...
    """
    prims = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, args = parts[0].lower(), parts[1:]
        try:
            vals = [float(a) for a in args]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: non-numeric argument in {line!r}") from exc
        if kind == "sphere" and len(vals) == 4:
            prims.append(Sphere(np.array(vals[:3]), vals[3]))
        elif kind == "circle" and len(vals) == 3:
            prims.append(Sphere(np.array(vals[:2]), vals[2]))
        elif kind == "box" and len(vals) == 6:
            prims.append(Box(np.array(vals[:3]), np.array(vals[3:])))
        elif kind == "box" and len(vals) == 4:
            prims.append(Box(np.array(vals[:2]), np.array(vals[2:])))
        elif kind == "plane" and len(vals) == 4:
            prims.append(Plane(np.array(vals[:3]), vals[3]))
        elif kind == "plane" and len(vals) == 3:
            prims.append(Plane(np.array(vals[:2]), vals[2]))
        elif kind == "polygon" and len(vals) >= 6 and len(vals) % 2 == 0:
            prims.append(ConvexPolygon2D(np.array(vals).reshape(-1, 2)))
        else:
            raise ValueError(f"line {lineno}: unrecognized primitive {line!r}")
    return AnalyticScene(tuple(prims))


def parse_scene_file(path) -> AnalyticScene:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scene_text(fh.read())
