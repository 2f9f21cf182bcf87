"""Along-ray sample placement for self-supervised distance training.

Each sensor ray from origin o to measured endpoint e is sampled at parameters
t along x(t) = o + t (e - o) given by

    t_l = (1 - 10^(l / (n - 1) - 1)) / 0.9,   l = 1 .. n

which is a geometric progression in distance from the endpoint: samples pile
up near the measured surface where supervision is most informative, thin out
toward the sensor, and the final parameter is slightly negative (a probe just
behind the sensor origin).  For n = 40 the schedule runs from t ~ 0.9932 down
through exactly 0 at l = 39 to t ~ -0.0677 at l = 40.

The along-ray distance to the endpoint is d = (1 - t) * |e - o|, which the
batch helper returns precomputed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .geom import Ray

_F = npt.NDArray[np.floating]

DEFAULT_SAMPLES = 40


def schedule(n: int) -> np.ndarray:
    """Interpolation parameters t_1..t_n, strictly decreasing."""
    if n < 2:
        raise ValueError(f"need at least 2 samples per ray, got {n}")
    ell = np.arange(1, n + 1, dtype=np.float64)
    return (1.0 - 10.0 ** (ell / (n - 1) - 1.0)) / 0.9


@dataclass(frozen=True)
class RaySample:
    """One training sample on a ray."""

    position: np.ndarray
    t: float
    ray_distance: float
    ray: Ray


def sample_ray(ray: Ray, n: int = DEFAULT_SAMPLES, drop_behind_origin: bool = False) -> list[RaySample]:
    """Place n schedule samples on one ray."""
    t = schedule(n)
    if drop_behind_origin:
        t = t[t >= 0.0]
    length = ray.length
    seg = ray.endpoint - ray.origin
    out = []
    for ti in t:
        out.append(
            RaySample(
                position=ray.origin + ti * seg,
                t=float(ti),
                ray_distance=float((1.0 - ti) * length),
                ray=ray,
            )
        )
    return out


def sample_rays_batch(
    origins: _F,
    endpoints: _F,
    n: int = DEFAULT_SAMPLES,
    drop_behind_origin: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized sampling over (R, m) ray arrays.

    Returns positions (R*L, m), endpoint distances (R*L,), and the parent ray
    index (R*L,) with L samples per ray, ray-major order.
    """
    o = np.asarray(origins, dtype=np.float64)
    e = np.asarray(endpoints, dtype=np.float64)
    if o.shape != e.shape or o.ndim != 2:
        raise ValueError(f"origin/endpoint arrays must share shape (R, m), got {o.shape}/{e.shape}")
    t = schedule(n)
    if drop_behind_origin:
        t = t[t >= 0.0]
    r, m = o.shape
    el = t.size
    seg = e - o
    lengths = np.linalg.norm(seg, axis=1)
    if np.any(lengths <= 0.0):
        raise ValueError("zero-length ray in batch")
    pos = o[:, None, :] + t[None, :, None] * seg[:, None, :]
    dist = (1.0 - t)[None, :] * lengths[:, None]
    ray_index = np.repeat(np.arange(r, dtype=np.intp), el)
    return pos.reshape(r * el, m), dist.reshape(r * el), ray_index
