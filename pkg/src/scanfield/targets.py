"""Per-sample distance targets for self-supervised field training.

Three interchangeable target modes, all computed from the ray geometry plus
(for the richer two) the field's own first and second derivatives at the
sample:

  RAY_DISTANCE          d_hat = |e - x|, the along-ray distance to the
                        measured endpoint.  Always an overestimate of the true
                        distance unless the beam is normal to the surface.
  CLOSEST_NORMAL        d_hat = n . (e - x) with n the unit direction toward
                        the surface (negated field gradient).  Projects the
                        ray distance onto the surface normal; exact for
                        planes, an overestimate on curved surfaces.
  CURVATURE_CONSTRAINED d_hat = R - sqrt(d^2 + R^2 - 2 R n.(e - x)) where R is
                        the level-set radius of curvature at the sample.  The
                        construction places a center c = x + R n and measures
                        the signed distance from x to the sphere around c
                        through e; when the level sets are concentric circles
                        or spheres this is the true signed distance exactly,
                        for any measured endpoint on the surface.

Targets are pseudo-ground-truth: no optimizer gradient ever flows through
them, so everything here is plain (non-differentiable) arithmetic.

A raw estimate can only come out negative when the field's own derivatives
mislead (the learned normal points away from the measured endpoint, or the
curvature radius is noise); free-space samples are never actually inside the
surface.  Such samples are treated exactly like degenerate gradients and fall
back to the ray distance instead of being clamped to zero — feeding the
clamped zeros back as targets makes the all-zero field self-consistent, and
training provably stalls there from a fresh init.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .geom import Ray

_F = npt.NDArray[np.floating]

GRAD_EPS = 1e-8
ROC_MIN = 1e-3
ROC_MAX = 1e6
DEFAULT_TAU = 0.2
DEFAULT_GAMMA = 3.0


class SupervisionMode(enum.Enum):
    RAY_DISTANCE = "ray"
    CLOSEST_NORMAL = "dcn"
    CURVATURE_CONSTRAINED = "curvature"


class DegenerateGradient(ValueError):
    """Gradient too small to define a surface direction."""


def normal_dir(gradient: _F, eps: float = GRAD_EPS) -> np.ndarray:
    """Unit direction toward the closest surface: the negated, normalized gradient."""
    g = np.asarray(gradient, dtype=np.float64)
    n = float(np.linalg.norm(g))
    if n < eps:
        raise DegenerateGradient(f"gradient norm {n:.3e} below {eps:.1e}")
    return -g / n


def principal_curvature_sum(gradient: _F, hessian: _F, eps: float = GRAD_EPS) -> float:
    """Divergence of the unit gradient: sum of the level set's principal curvatures."""
    g = np.asarray(gradient, dtype=np.float64)
    h = np.asarray(hessian, dtype=np.float64)
    n = float(np.linalg.norm(g))
    if n < eps:
        raise DegenerateGradient(f"gradient norm {n:.3e} below {eps:.1e}")
    return float(np.trace(h) / n - g @ h @ g / n**3)


def mean_curvature(gradient: _F, hessian: _F, eps: float = GRAD_EPS) -> float:
    """Half the principal-curvature sum (the 3D mean-curvature convention)."""
    return 0.5 * principal_curvature_sum(gradient, hessian, eps)


def iso_curvature(
    gradient: _F,
    hessian: _F,
    r_min: float = ROC_MIN,
    r_max: float = ROC_MAX,
    eps: float = GRAD_EPS,
) -> tuple[float, float]:
    """Isotropic curvature of the level set and its radius.

    kappa = |div(grad/|grad|)| / (m - 1), which recovers 1/R on circles and
    spheres alike (the principal-curvature sum counts m - 1 identical
    sections).  The radius 1/kappa is clamped to [r_min, r_max]; flat regions
    (kappa = 0) return r_max.
    """
    m = np.asarray(gradient).shape[0]
    kappa = abs(principal_curvature_sum(gradient, hessian, eps)) / (m - 1)
    if kappa <= 1.0 / r_max:
        return kappa, r_max
    return kappa, float(np.clip(1.0 / kappa, r_min, r_max))


def dcn_distance(n_unit: _F, ray: Ray, x: _F) -> float:
    """Ray distance projected onto the surface-normal direction."""
    n = np.asarray(n_unit, dtype=np.float64)
    return float(n @ (ray.endpoint - np.asarray(x, dtype=np.float64)))


def curvature_distance(r: float, ray: Ray, x: _F, n_unit: _F) -> float:
    """Signed distance to the curvature-matched sphere through the endpoint.

    With center c = x + r * n_unit, returns |x - c| - |e - c|, expanded so the
    radicand d^2 + r^2 - 2 r p (p the normal projection) is clamped at zero to
    absorb rounding; with a unit normal it is analytically >= d^2 - p^2 >= 0.
    """
    xq = np.asarray(x, dtype=np.float64)
    n = np.asarray(n_unit, dtype=np.float64)
    delta = ray.endpoint - xq
    d2 = float(delta @ delta)
    p = float(n @ delta)
    radicand = d2 + r * r - 2.0 * r * p
    return float(r - np.sqrt(max(radicand, 0.0)))


def sample_weight(d_pred_abs: float, d_max: float, gamma: float) -> float:
    """Emphasis weight (d_max - |D|)^gamma, zero at the batch's largest |D|.

    Treated as a constant during optimization; no derivative flows through it.
    """
    return float(max(d_max - d_pred_abs, 0.0) ** gamma)


@dataclass(frozen=True)
class DistanceEstimate:
    """One sample's frozen supervision record."""

    d_hat: float
    weight: float
    roc_query: float
    roc_surface: float
    normal_unit: np.ndarray


def estimate_sample(
    mode: SupervisionMode,
    value: float,
    gradient: _F,
    hessian: _F,
    ray: Ray,
    x: _F,
    d_max: float,
    tau: float = DEFAULT_TAU,
    gamma: float = DEFAULT_GAMMA,
    r_min: float = ROC_MIN,
    r_max: float = ROC_MAX,
) -> DistanceEstimate:
    """Assemble one sample's target.

    Degenerate gradients and negative raw estimates both fall back to the ray
    distance (see the module note on why negatives must not clamp to zero).
    """
    xq = np.asarray(x, dtype=np.float64)
    delta = ray.endpoint - xq
    d = float(np.linalg.norm(delta))
    weight = sample_weight(abs(value), d_max, gamma)
    ray_fallback = mode is SupervisionMode.RAY_DISTANCE
    if not ray_fallback:
        try:
            n = normal_dir(gradient)
            if mode is SupervisionMode.CLOSEST_NORMAL:
                d_raw, roc_q, roc_s = dcn_distance(n, ray, xq), r_max, d
            else:
                _, r = iso_curvature(gradient, hessian, r_min, r_max)
                d_raw = curvature_distance(r, ray, xq, n)
                roc_q, roc_s = r, r - d_raw
            if d_raw < 0.0:
                ray_fallback = True
        except DegenerateGradient:
            ray_fallback = True
    if ray_fallback:
        n = delta / d if d > 0.0 else np.zeros_like(xq)
        d_raw, roc_q, roc_s = d, r_max, d
    return DistanceEstimate(
        d_hat=float(np.clip(d_raw, 0.0, tau)),
        weight=weight,
        roc_query=roc_q,
        roc_surface=roc_s,
        normal_unit=n,
    )


@dataclass
class TargetBatch:
    """Vectorized targets for one training batch, all shape (S, ...)."""

    d_hat: np.ndarray
    weight: np.ndarray
    roc_query: np.ndarray
    roc_surface: np.ndarray
    normal_unit: np.ndarray
    degenerate: np.ndarray


def compute_targets(
    mode: SupervisionMode,
    values: _F,
    gradients: _F,
    hessians: _F,
    positions: _F,
    endpoints: _F,
    tau: float = DEFAULT_TAU,
    gamma: float = DEFAULT_GAMMA,
    grad_eps: float = GRAD_EPS,
    r_min: float = ROC_MIN,
    r_max: float = ROC_MAX,
) -> TargetBatch:
    """Batched target assembly over (S,) values, (S, m) grads, (S, m, m) Hessians.

    ``endpoints`` holds each sample's parent-ray endpoint, row-aligned with
    ``positions``.  Samples whose gradient vanishes or whose raw estimate
    comes out negative fall back to ray distance and are flagged degenerate.
    d_hat is clamped to [0, tau]; weights use the batch maximum of |values|.
    """
    vals = np.asarray(values, dtype=np.float64)
    g = np.asarray(gradients, dtype=np.float64)
    x = np.asarray(positions, dtype=np.float64)
    e = np.asarray(endpoints, dtype=np.float64)
    s, m = x.shape
    if s == 0:
        raise ValueError("empty target batch")
    delta = e - x
    d = np.linalg.norm(delta, axis=1)
    gnorm = np.linalg.norm(g, axis=1)
    degenerate = gnorm < grad_eps
    safe_g = np.maximum(gnorm, grad_eps)
    normal = -g / safe_g[:, None]
    safe_d = np.maximum(d, 1e-300)
    fallback_n = delta / safe_d[:, None]
    roc_query = np.full(s, r_max, dtype=np.float64)
    roc_surface = d.copy()
    if mode is SupervisionMode.RAY_DISTANCE:
        d_raw = d.copy()
        normal = fallback_n
        degenerate = np.zeros(s, dtype=bool)
    elif mode is SupervisionMode.CLOSEST_NORMAL:
        p = np.sum(normal * delta, axis=1)
        degenerate = degenerate | (p < 0.0)
        d_raw = np.where(degenerate, d, p)
        normal = np.where(degenerate[:, None], fallback_n, normal)
    else:
        h = np.asarray(hessians, dtype=np.float64)
        tr = np.einsum("sii->s", h)
        ghg = np.einsum("si,sij,sj->s", g, h, g)
        div = tr / safe_g - ghg / safe_g**3
        kappa = np.abs(div) / (m - 1)
        r = np.where(kappa > 1.0 / r_max, 1.0 / np.maximum(kappa, 1.0 / r_max), r_max)
        r = np.clip(r, r_min, r_max)
        p = np.sum(normal * delta, axis=1)
        radicand = np.maximum(d * d + r * r - 2.0 * r * p, 0.0)
        root = np.sqrt(radicand)
        degenerate = degenerate | (r - root < 0.0)
        d_raw = np.where(degenerate, d, r - root)
        roc_query = np.where(degenerate, r_max, r)
        roc_surface = np.where(degenerate, d, root)
        normal = np.where(degenerate[:, None], fallback_n, normal)
    d_hat = np.clip(d_raw, 0.0, tau)
    d_pred_abs = np.abs(vals)
    d_top = float(np.max(d_pred_abs))
    weight = np.maximum(d_top - d_pred_abs, 0.0) ** gamma
    return TargetBatch(
        d_hat=d_hat,
        weight=weight,
        roc_query=roc_query,
        roc_surface=roc_surface,
        normal_unit=normal,
        degenerate=degenerate,
    )
