"""Loss assembly and optimization for the distance field.

The per-batch loss over ray samples x with frozen targets d_hat and frozen
emphasis weights w is

    sum_l w_l |D(x_l) - d_hat_l| / sum_j w_j            (data)
  + lam_endpoint * mean_i |D(e_i)|                      (surface anchoring)
  + lam_eikonal  * mean_l | |grad D(x_l)| - 1 |         (unit gradient)
  + lam_smooth   * mean_(l,j) (1 - n_l . n_j)           (neighbor normals)

with n the unit negated gradient and (l, j) running over each sample's k
nearest neighbors inside the batch.  Targets and weights never receive
gradient; the field's value and spatial gradient do, and the hand-derived
adjoints are pushed through ``field.backprop``.  The optimizer is AdamW with
decoupled weight decay, written out array by array.

The field argument of ``batch_loss`` may be a FieldNet or any object with
``sdf``/``jet`` batch methods (an analytic scene oracle); the latter gets an
empty parameter gradient, which is how the loss terms themselves are verified
against exact fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.spatial import cKDTree

from . import field as field_mod
from . import sampling
from .field import FieldNet, ParamGrads
from .geom import Ray, rays_to_arrays
from .targets import GRAD_EPS, ROC_MAX, ROC_MIN, SupervisionMode, TargetBatch, compute_targets

_F = npt.NDArray[np.floating]

ADAM_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    """Loss term coefficients and target parameters."""

    endpoint: float = 1e-1
    eikonal: float = 1e-4
    smooth: float = 1e-3
    gamma: float = 3.0
    tau: float = 0.2
    knn: int = 4
    smoothness_literal: bool = False

    def __post_init__(self):
        if min(self.endpoint, self.eikonal, self.smooth, self.gamma) < 0.0:
            raise ValueError("loss coefficients must be nonnegative")
        if self.tau <= 0.0:
            raise ValueError("truncation must be positive (inf allowed)")


@dataclass(frozen=True)
class OptimConfig:
    """Optimizer and schedule settings."""

    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 1e-2
    epochs: int = 10
    batch_rays: int = 512
    seed: int = 0
    samples_per_ray: int = sampling.DEFAULT_SAMPLES
    drop_behind_origin: bool = False
    warmup_steps: int = 0

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 0 or self.batch_rays < 1:
            raise ValueError("bad schedule")


@dataclass(frozen=True)
class LossBreakdown:
    """Unweighted term values; total applies the lambda coefficients."""

    data: float
    endpoint: float
    eikonal: float
    smoothness: float
    total: float


@dataclass
class RayBatch:
    """One batch of rays with their placed samples, row-aligned arrays."""

    origins: np.ndarray
    endpoints: np.ndarray
    positions: np.ndarray
    ray_index: np.ndarray
    sample_endpoints: np.ndarray


def make_batch(
    origins: _F,
    endpoints: _F,
    samples_per_ray: int = sampling.DEFAULT_SAMPLES,
    drop_behind_origin: bool = False,
) -> RayBatch:
    o = np.asarray(origins, dtype=np.float64)
    e = np.asarray(endpoints, dtype=np.float64)
    pos, _, ray_index = sampling.sample_rays_batch(o, e, samples_per_ray, drop_behind_origin)
    return RayBatch(
        origins=o,
        endpoints=e,
        positions=pos,
        ray_index=ray_index,
        sample_endpoints=e[ray_index],
    )


def residual(d_pred: float, d_hat: float) -> float:
    """Absolute prediction error against the frozen target."""
    return abs(d_pred - d_hat)


def neighbor_pairs(positions: _F, k: int) -> np.ndarray:
    """(P, 2) directed index pairs: each sample to its k nearest others."""
    x = np.asarray(positions, dtype=np.float64)
    s = x.shape[0]
    k_eff = min(k, s - 1)
    if k_eff < 1:
        return np.empty((0, 2), dtype=np.intp)
    _, idx = cKDTree(x).query(x, k=k_eff + 1)
    idx = np.atleast_2d(idx)[:, 1:]
    src = np.repeat(np.arange(s, dtype=np.intp), k_eff)
    return np.stack([src, idx.reshape(-1).astype(np.intp)], axis=1)


def _eval_field(net, positions: np.ndarray, order: int):
    """Values plus optional derivatives from a FieldNet or a scene-like oracle."""
    if isinstance(net, FieldNet):
        if order == 2:
            return field_mod.jet_batch(net, positions)
        if order == 1:
            v, g = field_mod.grad_batch(net, positions)
            return v, g, None
        return field_mod.evaluate_batch(net, positions), None, None
    if order >= 1:
        v, g, h = net.jet(positions)
        return v, g, (h if order == 2 else None)
    return net.sdf(positions), None, None


def loss_terms(
    values: _F,
    grads: _F,
    endpoint_values: _F,
    targets: TargetBatch,
    pairs: np.ndarray,
    w: LossWeights,
    grad_eps: float = GRAD_EPS,
):
    """Loss breakdown plus adjoints (dL/dvalue, dL/dgrad, dL/dendpoint_value).

    All reductions run in fixed index order; the adjoints already carry the
    lambda coefficients and normalizations, so the caller only pushes them
    through the network's reverse pass.
    """
    vals = np.asarray(values, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    ev = np.asarray(endpoint_values, dtype=np.float64)
    s = vals.shape[0]
    if s == 0:
        raise ValueError("empty batch")
    wsum = float(np.sum(targets.weight))
    if wsum > 0.0:
        wn = targets.weight / wsum
    else:
        wn = np.full(s, 1.0 / s)
    r = vals - targets.d_hat
    data = float(np.sum(wn * np.abs(r)))
    val_bar = wn * np.sign(r)

    gnorm = np.linalg.norm(g, axis=1)
    eik = float(np.mean(np.abs(gnorm - 1.0)))
    ok = gnorm > grad_eps
    safe = np.maximum(gnorm, grad_eps)
    unit = g / safe[:, None]
    grad_bar = np.where(ok[:, None], (w.eikonal / s) * np.sign(gnorm - 1.0)[:, None] * unit, 0.0)

    if pairs.shape[0] > 0:
        li, lj = pairs[:, 0], pairs[:, 1]
        valid = ok[li] & ok[lj]
        dots = np.sum(unit[li] * unit[lj], axis=1)
        # Unit normals are negated unit gradients; the sign cancels in the dot.
        per_pair = np.where(valid, np.abs(dots) if w.smoothness_literal else 1.0 - dots, 0.0)
        smooth = float(np.sum(per_pair) / pairs.shape[0])
        coef = (np.sign(dots) if w.smoothness_literal else -1.0) * valid / pairs.shape[0]
        contrib_i = coef[:, None] * (unit[lj] - dots[:, None] * unit[li]) / safe[li][:, None]
        contrib_j = coef[:, None] * (unit[li] - dots[:, None] * unit[lj]) / safe[lj][:, None]
        scatter = np.zeros_like(g)
        np.add.at(scatter, li, contrib_i)
        np.add.at(scatter, lj, contrib_j)
        grad_bar = grad_bar + w.smooth * scatter
    else:
        smooth = 0.0

    end_term = float(np.mean(np.abs(ev)))
    end_bar = (w.endpoint / ev.shape[0]) * np.sign(ev)

    total = data + w.endpoint * end_term + w.eikonal * eik + w.smooth * smooth
    breakdown = LossBreakdown(data=data, endpoint=end_term, eikonal=eik, smoothness=smooth, total=total)
    if not math.isfinite(total):
        raise FloatingPointError(f"non-finite loss: {breakdown}")
    return breakdown, val_bar, grad_bar, end_bar


def batch_loss(
    net,
    batch: RayBatch,
    w: LossWeights,
    mode: SupervisionMode,
    grad_eps: float = GRAD_EPS,
    r_min: float = ROC_MIN,
    r_max: float = ROC_MAX,
) -> tuple[LossBreakdown, ParamGrads]:
    """Loss and exact parameter gradient for one batch, targets held constant."""
    if batch.positions.shape[0] == 0:
        raise ValueError("empty batch")
    order = 2 if mode is SupervisionMode.CURVATURE_CONSTRAINED else 1
    vals, grads, hess = _eval_field(net, batch.positions, order)
    targets = compute_targets(
        mode,
        vals,
        grads,
        hess,
        batch.positions,
        batch.sample_endpoints,
        tau=w.tau,
        gamma=w.gamma,
        grad_eps=grad_eps,
        r_min=r_min,
        r_max=r_max,
    )
    ev, _, _ = _eval_field(net, batch.endpoints, 0)
    pairs = neighbor_pairs(batch.positions, w.knn)
    breakdown, val_bar, grad_bar, end_bar = loss_terms(vals, grads, ev, targets, pairs, w, grad_eps)
    if isinstance(net, FieldNet):
        pg = field_mod.backprop(net, batch.positions, val_bar, grad_bar)
        pg.add(field_mod.backprop(net, batch.endpoints, end_bar))
    else:
        pg = ParamGrads(weights=[], biases=[])
    return breakdown, pg


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0

    @staticmethod
    def zeros_like(net: FieldNet) -> "AdamState":
        return AdamState(
            m_w=[np.zeros_like(w) for w in net.weights],
            v_w=[np.zeros_like(w) for w in net.weights],
            m_b=[np.zeros_like(b) for b in net.biases],
            v_b=[np.zeros_like(b) for b in net.biases],
        )


def _adamw_update(theta, grad, m, v, t, cfg: OptimConfig):
    b1, b2 = cfg.betas
    m_new = b1 * m + (1.0 - b1) * grad
    v_new = b2 * v + (1.0 - b2) * grad * grad
    m_hat = m_new / (1.0 - b1**t)
    v_hat = v_new / (1.0 - b2**t)
    step = cfg.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    theta_new = theta - cfg.lr * cfg.weight_decay * theta - step
    return theta_new, m_new, v_new


def adamw_step(net: FieldNet, grads: ParamGrads, cfg: OptimConfig, state: AdamState) -> tuple[FieldNet, AdamState]:
    """One decoupled-weight-decay Adam step; returns fresh net and state."""
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite parameter gradient")
    t = state.t + 1
    new_w, new_b = [], []
    m_w, v_w, m_b, v_b = [], [], [], []
    for i in range(net.layer_count):
        wn, mw, vw = _adamw_update(net.weights[i], grads.weights[i], state.m_w[i], state.v_w[i], t, cfg)
        bn, mb, vb = _adamw_update(net.biases[i], grads.biases[i], state.m_b[i], state.v_b[i], t, cfg)
        new_w.append(wn)
        new_b.append(bn)
        m_w.append(mw)
        v_w.append(vw)
        m_b.append(mb)
        v_b.append(vb)
    net2 = FieldNet(
        encoding=net.encoding,
        dim=net.dim,
        weights=new_w,
        biases=new_b,
        sine_factors=net.sine_factors,
    )
    return net2, AdamState(m_w=m_w, v_w=v_w, m_b=m_b, v_b=v_b, t=t)


def train(
    net: FieldNet,
    rays,
    optim: OptimConfig,
    weights: LossWeights,
    mode: SupervisionMode,
    callback=None,
) -> tuple[FieldNet, list[LossBreakdown]]:
    """Optimize the field over canonical-frame rays.

    ``rays`` is a sequence of Ray or an (origins, endpoints) array pair.
    Epochs reshuffle rays with the seeded generator; each batch recomputes
    targets under ``mode`` (or the projection mode during warm-up steps),
    takes one optimizer step, and the per-epoch mean breakdown is recorded.
    """
    if isinstance(rays, tuple):
        origins, endpoints = (np.asarray(a, dtype=np.float64) for a in rays)
    else:
        origins, endpoints = rays_to_arrays(rays)
    rng = np.random.default_rng(optim.seed)
    state = AdamState.zeros_like(net)
    history: list[LossBreakdown] = []
    n_rays = origins.shape[0]
    step = 0
    for epoch in range(optim.epochs):
        perm = rng.permutation(n_rays)
        parts = np.zeros(4)
        n_batches = 0
        for lo in range(0, n_rays, optim.batch_rays):
            idx = perm[lo : lo + optim.batch_rays]
            batch = make_batch(
                origins[idx], endpoints[idx], optim.samples_per_ray, optim.drop_behind_origin
            )
            eff_mode = mode
            if mode is SupervisionMode.CURVATURE_CONSTRAINED and step < optim.warmup_steps:
                eff_mode = SupervisionMode.CLOSEST_NORMAL
            bd, grads = batch_loss(net, batch, weights, eff_mode)
            net, state = adamw_step(net, grads, optim, state)
            parts += (bd.data, bd.endpoint, bd.eikonal, bd.smoothness)
            n_batches += 1
            step += 1
        parts /= max(n_batches, 1)
        epoch_bd = LossBreakdown(
            data=parts[0],
            endpoint=parts[1],
            eikonal=parts[2],
            smoothness=parts[3],
            total=parts[0] + weights.endpoint * parts[1] + weights.eikonal * parts[2] + weights.smooth * parts[3],
        )
        history.append(epoch_bd)
        if callback is not None:
            callback(epoch, epoch_bd)
    return net, history
