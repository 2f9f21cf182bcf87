import numpy as np
import pytest

from scanfield.encoding import default_encoding
from scanfield.field import FieldNet, evaluate_batch, grad_batch, init_field
from scanfield.geom import Aabb, Pose, normalize_scene
from scanfield.scenes import AnalyticScene, ScannerConfig, Sphere, simulate_scan
from scanfield.targets import SupervisionMode
from scanfield.training import (
    AdamState,
    LossWeights,
    OptimConfig,
    _adamw_update,
    adamw_step,
    batch_loss,
    make_batch,
    neighbor_pairs,
    residual,
    train,
)


def small_net(seed=0, dim=2):
    return init_field(seed=seed, dim=dim, hidden=8, hidden_layers=2, encoding=default_encoding(3))


def toy_rays(n=16, seed=0, dim=2):
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, size=n)
    endpoints = np.stack([np.cos(ang), np.sin(ang)], axis=1)[:, :dim]
    origins = np.zeros((n, dim))
    return origins * 0.0, endpoints * 0.9  # keep everything inside the canonical cube


def test_residual_is_absolute_error():
    assert residual(0.3, 0.5) == pytest.approx(0.2)
    assert residual(0.5, 0.3) == pytest.approx(0.2)


def test_neighbor_pairs_shape_and_content():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    pairs = neighbor_pairs(pts, 2)
    assert pairs.shape == (8, 2)  # directed: 4 sources x 2 neighbors
    # point 0's two nearest are 1 and 2
    mine = set(pairs[pairs[:, 0] == 0][:, 1])
    assert mine == {1, 2}
    # k larger than available neighbors degrades gracefully
    assert neighbor_pairs(pts[:1], 4).shape == (0, 2)
    assert neighbor_pairs(pts[:3], 99).shape == (6, 2)


class _OracleField:
    """Exact analytic SDF standing in for a trained net."""

    def __init__(self, scene):
        self.scene = scene

    def sdf(self, pts):
        return self.scene.sdf(pts)

    def jet(self, pts):
        return self.scene.jet(pts)


def test_loss_vanishes_on_exact_planar_field():
    # Vertical rays against the plane y=0: identical normals everywhere, so
    # every term (including neighbor smoothness) is exactly at its optimum.
    from scanfield.scenes import Plane

    oracle = _OracleField(AnalyticScene((Plane(np.array([0.0, 1.0]), 0.0),)))
    xs = np.linspace(-1.0, 1.0, 12)
    origins = np.stack([xs, np.full(12, 2.0)], axis=1)
    endpoints = np.stack([xs, np.zeros(12)], axis=1)
    batch = make_batch(origins, endpoints, samples_per_ray=6, drop_behind_origin=True)
    w = LossWeights(tau=np.inf)
    bd, pg = batch_loss(oracle, batch, w, SupervisionMode.CURVATURE_CONSTRAINED)
    assert bd.data < 1e-9
    assert bd.endpoint < 1e-9
    assert bd.eikonal < 1e-9
    assert bd.smoothness < 1e-9
    assert pg.weights == [] and pg.biases == []


def test_loss_data_term_vanishes_on_exact_circle():
    # On a circle the curvature-matched targets are exact, so the data term
    # vanishes; the smoothness term does NOT (it penalizes the genuinely bent
    # normals of a curved field) and stays strictly positive.
    rng = np.random.default_rng(3)
    n = 24
    ang = rng.uniform(0, 2 * np.pi, size=n)
    endpoints = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    origins = endpoints * 2.5  # outside, shooting inward
    batch = make_batch(origins, endpoints, samples_per_ray=8, drop_behind_origin=True)
    w = LossWeights(tau=np.inf)
    oracle = _OracleField(AnalyticScene((Sphere(np.zeros(2), 1.0),)))
    bd, _ = batch_loss(oracle, batch, w, SupervisionMode.CURVATURE_CONSTRAINED)
    assert bd.data < 1e-9
    assert bd.endpoint < 1e-9
    assert bd.eikonal < 1e-9
    assert 0.0 < bd.smoothness < 0.05


def test_loss_gradients_match_finite_differences():
    net = small_net(seed=4)
    origins, endpoints = toy_rays(6, seed=5)
    batch = make_batch(origins, endpoints, samples_per_ray=5)
    w = LossWeights(knn=3)
    mode = SupervisionMode.CURVATURE_CONSTRAINED

    # batch_loss recomputes targets from whatever net it is handed, which
    # would contaminate a perturbed-parameter objective.  Freeze the targets
    # from the unperturbed net and differentiate only the loss pieces.
    from scanfield.field import backprop, jet_batch
    from scanfield.targets import compute_targets
    from scanfield.training import loss_terms

    vals0, grads0, hess0 = jet_batch(net, batch.positions)
    tg = compute_targets(
        mode, vals0, grads0, hess0, batch.positions, batch.sample_endpoints, tau=w.tau, gamma=w.gamma
    )
    pairs = neighbor_pairs(batch.positions, w.knn)

    def frozen_loss(n):
        v, g = grad_batch(n, batch.positions)
        ev = evaluate_batch(n, batch.endpoints)
        bd, _, _, _ = loss_terms(v, g, ev, tg, pairs, w)
        return bd.total

    v, g = grad_batch(net, batch.positions)
    ev = evaluate_batch(net, batch.endpoints)
    _, val_bar, grad_bar, end_bar = loss_terms(v, g, ev, tg, pairs, w)
    pg = backprop(net, batch.positions, val_bar, grad_bar)
    pg.add(backprop(net, batch.endpoints, end_bar))

    rng = np.random.default_rng(11)
    h = 1e-6
    checked = 0
    for li in range(net.layer_count):
        for _ in range(4):
            r = rng.integers(net.weights[li].shape[0])
            c = rng.integers(net.weights[li].shape[1])
            wp = [x.copy() for x in net.weights]
            wm = [x.copy() for x in net.weights]
            wp[li][r, c] += h
            wm[li][r, c] -= h
            fp = frozen_loss(FieldNet(net.encoding, net.dim, wp, net.biases, net.sine_factors))
            fm = frozen_loss(FieldNet(net.encoding, net.dim, wm, net.biases, net.sine_factors))
            fd = (fp - fm) / (2 * h)
            an = pg.weights[li][r, c]
            # |.| kinks make FD noisy when a residual sits near zero; the
            # seeded batch keeps clear of them at these indices
            assert abs(an - fd) < 1e-3 * max(0.01, abs(fd)), (li, r, c, an, fd)
            checked += 1
    assert checked == 12


def test_adamw_drives_quadratic_to_zero():
    cfg = OptimConfig(lr=1e-2, weight_decay=0.0)
    theta = np.array([1.0])
    m = np.zeros(1)
    v = np.zeros(1)
    for t in range(1, 5001):
        grad = 2.0 * theta  # d/dtheta theta^2
        theta, m, v = _adamw_update(theta, grad, m, v, t, cfg)
    assert abs(theta[0]) < 1e-3


def test_adamw_decoupled_decay_shrinks_parameters():
    cfg = OptimConfig(lr=1e-2, weight_decay=0.5)
    theta = np.array([1.0])
    theta2, _, _ = _adamw_update(theta, np.zeros(1), np.zeros(1), np.zeros(1), 1, cfg)
    # zero gradient: only the decay term acts, theta *= (1 - lr * wd)
    assert theta2[0] == pytest.approx(1.0 - 1e-2 * 0.5)


def test_adamw_first_step_is_lr_sized():
    cfg = OptimConfig(lr=1e-3, weight_decay=0.0)
    theta = np.array([0.0])
    theta2, _, _ = _adamw_update(theta, np.array([7.0]), np.zeros(1), np.zeros(1), 1, cfg)
    # bias correction makes the first step's magnitude ~= lr regardless of scale
    assert abs(abs(theta2[0]) - cfg.lr) < 1e-6


def test_adamw_rejects_nonfinite_gradients():
    net = small_net()
    from scanfield.field import ParamGrads

    grads = ParamGrads.zeros_like(net)
    grads.weights[0][0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        adamw_step(net, grads, OptimConfig(), AdamState.zeros_like(net))


def test_train_history_and_determinism():
    origins, endpoints = toy_rays(12, seed=9)
    optim = OptimConfig(epochs=3, batch_rays=6, samples_per_ray=5, seed=2)
    w = LossWeights()
    net1, hist1 = train(small_net(1), (origins, endpoints), optim, w, SupervisionMode.RAY_DISTANCE)
    net2, hist2 = train(small_net(1), (origins, endpoints), optim, w, SupervisionMode.RAY_DISTANCE)
    assert len(hist1) == 3
    assert [h.total for h in hist1] == [h.total for h in hist2]
    for wa, wb in zip(net1.weights, net2.weights):
        assert np.array_equal(wa, wb)


def test_train_accepts_ray_objects_and_reduces_loss():
    from scanfield.geom import Ray

    scene = AnalyticScene((Sphere(np.array([0.0, 0.0]), 1.0),))
    cfg = ScannerConfig(beams=24, fov=2 * np.pi, max_range=10.0)
    rays = []
    for ang in np.linspace(0, 2 * np.pi, 8, endpoint=False):
        pose = Pose.from_xytheta(2.0 * np.cos(ang), 2.0 * np.sin(ang), 0.0)
        scan = simulate_scan(scene, pose, cfg)
        world = pose.apply(scan.points)
        rays.extend(Ray(pose.translation.copy(), w.copy()) for w in world)
    box = Aabb.cube(np.zeros(2), 3.0)
    canon, tf = normalize_scene(rays, box)
    optim = OptimConfig(epochs=2, batch_rays=64, samples_per_ray=8, seed=0)
    w = LossWeights()
    net = init_field(seed=3, dim=2, hidden=16, hidden_layers=2, encoding=default_encoding(6))
    trained, hist = train(net, canon, optim, w, SupervisionMode.CLOSEST_NORMAL)
    assert hist[-1].data < hist[0].data


def test_warmup_switches_supervision():
    # With warm-up covering every step, curvature mode must reproduce the
    # projection-mode run exactly.
    origins, endpoints = toy_rays(8, seed=13)
    optim = OptimConfig(epochs=2, batch_rays=4, samples_per_ray=5, seed=1, warmup_steps=10_000)
    w = LossWeights()
    a, _ = train(small_net(2), (origins, endpoints), optim, w, SupervisionMode.CURVATURE_CONSTRAINED)
    b, _ = train(small_net(2), (origins, endpoints), optim, w, SupervisionMode.CLOSEST_NORMAL)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    # With zero warm-up the curvature targets actually engage.  The L1 data
    # gradient only sees residual signs, so compare loss values (which see the
    # targets themselves) rather than parameters: untruncated targets differ
    # wherever the net's level sets have finite curvature.
    w_inf = LossWeights(tau=np.inf)
    optim0 = OptimConfig(epochs=1, batch_rays=8, samples_per_ray=5, seed=1, warmup_steps=0)
    _, hist_curv = train(small_net(2), (origins, endpoints), optim0, w_inf, SupervisionMode.CURVATURE_CONSTRAINED)
    _, hist_dcn = train(small_net(2), (origins, endpoints), optim0, w_inf, SupervisionMode.CLOSEST_NORMAL)
    assert hist_curv[0].data != hist_dcn[0].data


def test_make_batch_aligns_sample_endpoints():
    origins, endpoints = toy_rays(3, seed=1)
    batch = make_batch(origins, endpoints, samples_per_ray=4)
    assert batch.positions.shape[0] == 12
    np.testing.assert_array_equal(batch.sample_endpoints, endpoints[batch.ray_index])


def test_config_validation():
    with pytest.raises(ValueError):
        OptimConfig(lr=0.0)
    with pytest.raises(ValueError):
        LossWeights(tau=0.0)
    with pytest.raises(ValueError):
        LossWeights(eikonal=-1.0)
