import numpy as np
import pytest

from simready.flow import (
    EmptyBatch,
    FlowError,
    FlowSample,
    InconsistentPair,
    RefinerConfig,
    RefinerModel,
    ShapeMismatch,
    VelocityNet,
    check_pairs,
    flow_loss,
    from_signed,
    integrate,
    interpolate,
    load_model,
    loss_and_grad,
    loss_curve_csv,
    sample,
    save_model,
    to_signed,
)
from simready.voxel import VoxelGrid, downsample, upsample

SMALL = dict(fine_resolution=8, coarse_resolution=4, hidden=8, hidden2=8, time_features=4,
             position_frequencies=1, image_dim=2)


def pair(R=8, f=2, seed=0):
    rng = np.random.default_rng(seed)
    occ = np.zeros((R,) * 3, bool)
    lo = rng.integers(0, R // 2, 3)
    hi = lo + rng.integers(2, R // 2 + 1, 3)
    occ[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = True
    fine = VoxelGrid.from_dense(occ)
    return downsample(fine, f), fine


def batch(rng, R=8, n=3, image_dim=0):
    out = []
    for k in range(n):
        coarse, fine = pair(R, seed=k)
        c = rng.standard_normal(image_dim) if image_dim else None
        out.append(FlowSample(to_signed(fine), rng.standard_normal((R,) * 3), float(rng.random()),
                              to_signed(upsample(coarse, 2)), c))
    return out


def test_interpolate_endpoints():
    x0, eps = np.ones((2, 2, 2)), np.full((2, 2, 2), 3.0)
    assert np.array_equal(interpolate(x0, eps, 0), x0)
    assert np.array_equal(interpolate(x0, eps, 1), eps)
    assert np.array_equal(interpolate(x0, eps, 0.5), np.full((2, 2, 2), 2.0))
    with pytest.raises(FlowError):
        interpolate(x0, eps, 1.5)
    with pytest.raises(ShapeMismatch):
        interpolate(x0, eps[:1], 0.5)


def test_signed_round_trip():
    g = VoxelGrid(4, [0, 5, 63])
    assert from_signed(to_signed(g)) == g
    assert set(np.unique(to_signed(g)).tolist()) == {-1.0, 1.0}


def test_oracle_field_has_zero_loss():
    rng = np.random.default_rng(0)
    b = batch(rng)
    # stacked in the same order as the batch, so the oracle can see x0 and eps
    x0 = np.stack([s.x0 for s in b])
    eps = np.stack([s.eps for s in b])
    assert flow_loss(lambda xt, t, cond, c: eps - x0, b) == 0.0
    assert flow_loss(lambda xt, t, cond, c: eps - x0 + 0.5, b) == pytest.approx(0.25)


@pytest.mark.parametrize("steps", [1, 2, 7, 50])
def test_euler_with_oracle_recovers_x0(steps):
    rng = np.random.default_rng(steps)
    x0 = to_signed(pair()[1])
    eps = rng.standard_normal(x0.shape)
    out = integrate(lambda xt, t, cond, c: (eps - x0)[None], eps, np.zeros_like(x0), steps)
    assert np.abs(out - x0).max() <= 1e-12
    assert from_signed(out) == from_signed(x0)


def test_small_model_parameter_budget():
    assert VelocityNet(RefinerConfig(**SMALL)).size <= 1000


@pytest.mark.parametrize("with_cells", [False, True])
def test_gradient_matches_finite_differences(with_cells):
    cfg = RefinerConfig(**SMALL)
    net = VelocityNet(cfg)
    rng = np.random.default_rng(3)
    # every parameter nonzero so each path of the network carries gradient
    theta = rng.standard_normal(net.size) * 0.3
    b = batch(rng, image_dim=cfg.image_dim)
    cells = rng.integers(0, 8, (40, 3)) if with_cells else None
    _, grad = loss_and_grad(net, b, theta, cells)
    h = 1e-6
    for i in range(net.size):
        e = np.zeros(net.size)
        e[i] = h
        lp, _ = loss_and_grad(net, b, theta + e, cells)
        lm, _ = loss_and_grad(net, b, theta - e, cells)
        fd = (lp - lm) / (2 * h)
        assert abs(grad[i] - fd) <= 1e-4 * max(abs(fd), abs(grad[i]), 1e-3), (i, grad[i], fd)


def test_loss_and_grad_agrees_with_flow_loss():
    cfg = RefinerConfig(**SMALL)
    model = RefinerModel.initialize(cfg)
    b = batch(np.random.default_rng(4), image_dim=2)
    loss, _ = loss_and_grad(model.net, b)
    assert loss == pytest.approx(flow_loss(model, b), rel=1e-12)


def test_batch_errors():
    with pytest.raises(EmptyBatch):
        flow_loss(lambda *a: 0, [])
    with pytest.raises(ShapeMismatch):
        FlowSample(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), 0.5, np.zeros((4, 4, 4)))
    with pytest.raises(FlowError):
        FlowSample(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), -0.1, np.zeros((2, 2, 2)))
    cfg = RefinerConfig(**SMALL)
    b = batch(np.random.default_rng(0), image_dim=0)
    b = [FlowSample(s.x0, s.eps, s.t, s.condition, np.zeros(5)) for s in b]
    with pytest.raises(ShapeMismatch):
        flow_loss(RefinerModel.initialize(cfg), b)


def test_check_pairs():
    cfg = RefinerConfig(**SMALL)
    coarse, fine = pair()
    check_pairs([(coarse, fine)], cfg)
    with pytest.raises(FlowError):
        check_pairs([], cfg)
    with pytest.raises(InconsistentPair) as exc:
        check_pairs([(coarse, fine), (VoxelGrid.full(4), fine)], cfg)
    assert exc.value.index == 1
    with pytest.raises(InconsistentPair):
        check_pairs([(VoxelGrid(8), fine)], cfg)


def test_config_json():
    cfg = RefinerConfig(**SMALL)
    assert RefinerConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(FlowError):
        RefinerConfig.from_json('{"bogus": 1}')
    with pytest.raises(FlowError):
        RefinerConfig.from_json('{"fine_resolution": 10, "coarse_resolution": 4}')


def test_checkpoint_round_trip(tmp_path):
    model = RefinerModel.initialize(RefinerConfig(**SMALL, seed=9))
    model.net.theta += np.random.default_rng(0).standard_normal(model.net.size)
    path = tmp_path / "m.srfm"
    save_model(model, path)
    back = load_model(path)
    assert back.config == model.config
    assert np.array_equal(back.net.theta, model.net.theta.astype(np.float32).astype(np.float64))
    save_model(back, tmp_path / "again.srfm")
    assert (tmp_path / "again.srfm").read_bytes() == path.read_bytes()
    (tmp_path / "bad").write_bytes(b"nope" + path.read_bytes()[4:])
    with pytest.raises(FlowError):
        load_model(tmp_path / "bad")
    (tmp_path / "short").write_bytes(path.read_bytes()[:-4])
    with pytest.raises(FlowError):
        load_model(tmp_path / "short")


def test_training_is_deterministic_and_learns():
    from simready.flow import train
    from simready.metrics import voxel_iou
    coarse, fine = pair(seed=2)
    cfg = RefinerConfig(**dict(SMALL, image_dim=0, hidden=16, hidden2=16), steps=300, learning_rate=1e-2,
                        batch_size=2, cells_per_sample=512)
    a = train([(coarse, fine)], cfg)
    b = train([(coarse, fine)], cfg)
    assert a.loss_curve == b.loss_curve
    head, tail = np.mean(a.loss_curve[:20]), np.mean(a.loss_curve[-20:])
    assert tail < 0.5 * head
    assert sample(a, coarse, steps=20, seed=1) == sample(b, coarse, steps=20, seed=1)
    assert voxel_iou(sample(a, coarse, steps=20, seed=1), fine) >= 0.8
    lines = loss_curve_csv(a.loss_curve).splitlines()
    assert lines[0] == "step,loss" and len(lines) == 301


def test_sample_errors():
    with pytest.raises(FlowError):
        sample(lambda *a: 0, VoxelGrid(4), steps=0)
    with pytest.raises(FlowError):
        sample(lambda *a: 0, VoxelGrid(4))
