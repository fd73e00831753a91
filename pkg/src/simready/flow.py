"""Coarse-to-fine voxel refinement by conditional flow matching.

A noisy sample ``x_t = (1 - t) x0 + t eps`` is fed, together with the
upsampled coarse grid and an optional image embedding ``c``, to a small
velocity network trained to regress ``eps - x0``. Sampling integrates the
learned field from pure noise at t=1 back to t=0 with Euler steps and
thresholds at zero. Occupancy is encoded as +1 (occupied) / -1 (empty).

The network is deliberately tiny and written against numpy with explicit
backpropagation so the objective and its gradient can be checked exactly:

* base branch: 3x3x3 neighborhood of ``x_t`` + sinusoidal time features +
  sinusoidal cell-position features + ``c``, linear into ``hidden`` units;
* control branch: 3x3x3 neighborhood of the coarse channel + one-hot
  position of the cell inside its coarse parent, through ``tanh`` and a
  zero-initialized projection added to the base pre-activation;
* head: ``tanh`` -> dense ``hidden2`` -> ``tanh`` -> one output per cell.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .voxel import VoxelGrid, downsample, upsample


class FlowError(ValueError):
    pass


class EmptyBatch(FlowError):
    pass


class ShapeMismatch(FlowError):
    pass


class InconsistentPair(FlowError):
    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(f"pair {index}: {message}")


# --- samples ------------------------------------------------------------------------

def to_signed(grid: VoxelGrid) -> np.ndarray:
    """Dense +1/-1 occupancy indexed [x, y, z]."""
    return np.where(grid.dense(), 1.0, -1.0)


def from_signed(x: np.ndarray) -> VoxelGrid:
    return VoxelGrid.from_dense(np.asarray(x) > 0)


def condition_channel(coarse: VoxelGrid, fine_resolution: int) -> np.ndarray:
    if fine_resolution % coarse.resolution:
        raise FlowError(f"fine resolution {fine_resolution} is not a multiple of {coarse.resolution}")
    return to_signed(upsample(coarse, fine_resolution // coarse.resolution))


@dataclass
class FlowSample:
    x0: np.ndarray
    eps: np.ndarray
    t: float
    condition: np.ndarray
    c: np.ndarray | None = None

    def __post_init__(self):
        if not (np.shape(self.x0) == np.shape(self.eps) == np.shape(self.condition)):
            raise ShapeMismatch(
                f"x0 {np.shape(self.x0)}, eps {np.shape(self.eps)}, condition {np.shape(self.condition)} differ"
            )
        if not 0.0 <= self.t <= 1.0:
            raise FlowError(f"t={self.t} outside [0, 1]")


def interpolate(x0, eps, t: float) -> np.ndarray:
    """``(1 - t) x0 + t eps``."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeMismatch(f"x0 {x0.shape} vs eps {eps.shape}")
    if not 0.0 <= t <= 1.0:
        raise FlowError(f"t={t} outside [0, 1]")
    return (1.0 - t) * x0 + t * eps


def initial_noise(shape, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(shape)


# --- configuration ---------------------------------------------------------------------

@dataclass
class RefinerConfig:
    fine_resolution: int = 32
    coarse_resolution: int = 16
    hidden: int = 32
    hidden2: int = 32
    time_features: int = 8
    position_frequencies: int = 6
    image_dim: int = 0
    steps: int = 800
    learning_rate: float = 5e-3
    batch_size: int = 4
    cells_per_sample: int = 4096
    seed: int = 0
    consistency_tolerance: float = 0.0

    @property
    def factor(self) -> int:
        return self.fine_resolution // self.coarse_resolution

    def validate(self) -> None:
        if self.fine_resolution % self.coarse_resolution:
            raise FlowError("fine_resolution must be a multiple of coarse_resolution")
        if self.time_features % 2:
            raise FlowError("time_features must be even")
        for name in ("hidden", "hidden2", "steps", "batch_size", "cells_per_sample"):
            if getattr(self, name) < 1:
                raise FlowError(f"{name} must be positive")

    @classmethod
    def from_json(cls, text: str) -> "RefinerConfig":
        doc = json.loads(text)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise FlowError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


_OFFSETS = np.array([(dx, dy, dz) for dz in (-1, 0, 1) for dy in (-1, 0, 1) for dx in (-1, 0, 1)])


def time_embedding(t: np.ndarray, n: int) -> np.ndarray:
    """(B, n) sinusoidal features; frequencies pi * 2**k."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    freqs = np.pi * 2.0 ** np.arange(n // 2)
    return np.concatenate([np.sin(t * freqs), np.cos(t * freqs)], axis=1)


class VelocityNet:
    """Parameters live in one flat float64 vector; named views index into it."""

    def __init__(self, config: RefinerConfig, params: np.ndarray | None = None):
        config.validate()
        self.config = config
        c = config
        k = len(_OFFSETS)
        s = c.factor ** 3
        self.shapes = {
            "w_x": (k, c.hidden),
            "w_t": (c.time_features, c.hidden),
            "w_pos": (6 * c.position_frequencies, c.hidden),
            "w_img": (c.image_dim, c.hidden),
            "b1": (c.hidden,),
            "w_cond": (k, c.hidden),
            "w_sub": (s, c.hidden),
            "b_ctrl": (c.hidden,),
            "w_zero": (c.hidden, c.hidden),
            "w2": (c.hidden, c.hidden2),
            "b2": (c.hidden2,),
            "w3": (c.hidden2,),
            "b3": (1,),
        }
        self.size = sum(int(np.prod(sh)) for sh in self.shapes.values())
        if params is None:
            params = self._init(np.random.default_rng(c.seed))
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.size,):
            raise ShapeMismatch(f"expected {self.size} parameters, got {params.shape}")
        self.theta = params.copy()

    def _init(self, rng) -> np.ndarray:
        theta = np.zeros(self.size)
        views = self.views(theta)
        for name, v in views.items():
            if name.startswith("w") and name != "w_zero" and v.size:
                fan_in = v.shape[0]
                v[...] = rng.standard_normal(v.shape) / np.sqrt(fan_in)
        # control projection starts at zero so conditioning is learned from scratch
        return theta

    def views(self, theta: np.ndarray | None = None) -> dict[str, np.ndarray]:
        theta = self.theta if theta is None else theta
        out, at = {}, 0
        for name, sh in self.shapes.items():
            n = int(np.prod(sh))
            out[name] = theta[at:at + n].reshape(sh)
            at += n
        return out

    # -- feature extraction --

    def _patches(self, vol: np.ndarray, pad_value: float, cells: np.ndarray | None) -> np.ndarray:
        """(B, N, 27) neighborhoods of a (B, R, R, R) volume."""
        B, R = vol.shape[0], vol.shape[1]
        padded = np.pad(vol, ((0, 0), (1, 1), (1, 1), (1, 1)), constant_values=pad_value)
        P = R + 2
        flat = padded.reshape(B, -1)
        if cells is None:
            g = np.indices((R, R, R)).reshape(3, -1).T
        else:
            g = cells
        base = (g[:, 0] + 1) * P * P + (g[:, 1] + 1) * P + (g[:, 2] + 1)
        off = _OFFSETS[:, 0] * P * P + _OFFSETS[:, 1] * P + _OFFSETS[:, 2]
        return np.ascontiguousarray(flat[:, base[:, None] + off[None, :]])

    def _subcell(self, R: int, cells: np.ndarray | None) -> np.ndarray:
        f = self.config.factor
        g = np.indices((R, R, R)).reshape(3, -1).T if cells is None else cells
        sub = (g[:, 0] % f) + f * (g[:, 1] % f) + f * f * (g[:, 2] % f)
        return np.eye(f ** 3)[sub]

    def _position(self, R: int, cells: np.ndarray | None) -> np.ndarray:
        g = np.indices((R, R, R)).reshape(3, -1).T if cells is None else cells
        u = (g + 0.5) / R
        freqs = np.pi * 2.0 ** np.arange(self.config.position_frequencies)
        ang = (u[:, :, None] * freqs).reshape(len(g), -1)
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)

    def features(self, xt, t, cond, c=None, cells=None) -> dict:
        xt = np.asarray(xt, dtype=np.float64)
        B, R = xt.shape[0], xt.shape[1]
        feats = {
            "px": self._patches(xt, 0.0, cells),
            "pc": self._patches(np.asarray(cond, dtype=np.float64), -1.0, cells),
            "sub": self._subcell(R, cells),
            "pos": self._position(R, cells),
            "temb": time_embedding(t, self.config.time_features),
            "img": np.zeros((B, self.config.image_dim)) if c is None else np.asarray(c, dtype=np.float64).reshape(B, -1),
        }
        if feats["img"].shape[1] != self.config.image_dim:
            raise ShapeMismatch(f"image condition has {feats['img'].shape[1]} dims, model expects {self.config.image_dim}")
        return feats

    # -- forward / backward --

    def forward(self, feats: dict, theta: np.ndarray | None = None):
        w = self.views(theta)
        px, pc, sub, temb, img = feats["px"], feats["pc"], feats["sub"], feats["temb"], feats["img"]
        per_sample = temb @ w["w_t"] + img @ w["w_img"] + w["b1"]  # (B, H)
        a_ctrl = np.tanh(pc @ w["w_cond"] + (sub @ w["w_sub"])[None] + w["b_ctrl"])  # (B, N, H)
        z1 = px @ w["w_x"] + (feats["pos"] @ w["w_pos"])[None] + per_sample[:, None, :] + a_ctrl @ w["w_zero"]
        a1 = np.tanh(z1)
        a2 = np.tanh(a1 @ w["w2"] + w["b2"])
        out = a2 @ w["w3"] + w["b3"][0]
        cache = {"a_ctrl": a_ctrl, "a1": a1, "a2": a2}
        return out, cache

    def backward(self, feats: dict, cache: dict, dout: np.ndarray, theta: np.ndarray | None = None) -> np.ndarray:
        w = self.views(theta)
        grad = np.zeros(self.size)
        g = self.views(grad)
        a_ctrl, a1, a2 = cache["a_ctrl"], cache["a1"], cache["a2"]
        H2 = a2.shape[-1]
        H = a1.shape[-1]
        g["b3"][0] = dout.sum()
        g["w3"][...] = np.einsum("bn,bnh->h", dout, a2)
        dz2 = (dout[..., None] * w["w3"]) * (1.0 - a2 ** 2)
        g["b2"][...] = dz2.reshape(-1, H2).sum(0)
        g["w2"][...] = a1.reshape(-1, H).T @ dz2.reshape(-1, H2)
        dz1 = (dz2 @ w["w2"].T) * (1.0 - a1 ** 2)
        dz1_flat = dz1.reshape(-1, H)
        g["w_x"][...] = feats["px"].reshape(-1, feats["px"].shape[-1]).T @ dz1_flat
        g["w_zero"][...] = a_ctrl.reshape(-1, H).T @ dz1_flat
        g["w_pos"][...] = feats["pos"].T @ dz1.sum(axis=0)
        dps = dz1.sum(axis=1)  # (B, H)
        g["w_t"][...] = feats["temb"].T @ dps
        g["w_img"][...] = feats["img"].T @ dps
        g["b1"][...] = dps.sum(0)
        dzc = (dz1 @ w["w_zero"].T) * (1.0 - a_ctrl ** 2)
        dzc_flat = dzc.reshape(-1, H)
        g["w_cond"][...] = feats["pc"].reshape(-1, feats["pc"].shape[-1]).T @ dzc_flat
        g["w_sub"][...] = feats["sub"].T @ dzc.sum(axis=0)
        g["b_ctrl"][...] = dzc_flat.sum(0)
        return grad

    def __call__(self, xt, t, cond, c=None) -> np.ndarray:
        """Velocity for full volumes: (B, R, R, R) in, same shape out."""
        xt = np.asarray(xt, dtype=np.float64)
        feats = self.features(xt, t, cond, c)
        out, _ = self.forward(feats)
        return out.reshape(xt.shape)


@dataclass
class RefinerModel:
    config: RefinerConfig
    net: VelocityNet
    loss_curve: list[float] = field(default_factory=list)

    @classmethod
    def initialize(cls, config: RefinerConfig) -> "RefinerModel":
        return cls(config, VelocityNet(config))

    @property
    def n_parameters(self) -> int:
        return self.net.size

    def velocity(self, xt, t, cond, c=None) -> np.ndarray:
        return self.net(xt, t, cond, c)


Velocity = Callable[..., np.ndarray]


def _as_velocity(model) -> Velocity:
    if isinstance(model, RefinerModel):
        return model.velocity
    if isinstance(model, VelocityNet):
        return model
    return model


def _stack(batch: list[FlowSample]):
    if len(batch) == 0:
        raise EmptyBatch("batch has no samples")
    shapes = {np.shape(s.x0) for s in batch}
    if len(shapes) != 1:
        raise ShapeMismatch(f"samples have differing shapes {sorted(shapes)}")
    x0 = np.stack([s.x0 for s in batch]).astype(np.float64)
    eps = np.stack([s.eps for s in batch]).astype(np.float64)
    t = np.array([s.t for s in batch], dtype=np.float64)
    cond = np.stack([s.condition for s in batch]).astype(np.float64)
    cs = [s.c for s in batch]
    c = None if all(v is None for v in cs) else np.stack([np.zeros(0) if v is None else v for v in cs])
    tb = t.reshape((-1,) + (1,) * (x0.ndim - 1))
    xt = (1.0 - tb) * x0 + tb * eps
    return x0, eps, t, cond, c, xt


def flow_loss(model, batch: list[FlowSample]) -> float:
    """Mean over all elements of ``(f(x_t, c, cond, t) - (eps - x0))**2``."""
    x0, eps, t, cond, c, xt = _stack(batch)
    pred = np.asarray(_as_velocity(model)(xt, t, cond, c), dtype=np.float64)
    if pred.shape != x0.shape:
        raise ShapeMismatch(f"model output {pred.shape} vs target {x0.shape}")
    return float(np.mean((pred - (eps - x0)) ** 2))


def loss_and_grad(net: VelocityNet, batch: list[FlowSample], theta: np.ndarray | None = None,
                  cells: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Loss of ``flow_loss`` and its analytic gradient w.r.t. the flat parameters.

    If ``cells`` (N, 3) is given the loss is restricted to those cells.
    """
    x0, eps, t, cond, c, xt = _stack(batch)
    feats = net.features(xt, t, cond, c, cells)
    out, cache = net.forward(feats, theta)
    B = x0.shape[0]
    if cells is None:
        target = (eps - x0).reshape(B, -1)
    else:
        R = x0.shape[1]
        flat = cells[:, 0] * R * R + cells[:, 1] * R + cells[:, 2]
        target = (eps - x0).reshape(B, -1)[:, flat]
    diff = out - target
    loss = float(np.mean(diff ** 2))
    dout = 2.0 * diff / diff.size
    return loss, net.backward(feats, cache, dout, theta)


# --- training ----------------------------------------------------------------------------

def check_pairs(pairs, config: RefinerConfig) -> None:
    if not pairs:
        raise FlowError("dataset is empty")
    for i, (coarse, fine) in enumerate(pairs):
        if coarse.resolution != config.coarse_resolution or fine.resolution != config.fine_resolution:
            raise InconsistentPair(
                i, f"resolutions ({coarse.resolution}, {fine.resolution}) != "
                   f"({config.coarse_resolution}, {config.fine_resolution})"
            )
        down = downsample(fine, config.factor)
        missing = len(np.setdiff1d(coarse.indices, down.indices))
        if len(coarse) and missing / len(coarse) > config.consistency_tolerance:
            raise InconsistentPair(i, f"{missing} coarse cells have no occupied fine child")


class _Adam:
    def __init__(self, size: int, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.k = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        self.k += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad ** 2
        mhat = self.m / (1 - self.b1 ** self.k)
        vhat = self.v / (1 - self.b2 ** self.k)
        theta -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_probe(pairs, config: RefinerConfig, n_t: int = 8, seed: int = 12345,
               image_conditions=None) -> list[FlowSample]:
    """Fixed evaluation batch: every pair at ``n_t`` evenly spaced times."""
    rng = np.random.default_rng(seed)
    out = []
    for i, (coarse, fine) in enumerate(pairs):
        x0 = to_signed(fine)
        cond = condition_channel(coarse, config.fine_resolution)
        c = None if image_conditions is None else image_conditions[i]
        for t in (np.arange(n_t) + 0.5) / n_t:
            out.append(FlowSample(x0, rng.standard_normal(x0.shape), float(t), cond, c))
    return out


def train(pairs, config: RefinerConfig | None = None, image_conditions=None,
          log_every: int = 0, logger=None) -> RefinerModel:
    """Fit the velocity network on (coarse, fine) grid pairs with Adam.

    Each step draws ``batch_size`` pairs, a uniform time and fresh noise per
    sample, and a random subset of ``cells_per_sample`` cells; the recorded
    curve holds the minibatch loss of every step. Fully determined by
    ``config.seed``.
    """
    config = config or RefinerConfig()
    config.validate()
    pairs = list(pairs)
    check_pairs(pairs, config)
    R = config.fine_resolution
    x0s = [to_signed(f) for _, f in pairs]
    conds = [condition_channel(c, R) for c, _ in pairs]
    model = RefinerModel.initialize(config)
    net = model.net
    rng = np.random.default_rng(config.seed + 1)
    opt = _Adam(net.size, config.learning_rate)
    n_cells = min(config.cells_per_sample, R ** 3)
    all_cells = np.indices((R, R, R)).reshape(3, -1).T
    for step in range(config.steps):
        pick = rng.integers(0, len(pairs), config.batch_size)
        ts = rng.random(config.batch_size)
        batch = [
            FlowSample(x0s[k], rng.standard_normal((R, R, R)), float(t), conds[k],
                       None if image_conditions is None else image_conditions[k])
            for k, t in zip(pick, ts)
        ]
        cells = all_cells if n_cells == R ** 3 else all_cells[rng.choice(R ** 3, n_cells, replace=False)]
        loss, grad = loss_and_grad(net, batch, cells=cells)
        model.loss_curve.append(loss)
        opt.step(net.theta, grad)
        if logger is not None and log_every and step % log_every == 0:
            logger.info("step %d loss %.5f", step, loss)
    return model


def loss_curve_csv(curve: list[float]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss"])
    for i, v in enumerate(curve):
        w.writerow([i, repr(float(v))])
    return buf.getvalue()


# --- sampling ------------------------------------------------------------------------------

def integrate(velocity, noise: np.ndarray, cond: np.ndarray, steps: int, c=None) -> np.ndarray:
    """Euler integration of dx/dt = f from t=1 down to t=0 in ``steps`` equal steps."""
    if steps < 1:
        raise FlowError(f"need at least one step, got {steps}")
    f = _as_velocity(velocity)
    x = np.asarray(noise, dtype=np.float64)[None].copy()
    cond = np.asarray(cond, dtype=np.float64)[None]
    cb = None if c is None else np.asarray(c, dtype=np.float64)[None]
    dt = 1.0 / steps
    for k in range(steps, 0, -1):
        t = k * dt
        x = x - dt * np.asarray(f(x, np.array([t]), cond, cb), dtype=np.float64)
    return x[0]


def sample(model, coarse: VoxelGrid, steps: int = 50, seed: int = 0, c=None,
           fine_resolution: int | None = None) -> VoxelGrid:
    """Fine grid from noise, guided by ``coarse``; thresholded at zero."""
    if steps < 1:
        raise FlowError(f"need at least one step, got {steps}")
    if fine_resolution is None:
        if not isinstance(model, RefinerModel):
            raise FlowError("fine_resolution is required for a bare velocity function")
        fine_resolution = model.config.fine_resolution
    R = fine_resolution
    cond = condition_channel(coarse, R)
    x = integrate(model, initial_noise((R, R, R), seed), cond, steps, c)
    return from_signed(x)


# --- checkpoints ----------------------------------------------------------------------------

MAGIC = b"SRFM"
FORMAT_VERSION = 1


def save_model(model: RefinerModel, path) -> None:
    """Binary checkpoint.

    Layout: 4-byte magic ``SRFM``, uint32 version, uint32 header length,
    UTF-8 JSON header ``{"config": ..., "tensors": [[name, shape], ...]}``,
    then every tensor in header order as little-endian float32.
    """
    net = model.net
    header = json.dumps(
        {"config": asdict(model.config), "tensors": [[k, list(v)] for k, v in net.shapes.items()]},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(net.theta.astype("<f4").tobytes())


def load_model(path) -> RefinerModel:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FlowError(f"{path}: not a refiner checkpoint")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise FlowError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    config = RefinerConfig(**header["config"])
    body = np.frombuffer(data[12 + hlen:], dtype="<f4").astype(np.float64)
    net = VelocityNet(config)
    expected = [[k, list(v)] for k, v in net.shapes.items()]
    if header["tensors"] != expected:
        raise FlowError(f"{path}: tensor layout does not match config")
    if body.size != net.size:
        raise FlowError(f"{path}: expected {net.size} values, found {body.size}")
    net.theta = body
    return RefinerModel(config, net)
