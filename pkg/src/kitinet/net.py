"""Small dense-network engine with hand-written reverse mode.

Layers are numbered 1..depth.  Layer 1 maps ``input_dim -> hidden_dim``,
layers 2..depth-1 are hidden-to-hidden, and layer ``depth`` is the linear
readout.  Only hidden-to-hidden layers can carry a skip connection or be
replaced by the collision operator, since both need matching widths.
"""
import copy
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceDetected, InvalidConfig, StaleTape
from .kernel import KitiConfig, kitinet_forward, kitinet_vjp, replay_forward
from .rng import STREAM_KITI, STREAM_NET_DATA, STREAM_NET_INIT, as_generator, stream

LEAKY_SLOPE = 0.01
ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "tanh")
SINE_DOMAIN = (-4.0, 2.0)


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int = 5
    hidden_dim: int = 50
    output_dim: int = 1
    depth: int = 3
    activation: str = "relu"
    skip_connections: bool = False
    kiti_layers: tuple = ()
    gamma: float = 4.0
    kiti: KitiConfig = field(default_factory=KitiConfig)

    def __post_init__(self):
        object.__setattr__(self, "kiti_layers", tuple(sorted(set(int(i) for i in self.kiti_layers))))
        if self.depth < 2:
            raise InvalidConfig(f"depth must be >= 2, got {self.depth}")
        if min(self.input_dim, self.hidden_dim, self.output_dim) < 1:
            raise InvalidConfig("layer widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(f"unknown activation {self.activation!r}")
        bad = [i for i in self.kiti_layers if not 2 <= i <= self.depth - 1]
        if bad:
            raise InvalidConfig(
                f"kiti_layers {bad} are not hidden-to-hidden layers (valid: 2..{self.depth - 1})"
            )
        if self.kiti_layers and self.hidden_dim % self.kiti.n_divide:
            raise InvalidConfig(
                f"hidden_dim={self.hidden_dim} not divisible by n_divide={self.kiti.n_divide}"
            )

    @property
    def sigma(self):
        return 1.0 / self.hidden_dim**self.gamma

    def layer_dims(self):
        widths = [self.input_dim] + [self.hidden_dim] * (self.depth - 1) + [self.output_dim]
        return list(zip(widths[:-1], widths[1:]))

    def layer_kind(self, layer):
        if layer == self.depth:
            return "readout"
        if layer in self.kiti_layers:
            return "kiti"
        if self.skip_connections and layer >= 2:
            return "skip"
        return "dense"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    batch: int | None = None
    seed: int = 0
    checkpoints: tuple = (1, 10, 50, 100)

    def __post_init__(self):
        object.__setattr__(self, "checkpoints", tuple(int(c) for c in self.checkpoints))
        if self.epochs < 0:
            raise InvalidConfig("epochs must be >= 0")
        if not self.learning_rate >= 0:
            raise InvalidConfig("learning_rate must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidConfig(f"unknown optimizer {self.optimizer!r}")
        if self.batch is not None and self.batch < 1:
            raise InvalidConfig("batch must be a positive integer or null")
        if list(self.checkpoints) != sorted(set(self.checkpoints)):
            raise InvalidConfig("checkpoints must be strictly ascending")


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.inputs.shape[0] < 1 or self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets need the same positive number of rows")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("dataset contains non-finite values")


def sine_target(x):
    return np.sum(3.5 * np.sin(5.0 * np.asarray(x) + 1.0), axis=-1)


def make_sine_dataset(n=80, seed=0):
    """Inputs uniform on [-4, 2]^5, target sum_i 3.5 sin(5 x_i + 1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = stream(seed, STREAM_NET_DATA)
    lo, hi = SINE_DOMAIN
    x = rng.uniform(lo, hi, size=(n, 5))
    return Dataset(x, sine_target(x)[:, None])


def init_network(spec, rng):
    """Every weight and bias drawn from N(0, sigma^2), sigma = hidden_dim ** -gamma."""
    rng = as_generator(rng)
    sigma = spec.sigma
    params = []
    for fan_in, fan_out in spec.layer_dims():
        W = sigma * rng.standard_normal((fan_out, fan_in))
        b = sigma * rng.standard_normal(fan_out)
        params.append((W, b))
    return params


def flatten_params(params):
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in params])


def unflatten_params(flat, spec):
    params, pos = [], 0
    for fan_in, fan_out in spec.layer_dims():
        W = flat[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in).copy()
        pos += fan_in * fan_out
        b = flat[pos:pos + fan_out].copy()
        pos += fan_out
        params.append((W, b))
    if pos != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, expected {pos}")
    return params


def activate(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if name == "tanh":
        return np.tanh(z)
    raise ValueError(name)


def activate_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "tanh":
        return 1.0 - a * a
    raise ValueError(name)


@dataclass
class LayerRecord:
    layer: int
    kind: str
    h_in: np.ndarray
    z: np.ndarray
    a: np.ndarray
    reports: list | None = None


@dataclass
class Tape:
    spec: NetworkSpec
    params: list
    inputs: np.ndarray
    layers: list
    outputs: np.ndarray
    training: bool


def forward(params, spec, inputs, training=False, rng=None, replay=None):
    """Batched forward pass.

    At a ``kiti`` layer each row goes through the collision operator with
    ``x`` = layer input and ``v`` = activated affine output.  In training
    mode the rows draw from ``rng`` in order.  ``replay`` (a previous
    :class:`Tape`) reuses that tape's collision reports instead of sampling,
    which makes the map deterministic in the parameters.
    """
    h = np.asarray(inputs, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != spec.input_dim:
        raise ValueError(f"inputs must have shape (n, {spec.input_dim}), got {h.shape}")
    rng = as_generator(rng) if training and replay is None else None
    kcfg = replace(spec.kiti, training=training)
    records = []
    for layer, (W, b) in enumerate(params, start=1):
        z = h @ W.T + b
        kind = spec.layer_kind(layer)
        if kind == "readout":
            records.append(LayerRecord(layer, kind, h, z, z))
            h = z
            break
        a = activate(spec.activation, z)
        reports = None
        if kind == "dense":
            out = a
        elif kind == "skip":
            out = h + a
        elif replay is not None:
            reports = replay.layers[layer - 1].reports
            if reports is None:
                out = h + kcfg.dt * a
            else:
                out = np.stack([replay_forward(h[r], a[r], kcfg, reports[r])[0]
                                for r in range(h.shape[0])])
        elif training:
            rows = [kitinet_forward(h[r], a[r], kcfg, rng) for r in range(h.shape[0])]
            out = np.stack([x for x, _ in rows])
            reports = [rep for _, rep in rows]
        else:
            out = h + kcfg.dt * a
        records.append(LayerRecord(layer, kind, h, z, a, reports))
        h = out
    return h, Tape(spec, params, np.asarray(inputs, dtype=np.float64), records, h, training)


def mse(outputs, targets):
    d = outputs - targets
    return float(np.mean(d * d))


def mse_grad(outputs, targets):
    return 2.0 * (outputs - targets) / outputs.size


def backward(tape, loss_grad):
    """Parameter gradients ``[(dW, db), ...]`` given dLoss/dOutputs."""
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.shape != tape.outputs.shape or len(tape.layers) != len(tape.params):
        raise StaleTape(f"loss gradient shape {g.shape} does not match tape output {tape.outputs.shape}")
    spec = tape.spec
    kcfg = replace(spec.kiti, training=tape.training)
    grads = [None] * len(tape.params)
    for rec in reversed(tape.layers):
        W, _ = tape.params[rec.layer - 1]
        if W.shape[1] != rec.h_in.shape[1]:
            raise StaleTape("parameters changed shape since the forward pass")
        if rec.kind == "readout":
            g_z, g_direct = g, None
        else:
            if rec.kind == "dense":
                g_a, g_direct = g, None
            elif rec.kind == "skip":
                g_a, g_direct = g, g
            elif rec.reports is None:
                g_a, g_direct = kcfg.dt * g, g
            else:
                pairs = [kitinet_vjp(rec.h_in[r], rec.a[r], kcfg, rec.reports[r], g[r])
                         for r in range(g.shape[0])]
                g_direct = np.stack([gx for gx, _ in pairs])
                g_a = np.stack([gv for _, gv in pairs])
            g_z = g_a * activate_grad(spec.activation, rec.z, rec.a)
        grads[rec.layer - 1] = (g_z.T @ rec.h_in, g_z.sum(axis=0))
        g = g_z @ W
        if g_direct is not None:
            g = g + g_direct
    return grads


def loss_and_grads(params, spec, dataset, training=True, rng=None):
    out, tape = forward(params, spec, dataset.inputs, training=training, rng=rng)
    return mse(out, dataset.targets), backward(tape, mse_grad(out, dataset.targets))


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        flat_p = [p for pair in params for p in pair]
        flat_g = [g for pair in grads for g in pair]
        if self.m is None:
            self.m = [np.zeros_like(p) for p in flat_p]
            self.v = [np.zeros_like(p) for p in flat_p]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        out = []
        for k, (p, g) in enumerate(zip(flat_p, flat_g)):
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            out.append(p - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps))
        return list(zip(out[::2], out[1::2]))


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        return [(W - self.lr * gW, b - self.lr * gb) for (W, b), (gW, gb) in zip(params, grads)]


@dataclass
class TrainingRun:
    losses: list
    snapshots: dict
    params: list
    spec: NetworkSpec
    train_config: TrainConfig


def train(spec, train_config, dataset, params=None):
    """Train on MSE; loss is recorded per epoch in evaluation mode after the update.

    Collision randomness for epoch ``e`` and minibatch ``k`` comes from the
    stream ``(spec.kiti.seed, e, k)``; shuffling (minibatch mode only) from
    ``(train_config.seed, e)``.
    """
    tc = train_config
    if params is None:
        params = init_network(spec, stream(tc.seed, STREAM_NET_INIT))
    params = [(W.copy(), b.copy()) for W, b in params]
    opt = Adam(tc.learning_rate) if tc.optimizer == "adam" else SGD(tc.learning_rate)
    n = dataset.inputs.shape[0]
    snapshots = {}
    if 0 in tc.checkpoints:
        snapshots[0] = copy.deepcopy(params)
    losses = []
    for epoch in range(1, tc.epochs + 1):
        if tc.batch is None or tc.batch >= n:
            batches = [np.arange(n)]
        else:
            perm = stream(tc.seed, STREAM_NET_DATA, epoch).permutation(n)
            batches = [perm[i:i + tc.batch] for i in range(0, n, tc.batch)]
        for k, idx in enumerate(batches):
            sub = Dataset(dataset.inputs[idx], dataset.targets[idx])
            _, grads = loss_and_grads(params, spec, sub, training=True,
                                      rng=stream(spec.kiti.seed, STREAM_KITI, epoch, k))
            params = opt.step(params, grads)
        out, _ = forward(params, spec, dataset.inputs, training=False)
        loss = mse(out, dataset.targets)
        if not math.isfinite(loss):
            err = DivergenceDetected(epoch, loss)
            err.partial = TrainingRun(losses, snapshots, params, spec, tc)
            raise err
        losses.append((epoch, loss))
        if epoch in tc.checkpoints:
            snapshots[epoch] = copy.deepcopy(params)
    return TrainingRun(losses, snapshots, params, spec, tc)
