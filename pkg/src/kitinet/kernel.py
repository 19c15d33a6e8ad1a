"""Collision-based residual operator.

A length-D feature ``x`` and its residual ``v`` are read as N = D / n_divide
particles (rows) in ``n_divide``-dimensional space.  During training, pairs
of particles collide as hard spheres before the straight-line step
``x + dt * v``; at inference the operator is the plain residual step.

Layout convention: row-major reshape to ``(N, n_divide)``, particle ``i`` is
row ``i``.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import InvalidConfig, NonDivisibleDimension, NonFiniteInput, StaleReport
from .rng import as_generator

NONDIFF_EPS = 1e-12


@dataclass(frozen=True)
class KitiConfig:
    dt: float = 1.0
    n_divide: int = 1
    coll_coef: float = 0.5
    seed: int = 0
    update_positions: bool = True
    training: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidConfig(f"dt must be > 0, got {self.dt}")
        if int(self.n_divide) != self.n_divide or self.n_divide < 1:
            raise InvalidConfig(f"n_divide must be a positive integer, got {self.n_divide}")
        if not 0.0 <= self.coll_coef <= 1.0:
            raise InvalidConfig(f"coll_coef must lie in [0, 1], got {self.coll_coef}")
        if int(self.seed) != self.seed or self.seed < 0 or self.seed >= 2**64:
            raise InvalidConfig(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass
class ParticleBatch:
    positions: np.ndarray
    velocities: np.ndarray

    @property
    def n_particles(self):
        return self.positions.shape[0]

    @property
    def n_divide(self):
        return self.positions.shape[1]

    def flatten(self):
        return self.positions.reshape(-1).copy(), self.velocities.reshape(-1).copy()


@dataclass
class PairwiseKinematics:
    x_r: np.ndarray
    v_r: np.ndarray
    x_cm: np.ndarray
    v_cm: np.ndarray


@dataclass
class CollisionReport:
    accepted: np.ndarray
    directions: np.ndarray
    delta_v: np.ndarray
    counts: np.ndarray
    v_r_max: float
    nondifferentiable: bool = False
    backend: str = field(default="python", compare=False)

    @property
    def n_particles(self):
        return self.accepted.shape[0]

    @property
    def n_divide(self):
        return self.directions.shape[2]

    def n_collisions(self):
        return int(self.counts.sum()) // 2


def _as_vector(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteInput(f"{name} contains NaN or Inf")
    return a


def reshape_to_particles(x, v, n_divide):
    x = _as_vector(x, "x")
    v = _as_vector(v, "v")
    if x.shape != v.shape:
        raise ValueError(f"x and v differ in length: {x.shape} vs {v.shape}")
    D = x.shape[0]
    if n_divide < 1 or D % n_divide != 0:
        raise NonDivisibleDimension(f"D={D} is not divisible by n_divide={n_divide}")
    N = D // n_divide
    return ParticleBatch(x.reshape(N, n_divide).copy(), v.reshape(N, n_divide).copy())


def pairwise_kinematics(batch):
    X, V = batch.positions, batch.velocities
    dx = X[:, None, :] - X[None, :, :]
    dv = V[:, None, :] - V[None, :, :]
    return PairwiseKinematics(
        x_r=np.sqrt(np.einsum("ijk,ijk->ij", dx, dx)),
        v_r=np.sqrt(np.einsum("ijk,ijk->ij", dv, dv)),
        x_cm=0.5 * (X[:, None, :] + X[None, :, :]),
        v_cm=0.5 * (V[:, None, :] + V[None, :, :]),
    )


def sample_scatter_directions(n_particles, n_divide, rng):
    """Antisymmetric field of isotropic unit vectors, zero on the diagonal.

    Upper-triangle entries are drawn in row-major order as normalized Gaussian
    vectors; for ``n_divide == 1`` this yields exactly +1 or -1.
    """
    rng = as_generator(rng)
    N = int(n_particles)
    iu, ju = np.triu_indices(N, k=1)
    g = rng.standard_normal((iu.size, n_divide))
    norms = np.sqrt(np.einsum("pk,pk->p", g, g))
    # a zero Gaussian vector has probability zero; redraw keeps the contract anyway
    while np.any(norms == 0.0):
        bad = norms == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), n_divide))
        norms = np.sqrt(np.einsum("pk,pk->p", g, g))
    g /= norms[:, None]
    out = np.zeros((N, N, n_divide))
    out[iu, ju] = g
    out[ju, iu] = -g
    return out


def collision_mask(kin, coll_coef):
    """Accept pair (i, j) iff ``v_r * exp(-x_r) / max(v_r) > 1 - coll_coef``."""
    v_r = kin.v_r
    N = v_r.shape[0]
    v_r_max = float(v_r.max()) if v_r.size else 0.0
    accepted = np.zeros((N, N), dtype=bool)
    if v_r_max == 0.0:
        return accepted, v_r_max
    iu, ju = np.triu_indices(N, k=1)
    lhs = v_r[iu, ju] * np.exp(-kin.x_r[iu, ju]) / v_r_max
    hit = lhs > 1.0 - coll_coef
    accepted[iu[hit], ju[hit]] = True
    accepted[ju[hit], iu[hit]] = True
    return accepted, v_r_max


def compute_delta_v(kin, directions, batch):
    dv = kin.v_cm + 0.5 * kin.v_r[:, :, None] * directions - batch.velocities[:, None, :]
    N = dv.shape[0]
    dv[np.arange(N), np.arange(N)] = 0.0
    return dv


def apply_update(batch, report, kin, dt, update_positions):
    X, V = batch.positions, batch.velocities
    A = report.accepted
    k = report.counts
    hit = k > 0
    v_new = V + np.einsum("ij,ijk->ik", A.astype(np.float64), report.delta_v)
    if update_positions:
        x_star = (X + np.einsum("ij,ijk->ik", A.astype(np.float64), kin.x_cm)) / (1.0 + k)[:, None]
    else:
        x_star = X
    # untouched particles take the exact residual step
    v_new = np.where(hit[:, None], v_new, V)
    x_star = np.where(hit[:, None], x_star, X)
    return ParticleBatch(x_star + dt * v_new, v_new)


def _collide_python(batch, directions, config):
    kin = pairwise_kinematics(batch)
    delta_v = compute_delta_v(kin, directions, batch)
    accepted, v_r_max = collision_mask(kin, config.coll_coef)
    counts = accepted.sum(axis=1).astype(np.int64)
    report = CollisionReport(
        accepted=accepted,
        directions=directions,
        delta_v=delta_v,
        counts=counts,
        v_r_max=v_r_max,
        nondifferentiable=bool(np.any(kin.v_r[accepted] < NONDIFF_EPS)),
        backend="python",
    )
    out = apply_update(batch, report, kin, config.dt, config.update_positions)
    return out, report


def _collide_compiled(batch, directions, config, ck):
    x_out, v_out, accepted, delta_v, counts, v_r_max, nondiff = ck.kiti_collide(
        np.ascontiguousarray(batch.positions),
        np.ascontiguousarray(batch.velocities),
        directions,
        float(config.coll_coef),
        float(config.dt),
        bool(config.update_positions),
        NONDIFF_EPS,
    )
    report = CollisionReport(
        accepted=accepted.view(bool),
        directions=directions,
        delta_v=delta_v,
        counts=counts,
        v_r_max=v_r_max,
        nondifferentiable=bool(nondiff),
        backend="compiled",
    )
    return ParticleBatch(x_out, v_out), report


def kitinet_collide(x, v, config, rng):
    """Training-mode collision step; returns ``(x', v', report)``."""
    batch = reshape_to_particles(x, v, config.n_divide)
    directions = sample_scatter_directions(batch.n_particles, config.n_divide, rng)
    ck = _backend.compiled()
    if ck is not None:
        out, report = _collide_compiled(batch, directions, config, ck)
    else:
        out, report = _collide_python(batch, directions, config)
    x_new, v_new = out.flatten()
    return x_new, v_new, report


def kitinet_forward(x, v, config, rng=None):
    """Apply the operator to one feature vector.

    Returns ``(x', report)``; ``report`` is None outside training mode, where
    the result is exactly ``x + dt * v``.
    """
    if not config.training:
        x = _as_vector(x, "x")
        v = _as_vector(v, "v")
        if x.shape[0] % config.n_divide:
            raise NonDivisibleDimension(
                f"D={x.shape[0]} is not divisible by n_divide={config.n_divide}"
            )
        return x + config.dt * v, None
    x_new, _, report = kitinet_collide(x, v, config, as_generator(rng))
    return x_new, report


def _check_report(report, n_particles, n_divide):
    if (
        report is None
        or report.accepted.shape != (n_particles, n_particles)
        or report.directions.shape != (n_particles, n_particles, n_divide)
        or report.counts.shape != (n_particles,)
    ):
        raise StaleReport(
            f"report does not match a batch of {n_particles} particles in {n_divide}-D"
        )


def replay_forward(x, v, config, report):
    """Re-run the forward map with the report's mask and directions frozen.

    This is the function whose derivative :func:`kitinet_vjp` returns.
    """
    batch = reshape_to_particles(x, v, config.n_divide)
    _check_report(report, batch.n_particles, config.n_divide)
    kin = pairwise_kinematics(batch)
    frozen = CollisionReport(
        accepted=report.accepted,
        directions=report.directions,
        delta_v=compute_delta_v(kin, report.directions, batch),
        counts=report.counts,
        v_r_max=report.v_r_max,
    )
    out = apply_update(batch, frozen, kin, config.dt, config.update_positions)
    return out.flatten()


def kitinet_vjp(x, v, config, report, upstream_grad):
    """Vector-Jacobian product of the frozen-report forward map.

    Acceptance mask and scatter directions are constants.  The derivative of
    ``|v_i - v_j|`` is taken as zero where the two velocities coincide.
    Returns ``(grad_x, grad_v)``.
    """
    batch = reshape_to_particles(x, v, config.n_divide)
    N, nd = batch.n_particles, batch.n_divide
    _check_report(report, N, nd)
    G = np.asarray(upstream_grad, dtype=np.float64)
    if G.shape != (N * nd,):
        raise StaleReport(f"upstream gradient has shape {G.shape}, expected {(N * nd,)}")
    G = G.reshape(N, nd)
    dt = config.dt
    if not report.accepted.any():
        return G.reshape(-1).copy(), (dt * G).reshape(-1)

    A = report.accepted.astype(np.float64)
    k = report.counts.astype(np.float64)
    hit = (report.counts > 0)[:, None]

    if config.update_positions:
        inv = 1.0 / (1.0 + k)
        gx = G * ((1.0 + 0.5 * k) * inv)[:, None] + 0.5 * (A @ (G * inv[:, None]))
    else:
        gx = G.copy()

    gvo = dt * G
    gv = gvo * (1.0 - 0.5 * k)[:, None] + 0.5 * (A @ gvo)
    V = batch.velocities
    dv = V[:, None, :] - V[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", dv, dv))
    safe = r >= NONDIFF_EPS
    unit = np.where(safe[:, :, None], dv / np.where(safe, r, 1.0)[:, :, None], 0.0)
    n = report.directions
    s = 0.5 * A * (np.einsum("ik,ijk->ij", gvo, n) - np.einsum("jk,ijk->ij", gvo, n))
    gv = gv + np.einsum("ij,ijk->ik", s, unit)
    gv = np.where(hit, gv, gvo)
    return gx.reshape(-1), gv.reshape(-1)


def a_edition_forward(x, a, v_state, config, rng=None, v_std=1.0):
    """Acceleration-form variant carrying a velocity state between layers.

    ``v_state=None`` marks the first layer: the state is drawn from
    N(0, v_std^2) before any collision randomness.  Returns ``(x', v_state')``.
    """
    rng = as_generator(rng)
    a = _as_vector(a, "a")
    if v_state is None:
        v_state = v_std * rng.standard_normal(a.shape[0])
    v0 = _as_vector(v_state, "v_state") + config.dt * a
    if not config.training:
        x = _as_vector(x, "x")
        return x + config.dt * v0, v0
    x_new, v_new, _ = kitinet_collide(x, v0, config, rng)
    return x_new, v_new
