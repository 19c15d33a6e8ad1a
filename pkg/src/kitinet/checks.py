"""Invariant suite for the collision operator, run by ``kitinet kernel-check``.

Each check returns a :class:`CheckResult` whose ``metric`` is the worst value
seen over its random trials; a check passes when ``metric <= tolerance``.
"""
from dataclasses import dataclass, replace

import numpy as np

from .kernel import (
    CollisionReport,
    KitiConfig,
    kitinet_collide,
    kitinet_forward,
    kitinet_vjp,
    replay_forward,
    sample_scatter_directions,
)
from .rng import STREAM_CHECK, stream

FD_STEP = 1e-6
N_DIVIDES = (1, 2, 4, 8)


@dataclass
class CheckResult:
    name: str
    metric: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.metric <= self.tolerance)


def _trial_rng(seed, check_id, trial):
    return stream(seed, STREAM_CHECK, check_id, trial)


def _random_case(rng, n_divide, scale=1.0):
    n = int(rng.integers(2, 9))
    D = n * n_divide
    return scale * rng.normal(size=D), rng.normal(size=D)


def check_reduction(cfg, trials):
    """coll_coef = 0 must give x + dt*v bitwise, and match the inference branch."""
    worst = 0.0
    for t in range(trials):
        rng = _trial_rng(cfg.seed, 1, t)
        nd = N_DIVIDES[t % len(N_DIVIDES)]
        x, v = _random_case(rng, nd)
        c = replace(cfg, n_divide=nd, coll_coef=0.0, training=True)
        out, _ = kitinet_forward(x, v, c, rng)
        ref, _ = kitinet_forward(x, v, replace(c, training=False))
        if not (np.array_equal(out, x + c.dt * v) and np.array_equal(out, ref)):
            worst = max(worst, float(np.max(np.abs(out - ref))), np.finfo(float).tiny)
    return CheckResult("reduction", worst, 0.0)


def check_momentum(cfg, trials):
    worst = 0.0
    for t in range(trials):
        rng = _trial_rng(cfg.seed, 2, t)
        nd = N_DIVIDES[t % len(N_DIVIDES)]
        x, v = _random_case(rng, nd, scale=0.3)
        c = replace(cfg, n_divide=nd, training=True)
        _, v_new, _ = kitinet_collide(x, v, c, rng)
        p0 = v.reshape(-1, nd).sum(axis=0)
        p1 = v_new.reshape(-1, nd).sum(axis=0)
        scale = max(float(np.abs(v).sum()), 1e-300)
        worst = max(worst, float(np.max(np.abs(p1 - p0))) / scale)
    return CheckResult("momentum", worst, 1e-10)


def random_matching(n, rng):
    """Symmetric boolean mask where every particle has at most one partner."""
    perm = rng.permutation(n)
    n_pairs = int(rng.integers(1, n // 2 + 1))
    A = np.zeros((n, n), dtype=bool)
    for p in range(n_pairs):
        i, j = perm[2 * p], perm[2 * p + 1]
        A[i, j] = A[j, i] = True
    return A


def matching_report(directions, accepted):
    return CollisionReport(
        accepted=accepted,
        directions=directions,
        delta_v=np.zeros_like(directions),
        counts=accepted.sum(axis=1).astype(np.int64),
        v_r_max=0.0,
    )


def check_matching_energy(cfg, trials):
    """With a matching mask every accepted pair keeps its kinetic energy."""
    worst = 0.0
    for t in range(trials):
        rng = _trial_rng(cfg.seed, 3, t)
        nd = N_DIVIDES[t % len(N_DIVIDES)]
        x, v = _random_case(rng, nd)
        N = x.size // nd
        A = random_matching(N, rng)
        rep = matching_report(sample_scatter_directions(N, nd, rng), A)
        c = replace(cfg, n_divide=nd, training=True)
        _, v_new = replay_forward(x, v, c, rep)
        V0, V1 = v.reshape(N, nd), v_new.reshape(N, nd)
        for i, j in zip(*np.nonzero(np.triu(A))):
            e0 = V0[i] @ V0[i] + V0[j] @ V0[j]
            e1 = V1[i] @ V1[i] + V1[j] @ V1[j]
            worst = max(worst, abs(e1 - e0) / max(e0, 1e-300))
    return CheckResult("matching_energy", worst, 1e-10)


def check_antisymmetry(cfg, trials):
    """Scatter directions are unit, antisymmetric, and the delta-v pair sums are momentum-free."""
    worst = 0.0
    for t in range(trials):
        rng = _trial_rng(cfg.seed, 4, t)
        nd = N_DIVIDES[t % len(N_DIVIDES)]
        x, v = _random_case(rng, nd)
        _, _, rep = kitinet_collide(x, v, replace(cfg, n_divide=nd, training=True), rng)
        n = rep.directions
        N = n.shape[0]
        off = ~np.eye(N, dtype=bool)
        worst = max(
            worst,
            float(np.max(np.abs(n + n.transpose(1, 0, 2)))),
            float(np.max(np.abs(np.linalg.norm(n[off], axis=-1) - 1.0))),
            float(np.max(np.abs(rep.delta_v + rep.delta_v.transpose(1, 0, 2)))),
        )
    return CheckResult("antisymmetry_unit_norm", worst, 1e-12)


def check_mask_monotonicity(cfg, trials):
    """Raising coll_coef with everything else fixed never removes an accepted pair."""
    coefs = np.linspace(0.0, 1.0, 11)
    violations = 0
    for t in range(trials):
        rng = _trial_rng(cfg.seed, 5, t)
        nd = N_DIVIDES[t % len(N_DIVIDES)]
        x, v = _random_case(rng, nd, scale=0.3)
        prev = None
        for cc in coefs:
            c = replace(cfg, n_divide=nd, coll_coef=float(cc), training=True)
            _, _, rep = kitinet_collide(x, v, c, stream(cfg.seed, STREAM_CHECK, 5, t, 0))
            if prev is not None and np.any(prev & ~rep.accepted):
                violations += 1
            prev = rep.accepted
    return CheckResult("mask_monotonicity", float(violations), 0.0)


def fd_vjp(x, v, cfg, report, g, step=FD_STEP):
    def f(xx, vv):
        return float(g @ replay_forward(xx, vv, cfg, report)[0])

    gx, gv = np.zeros_like(x), np.zeros_like(v)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        gx[k] = (f(x + e, v) - f(x - e, v)) / (2 * step)
        gv[k] = (f(x, v + e) - f(x, v - e)) / (2 * step)
    return gx, gv


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-30))


def nondegenerate_point(rng, nd, coll_coef, dt, update_positions, max_tries=50):
    """Random (x, v, report) with at least one collision and no near-tie.

    Points where a velocity difference is close to zero or where a mask
    threshold is within reach of the finite-difference step are redrawn.
    """
    for _ in range(max_tries):
        x, v = _random_case(rng, nd, scale=0.1)
        c = KitiConfig(dt=dt, n_divide=nd, coll_coef=coll_coef,
                       update_positions=update_positions, training=True)
        _, _, rep = kitinet_collide(x, v, c, rng)
        if not rep.accepted.any():
            continue
        V = v.reshape(-1, nd)
        d = np.linalg.norm(V[:, None] - V[None], axis=-1)
        N = V.shape[0]
        if d[np.triu_indices(N, 1)].min() < 1e-3:
            continue
        X = x.reshape(-1, nd)
        xr = np.linalg.norm(X[:, None] - X[None], axis=-1)
        lhs = d * np.exp(-xr) / d.max()
        margin = np.abs(lhs - (1.0 - coll_coef))[np.triu_indices(N, 1)].min()
        if margin < 1e-4:
            continue
        return x, v, c, rep
    return None


def check_gradient(cfg, points):
    worst = 0.0
    done = 0
    t = 0
    while done < points and t < 20 * points:
        rng = _trial_rng(cfg.seed, 6, t)
        t += 1
        nd = N_DIVIDES[t % 3]
        case = nondegenerate_point(rng, nd, max(cfg.coll_coef, 0.5), float(rng.uniform(0.1, 1.5)),
                                   bool(t % 4), max_tries=5)
        if case is None:
            continue
        x, v, c, rep = case
        g = rng.normal(size=x.size)
        gx, gv = kitinet_vjp(x, v, c, rep, g)
        fx, fv = fd_vjp(x, v, c, rep, g)
        worst = max(worst, rel_err(gx, fx), rel_err(gv, fv))
        done += 1
    if done < points:
        worst = float("inf")
    return CheckResult("gradient", worst, 1e-5)


def check_determinism(cfg, trials):
    worst = 0.0
    for t in range(trials):
        nd = N_DIVIDES[t % len(N_DIVIDES)]
        x, v = _random_case(_trial_rng(cfg.seed, 7, t), nd)
        c = replace(cfg, n_divide=nd, training=True)
        a = kitinet_collide(x, v, c, _trial_rng(cfg.seed, 8, t))
        b = kitinet_collide(x, v, c, _trial_rng(cfg.seed, 8, t))
        if not (np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
                and np.array_equal(a[2].accepted, b[2].accepted)):
            worst = max(worst, float(np.max(np.abs(a[0] - b[0]))), np.finfo(float).tiny)
    return CheckResult("determinism", worst, 0.0)


def run_all(cfg, trials=200, gradient_points=100):
    """Every invariant in a fixed order."""
    cfg = replace(cfg, training=True)
    return [
        check_reduction(cfg, trials),
        check_momentum(cfg, trials),
        check_matching_energy(cfg, trials),
        check_antisymmetry(cfg, trials),
        check_mask_monotonicity(cfg, max(1, trials // 4)),
        check_gradient(cfg, gradient_points),
        check_determinism(cfg, trials),
    ]
