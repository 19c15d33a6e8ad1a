"""Hard-sphere Direct Simulation Monte Carlo in a box.

Units: particle mass m = 1 and Boltzmann constant k_B = 1.  One step is
drift, wall handling, then cell-local stochastic collisions sampled with the
no-time-counter (NTC) candidate count and relative-speed rejection.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import erf

from . import _backend
from .errors import InvalidConfig
from .rng import STREAM_DSMC_INIT, STREAM_DSMC_STEP, as_generator, stream

VR_MAX_HEADROOM = 1.05
BIMODAL_SPEEDS = (0.5, 1.5)


@dataclass(frozen=True)
class DsmcConfig:
    num_particles: int = 10000
    f_n: float = 100.0
    diameter: float = 0.003
    tau: float = 0.002
    box: tuple = (1.0, 1.0)
    cells_per_axis: tuple = (20, 20)
    wall_model: str = "periodic"
    dimensionality: int = 2
    seed: int = 0
    initial_temperature: float = 1.0
    initial_distribution: str = "maxwell"
    steps: int = 100
    hist_bins: int = 30

    def __post_init__(self):
        object.__setattr__(self, "box", tuple(float(b) for b in self.box))
        object.__setattr__(self, "cells_per_axis", tuple(int(c) for c in self.cells_per_axis))
        if self.dimensionality not in (2, 3):
            raise InvalidConfig(f"dimensionality must be 2 or 3, got {self.dimensionality}")
        if len(self.box) != self.dimensionality or len(self.cells_per_axis) != self.dimensionality:
            raise InvalidConfig("box and cells_per_axis need one entry per dimension")
        if any(b <= 0 for b in self.box) or any(c < 1 for c in self.cells_per_axis):
            raise InvalidConfig("box extents and cell counts must be positive")
        if self.num_particles < 1:
            raise InvalidConfig("num_particles must be >= 1")
        if not (self.f_n > 0 and self.diameter > 0 and self.tau > 0):
            raise InvalidConfig("f_n, diameter and tau must be > 0")
        if not self.initial_temperature > 0:
            raise InvalidConfig("initial_temperature must be > 0")
        if self.wall_model not in ("specular", "periodic"):
            raise InvalidConfig(f"unknown wall_model {self.wall_model!r}")
        if self.initial_distribution not in ("maxwell", "bimodal"):
            raise InvalidConfig(f"unknown initial_distribution {self.initial_distribution!r}")
        if self.steps < 0:
            raise InvalidConfig("steps must be >= 0")
        if self.hist_bins < 10:
            raise InvalidConfig("hist_bins must be >= 10")
        if self.diameter >= 0.1 * min(self.cell_size):
            warnings.warn(
                f"particle diameter {self.diameter} is not small against the cell edge "
                f"{min(self.cell_size)}",
                stacklevel=2,
            )

    @property
    def cell_size(self):
        return tuple(b / c for b, c in zip(self.box, self.cells_per_axis))

    @property
    def n_cells(self):
        return int(np.prod(self.cells_per_axis))

    @property
    def cell_volume(self):
        return float(np.prod(self.box)) / self.n_cells


@dataclass
class GasState:
    positions: np.ndarray
    velocities: np.ndarray
    cell_of: np.ndarray
    time: float
    candidate_remainders: np.ndarray
    vr_max: np.ndarray
    step: int = 0
    last_stats: dict = field(default_factory=dict)

    def copy(self):
        return GasState(
            self.positions.copy(),
            self.velocities.copy(),
            self.cell_of.copy(),
            self.time,
            self.candidate_remainders.copy(),
            self.vr_max.copy(),
            self.step,
            dict(self.last_stats),
        )


def assign_cells(positions, config):
    size = np.asarray(config.cell_size)
    ncell = np.asarray(config.cells_per_axis)
    idx = np.floor(positions / size).astype(np.int64)
    idx = np.clip(idx, 0, ncell - 1)
    return np.ravel_multi_index(tuple(idx.T), tuple(ncell))


def _isotropic_units(rng, n, dim):
    g = rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def init_gas(config, rng=None):
    """Uniform positions and thermal (or bimodal-speed) velocities."""
    if rng is None:
        rng = stream(config.seed, STREAM_DSMC_INIT)
    rng = as_generator(rng)
    n, dim = config.num_particles, config.dimensionality
    positions = rng.random((n, dim)) * np.asarray(config.box)
    T = config.initial_temperature
    if config.initial_distribution == "maxwell":
        velocities = math.sqrt(T) * rng.standard_normal((n, dim))
    else:
        speeds = np.where(np.arange(n) % 2 == 0, *BIMODAL_SPEEDS)
        velocities = speeds[:, None] * _isotropic_units(rng, n, dim)
        velocities -= velocities.mean(axis=0)
        velocities *= math.sqrt(T / (np.sum(velocities**2) / (dim * n)))
    return GasState(
        positions=positions,
        velocities=velocities,
        cell_of=assign_cells(positions, config),
        time=0.0,
        candidate_remainders=np.zeros(config.n_cells),
        vr_max=np.zeros(config.n_cells),
    )


def drift_and_walls(state, config):
    """Straight-line drift over one time step, then wall handling."""
    out = state.copy()
    x = out.positions + config.tau * out.velocities
    v = out.velocities
    for d, L in enumerate(config.box):
        if config.wall_model == "periodic":
            xd = np.mod(x[:, d], L)
            xd[xd >= L] = 0.0
            x[:, d] = xd
        else:
            # fold the unrolled coordinate back into [0, L]; odd folds flip v
            k = np.floor(x[:, d] / L)
            y = x[:, d] - k * L
            odd = np.mod(k, 2) != 0
            x[:, d] = np.where(odd, L - y, y)
            v[:, d] = np.where(odd, -v[:, d], v[:, d])
    out.positions = x
    out.velocities = v
    out.cell_of = assign_cells(x, config)
    return out


def eq3_candidates(n_c, vr_max_cell, config):
    """Real-valued NTC candidate count for a cell."""
    n_c = np.asarray(n_c, dtype=np.float64)
    vr = np.nan_to_num(np.asarray(vr_max_cell, dtype=np.float64))
    return (
        n_c * (n_c - 1.0) * config.f_n * math.pi * config.diameter**2 * vr * config.tau
        / (2.0 * config.cell_volume)
    )


def candidate_count(n_c, vr_max_cell, config, remainder):
    """Integer candidate count with fractional carry.

    Returns ``(m_cand, new_remainder)``; the remainder keeps the long-run mean of
    ``m_cand`` equal to the real-valued count.  Accepts scalars or arrays.
    """
    real = np.where(np.asarray(n_c) > 1, eq3_candidates(n_c, vr_max_cell, config), 0.0)
    total = real + remainder
    m = np.floor(total)
    rem = total - m
    if np.ndim(m) == 0:
        return int(m), float(rem)
    return m.astype(np.int64), rem


def _scatter_units(r2, r3, dim):
    phi = 2.0 * np.pi * r2
    if dim == 2:
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    cos_t = 2.0 * r3 - 1.0
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    return np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)


def _draw_candidates(rng, m, dim):
    u = rng.random((m, 5))
    return np.ascontiguousarray(u[:, :3]), _scatter_units(u[:, 3], u[:, 4], dim)


def _cell_layout(cell_of, n_cells):
    order = np.argsort(cell_of, kind="stable").astype(np.int64)
    counts = np.bincount(cell_of, minlength=n_cells).astype(np.int64)
    starts = np.zeros(n_cells, dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])
    return order, starts, counts


def _init_vr_max(state, order, starts, counts, cells=None):
    cells = range(len(counts)) if cells is None else cells
    for c in cells:
        n = counts[c]
        if n >= 2 and not state.vr_max[c] > 0.0:
            members = order[starts[c]:starts[c] + n]
            state.vr_max[c] = VR_MAX_HEADROOM * float(pdist(state.velocities[members]).max())


def collide_cell(cell, state, config, rng):
    """Collide the particles currently sorted into ``cell``; returns a new state."""
    out = state.copy()
    order, starts, counts = _cell_layout(out.cell_of, config.n_cells)
    _init_vr_max(out, order, starts, counts, cells=[cell])
    m, rem = candidate_count(counts[cell], out.vr_max[cell], config, out.candidate_remainders[cell])
    out.candidate_remainders[cell] = rem
    uniforms, dirs = _draw_candidates(as_generator(rng), m, config.dimensionality)
    only = np.zeros(config.n_cells, dtype=np.int64)
    only[cell] = m
    accepted = _backend.dsmc_collide()(
        out.velocities, order, starts, counts, np.zeros(config.n_cells, dtype=np.int64),
        only, uniforms, dirs, out.vr_max,
    )
    out.last_stats = {"m_cand": int(m), "accepted": int(accepted[cell])}
    return out


def dsmc_step(state, config):
    """One full step; collision randomness comes from per-cell streams keyed by
    ``(seed, step, cell)``."""
    out = drift_and_walls(state, config)
    order, starts, counts = _cell_layout(out.cell_of, config.n_cells)
    _init_vr_max(out, order, starts, counts)
    real = np.where(counts > 1, eq3_candidates(counts, out.vr_max, config), 0.0)
    m, out.candidate_remainders = candidate_count(
        counts, out.vr_max, config, out.candidate_remainders
    )
    cand_start = np.zeros(config.n_cells, dtype=np.int64)
    np.cumsum(m[:-1], out=cand_start[1:])
    total = int(m.sum())
    uniforms = np.empty((total, 3))
    dirs = np.empty((total, config.dimensionality))
    for c in np.flatnonzero(m):
        g = stream(config.seed, STREAM_DSMC_STEP, out.step, c)
        lo, hi = cand_start[c], cand_start[c] + m[c]
        uniforms[lo:hi], dirs[lo:hi] = _draw_candidates(g, int(m[c]), config.dimensionality)
    accepted = _backend.dsmc_collide()(
        out.velocities, order, starts, counts, cand_start, m, uniforms, dirs, out.vr_max
    )
    out.time = state.time + config.tau
    out.step = state.step + 1
    out.last_stats = {
        "m_cand": total,
        "eq3": float(real.sum()),
        "accepted": int(accepted.sum()),
        "active_cells": int(np.count_nonzero(counts > 1)),
    }
    return out


def total_momentum(state):
    return state.velocities.sum(axis=0)


def kinetic_energy(state):
    return 0.5 * float(np.sum(state.velocities**2))


def temperature(state):
    v = state.velocities - state.velocities.mean(axis=0)
    return float(np.sum(v**2)) / v.size


def maxwell_speed_pdf(s, temperature, dim):
    s = np.asarray(s, dtype=np.float64)
    T = temperature
    if dim == 2:
        return (s / T) * np.exp(-(s**2) / (2 * T))
    if dim == 3:
        return math.sqrt(2 / math.pi) * s**2 / T**1.5 * np.exp(-(s**2) / (2 * T))
    raise ValueError(f"dim must be 2 or 3, got {dim}")


def maxwell_speed_cdf(s, temperature, dim):
    s = np.asarray(s, dtype=np.float64)
    T = temperature
    if dim == 2:
        return 1.0 - np.exp(-(s**2) / (2 * T))
    if dim == 3:
        z = s / math.sqrt(2 * T)
        return erf(z) - math.sqrt(2 / math.pi) * (s / math.sqrt(T)) * np.exp(-(z**2))
    raise ValueError(f"dim must be 2 or 3, got {dim}")


def maxwell_reference(temperature, dim, bin_edges):
    """Bin-averaged Maxwell-Boltzmann speed density on the given edges."""
    edges = np.asarray(bin_edges, dtype=np.float64)
    return np.diff(maxwell_speed_cdf(edges, temperature, dim)) / np.diff(edges)


def speed_histogram(state, bins, upper=None):
    """Normalized density of peculiar speeds (bulk velocity removed).

    The default range ``[0, max(6 sqrt(T), max speed)]`` always covers every
    particle.
    """
    if bins < 10:
        raise ValueError("bins must be >= 10")
    v = state.velocities - state.velocities.mean(axis=0)
    speeds = np.sqrt(np.einsum("ij,ij->i", v, v))
    if upper is None:
        upper = max(6.0 * math.sqrt(temperature(state)), float(speeds.max()) * (1 + 1e-12))
    density, edges = np.histogram(speeds, bins=bins, range=(0.0, upper), density=True)
    return edges, density


def l2_distance(density, reference, bin_edges):
    return float(np.sqrt(np.sum((density - reference) ** 2 * np.diff(bin_edges))))


def l2_to_maxwell(state, bins):
    edges, dens = speed_histogram(state, bins)
    ref = maxwell_reference(temperature(state), state.velocities.shape[1], edges)
    return l2_distance(dens, ref, edges)


def run(config, state=None, observer=None):
    """Advance ``config.steps`` steps, calling ``observer(state)`` after each."""
    state = init_gas(config) if state is None else state
    for _ in range(config.steps):
        state = dsmc_step(state, config)
        if observer is not None:
            observer(state)
    return state

