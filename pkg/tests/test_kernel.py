import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_collide
from kitinet.errors import InvalidConfig, NonDivisibleDimension, NonFiniteInput, StaleReport
from kitinet.kernel import (
    CollisionReport,
    KitiConfig,
    ParticleBatch,
    a_edition_forward,
    apply_update,
    collision_mask,
    compute_delta_v,
    kitinet_collide,
    kitinet_forward,
    pairwise_kinematics,
    reshape_to_particles,
    sample_scatter_directions,
)
from kitinet.rng import stream


def make_batch(pos, vel):
    return ParticleBatch(np.array(pos, dtype=float), np.array(vel, dtype=float))


def test_reshape_row_major():
    b = reshape_to_particles([1, 2, 3, 4], [5, 6, 7, 8], 2)
    np.testing.assert_array_equal(b.positions, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(b.velocities, [[5, 6], [7, 8]])
    x, v = b.flatten()
    np.testing.assert_array_equal(x, [1, 2, 3, 4])


def test_reshape_one_dimensional():
    b = reshape_to_particles([5, 6, 7], [0, 0, 0], 1)
    assert b.n_particles == 3 and b.n_divide == 1


def test_reshape_errors():
    with pytest.raises(NonDivisibleDimension):
        reshape_to_particles(np.zeros(5), np.zeros(5), 2)
    with pytest.raises(NonFiniteInput):
        reshape_to_particles([1.0, np.nan], [0.0, 0.0], 1)
    with pytest.raises(NonFiniteInput):
        reshape_to_particles([1.0, 0.0], [np.inf, 0.0], 1)


def test_config_validation():
    with pytest.raises(InvalidConfig):
        KitiConfig(coll_coef=1.5)
    with pytest.raises(InvalidConfig):
        KitiConfig(dt=0.0)
    with pytest.raises(InvalidConfig):
        KitiConfig(n_divide=0)
    assert KitiConfig().dt == 1.0


def test_pairwise_kinematics_hand_values():
    kin = pairwise_kinematics(make_batch([[0, 0], [3, 4]], [[1, 1], [1, 1]]))
    assert kin.x_r[0, 1] == 5.0
    np.testing.assert_array_equal(kin.x_cm[0, 1], [1.5, 2.0])
    assert kin.v_r[0, 1] == 0.0


def test_pairwise_single_particle():
    kin = pairwise_kinematics(make_batch([[2.0, 3.0]], [[1.0, -1.0]]))
    assert kin.x_r.shape == (1, 1) and kin.x_r[0, 0] == 0 and kin.v_r[0, 0] == 0
    np.testing.assert_array_equal(kin.x_cm[0, 0], [2.0, 3.0])


def test_pairwise_symmetry():
    rng = np.random.default_rng(3)
    kin = pairwise_kinematics(make_batch(rng.normal(size=(7, 3)), rng.normal(size=(7, 3))))
    np.testing.assert_array_equal(kin.x_r, kin.x_r.T)
    np.testing.assert_array_equal(kin.v_r, kin.v_r.T)
    np.testing.assert_array_equal(kin.x_cm, kin.x_cm.transpose(1, 0, 2))
    assert np.all(np.diag(kin.x_r) == 0) and np.all(np.diag(kin.v_r) == 0)


@pytest.mark.parametrize("nd", [1, 2, 3, 8])
def test_scatter_directions_unit_and_antisymmetric(nd):
    n = sample_scatter_directions(9, nd, stream(1))
    iu, ju = np.triu_indices(9, 1)
    norms = np.linalg.norm(n[iu, ju], axis=1)
    assert np.all(np.abs(norms - 1) < 1e-12)
    np.testing.assert_array_equal(n, -n.transpose(1, 0, 2))
    assert np.all(n[np.arange(9), np.arange(9)] == 0)


def test_scatter_directions_one_dim_signs():
    n = sample_scatter_directions(30, 1, stream(2))
    iu, ju = np.triu_indices(30, 1)
    assert set(np.unique(n[iu, ju, 0])) == {-1.0, 1.0}


def test_scatter_directions_isotropic_mean():
    # 448 particles give 100128 upper-triangle samples
    n = sample_scatter_directions(448, 3, stream(5))
    iu, ju = np.triu_indices(448, 1)
    assert iu.size >= 10**5
    assert np.linalg.norm(n[iu, ju].mean(axis=0)) < 0.02


def test_mask_coll_coef_zero_rejects_all():
    rng = np.random.default_rng(0)
    for _ in range(50):
        kin = pairwise_kinematics(make_batch(rng.normal(size=(6, 2)) * 1e-3, rng.normal(size=(6, 2))))
        acc, _ = collision_mask(kin, 0.0)
        assert not acc.any()


def test_mask_coincident_pair_accepted():
    kin = pairwise_kinematics(make_batch([[0.0], [0.0]], [[1.0], [-1.0]]))
    acc, vmax = collision_mask(kin, 0.5)
    assert vmax == 2.0
    assert acc[0, 1] and acc[1, 0] and not acc[0, 0]


def test_mask_equal_velocities_empty():
    kin = pairwise_kinematics(make_batch([[0.0], [1.0], [3.0]], [[2.0], [2.0], [2.0]]))
    acc, vmax = collision_mask(kin, 1.0)
    assert vmax == 0.0 and not acc.any()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_mask_monotone_in_coll_coef(seed, c1, c2):
    lo, hi = min(c1, c2), max(c1, c2)
    rng = np.random.default_rng(seed)
    kin = pairwise_kinematics(make_batch(rng.normal(size=(8, 2)), rng.normal(size=(8, 2))))
    a_lo, _ = collision_mask(kin, lo)
    a_hi, _ = collision_mask(kin, hi)
    assert not np.any(a_lo & ~a_hi)
    np.testing.assert_array_equal(a_lo, a_lo.T)


def _one_d_pair(n12):
    batch = make_batch([[0.0], [2.0]], [[1.0], [-1.0]])
    dirs = np.zeros((2, 2, 1))
    dirs[0, 1, 0], dirs[1, 0, 0] = n12, -n12
    return batch, dirs


def test_delta_v_velocity_swap():
    batch, dirs = _one_d_pair(-1.0)
    dv = compute_delta_v(pairwise_kinematics(batch), dirs, batch)
    assert dv[0, 1, 0] == -2.0 and dv[1, 0, 0] == 2.0


def test_delta_v_scatter_back():
    batch, dirs = _one_d_pair(1.0)
    dv = compute_delta_v(pairwise_kinematics(batch), dirs, batch)
    assert dv[0, 1, 0] == 0.0 and dv[1, 0, 0] == 0.0


def test_delta_v_equal_velocities_zero():
    batch = make_batch([[0.0, 0.0], [1.0, 1.0]], [[0.3, -0.2], [0.3, -0.2]])
    dirs = sample_scatter_directions(2, 2, stream(0))
    dv = compute_delta_v(pairwise_kinematics(batch), dirs, batch)
    assert np.all(dv == 0.0)


def test_delta_v_antisymmetric():
    rng = np.random.default_rng(9)
    batch = make_batch(rng.normal(size=(10, 4)), rng.normal(size=(10, 4)))
    dirs = sample_scatter_directions(10, 4, stream(9))
    dv = compute_delta_v(pairwise_kinematics(batch), dirs, batch)
    assert np.abs(dv + dv.transpose(1, 0, 2)).max() < 1e-12


def _report(accepted, dirs, batch):
    kin = pairwise_kinematics(batch)
    accepted = np.asarray(accepted, dtype=bool)
    return kin, CollisionReport(accepted, dirs, compute_delta_v(kin, dirs, batch),
                                accepted.sum(1).astype(np.int64), float(kin.v_r.max()))


def test_apply_update_no_collisions_is_residual_step():
    batch, dirs = _one_d_pair(1.0)
    kin, rep = _report(np.zeros((2, 2)), dirs, batch)
    out = apply_update(batch, rep, kin, 0.7, True)
    np.testing.assert_array_equal(out.positions, batch.positions + 0.7 * batch.velocities)


def test_apply_update_position_average():
    batch, dirs = _one_d_pair(-1.0)
    kin, rep = _report([[False, True], [True, False]], dirs, batch)
    out = apply_update(batch, rep, kin, 1.0, True)
    # x*_1 = (0 + 1) / 2 = 0.5, v'_1 = 1 - 2 = -1
    assert out.velocities[0, 0] == -1.0
    assert out.positions[0, 0] == 0.5 - 1.0
    no_pos = apply_update(batch, rep, kin, 1.0, False)
    assert no_pos.positions[0, 0] == 0.0 - 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]))
def test_apply_update_momentum_any_mask(seed, nd):
    rng = np.random.default_rng(seed)
    N = 7
    batch = make_batch(rng.normal(size=(N, nd)), rng.normal(size=(N, nd)))
    upper = np.triu(rng.random((N, N)) < 0.5, 1)
    kin, rep = _report(upper | upper.T, sample_scatter_directions(N, nd, rng), batch)
    out = apply_update(batch, rep, kin, 1.0, True)
    scale = np.abs(batch.velocities).sum()
    brute = sum(out.velocities[i] for i in range(N)) - sum(batch.velocities[i] for i in range(N))
    assert np.abs(brute).max() <= 1e-10 * scale


def test_forward_inference_branch():
    cfg = KitiConfig(training=False)
    out, rep = kitinet_forward([1.0, 2.0], [0.5, 0.5], cfg)
    np.testing.assert_array_equal(out, [1.5, 2.5])
    assert rep is None


def test_forward_inference_checks_divisibility():
    with pytest.raises(NonDivisibleDimension):
        kitinet_forward(np.zeros(5), np.zeros(5), KitiConfig(n_divide=2, training=False))


@pytest.mark.parametrize("nd", [1, 2, 4])
def test_forward_coll_coef_zero_matches_inference(backend, nd):
    rng = np.random.default_rng(nd)
    x, v = rng.normal(size=8 * nd), rng.normal(size=8 * nd)
    train_out, rep = kitinet_forward(x, v, KitiConfig(n_divide=nd, coll_coef=0.0, dt=0.3), stream(4))
    inf_out, _ = kitinet_forward(x, v, KitiConfig(n_divide=nd, coll_coef=0.0, dt=0.3, training=False))
    assert np.array_equal(train_out, inf_out)
    assert np.array_equal(train_out, x + 0.3 * v)
    assert not rep.accepted.any()


@pytest.mark.parametrize("nd", [1, 2, 3])
@pytest.mark.parametrize("update", [True, False])
def test_forward_matches_brute_force(backend, nd, update):
    rng = np.random.default_rng(10 * nd + update)
    for trial in range(5):
        x, v = 0.3 * rng.normal(size=6 * nd), rng.normal(size=6 * nd)
        cfg = KitiConfig(n_divide=nd, coll_coef=0.6, dt=0.5, update_positions=update)
        xo, vo, rep = kitinet_collide(x, v, cfg, stream(trial))
        bx, bv, bacc = brute_force_collide(x, v, rep.directions, 0.6, 0.5, update)
        np.testing.assert_array_equal(rep.accepted, bacc)
        np.testing.assert_allclose(xo, bx, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(vo, bv, rtol=1e-12, atol=1e-12)
        assert np.array_equal(rep.counts, bacc.sum(1))


def test_forward_report_invariants(backend):
    rng = np.random.default_rng(1)
    x, v = rng.normal(size=24), rng.normal(size=24)
    _, rep = kitinet_forward(x, v, KitiConfig(n_divide=3, coll_coef=0.8), stream(1))
    A = rep.accepted
    np.testing.assert_array_equal(A, A.T)
    assert not np.diag(A).any()
    assert np.array_equal(rep.counts, A.sum(1))
    iu, ju = np.triu_indices(8, 1)
    assert np.all(np.abs(np.linalg.norm(rep.directions[iu, ju], axis=1) - 1) < 1e-12)
    dv = rep.delta_v
    assert np.abs((dv + dv.transpose(1, 0, 2))[A]).max() < 1e-12


def test_forward_deterministic(backend):
    rng = np.random.default_rng(2)
    x, v = rng.normal(size=12), rng.normal(size=12)
    cfg = KitiConfig(n_divide=2, coll_coef=0.7)
    a, ra = kitinet_forward(x, v, cfg, stream(77))
    b, rb = kitinet_forward(x, v, cfg, stream(77))
    assert np.array_equal(a, b)
    assert np.array_equal(ra.accepted, rb.accepted)
    assert np.array_equal(ra.directions, rb.directions)
    assert np.array_equal(ra.delta_v, rb.delta_v)


def test_forward_does_not_mutate_inputs(backend):
    x, v = np.arange(6.0), np.linspace(-1, 1, 6)
    x0, v0 = x.copy(), v.copy()
    kitinet_forward(x, v, KitiConfig(coll_coef=0.9), stream(0))
    assert np.array_equal(x, x0) and np.array_equal(v, v0)


def test_matching_energy_two_particles(backend):
    cfg = KitiConfig(n_divide=3, coll_coef=1.0)
    rng = np.random.default_rng(0)
    x, v = np.zeros(6), rng.normal(size=6)
    _, vo, rep = kitinet_collide(x, v, cfg, stream(0))
    assert rep.accepted[0, 1]
    e0, e1 = np.sum(v**2), np.sum(vo**2)
    assert abs(e1 - e0) <= 1e-10 * e0


def test_a_edition_reduces_without_collisions(backend):
    x = np.array([1.0, -2.0, 0.5, 3.0])
    vs = np.array([0.1, 0.2, -0.3, 0.4])
    xo, vo = a_edition_forward(x, np.zeros(4), vs, KitiConfig(coll_coef=0.0, dt=0.5), stream(0))
    np.testing.assert_array_equal(xo, x + 0.5 * vs)
    np.testing.assert_array_equal(vo, vs)


def test_a_edition_compositional(backend):
    rng = np.random.default_rng(4)
    x, a, vs = rng.normal(size=8), rng.normal(size=8), rng.normal(size=8)
    cfg = KitiConfig(n_divide=2, coll_coef=0.7, dt=0.4)
    xo, vo = a_edition_forward(x, a, vs, cfg, stream(11))
    ref_x, ref_v, _ = kitinet_collide(x, vs + 0.4 * a, cfg, stream(11))
    assert np.array_equal(xo, ref_x) and np.array_equal(vo, ref_v)
    ref_only, _ = kitinet_forward(x, vs + 0.4 * a, cfg, stream(11))
    assert np.array_equal(xo, ref_only)


def test_a_edition_first_layer_deterministic(backend):
    x, a = np.zeros(6), np.ones(6)
    cfg = KitiConfig(n_divide=2, coll_coef=0.5)
    r1 = a_edition_forward(x, a, None, cfg, stream(3), v_std=0.5)
    r2 = a_edition_forward(x, a, None, cfg, stream(3), v_std=0.5)
    assert np.array_equal(r1[0], r2[0]) and np.array_equal(r1[1], r2[1])
    rng = stream(3)
    drawn = 0.5 * rng.standard_normal(6)
    xo, vo = a_edition_forward(x, a, drawn, cfg, rng)
    assert np.array_equal(xo, r1[0]) and np.array_equal(vo, r1[1])


def test_stale_report_shape():
    from kitinet.kernel import kitinet_vjp
    x, v = np.zeros(4), np.arange(4.0)
    _, rep = kitinet_forward(x, v, KitiConfig(n_divide=1), stream(0))
    with pytest.raises(StaleReport):
        kitinet_vjp(np.zeros(6), np.arange(6.0), KitiConfig(n_divide=1), rep, np.ones(6))
