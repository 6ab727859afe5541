import numpy as np
import pytest
import scipy.linalg

from conftest import MIMO_K, MIMO_XSTAR, random_cost
from fbopt import (
    ControllerConfig,
    DisturbanceSchedule,
    Layout,
    QuadraticCost,
    SmoothCost,
    StateSpace,
    Trajectory,
    augment,
    closed_loop_rhs,
    decay_rate_estimate,
    equilibrium,
    simulate,
)
from fbopt.exceptions import DivergenceError, EquilibriumError


def test_augment_scalar(scalar_plant, scalar_ctl):
    aug = augment(scalar_plant, scalar_ctl)
    assert aug.layout is Layout.REDUCED
    assert np.array_equal(aug.Ahat, [[-5, 1], [0, 0]])
    assert np.array_equal(aug.Bhat_e, [[1], [1]])
    assert np.array_equal(aug.Bhat_w, [[1], [0]])
    assert np.array_equal(aug.Chat, [[1, 0]])


def test_augment_mimo(mimo_plant, mimo_ctl):
    aug = augment(mimo_plant, mimo_ctl)
    assert aug.layout is Layout.FULL and aug.N == 6
    A, B = mimo_plant.A, mimo_plant.B
    LC = np.array([[1.0, 0.0], [1.0, 0.0]])
    BK = B @ np.array(MIMO_K)
    assert np.allclose(aug.Ahat[:2, :2], A)
    assert np.allclose(aug.Ahat[2:4, :2], LC)
    assert np.allclose(aug.Ahat[2:4, 2:4], A - LC)
    assert np.allclose(aug.Ahat[:4, 4:], np.vstack([BK, BK]))
    assert np.all(aug.Ahat[4:] == 0)
    assert np.allclose(aug.Bhat_e, np.vstack([BK, BK, np.eye(2)]))
    assert np.allclose(aug.Chat, np.hstack([np.zeros((2, 2)), np.eye(2), np.zeros((2, 2))]))


def test_augment_zero_gains_leaves_plant(scalar_plant):
    aug = augment(scalar_plant, ControllerConfig([[0.0]], [[0.0]]))
    assert np.array_equal(aug.Ahat, [[-5, 0], [0, 0]])
    assert np.array_equal(aug.Bhat_e, [[0], [1]])


def test_equilibrium_scalar(scalar_plant, scalar_ctl, scalar_cost):
    eq = equilibrium(scalar_plant, scalar_ctl, scalar_cost, [2.0])
    assert eq.x_star == pytest.approx([10.0])
    assert eq.u_star == pytest.approx([50.0])
    assert eq.eI_star == pytest.approx([48.0])
    assert equilibrium(scalar_plant, scalar_ctl, scalar_cost, [-10.0]).eI_star == pytest.approx([60.0])


def test_equilibrium_mimo(mimo_plant, mimo_ctl, mimo_cost):
    eq = equilibrium(mimo_plant, mimo_ctl, mimo_cost, [1.0, 1.0])
    assert np.allclose(eq.x_star, [128 / 23, 14 / 23])
    assert np.allclose(eq.x_star, MIMO_XSTAR, atol=1e-4)
    assert np.allclose(mimo_plant.A @ eq.x_star + mimo_plant.B @ eq.u_star, 0, atol=1e-12)
    assert np.allclose(np.array(MIMO_K) @ eq.eI_star, eq.u_star - 1.0)
    assert eq.xi(Layout.FULL).size == 6 and eq.xi("reduced").size == 4


def test_equilibrium_errors(scalar_plant, scalar_cost):
    with pytest.raises(EquilibriumError) as info:
        equilibrium(scalar_plant, ControllerConfig([[0.0]], [[1.0]]), scalar_cost, [2.0])
    assert info.value.stage == "integral_gain"
    # x' = -x + u with only one input channel into a 2-state plant that cannot hold x2 = 1
    stuck = StateSpace([[-1.0, 0.0], [0.0, -1.0]], [[1.0], [0.0]], np.eye(2))
    cost = QuadraticCost(np.eye(2), [0.0, -1.0])
    with pytest.raises(EquilibriumError) as info:
        equilibrium(stuck, ControllerConfig([[1.0, 0.0]], [[1.0, 0.0]]), cost, [0.0])
    assert info.value.stage == "steady_state"


@pytest.mark.parametrize("opt", ["phi1", "phi2"])
def test_rhs_vanishes_at_equilibrium(opt, scalar_plant, scalar_cost, mimo_plant, mimo_cost):
    for ss, cost, cfg, w in [
        (scalar_plant, scalar_cost, ControllerConfig([[1.0]], [[1.0]], opt, rho=1.0), [2.0]),
        (mimo_plant, mimo_cost,
         ControllerConfig(MIMO_K, MIMO_K, opt, rho=10.0, L_obs=[[1.0], [1.0]]), [1.0, 1.0]),
    ]:
        eq = equilibrium(ss, cfg, cost, w)
        aug = augment(ss, cfg)
        d = closed_loop_rhs(ss, cfg, cost, w, 0.0, eq.xi(aug.layout))
        assert np.linalg.norm(d) <= 1e-10


def test_rhs_scalar_origin(scalar_plant, scalar_ctl, scalar_cost):
    d = closed_loop_rhs(scalar_plant, scalar_ctl, scalar_cost, [0.0], 0.0, [0.0, 0.0])
    assert d == pytest.approx([20.0, 20.0])


def test_rhs_with_zero_optimizer_is_linear(mimo_plant, mimo_ctl, mimo_cost):
    rng = np.random.default_rng(0)
    aug = augment(mimo_plant, mimo_ctl)
    for _ in range(5):
        xi = rng.standard_normal(6)
        w = rng.standard_normal(2)
        d = closed_loop_rhs(mimo_plant, mimo_ctl, mimo_cost, w, 0.0, xi,
                            phi=lambda z: np.zeros(2))
        assert np.allclose(d, aug.Ahat @ xi + aug.Bhat_w @ w, atol=1e-12)


def test_open_loop_decay(scalar_plant, scalar_cost):
    cfg = ControllerConfig([[0.0]], [[0.0]])
    traj = simulate(scalar_plant, cfg, scalar_cost, [0.0], xi0=[1.0, 0.0], dt=1e-3, T=2.0)
    assert np.max(np.abs(traj.x[:, 0] - np.exp(-5 * traj.times))) <= 1e-6


def test_affine_matches_direct_rk4(mimo_plant, mimo_ctl, mimo_cost):
    sched = DisturbanceSchedule([(0.0, [0.0, 0.0]), (1.0, [1.0, -1.0])])
    xi0 = np.linspace(-1, 1, 6)
    for cfg in (mimo_ctl, mimo_ctl.replace(optimizer="phi2")):
        a = simulate(mimo_plant, cfg, mimo_cost, sched, xi0, dt=1e-2, T=3.0, method="affine")
        b = simulate(mimo_plant, cfg, mimo_cost, sched, xi0, dt=1e-2, T=3.0, method="rk4")
        assert np.max(np.abs(a.states - b.states)) <= 1e-10
        assert np.allclose(a.e, b.e, atol=1e-10)


def test_generic_cost_uses_rk4(scalar_plant, scalar_ctl, scalar_cost):
    generic = SmoothCost(scalar_cost.gradient, 1, 2.0, 2.0)
    a = simulate(scalar_plant, scalar_ctl, scalar_cost, [2.0], dt=1e-2, T=2.0)
    b = simulate(scalar_plant, scalar_ctl, generic, [2.0], dt=1e-2, T=2.0)
    assert np.allclose(a.states, b.states, atol=1e-10)
    with pytest.raises(ValueError, match="quadratic"):
        simulate(scalar_plant, scalar_ctl, generic, [2.0], dt=1e-2, T=1.0, method="affine")


def test_step_halving_converges(scalar_plant, scalar_ctl, scalar_cost, scalar_schedule):
    a = simulate(scalar_plant, scalar_ctl, scalar_cost, scalar_schedule, dt=1e-2, T=60.0)
    b = simulate(scalar_plant, scalar_ctl, scalar_cost, scalar_schedule, dt=5e-3, T=60.0)
    assert np.max(np.abs(a.states[-1] - b.states[-1])) <= 1e-6


def test_trajectory_signals(scalar_plant, scalar_ctl, scalar_cost, scalar_schedule):
    traj = simulate(scalar_plant, scalar_ctl, scalar_cost, scalar_schedule, dt=1e-2, T=60.0)
    assert traj.dt == pytest.approx(1e-2)
    assert traj.xhat is None
    assert np.allclose(traj.u, traj.r + traj.w)
    assert traj.w[0] == pytest.approx([2.0]) and traj.w[-1] == pytest.approx([-10.0])
    assert np.allclose(traj.e[:, 0], 20 - 2 * traj.x[:, 0])


def test_misaligned_switch(scalar_plant, scalar_ctl, scalar_cost):
    sched = DisturbanceSchedule([(0.0, [0.0]), (0.0105, [1.0])])
    with pytest.raises(ValueError, match="multiple of dt"):
        simulate(scalar_plant, scalar_ctl, scalar_cost, sched, dt=1e-3, T=1.0)


def test_divergence(scalar_cost):
    plant = StateSpace([[1.0]], [[1.0]], [[1.0]])
    cfg = ControllerConfig([[0.0]], [[0.0]])
    with pytest.raises(DivergenceError) as info:
        simulate(plant, cfg, scalar_cost, [0.0], xi0=[1.0, 0.0], dt=1e-2, T=40.0)
    partial = info.value.trajectory
    assert partial is not None
    assert 19 < partial.times[-1] < 22
    assert np.all(np.isfinite(partial.states))


def test_observer_error_dynamics(mimo_plant, mimo_ctl, mimo_cost):
    xi0 = np.array([1.0, -2.0, 0.0, 0.0, 0.3, 0.1])
    traj = simulate(mimo_plant, mimo_ctl, mimo_cost, [0.5, -0.5], xi0, dt=1e-3, T=5.0)
    F = mimo_plant.A - mimo_ctl.L_obs @ mimo_plant.C
    err0 = xi0[:2] - xi0[2:4]
    for k in (0, 500, 2000, 5000):
        expected = scipy.linalg.expm(F * traj.times[k]) @ err0
        assert np.allclose(traj.x[k] - traj.xhat[k], expected, atol=1e-9)
    # |e(t)| <= kappa(V) exp(max Re lambda t) |e(0)|
    lam, V = np.linalg.eig(F)
    kappa = np.linalg.cond(V)
    bound = kappa * np.exp(np.max(lam.real) * traj.times) * np.linalg.norm(err0)
    assert np.all(np.linalg.norm(traj.x - traj.xhat, axis=1) <= bound * (1 + 1e-9))


def _synthetic(times, states):
    k = len(times)
    z = np.zeros((k, 1))
    return Trajectory(times, states, Layout.REDUCED, 1, z, z, z, z, z, z)


def test_decay_rate_exact_exponential():
    t = np.linspace(0, 5, 5001)
    states = np.column_stack([np.exp(-5 * t), np.zeros_like(t)])
    assert decay_rate_estimate(_synthetic(t, states), [0.0, 0.0]) == pytest.approx(5.0, rel=1e-6)


def test_decay_rate_simulated(scalar_plant, scalar_ctl, scalar_cost):
    traj = simulate(scalar_plant, scalar_ctl, scalar_cost, [2.0], dt=1e-3, T=60.0)
    eq = equilibrium(scalar_plant, scalar_ctl, scalar_cost, [2.0])
    M = np.array([[-7.0, 1.0], [-2.0, 0.0]])
    slowest = -np.max(np.linalg.eigvals(M).real)
    assert decay_rate_estimate(traj, eq) == pytest.approx(slowest, rel=0.02)


def test_decay_rate_errors():
    t = np.linspace(0, 1, 11)
    flat = np.ones((11, 2))
    with pytest.raises(ValueError, match="empty"):
        decay_rate_estimate(_synthetic(t, np.zeros((11, 2))), [0.0, 0.0])
    with pytest.raises(ValueError, match="not converging"):
        decay_rate_estimate(_synthetic(t, flat), [0.0, 0.0])
    slow = np.column_stack([1 - 0.05 * t, np.zeros_like(t)])
    with pytest.raises(ValueError, match="empty"):
        decay_rate_estimate(_synthetic(t, slow), [0.0, 0.0])


def test_random_quadratic_loops_settle():
    rng = np.random.default_rng(4)
    plant = StateSpace(-2 * np.eye(2), np.eye(2), np.eye(2))
    for _ in range(3):
        cost = random_cost(rng, 2)
        cfg = ControllerConfig(np.eye(2), np.eye(2), "phi2", rho=1.0)
        w = rng.standard_normal(2)
        traj = simulate(plant, cfg, cost, w, dt=1e-2, T=200.0)
        eq = equilibrium(plant, cfg, cost, w)
        assert np.linalg.norm(traj.states[-1] - eq.xi(Layout.REDUCED)) <= 1e-6
