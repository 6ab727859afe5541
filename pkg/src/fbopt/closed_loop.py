"""Plant plus feedback law as one system: equilibrium, linear part, simulation."""

import enum
from dataclasses import dataclass

import numpy as np

from .controller import Optimizer, check_pairing, optimizer_eval
from .exceptions import DivergenceError, EquilibriumError
from .model import (
    DisturbanceSchedule,
    QuadraticCost,
    _freeze,
    cost_minimizer,
    steady_state_input,
    steady_state_reachable,
)

DIVERGENCE_THRESHOLD = 1e9


class Layout(str, enum.Enum):
    FULL = "full"  # xi = [x, xhat, eI]
    REDUCED = "reduced"  # xi = [x, eI], estimator bypassed


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    """Linear part of the loop, ``xi' = Ahat xi + Bhat_e e + Bhat_w w``, ``z = Chat xi``."""

    Ahat: np.ndarray
    Bhat_e: np.ndarray
    Bhat_w: np.ndarray
    Chat: np.ndarray
    layout: Layout

    @property
    def N(self):
        return self.Ahat.shape[0]

    @property
    def n(self):
        return self.Chat.shape[0]


def augment(ss, cfg):
    check_pairing(ss, cfg)
    n = ss.n
    A, B = ss.A, ss.B
    Z = np.zeros((n, n))
    I = np.eye(n)
    BKI, BKP = B @ cfg.K_I, B @ cfg.K_P
    if cfg.uses_observer:
        LC = cfg.L_obs @ ss.C
        Ahat = np.block([[A, Z, BKI], [LC, A - LC, BKI], [Z, Z, Z]])
        Bhat_e = np.vstack([BKP, BKP, I])
        Bhat_w = np.vstack([B, B, np.zeros((n, ss.m))])
        Chat = np.hstack([Z, I, Z])
        layout = Layout.FULL
    else:
        Ahat = np.block([[A, BKI], [Z, Z]])
        Bhat_e = np.vstack([BKP, I])
        Bhat_w = np.vstack([B, np.zeros((n, ss.m))])
        Chat = np.hstack([I, Z])
        layout = Layout.REDUCED
    return AugmentedSystem(_freeze(Ahat), _freeze(Bhat_e), _freeze(Bhat_w), _freeze(Chat), layout)


@dataclass(frozen=True, eq=False)
class Equilibrium:
    x_star: np.ndarray
    z_star: np.ndarray
    eI_star: np.ndarray
    u_star: np.ndarray
    w: np.ndarray

    def xi(self, layout):
        if Layout(layout) is Layout.FULL:
            return np.concatenate([self.x_star, self.z_star, self.eI_star])
        return np.concatenate([self.x_star, self.eI_star])


def equilibrium(ss, cfg, cost, w):
    """Optimal equilibrium of the loop under the constant disturbance ``w``.

    The state sits at the cost minimizer, the estimate agrees with it and the
    integrator holds the input that cancels ``w``. Raises
    :class:`EquilibriumError` naming the equation that has no solution.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    x_star = cost_minimizer(cost)
    u_star, res = steady_state_input(ss, x_star)
    if not steady_state_reachable(ss, x_star, res):
        raise EquilibriumError(
            f"no input holds the minimizer at rest (residual {res:.3g})", "steady_state", res)
    target = u_star - w
    eI_star = np.linalg.lstsq(cfg.K_I, target, rcond=None)[0]
    res_I = float(np.linalg.norm(cfg.K_I @ eI_star - target))
    if res_I > 1e-8 * (1.0 + np.linalg.norm(target)):
        raise EquilibriumError(
            f"K_I eI = u* - w has no solution (residual {res_I:.3g})", "integral_gain", res_I)
    return Equilibrium(*(_freeze(v) for v in (x_star, x_star.copy(), eI_star, u_star, w)))


def _as_schedule(schedule):
    if isinstance(schedule, DisturbanceSchedule):
        return schedule
    return DisturbanceSchedule.constant(schedule)


def _split(xi, n, full):
    x = xi[:n]
    if full:
        return x, xi[n:2 * n], xi[2 * n:3 * n]
    return x, x, xi[n:2 * n]


def _make_rhs(ss, cfg, cost, phi=None):
    n = ss.n
    full = cfg.uses_observer
    A, B, C, D = ss.A, ss.B, ss.C, ss.D
    L = cfg.L_obs
    K_I, K_P = cfg.K_I, cfg.K_P
    if phi is None:
        def phi(z):
            return optimizer_eval(cost, cfg, z)

    def rhs(xi, w):
        x, z, eI = _split(xi, n, full)
        e = phi(z)
        u = K_I @ eI + K_P @ e + w
        dx = A @ x + B @ u
        if not full:
            return np.concatenate([dx, e])
        y = C @ x + D @ u
        dxhat = (A - L @ C) @ z + (B - L @ D) @ u + L @ y
        return np.concatenate([dx, dxhat, e])

    return rhs


def closed_loop_rhs(ss, cfg, cost, schedule, t, xi, phi=None):
    """Time derivative of ``xi`` at time ``t``.

    ``phi`` overrides the configured optimizer map ``z -> e``.
    """
    check_pairing(ss, cfg)
    w = _as_schedule(schedule)(t)
    rhs = _make_rhs(ss, cfg, cost, phi)
    return rhs(np.asarray(xi, dtype=float).reshape(-1), w)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled closed-loop solution.

    ``states`` has one row per entry of ``times``; the signal arrays
    (``y``, ``z``, ``e``, ``r``, ``u``, ``w``) are recorded at the same
    instants.
    """

    times: np.ndarray
    states: np.ndarray
    layout: Layout
    n: int
    y: np.ndarray
    z: np.ndarray
    e: np.ndarray
    r: np.ndarray
    u: np.ndarray
    w: np.ndarray

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def x(self):
        return self.states[:, : self.n]

    @property
    def xhat(self):
        if self.layout is Layout.FULL:
            return self.states[:, self.n: 2 * self.n]
        return None

    @property
    def eI(self):
        return self.states[:, -self.n:]


def _affine_optimizer(cost, cfg):
    """``e = K z + k`` for quadratic costs."""
    n = cost.n
    if cfg.optimizer is Optimizer.PHI1:
        return -cost.Q, -cost.c
    G = np.linalg.inv(np.eye(n) + cfg.rho * cost.Q)
    return G - np.eye(n), -cfg.rho * G @ cost.c


def _rk4_propagator(M, dt):
    """Exact one-step maps of classical RK4 on ``xi' = M xi + b``.

    Returns ``(T, S)`` with ``xi_next = T xi + S b``.
    """
    Z = dt * M
    I = np.eye(M.shape[0])
    Z2 = Z @ Z
    Z3 = Z2 @ Z
    T = I + Z + Z2 / 2 + Z3 / 6 + Z3 @ Z / 24
    S = dt * (I + Z / 2 + Z2 / 6 + Z3 / 24)
    return T, S


def _switch_steps(schedule, dt, K):
    steps = []
    for t, _ in schedule:
        k = t / dt
        if abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise ValueError(f"disturbance switch at t={t} is not a multiple of dt={dt}")
        steps.append(min(int(round(k)), K))
    return steps


def simulate(ss, cfg, cost, schedule, xi0=None, dt=1e-3, T=10.0, method="auto"):
    """Integrate the closed loop with fixed-step classical RK4.

    ``method="affine"`` (the default for quadratic costs) applies the RK4
    update in matrix form, which is algebraically identical to stepping the
    right-hand side; ``method="rk4"`` evaluates the right-hand side directly.
    Raises :class:`DivergenceError` once ``|xi|`` exceeds 1e9.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if T < dt:
        raise ValueError(f"horizon T={T} is shorter than dt={dt}")
    aug = augment(ss, cfg)
    schedule = _as_schedule(schedule)
    if schedule.m != ss.m:
        raise ValueError(f"disturbance has length {schedule.m}, plant has {ss.m} inputs")
    N, n = aug.N, ss.n
    xi = np.zeros(N) if xi0 is None else np.asarray(xi0, dtype=float).reshape(-1).copy()
    if xi.size != N:
        raise ValueError(f"initial state has length {xi.size}, expected {N}")
    K = int(round(T / dt))
    switch_steps = _switch_steps(schedule, dt, K)
    if method == "auto":
        method = "affine" if isinstance(cost, QuadraticCost) else "rk4"
    if method == "affine" and not isinstance(cost, QuadraticCost):
        raise ValueError("affine propagation needs a quadratic cost")

    states = np.empty((K + 1, N))
    states[0] = xi
    w_steps = np.empty((K + 1, ss.m))
    bounds = switch_steps[1:] + [K + 1]
    for (start, stop), w in zip(zip(switch_steps, bounds), schedule.values):
        w_steps[start:stop] = w

    if method == "affine":
        Kz, kz = _affine_optimizer(cost, cfg)
        M = aug.Ahat + aug.Bhat_e @ Kz @ aug.Chat
        Tm, Sm = _rk4_propagator(M, dt)
        bias_e = aug.Bhat_e @ kz
        k = 0
        for start, stop, w in zip(switch_steps, bounds, schedule.values):
            c_step = Sm @ (bias_e + aug.Bhat_w @ w)
            for k in range(start, min(stop, K)):
                xi = Tm @ xi + c_step
                if not np.linalg.norm(xi) <= DIVERGENCE_THRESHOLD:
                    _diverged(states, k, ss, cfg, cost, aug, w_steps, dt)
                states[k + 1] = xi
    elif method == "rk4":
        rhs = _make_rhs(ss, cfg, cost)
        h = dt
        for k in range(K):
            w = w_steps[k]
            k1 = rhs(xi, w)
            k2 = rhs(xi + 0.5 * h * k1, w)
            k3 = rhs(xi + 0.5 * h * k2, w)
            k4 = rhs(xi + h * k3, w)
            xi = xi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.linalg.norm(xi) <= DIVERGENCE_THRESHOLD:
                _diverged(states, k, ss, cfg, cost, aug, w_steps, dt)
            states[k + 1] = xi
    else:
        raise ValueError(f"unknown method {method!r}")
    return _build_trajectory(states, np.arange(K + 1) * dt, ss, cfg, cost, aug, w_steps)


def _diverged(states, k, ss, cfg, cost, aug, w_steps, dt):
    kept = states[: k + 1]
    partial = _build_trajectory(kept, np.arange(k + 1) * dt, ss, cfg, cost, aug, w_steps[: k + 1])
    raise DivergenceError(f"state norm exceeded {DIVERGENCE_THRESHOLD:g} at t={(k + 1) * dt:g}",
                          partial)


def _build_trajectory(states, times, ss, cfg, cost, aug, w):
    n = ss.n
    full = aug.layout is Layout.FULL
    z = states @ aug.Chat.T
    if isinstance(cost, QuadraticCost):
        Kz, kz = _affine_optimizer(cost, cfg)
        e = z @ Kz.T + kz
    else:
        e = np.array([optimizer_eval(cost, cfg, zi) for zi in z]).reshape(len(z), n)
    eI = states[:, -n:]
    r = eI @ cfg.K_I.T + e @ cfg.K_P.T
    u = r + w
    y = states[:, :n] @ ss.C.T + u @ ss.D.T
    arrays = [times, states, y, z, e, r, u, w]
    arrays = [_freeze(a) for a in arrays]
    t, s, y, z, e, r, u, w = arrays
    return Trajectory(t, s, Layout.FULL if full else Layout.REDUCED, n, y, z, e, r, u, w)


def decay_rate_estimate(traj, eq):
    """Exponential decay rate of ``|xi(t) - xi*|`` fitted on a log scale.

    The fit covers the span from the first time the error drops to 1e-1 of
    its initial value to the last time it is still above 1e-6 of it.
    ``eq`` is an :class:`Equilibrium` or the target state vector.
    """
    target = eq.xi(traj.layout) if isinstance(eq, Equilibrium) else np.asarray(eq, dtype=float)
    err = np.linalg.norm(traj.states - target, axis=1)
    e0 = err[0]
    if not e0 > 0:
        raise ValueError("decay window is empty: trajectory starts at the equilibrium")
    if not err[-1] < e0:
        raise ValueError("trajectory is not converging")
    below = np.nonzero(err <= 1e-1 * e0)[0]
    above = np.nonzero(err >= 1e-6 * e0)[0]
    if below.size == 0 or above.size == 0 or above[-1] - below[0] < 1:
        raise ValueError("decay window is empty")
    sl = slice(below[0], above[-1] + 1)
    t = traj.times[sl]
    logs = np.log(np.maximum(err[sl], np.finfo(float).tiny))
    slope = np.polyfit(t, logs, 1)[0]
    return float(-slope)
