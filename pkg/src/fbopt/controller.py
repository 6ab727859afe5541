"""Estimator, optimizer and PI driver blocks of the feedback law."""

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from .exceptions import ConfigError, IllPosedError
from .model import QuadraticCost, _as_matrix, _freeze, hurwitz_margin


class Optimizer(str, enum.Enum):
    PHI1 = "phi1"  # gradient descent, -grad f
    PHI2 = "phi2"  # proximal tracking, prox_{rho f} - I


class EstimatorMode(str, enum.Enum):
    OBSERVER = "observer"
    BYPASS = "bypass"


@dataclass(frozen=True, eq=False)
class ControllerConfig:
    """Gains and block choices of the feedback law.

    ``estimator_mode`` defaults to ``OBSERVER`` when ``L_obs`` is given and
    ``BYPASS`` otherwise. Plant-dependent requirements (Hurwitz observer
    error, ``C = I`` and ``D = 0`` in bypass) are checked by
    :func:`check_pairing`.
    """

    K_I: np.ndarray
    K_P: np.ndarray
    optimizer: Optimizer = Optimizer.PHI1
    rho: Optional[float] = None
    L_obs: Optional[np.ndarray] = None
    estimator_mode: Optional[EstimatorMode] = None

    def __post_init__(self):
        try:
            optimizer = Optimizer(self.optimizer)
        except ValueError:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}", "optimizer") from None
        object.__setattr__(self, "optimizer", optimizer)
        if optimizer is Optimizer.PHI2:
            if self.rho is None or not np.isfinite(self.rho) or self.rho <= 0:
                raise ConfigError(f"must be a positive number for phi2, got {self.rho}", "rho")
        if self.rho is not None:
            object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "K_I", _freeze(_as_matrix(self.K_I, "K_I")))
        object.__setattr__(self, "K_P", _freeze(_as_matrix(self.K_P, "K_P")))
        if self.K_I.shape != self.K_P.shape:
            raise ConfigError(f"K_I {self.K_I.shape} and K_P {self.K_P.shape} differ", "K_P")
        mode = self.estimator_mode
        if mode is None:
            mode = EstimatorMode.BYPASS if self.L_obs is None else EstimatorMode.OBSERVER
        try:
            mode = EstimatorMode(mode)
        except ValueError:
            raise ConfigError(f"unknown estimator mode {mode!r}", "estimator_mode") from None
        object.__setattr__(self, "estimator_mode", mode)
        if mode is EstimatorMode.OBSERVER:
            if self.L_obs is None:
                raise ConfigError("observer mode needs an observer gain", "L_obs")
            object.__setattr__(self, "L_obs", _freeze(_as_matrix(self.L_obs, "L_obs")))
        elif self.L_obs is not None:
            object.__setattr__(self, "L_obs", _freeze(_as_matrix(self.L_obs, "L_obs")))

    @property
    def uses_observer(self):
        return self.estimator_mode is EstimatorMode.OBSERVER

    def replace(self, **changes):
        fields = dict(K_I=self.K_I, K_P=self.K_P, optimizer=self.optimizer, rho=self.rho,
                      L_obs=self.L_obs, estimator_mode=self.estimator_mode)
        fields.update(changes)
        return ControllerConfig(**fields)


@dataclass(frozen=True, eq=False)
class FeedbackState:
    xhat: np.ndarray
    eI: np.ndarray

    def __post_init__(self):
        for name in ("xhat", "eI"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, _freeze(arr))

    def as_vector(self):
        return np.concatenate([self.xhat, self.eI])


class WellPosedness(NamedTuple):
    ok: bool
    reason: str


def wellposedness_check(ss, cfg):
    """Algebraic-loop test for the plant/controller interconnection.

    Only the bypass estimator with ``D != 0`` and ``K_P != 0`` closes a loop
    through the feedthrough; the observer makes ``r`` depend on internal
    state alone.
    """
    if cfg.uses_observer:
        return WellPosedness(True, "observer present: r depends only on controller state")
    if np.any(ss.D != 0) and np.any(cfg.K_P != 0):
        return WellPosedness(False, "bypass estimator with D != 0 and K_P != 0 forms an algebraic loop")
    if np.any(ss.D != 0):
        return WellPosedness(True, "K_P = 0: r depends only on the integrator state")
    return WellPosedness(True, "D = 0: no direct feedthrough")


def check_pairing(ss, cfg):
    """Raise :class:`IllPosedError` unless ``cfg`` can drive ``ss``."""
    n, m, p = ss.n, ss.m, ss.p
    wp = wellposedness_check(ss, cfg)
    if not wp.ok:
        raise IllPosedError(wp.reason)
    if cfg.K_I.shape != (m, n):
        raise IllPosedError(f"K_I has shape {cfg.K_I.shape}, expected {(m, n)}")
    if cfg.uses_observer:
        if cfg.L_obs.shape != (n, p):
            raise IllPosedError(f"L_obs has shape {cfg.L_obs.shape}, expected {(n, p)}")
        margin = hurwitz_margin(ss.A - cfg.L_obs @ ss.C)
        if margin >= 0:
            raise IllPosedError(f"A - L_obs C is not Hurwitz (spectral abscissa {margin:.3g})")
    else:
        if ss.C.shape != (n, n) or not np.allclose(ss.C, np.eye(n), rtol=0, atol=1e-12):
            raise IllPosedError("bypass estimator requires C = I")
        if np.any(ss.D != 0):
            raise IllPosedError("bypass estimator requires D = 0")


def observer_rhs(ss, L_obs, xhat, u, y):
    L = _as_matrix(L_obs, "L_obs")
    xhat = np.asarray(xhat, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    return (ss.A - L @ ss.C) @ xhat + (ss.B - L @ ss.D) @ u + L @ y


def phi1_eval(cost, z):
    return -np.asarray(cost.gradient(np.asarray(z, dtype=float).reshape(-1)), dtype=float)


def _fd_jacobian(grad, v, h=1e-6):
    n = v.size
    J = np.empty((n, n))
    for i in range(n):
        step = np.zeros(n)
        step[i] = h * max(1.0, abs(v[i]))
        J[:, i] = (grad(v + step) - grad(v - step)) / (2 * step[i])
    return 0.5 * (J + J.T)


def prox_eval(cost, rho, p, tol=1e-10, max_iter=100):
    """Proximal point ``argmin_v f(v) + |v - p|^2 / (2 rho)``.

    Quadratic costs use the closed form ``(I + rho Q) v = p - rho c``.
    Other costs run damped Newton on the optimality condition
    ``grad f(v) + (v - p) / rho = 0`` until its norm is below
    ``tol * (1 + |p|)``.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    p = np.asarray(p, dtype=float).reshape(-1)
    if isinstance(cost, QuadraticCost):
        M = np.eye(p.size) + rho * cost.Q
        return scipy.linalg.solve(M, p - rho * cost.c, assume_a="pos")

    def residual(v):
        return np.asarray(cost.gradient(v), dtype=float) + (v - p) / rho

    v = p.copy()
    r = residual(v)
    target = tol * (1.0 + np.linalg.norm(p))
    for _ in range(max_iter):
        rn = np.linalg.norm(r)
        if rn <= target:
            return v
        H = cost.hessian(v) if cost.hessian is not None else _fd_jacobian(cost.gradient, v)
        step = np.linalg.solve(np.asarray(H, dtype=float) + np.eye(p.size) / rho, r)
        t = 1.0
        while t > 1e-8:
            trial = v - t * step
            r_trial = residual(trial)
            if np.linalg.norm(r_trial) < (1 - 1e-4 * t) * rn:
                break
            t *= 0.5
        v, r = trial, r_trial
    if np.linalg.norm(r) > target:
        raise RuntimeError("proximal Newton iteration did not converge")
    return v


def phi2_eval(cost, rho, z):
    z = np.asarray(z, dtype=float).reshape(-1)
    return prox_eval(cost, rho, z) - z


def optimizer_eval(cost, cfg, z):
    if cfg.optimizer is Optimizer.PHI1:
        return phi1_eval(cost, z)
    return phi2_eval(cost, cfg.rho, z)


def driver_output(K_I, K_P, eI, e):
    """PI law ``r = K_I eI + K_P e``; the integrator state obeys ``eI' = e``."""
    eI = np.asarray(eI, dtype=float).reshape(-1)
    e = np.asarray(e, dtype=float).reshape(-1)
    return np.asarray(K_I) @ eI + np.asarray(K_P) @ e
