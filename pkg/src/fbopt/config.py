"""Experiment configuration files (TOML).

Layout::

    [plant]        A, B, C, D            nested arrays (D optional, zero)
    [cost]         Q, c, v               quadratic cost 0.5 x'Qx + c'x + v
    [controller]   K_I, K_P, optimizer ("phi1" | "phi2"), rho,
                   estimator_mode ("observer" | "bypass"), L_obs
    [simulation]   dt, T, xi0 (optional), disturbance = [{t, w}, ...]
    [sweep]        parameter ("rho" | "q" | "m_sc"), values, L_ratio (optional)
    [output]       path (optional), precision (significant digits, default 12)

Every section is validated on load; errors are raised as
:class:`~fbopt.exceptions.ConfigError` carrying the dotted field name.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import tomli
import tomli_w

from .controller import ControllerConfig, Optimizer, check_pairing
from .exceptions import ConfigError, FbOptError
from .model import DisturbanceSchedule, QuadraticCost, StateSpace, validate_state_space

SWEEP_PARAMETERS = ("rho", "q", "m_sc")


@dataclass(eq=False)
class SimulationSettings:
    dt: float
    T: float
    schedule: DisturbanceSchedule
    xi0: Optional[np.ndarray] = None


@dataclass(eq=False)
class SweepSettings:
    parameter: str
    values: tuple
    L_ratio: Optional[float] = None


@dataclass(eq=False)
class OutputSettings:
    path: Optional[str] = None
    precision: int = 12


@dataclass(eq=False)
class ExperimentConfig:
    plant: StateSpace
    cost: QuadraticCost
    controller: ControllerConfig
    simulation: Optional[SimulationSettings] = None
    sweep: Optional[SweepSettings] = None
    output: OutputSettings = field(default_factory=OutputSettings)

    def to_dict(self):
        ss, cost, ctl = self.plant, self.cost, self.controller
        data = {
            "plant": {k: getattr(ss, k).tolist() for k in "ABCD"},
            "cost": {"Q": cost.Q.tolist(), "c": cost.c.tolist(), "v": cost.v},
            "controller": {
                "K_I": ctl.K_I.tolist(),
                "K_P": ctl.K_P.tolist(),
                "optimizer": ctl.optimizer.value,
                "estimator_mode": ctl.estimator_mode.value,
            },
        }
        if ctl.rho is not None:
            data["controller"]["rho"] = ctl.rho
        if ctl.L_obs is not None:
            data["controller"]["L_obs"] = ctl.L_obs.tolist()
        if self.simulation is not None:
            sim = self.simulation
            data["simulation"] = {
                "dt": sim.dt,
                "T": sim.T,
                "disturbance": [{"t": t, "w": w.tolist()} for t, w in sim.schedule],
            }
            if sim.xi0 is not None:
                data["simulation"]["xi0"] = np.asarray(sim.xi0, dtype=float).tolist()
        if self.sweep is not None:
            data["sweep"] = {"parameter": self.sweep.parameter, "values": list(self.sweep.values)}
            if self.sweep.L_ratio is not None:
                data["sweep"]["L_ratio"] = self.sweep.L_ratio
        out = {"precision": self.output.precision}
        if self.output.path is not None:
            out["path"] = self.output.path
        data["output"] = out
        return data


def _section(data, name, required=True):
    sec = data.get(name)
    if sec is None:
        if required:
            raise ConfigError("missing section", name)
        return None
    if not isinstance(sec, dict):
        raise ConfigError("must be a table", name)
    return sec


def _get(sec, section, key, default=...):
    if key not in sec:
        if default is ...:
            raise ConfigError("missing value", f"{section}.{key}")
        return default
    return sec[key]


def _matrix(value, name):
    try:
        arr = np.atleast_2d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError("must be a numeric matrix", name) from None
    if arr.ndim != 2:
        raise ConfigError("must be a numeric matrix", name)
    return arr


def _vector(value, name):
    try:
        return np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ConfigError("must be a numeric vector", name) from None


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("must be a number", name)
    return float(value)


def from_dict(data):
    plant = _section(data, "plant")
    ss = StateSpace(*(_matrix(_get(plant, "plant", k), f"plant.{k}") for k in "ABC"),
                    D=None if "D" not in plant else _matrix(plant["D"], "plant.D"))
    report = validate_state_space(ss)
    if not report.ok:
        raise ConfigError("; ".join(report.issues), "plant")

    sec = _section(data, "cost")
    try:
        cost = QuadraticCost(_matrix(_get(sec, "cost", "Q"), "cost.Q"),
                             _vector(_get(sec, "cost", "c"), "cost.c"),
                             _number(sec.get("v", 0.0), "cost.v"))
    except ConfigError:
        raise
    except (ValueError, FbOptError) as exc:
        raise ConfigError(str(exc), "cost") from None
    if cost.n != ss.n:
        raise ConfigError(f"cost dimension {cost.n} does not match plant order {ss.n}", "cost")

    sec = _section(data, "controller")
    rho = sec.get("rho")
    if rho is not None:
        rho = _number(rho, "controller.rho")
    L_obs = sec.get("L_obs")
    try:
        ctl = ControllerConfig(
            K_I=_matrix(_get(sec, "controller", "K_I"), "controller.K_I"),
            K_P=_matrix(_get(sec, "controller", "K_P"), "controller.K_P"),
            optimizer=sec.get("optimizer", Optimizer.PHI1.value),
            rho=rho,
            L_obs=None if L_obs is None else _matrix(L_obs, "controller.L_obs"),
            estimator_mode=sec.get("estimator_mode"),
        )
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], f"controller.{exc.field}") from None
    try:
        check_pairing(ss, ctl)
    except FbOptError as exc:
        raise ConfigError(str(exc), "controller") from None

    simulation = None
    sec = _section(data, "simulation", required=False)
    if sec is not None:
        dt = _number(sec.get("dt", 1e-3), "simulation.dt")
        T = _number(_get(sec, "simulation", "T"), "simulation.T")
        if dt <= 0:
            raise ConfigError("must be positive", "simulation.dt")
        if T < dt:
            raise ConfigError("must be at least dt", "simulation.T")
        entries = sec.get("disturbance", [{"t": 0.0, "w": [0.0] * ss.m}])
        try:
            schedule = DisturbanceSchedule([(e["t"], e["w"]) for e in entries])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc) or "entries need t and w", "simulation.disturbance") from None
        if schedule.m != ss.m:
            raise ConfigError(f"w must have length {ss.m}", "simulation.disturbance")
        xi0 = sec.get("xi0")
        if xi0 is not None:
            xi0 = _vector(xi0, "simulation.xi0")
            N = (3 if ctl.uses_observer else 2) * ss.n
            if xi0.size != N:
                raise ConfigError(f"must have length {N}", "simulation.xi0")
        simulation = SimulationSettings(dt, T, schedule, xi0)

    sweep = None
    sec = _section(data, "sweep", required=False)
    if sec is not None:
        parameter = _get(sec, "sweep", "parameter")
        if parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"must be one of {SWEEP_PARAMETERS}", "sweep.parameter")
        values = tuple(_number(v, "sweep.values") for v in _get(sec, "sweep", "values"))
        if not values or any(v <= 0 for v in values):
            raise ConfigError("must be a non-empty list of positive numbers", "sweep.values")
        L_ratio = sec.get("L_ratio")
        if L_ratio is not None:
            L_ratio = _number(L_ratio, "sweep.L_ratio")
            if L_ratio < 1:
                raise ConfigError("must be at least 1", "sweep.L_ratio")
        sweep = SweepSettings(parameter, values, L_ratio)

    sec = _section(data, "output", required=False) or {}
    precision = sec.get("precision", 12)
    if isinstance(precision, bool) or not isinstance(precision, int) or precision < 1:
        raise ConfigError("must be a positive integer", "output.precision")
    output = OutputSettings(sec.get("path"), precision)
    return ExperimentConfig(ss, cost, ctl, simulation, sweep, output)


def load_config(path):
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return from_dict(data)


def dumps_config(cfg):
    return tomli_w.dumps(cfg.to_dict())


def dump_config(cfg, path):
    Path(path).write_text(dumps_config(cfg), encoding="utf-8")
