"""Command-line entry point: ``fbopt {certify,simulate,sweep,verify-iqc}``.

Exit codes: 0 ok, 1 config error, 2 infeasible, 3 divergence, 4 IQC violation.
"""

import argparse
import csv
import io
import logging
import sys
import time

import numpy as np

from .certify import max_alpha, optimizer_iqc
from .closed_loop import simulate
from .config import load_config
from .controller import Optimizer, optimizer_eval
from .exceptions import ConfigError, DivergenceError, FbOptError, SolverFailure
from .iqc import sample_verify_iqc
from .model import QuadraticCost, cost_minimizer

log = logging.getLogger("fbopt")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DIVERGED, EXIT_IQC = 0, 1, 2, 3, 4

# indirection so tests can substitute a corrupted IQC
_build_iqc = optimizer_iqc


def _fmt(value, precision):
    if value is None:
        return "nan"
    return format(float(value), f".{precision}g")


def _write_csv(header, rows, out):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _optimizers(choice, cfg):
    if choice is None:
        return [cfg.controller.optimizer]
    if choice == "both":
        return [Optimizer.PHI1, Optimizer.PHI2]
    return [Optimizer(choice)]


def _controller_for(ctl, optimizer):
    if optimizer is Optimizer.PHI2 and ctl.rho is None:
        raise ConfigError("must be set to run phi2", "controller.rho")
    return ctl.replace(optimizer=optimizer)


def _search(cfg, ctl, cost, args):
    kwargs = {} if args.alpha_tol is None else {"rel_tol": args.alpha_tol}
    return max_alpha(cfg.plant, ctl, cost, **kwargs)


def cmd_certify(cfg, args):
    p = cfg.output.precision
    rows = []
    status = EXIT_OK
    for opt in _optimizers(args.optimizer, cfg):
        ctl = _controller_for(cfg.controller, opt)
        start = time.perf_counter()
        res = _search(cfg, ctl, cfg.cost, args)
        wall = time.perf_counter() - start
        cert = res.certificate
        if cert is None:
            status = EXIT_INFEASIBLE
            rows.append([opt.value, _fmt(0.0, p), "nan", "nan", "nan", _fmt(wall, 6)])
            print(f"{opt.value}: LMI infeasible at the alpha floor", file=sys.stderr)
            continue
        rows.append([opt.value, _fmt(res.alpha_max, p), _fmt(cert.sigma, p),
                     _fmt(cert.p_min_eig, p), _fmt(cert.lmi_max_eig, p), _fmt(wall, 6)])
        print(f"{opt.value}: alpha_max={_fmt(res.alpha_max, p)} sigma={_fmt(cert.sigma, p)} "
              f"p_min_eig={_fmt(cert.p_min_eig, p)} lmi_max_eig={_fmt(cert.lmi_max_eig, p)}",
              file=sys.stderr)
    header = ["optimizer", "alpha_max", "sigma", "p_min_eig", "lmi_max_eig", "wall_time"]
    _write_csv(header, rows, args.out or cfg.output.path)
    return status


def _trajectory_rows(traj, p):
    blocks = [traj.times[:, None], traj.x]
    if traj.xhat is not None:
        blocks.append(traj.xhat)
    blocks += [traj.eI, traj.e, traj.r, traj.w]
    table = np.hstack(blocks)
    return [[_fmt(v, p) for v in row] for row in table]


def _trajectory_header(n, m, observer):
    cols = ["t"] + [f"x_{i + 1}" for i in range(n)]
    if observer:
        cols += [f"xhat_{i + 1}" for i in range(n)]
    cols += [f"eI_{i + 1}" for i in range(n)]
    cols += [f"e_{i + 1}" for i in range(n)]
    cols += [f"r_{j + 1}" for j in range(m)]
    cols += [f"w_{j + 1}" for j in range(m)]
    return cols


def cmd_simulate(cfg, args):
    sim = cfg.simulation
    if sim is None:
        raise ConfigError("missing section", "simulation")
    ctl = cfg.controller
    if args.optimizer not in (None, "both"):
        ctl = _controller_for(ctl, Optimizer(args.optimizer))
    dt = args.dt or sim.dt
    header = _trajectory_header(cfg.plant.n, cfg.plant.m, ctl.uses_observer)
    out = args.out or cfg.output.path
    try:
        traj = simulate(cfg.plant, ctl, cfg.cost, sim.schedule, sim.xi0, dt=dt, T=sim.T)
    except DivergenceError as exc:
        if exc.trajectory is not None:
            _write_csv(header, _trajectory_rows(exc.trajectory, cfg.output.precision), out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    _write_csv(header, _trajectory_rows(traj, cfg.output.precision), out)
    x_end = ", ".join(_fmt(v, 8) for v in traj.x[-1])
    print(f"x(T={traj.times[-1]:g}) = [{x_end}]", file=sys.stderr)
    return EXIT_OK


def _swept_cost(cost, parameter, value, L_ratio):
    if parameter == "q":
        return QuadraticCost(value * np.eye(cost.n), cost.c, cost.v)
    if parameter == "m_sc":
        eig, vec = np.linalg.eigh(cost.Q)
        top = value * L_ratio if L_ratio is not None else cost.L_f
        if top < value:
            raise ConfigError(f"m_sc={value} exceeds the Lipschitz constant {top}", "sweep.values")
        span = eig[-1] - eig[0]
        frac = (eig - eig[0]) / span if span > 0 else np.linspace(0.0, 1.0, eig.size)
        new = value + frac * (top - value)
        return QuadraticCost(vec @ np.diag(new) @ vec.T, cost.c, cost.v)
    return cost


def cmd_sweep(cfg, args):
    sweep = cfg.sweep
    if sweep is None:
        raise ConfigError("missing section", "sweep")
    p = cfg.output.precision
    wanted = set(_optimizers(args.optimizer or "both", cfg))
    rows = []
    failures = 0
    cache = {}
    for value in sweep.values:
        ctl = cfg.controller
        if sweep.parameter == "rho":
            ctl = ctl.replace(rho=value)
        cost = _swept_cost(cfg.cost, sweep.parameter, value, sweep.L_ratio)
        row = [_fmt(value, p)]
        for opt in (Optimizer.PHI1, Optimizer.PHI2):
            if opt not in wanted:
                row.append("nan")
                continue
            key = (opt, cost.m_sc, cost.L_f, ctl.rho if opt is Optimizer.PHI2 else None)
            if key not in cache:
                try:
                    cache[key] = _search(cfg, _controller_for(ctl, opt), cost, args).alpha_max
                except SolverFailure as exc:
                    log.warning("%s at %s=%g: %s", opt.value, sweep.parameter, value, exc)
                    failures += 1
                    cache[key] = None
            row.append(_fmt(cache[key], p))
        rows.append(row)
    _write_csv([sweep.parameter, "alpha_max_phi1", "alpha_max_phi2"], rows,
               args.out or cfg.output.path)
    if failures:
        print(f"warning: {failures} sweep point(s) hit solver failures", file=sys.stderr)
    return EXIT_OK


def cmd_verify_iqc(cfg, args):
    ctl = cfg.controller
    if args.optimizer not in (None, "both"):
        ctl = _controller_for(ctl, Optimizer(args.optimizer))
    cost = cfg.cost
    iqc = _build_iqc(cost, ctl)
    report = sample_verify_iqc(iqc, lambda z: optimizer_eval(cost, ctl, z),
                               ref_in=cost_minimizer(cost), samples=args.samples,
                               seed=args.seed)
    verdict = "pass" if report.passed else "FAIL"
    print(f"{ctl.optimizer.value}: min quadratic form {report.min_value:.6g} "
          f"over {report.samples} samples ({verdict})")
    return EXIT_OK if report.passed else EXIT_IQC


COMMANDS = {
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "verify-iqc": cmd_verify_iqc,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="fbopt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment TOML file")
        sp.add_argument("--out", help="CSV destination (default: config output.path or stdout)")
        sp.add_argument("--dt", type=float, help="simulation step override")
        sp.add_argument("--alpha-tol", type=float, help="relative bisection tolerance on alpha")
        sp.add_argument("--seed", type=int, default=0, help="sampling seed for verify-iqc")
        sp.add_argument("--samples", type=int, default=10_000, help=argparse.SUPPRESS)
        sp.add_argument("--optimizer", choices=["phi1", "phi2", "both"])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FbOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
