"""Exponential-stability certificates from the IQC/LMI condition.

For a fixed rate ``alpha`` the condition

    [[Ahat'P + P Ahat + alpha P, P Bhat], [Bhat'P, 0]]
        + sigma [[Chat', 0], [Dhat', I]] Q [[Chat, Dhat], [0, I]]  <=  0

is jointly homogeneous in ``(P, sigma)``, so ``P > 0`` can be normalized to
``P >= I``. Feasibility is decided by minimizing the largest eigenvalue
``t`` of the left-hand side; every accepted solution is re-checked with a
LAPACK eigensolver that is independent of the SDP backend.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import cvxpy as cp
import numpy as np
import scipy.linalg

from .closed_loop import augment
from .controller import Optimizer
from .exceptions import LmiInfeasible, SolverFailure
from .iqc import phi1_iqc, phi2_iqc
from .model import QuadraticCost, _freeze, cost_minimizer

log = logging.getLogger(__name__)

LMI_TOL = 1e-7
P_TOL = 1e-6
SIGMA_TOL = 1e-12
# lower bound on t; keeps (P, sigma) bounded so solutions stay well scaled
MARGIN_FLOOR = -1e-3
SOLVERS = ("CLARABEL", "CVXOPT", "SCS")


@dataclass(frozen=True, eq=False)
class LmiProblem:
    Ahat: np.ndarray
    Bhat: np.ndarray
    Chat: np.ndarray
    Qiqc: np.ndarray
    alpha: float
    Dhat: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.Ahat, dtype=float))
        B = np.atleast_2d(np.asarray(self.Bhat, dtype=float))
        C = np.atleast_2d(np.asarray(self.Chat, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Qiqc, dtype=float))
        N, k = B.shape
        D = np.zeros((k, k)) if self.Dhat is None else np.atleast_2d(np.asarray(self.Dhat, float))
        if A.shape != (N, N) or C.shape != (k, N) or D.shape != (k, k) or Q.shape != (2 * k, 2 * k):
            raise ValueError(
                f"inconsistent LMI data: Ahat {A.shape}, Bhat {B.shape}, Chat {C.shape}, "
                f"Dhat {D.shape}, Qiqc {Q.shape}")
        if np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
            raise ValueError("Qiqc is not symmetric")
        for name, arr in (("Ahat", A), ("Bhat", B), ("Chat", C), ("Dhat", D),
                          ("Qiqc", 0.5 * (Q + Q.T))):
            object.__setattr__(self, name, _freeze(arr))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def N(self):
        return self.Ahat.shape[0]

    @property
    def k(self):
        return self.Bhat.shape[1]

    def iqc_block(self):
        """``W' Q W`` with ``W = [[Chat, Dhat], [0, I]]``."""
        k = self.k
        W = np.block([[self.Chat, self.Dhat], [np.zeros((k, self.N)), np.eye(k)]])
        return W.T @ self.Qiqc @ W

    def with_alpha(self, alpha):
        return LmiProblem(self.Ahat, self.Bhat, self.Chat, self.Qiqc, alpha, self.Dhat)


@dataclass(frozen=True, eq=False)
class StabilityCertificate:
    P: np.ndarray
    sigma: float
    alpha: float
    lmi_max_eig: float
    p_min_eig: float


class CertificateCheck(NamedTuple):
    ok: bool
    lmi_max_eig: float
    p_min_eig: float
    sigma: float


def assemble_lmi(prob, P, sigma):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    A, B = prob.Ahat, prob.Bhat
    k = prob.k
    lyap = np.block([[A.T @ P + P @ A + prob.alpha * P, P @ B],
                     [B.T @ P, np.zeros((k, k))]])
    M = lyap + float(sigma) * prob.iqc_block()
    return 0.5 * (M + M.T)


def verify_certificate(prob, cert):
    """Recheck a certificate from scratch; see :data:`LMI_TOL` and :data:`P_TOL`."""
    P = np.atleast_2d(np.asarray(cert.P, dtype=float))
    lmi_max = float(scipy.linalg.eigvalsh(assemble_lmi(prob, P, cert.sigma))[-1])
    p_min = float(scipy.linalg.eigvalsh(0.5 * (P + P.T))[0])
    ok = lmi_max <= LMI_TOL and p_min >= 1 - P_TOL and cert.sigma >= -SIGMA_TOL
    return CertificateCheck(bool(ok), lmi_max, p_min, float(cert.sigma))


class _LmiSolver:
    """cvxpy model of the feasibility SDP, parametrized by ``alpha``."""

    def __init__(self, prob, solvers=SOLVERS):
        self.prob = prob
        self.solvers = solvers
        N, k = prob.N, prob.k
        self.P = cp.Variable((N, N), symmetric=True)
        self.sigma = cp.Variable(nonneg=True)
        self.t = cp.Variable()
        self.alpha = cp.Parameter(nonneg=True)
        A, B = prob.Ahat, prob.Bhat
        P = self.P
        lyap = cp.bmat([[A.T @ P + P @ A + self.alpha * P, P @ B],
                        [B.T @ P, np.zeros((k, k))]])
        lhs = lyap + self.sigma * prob.iqc_block()
        lhs = 0.5 * (lhs + lhs.T)
        constraints = [lhs << self.t * np.eye(N + k), P >> np.eye(N), self.t >= MARGIN_FLOOR]
        self.problem = cp.Problem(cp.Minimize(self.t), constraints)

    def solve(self, alpha):
        prob = self.prob.with_alpha(alpha)
        self.alpha.value = float(alpha)
        best_margin = np.inf
        attempted = False
        for name in self.solvers:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    self.problem.solve(solver=name)
            except (cp.SolverError, ArithmeticError, ValueError) as exc:
                log.debug("solver %s failed at alpha=%g: %s", name, alpha, exc)
                continue
            if self.P.value is None or self.sigma.value is None:
                log.debug("solver %s returned status %s", name, self.problem.status)
                continue
            attempted = True
            P = 0.5 * (self.P.value + self.P.value.T)
            sigma = max(float(self.sigma.value), 0.0)
            check = verify_certificate(prob, StabilityCertificate(P, sigma, alpha, np.nan, np.nan))
            best_margin = min(best_margin, check.lmi_max_eig)
            if check.ok:
                return StabilityCertificate(_freeze(P), sigma, float(alpha),
                                            check.lmi_max_eig, check.p_min_eig)
            if self.t.value is not None and self.t.value > 10 * LMI_TOL:
                # clear verdict; other backends would only repeat it
                break
        if not attempted:
            raise SolverFailure(f"no SDP backend produced a solution at alpha={alpha:g}")
        raise LmiInfeasible(f"LMI infeasible at alpha={alpha:g} (margin {best_margin:.3g})",
                            best_margin)


def sdp_feasible(prob, solvers=SOLVERS):
    """Return a verified :class:`StabilityCertificate` for ``prob.alpha``.

    Raises :class:`LmiInfeasible` (with the best largest-eigenvalue margin
    seen) or :class:`SolverFailure` when no backend converged.
    """
    if not prob.alpha > 0:
        raise ValueError(f"alpha must be positive, got {prob.alpha}")
    return _LmiSolver(prob, solvers).solve(prob.alpha)


def optimizer_iqc(cost, cfg):
    """IQC of the configured optimizer block, anchored at the minimizer when known."""
    anchor = cost_minimizer(cost) if isinstance(cost, QuadraticCost) else None
    zero = None if anchor is None else np.zeros_like(anchor)
    if cfg.optimizer is Optimizer.PHI1:
        return phi1_iqc(cost.m_sc, cost.L_f, cost.n, anchor, zero)
    return phi2_iqc(cost.m_sc, cost.L_f, cfg.rho, cost.n, anchor, zero)


def lmi_problem(ss, cfg, cost, alpha=1.0):
    aug = augment(ss, cfg)
    iqc = optimizer_iqc(cost, cfg)
    return LmiProblem(aug.Ahat, aug.Bhat_e, aug.Chat, iqc.Qmat, alpha)


class TracePoint(NamedTuple):
    alpha: float
    feasible: bool
    margin: float


class AlphaSearch(NamedTuple):
    alpha_max: float
    certificate: Optional[StabilityCertificate]
    trace: tuple


def max_alpha(ss, cfg, cost, alpha_start=1e-3, alpha_cap=1e3, rel_tol=1e-3, alpha_floor=1e-6,
              solvers=SOLVERS):
    """Largest certified rate by line search over ``alpha``.

    Doubles from ``alpha_start`` while feasible (never beyond ``alpha_cap``),
    then bisects to relative width ``rel_tol``. If ``alpha_start`` fails the
    search drops to ``alpha_floor``; failure there gives ``alpha_max = 0``
    and no certificate. :class:`SolverFailure` propagates.
    """
    prob = lmi_problem(ss, cfg, cost)
    solver = _LmiSolver(prob, solvers)
    trace = []

    def query(alpha):
        try:
            cert = solver.solve(alpha)
        except LmiInfeasible as exc:
            trace.append(TracePoint(alpha, False, exc.margin))
            return None
        trace.append(TracePoint(alpha, True, cert.lmi_max_eig))
        return cert

    best = query(alpha_start)
    if best is not None:
        lo, hi = alpha_start, None
        while 2 * lo <= alpha_cap:
            cert = query(2 * lo)
            if cert is None:
                hi = 2 * lo
                break
            lo, best = 2 * lo, cert
        if hi is None:
            return AlphaSearch(lo, best, tuple(trace))
    else:
        best = query(alpha_floor)
        if best is None:
            return AlphaSearch(0.0, None, tuple(trace))
        lo, hi = alpha_floor, alpha_start

    while (hi - lo) > rel_tol * lo:
        mid = np.sqrt(lo * hi) if hi > 2 * lo else 0.5 * (lo + hi)
        cert = query(mid)
        if cert is None:
            hi = mid
        else:
            lo, best = mid, cert
    return AlphaSearch(float(lo), best, tuple(trace))
