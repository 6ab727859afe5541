"""Pointwise integral quadratic constraints for optimizer nonlinearities.

A map ``phi`` satisfies the pointwise IQC ``(Q, p_ref, phi(p_ref))`` when

    [p - p_ref; phi(p) - phi(p_ref)]' Q [p - p_ref; phi(p) - phi(p_ref)] >= 0

for every ``p``. All matrices here are reference independent; the reference
pair is carried along so a constraint always names the point it is anchored to.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import _freeze


@dataclass(frozen=True, eq=False)
class PointwiseIqc:
    Qmat: np.ndarray
    ref_in: Optional[np.ndarray] = None
    ref_out: Optional[np.ndarray] = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Qmat, dtype=float))
        if Q.shape[0] != Q.shape[1] or Q.shape[0] % 2:
            raise ValueError(f"IQC matrix must be 2n x 2n, got {Q.shape}")
        scale = max(1.0, float(np.max(np.abs(Q))))
        if np.max(np.abs(Q - Q.T)) > 1e-12 * scale:
            raise ValueError("IQC matrix is not symmetric")
        object.__setattr__(self, "Qmat", _freeze(0.5 * (Q + Q.T)))
        n = Q.shape[0] // 2
        for name in ("ref_in", "ref_out"):
            ref = getattr(self, name)
            ref = np.zeros(n) if ref is None else np.asarray(ref, dtype=float).reshape(-1)
            if ref.size != n:
                raise ValueError(f"{name} has length {ref.size}, expected {n}")
            object.__setattr__(self, name, _freeze(ref))

    @property
    def dim(self):
        return self.Qmat.shape[0] // 2

    def form(self, dp, dq):
        """Quadratic form on stacked deviations; vectorized over leading axes."""
        v = np.concatenate([np.asarray(dp, float), np.asarray(dq, float)], axis=-1)
        return np.einsum("...i,ij,...j->...", v, self.Qmat, v)


def _congruence(left2x2, Q, right2x2, n):
    L = np.kron(np.asarray(left2x2, dtype=float), np.eye(n))
    R = np.kron(np.asarray(right2x2, dtype=float), np.eye(n))
    M = L @ Q @ R
    return 0.5 * (M + M.T)


def _check_sector(m_sc, L_f):
    if m_sc <= 0:
        raise ValueError(f"strong convexity constant must be positive, got {m_sc}")
    if L_f < m_sc:
        raise ValueError(f"Lipschitz constant {L_f} is below strong convexity constant {m_sc}")


def _check_rho(rho):
    if not rho > 0:
        raise ValueError(f"proximal parameter rho must be positive, got {rho}")


def gradient_iqc(m_sc, L_f, n, ref_in=None, ref_out=None):
    """IQC of the gradient of an ``m_sc``-strongly convex, ``L_f``-smooth function."""
    _check_sector(m_sc, L_f)
    core = np.array([[-2.0 * m_sc * L_f, L_f + m_sc], [L_f + m_sc, -2.0]])
    return PointwiseIqc(np.kron(core, np.eye(n)), ref_in, ref_out)


def affine_compose(base, S0, S1, S2):
    """IQC for ``psi(p) = S2 p + S1 phi(S0 p)`` given the IQC of ``phi``."""
    n = base.dim
    S0, S1, S2 = (np.atleast_2d(np.asarray(S, dtype=float)) for S in (S0, S1, S2))
    for name, S in (("S0", S0), ("S1", S1), ("S2", S2)):
        if S.shape != (n, n):
            raise ValueError(f"{name} must be {n}x{n}, got {S.shape}")
    if np.linalg.cond(S1) > 1e12:
        raise ValueError("S1 must be invertible")
    S1inv = np.linalg.inv(S1)
    M = np.block([[S0, np.zeros((n, n))], [-S1inv @ S2, S1inv]])
    Qpsi = M.T @ base.Qmat @ M
    # psi is anchored where S0 p_ref hits phi's anchor
    ref_in = np.linalg.lstsq(S0, base.ref_in, rcond=None)[0]
    ref_out = S2 @ ref_in + S1 @ base.ref_out
    return PointwiseIqc(0.5 * (Qpsi + Qpsi.T), ref_in, ref_out)


def prox_iqc(m_sc, L_f, rho, n, ref_in=None, ref_out=None):
    """IQC of the proximal map ``argmin_v f(v) + |v - p|^2 / (2 rho)``."""
    _check_rho(rho)
    Qf = gradient_iqc(m_sc, L_f, n).Qmat
    Q = _congruence([[0.0, 1.0 / rho], [1.0, -1.0 / rho]], Qf,
                    [[0.0, 1.0], [1.0 / rho, -1.0 / rho]], n)
    return PointwiseIqc(Q, ref_in, ref_out)


def phi1_iqc(m_sc, L_f, n, ref_in=None, ref_out=None):
    """IQC of the negative gradient ``-grad f``."""
    Qf = gradient_iqc(m_sc, L_f, n).Qmat
    flip = [[1.0, 0.0], [0.0, -1.0]]
    return PointwiseIqc(_congruence(flip, Qf, flip, n), ref_in, ref_out)


def phi2_iqc(m_sc, L_f, rho, n, ref_in=None, ref_out=None):
    """IQC of the proximal tracking error ``prox(p) - p``."""
    Qprox = prox_iqc(m_sc, L_f, rho, n).Qmat
    Q = _congruence([[1.0, 1.0], [0.0, 1.0]], Qprox, [[1.0, 0.0], [1.0, 1.0]], n)
    return PointwiseIqc(Q, ref_in, ref_out)


class IqcSampleReport(tuple):
    """``(min_value, passed)`` with extra diagnostics as attributes."""

    def __new__(cls, min_value, passed, worst_ratio, samples):
        self = super().__new__(cls, (min_value, passed))
        self.min_value = min_value
        self.passed = passed
        self.worst_ratio = worst_ratio
        self.samples = samples
        return self


def sample_verify_iqc(iqc, phi, ref_in=None, samples=10_000, seed=0,
                      radii=(1e-2, 1.0, 1e2), tol=1e-8):
    """Spot-check the IQC inequality on seeded Gaussian samples.

    Samples are split evenly across ``radii``; each draws
    ``p = ref_in + r * g`` with ``g`` standard normal. With ``ref_in=None``
    the reference point is drawn afresh for every sample at the same radius,
    so arbitrary pairs are tested. A sample passes when its form value is at
    least ``-tol * ||Q||_2 * |v|^2``, ``v`` being the stacked deviation.

    Returns ``(min_value, passed)``.
    """
    rng = np.random.default_rng(seed)
    n = iqc.dim
    qnorm = max(np.linalg.norm(iqc.Qmat, 2), 1e-300)
    counts = np.full(len(radii), samples // len(radii))
    counts[: samples % len(radii)] += 1
    min_value = np.inf
    worst = np.inf
    for r, count in zip(radii, counts):
        for _ in range(count):
            if ref_in is None:
                p_ref = r * rng.standard_normal(n)
            else:
                p_ref = np.asarray(ref_in, dtype=float).reshape(-1)
            p = p_ref + r * rng.standard_normal(n)
            dp = p - p_ref
            dq = np.asarray(phi(p), dtype=float) - np.asarray(phi(p_ref), dtype=float)
            value = float(iqc.form(dp, dq))
            scale = qnorm * (dp @ dp + dq @ dq)
            min_value = min(min_value, value)
            if scale > 0:
                worst = min(worst, value / scale)
            elif value < 0:
                worst = -np.inf
    if not np.isfinite(min_value):
        min_value = 0.0
    passed = bool(worst >= -tol)
    return IqcSampleReport(min_value, passed, worst, int(counts.sum()))
