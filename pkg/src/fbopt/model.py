"""LTI plant, convex costs and the structural checks the closed loop relies on."""

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from .exceptions import NotConvexError

SYMMETRY_TOL = 1e-10


def _as_matrix(value, name):
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    return arr


def _freeze(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Continuous-time plant ``x' = Ax + Bu``, ``y = Cx + Du``.

    ``n``, ``m`` and ``p`` default to the shapes of ``A``, ``B`` and ``C``.
    Passing them explicitly records a declaration that
    :func:`validate_state_space` checks against the matrices; construction
    itself never rejects inconsistent data.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: Optional[np.ndarray] = None
    n: Optional[int] = None
    m: Optional[int] = None
    p: Optional[int] = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        if self.D is None:
            D = np.zeros((C.shape[0], B.shape[1]))
        else:
            D = _as_matrix(self.D, "D")
        for name, arr in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, _freeze(arr))
        if self.n is None:
            object.__setattr__(self, "n", A.shape[0])
        if self.m is None:
            object.__setattr__(self, "m", B.shape[1])
        if self.p is None:
            object.__setattr__(self, "p", C.shape[0])


class ValidationReport(NamedTuple):
    ok: bool
    dims: tuple
    issues: tuple


def validate_state_space(ss):
    """Check dimension consistency and finiteness without raising."""
    n, m, p = ss.n, ss.m, ss.p
    issues = []
    expected = {"A": (n, n), "B": (n, m), "C": (p, n), "D": (p, m)}
    for name, shape in expected.items():
        got = getattr(ss, name).shape
        if got != shape:
            issues.append(f"dimension mismatch: {name} has shape {got}, expected {shape}")
    for name in "ABCD":
        if not np.all(np.isfinite(getattr(ss, name))):
            issues.append(f"non-finite entry in {name}")
    if min(n, m, p) < 1:
        issues.append("dimensions must be positive")
    return ValidationReport(not issues, (n, m, p), tuple(issues))


def observability_rank(ss):
    A, C = ss.A, ss.C
    blocks = [C]
    for _ in range(ss.n - 1):
        blocks.append(blocks[-1] @ A)
    return int(np.linalg.matrix_rank(np.vstack(blocks)))


def controllability_rank(ss):
    A, B = ss.A, ss.B
    blocks = [B]
    for _ in range(ss.n - 1):
        blocks.append(A @ blocks[-1])
    return int(np.linalg.matrix_rank(np.hstack(blocks)))


def hurwitz_margin(M):
    """Largest real part of the spectrum of ``M``; Hurwitz iff negative."""
    M = _as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return float(np.max(np.linalg.eigvals(M).real))


def steady_state_input(ss, x_star):
    """Least-squares input holding ``x_star`` at rest.

    Returns ``(u_star, residual)`` with ``residual = ||A x* + B u*||``. The
    steady state is reachable when
    ``residual <= 1e-8 * (1 + ||A x*||)``; see :func:`steady_state_reachable`.
    """
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    rhs = -ss.A @ x_star
    u_star = np.linalg.lstsq(ss.B, rhs, rcond=None)[0]
    residual = float(np.linalg.norm(ss.A @ x_star + ss.B @ u_star))
    return u_star, residual


def steady_state_reachable(ss, x_star, residual=None):
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    if residual is None:
        residual = steady_state_input(ss, x_star)[1]
    return residual <= 1e-8 * (1.0 + np.linalg.norm(ss.A @ x_star))


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """``f(x) = 0.5 x'Qx + c'x + v`` with ``Q`` symmetric positive definite.

    ``m_sc`` and ``L_f`` are the extreme eigenvalues of ``Q``, i.e. the
    strong-convexity modulus and the gradient Lipschitz constant.
    """

    Q: np.ndarray
    c: np.ndarray
    v: float = 0.0
    m_sc: float = field(init=False)
    L_f: float = field(init=False)

    def __post_init__(self):
        Q = _as_matrix(self.Q, "Q")
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if Q.shape[0] != Q.shape[1] or Q.shape[0] != c.size:
            raise ValueError(f"Q {Q.shape} and c ({c.size},) are inconsistent")
        if not np.all(np.isfinite(Q)) or not np.all(np.isfinite(c)):
            raise ValueError("cost data must be finite")
        if np.max(np.abs(Q - Q.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(Q))):
            raise NotConvexError("Q is not symmetric")
        Q = 0.5 * (Q + Q.T)
        object.__setattr__(self, "Q", _freeze(Q))
        object.__setattr__(self, "c", _freeze(c))
        object.__setattr__(self, "v", float(self.v))
        m_sc, L_f = sector_constants(self)
        object.__setattr__(self, "m_sc", m_sc)
        object.__setattr__(self, "L_f", L_f)

    @property
    def n(self):
        return self.c.size

    def __call__(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return 0.5 * x @ self.Q @ x + self.c @ x + self.v

    def gradient(self, x):
        return self.Q @ np.asarray(x, dtype=float).reshape(-1) + self.c

    def hessian(self, x=None):
        return self.Q


@dataclass(frozen=True, eq=False)
class SmoothCost:
    """A cost known only through its gradient, with declared sector constants.

    The declared ``m_sc``/``L_f`` are trusted; :func:`fbopt.iqc.sample_verify_iqc`
    can spot-check them. ``hessian`` is optional and only used by the
    proximal Newton solver (a finite-difference Jacobian is used otherwise).
    """

    gradient: Callable[[np.ndarray], np.ndarray]
    n: int
    m_sc: float
    L_f: float
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not 0 < self.m_sc <= self.L_f:
            raise NotConvexError(f"need 0 < m_sc <= L_f, got ({self.m_sc}, {self.L_f})")


class DisturbanceSchedule:
    """Piecewise-constant disturbance ``w(t)``.

    Built from ``(t_switch, w)`` pairs; the first switch must be at ``t = 0``
    and switch times must strictly increase.
    """

    def __init__(self, entries):
        entries = [(float(t), np.asarray(w, dtype=float).reshape(-1)) for t, w in entries]
        if not entries:
            raise ValueError("disturbance schedule needs at least one entry")
        times = np.array([t for t, _ in entries])
        if times[0] != 0.0:
            raise ValueError("first disturbance switch must be at t=0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("disturbance switch times must be strictly increasing")
        sizes = {w.size for _, w in entries}
        if len(sizes) != 1:
            raise ValueError("all disturbance vectors must have the same length")
        self._times = times
        self._values = tuple(_freeze(w) for _, w in entries)

    @classmethod
    def constant(cls, w):
        return cls([(0.0, w)])

    @property
    def times(self):
        return tuple(self._times)

    @property
    def values(self):
        return self._values

    @property
    def m(self):
        return self._values[0].size

    def __call__(self, t):
        idx = int(np.searchsorted(self._times, t, side="right")) - 1
        return self._values[max(idx, 0)]

    def __iter__(self):
        return iter(zip(self.times, self._values))

    def __len__(self):
        return len(self._values)

    def __repr__(self):
        body = ", ".join(f"({t:g}, {w.tolist()})" for t, w in self)
        return f"DisturbanceSchedule([{body}])"


def cost_gradient(cost, x):
    return np.asarray(cost.gradient(np.asarray(x, dtype=float).reshape(-1)), dtype=float)


def cost_minimizer(cost):
    """Unique minimizer; solves ``Qx = -c`` for quadratic costs."""
    if isinstance(cost, QuadraticCost):
        if np.linalg.cond(cost.Q) > 1e12:
            raise NotConvexError("Q is numerically singular")
        return scipy.linalg.solve(cost.Q, -cost.c, assume_a="pos")
    sol = scipy.optimize.root(cost.gradient, np.zeros(cost.n), tol=1e-13)
    if not sol.success:
        raise RuntimeError(f"gradient root solve failed: {sol.message}")
    return sol.x


def sector_constants(cost):
    """Return ``(m_sc, L_f)`` as the extreme eigenvalues of the Hessian.

    Accepts a :class:`QuadraticCost` or a bare symmetric matrix.
    """
    Q = cost.Q if isinstance(cost, QuadraticCost) else _as_matrix(cost, "Q")
    eig = scipy.linalg.eigvalsh(0.5 * (Q + Q.T))
    if eig[0] <= 0:
        raise NotConvexError(f"smallest eigenvalue {eig[0]:.3g} is not positive")
    return float(eig[0]), float(eig[-1])
