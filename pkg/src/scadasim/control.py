"""Discrete LTI plant and the LQG machinery around it.

The plant evolves as ``x' = A x + B u + w`` and is observed as
``y = C x + v``.  The controller uses an LQR gain and a steady-state Kalman
filter, both obtained from a fixed-point Riccati iteration.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DivergenceError, NumericOverflowError
from .rng import GaussianSource

DARE_STEP_TOL = 1e-12
DARE_RESIDUAL_TOL = 1e-9
DARE_MAX_ITER = 100_000


def _mat(value, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise ContractViolation(f"{name} must be a matrix")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} has non-finite entries")
    return arr


def _check_cov(M: np.ndarray, name: str, definite: bool = False) -> None:
    if M.shape[0] != M.shape[1]:
        raise ContractViolation(f"{name} must be square, got {M.shape}")
    if not np.allclose(M, M.T, atol=1e-9, rtol=0.0):
        raise ContractViolation(f"{name} must be symmetric")
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))
    floor = 0.0 if definite else -1e-9
    if definite and lam.min() <= floor:
        raise ContractViolation(f"{name} must be positive definite")
    if lam.min() < floor:
        raise ContractViolation(f"{name} must be positive semidefinite")


@dataclass(frozen=True)
class StateSpaceModel:
    """Plant matrices, noise covariances and LQG costs.

    Default values describe a small vehicle approaching an obstacle:
    state ``[distance_m, speed_m_s]``, one drive command, distance measured.
    They are stand-ins and every field can be overridden from a scenario file.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    W: np.ndarray
    U: np.ndarray
    tick_seconds: float = 0.1

    def __post_init__(self):
        for name in ("A", "B", "C", "Q", "R", "W", "U"):
            arr = _mat(getattr(self, name), name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n, m, p = self.n, self.m, self.p
        expected = {"A": (n, n), "B": (n, m), "C": (p, n), "Q": (n, n), "R": (p, p), "W": (n, n), "U": (m, m)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ContractViolation(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in ("Q", "R", "W"):
            _check_cov(getattr(self, name), name)
        _check_cov(self.U, "U", definite=True)
        if not self.tick_seconds > 0:
            raise ContractViolation("tick_seconds must be positive")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


def default_model(tick_seconds: float = 0.1, speed_pole: float = 0.6, drive_gain: float = 0.4) -> StateSpaceModel:
    return StateSpaceModel(
        A=[[1.0, -tick_seconds], [0.0, speed_pole]],
        B=[[0.0], [drive_gain]],
        C=[[1.0, 0.0]],
        Q=np.diag([1e-4, 1e-4]),
        R=[[2.5e-3]],
        W=np.eye(2),
        U=[[1.0]],
        tick_seconds=tick_seconds,
    )


@dataclass(frozen=True)
class PlantState:
    x: np.ndarray
    t: int = 0

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise NumericOverflowError(f"plant state became non-finite at tick {self.t}")
        if self.t < 0:
            raise ContractViolation("tick must be non-negative")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)


def _vec(value, length: int, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float)).reshape(-1)
    if v.shape[0] != length:
        raise ContractViolation(f"{name} has length {v.shape[0]}, expected {length}")
    return v


def step_plant(model: StateSpaceModel, state: PlantState, u, noise: GaussianSource) -> PlantState:
    """Advance the plant one tick: ``x' = A x + B u + w``."""
    u = _vec(u, model.m, "u")
    x = _vec(state.x, model.n, "x")
    w = _vec(noise.draw(), model.n, "process noise")
    with np.errstate(over="ignore", invalid="ignore"):
        x_next = model.A @ x + model.B @ u + w
    return PlantState(x_next, state.t + 1)


def measure(model: StateSpaceModel, state: PlantState, noise: GaussianSource) -> np.ndarray:
    x = _vec(state.x, model.n, "x")
    v = _vec(noise.draw(), model.p, "measurement noise")
    with np.errstate(over="ignore", invalid="ignore"):
        y = model.C @ x + v
    if not np.all(np.isfinite(y)):
        raise NumericOverflowError("measurement became non-finite")
    return y


def dare_residual(A, B, Q, R, P) -> float:
    A, B, Q, R, P = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R, P))
    BtPA = B.T @ P @ A
    rhs = A.T @ P @ A - BtPA.T @ np.linalg.solve(B.T @ P @ B + R, BtPA) + Q
    return float(np.linalg.norm(P - rhs))


def solve_dare(A, B, Q, R, max_iter: int = DARE_MAX_ITER, tol: float = DARE_STEP_TOL) -> np.ndarray:
    """Solve ``P = A'PA - A'PB (B'PB + R)^-1 B'PA + Q`` by Riccati iteration.

    Starts from ``P0 = Q`` and stops once successive iterates differ by less
    than ``tol`` in Frobenius norm.  Raises DivergenceError at the cap or if
    the accepted iterate fails the residual check.
    """
    A, B, Q, R = (_mat(M, name) for M, name in ((A, "A"), (B, "B"), (Q, "Q"), (R, "R")))
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or Q.shape != (n, n) or R.shape != (B.shape[1], B.shape[1]):
        raise ContractViolation("inconsistent DARE dimensions")
    _check_cov(Q, "Q")
    _check_cov(R, "R", definite=True)
    P = Q.copy()
    for _ in range(max_iter):
        BtPA = B.T @ P @ A
        P_next = A.T @ P @ A - BtPA.T @ np.linalg.solve(B.T @ P @ B + R, BtPA) + Q
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise DivergenceError("Riccati iteration overflowed")
        step = np.linalg.norm(P_next - P)
        P = P_next
        if step < tol:
            break
    else:
        raise DivergenceError(f"Riccati iteration did not converge in {max_iter} steps")
    res = dare_residual(A, B, Q, R, P)
    if res > DARE_RESIDUAL_TOL * (1.0 + np.linalg.norm(P)):
        raise DivergenceError(f"Riccati residual {res:.3e} too large")
    return P


def lqr_gain(A, B, W, U) -> np.ndarray:
    """State-feedback gain for the law ``u* = -L x``."""
    A, B, U = _mat(A, "A"), _mat(B, "B"), _mat(U, "U")
    P = solve_dare(A, B, W, U)
    return np.linalg.solve(B.T @ P @ B + U, B.T @ P @ A)


def steady_kalman_gain(A, C, Q, R) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state Kalman gain ``K`` and innovation covariance ``Sigma``."""
    A, C = _mat(A, "A"), _mat(C, "C")
    R = _mat(R, "R")
    P = solve_dare(A.T, C.T, Q, R)
    Sigma = C @ P @ C.T + R
    Sigma = 0.5 * (Sigma + Sigma.T)
    K = np.linalg.solve(Sigma, C @ P).T
    if not np.all(np.isfinite(K)):
        raise NumericOverflowError("Kalman gain is non-finite")
    return K, Sigma


def spectral_radius(M, iters: int = 2000, seed: int = 1) -> float:
    """Estimate the spectral radius from the growth rate of ``M^k v``.

    Uses the mean log growth over the last half of the iterations so complex
    eigenvalue pairs (where plain power iteration oscillates) are handled.
    """
    M = _mat(M, "M")
    v = GaussianSource.standard(M.shape[0], seed).draw()
    v /= np.linalg.norm(v)
    logs = []
    for _ in range(iters):
        v = M @ v
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        logs.append(np.log(nv))
        v /= nv
    return float(np.exp(np.mean(logs[iters // 2:])))


def kalman_predict(model: StateSpaceModel, x_hat, u_applied) -> np.ndarray:
    return model.A @ _vec(x_hat, model.n, "x_hat") + model.B @ _vec(u_applied, model.m, "u")


def kalman_step(x_hat, K, model: StateSpaceModel, u_applied, y_observed):
    """One predict/correct cycle; returns ``(x_hat', y_hat, residual)``."""
    x_bar = kalman_predict(model, x_hat, u_applied)
    y = _vec(y_observed, model.p, "y")
    y_hat = model.C @ x_bar
    r = y - y_hat
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (model.n, model.p):
        raise ContractViolation(f"K has shape {K.shape}, expected {(model.n, model.p)}")
    return x_bar + K @ r, y_hat, r


@dataclass
class LqgDesign:
    """Gains derived once per model and shared by every round."""

    model: StateSpaceModel
    L: np.ndarray = field(init=False)
    K: np.ndarray = field(init=False)
    Sigma: np.ndarray = field(init=False)

    def __post_init__(self):
        m = self.model
        self.L = lqr_gain(m.A, m.B, m.W, m.U)
        self.K, self.Sigma = steady_kalman_gain(m.A, m.C, m.Q, m.R)
