"""Black-box models an eavesdropper can fit from captured (u, y) pairs.

Conventions: ``FirModel`` predicts ``y_t = sum_j taps[j] * h[j]`` where
``h[0]`` is the most recent input pushed.  ARX/ARMAX use

    y_t + a_1 y_{t-1} + ... + a_na y_{t-na}
        = b_0 u_{t-nk} + ... + b_{nb-1} u_{t-nk-nb+1} + e_t + c_1 e_{t-1} + ...

with ``theta = [a_1..a_na, b_0..b_{nb-1}, c_1..c_nc]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation, IdentificationError

log = logging.getLogger(__name__)

RIDGE = 1e-9
MAX_CONDITION = 1e13


@dataclass
class FirModel:
    taps: np.ndarray
    mu: float = 0.05
    input_history: np.ndarray = None
    tap_cap: float = 1e3
    mu_halvings: int = 0

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=float).copy()
        if self.taps.ndim != 1 or self.taps.size < 1:
            raise ContractViolation("FIR model needs at least one tap")
        if self.input_history is None:
            self.input_history = np.zeros(self.taps.size)
        if self.mu < 0:
            raise ContractViolation("mu must be non-negative")

    @classmethod
    def zeros(cls, T: int = 20, mu: float = 0.05) -> "FirModel":
        return cls(np.zeros(T), mu)

    @property
    def T(self) -> int:
        return self.taps.size

    def push(self, u: float) -> None:
        self.input_history = np.roll(self.input_history, 1)
        self.input_history[0] = u

    def predict(self) -> float:
        return float(self.taps @ self.input_history)


def fir_identify_step(model: FirModel, u_observed: float, y_observed: float) -> FirModel:
    """One LMS update; ``model`` is updated in place and returned."""
    model.push(u_observed)
    e = y_observed - model.predict()
    new_taps = model.taps + model.mu * e * model.input_history
    if not np.all(np.isfinite(new_taps)) or np.linalg.norm(new_taps) > model.tap_cap:
        model.mu *= 0.5
        model.mu_halvings += 1
        log.warning("LMS taps exceeded cap, step size halved to %g", model.mu)
        return model
    model.taps = new_taps
    return model


def fir_train(u, y, T: int = 20, mu: float = 0.05, passes: int = 1, lag: int = 1, center: bool = True,
              tap_cap: float = 1e3) -> tuple[FirModel, float, float]:
    """LMS fit of ``y_t`` on ``u_{t-lag}, u_{t-lag-1}, ...``.

    Returns ``(model, u_mean, y_mean)``; the means are zero when ``center``
    is false.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != y.shape:
        raise ContractViolation("u and y must have equal length")
    um = float(u.mean()) if center else 0.0
    ym = float(y.mean()) if center else 0.0
    model = FirModel(np.zeros(T), mu, tap_cap=tap_cap)
    for _ in range(passes):
        model.input_history = np.zeros(T)
        for t in range(lag, len(y)):
            fir_identify_step(model, u[t - lag] - um, y[t] - ym)
    model.input_history = np.zeros(T)
    return model, um, ym


@dataclass
class ArxModel:
    na: int
    nb: int
    nk: int
    theta: np.ndarray

    @property
    def a(self) -> np.ndarray:
        return self.theta[:self.na]

    @property
    def b(self) -> np.ndarray:
        return self.theta[self.na:self.na + self.nb]

    def is_stable(self) -> bool:
        if self.na == 0:
            return True
        return bool(np.all(np.abs(np.roots(np.concatenate(([1.0], self.a)))) < 1.0))

    def predict_one(self, y_past, u_past) -> float:
        """One-step prediction; ``y_past[i]`` is y_{t-1-i}, ``u_past[i]`` is u_{t-1-i}."""
        val = -float(np.dot(self.a, y_past[:self.na]))
        for j in range(self.nb):
            val += self.b[j] * u_past[self.nk - 1 + j]
        return val


@dataclass
class ArmaxModel(ArxModel):
    nc: int = 0
    iterations: int = 0
    fallback: bool = False

    @property
    def c(self) -> np.ndarray:
        return self.theta[self.na + self.nb:]


def _check_orders(na: int, nb: int, nk: int, nc: int = 0) -> None:
    if min(na, nb, nk, nc) < 0:
        raise ContractViolation("model orders must be non-negative")
    if na + nb + nc == 0:
        raise ContractViolation("model has no parameters")


def _regressors(u: np.ndarray, y: np.ndarray, na: int, nb: int, nk: int, start: int) -> np.ndarray:
    M = len(y)
    cols = [-y[start - i:M - i] for i in range(1, na + 1)]
    cols += [u[start - nk - j:M - nk - j] for j in range(nb)]
    return np.column_stack(cols) if cols else np.zeros((M - start, 0))


def _solve_normal(Phi: np.ndarray, target: np.ndarray) -> np.ndarray:
    G = Phi.T @ Phi
    if not np.any(G):
        raise IdentificationError("regressor matrix is identically zero (no excitation)")
    G = G + RIDGE * np.eye(G.shape[0])
    if np.linalg.cond(G) > MAX_CONDITION:
        raise IdentificationError("regressor matrix is rank deficient beyond ridge rescue")
    theta = np.linalg.solve(G, Phi.T @ target)
    if not np.all(np.isfinite(theta)):
        raise IdentificationError("least-squares solution is non-finite")
    return theta


def _start_index(na: int, nb: int, nk: int, nc: int = 0) -> int:
    return max(na, nb + nk - 1, nc, 1)


def arx_identify(u, y, na: int = 2, nb: int = 1, nk: int = 1) -> ArxModel:
    """Least-squares ARX fit through ridge-regularised normal equations."""
    _check_orders(na, nb, nk)
    u = np.asarray(u, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if u.shape != y.shape:
        raise ContractViolation("u and y must have equal length")
    if len(y) < 10 * (na + nb):
        raise IdentificationError(f"{len(y)} samples is below the minimum {10 * (na + nb)}")
    n0 = _start_index(na, nb, nk)
    theta = _solve_normal(_regressors(u, y, na, nb, nk, n0), y[n0:])
    return ArxModel(na, nb, nk, theta)


def armax_identify(u, y, na: int = 2, nb: int = 1, nc: int = 1, nk: int = 1,
                   tol: float = 1e-8, max_iter: int = 100) -> ArmaxModel:
    """Extended least squares: alternate between theta and residual estimates.

    Falls back to the ARX estimate (``fallback=True``) when the iteration
    does not settle, produces non-finite values or an unstable noise model.
    """
    _check_orders(na, nb, nk, nc)
    arx = arx_identify(u, y, na, nb, nk)
    if nc == 0:
        return ArmaxModel(na, nb, nk, arx.theta.copy(), nc=0)
    u = np.asarray(u, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    M = len(y)
    n0 = _start_index(na, nb, nk, nc)
    Phi = _regressors(u, y, na, nb, nk, n0)
    target = y[n0:]
    e = np.zeros(M)
    e[n0:] = target - Phi @ arx.theta
    theta = np.concatenate([arx.theta, np.zeros(nc)])
    for it in range(1, max_iter + 1):
        E = np.column_stack([e[n0 - i:M - i] for i in range(1, nc + 1)])
        full = np.hstack([Phi, E])
        G = full.T @ full + RIDGE * np.eye(full.shape[1])
        new = np.linalg.solve(G, full.T @ target)
        if not np.all(np.isfinite(new)):
            break
        c = new[na + nb:]
        if np.any(np.abs(np.roots(np.concatenate(([1.0], c)))) >= 1.0):
            break
        # filter residuals through the new noise model
        base = target - Phi @ new[:na + nb]
        e = np.zeros(M)
        for t in range(n0, M):
            e[t] = base[t - n0] - sum(c[i] * e[t - 1 - i] for i in range(nc))
        step = np.max(np.abs(new - theta))
        theta = new
        if step < tol:
            return ArmaxModel(na, nb, nk, theta, nc=nc, iterations=it)
    log.info("ARMAX extended least squares did not converge; using ARX estimate")
    return ArmaxModel(na, nb, nk, np.concatenate([arx.theta, np.zeros(nc)]), nc=nc,
                      iterations=max_iter, fallback=True)


def simulate_arx(model: ArxModel, u, y0=None, e=None) -> np.ndarray:
    """Free-run output of an ARX/ARMAX model driven by ``u`` (and innovations ``e``)."""
    u = np.asarray(u, dtype=float)
    N = len(u)
    y = np.zeros(N)
    e = np.zeros(N) if e is None else np.asarray(e, dtype=float)
    c = model.c if isinstance(model, ArmaxModel) else np.zeros(0)
    start = 0
    if y0 is not None:
        y0 = np.asarray(y0, dtype=float)
        y[:len(y0)] = y0
        start = len(y0)
    for t in range(start, N):
        val = e[t]
        for i in range(1, model.na + 1):
            if t - i >= 0:
                val -= model.a[i - 1] * y[t - i]
        for j in range(model.nb):
            if t - model.nk - j >= 0:
                val += model.b[j] * u[t - model.nk - j]
        for i in range(1, len(c) + 1):
            if t - i >= 0:
                val += c[i - 1] * e[t - i]
        y[t] = val
    return y
