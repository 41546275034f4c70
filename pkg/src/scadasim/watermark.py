"""Authentication watermark added on top of the nominal control command."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .rng import GaussianSource, split_seed


class WatermarkMode(str, enum.Enum):
    DISABLED = "disabled"
    STATIONARY = "stationary"
    NON_STATIONARY = "non_stationary"


@dataclass(frozen=True)
class WatermarkConfig:
    mode: WatermarkMode = WatermarkMode.STATIONARY
    base_covariance: np.ndarray = field(default_factory=lambda: np.array([[0.5**2]]))
    variance_scale_range: tuple[float, float] = (0.5, 2.0)
    switch_probability: float = 0.02
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", WatermarkMode(self.mode))
        cov = np.atleast_2d(np.asarray(self.base_covariance, dtype=float))
        if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, atol=1e-12):
            raise ContractViolation("base_covariance must be square and symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ContractViolation("base_covariance must be positive semidefinite")
        cov.setflags(write=False)
        object.__setattr__(self, "base_covariance", cov)
        lo, hi = self.variance_scale_range
        if not (lo > 0 and hi >= lo):
            raise ContractViolation("variance_scale_range must satisfy 0 < low <= high")
        if not 0.0 <= self.switch_probability <= 1.0:
            raise ContractViolation("switch_probability must lie in [0, 1]")

    @property
    def dim(self) -> int:
        return self.base_covariance.shape[0]


@dataclass
class WatermarkState:
    """Mutable generator state owned by the controller.

    Draws use a unit-covariance source and are shaped by the current
    covariance factor.  Switch decisions come from a separate stream, so
    every mode sharing a seed emits the same underlying unit sequence.
    """

    rng: GaussianSource
    current_covariance: np.ndarray
    switch_rng: GaussianSource = None
    scale: float = 1.0
    t: int = 0
    switches: list = field(default_factory=list)

    @classmethod
    def initial(cls, config: WatermarkConfig) -> "WatermarkState":
        return cls(rng=GaussianSource.standard(config.dim, config.seed),
                   current_covariance=config.base_covariance.copy(),
                   switch_rng=GaussianSource.standard(1, split_seed(config.seed, "switch")))


def _factor(cov: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(cov)
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def next_watermark(config: WatermarkConfig, state: WatermarkState) -> tuple[np.ndarray, WatermarkState]:
    """Draw the watermark for this tick and advance ``state`` in place."""
    if config.mode is WatermarkMode.DISABLED:
        state.t += 1
        return np.zeros(config.dim), state
    if config.mode is WatermarkMode.NON_STATIONARY:
        if state.switch_rng.uniform() < config.switch_probability:
            lo, hi = config.variance_scale_range
            state.scale = lo + (hi - lo) * state.switch_rng.uniform()
            state.current_covariance = state.scale * config.base_covariance
            state.switches.append(state.t)
    z = state.rng.draw()
    state.t += 1
    return _factor(state.current_covariance) @ z, state


def apply_watermark(u_star, delta_u) -> np.ndarray:
    u_star = np.atleast_1d(np.asarray(u_star, dtype=float))
    delta_u = np.atleast_1d(np.asarray(delta_u, dtype=float))
    if u_star.shape != delta_u.shape:
        raise ContractViolation(f"length mismatch: {u_star.shape} vs {delta_u.shape}")
    return u_star + delta_u


def calibrate_base_covariance(control_samples, power_fraction: float = 0.1) -> np.ndarray:
    """Covariance whose power is ``power_fraction`` of the sampled control variance."""
    u = np.asarray(control_samples, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[0] < 2:
        raise ContractViolation("need at least two control samples")
    return power_fraction * np.atleast_2d(np.cov(u, rowvar=False))
