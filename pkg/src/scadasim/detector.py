"""Windowed chi-square residual detector with the risk/alert counter.

``g_t`` is the sum of ``r' Sigma^-1 r`` over the last ``gwindow`` residuals.
Each tick the counter logic runs::

    if g_t >= threshold:
        risk += 1
        if risk > window:
            alert += 1
    else:
        risk = 0
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractViolation, InsufficientDataError


@dataclass(frozen=True)
class DetectorConfig:
    threshold: float = 1.0
    window: int = 5
    gwindow: int = 5

    def __post_init__(self):
        if not self.threshold > 0:
            raise ContractViolation("threshold must be positive")
        if self.window < 1 or self.gwindow < 1:
            raise ContractViolation("window and gwindow must be >= 1")


@dataclass
class DetectorState:
    sigma_inverse: np.ndarray
    gwindow: int = 5
    residual_ring: deque = field(default_factory=deque)
    terms: deque = field(default_factory=deque)
    g_t: float = 0.0
    risk: int = 0
    alert: int = 0

    @classmethod
    def from_sigma(cls, Sigma, gwindow: int) -> "DetectorState":
        Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
        return cls(sigma_inverse=np.linalg.inv(Sigma), gwindow=gwindow)

    def recompute(self) -> float:
        """g_t summed from scratch over the ring (used to audit the running sum)."""
        return float(sum(r @ self.sigma_inverse @ r for r in self.residual_ring))


def gt_update(state: DetectorState, r) -> tuple[float, DetectorState]:
    r = np.atleast_1d(np.asarray(r, dtype=float)).reshape(-1)
    if r.shape[0] != state.sigma_inverse.shape[0]:
        raise ContractViolation(f"residual length {r.shape[0]} does not match Sigma")
    term = float(r @ state.sigma_inverse @ r)
    state.residual_ring.append(r)
    state.terms.append(term)
    if len(state.terms) > state.gwindow:
        state.residual_ring.popleft()
        state.terms.popleft()
    # summing the short ring avoids drift from add/subtract updates
    state.g_t = max(0.0, float(sum(state.terms)))
    return state.g_t, state


def alert_step(config: DetectorConfig, state: DetectorState, g_t: float) -> DetectorState:
    if g_t >= config.threshold:
        state.risk += 1
        if state.risk > config.window:
            state.alert += 1
    else:
        state.risk = 0
    return state


def threshold_from_samples(samples, target_fp: float) -> float:
    """Empirical ``1 - target_fp`` quantile (inverted-CDF definition)."""
    if not 0.0 < target_fp < 1.0:
        raise ContractViolation("target_fp must lie in (0, 1)")
    g = np.asarray(samples, dtype=float).reshape(-1)
    if g.size == 0:
        raise InsufficientDataError("no samples to calibrate from")
    return float(np.quantile(g, 1.0 - target_fp, method="inverted_cdf"))


def calibrate_threshold(runner: Callable[[int], np.ndarray], target_fp: float, calibration_ticks: int) -> float:
    """Threshold from an attack-free run.

    ``runner(ticks)`` must return the g_t trace of a seeded attack-free run.
    """
    if not 0.0 < target_fp < 1.0:
        raise ContractViolation("target_fp must lie in (0, 1)")
    if calibration_ticks < 100.0 / target_fp:
        raise InsufficientDataError(
            f"{calibration_ticks} calibration ticks is below the minimum {100.0 / target_fp:.0f}")
    return threshold_from_samples(runner(calibration_ticks), target_fp)
