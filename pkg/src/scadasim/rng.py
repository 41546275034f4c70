"""Reproducible random streams.

Every random quantity in a simulation comes from a :class:`GaussianSource`
whose seed is derived from a single root seed with :func:`split_seed`.

Generator, exactly:

* ``SplitMix64``: ``state += 0x9E3779B97F4A7C15 (mod 2**64)``, output is
  ``mix64(state)`` with the usual 30/27/31 shift-xor-multiply finaliser.
* Uniforms in the open interval (0, 1): ``((z >> 11) + 0.5) * 2**-53``.
* Standard normals: Box-Muller on two consecutive uniforms ``u1, u2``,
  ``r = sqrt(-2 ln u1)``; the cosine branch is returned first and the sine
  branch is cached for the next call.
* Correlated draws: ``mean + F @ z`` where ``F = V diag(sqrt(max(lam, 0)))``
  from the symmetric eigendecomposition of the covariance.
* Seed splitting: ``split_seed(root, label) = mix64(root ^ fnv1a64(label))``.
"""
from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


def split_seed(root: int, label: str | int) -> int:
    """Derive a child seed for the node or stream called ``label``.

    Children depend only on ``(root, label)``, so adding or reordering
    streams never perturbs the others.
    """
    return mix64((root & MASK64) ^ fnv1a64(str(label).encode("utf-8")))


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        return ((self.next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0)


class GaussianSource:
    """Multivariate normal stream N(mean, covariance) on a SplitMix64 core."""

    def __init__(self, mean, covariance, seed: int):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        dim = self.mean.shape[0]
        if cov.shape != (dim, dim):
            from .errors import ContractViolation

            raise ContractViolation(f"covariance shape {cov.shape} does not match mean length {dim}")
        self.covariance = cov.copy()
        lam, vec = np.linalg.eigh(0.5 * (cov + cov.T))
        self._factor = vec * np.sqrt(np.clip(lam, 0.0, None))
        self._zero = not np.any(self._factor)
        self.seed = seed & MASK64
        self.draw_count = 0
        self._core = SplitMix64(self.seed)
        self._spare: float | None = None

    @classmethod
    def standard(cls, dim: int, seed: int) -> "GaussianSource":
        return cls(np.zeros(dim), np.eye(dim), seed)

    def uniform(self) -> float:
        """A uniform (0, 1) variate taken from the same underlying stream."""
        return self._core.uniform()

    def standard_normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self._core.uniform()
        u2 = self._core.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)

    def draw(self) -> np.ndarray:
        self.draw_count += 1
        z = np.array([self.standard_normal() for _ in range(self.mean.shape[0])])
        if self._zero:
            return self.mean.copy()
        return self.mean + self._factor @ z

    def draws(self, count: int) -> np.ndarray:
        return np.array([self.draw() for _ in range(count)])
