"""Particle container shared by the operator, spectral and sampler modules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from mirrorstein.geometry import MirrorMap


@dataclass
class ParticleSet:
    """``n`` particles in primal coordinates, optionally with dual coordinates.

    For mirrored samplers the dual matrix ``eta`` is the source of truth and
    ``theta`` is derived from it; this keeps simplex slacks exact even when
    ``1 - sum(theta)`` is not representable.

    Attributes:
        theta: Primal coordinates, shape ``(n, d)``.
        eta: Dual coordinates, shape ``(n, d)``, or ``None``.
    """

    theta: np.ndarray
    eta: Optional[np.ndarray] = None

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        if self.eta is not None:
            self.eta = np.atleast_2d(np.asarray(self.eta, dtype=float))
            if self.eta.shape != self.theta.shape:
                raise ValueError("theta and eta shapes differ")

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def d(self) -> int:
        return self.theta.shape[1]

    @classmethod
    def from_dual(cls, eta: np.ndarray, mirror: MirrorMap) -> "ParticleSet":
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        return cls(mirror.grad_conj(eta), eta)

    @classmethod
    def from_primal(cls, theta: np.ndarray, mirror: Optional[MirrorMap] = None) -> "ParticleSet":
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        if mirror is None:
            return cls(theta)
        return cls(theta, mirror.grad(theta))

    def dual(self, mirror: MirrorMap) -> np.ndarray:
        """Dual coordinates, computing them from ``theta`` when absent."""
        if self.eta is not None:
            return self.eta
        return mirror.grad(self.theta)

    def permuted(self, perm) -> "ParticleSet":
        return ParticleSet(self.theta[perm], None if self.eta is None else self.eta[perm])

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.theta.copy(), None if self.eta is None else self.eta.copy())
