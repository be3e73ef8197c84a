"""Slow reference implementations used to cross-check the fast code paths.

Everything here is written from the defining formulas with explicit loops and
central finite differences for divergences, deliberately sharing as little
code as possible with :mod:`mirrorstein.stein` and :mod:`mirrorstein.spectral`.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from mirrorstein.geometry import MirrorMap
from mirrorstein.kernels import ScalarKernel
from mirrorstein.targets import Target

FD_STEP = 1e-5


def _row_divergence(field: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float):
    """``[div A(y)]_m = sum_a d A_{ma} / d y_a`` by central differences."""
    d = y.size
    out = np.zeros(field(y).shape[0])
    for a in range(d):
        e = np.zeros(d)
        e[a] = h
        out += (field(y + e)[:, a] - field(y - e)[:, a]) / (2.0 * h)
    return out


def primal_msvgd_direction(
    theta: np.ndarray,
    kernel: ScalarKernel,
    mirror: MirrorMap,
    target: Target,
    h: float = FD_STEP,
) -> np.ndarray:
    """Mirrored Stein operator applied to ``k I``, averaged over the particles.

    ``g(x) = (1/n) sum_l [k(theta_l, x) H^-1(theta_l) grad log p(theta_l)
    + div_y (k(y, x) H^-1(y)) at y = theta_l]``.
    """
    theta = np.atleast_2d(theta)
    n, d = theta.shape
    out = np.zeros((n, d))
    for i in range(n):
        x = theta[i]
        acc = np.zeros(d)
        for l in range(n):
            y = theta[l]
            acc += float(kernel.eval(y, x)) * (
                mirror.hess_inv(y) @ target.grad_log_density(y)
            )
            acc += _row_divergence(
                lambda z: float(kernel.eval(z, x)) * mirror.hess_inv(z), y, h
            )
        out[i] = acc / n
    return out


class LiteralSpectralKernel:
    """Adaptive matrix kernel evaluated term by term.

    Args:
        theta: Particles, ``(n, d)``.
        kernel: Scalar kernel.
        metric_at: Callable returning the metric matrix at a point.
        tau: Cumulative-energy truncation level.
    """

    def __init__(self, theta, kernel: ScalarKernel, metric_at, tau: float = 1.0):
        self.theta = np.atleast_2d(theta)
        self.kernel = kernel
        n = self.theta.shape[0]
        B = np.array([[float(kernel.eval(a, b)) for b in self.theta] for a in self.theta])
        w, v = np.linalg.eigh(B)
        w, v = w[::-1], v[:, ::-1]
        pos = w > 1e-12 * w[0]
        w, v = w[pos], v[:, pos]
        frac = np.cumsum(w) / np.sum(w)
        J = int(np.argmax(frac >= tau - 1e-15)) + 1
        self.lam = w[:J] / n
        self.vecs = v[:, :J] * np.sqrt(n)
        self.n = n
        J = self.lam.size
        d = self.theta.shape[1]
        self.Gamma = np.zeros((J, J, d, d))
        for i in range(J):
            for j in range(J):
                for l in range(n):
                    self.Gamma[i, j] += (
                        self.vecs[l, i] * self.vecs[l, j] * metric_at(self.theta[l])
                    )
        self.Gamma /= n

    def u(self, x) -> np.ndarray:
        kx = np.array([float(self.kernel.eval(x, t)) for t in self.theta])
        return kx @ self.vecs / (self.n * self.lam)

    def __call__(self, x, y) -> np.ndarray:
        ux, uy = self.u(x), self.u(y)
        J = self.lam.size
        out = np.zeros(self.Gamma.shape[2:])
        for i in range(J):
            for j in range(J):
                out += np.sqrt(self.lam[i] * self.lam[j]) * ux[i] * uy[j] * self.Gamma[i, j]
        return out


def brute_force_matrix_direction(
    theta: np.ndarray,
    K: LiteralSpectralKernel,
    inv_metric_at,
    score_at,
    h: float = FD_STEP,
) -> np.ndarray:
    """``(1/n) sum_l [K(x, theta_l) M^-1 score + div_y (K(x, y) M^-1(y))]`` at each particle."""
    theta = np.atleast_2d(theta)
    n, d = theta.shape
    out = np.zeros((n, d))
    for i in range(n):
        x = theta[i]
        acc = np.zeros(d)
        for l in range(n):
            y = theta[l]
            acc += K(x, y) @ (inv_metric_at(y) @ score_at(y))
            acc += _row_divergence(lambda z: K(x, z) @ inv_metric_at(z), y, h)
        out[i] = acc / n
    return out


def brute_force_svmd_direction(theta, kernel, mirror: MirrorMap, target: Target, tau=1.0, h=FD_STEP):
    """SVMD direction from the literal spectral kernel with ``M = hess``."""
    K = LiteralSpectralKernel(theta, kernel, mirror.hess, tau)
    return brute_force_matrix_direction(theta, K, mirror.hess_inv, target.grad_log_density, h)
