"""Radial scalar kernels, their derivatives and bandwidth selection.

Both families are functions of ``s = ||x - y||^2 / l^2`` through a profile
``f(s)``:

* IMQ: ``f(s) = (1 + s)^(-1/2)``
* Gaussian: ``f(s) = exp(-s)``

Optionally the kernel is composed with a mirror map, ``k2(x, y) =
k(grad_psi(x), grad_psi(y))``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from mirrorstein.geometry import MirrorMap

FAMILIES = ("imq", "gaussian")


@dataclass(frozen=True)
class ScalarKernel:
    """Radial scalar kernel.

    Attributes:
        family: ``"imq"`` or ``"gaussian"``.
        bandwidth: Length scale ``l > 0``.
        mirror: If set, inputs are first mapped through ``mirror.grad``.
    """

    family: str = "imq"
    bandwidth: float = 1.0
    mirror: Optional[MirrorMap] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    def with_bandwidth(self, bandwidth: float) -> "ScalarKernel":
        return dataclasses.replace(self, bandwidth=float(bandwidth))

    @property
    def base(self) -> "ScalarKernel":
        """The same kernel without mirror composition."""
        if self.mirror is None:
            return self
        return dataclasses.replace(self, mirror=None)

    # ------------------------------------------------------------------
    # Radial profile
    # ------------------------------------------------------------------

    def profile(self, s: np.ndarray):
        """Return ``(f, f', f'')`` evaluated at scaled squared distance ``s``."""
        if self.family == "imq":
            b = 1.0 / (1.0 + s)
            r = np.sqrt(b)
            f = r
            f1 = -0.5 * r * b
            f2 = 0.75 * r * b * b
        else:
            f = np.exp(-s)
            f1 = -f
            f2 = f
        return f, f1, f2

    def features(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x if self.mirror is None else self.mirror.grad(x)

    @staticmethod
    def _check_pair(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape[-1] != y.shape[-1]:
            raise ValueError(
                f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}"
            )
        return x, y

    # ------------------------------------------------------------------
    # Pointwise evaluation (broadcast over leading axes)
    # ------------------------------------------------------------------

    def eval(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Kernel value ``k(x, y)``."""
        x, y = self._check_pair(x, y)
        u, v = self.features(x), self.features(y)
        s = np.sum((u - v) ** 2, axis=-1) / self.bandwidth**2
        return self.profile(s)[0]

    def grad1(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Gradient of ``k(x, y)`` with respect to ``x``."""
        x, y = self._check_pair(x, y)
        u, v = self.features(x), self.features(y)
        diff = u - v
        s = np.sum(diff**2, axis=-1) / self.bandwidth**2
        g = (2.0 * self.profile(s)[1] / self.bandwidth**2)[..., None] * diff
        if self.mirror is not None:
            g = np.einsum("...ij,...j->...i", self.mirror.hess(x), g)
        return g

    def grad2(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Gradient of ``k(x, y)`` with respect to ``y``."""
        return self.grad1(y, x)

    def cross_hessian(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Mixed second derivative ``d^2 k / dx_a dy_b`` of the base kernel."""
        x, y = self._check_pair(x, y)
        diff = x - y
        l2 = self.bandwidth**2
        s = np.sum(diff**2, axis=-1) / l2
        _, f1, f2 = self.profile(s)
        outer = diff[..., :, None] * diff[..., None, :]
        eye = np.eye(x.shape[-1])
        return -(
            (4.0 * f2 / l2**2)[..., None, None] * outer
            + (2.0 * f1 / l2)[..., None, None] * eye
        )

    # ------------------------------------------------------------------
    # Pairwise blocks over particle sets
    # ------------------------------------------------------------------

    def gram(self, X: np.ndarray, Y: Optional[np.ndarray] = None) -> np.ndarray:
        """Matrix ``K[i, j] = k(X[i], Y[j])``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
        return self.eval(X[:, None, :], Y[None, :, :])

    def pairwise(self, X: np.ndarray, Y: Optional[np.ndarray] = None):
        """Values and first-argument gradients of the base kernel.

        Inputs are taken as already being in feature space; no mirror
        composition is applied.

        Returns:
            ``(K, G)`` with ``K[i, j] = k(X[i], Y[j])`` of shape ``(n, m)`` and
            ``G[i, j] = grad_x k(X[i], Y[j])`` of shape ``(n, m, d)``.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
        diff = X[:, None, :] - Y[None, :, :]
        l2 = self.bandwidth**2
        s = np.sum(diff**2, axis=-1) / l2
        f, f1, _ = self.profile(s)
        return f, (2.0 * f1 / l2)[..., None] * diff


def median_bandwidth(points: np.ndarray, log_scaling: bool = False) -> float:
    """Median heuristic length scale.

    ``l^2`` is the lower median of the pairwise squared distances.  When
    ``log_scaling`` is set it is further divided by ``log(n + 1)``.  A fully
    degenerate set returns ``1.0``.

    Args:
        points: Array of shape ``(n, d)`` with ``n >= 2``.
        log_scaling: Apply the ``log(n + 1)`` divisor.

    Returns:
        The length scale ``l``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if n < 2:
        raise ValueError("median heuristic needs at least two points")
    sq = np.sort(pdist(points, "sqeuclidean"))
    med = sq[(sq.size - 1) // 2]
    if log_scaling:
        med = med / np.log(n + 1.0)
    if not med > 0 or not np.isfinite(med):
        return 1.0
    return float(np.sqrt(med))
