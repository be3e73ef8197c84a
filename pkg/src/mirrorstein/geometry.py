"""Mirror maps on constrained domains.

Two domains are supported:

* ``simplex``: points ``theta`` in R^d with ``theta_j > 0`` and
  ``sum(theta) < 1``.  The last barycentric coordinate
  ``theta_{d+1} = 1 - sum(theta)`` (the *slack*) is implicit.
* ``orthant``: points with every ``theta_j > 0``.

Every evaluation hook is vectorised over leading axes: pass ``(d,)`` for a
single point or ``(n, d)`` for a batch.  Matrices come back with shape
``(..., d, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

EPS_DOM = 1e-12


class DomainError(ValueError):
    """Raised when a point lies on or outside the boundary of its domain."""


@dataclass(frozen=True)
class DomainKind:
    """Descriptor of a constrained domain.

    Attributes:
        kind: ``"simplex"`` or ``"orthant"``.
        dim: Number of free coordinates ``d``.
    """

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in ("simplex", "orthant"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if int(self.dim) < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")

    def slack(self, theta: np.ndarray) -> np.ndarray:
        """Implicit last coordinate ``1 - sum(theta)`` (simplex only)."""
        return 1.0 - np.sum(theta, axis=-1)

    def contains(self, theta: np.ndarray) -> np.ndarray:
        """Boolean mask of points strictly inside the domain."""
        theta = np.asarray(theta, dtype=float)
        ok = np.all(np.isfinite(theta), axis=-1) & np.all(theta > 0.0, axis=-1)
        if self.kind == "simplex":
            ok &= self.slack(theta) > 0.0
        return ok

    def check(self, theta: np.ndarray) -> np.ndarray:
        """Validate shape and interiority; return ``theta`` as a float array."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1:] != (self.dim,):
            raise ValueError(
                f"expected trailing dimension {self.dim}, got shape {theta.shape}"
            )
        inside = self.contains(theta)
        if not np.all(inside):
            bad = np.argwhere(~np.atleast_1d(inside)).ravel()
            raise DomainError(
                f"{self.kind} domain violated at {bad.size} point(s), "
                f"first index {int(bad[0])}"
            )
        return theta

    def project(self, theta: np.ndarray, margin: float = EPS_DOM) -> np.ndarray:
        """Euclidean projection onto the domain shrunk inward by ``margin``.

        For the simplex the target set is ``{theta_j >= margin,
        1 - sum(theta) >= margin}``, an affine image of the corner simplex,
        so the sort-based projection is applied in rescaled coordinates.
        Points already at least ``margin`` inside are returned unchanged.
        """
        theta = np.asarray(theta, dtype=float)
        if self.kind == "orthant":
            return np.maximum(theta, margin)
        d = self.dim
        scale = 1.0 - (d + 1) * margin
        z = (theta - margin) / scale
        return margin + scale * project_corner_simplex(z)


def project_corner_simplex(x: np.ndarray) -> np.ndarray:
    """Project rows of ``x`` onto ``{z >= 0, sum(z) <= 1}``.

    If clipping negatives already satisfies the sum constraint that is the
    answer; otherwise the projection lies on the face ``sum(z) = 1`` and is
    found with the O(d log d) sort-and-threshold algorithm.
    """
    x = np.asarray(x, dtype=float)
    flat = np.atleast_2d(x).reshape(-1, x.shape[-1])
    out = np.maximum(flat, 0.0)
    over = out.sum(axis=1) > 1.0
    if np.any(over):
        v = flat[over]
        u = -np.sort(-v, axis=1)
        css = np.cumsum(u, axis=1) - 1.0
        k = np.arange(1, v.shape[1] + 1)
        cond = u - css / k > 0
        rho = v.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
        tau = css[np.arange(v.shape[0]), rho] / (rho + 1)
        out[over] = np.maximum(v - tau[:, None], 0.0)
    return out.reshape(x.shape)


def sqrtm_spd(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root of (a batch of) SPD matrices via ``eigh``."""
    w, v = np.linalg.eigh(mat)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


@dataclass(frozen=True)
class MirrorMap:
    """Base class bundling a mirror function and its derivatives.

    Subclasses implement the analytic hooks.  Naming follows the usual
    conventions: ``grad`` is the gradient of the mirror function (primal to
    dual), ``grad_conj`` the gradient of its convex conjugate (dual to primal),
    ``hess``/``hess_inv`` the Hessian and its inverse, and ``div_hess_inv``
    the row-wise divergence of the inverse Hessian.
    """

    domain: DomainKind
    eps_dom: float = EPS_DOM

    @property
    def dim(self) -> int:
        return self.domain.dim

    def psi(self, theta):
        raise NotImplementedError

    def grad(self, theta):
        raise NotImplementedError

    def grad_conj(self, eta):
        raise NotImplementedError

    def hess(self, theta):
        raise NotImplementedError

    def hess_inv(self, theta):
        raise NotImplementedError

    def hess_inv_vec(self, theta, v):
        """``hess_inv(theta) @ v`` without forming the matrix."""
        raise NotImplementedError

    def div_hess_inv(self, theta):
        raise NotImplementedError

    def grad_log_det_hess(self, theta):
        """Gradient in ``theta`` of ``log det hess(theta)``."""
        raise NotImplementedError

    def hess_from_dual(self, eta):
        """Hessian at ``grad_conj(eta)``, evaluated from dual coordinates.

        Avoids recomputing the simplex slack as ``1 - sum(theta)``, which
        loses all precision once the slack drops below machine epsilon.
        """
        raise NotImplementedError

    def hess_sqrt(self, theta):
        raise NotImplementedError

    def log_det_hess_from_dual(self, eta):
        """``log det hess`` at ``grad_conj(eta)``, computed from ``eta``."""
        raise NotImplementedError

    def precondition_score(self, theta, target):
        """``hess_inv(theta) @ grad log p(theta)`` for a target."""
        return self._precondition_score(self.domain.check(theta), target)

    def dual_score(self, theta, target):
        """Score of the pushforward density in dual coordinates.

        Equals ``hess_inv grad log p + div hess_inv``; the second term is the
        dual-space gradient of the log-Jacobian ``log det hess_conj(eta)``.
        """
        return self.precondition_score(theta, target) + self.div_hess_inv(theta)

    # Dual-coordinate entry points.  Any finite dual point maps strictly
    # inside the domain, so these skip the primal interiority check, which on
    # the simplex cannot resolve slacks below machine epsilon.

    def hess_inv_from_dual(self, eta):
        return self._hess_inv(self.grad_conj(eta))

    def precondition_from_dual(self, eta, v):
        return self._hess_inv_vec(self.grad_conj(eta), np.asarray(v, dtype=float))

    def dual_score_from_dual(self, eta, target):
        """Return ``(theta, score)`` with the pushforward score at ``eta``."""
        _check_finite(eta)
        theta = self.grad_conj(eta)
        return theta, self._precondition_score(theta, target) + self._div(theta)

    def _hess_inv(self, theta):
        raise NotImplementedError

    def _hess_inv_vec(self, theta, v):
        raise NotImplementedError

    def _div(self, theta):
        raise NotImplementedError

    def _precondition_score(self, theta, target):
        return self._hess_inv_vec(theta, target.grad_log_density(theta))


@dataclass(frozen=True)
class EntropicSimplexMap(MirrorMap):
    """Negative entropy ``sum_{j<=d+1} theta_j log theta_j`` on the simplex."""

    def _full(self, theta):
        theta = self.domain.check(theta)
        return theta, self.domain.slack(theta)

    def psi(self, theta):
        theta, s = self._full(theta)
        return np.sum(theta * np.log(theta), axis=-1) + s * np.log(s)

    def grad(self, theta):
        theta, s = self._full(theta)
        return np.log(theta) - np.log(s)[..., None]

    def grad_conj(self, eta):
        theta, _ = self.conj_with_slack(eta)
        return theta

    def conj_with_slack(self, eta):
        """Max-shifted softmax returning ``(theta, slack)``."""
        eta = np.asarray(eta, dtype=float)
        m = np.maximum(np.max(eta, axis=-1, keepdims=True), 0.0)
        e = np.exp(eta - m)
        e0 = np.exp(-m)
        z = e0 + np.sum(e, axis=-1, keepdims=True)
        return e / z, (e0 / z)[..., 0]

    def hess(self, theta):
        theta, s = self._full(theta)
        return self._hess(theta, s)

    def _hess(self, theta, s):
        d = theta.shape[-1]
        ones = np.ones((d, d))
        diag = np.eye(d) / theta[..., None, :]
        return diag + ones / s[..., None, None]

    def hess_from_dual(self, eta):
        theta, s = self.conj_with_slack(eta)
        return self._hess(theta, s)

    def log_det_hess_from_dual(self, eta):
        eta = np.asarray(eta, dtype=float)
        zero = np.zeros(eta.shape[:-1] + (1,))
        lse = logsumexp(np.concatenate([zero, eta], axis=-1), axis=-1)
        return -np.sum(eta, axis=-1) + (self.dim + 1) * lse

    def hess_inv(self, theta):
        return self._hess_inv(self.domain.check(theta))

    def _hess_inv(self, theta):
        return _diag(theta) - theta[..., :, None] * theta[..., None, :]

    def hess_inv_vec(self, theta, v):
        return self._hess_inv_vec(self.domain.check(theta), np.asarray(v, dtype=float))

    def _hess_inv_vec(self, theta, v):
        return theta * v - theta * np.sum(theta * v, axis=-1, keepdims=True)

    def div_hess_inv(self, theta):
        return self._div(self.domain.check(theta))

    def _div(self, theta):
        return 1.0 - (self.dim + 1) * theta

    def grad_log_det_hess(self, theta):
        theta, s = self._full(theta)
        return -(1.0 / theta - (1.0 / s)[..., None])

    def hess_sqrt(self, theta):
        return sqrtm_spd(self.hess(theta))

    def _precondition_score(self, theta, target):
        # Targets exposing theta_j * d/dtheta_j log p over all d+1 barycentric
        # coordinates avoid the 1/slack blow-up entirely.
        weighted = getattr(target, "barycentric_score", None)
        if weighted is None:
            return super()._precondition_score(theta, target)
        w = weighted(theta)
        return w[..., :-1] - theta * np.sum(w, axis=-1, keepdims=True)


@dataclass(frozen=True)
class EntropicOrthantMap(MirrorMap):
    """``sum_j (theta_j log theta_j - theta_j)`` on the positive orthant."""

    def psi(self, theta):
        theta = self.domain.check(theta)
        return np.sum(theta * np.log(theta) - theta, axis=-1)

    def grad(self, theta):
        return np.log(self.domain.check(theta))

    def grad_conj(self, eta):
        return np.exp(np.asarray(eta, dtype=float))

    def hess(self, theta):
        return _diag(1.0 / self.domain.check(theta))

    def hess_from_dual(self, eta):
        return _diag(np.exp(-np.asarray(eta, dtype=float)))

    def log_det_hess_from_dual(self, eta):
        return -np.sum(np.asarray(eta, dtype=float), axis=-1)

    def hess_inv(self, theta):
        return self._hess_inv(self.domain.check(theta))

    def _hess_inv(self, theta):
        return _diag(theta)

    def hess_inv_vec(self, theta, v):
        return self._hess_inv_vec(self.domain.check(theta), np.asarray(v, dtype=float))

    def _hess_inv_vec(self, theta, v):
        return theta * v

    def div_hess_inv(self, theta):
        return self._div(self.domain.check(theta))

    def _div(self, theta):
        return np.ones_like(theta)

    def grad_log_det_hess(self, theta):
        return -1.0 / self.domain.check(theta)

    def hess_sqrt(self, theta):
        return _diag(1.0 / np.sqrt(self.domain.check(theta)))


def _check_finite(eta):
    if not np.all(np.isfinite(eta)):
        raise DomainError("non-finite dual coordinate")


def _diag(v: np.ndarray) -> np.ndarray:
    return v[..., :, None] * np.eye(v.shape[-1])


def entropic_simplex_map(d: int, eps_dom: float = EPS_DOM) -> EntropicSimplexMap:
    """Negative-entropy mirror map on the (d+1)-simplex."""
    return EntropicSimplexMap(DomainKind("simplex", d), eps_dom)


def entropic_orthant_map(d: int, eps_dom: float = EPS_DOM) -> EntropicOrthantMap:
    """Entropic mirror map on the positive orthant of R^d."""
    return EntropicOrthantMap(DomainKind("orthant", d), eps_dom)


def check_divergence_identity(
    mirror: MirrorMap,
    g: Callable[[np.ndarray], np.ndarray],
    jac_g: Callable[[np.ndarray], np.ndarray],
    theta: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Residual of the divergence / log-determinant identity at one point.

    The left side ``div(hess_inv g)`` is taken by central differences; the
    right side ``tr(hess_inv jac_g) - g^T hess_inv grad log det hess`` is
    analytic.  ``jac_g(theta)[i, j]`` must hold ``d g_i / d theta_j``.
    """
    theta = mirror.domain.check(np.asarray(theta, dtype=float))
    d = theta.shape[-1]

    def field(x):
        return mirror.hess_inv(x) @ g(x)

    lhs = 0.0
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        lhs += (field(theta + e)[i] - field(theta - e)[i]) / (2.0 * h)

    hinv = mirror.hess_inv(theta)
    gv = np.asarray(g(theta), dtype=float)
    rhs = np.trace(hinv @ jac_g(theta)) - gv @ hinv @ mirror.grad_log_det_hess(theta)
    return float(abs(lhs - rhs))
