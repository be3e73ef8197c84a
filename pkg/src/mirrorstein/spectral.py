"""Spectral square-root kernels built from the particle Gram matrix.

The empirical Mercer expansion of a scalar kernel ``k`` under the current
particles gives eigenpairs ``(lambda_j, u_j)`` with ``u_j`` extended off the
particles by the Nystrom formula.  The adaptive matrix kernel is

    K(x, y) = sum_{i,j} sqrt(lambda_i lambda_j) u_i(x) u_j(y) Gamma_ij,
    Gamma_ij = (1/n) sum_l u_i(theta_l) u_j(theta_l) M(theta_l),

where ``M`` is the mirror Hessian (SVMD) or a metric tensor (SVNG).  Since
``Gamma`` does not depend on the kernel arguments, the Stein-operator update
has the closed form

    g(x) = sum_{i,j} sqrt(lambda_i lambda_j) u_i(x) Gamma_ij c_j,
    c_j  = (1/n) sum_l [u_j(theta_l) M^-1 grad log p + M^-1 grad u_j
                        + u_j(theta_l) div M^-1]  (all at theta_l).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mirrorstein.geometry import MirrorMap
from mirrorstein.kernels import ScalarKernel
from mirrorstein.particles import ParticleSet
from mirrorstein.targets import Target

RELATIVE_EIG_FLOOR = 1e-12


class NumericalRankError(ValueError):
    """Raised when an eigenvalue is too small to divide by safely."""


@dataclass(frozen=True)
class SpectralDecomposition:
    """Truncated eigendecomposition of a particle Gram matrix.

    Attributes:
        eigenvalues: Retained operator eigenvalues ``lambda_j`` (Gram
            eigenvalues divided by ``n``), descending, shape ``(J,)``.
        V: Eigenfunction values at the particles, ``V[i, j] = u_j(theta_i)``,
            normalised so that ``V^T V / n = I``; shape ``(n, J)``.
        tau: Energy fraction used for truncation.
        points: Particle locations the decomposition was built from.
        kernel: Scalar kernel used for the Gram matrix.
    """

    eigenvalues: np.ndarray
    V: np.ndarray
    tau: float
    points: np.ndarray
    kernel: ScalarKernel

    @property
    def J(self) -> int:
        return self.eigenvalues.size

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _points(particles) -> np.ndarray:
    if isinstance(particles, ParticleSet):
        return particles.theta
    return np.atleast_2d(np.asarray(particles, dtype=float))


def decompose(particles, kernel: ScalarKernel, tau: float = 0.98) -> SpectralDecomposition:
    """Eigendecompose the Gram matrix and truncate by cumulative energy.

    Eigenvalues at or below ``1e-12 * lambda_max`` are discarded first; of the
    rest, the smallest ``J`` whose eigenvalues carry a ``tau`` fraction of
    the total is kept.  Each eigenvector's sign is fixed so that its
    largest-magnitude entry is positive.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if kernel.mirror is not None:
        raise ValueError("spectral kernels require a kernel on primal coordinates")
    X = _points(particles)
    n = X.shape[0]
    B = kernel.gram(X)
    if not np.all(np.isfinite(B)):
        raise ValueError("Gram matrix has non-finite entries")
    w, vec = np.linalg.eigh(0.5 * (B + B.T))
    order = np.argsort(w)[::-1]
    w, vec = w[order], vec[:, order]
    keep = w > RELATIVE_EIG_FLOOR * max(w[0], 0.0)
    keep &= w > 0
    w, vec = w[keep], vec[:, keep]
    if w.size == 0:
        raise NumericalRankError("Gram matrix has no positive eigenvalues")
    cum = np.cumsum(w)
    J = int(np.searchsorted(cum, tau * cum[-1], side="left")) + 1
    J = min(J, w.size)
    w, vec = w[:J], vec[:, :J]
    idx = np.argmax(np.abs(vec), axis=0)
    signs = np.sign(vec[idx, np.arange(J)])
    signs[signs == 0] = 1.0
    V = vec * signs * np.sqrt(n)
    return SpectralDecomposition(w / n, V, float(tau), X.copy(), kernel)


def eigenfunction_values_and_grads(dec: SpectralDecomposition, x):
    """Nystrom values ``u_j(x)`` and gradients ``grad u_j(x)``.

    Args:
        dec: Decomposition of the particle set.
        x: Query points, shape ``(m, d)`` or ``(d,)``.

    Returns:
        ``(U, dU)`` with shapes ``(m, J)`` and ``(m, J, d)``.
    """
    lam = dec.eigenvalues
    if np.any(lam <= RELATIVE_EIG_FLOOR * lam[0]):
        raise NumericalRankError("eigenvalue below numerical rank floor")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    K, G = dec.kernel.pairwise(x, dec.points)
    coef = dec.V / (dec.n * lam)
    U = K @ coef
    dU = np.einsum("mid,ij->mjd", G, coef)
    return U, dU


def gamma(dec: SpectralDecomposition, M: np.ndarray) -> np.ndarray:
    """``Gamma[i, j] = (1/n) sum_l V[l, i] V[l, j] M[l]``, shape ``(J, J, d, d)``."""
    return np.einsum("li,lj,lab->ijab", dec.V, dec.V, M) / dec.n


def matrix_kernel(dec: SpectralDecomposition, Gam: np.ndarray, x, y) -> np.ndarray:
    """Evaluate the adaptive matrix kernel ``K(x, y)`` for single points."""
    ux, _ = eigenfunction_values_and_grads(dec, x)
    uy, _ = eigenfunction_values_and_grads(dec, y)
    r = np.sqrt(dec.eigenvalues)
    return np.einsum("i,j,ijab->ab", r * ux[0], r * uy[0], Gam)


def assemble(
    dec: SpectralDecomposition,
    Gam: np.ndarray,
    U_query: np.ndarray,
    pre_score: np.ndarray,
    minv_grad_u: np.ndarray,
) -> np.ndarray:
    """Closed-form update at query points.

    Args:
        dec: Decomposition.
        Gam: Output of :func:`gamma`.
        U_query: Eigenfunction values at the query points, ``(m, J)``.
        pre_score: ``M^-1 grad log p + div M^-1`` at the particles, ``(n, d)``.
        minv_grad_u: ``M^-1 grad u_j`` at the particles, ``(n, J, d)``.

    Returns:
        Directions of shape ``(m, d)``.
    """
    n = dec.n
    c = (dec.V.T @ pre_score + minv_grad_u.sum(axis=0)) / n  # (J, d)
    r = np.sqrt(dec.eigenvalues)
    a = U_query * r  # (m, J)
    gc = np.einsum("ijab,jb->ia", Gam, c * r[:, None])  # (J, d)
    return a @ gc


def svmd_direction(
    particles: ParticleSet,
    dec: SpectralDecomposition,
    mirror: MirrorMap,
    target: Target,
) -> np.ndarray:
    """SVMD update direction in dual coordinates at every particle."""
    eta = particles.dual(mirror)
    theta, s = mirror.dual_score_from_dual(eta, target)
    U, dU = eigenfunction_values_and_grads(dec, theta)
    hinv_du = np.einsum("lab,ljb->lja", mirror.hess_inv_from_dual(eta), dU)
    Gam = gamma(dec, mirror.hess_from_dual(eta))
    return assemble(dec, Gam, U, s, hinv_du)


def svng_direction(
    particles,
    dec: SpectralDecomposition,
    metric,
    target: Target,
    score: np.ndarray | None = None,
    return_dual: bool = False,
):
    """SVNG primal moves ``G^-1 g*`` at every particle.

    Args:
        particles: Current particles (primal coordinates).
        dec: Decomposition of the particle Gram matrix.
        metric: Object whose ``evaluate(theta)`` returns ``(G, G^-1, div G^-1)``.
        target: Target providing ``grad_log_density`` when ``score`` is absent.
        score: Optional precomputed (for example minibatch) scores, ``(n, d)``.
        return_dual: Also return the unpreconditioned direction ``g*``.
    """
    theta = _points(particles)
    if score is None:
        score = target.grad_log_density(theta)
    G, Ginv, div = metric.evaluate(theta)
    if np.min(np.linalg.eigvalsh(G)) <= 0:
        raise ValueError("metric is not positive definite")
    U, dU = eigenfunction_values_and_grads(dec, theta)
    pre = np.einsum("lab,lb->la", Ginv, score) + div
    ginv_du = np.einsum("lab,ljb->lja", Ginv, dU)
    g = assemble(dec, gamma(dec, G), U, pre, ginv_du)
    move = np.einsum("lab,lb->la", Ginv, g)
    return (move, g) if return_dual else move
