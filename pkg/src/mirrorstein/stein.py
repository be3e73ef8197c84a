"""Stein operators, the dual-space MSVGD direction and the mirrored KSD.

Throughout, ``s(eta)`` denotes the score of the pushforward density in dual
coordinates,

    s(eta) = hess_inv(theta) grad log p(theta) + div hess_inv(theta),

with ``theta = grad_conj(eta)``, and ``kappa`` the kernel viewed as a
function of dual points.  For a primal kernel ``k`` this is
``kappa(eta, eta') = k(theta, theta')`` and its dual gradients pick up a
``hess_inv`` factor; for a mirror-composed kernel ``k2`` it is simply the
base kernel evaluated on ``eta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from mirrorstein.geometry import MirrorMap
from mirrorstein.kernels import ScalarKernel
from mirrorstein.particles import ParticleSet
from mirrorstein.targets import Target

VectorField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SteinOperatorContext:
    """Target together with the mirror map used by mirrored operators."""

    target: Target
    mirror: Optional[MirrorMap] = None

    def __post_init__(self):
        if self.mirror is not None and self.target.domain != self.mirror.domain:
            raise ValueError(
                f"target domain {self.target.domain} does not match "
                f"mirror domain {self.mirror.domain}"
            )

    def require_mirror(self) -> MirrorMap:
        if self.mirror is None:
            raise ValueError("this operation needs a mirror map")
        return self.mirror


# ----------------------------------------------------------------------
# Pointwise operators
# ----------------------------------------------------------------------


def langevin_op(ctx: SteinOperatorContext, g: VectorField, jac_g: VectorField, theta):
    """``g^T grad log p + div g`` at one or many points."""
    theta = np.asarray(theta, dtype=float)
    score = ctx.target.grad_log_density(theta)
    gv = np.asarray(g(theta), dtype=float)
    J = np.asarray(jac_g(theta), dtype=float)
    return np.sum(gv * score, axis=-1) + np.trace(J, axis1=-2, axis2=-1)


def mirrored_op(
    ctx: SteinOperatorContext,
    g: VectorField,
    jac_g: VectorField,
    theta=None,
    eta=None,
):
    """``g^T hess_inv grad log p + div(hess_inv g)`` at one or many points.

    The divergence is expanded with the product rule,
    ``div(hess_inv g) = g^T div(hess_inv) + tr(hess_inv jac_g)``.

    Points may be given in dual coordinates instead, which is exact for
    simplex points whose slack is below machine epsilon.
    """
    mirror = ctx.require_mirror()
    if eta is not None:
        _, s = mirror.dual_score_from_dual(eta, ctx.target)
        theta = mirror.grad_conj(eta)
        hinv = mirror.hess_inv_from_dual(eta)
    else:
        theta = mirror.domain.check(theta)
        s = mirror.dual_score(theta, ctx.target)
        hinv = mirror.hess_inv(theta)
    gv = np.asarray(g(theta), dtype=float)
    J = np.asarray(jac_g(theta), dtype=float)
    return np.sum(gv * s, axis=-1) + np.einsum("...ij,...ji->...", hinv, J)


# ----------------------------------------------------------------------
# Dual-space kernel blocks
# ----------------------------------------------------------------------


def dual_score(particles: ParticleSet, ctx: SteinOperatorContext):
    """Return ``(eta, theta, s)`` for every particle."""
    mirror = ctx.require_mirror()
    eta = particles.dual(mirror)
    theta, s = mirror.dual_score_from_dual(eta, ctx.target)
    return eta, theta, s


@dataclass
class _DualBlocks:
    """Kernel blocks between source points (rows) and query points (columns)."""

    K: np.ndarray  # (n, m) kappa(src_j, qry_i)
    G1: np.ndarray  # (n, m, d) grad wrt src of kappa
    G2: np.ndarray  # (n, m, d) grad wrt qry of kappa
    cross_trace: Optional[np.ndarray] = None  # (n, m) tr(d2 kappa / d src d qry)


def _dual_blocks(
    kernel: ScalarKernel,
    mirror: MirrorMap,
    eta_src: np.ndarray,
    eta_qry: np.ndarray,
    with_cross: bool = False,
) -> _DualBlocks:
    base = kernel.base
    if kernel.mirror is not None:
        K, G = base.pairwise(eta_src, eta_qry)
        cross = None
        if with_cross:
            M = base.cross_hessian(eta_src[:, None, :], eta_qry[None, :, :])
            cross = np.trace(M, axis1=-2, axis2=-1)
        return _DualBlocks(K, G, -G, cross)

    th_src = mirror.grad_conj(eta_src)
    th_qry = mirror.grad_conj(eta_qry)
    h_src = mirror.hess_inv_from_dual(eta_src)
    h_qry = mirror.hess_inv_from_dual(eta_qry)
    K, G = base.pairwise(th_src, th_qry)
    G1 = np.einsum("jab,jib->jia", h_src, G)
    G2 = -np.einsum("iab,jib->jia", h_qry, G)
    cross = None
    if with_cross:
        M = base.cross_hessian(th_src[:, None, :], th_qry[None, :, :])
        cross = np.einsum("jab,jibc,ica->ji", h_src, M, h_qry)
    return _DualBlocks(K, G1, G2, cross)


def msvgd_direction(
    particles: ParticleSet,
    kernel: ScalarKernel,
    ctx: SteinOperatorContext,
    query_eta: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Dual-space MSVGD update direction.

    ``g(x) = (1/n) sum_j [kappa(eta_j, x) s(eta_j) + grad_{eta_j} kappa(eta_j, x)]``

    Args:
        particles: Current particles.
        kernel: Primal kernel ``k`` or mirror-composed ``k2``.
        ctx: Target and mirror map.
        query_eta: Dual points at which to evaluate; defaults to the particles.

    Returns:
        Array of shape ``(m, d)`` in dual coordinates.
    """
    mirror = ctx.require_mirror()
    eta, _, s = dual_score(particles, ctx)
    qry = eta if query_eta is None else np.atleast_2d(np.asarray(query_eta, float))
    blk = _dual_blocks(kernel, mirror, eta, qry)
    n = eta.shape[0]
    return (blk.K.T @ s + blk.G1.sum(axis=0)) / n


def stein_kernel_matrix(
    particles: ParticleSet, kernel: ScalarKernel, ctx: SteinOperatorContext
) -> np.ndarray:
    """Matrix ``U[a, b] = u_p(eta_a, eta_b)`` of the dual-space Stein kernel."""
    mirror = ctx.require_mirror()
    eta, _, s = dual_score(particles, ctx)
    blk = _dual_blocks(kernel, mirror, eta, eta, with_cross=True)
    # blk.G1[a, b] = grad_x kappa(x=eta_a, y=eta_b); blk.G2[a, b] = grad_y kappa.
    U = (s @ s.T) * blk.K
    U += np.einsum("ad,abd->ab", s, blk.G2)
    U += np.einsum("bd,abd->ab", s, blk.G1)
    U += blk.cross_trace
    return U


def mksd_squared(
    particles: ParticleSet, kernel: ScalarKernel, ctx: SteinOperatorContext
) -> float:
    """Squared mirrored kernel Stein discrepancy of the empirical measure."""
    U = stein_kernel_matrix(particles, kernel, ctx)
    return float(U.sum() / U.shape[0] ** 2)


def mksd_squared_from_direction(
    particles: ParticleSet, kernel: ScalarKernel, ctx: SteinOperatorContext
) -> float:
    """Same quantity as :func:`mksd_squared`, built from the update direction.

    Uses ``||g*||^2 = (1/n) sum_i [g*(eta_i)^T s(eta_i) + div g*(eta_i)]`` with
    ``g*`` from :func:`msvgd_direction` and its divergence assembled from the
    query-side kernel derivatives.
    """
    mirror = ctx.require_mirror()
    eta, _, s = dual_score(particles, ctx)
    g = msvgd_direction(particles, kernel, ctx)
    blk = _dual_blocks(kernel, mirror, eta, eta, with_cross=True)
    n = eta.shape[0]
    div = (np.einsum("jd,jid->i", s, blk.G2) + blk.cross_trace.sum(axis=0)) / n
    return float(np.mean(np.sum(g * s, axis=1) + div))
