"""Numerical self-checks shared by the CLI and the test-suite.

Two families:

* Monte-Carlo Stein identities for Dirichlet targets under the mirrored
  operator, plus a Langevin-operator negative control.
* Finite-difference suites for every analytic derivative in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from mirrorstein.geometry import (
    check_divergence_identity,
    entropic_orthant_map,
    entropic_simplex_map,
)
from mirrorstein.kernels import ScalarKernel
from mirrorstein.particles import ParticleSet
from mirrorstein.spectral import decompose, eigenfunction_values_and_grads
from mirrorstein.stein import SteinOperatorContext, langevin_op, mirrored_op
from mirrorstein.targets import (
    bayesian_logistic_regression,
    quadratic_simplex_target,
    random_spd_matrix,
    selective_density_2d,
    sparse_dirichlet_posterior,
    synthetic_logistic_data,
)

FD_STEP = 1e-5
SE_MULTIPLIER = 4.0


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one named check."""

    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: {self.value:.3e} vs {self.threshold:.3e}{extra}"


# ----------------------------------------------------------------------
# Stein identity
# ----------------------------------------------------------------------


def _test_fields(d: int):
    """Five bounded smooth vector fields with analytic Jacobians."""
    c = np.linspace(0.3, -0.7, d)
    W = np.array([[1.5, -2.0], [0.5, 2.5], [-1.0, 1.0]])[:d, :d]
    b = np.array([0.2, -0.4, 0.1])[:d]
    freq = 2.0 * np.pi

    def const_one(t):
        return np.ones_like(t)

    def const_c(t):
        return np.broadcast_to(c, t.shape)

    def zero_jac(t):
        return np.zeros(t.shape + (d,))

    def sine(t):
        return np.sin(freq * t)

    def sine_jac(t):
        return freq * np.cos(freq * t)[..., :, None] * np.eye(d)

    def tanh(t):
        return np.tanh(t @ W.T + b)

    def tanh_jac(t):
        s = 1.0 - np.tanh(t @ W.T + b) ** 2
        return s[..., :, None] * W

    def mixed(t):
        return np.cos(3.0 * t[..., ::-1])

    def mixed_jac(t):
        flip = np.eye(d)[::-1]
        return -3.0 * np.sin(3.0 * t[..., ::-1])[..., :, None] * flip

    return [
        ("constant-one", const_one, zero_jac),
        ("constant-vector", const_c, zero_jac),
        ("coordinate-sine", sine, sine_jac),
        ("tanh-linear", tanh, tanh_jac),
        ("cosine-reversed", mixed, mixed_jac),
    ]


def _mc_check(name: str, values: np.ndarray, expect_zero: bool) -> CheckResult:
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(values.size))
    thr = SE_MULTIPLIER * se
    ok = abs(mean) <= thr if expect_zero else abs(mean) > thr
    rel = "<=" if expect_zero else ">"
    return CheckResult(name, bool(ok), abs(mean), thr, f"|mean| {rel} 4 SE expected, t={mean / se:.2f}")


def identity_checks(
    seed: int = 0,
    draws: int = 100_000,
    alphas=((2.0, 2.0, 2.0), (0.6, 0.6, 0.6)),
) -> List[CheckResult]:
    """Mirrored Stein identity for several Dirichlet targets and test fields."""
    rng = np.random.default_rng(seed)
    out = []
    for alpha in alphas:
        alpha = np.asarray(alpha, dtype=float)
        d = alpha.size - 1
        target = sparse_dirichlet_posterior(alpha, np.zeros_like(alpha))
        ctx = SteinOperatorContext(target, entropic_simplex_map(d))
        eta = target.sample_dual(draws, rng)
        tag = ",".join(f"{a:g}" for a in alpha)
        for fname, g, jac in _test_fields(d):
            vals = mirrored_op(ctx, g, jac, eta=eta)
            out.append(_mc_check(f"mirrored identity alpha=({tag}) g={fname}", vals, True))
    return out


def negative_control(seed: int = 0, draws: int = 100_000, alpha=(0.6, 0.6, 0.6)) -> CheckResult:
    """Langevin operator with ``g = 1`` on a Dirichlet with components below one.

    The identity fails here because the boundary term does not vanish; the
    check passes when the Monte-Carlo mean is more than 4 SE from zero.
    """
    rng = np.random.default_rng(seed + 1_000_003)
    alpha = np.asarray(alpha, dtype=float)
    d = alpha.size - 1
    target = sparse_dirichlet_posterior(alpha, np.zeros_like(alpha))
    ctx = SteinOperatorContext(target)
    theta = target.sample(draws, rng)
    ok = target.domain.contains(theta)
    theta = theta[ok]

    def ones(t):
        return np.ones_like(t)

    def zeros(t):
        return np.zeros(t.shape + (d,))

    vals = langevin_op(ctx, ones, zeros, theta)
    tag = ",".join(f"{a:g}" for a in alpha)
    return _mc_check(f"langevin negative control alpha=({tag}) g=1", vals, False)


# ----------------------------------------------------------------------
# Finite differences
# ----------------------------------------------------------------------


def rel_err(approx: np.ndarray, exact: np.ndarray) -> float:
    """``||approx - exact|| / max(||exact||, 1)``."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), 1.0))


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (float(f(x + e)) - float(f(x - e))) / (2.0 * h)
    return g


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian, ``J[i, j] = d f_i / d x_j``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def _interior_simplex(rng, d, n, conc=2.0):
    return rng.dirichlet(np.full(d + 1, conc), size=n)[:, :d]


def _summarise(name, errs, tol) -> CheckResult:
    worst = float(np.max(errs)) if len(errs) else 0.0
    return CheckResult(name, worst <= tol, worst, tol, f"{len(errs)} cases")


def geometry_checks(seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for d in (2, 4):
        sm = entropic_simplex_map(d)
        om = entropic_orthant_map(d)
        th_s = _interior_simplex(rng, d, 1000)
        th_o = np.exp(rng.normal(size=(1000, d)))
        for label, m, th in (("simplex", sm, th_s), ("orthant", om, th_o)):
            back = m.grad_conj(m.grad(th))
            rt = np.max(np.abs(back - th) / np.abs(th))
            out.append(CheckResult(f"round trip {label} d={d}", rt <= 1e-9, rt, 1e-9))
            errs = [
                rel_err(fd_jacobian(m.grad, x), m.hess(x)) for x in th[:50]
            ]
            out.append(_summarise(f"jacobian of grad_psi {label} d={d}", errs, 1e-5))
            errs = [
                rel_err(fd_gradient(lambda e: -m.log_det_hess_from_dual(e), m.grad(x)), m.div_hess_inv(x))
                for x in th[:50]
            ]
            out.append(_summarise(f"dual log-det gradient {label} d={d}", errs, 1e-5))
            errs = []
            for x in th[:100]:
                A = rng.normal(size=(d, d))
                b = rng.normal(size=d)
                errs.append(
                    check_divergence_identity(
                        m,
                        lambda t: np.sin(A @ t + b),
                        lambda t: np.cos(A @ t + b)[:, None] * A,
                        x,
                    )
                )
            out.append(_summarise(f"divergence identity {label} d={d}", errs, 1e-6))
    return out


def kernel_checks(seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    d = 3
    sm = entropic_simplex_map(d)
    for fam in ("imq", "gaussian"):
        for comp in (None, sm):
            k = ScalarKernel(fam, 0.8, comp)
            errs = []
            for _ in range(100):
                if comp is None:
                    x, y = rng.normal(size=d), rng.normal(size=d)
                else:
                    x, y = _interior_simplex(rng, d, 2)
                errs.append(rel_err(fd_gradient(lambda z: k.eval(z, y), x), k.grad1(x, y)))
            tag = "k2" if comp is not None else "k"
            out.append(_summarise(f"kernel grad1 {fam} {tag}", errs, 1e-5))
        k = ScalarKernel(fam, 0.8)
        errs = []
        for _ in range(50):
            x, y = rng.normal(size=d), rng.normal(size=d)
            errs.append(rel_err(fd_jacobian(lambda z: k.grad1(x, z), y), k.cross_hessian(x, y)))
        out.append(_summarise(f"kernel cross hessian {fam}", errs, 1e-5))
    return out


def target_checks(seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    d = 4
    dirich = sparse_dirichlet_posterior(rng.uniform(0.5, 3.0, d + 1), rng.integers(0, 5, d + 1))
    quad = quadratic_simplex_target(random_spd_matrix(d, rng), 0.01)
    for name, t in (("dirichlet", dirich), ("quadratic", quad)):
        pts = _interior_simplex(rng, d, 50, conc=3.0)
        errs = [rel_err(fd_gradient(t.log_density, x), t.grad_log_density(x)) for x in pts]
        out.append(_summarise(f"target gradient {name}", errs, 1e-5))
    sel = selective_density_2d()
    pts = np.exp(rng.normal(size=(50, 2)))
    errs = [rel_err(fd_gradient(sel.log_density, x), sel.grad_log_density(x)) for x in pts]
    out.append(_summarise("target gradient selective2d", errs, 1e-5))
    data = synthetic_logistic_data(200, 5, 10, 10, rng)
    lr = bayesian_logistic_regression(data.X_train, data.y_train)
    pts = rng.normal(size=(50, 5))
    errs = [rel_err(fd_gradient(lr.log_density, x), lr.grad_log_density(x)) for x in pts]
    out.append(_summarise("target gradient logistic", errs, 1e-5))
    return out


def spectral_checks(seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(10):
        pts = rng.normal(size=(8, 3))
        for fam in ("imq", "gaussian"):
            dec = decompose(pts, ScalarKernel(fam, 1.3), tau=1.0)
            x = rng.normal(size=3)
            _, dU = eigenfunction_values_and_grads(dec, x)
            fd = fd_jacobian(lambda z: eigenfunction_values_and_grads(dec, z)[0][0], x)
            errs.append(rel_err(fd, dU[0]))
    return [_summarise("eigenfunction gradients", errs, 1e-5)]


def finite_difference_checks(seed: int = 0) -> List[CheckResult]:
    """Every finite-difference suite."""
    return (
        geometry_checks(seed)
        + kernel_checks(seed)
        + target_checks(seed)
        + spectral_checks(seed)
    )
