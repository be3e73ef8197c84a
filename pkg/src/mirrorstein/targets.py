"""Target densities with analytic scores, plus metric tensors for SVNG.

Simplex targets additionally expose ``barycentric_score``: the vector
``theta_j * d log p / d theta_j`` over all ``d + 1`` barycentric coordinates.
The entropic mirror map turns this into the preconditioned score without
ever dividing by the slack ``theta_{d+1}``, which may be far below machine
epsilon for sparse posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit, log_expit

from mirrorstein.geometry import DomainKind, DomainError


class Target:
    """Unnormalised log-density with gradient.

    Attributes:
        domain: Constraint descriptor, or ``None`` for an unconstrained target.
        dim: Number of coordinates.
    """

    domain: Optional[DomainKind] = None
    dim: int = 0

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.domain is not None:
            return self.domain.check(theta)
        if theta.shape[-1:] != (self.dim,):
            raise ValueError(f"expected trailing dimension {self.dim}, got {theta.shape}")
        return theta

    def log_density(self, theta):
        raise NotImplementedError

    def grad_log_density(self, theta):
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator):
        """Exact i.i.d. draws, if available."""
        raise NotImplementedError(f"{type(self).__name__} has no exact sampler")

    @property
    def has_sampler(self) -> bool:
        return type(self).sample is not Target.sample


# ----------------------------------------------------------------------
# Dirichlet posterior
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DirichletPosterior(Target):
    """Dirichlet(``alpha + counts``) on the open simplex with ``d + 1`` categories."""

    alpha: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        c = np.asarray(self.counts, dtype=float)
        if a.ndim != 1 or a.shape != c.shape:
            raise ValueError("alpha and counts must be 1-D of equal length")
        if a.size < 2:
            raise ValueError("need at least two categories")
        if np.any(a <= 0) or np.any(c < 0):
            raise ValueError("alpha must be positive and counts non-negative")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "dim", a.size - 1)
        object.__setattr__(self, "domain", DomainKind("simplex", a.size - 1))

    @property
    def concentration(self) -> np.ndarray:
        return self.alpha + self.counts

    @property
    def mean(self) -> np.ndarray:
        c = self.concentration
        return (c / c.sum())[:-1]

    def log_density(self, theta):
        theta = self._check(theta)
        full = np.concatenate([theta, self.domain.slack(theta)[..., None]], axis=-1)
        return np.sum((self.concentration - 1.0) * np.log(full), axis=-1)

    def grad_log_density(self, theta):
        theta = self._check(theta)
        w = self.concentration - 1.0
        return w[:-1] / theta - (w[-1] / self.domain.slack(theta))[..., None]

    def barycentric_score(self, theta):
        theta = np.asarray(theta, dtype=float)
        shape = theta.shape[:-1] + (self.dim + 1,)
        return np.broadcast_to(self.concentration - 1.0, shape)

    def sample_log_gamma(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Logs of independent Gamma(concentration) variates, shape ``(n, d+1)``.

        Uses ``G(a) = G(a + 1) U^(1/a)`` in log space so small shapes do not
        underflow to zero.
        """
        c = self.concentration
        g = rng.standard_gamma(c + 1.0, size=(n, c.size))
        u = rng.random(size=(n, c.size))
        return np.log(g) + np.log(u) / c

    def sample_dual(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Exact draws in entropic dual coordinates ``log(theta_j / theta_{d+1})``."""
        lg = self.sample_log_gamma(n, rng)
        return lg[:, :-1] - lg[:, -1:]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lg = self.sample_log_gamma(n, rng)
        lg -= lg.max(axis=1, keepdims=True)
        e = np.exp(lg)
        return (e / e.sum(axis=1, keepdims=True))[:, :-1]


def sparse_dirichlet_posterior(alpha, counts) -> DirichletPosterior:
    """Dirichlet posterior with prior ``alpha`` and multinomial ``counts``."""
    return DirichletPosterior(np.asarray(alpha, float), np.asarray(counts, float))


def benchmark_sparse_dirichlet(d: int, prior: float = 0.1) -> DirichletPosterior:
    """Sparse posterior on ``d + 1`` categories with counts ``(90, 5, 5, 0, ...)``."""
    if d < 2:
        raise ValueError("sparse Dirichlet configuration needs d >= 2")
    counts = np.zeros(d + 1)
    counts[:3] = (90.0, 5.0, 5.0)
    return sparse_dirichlet_posterior(np.full(d + 1, prior), counts)


# ----------------------------------------------------------------------
# Quadratic target on the simplex
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadraticSimplex(Target):
    """``log p(theta) = -theta^T A theta / (2 sigma^2)`` restricted to the simplex."""

    A: np.ndarray
    sigma: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValueError("A must be symmetric")
        try:
            np.linalg.cholesky(A)
        except np.linalg.LinAlgError as exc:
            raise ValueError("A must be positive definite") from exc
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "dim", A.shape[0])
        object.__setattr__(self, "domain", DomainKind("simplex", A.shape[0]))

    def log_density(self, theta):
        theta = self._check(theta)
        return -0.5 * np.einsum("...i,ij,...j->...", theta, self.A, theta) / self.sigma**2

    def _grad(self, theta):
        return -(theta @ self.A) / self.sigma**2

    def grad_log_density(self, theta):
        return self._grad(self._check(theta))

    def barycentric_score(self, theta):
        theta = np.asarray(theta, dtype=float)
        w = theta * self._grad(theta)
        return np.concatenate([w, np.zeros(w.shape[:-1] + (1,))], axis=-1)


def random_spd_matrix(d: int, rng: np.random.Generator) -> np.ndarray:
    """``M M^T`` for ``M`` with Unif[-1, 1] entries, scaled to unit spectral norm."""
    M = rng.uniform(-1.0, 1.0, size=(d, d))
    A = M @ M.T
    A = 0.5 * (A + A.T)
    return A / np.linalg.eigvalsh(A)[-1]


def quadratic_simplex_target(A, sigma: float) -> QuadraticSimplex:
    """Quadratic log-density on the simplex."""
    return QuadraticSimplex(np.asarray(A, float), float(sigma))


# ----------------------------------------------------------------------
# Fixed 2-D selective-inference density on the orthant
# ----------------------------------------------------------------------

_SEL_SCALE = 8.07193
_SEL_ROW1 = np.array([2.39859, 1.90816])
_SEL_OFF1 = 2.39751
_SEL_ROW2 = np.array([0.0, 1.18099])
_SEL_OFF2 = -1.46104


@dataclass(frozen=True, eq=False)
class SelectiveDensity2D(Target):
    """Gaussian-type quadratic density truncated to the positive quadrant."""

    def __post_init__(self):
        object.__setattr__(self, "dim", 2)
        object.__setattr__(self, "domain", DomainKind("orthant", 2))

    def _residuals(self, theta):
        return theta @ _SEL_ROW1 + _SEL_OFF1, theta @ _SEL_ROW2 + _SEL_OFF2

    def log_density(self, theta):
        r1, r2 = self._residuals(self._check(theta))
        return -_SEL_SCALE * (r1**2 + r2**2)

    def grad_log_density(self, theta):
        r1, r2 = self._residuals(self._check(theta))
        return -2.0 * _SEL_SCALE * (r1[..., None] * _SEL_ROW1 + r2[..., None] * _SEL_ROW2)


def selective_density_2d() -> SelectiveDensity2D:
    return SelectiveDensity2D()


# ----------------------------------------------------------------------
# Bayesian logistic regression
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BayesianLogisticRegression(Target):
    """Logistic likelihood with a standard normal prior on the weights.

    Attributes:
        X: Features of shape ``(N, d)``; include a constant column for a bias.
        y: Labels in ``{0, 1}`` of shape ``(N,)``.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be (N, d) and y must be (N,)")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "dim", X.shape[1])

    @property
    def n_data(self) -> int:
        return self.X.shape[0]

    def _batch(self, batch):
        if batch is None:
            return self.X, self.y, 1.0
        idx = np.asarray(batch, dtype=int)
        if idx.size == 0:
            raise ValueError("empty minibatch")
        return self.X[idx], self.y[idx], self.n_data / idx.size

    def log_density(self, w, batch=None):
        w = self._check(w)
        X, y, scale = self._batch(batch)
        z = w @ X.T
        ll = y * log_expit(z) + (1.0 - y) * log_expit(-z)
        return scale * ll.sum(axis=-1) - 0.5 * np.sum(w**2, axis=-1)

    def grad_log_density(self, w, batch=None):
        w = self._check(w)
        X, y, scale = self._batch(batch)
        resid = y - expit(w @ X.T)
        return scale * resid @ X - w

    def fisher_batch(self, W, batch):
        """Minibatch Fisher estimate and its weight derivative, averaged over particles.

        Returns:
            ``(G, dG)`` with ``G`` of shape ``(d, d)`` and ``dG[j]`` the
            derivative of ``G`` in weight coordinate ``j``, shape ``(d, d, d)``.
        """
        W = np.atleast_2d(self._check(W))
        X, _, scale = self._batch(batch)
        sig = expit(W @ X.T)
        c = sig * (1.0 - sig)
        c3 = (c * (1.0 - 2.0 * sig)).mean(axis=0)
        c = c.mean(axis=0)
        d = X.shape[1]
        G = scale * (X * c[:, None]).T @ X
        outer = (X[:, :, None] * X[:, None, :]).reshape(X.shape[0], d * d)
        dG = scale * ((X * c3[:, None]).T @ outer).reshape(d, d, d)
        return G, dG


def bayesian_logistic_regression(X, y) -> BayesianLogisticRegression:
    return BayesianLogisticRegression(np.asarray(X, float), np.asarray(y, float))


@dataclass(frozen=True)
class LogisticData:
    """Train/validation/test split of a synthetic logistic problem."""

    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    w_true: np.ndarray


def synthetic_logistic_data(
    n_train: int = 2000,
    d: int = 10,
    n_val: int = 500,
    n_test: int = 1000,
    rng: Optional[np.random.Generator] = None,
) -> LogisticData:
    """Gaussian features with a bias column and labels from a standard-normal weight."""
    rng = np.random.default_rng(0) if rng is None else rng
    w_true = rng.standard_normal(d)
    total = n_train + n_val + n_test
    X = np.concatenate([rng.standard_normal((total, d - 1)), np.ones((total, 1))], axis=1)
    y = (rng.random(total) < expit(X @ w_true)).astype(float)
    a, b = n_train, n_train + n_val
    return LogisticData(X[:a], y[:a], X[a:b], y[a:b], X[b:], y[b:], w_true)


# ----------------------------------------------------------------------
# Metric tensors
# ----------------------------------------------------------------------


@dataclass
class MetricTensorEstimate:
    """Moving-average Fisher estimate shared by all particles.

    Attributes:
        G: Undamped running estimate, ``(d, d)``.
        dG: Running estimate of its weight derivatives, ``(d, d, d)``.
        r: Number of updates absorbed so far.
        damping: Ridge added before inversion.
    """

    G: np.ndarray
    dG: np.ndarray
    r: int = 0
    damping: float = 0.01

    @classmethod
    def empty(cls, d: int, damping: float = 0.01) -> "MetricTensorEstimate":
        return cls(np.zeros((d, d)), np.zeros((d, d, d)), 0, damping)

    @staticmethod
    def decay(r: int) -> float:
        return min(1.0 - 1.0 / r, 0.95)

    def damped(self) -> np.ndarray:
        return self.G + self.damping * np.eye(self.G.shape[0])

    def inverse(self) -> np.ndarray:
        Gd = self.damped()
        try:
            np.linalg.cholesky(Gd)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("damped metric is not positive definite") from exc
        return np.linalg.inv(Gd)

    def div_inverse(self) -> np.ndarray:
        """Row divergence of ``G^-1`` via ``d G^-1 = -G^-1 (dG) G^-1``."""
        Ginv = self.inverse()
        t = -np.einsum("ma,jab,bk->jmk", Ginv, self.dG, Ginv)
        return np.einsum("jmj->m", t)

    def evaluate(self, theta: np.ndarray):
        """Metric, inverse and inverse divergence broadcast to every particle."""
        n = np.atleast_2d(theta).shape[0]
        G = self.damped()
        Ginv = self.inverse()
        div = self.div_inverse()
        return (
            np.broadcast_to(G, (n,) + G.shape),
            np.broadcast_to(Ginv, (n,) + G.shape),
            np.broadcast_to(div, (n, G.shape[0])),
        )


def fisher_metric_update(
    est: MetricTensorEstimate,
    W: np.ndarray,
    target: BayesianLogisticRegression,
    batch,
) -> MetricTensorEstimate:
    """Absorb one minibatch Fisher estimate into the moving average."""
    r = est.r + 1
    rho = MetricTensorEstimate.decay(r)
    G_b, dG_b = target.fisher_batch(W, batch)
    new = MetricTensorEstimate(
        rho * est.G + (1.0 - rho) * G_b,
        rho * est.dG + (1.0 - rho) * dG_b,
        r,
        est.damping,
    )
    new.inverse()
    return new


@dataclass(frozen=True)
class ConstantMetric:
    """Position-independent SPD metric."""

    G: np.ndarray = field(default_factory=lambda: np.eye(1))

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1] or not np.allclose(G, G.T):
            raise ValueError("metric must be a symmetric matrix")
        try:
            np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise ValueError("metric must be positive definite") from exc
        object.__setattr__(self, "G", G)

    def evaluate(self, theta):
        n = np.atleast_2d(theta).shape[0]
        d = self.G.shape[0]
        Ginv = np.linalg.inv(self.G)
        return (
            np.broadcast_to(self.G, (n, d, d)),
            np.broadcast_to(Ginv, (n, d, d)),
            np.zeros((n, d)),
        )


# ----------------------------------------------------------------------
# Reference sample files
# ----------------------------------------------------------------------


def save_reference(path, sample: np.ndarray) -> None:
    """Write one particle per row, comma separated, no header."""
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    np.savetxt(Path(path), sample, delimiter=",", fmt="%.17g")


def load_reference(path, dim: Optional[int] = None) -> np.ndarray:
    data = np.loadtxt(Path(path), delimiter=",", ndmin=2)
    if dim is not None and data.shape[1] != dim:
        raise ValueError(f"reference sample has {data.shape[1]} columns, expected {dim}")
    return data


__all__ = [
    "Target",
    "DirichletPosterior",
    "QuadraticSimplex",
    "SelectiveDensity2D",
    "BayesianLogisticRegression",
    "MetricTensorEstimate",
    "ConstantMetric",
    "LogisticData",
    "DomainError",
    "sparse_dirichlet_posterior",
    "benchmark_sparse_dirichlet",
    "quadratic_simplex_target",
    "random_spd_matrix",
    "selective_density_2d",
    "bayesian_logistic_regression",
    "synthetic_logistic_data",
    "fisher_metric_update",
    "save_reference",
    "load_reference",
]
