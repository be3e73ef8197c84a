"""Iteration drivers for the particle samplers and the mirror-Langevin chain."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from mirrorstein.geometry import EPS_DOM, MirrorMap, entropic_orthant_map, entropic_simplex_map
from mirrorstein.kernels import ScalarKernel, median_bandwidth
from mirrorstein.metrics import RunTrace, TraceRow, energy_distance
from mirrorstein.particles import ParticleSet
from mirrorstein.spectral import decompose, svmd_direction, svng_direction
from mirrorstein.stein import SteinOperatorContext, mksd_squared, msvgd_direction
from mirrorstein.targets import ConstantMetric, MetricTensorEstimate, Target, fisher_metric_update

MIRRORED = ("msvgd", "svmd")
UNCONSTRAINED = ("svgd", "svng")
ALGORITHMS = MIRRORED + UNCONSTRAINED + ("projected_svgd",)


class SamplerError(RuntimeError):
    """Raised when a step produces an invalid state.

    Attributes:
        iteration: Iteration at which the failure happened, if known.
        particle: Index of the offending particle, if known.
    """

    def __init__(self, message: str, iteration: Optional[int] = None, particle: Optional[int] = None):
        parts = [message]
        if iteration is not None:
            parts.append(f"iteration {iteration}")
        if particle is not None:
            parts.append(f"particle {particle}")
        super().__init__(", ".join(parts))
        self.iteration = iteration
        self.particle = particle


# ----------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class StepSizeSchedule:
    """Fixed step or RMSProp scaling applied per particle and coordinate.

    Attributes:
        mode: ``"fixed"`` or ``"rmsprop"``.
        base_rate: Base learning rate.
        decay: RMSProp accumulator decay.
        stabilizer: Constant added to the root accumulator.
    """

    mode: str = "rmsprop"
    base_rate: float = 0.01
    decay: float = 0.9
    stabilizer: float = 1e-8

    def __post_init__(self):
        if self.mode not in ("fixed", "rmsprop"):
            raise ValueError(f"unknown step mode {self.mode!r}")
        if not (np.isfinite(self.base_rate) and self.base_rate >= 0):
            raise ValueError("base_rate must be finite and non-negative")
        if not 0.0 <= self.decay < 1.0:
            raise ValueError("decay must lie in [0, 1)")

    def effective_scale(self, acc: np.ndarray) -> np.ndarray:
        """Per-entry multiplier applied to the direction."""
        if self.mode == "fixed":
            return np.full_like(acc, self.base_rate)
        return self.base_rate / (np.sqrt(acc) + self.stabilizer)

    def apply(self, direction: np.ndarray, acc: np.ndarray):
        """Return ``(delta, new_acc, scale)`` for one update."""
        if self.mode == "rmsprop":
            acc = self.decay * acc + (1.0 - self.decay) * direction**2
        scale = self.effective_scale(acc)
        return scale * direction, acc, scale


@dataclass(frozen=True)
class SamplerConfig:
    """Settings for a single sampler run.

    Attributes:
        algorithm: One of ``msvgd``, ``svmd``, ``svng``, ``svgd``,
            ``projected_svgd``.
        kernel: ``"imq"`` or ``"gaussian"``.
        kernel_space: ``"primal"`` for ``k`` or ``"dual"`` for the
            mirror-composed ``k2`` (MSVGD only).
        tau: Spectral truncation level for SVMD and SVNG.
        n: Number of particles.
        T: Number of iterations.
        seed: Seed for initialisation and minibatching.
        step: Step-size schedule.
        bandwidth: Fixed length scale, or ``None`` for the median heuristic.
        freeze_bandwidth: Compute the median heuristic once at initialisation.
        median_log_scaling: Divide the median by ``log(n + 1)``.
        minibatch: Minibatch size for data targets.
        damping: Ridge added to the Fisher estimate.
        metric: ``"fisher"`` or ``"identity"`` for SVNG.
        init_concentration: Symmetric Dirichlet parameter for simplex inits.
        init_scale: Noise scale for dual (orthant) and Gaussian inits.
        cadence: Trace recording interval.
        record_mksd: Record MKSD^2 for mirrored samplers.
        record_time: Record wall time (breaks byte-level reproducibility).
    """

    algorithm: str = "msvgd"
    kernel: str = "imq"
    kernel_space: str = "primal"
    tau: float = 0.98
    n: int = 50
    T: int = 500
    seed: int = 0
    step: StepSizeSchedule = field(default_factory=StepSizeSchedule)
    bandwidth: Optional[float] = None
    freeze_bandwidth: bool = False
    median_log_scaling: bool = False
    minibatch: int = 256
    damping: float = 0.01
    metric: str = "fisher"
    init_concentration: float = 5.0
    init_scale: float = 1.0
    cadence: int = 10
    record_mksd: bool = False
    record_time: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm: unknown value {self.algorithm!r}")
        if self.kernel not in ("imq", "gaussian"):
            raise ValueError(f"kernel: unknown value {self.kernel!r}")
        if self.kernel_space not in ("primal", "dual"):
            raise ValueError(f"kernel_space: unknown value {self.kernel_space!r}")
        if self.kernel_space == "dual" and self.algorithm != "msvgd":
            raise ValueError("kernel_space: dual kernels are only supported for msvgd")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau: must lie in (0, 1]")
        if self.n < 1:
            raise ValueError("n: must be >= 1")
        if self.T < 0:
            raise ValueError("T: must be >= 0")
        if self.cadence < 1:
            raise ValueError("cadence: must be >= 1")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth: must be positive")
        if self.minibatch < 1:
            raise ValueError("minibatch: must be >= 1")
        if self.damping <= 0:
            raise ValueError("damping: must be positive")
        if self.metric not in ("fisher", "identity"):
            raise ValueError(f"metric: unknown value {self.metric!r}")
        if self.init_concentration <= 0 or self.init_scale <= 0:
            raise ValueError("init_concentration and init_scale must be positive")

    def replace(self, **changes) -> "SamplerConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class SamplerState:
    """Mutable state owned by one run."""

    particles: ParticleSet
    acc: np.ndarray
    rng: np.random.Generator
    iteration: int = 0
    bandwidth: Optional[float] = None
    metric: Optional[MetricTensorEstimate] = None
    last_scale: float = float("nan")


def mirror_for(target: Target) -> Optional[MirrorMap]:
    """Entropic mirror map matching a target's domain."""
    if target.domain is None:
        return None
    if target.domain.kind == "simplex":
        return entropic_simplex_map(target.domain.dim)
    return entropic_orthant_map(target.domain.dim)


# ----------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------


def _kernel(state: SamplerState, cfg: SamplerConfig, mirror: Optional[MirrorMap]) -> ScalarKernel:
    comp = mirror if cfg.kernel_space == "dual" else None
    if cfg.bandwidth is not None:
        ell = cfg.bandwidth
    elif state.bandwidth is not None:
        ell = state.bandwidth
    else:
        pts = state.particles.eta if comp is not None else state.particles.theta
        ell = median_bandwidth(pts, cfg.median_log_scaling) if pts.shape[0] > 1 else 1.0
    return ScalarKernel(cfg.kernel, ell, comp)


def _check_direction(direction: np.ndarray, state: SamplerState):
    bad = ~np.all(np.isfinite(direction), axis=1)
    if np.any(bad):
        raise SamplerError(
            "non-finite update direction", state.iteration, int(np.argmax(bad))
        )


def _apply(state: SamplerState, cfg: SamplerConfig, direction: np.ndarray):
    _check_direction(direction, state)
    delta, acc, scale = cfg.step.apply(direction, state.acc)
    return delta, acc, float(np.mean(scale))


def _mirrored_update(state, cfg, mirror, direction) -> SamplerState:
    delta, acc, scale = _apply(state, cfg, direction)
    eta = state.particles.eta + delta
    bad = ~np.all(np.isfinite(eta), axis=1)
    if np.any(bad):
        raise SamplerError("non-finite dual coordinate", state.iteration, int(np.argmax(bad)))
    return dataclasses.replace(
        state,
        particles=ParticleSet.from_dual(eta, mirror),
        acc=acc,
        iteration=state.iteration + 1,
        last_scale=scale,
    )


def _scores(target: Target, theta: np.ndarray, cfg: SamplerConfig, rng):
    """Full or minibatch scores, and the batch used."""
    n_data = getattr(target, "n_data", None)
    if n_data is None:
        return target.grad_log_density(theta), None
    size = min(cfg.minibatch, n_data)
    batch = np.sort(rng.choice(n_data, size=size, replace=False))
    return target.grad_log_density(theta, batch), batch


# ----------------------------------------------------------------------
# Steps
# ----------------------------------------------------------------------


def step_msvgd(state: SamplerState, cfg: SamplerConfig, ctx: SteinOperatorContext) -> SamplerState:
    """One MSVGD update in dual coordinates."""
    mirror = ctx.require_mirror()
    k = _kernel(state, cfg, mirror)
    return _mirrored_update(state, cfg, mirror, msvgd_direction(state.particles, k, ctx))


def step_svmd(state: SamplerState, cfg: SamplerConfig, ctx: SteinOperatorContext) -> SamplerState:
    """One SVMD update with the adaptive spectral kernel."""
    mirror = ctx.require_mirror()
    k = _kernel(state, cfg, None)
    dec = decompose(state.particles, k, cfg.tau)
    return _mirrored_update(state, cfg, mirror, svmd_direction(state.particles, dec, mirror, ctx.target))


def step_svng(state: SamplerState, cfg: SamplerConfig, target: Target, metric=None) -> SamplerState:
    """One SVNG update in primal coordinates.

    Args:
        state: Current state; ``state.metric`` carries the Fisher average.
        cfg: Configuration.
        target: Unconstrained target.
        metric: Optional fixed metric provider overriding ``cfg.metric``.
    """
    theta = state.particles.theta
    score, batch = _scores(target, theta, cfg, state.rng)
    est = state.metric
    if metric is None:
        if cfg.metric == "fisher":
            if est is None:
                est = MetricTensorEstimate.empty(theta.shape[1], cfg.damping)
            if batch is None:
                batch = np.arange(target.n_data)
            est = fisher_metric_update(est, theta, target, batch)
            metric = est
        else:
            metric = ConstantMetric(np.eye(theta.shape[1]))
    k = _kernel(state, cfg, None)
    dec = decompose(theta, k, cfg.tau)
    move = svng_direction(theta, dec, metric, target, score=score)
    delta, acc, scale = _apply(state, cfg, move)
    return dataclasses.replace(
        state,
        particles=ParticleSet(theta + delta),
        acc=acc,
        metric=est,
        iteration=state.iteration + 1,
        last_scale=scale,
    )


def svgd_direction(theta: np.ndarray, score: np.ndarray, k: ScalarKernel) -> np.ndarray:
    """Standard SVGD direction ``(1/n) sum_j [k(x_j, x) s_j + grad_{x_j} k(x_j, x)]``."""
    K, G = k.pairwise(theta)
    return (K.T @ score + G.sum(axis=0)) / theta.shape[0]


def step_svgd(
    state: SamplerState, cfg: SamplerConfig, target: Target, projected: bool = False
) -> SamplerState:
    """One SVGD update, optionally followed by projection onto the domain."""
    theta = state.particles.theta
    score, _ = _scores(target, theta, cfg, state.rng)
    k = _kernel(state, cfg, None)
    delta, acc, scale = _apply(state, cfg, svgd_direction(theta, score, k))
    new = theta + delta
    if projected:
        if target.domain is None:
            raise ValueError("projection requires a constrained target")
        new = target.domain.project(new, EPS_DOM)
    return dataclasses.replace(
        state,
        particles=ParticleSet(new),
        acc=acc,
        iteration=state.iteration + 1,
        last_scale=scale,
    )


def step_mirror_langevin(
    eta: np.ndarray,
    mirror: MirrorMap,
    target: Target,
    step: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """One Euler-Maruyama step of mirror-Langevin dynamics for a batch of chains.

    ``eta <- eta + step grad log p(theta) + sqrt(2 step) hess^(1/2)(theta) xi``.
    The primal score is recovered as ``hess (hess_inv grad log p)`` so that
    simplex targets never divide by a rounded slack.
    """
    eta = np.atleast_2d(eta)
    theta = mirror.grad_conj(eta)
    H = mirror.hess_from_dual(eta)
    pre = mirror._precondition_score(theta, target)
    drift = np.einsum("nab,nb->na", H, pre)
    w, v = np.linalg.eigh(H)
    xi = rng.standard_normal(eta.shape)
    noise = np.einsum("nab,nb->na", v, np.sqrt(np.clip(w, 0.0, None)) * np.einsum("nba,nb->na", v, xi))
    return eta + step * drift + np.sqrt(2.0 * step) * noise


def _dual_log_density(eta, mirror: MirrorMap, target: Target) -> np.ndarray:
    """``log p(theta) - log det hess(theta)``; ``-inf`` where ``theta`` is not representable."""
    theta = mirror.grad_conj(eta)
    ok = target.domain.contains(theta)
    out = np.full(eta.shape[0], -np.inf)
    if np.any(ok):
        out[ok] = target.log_density(theta[ok]) - mirror.log_det_hess_from_dual(eta[ok])
    return out


def _proposal_terms(eta, mirror, target, step):
    theta = mirror.grad_conj(eta)
    H = mirror.hess_from_dual(eta)
    mean = eta + step * np.einsum("nab,nb->na", H, mirror._precondition_score(theta, target))
    return mean, mirror.hess_inv_from_dual(eta), mirror.log_det_hess_from_dual(eta)


def _log_proposal(x, mean, hinv, logdet_h, step):
    r = x - mean
    quad = np.einsum("na,nab,nb->n", r, hinv, r) / (2.0 * step)
    return -0.5 * quad - 0.5 * logdet_h


def step_mirror_mala(
    eta: np.ndarray,
    mirror: MirrorMap,
    target: Target,
    step: float,
    rng: np.random.Generator,
):
    """Metropolis-adjusted mirror-Langevin step targeting the dual density.

    The Euler-Maruyama move of :func:`step_mirror_langevin` is used as a
    proposal and accepted with the Metropolis-Hastings ratio for
    ``p(theta) / det hess(theta)`` in dual coordinates.

    Returns:
        ``(eta_new, accepted)`` with ``accepted`` a boolean mask.
    """
    eta = np.atleast_2d(eta)
    prop = step_mirror_langevin(eta, mirror, target, step, rng)
    finite = np.all(np.isfinite(prop), axis=1)
    prop = np.where(finite[:, None], prop, eta)
    m_f, hi_f, ld_f = _proposal_terms(eta, mirror, target, step)
    m_b, hi_b, ld_b = _proposal_terms(prop, mirror, target, step)
    log_ratio = (
        _dual_log_density(prop, mirror, target)
        - _dual_log_density(eta, mirror, target)
        + _log_proposal(eta, m_b, hi_b, ld_b, step)
        - _log_proposal(prop, m_f, hi_f, ld_f, step)
    )
    log_ratio = np.where(finite & np.isfinite(log_ratio), log_ratio, -np.inf)
    accept = np.log(rng.random(eta.shape[0])) < log_ratio
    return np.where(accept[:, None], prop, eta), accept


def mirror_langevin_sample(
    target: Target,
    n_samples: int,
    rng: np.random.Generator,
    step: float = 1e-4,
    burn_in: int = 10_000,
    thin: int = 10,
    chains: int = 100,
    eta0: Optional[np.ndarray] = None,
    metropolis: bool = True,
) -> np.ndarray:
    """Reference sample from parallel mirror-Langevin chains.

    Runs ``chains`` independent chains for ``burn_in`` steps, then keeps every
    ``thin``-th state until ``n_samples`` draws are collected.  Draws are
    returned in primal coordinates, ordered by collection round then chain.
    With ``metropolis`` set each move is Metropolis-adjusted; the plain
    Euler-Maruyama chain can diverge when the target puts mass at the
    boundary, where the dual noise scale grows without bound.
    """
    mirror = mirror_for(target)
    if mirror is None:
        raise ValueError("mirror-Langevin needs a constrained target")
    d = target.dim
    chains = min(chains, n_samples)
    if eta0 is None:
        eta = init_dual(target, mirror, chains, rng, 5.0, 1.0)
    else:
        eta = np.broadcast_to(np.asarray(eta0, float), (chains, d)).copy()
    def advance(e):
        if metropolis:
            return step_mirror_mala(e, mirror, target, step, rng)[0]
        return step_mirror_langevin(e, mirror, target, step, rng)

    for _ in range(burn_in):
        eta = advance(eta)
    rounds = -(-n_samples // chains)
    out = np.empty((rounds * chains, d))
    for r in range(rounds):
        for _ in range(thin):
            eta = advance(eta)
        out[r * chains : (r + 1) * chains] = mirror.grad_conj(eta)
    return out[:n_samples]


# ----------------------------------------------------------------------
# Driver
# ----------------------------------------------------------------------


def init_dual(target: Target, mirror: MirrorMap, n: int, rng, concentration: float, scale: float):
    """Initial dual coordinates for a constrained target."""
    d = target.dim
    if target.domain.kind == "simplex":
        lg = np.log(rng.standard_gamma(concentration, size=(n, d + 1)))
        return lg[:, :-1] - lg[:, -1:]
    return scale * rng.standard_normal((n, d))


def initial_state(cfg: SamplerConfig, target: Target) -> SamplerState:
    """Seeded initial particles and optimizer state."""
    rng = np.random.default_rng(cfg.seed)
    mirror = mirror_for(target)
    if target.domain is not None:
        eta = init_dual(target, mirror, cfg.n, rng, cfg.init_concentration, cfg.init_scale)
        ps = ParticleSet.from_dual(eta, mirror)
        if cfg.algorithm not in MIRRORED:
            ps = ParticleSet(ps.theta)
    else:
        ps = ParticleSet(cfg.init_scale * rng.standard_normal((cfg.n, target.dim)))
    state = SamplerState(ps, np.zeros_like(ps.theta), rng)
    if cfg.bandwidth is None and cfg.freeze_bandwidth:
        k = _kernel(state, cfg, mirror if cfg.algorithm in MIRRORED else None)
        state.bandwidth = k.bandwidth
    return state


def check_compatible(cfg: SamplerConfig, target: Target) -> None:
    constrained = target.domain is not None
    if cfg.algorithm in MIRRORED + ("projected_svgd",) and not constrained:
        raise ValueError(f"algorithm: {cfg.algorithm} needs a constrained target")
    if cfg.algorithm in UNCONSTRAINED and constrained:
        raise ValueError(f"algorithm: {cfg.algorithm} needs an unconstrained target")


def step(state: SamplerState, cfg: SamplerConfig, target: Target, ctx=None) -> SamplerState:
    """Dispatch one iteration of ``cfg.algorithm``."""
    alg = cfg.algorithm
    if alg == "msvgd":
        return step_msvgd(state, cfg, ctx)
    if alg == "svmd":
        return step_svmd(state, cfg, ctx)
    if alg == "svng":
        return step_svng(state, cfg, target)
    return step_svgd(state, cfg, target, projected=alg == "projected_svgd")


def trace_iterations(T: int, cadence: int) -> list[int]:
    """Iterations at which a trace row is written."""
    its = list(range(0, T, cadence))
    its.append(T)
    return its


def run(
    cfg: SamplerConfig,
    target: Target,
    reference: Optional[np.ndarray] = None,
    state: Optional[SamplerState] = None,
):
    """Run a sampler for ``cfg.T`` iterations.

    Args:
        cfg: Sampler configuration.
        target: Target density.
        reference: Optional reference sample for the energy-distance column.
        state: Optional initial state; seeded from ``cfg`` otherwise.

    Returns:
        ``(particles, trace)``.
    """
    check_compatible(cfg, target)
    mirror = mirror_for(target)
    ctx = SteinOperatorContext(target, mirror) if mirror is not None else None
    if state is None:
        state = initial_state(cfg, target)
    record = set(trace_iterations(cfg.T, cfg.cadence))
    trace = RunTrace()
    start = time.perf_counter()

    def snapshot(st: SamplerState):
        ps = st.particles
        ed = energy_distance(ps.theta, reference) if reference is not None else None
        mk = None
        if cfg.record_mksd and ctx is not None:
            p = ps if ps.eta is not None else ParticleSet.from_primal(ps.theta, mirror)
            mk = mksd_squared(p, _kernel(st, cfg, mirror if cfg.kernel_space == "dual" else None), ctx)
        secs = time.perf_counter() - start if cfg.record_time else None
        sc = None if np.isnan(st.last_scale) else st.last_scale
        trace.append(TraceRow(st.iteration, secs, ed, mk, sc))

    snapshot(state)
    for t in range(cfg.T):
        try:
            state = step(state, cfg, target, ctx)
        except SamplerError:
            raise
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise SamplerError(f"{type(exc).__name__}: {exc}", t) from exc
        if state.iteration in record:
            snapshot(state)
    return state.particles, trace


__all__ = [
    "SamplerError",
    "StepSizeSchedule",
    "SamplerConfig",
    "SamplerState",
    "ParticleSet",
    "mirror_for",
    "step_msvgd",
    "step_svmd",
    "step_svng",
    "step_svgd",
    "svgd_direction",
    "step_mirror_langevin",
    "step_mirror_mala",
    "mirror_langevin_sample",
    "initial_state",
    "init_dual",
    "run",
    "trace_iterations",
]
