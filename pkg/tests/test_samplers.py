import numpy as np
import pytest

from mirrorstein.geometry import entropic_simplex_map
from mirrorstein.kernels import ScalarKernel
from mirrorstein.metrics import energy_distance
from mirrorstein.particles import ParticleSet
from mirrorstein.samplers import (
    SamplerConfig,
    SamplerError,
    StepSizeSchedule,
    initial_state,
    mirror_langevin_sample,
    run,
    step_mirror_mala,
    svgd_direction,
    trace_iterations,
)
from mirrorstein.targets import (
    bayesian_logistic_regression,
    benchmark_sparse_dirichlet,
    quadratic_simplex_target,
    random_spd_matrix,
    selective_density_2d,
    sparse_dirichlet_posterior,
    synthetic_logistic_data,
)


def test_rmsprop_first_step_frozen():
    sched = StepSizeSchedule("rmsprop", 0.1)
    g = np.array([[2.0, -1.0]])
    delta, acc, scale = sched.apply(g, np.zeros_like(g))
    np.testing.assert_allclose(acc, 0.1 * g**2)
    np.testing.assert_allclose(scale, 0.1 / (np.sqrt(0.1 * g**2) + 1e-8))
    np.testing.assert_allclose(delta, scale * g)


def test_fixed_step():
    delta, acc, scale = StepSizeSchedule("fixed", 0.5).apply(np.ones((2, 2)), np.zeros((2, 2)))
    np.testing.assert_allclose(delta, 0.5)
    np.testing.assert_allclose(acc, 0.0)


@pytest.mark.parametrize(
    "kwargs, field",
    [
        ({"algorithm": "hmc"}, "algorithm"),
        ({"kernel": "rbf2"}, "kernel"),
        ({"tau": 1.5}, "tau"),
        ({"n": 0}, "n"),
        ({"kernel_space": "dual", "algorithm": "svmd"}, "kernel_space"),
        ({"metric": "hessian"}, "metric"),
    ],
)
def test_config_validation_names_field(kwargs, field):
    with pytest.raises(ValueError, match=f"^{field}"):
        SamplerConfig(**kwargs)


def test_trace_iterations():
    assert trace_iterations(25, 10) == [0, 10, 20, 25]
    assert trace_iterations(20, 10) == [0, 10, 20]
    assert len(trace_iterations(500, 10)) == 51


def test_svgd_single_particle_is_gradient_ascent():
    theta = np.array([[0.3, -0.2]])
    score = np.array([[1.0, 2.0]])
    np.testing.assert_allclose(svgd_direction(theta, score, ScalarKernel("imq", 1.0)), score)


def test_incompatible_algorithm_rejected():
    data = synthetic_logistic_data(50, 3, 5, 5, np.random.default_rng(0))
    lr = bayesian_logistic_regression(data.X_train, data.y_train)
    with pytest.raises(ValueError):
        run(SamplerConfig("msvgd", T=1), lr)
    with pytest.raises(ValueError):
        run(SamplerConfig("svgd", T=1), benchmark_sparse_dirichlet(3))


@pytest.mark.parametrize("alg", ["msvgd", "svmd", "projected_svgd"])
def test_constrained_samplers_stay_inside_and_improve(alg):
    t = benchmark_sparse_dirichlet(4)
    ref = t.sample(500, np.random.default_rng(9))
    rate = 0.01 if alg == "projected_svgd" else 0.1
    cfg = SamplerConfig(alg, n=30, T=100, step=StepSizeSchedule("rmsprop", rate), cadence=50)
    ps, trace = run(cfg, t, ref)
    assert np.all(t.domain.contains(ps.theta))
    ed = trace.column("energy_distance")
    assert len(trace) == 3
    if alg != "projected_svgd":
        assert ed[-1] < 0.5 * ed[0]


def test_msvgd_dual_kernel_runs():
    t = benchmark_sparse_dirichlet(3)
    cfg = SamplerConfig("msvgd", kernel_space="dual", n=20, T=30, step=StepSizeSchedule("rmsprop", 0.1))
    ps, _ = run(cfg, t)
    assert np.all(np.isfinite(ps.eta))


def test_selective_orthant_run():
    t = selective_density_2d()
    ps, trace = run(SamplerConfig("svmd", n=20, T=50, step=StepSizeSchedule("rmsprop", 0.1)), t)
    assert np.all(ps.theta > 0)


def test_svng_and_svgd_on_logistic():
    data = synthetic_logistic_data(300, 4, 50, 50, np.random.default_rng(1))
    t = bayesian_logistic_regression(data.X_train, data.y_train)
    for alg in ("svgd", "svng"):
        cfg = SamplerConfig(alg, n=10, T=40, minibatch=64, step=StepSizeSchedule("fixed", 0.01))
        ps, _ = run(cfg, t)
        assert ps.theta.shape == (10, 4)
        assert np.all(np.isfinite(ps.theta))


def test_run_is_deterministic():
    t = benchmark_sparse_dirichlet(3)
    cfg = SamplerConfig("svmd", n=15, T=20, seed=3, step=StepSizeSchedule("rmsprop", 0.1), record_mksd=False)
    a, ta = run(cfg, t)
    b, tb = run(cfg, t)
    np.testing.assert_array_equal(a.eta, b.eta)
    assert ta.rows == tb.rows


def test_mksd_recorded_for_mirrored():
    t = quadratic_simplex_target(random_spd_matrix(3, np.random.default_rng(0)), 0.1)
    cfg = SamplerConfig("msvgd", n=10, T=20, step=StepSizeSchedule("fixed", 1e-3), record_mksd=True)
    _, trace = run(cfg, t)
    assert np.all(trace.column("mksd2") >= 0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergent_step_raises_sampler_error():
    t = benchmark_sparse_dirichlet(3)
    cfg = SamplerConfig("msvgd", n=10, T=50, step=StepSizeSchedule("fixed", 1e308))
    with pytest.raises(SamplerError) as info:
        run(cfg, t)
    assert info.value.iteration is not None


def test_frozen_bandwidth_is_stored():
    cfg = SamplerConfig("msvgd", n=10, freeze_bandwidth=True)
    st = initial_state(cfg, benchmark_sparse_dirichlet(3))
    assert st.bandwidth is not None and st.bandwidth > 0


def test_mirror_mala_matches_dirichlet_mean():
    t = sparse_dirichlet_posterior([2.0, 3.0, 4.0], [0, 0, 0])
    x = mirror_langevin_sample(t, 2000, np.random.default_rng(0), step=0.05, burn_in=300, thin=5, chains=200)
    exact = t.sample(2000, np.random.default_rng(1))
    assert energy_distance(x, exact) < 5e-3
    np.testing.assert_allclose(x.mean(axis=0), t.mean, atol=0.01)


def test_mala_step_preserves_shape_and_domain():
    t = sparse_dirichlet_posterior([0.5, 0.5, 2.0], [0, 0, 0])
    m = entropic_simplex_map(2)
    eta = np.zeros((50, 2))
    new, acc = step_mirror_mala(eta, m, t, 0.1, np.random.default_rng(0))
    assert new.shape == eta.shape and acc.dtype == bool
    assert np.all(np.isfinite(new))


def test_particle_set_validation():
    m = entropic_simplex_map(2)
    ps = ParticleSet.from_primal(np.array([[0.2, 0.3]]), m)
    np.testing.assert_allclose(ps.dual(m), m.grad(ps.theta))
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((2, 2)), np.zeros((3, 2)))


def _dual_log_density(t, m, eta):
    return float(t.log_density(m.grad_conj(eta)) - m.log_det_hess_from_dual(eta))


def test_single_particle_msvgd_step_is_dual_gradient_ascent():
    from mirrorstein.checks import fd_gradient

    t = benchmark_sparse_dirichlet(3)
    m = entropic_simplex_map(3)
    cfg = SamplerConfig("msvgd", n=1, T=1, seed=4, step=StepSizeSchedule("fixed", 1e-3))
    st0 = initial_state(cfg, t)
    eta0 = st0.particles.eta[0]
    ps, _ = run(cfg, t, state=st0)
    expect = eta0 + 1e-3 * fd_gradient(lambda e: _dual_log_density(t, m, e), eta0)
    np.testing.assert_allclose(ps.eta[0], expect, rtol=1e-7)


def test_single_particle_svmd_step():
    t = sparse_dirichlet_posterior([2.0, 3.0, 4.0, 5.0], [0, 0, 0, 0])
    m = entropic_simplex_map(3)
    cfg = SamplerConfig("svmd", n=1, T=1, seed=1, step=StepSizeSchedule("fixed", 1e-2))
    st0 = initial_state(cfg, t)
    th = st0.particles.theta
    ps, _ = run(cfg, t, state=st0)
    expect = st0.particles.eta + 1e-2 * (t.grad_log_density(th) - m.grad_log_det_hess(th))
    np.testing.assert_allclose(ps.eta, expect, rtol=1e-12)


@pytest.mark.parametrize("alg", ["msvgd", "svmd"])
def test_zero_step_is_fixed_point(alg):
    t = benchmark_sparse_dirichlet(3)
    cfg = SamplerConfig(alg, n=6, T=3, step=StepSizeSchedule("fixed", 0.0))
    st0 = initial_state(cfg, t)
    eta0 = st0.particles.eta.copy()
    ps, _ = run(cfg, t, state=st0)
    np.testing.assert_array_equal(ps.eta, eta0)


def test_zero_horizon_returns_initialisation():
    t = benchmark_sparse_dirichlet(3)
    cfg = SamplerConfig("msvgd", n=6, T=0, seed=2)
    ps, trace = run(cfg, t)
    np.testing.assert_array_equal(ps.eta, initial_state(cfg, t).particles.eta)
    assert len(trace) == 1


@pytest.mark.parametrize("alg", ["msvgd", "svmd"])
def test_mirrored_particles_interior_after_500_steps(alg):
    t = sparse_dirichlet_posterior(np.full(4, 0.1), np.zeros(4))
    cfg = SamplerConfig(alg, n=20, T=500, cadence=500, step=StepSizeSchedule("rmsprop", 0.1))
    ps, _ = run(cfg, t)
    assert np.all(np.isfinite(ps.eta))
    assert np.all(ps.theta > 0)


def test_svng_is_deterministic():
    data = synthetic_logistic_data(300, 4, 50, 50, np.random.default_rng(1))
    t = bayesian_logistic_regression(data.X_train, data.y_train)
    cfg = SamplerConfig("svng", n=8, T=15, minibatch=50, seed=5, step=StepSizeSchedule("fixed", 0.05))
    a, _ = run(cfg, t)
    b, _ = run(cfg, t)
    np.testing.assert_array_equal(a.theta, b.theta)


def test_langevin_zero_step_fixed_point():
    from mirrorstein.samplers import step_mirror_langevin

    t = sparse_dirichlet_posterior([2.0, 2.0, 2.0], [0, 0, 0])
    m = entropic_simplex_map(2)
    eta = np.array([[0.0, 0.0], [0.5, -1.0]])
    np.testing.assert_array_equal(step_mirror_langevin(eta, m, t, 0.0, np.random.default_rng(0)), eta)


def test_mirror_langevin_long_run_mean():
    t = sparse_dirichlet_posterior([5.0, 5.0, 5.0], [0, 0, 0])
    x = mirror_langevin_sample(t, 100_000, np.random.default_rng(3), step=0.05, burn_in=300, thin=10, chains=1000)
    assert x.shape == (100_000, 2)
    assert np.all(t.domain.contains(x))
    se = x.std(axis=0, ddof=1) / np.sqrt(x.shape[0])
    assert np.all(np.abs(x.mean(axis=0) - 1 / 3) <= 4 * se)
