"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line (shown in the terminal summary and
printed to stdout) and then asserts the criterion at its stated tolerance.
"""

import time

import numpy as np
import pytest

from mirrorstein.checks import finite_difference_checks, identity_checks, negative_control
from mirrorstein.geometry import entropic_simplex_map
from mirrorstein.harness import (
    best_rate,
    build_target,
    generate_ground_truth,
    parse_spec,
    run_cell,
    run_experiment,
)
from mirrorstein.kernels import ScalarKernel
from mirrorstein.oracles import brute_force_svmd_direction, primal_msvgd_direction
from mirrorstein.particles import ParticleSet
from mirrorstein.samplers import SamplerConfig, StepSizeSchedule, run
from mirrorstein.spectral import decompose, svmd_direction, svng_direction
from mirrorstein.stein import SteinOperatorContext, msvgd_direction
from mirrorstein.targets import (
    ConstantMetric,
    bayesian_logistic_regression,
    load_reference,
    quadratic_simplex_target,
    random_spd_matrix,
    sparse_dirichlet_posterior,
    synthetic_logistic_data,
)

from conftest import ACCEPTANCE_LINES, interior_simplex


def report(criterion, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - b) / max(np.linalg.norm(b), 1.0))


def strict_rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - b) / np.linalg.norm(b))


def test_criterion_1a_mirrored_stein_identity():
    t0 = time.perf_counter()
    res = identity_checks(seed=0, draws=100_000)
    secs = time.perf_counter() - t0
    worst = max(r.value / r.threshold for r in res)
    ok = all(r.passed for r in res) and len(res) == 10 and secs < 30
    report("1a", ok, f"10 mirrored identities, max |mean|/(4 SE) = {worst:.3f}, {secs:.1f}s")


def test_criterion_1b_langevin_negative_control():
    t0 = time.perf_counter()
    r = negative_control(seed=0, draws=100_000)
    secs = time.perf_counter() - t0
    report("1b", r.passed and secs < 30, f"Langevin g=1 at alpha=0.6: {r.detail}, {secs:.1f}s")


def test_criterion_2_single_particle_svmd_is_mirror_descent():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    errs = []
    for i in range(20):
        d = int(rng.integers(1, 5))
        m = entropic_simplex_map(d)
        t = sparse_dirichlet_posterior(rng.uniform(0.5, 4.0, d + 1), rng.integers(0, 5, d + 1))
        th = interior_simplex(rng, d, 1, conc=3.0)
        ps = ParticleSet.from_primal(th, m)
        k = ScalarKernel("imq" if i % 2 else "gaussian", float(rng.uniform(0.3, 2.0)))
        g = svmd_direction(ps, decompose(ps, k), m, t)
        errs.append(strict_rel(g, t.grad_log_density(th)))
    secs = time.perf_counter() - t0
    worst = max(errs)
    report("2", worst <= 1e-12 and secs < 1, f"max rel err vs grad log p = {worst:.3e} (tol 1e-12), {secs:.2f}s")


def test_criterion_3_single_particle_svng_is_natural_gradient():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    errs = []
    data = synthetic_logistic_data(200, 5, 10, 10, rng)
    target = bayesian_logistic_regression(data.X_train, data.y_train)
    for i in range(20):
        M = rng.normal(size=(5, 5))
        G = M @ M.T + 0.1 * np.eye(5)
        w = rng.normal(size=(1, 5))
        k = ScalarKernel("imq" if i % 2 else "gaussian", float(rng.uniform(0.3, 2.0)))
        move = svng_direction(w, decompose(w, k), ConstantMetric(G), target)
        errs.append(strict_rel(move[0], np.linalg.solve(G, target.grad_log_density(w[0]))))
    secs = time.perf_counter() - t0
    worst = max(errs)
    report("3", worst <= 1e-12 and secs < 1, f"max rel err vs G^-1 grad log p = {worst:.3e} (tol 1e-12), {secs:.2f}s")


def test_criterion_4_dual_msvgd_matches_primal_form():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    errs = []
    for i in range(10):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 6))
        m = entropic_simplex_map(d)
        t = sparse_dirichlet_posterior(rng.uniform(0.5, 4.0, d + 1), rng.integers(0, 5, d + 1))
        th = interior_simplex(rng, d, n, conc=3.0)
        k = ScalarKernel("imq" if i % 2 else "gaussian", float(rng.uniform(0.3, 2.0)))
        fast = msvgd_direction(ParticleSet.from_primal(th, m), k, SteinOperatorContext(t, m))
        errs.append(rel(fast, primal_msvgd_direction(th, k, m, t)))
    secs = time.perf_counter() - t0
    worst = max(errs)
    report("4", worst <= 1e-4 and secs < 10, f"max rel err = {worst:.3e} (tol 1e-4), {secs:.2f}s")


def test_criterion_5_svmd_matches_brute_force():
    t0 = time.perf_counter()
    errs = []
    for seed in range(10):
        rng = np.random.default_rng(500 + seed)
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 5))
        m = entropic_simplex_map(d)
        t = sparse_dirichlet_posterior(rng.uniform(0.5, 4.0, d + 1), rng.integers(0, 5, d + 1))
        th = interior_simplex(rng, d, n, conc=3.0)
        k = ScalarKernel("imq" if seed % 2 else "gaussian", float(rng.uniform(0.3, 2.0)))
        fast = svmd_direction(ParticleSet.from_primal(th, m), decompose(th, k, 1.0), m, t)
        errs.append(rel(fast, brute_force_svmd_direction(th, k, m, t)))
    secs = time.perf_counter() - t0
    worst = max(errs)
    report("5", worst <= 1e-4 and secs < 30, f"max rel err = {worst:.3e} (tol 1e-4), {secs:.2f}s")


def test_criterion_6_msvgd_descent():
    t0 = time.perf_counter()
    target = quadratic_simplex_target(random_spd_matrix(5, np.random.default_rng(0)), 0.01)
    cfg = SamplerConfig(
        "msvgd", n=50, T=200, seed=0, step=StepSizeSchedule("fixed", 1e-3), cadence=1, record_mksd=True
    )
    _, trace = run(cfg, target)
    mk = trace.column("mksd2")
    secs = time.perf_counter() - t0
    ratio = mk[200] / mk[0]
    tail = mk[20:]
    running_min = np.minimum.accumulate(tail)
    worst_rise = float(np.max(tail[1:] / running_min[:-1])) - 1.0
    ok = ratio < 0.5 and worst_rise <= 0.05 and secs < 60
    report("6", ok, f"MKSD2(200)/MKSD2(0) = {ratio:.4f} (< 0.5), worst rise after 20 = {worst_rise:+.4f} (<= 0.05), {secs:.1f}s")


def _sweep(tmp_path, experiment, gt=None):
    raw = {
        "experiment": experiment,
        "output_dir": str(tmp_path / experiment),
        "target": {"dimension": 5},
        "defaults": {"n": 50, "T": 500, "cadence": 50},
    }
    if gt:
        raw["ground_truth"] = gt
    return run_experiment(parse_spec(raw))


def test_criterion_7_figure_shape_d5(tmp_path):
    t0 = time.perf_counter()
    dres = _sweep(tmp_path, "dirichlet20")
    qres = _sweep(tmp_path, "quadratic20")
    secs = time.perf_counter() - t0

    def best(res, name):
        return best_rate(res, name, "final_energy_distance", maximize=False)

    dm, ds, dp = best(dres, "msvgd"), best(dres, "svmd"), best(dres, "projected_svgd")
    qm, qs = best(qres, "msvgd"), best(qres, "svmd")
    ok_dir = dm[1] < dp[1] and ds[1] < dp[1]
    ok_quad = qs[1] <= qm[1]
    detail = (
        f"dirichlet ED msvgd={dm[1]:.4g}@{dm[0]:g} svmd={ds[1]:.4g}@{ds[0]:g} "
        f"projected_svgd={dp[1]:.4g}@{dp[0]:g}; quadratic ED svmd={qs[1]:.6g}@{qs[0]:g} "
        f"msvgd={qm[1]:.6g}@{qm[0]:g}; {secs:.0f}s"
    )
    report("7", ok_dir and ok_quad and secs < 600, detail)


def test_criterion_8_svng_vs_svgd_logistic(tmp_path):
    t0 = time.perf_counter()
    spec = parse_spec(
        {
            "experiment": "logistic",
            "output_dir": str(tmp_path / "logistic"),
            "seeds": [0, 1, 2],
            "target": {"n_train": 2000, "dimension": 10},
            "defaults": {"n": 20, "T": 1000, "minibatch": 256, "cadence": 100},
        }
    )
    res = run_experiment(spec)
    secs = time.perf_counter() - t0

    def best_test(name):
        rate, _ = best_rate(res, name, "val_log_predictive", maximize=True)
        vals = [r.test_log_predictive for r in res if r.sampler == name and r.rate == rate]
        return rate, float(np.mean(vals))

    gr, gv = best_test("svgd")
    nr, nv = best_test("svng")
    detail = f"mean test log predictive svng={nv:.4f}@{nr:g} svgd={gv:.4f}@{gr:g}; {secs:.0f}s"
    report("8", nv >= gv and secs < 600, detail)


def test_criterion_9_finite_difference_suites():
    t0 = time.perf_counter()
    res = finite_difference_checks(0)
    secs = time.perf_counter() - t0
    failed = [r.name for r in res if not r.passed]
    report("9", not failed and secs < 60, f"{len(res) - len(failed)}/{len(res)} checks pass, {secs:.1f}s"
           + (f"; failed: {', '.join(failed)}" if failed else ""))


@pytest.mark.parametrize("experiment", ["dirichlet20", "logistic"])
def test_criterion_10_determinism(tmp_path, experiment):
    outputs = []
    for rep in ("a", "b"):
        raw = {
            "experiment": experiment,
            "output_dir": str(tmp_path / rep),
            "target": {"dimension": 4} if experiment == "dirichlet20" else {"n_train": 400},
            "defaults": {"n": 12, "T": 40, "cadence": 5},
        }
        if experiment == "dirichlet20":
            raw["ground_truth"] = {"size": 200}
        spec = parse_spec(raw)
        (tmp_path / rep).mkdir()
        sampler = spec.samplers[-1]
        reference = None
        if spec.ground_truth is not None:
            target, _ = build_target(spec)
            reference = load_reference(generate_ground_truth(spec, target), target.dim)
        cell = run_cell(spec, sampler, sampler.rates[0], 7, reference)
        outputs.append(cell.trace_path.read_bytes())
    report(f"10 ({experiment})", outputs[0] == outputs[1], "rerun with the same seed gives byte-identical trace CSV")
