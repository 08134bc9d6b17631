"""Acceptance suite.

Each test prints one line per criterion (run ``pytest -s`` to see them all;
they also appear in captured output on failure). The long transient runs
are shared through module-scoped fixtures.
"""

import numpy as np
import pytest

from fvdd import cli, ddfv, driftdiff, hfv, mesh, solver

SCHEMES = ("ddfv", "hfv")

POSITIVITY = dict(nd0=0.1, nd1=1.0, alpha0=-4.0, lam=0.05)
LONGTIME = dict(nd0=np.e, nd1=1.0, alpha0=0.0)
ENTROPY_T_END = 20.0


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f"  [{detail}]" if detail else ""
    print(f"ACCEPTANCE {name}: {status}{suffix}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def positivity_runs():
    case = driftdiff.pn_junction(**POSITIVITY)
    pm = mesh.distort_quads(mesh.build_cartesian(16, 16), 0.3, 42)
    return {s: driftdiff.run_drift_diffusion(
        case, pm, s, t_end=1.0, dt_ini=1.4e-3, dt_max=0.1)
        for s in SCHEMES}


@pytest.fixture(scope="module")
def entropy_runs():
    pm = mesh.build_triangular(16)
    out = {}
    for lam in (1.0, 0.01):
        case = driftdiff.pn_junction(lam=lam, **LONGTIME)
        for s in SCHEMES:
            out[lam, s] = driftdiff.run_drift_diffusion(
                case, pm, s, t_end=ENTROPY_T_END, dt_ini=0.1, dt_max=0.1)
    return out


@pytest.mark.parametrize("scheme", SCHEMES)
def test_positivity_experiment(positivity_runs, scheme):
    run = positivity_runs[scheme]
    min_n = min(r.min_n for r in run.records)
    min_p = min(r.min_p for r in run.records)
    ok = min_n > 0.0 and min_p > 0.0 and run.rejections == 0
    report(f"positivity[{scheme}]", ok,
           f"min N {min_n:.3e}, min P {min_p:.3e}, "
           f"{run.rejections} rejections over {len(run.records) - 1} steps")


@pytest.mark.parametrize("scheme", SCHEMES)
def test_newton_cost_decay(positivity_runs, scheme):
    run = positivity_runs[scheme]
    steps = run.records[1:]
    first = steps[0].newton_iterations
    late = [r.newton_iterations for r in steps if r.time >= 0.1]
    ok = bool(late) and max(late) <= first
    report(f"newton-cost-decay[{scheme}]", ok,
           f"first step {first} iterations, last decade max {max(late)}, "
           f"total {run.total_newton_iterations}")


@pytest.mark.parametrize("lam", [1.0, 0.01])
def test_entropy_exponential_decay(entropy_runs, lam):
    slopes = {}
    for scheme in SCHEMES:
        run = entropy_runs[lam, scheme]
        ent = np.array([r.entropy for r in run.records])
        times = np.array([r.time for r in run.records])
        nonincreasing = bool(np.all(np.diff(ent) <= 1e-14))
        fit = cli.fit_entropy_decay(times, ent)
        assert fit is not None
        slope, r2, npts = fit
        slopes[scheme] = slope
        ok = nonincreasing and r2 >= 0.98
        report(f"entropy-decay[lam={lam},{scheme}]", ok,
               f"nonincreasing={nonincreasing}, slope {slope:.3f}, "
               f"R^2 {r2:.4f} over {npts} points")
    d, h = slopes["ddfv"], slopes["hfv"]
    rel = abs(d - h) / min(abs(d), abs(h))
    report(f"entropy-slope-agreement[lam={lam}]", rel <= 0.20,
           f"ddfv {d:.3f} vs hfv {h:.3f}, relative difference {rel:.3f}")


@pytest.mark.parametrize("scheme", SCHEMES)
def test_stiff_regime_shape(entropy_runs, scheme):
    run = entropy_runs[0.01, scheme]
    ent = np.array([r.entropy for r in run.records])
    times = np.array([r.time for r in run.records])
    i10 = int(np.searchsorted(times, 0.1 * times[-1]))
    early = np.log(ent[0]) - np.log(ent[min(i10, len(ent) - 1)])
    total = np.log(ent[0]) - np.log(ent[-1])
    frac = early / total
    report(f"stiff-regime-shape[{scheme}]", frac > 0.5,
           f"{100 * frac:.1f}% of the log-entropy drop in the first 10% of time")


@pytest.mark.parametrize("scheme", SCHEMES)
def test_equilibrium_fixed_point(scheme):
    case = driftdiff.pn_junction(lam=1.0, **LONGTIME)
    tagged = mesh.tag_boundary(mesh.build_triangular(16), case.boundary)
    disc = driftdiff.discretise(tagged, scheme)
    problem = driftdiff.TransientProblem(case, disc)
    eq = driftdiff.solve_poisson_boltzmann(case, disc, problem.dcase)
    xeq = problem.pack(eq.N, eq.P, eq.phi)
    residual, jacobian = problem.step_factory(xeq, 0.1)
    cfg = solver.NewtonConfig()
    solve = problem.condensed_solve() if scheme == "hfv" else solver.solve_linear
    xn, iters = solver.newton(residual, jacobian, xeq, cfg,
                              positive_mask=problem.positive_mask, solve=solve)
    change = float(np.abs(xn - xeq).max())
    entropy = driftdiff.relative_entropy(disc, problem.state(xn), eq, case)
    ok = change <= 10.0 * cfg.step_tol and entropy <= 1e-10
    report(f"equilibrium-fixed-point[{scheme}]", ok,
           f"max change {change:.3e} in {iters} iterations, "
           f"entropy {entropy:.3e}")


def test_operator_exactness_suite():
    meshes = {
        "cartesian": mesh.build_cartesian(5, 4),
        "distorted-quad": mesh.distort_quads(mesh.build_cartesian(6, 6), 0.3, 42),
        "triangular": mesh.build_triangular(5),
    }
    rng = np.random.default_rng(99)
    worst_grad = 0.0
    worst_part = 0.0
    exact_trilinear = True
    for pm in meshes.values():
        dm = ddfv.build_ddfv(pm)
        hm = hfv.build_hybrid(pm)
        for a, b, c in ((2.0, 3.0, -0.5), (-1.2, 0.4, 2.0)):
            u = dm.interpolate(lambda x, y: a * x + b * y + c)
            err = np.abs(ddfv.gradient(dm, u) - np.array([a, b])).max()
            worst_grad = max(worst_grad, err)
            uh = hm.interpolate(lambda x, y: a * x + b * y + c)
            err = max(np.abs(g - np.array([a, b])).max()
                      for g in hfv.gradient(hm, uh))
            worst_grad = max(worst_grad, err)
        area = pm.cell_areas.sum()
        worst_part = max(
            worst_part,
            abs(area - 1.0),
            abs(dm.dual_measures.sum() - 1.0),
            abs(dm.diamond_areas.sum() - 1.0),
            abs(sum(q.sum() for q in hm.pyramid_measures) - 1.0),
        )
        w = rng.normal(size=dm.n_unknowns)
        v = rng.normal(size=dm.n_unknowns)
        lhs = ddfv.trilinear(dm, np.ones(dm.n_unknowns), w, v)
        rhs = ddfv.diamond_inner(dm, ddfv.gradient(dm, w), ddfv.gradient(dm, v))
        exact_trilinear &= lhs == rhs
        wh = rng.normal(size=hm.n_unknowns)
        vh = rng.normal(size=hm.n_unknowns)
        exact_trilinear &= hfv.trilinear(hm, np.ones(hm.n_unknowns), wh, vh) \
            == hfv.bilinear_a(hm, wh, vh)
    ok = worst_grad <= 1e-12 and worst_part <= 1e-12 and exact_trilinear
    report("operator-exactness", ok,
           f"max affine gradient error {worst_grad:.2e}, "
           f"max partition defect {worst_part:.2e}, "
           f"trilinear/bilinear identity exact: {exact_trilinear}")


@pytest.mark.parametrize("scheme", SCHEMES)
def test_jacobian_finite_difference_check(scheme):
    case = driftdiff.pn_junction(**POSITIVITY)
    pm = mesh.distort_quads(mesh.build_cartesian(4, 4), 0.3, 42)
    tagged = mesh.tag_boundary(pm, case.boundary)
    disc = driftdiff.discretise(tagged, scheme)
    problem = driftdiff.TransientProblem(case, disc)
    rng = np.random.default_rng(5)
    nf = problem.nf
    prev = problem.initial_state()
    worst = 0.0
    for state in range(10):
        x = np.concatenate([rng.uniform(0.5, 2.0, nf),
                            rng.uniform(0.5, 2.0, nf),
                            rng.uniform(-1.0, 1.0, nf)])
        jac = problem.jacobian(x, 0.02)
        for _ in range(3):
            v = rng.normal(size=3 * nf)
            v /= np.abs(v).max()
            h = 1e-7
            fd = (problem.residual(x + h * v, prev, 0.02)
                  - problem.residual(x - h * v, prev, 0.02)) / (2 * h)
            an = jac @ v
            worst = max(worst, float(np.abs(fd - an).max()
                                     / max(1.0, np.abs(an).max())))
    report(f"jacobian-fd[{scheme}]", worst <= 1e-5,
           f"worst relative deviation {worst:.2e} over 10 states")


def test_static_condensation_matches_full_solve():
    rng = np.random.default_rng(17)
    import scipy.sparse as sps
    worst = 0.0
    for trial in range(5):
        nb, bs, ne = 6, 3, 14
        nc = nb * bs
        n = nc + ne
        dense = rng.normal(size=(n, n))
        dense = dense + dense.T + 2.0 * n * np.eye(n)
        blocks = [np.arange(i * bs, (i + 1) * bs) for i in range(nb)]
        for bi in blocks:
            for bj in blocks:
                if bi[0] != bj[0]:
                    dense[np.ix_(bi, bj)] = 0.0
        rhs = rng.normal(size=n)
        cs = hfv.condense(sps.csr_matrix(dense), rhs, blocks,
                          np.arange(nc, n))
        x = cs.recover(solver.solve_linear(
            solver.SparseSystem(cs.matrix, cs.rhs)))
        ref = np.linalg.solve(dense, rhs)
        worst = max(worst, float(np.abs(x - ref).max()))
    # and on a genuine transient Jacobian
    case = driftdiff.pn_junction(**POSITIVITY)
    tagged = mesh.tag_boundary(mesh.build_cartesian(4, 4), case.boundary)
    problem = driftdiff.TransientProblem(
        case, driftdiff.discretise(tagged, "hfv"))
    nf = problem.nf
    x = np.concatenate([rng.uniform(0.5, 2.0, nf),
                        rng.uniform(0.5, 2.0, nf),
                        rng.uniform(-1.0, 1.0, nf)])
    system = solver.SparseSystem(problem.jacobian(x, 0.05),
                                 rng.normal(size=3 * nf))
    direct = solver.solve_linear(system)
    condensed = problem.condensed_solve()(system)
    worst = max(worst, float(np.abs(direct - condensed).max()))
    report("static-condensation", worst <= 1e-10,
           f"max deviation from full solve {worst:.2e}")
