"""Command-line front end: mesh generation, transient runs, equilibria,
and DDFV-vs-HFV comparison reports.

Every accepted time step appends one CSV row
``time,dt,newton_iters,min_N,min_P,entropy``; all floating output uses 17
significant digits so files round-trip losslessly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import driftdiff, mesh, solver

CSV_HEADER = "time,dt,newton_iters,min_N,min_P,entropy"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class RunConfig:
    """Parameters of one transient simulation (flags mirror the names)."""

    nd0: float = 0.1
    nd1: float = 1.0
    alpha0: float = -4.0
    lam: float = 0.05
    doping: float = 1.0
    scheme: str = "ddfv"
    mesh_source: str = "cartesian:16"
    dt_ini: float = 1.4e-3
    dt_max: float = 0.1
    t_end: float = 1.0
    eta: float = 1.5
    newton_res_tol: float = 1e-10
    newton_step_tol: float = 1e-8
    newton_max_iter: int = 50

    def case(self) -> driftdiff.CaseSpec:
        return driftdiff.pn_junction(self.nd0, self.nd1, self.alpha0, self.lam,
                                     doping_strength=self.doping)

    def newton(self) -> solver.NewtonConfig:
        return solver.NewtonConfig(res_tol=self.newton_res_tol,
                                   step_tol=self.newton_step_tol,
                                   max_iter=self.newton_max_iter)


def parse_mesh_source(source: str) -> mesh.PrimalMesh:
    """Build a mesh from a generator spec (``cartesian:16``, ``tri:8``,
    ``quad-distort:16:0.3:42``) or load it from a file path."""
    kind, _, rest = source.partition(":")
    try:
        if kind == "cartesian":
            nx, _, ny = rest.partition("x")
            return mesh.build_cartesian(int(nx), int(ny) if ny else int(nx))
        if kind == "tri":
            return mesh.build_triangular(int(rest))
        if kind == "quad-distort":
            n, amp, seed = rest.split(":")
            return mesh.distort_quads(mesh.build_cartesian(int(n), int(n)),
                                      float(amp), int(seed))
    except ValueError as exc:
        raise SystemExit(f"bad mesh spec '{source}': {exc}") from None
    try:
        return mesh.load_mesh(source)
    except OSError as exc:
        raise SystemExit(f"cannot open mesh '{source}': {exc}") from None
    except mesh.MeshFormatError as exc:
        raise SystemExit(f"cannot parse mesh '{source}': {exc}") from None


def write_csv(path: str, records: list[driftdiff.TimeSeriesRecord]) -> None:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join([
            _fmt(r.time), _fmt(r.dt), str(r.newton_iterations),
            _fmt(r.min_n), _fmt(r.min_p), _fmt(r.entropy),
        ]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def fit_entropy_decay(times, entropies, plateau_factor: float = 100.0):
    """Least-squares slope of log(entropy) vs time in the decay regime.

    The fit is restricted to values above ``plateau_factor`` times the
    final plateau and to computed steps (t > 0): the initial record
    carries an auxiliary potential, not a scheme state. Returns
    ``(slope, r_squared, n_points)`` or ``None`` when fewer than three
    points remain.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(entropies, dtype=float)
    cut = plateau_factor * max(e[-1], 1e-300)
    sel = (e > cut) & (t > 0.0)
    if sel.sum() < 3:
        return None
    tt, ll = t[sel], np.log(e[sel])
    design = np.vstack([tt, np.ones_like(tt)]).T
    coef, *_ = np.linalg.lstsq(design, ll, rcond=None)
    pred = design @ coef
    ss_res = float(np.sum((ll - pred) ** 2))
    ss_tot = float(np.sum((ll - ll.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2, int(sel.sum())


def _execute_run(cfg: RunConfig, scheme: str) -> driftdiff.DriftDiffusionRun:
    primal = parse_mesh_source(cfg.mesh_source)
    return driftdiff.run_drift_diffusion(
        cfg.case(), primal, scheme,
        t_end=cfg.t_end, dt_ini=cfg.dt_ini, dt_max=cfg.dt_max,
        eta=cfg.eta, newton_cfg=cfg.newton(),
    )


def _summary_dict(run: driftdiff.DriftDiffusionRun) -> dict:
    ent = [r.entropy for r in run.records]
    decay = fit_entropy_decay([r.time for r in run.records], ent)
    return {
        "scheme": run.framework,
        "accepted_steps": len(run.records) - 1,
        "total_newton_iterations": run.total_newton_iterations,
        "step_rejections": run.rejections,
        "final_entropy": ent[-1],
        "min_N": min(r.min_n for r in run.records),
        "min_P": min(r.min_p for r in run.records),
        "entropy_decay": (
            {"slope": decay[0], "r_squared": decay[1], "points": decay[2]}
            if decay else "insufficient data"
        ),
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_mesh(args) -> int:
    if args.generator == "cartesian":
        m = mesh.build_cartesian(args.n, args.ny if args.ny else args.n)
    elif args.generator == "tri":
        m = mesh.build_triangular(args.n)
    else:
        m = mesh.distort_quads(mesh.build_cartesian(args.n, args.n),
                               args.amp, args.seed)
    if args.device_tags:
        boundary = driftdiff.pn_junction(1.0, 1.0, 0.0, 1.0).boundary
        m = mesh.tag_boundary(m, boundary)
    report = mesh.validate(m)
    if not report.ok:
        print("generated mesh is invalid:", report.violations[0], file=sys.stderr)
        return 1
    mesh.save_mesh(m, args.output)
    print(f"wrote {m.n_cells} cells, {m.n_edges} edges to {args.output}")
    return 0


def cmd_run(args) -> int:
    cfg = args.run_config
    try:
        run = _execute_run(cfg, cfg.scheme)
    except (solver.StepFloorReached, solver.NewtonFailure,
            mesh.EdgeStraddlesSegments, driftdiff.NonPositiveInitialData) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    write_csv(args.out, run.records)
    summary = _summary_dict(run)
    if args.summary:
        with open(args.summary, "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    for key in ("scheme", "accepted_steps", "total_newton_iterations",
                "step_rejections", "final_entropy"):
        print(f"{key} = {summary[key]}")
    return 0


def cmd_equilibrium(args) -> int:
    cfg = args.run_config
    primal = parse_mesh_source(cfg.mesh_source)
    case = cfg.case()
    try:
        tagged = mesh.tag_boundary(primal, case.boundary)
        disc = driftdiff.discretise(tagged, cfg.scheme, eta=cfg.eta)
        problem = driftdiff.TransientProblem(case, disc)
        eq = driftdiff.solve_poisson_boltzmann(case, disc, problem.dcase)
    except (solver.NewtonFailure, mesh.EdgeStraddlesSegments) as exc:
        print(f"equilibrium solve failed: {exc}", file=sys.stderr)
        return 1
    lines = [
        "# fvdd-equilibrium 1",
        f"# scheme {cfg.scheme}",
        "# columns: x y phi N P",
    ]
    for i in range(disc.n):
        x, y = disc.mesh.unknown_points[i]
        lines.append(" ".join(_fmt(v) for v in (x, y, eq.phi[i], eq.N[i], eq.P[i])))
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    phi0 = problem.initial_potential(problem.dcase.N0, problem.dcase.P0)
    state0 = driftdiff.SystemState(cfg.scheme, problem.dcase.N0,
                                   problem.dcase.P0, phi0)
    e0 = driftdiff.relative_entropy(disc, state0, eq, case)
    print(f"unknowns = {disc.n}")
    print(f"initial_entropy = {_fmt(e0)}")
    return 0


def cmd_compare(args) -> int:
    cfg = args.run_config
    threads = int(os.environ.get("FVDD_THREADS", "2"))
    try:
        if threads >= 2:
            with ThreadPoolExecutor(max_workers=2) as pool:
                futures = {s: pool.submit(_execute_run, cfg, s)
                           for s in ("ddfv", "hfv")}
                runs = {s: f.result() for s, f in futures.items()}
        else:
            runs = {s: _execute_run(cfg, s) for s in ("ddfv", "hfv")}
    except (solver.StepFloorReached, solver.NewtonFailure,
            mesh.EdgeStraddlesSegments, driftdiff.NonPositiveInitialData) as exc:
        print(f"comparison failed: {exc}", file=sys.stderr)
        return 1

    report = {}
    slopes = {}
    for scheme, run in runs.items():
        write_csv(f"{args.out_prefix}_{scheme}.csv", run.records)
        report[scheme] = _summary_dict(run)
        decay = report[scheme]["entropy_decay"]
        slopes[scheme] = decay["slope"] if isinstance(decay, dict) else None
    if None not in slopes.values():
        d, h = slopes["ddfv"], slopes["hfv"]
        report["slope_relative_difference"] = abs(d - h) / min(abs(d), abs(h))
    else:
        report["slope_relative_difference"] = "insufficient data"
    with open(f"{args.out_prefix}_report.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    for scheme in ("ddfv", "hfv"):
        print(f"{scheme}: total_newton_iterations = "
              f"{report[scheme]['total_newton_iterations']}, "
            f"entropy_decay = {report[scheme]['entropy_decay']}")
    print(f"slope_relative_difference = {report['slope_relative_difference']}")
    return 0


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def _add_case_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nd0", type=float, help="electron density at the bottom contact")
    p.add_argument("--nd1", type=float, help="electron density at the top contact")
    p.add_argument("--alpha0", type=float, help="mass-action constant log(N^D P^D)")
    p.add_argument("--lam", type=float, help="rescaled Debye length")
    p.add_argument("--doping", type=float,
                   help="doping magnitude (+/- per region, 0 for intrinsic)")
    p.add_argument("--mesh", dest="mesh_source",
                   help="generator spec (cartesian:16, tri:8, quad-distort:16:0.3:42) or file")
    p.add_argument("--dt-ini", dest="dt_ini", type=float)
    p.add_argument("--dt-max", dest="dt_max", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--eta", type=float, help="HFV stabilisation parameter")
    p.add_argument("--newton-res-tol", dest="newton_res_tol", type=float)
    p.add_argument("--newton-step-tol", dest="newton_step_tol", type=float)
    p.add_argument("--newton-max-iter", dest="newton_max_iter", type=int)
    p.add_argument("--config", help="key=value file with defaults for any flag")


def _load_config_file(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise SystemExit(f"{path}:{ln}: expected key=value")
            key, _, val = body.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _build_run_config(args) -> RunConfig:
    cfg = RunConfig()
    file_values = _load_config_file(args.config) if args.config else {}
    for name in vars(cfg):
        current = getattr(cfg, name)
        if name in file_values:
            caster = type(current) if not isinstance(current, str) else str
            setattr(cfg, name, caster(file_values[name]))
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            setattr(cfg, name, cli_val)
    return cfg


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fvdd",
        description="Structure-preserving DDFV/HFV drift-diffusion solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("mesh", help="generate a mesh file")
    pm.add_argument("generator", choices=["cartesian", "tri", "quad-distort"])
    pm.add_argument("--n", type=int, required=True)
    pm.add_argument("--ny", type=int, help="cartesian only: cells in y")
    pm.add_argument("--amp", type=float, default=0.3)
    pm.add_argument("--seed", type=int, default=42)
    pm.add_argument("--device-tags", action="store_true",
                    help="tag the PN-diode contacts instead of all-Neumann")
    pm.add_argument("-o", "--output", required=True)
    pm.set_defaults(func=cmd_mesh)

    pr = sub.add_parser("run", help="transient simulation with one scheme")
    pr.add_argument("--scheme", choices=["ddfv", "hfv"])
    _add_case_flags(pr)
    pr.add_argument("--out", required=True, help="CSV output path")
    pr.add_argument("--summary", help="JSON summary output path")
    pr.set_defaults(func=cmd_run)

    pe = sub.add_parser("equilibrium", help="solve the thermal equilibrium")
    pe.add_argument("--scheme", choices=["ddfv", "hfv"])
    _add_case_flags(pe)
    pe.add_argument("--out", required=True, help="field dump output path")
    pe.set_defaults(func=cmd_equilibrium)

    pc = sub.add_parser("compare", help="run both schemes and report")
    _add_case_flags(pc)
    pc.add_argument("--out-prefix", required=True,
                    help="writes <prefix>_ddfv.csv, <prefix>_hfv.csv, <prefix>_report.json")
    pc.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.func in (cmd_run, cmd_equilibrium, cmd_compare):
        args.run_config = _build_run_config(args)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
