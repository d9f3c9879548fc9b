"""Batch driver: scenario pipelines, validation gates, demos.

Subcommands
-----------
mesh-gen            generate a disk mesh and write the ASCII mesh file
forward             forward solve; writes mesh, field and trace CSVs
internal            forward + auxiliary solves + internal data CSVs
reconstruct         full reconstruction; writes everything + report.json
pipeline            alias of reconstruct (the complete experiment)
validate            run a gate suite: traces | convergence | identity | all
demo-nonradiating   boundary-invisibility demonstration of a gradient source

Exit codes: 0 success, 2 config/model validation failure, 3 hypothesis or
case violation, 4 solver failure.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import fem, forward, internal, reconstruct
from .config import (
    ConfigError,
    case_I1_scenario,
    case_II4_scenario,
    load_scenario,
    measured_gate_scenario,
    validation_medium,
)
from .fem import QuadratureCache
from .forward import ValidationError
from .internal import HypothesisViolationError, InternalDataSet
from .linsolve import SolverError
from .mesh import gen_disk_mesh, load_mesh, save_mesh
from .reconstruct import CaseLabel, CaseViolationError
from . import validate as gates

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CASE = 3
EXIT_SOLVER = 4


def _solver_report_dict(rep):
    return None if rep is None else asdict(rep)


def _build_mesh(cfg):
    if cfg.mesh.path is not None:
        return load_mesh(cfg.mesh.path)
    return gen_disk_mesh(cfg.mesh.radius, cfg.mesh.refinement)


def run_pipeline(cfg, workers=1, write_artifacts=True):
    """Execute forward -> auxiliary -> internal data -> noise -> vectorize ->
    classify -> reconstruct -> report.  Returns (report dict, out_dir)."""
    timings = {}
    t_all = time.perf_counter()

    t0 = time.perf_counter()
    mesh = _build_mesh(cfg)
    cache = QuadratureCache(mesh)
    cfg.medium.validate(cache.points.reshape(-1, 2))
    cfg.source.validate(mesh.radius)
    timings["mesh"] = time.perf_counter() - t0

    out = cfg.output_dir
    if write_artifacts:
        os.makedirs(out, exist_ok=True)

    t0 = time.perf_counter()
    E_true = forward.solve_impedance(cache, cfg.medium, source=cfg.source)
    traces = forward.extract_traces(cache, cfg.medium, E_true)
    timings["forward"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    F1 = forward.auxiliary_plane_wave(cache, cfg.medium, 1)
    F2 = forward.auxiliary_plane_wave(cache, cfg.medium, 2)
    timings["auxiliary"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    records = []
    if cfg.internal.mode == "measured":
        (Q1, Q2), records = internal.measured_Q(
            cache, cfg.medium, cfg.source, [F1, F2], cfg.internal.sweep,
            workers=workers,
        )
    else:
        Q1 = internal.scalar_Q_direct(cache, cfg.medium, cfg.source, E_true, F1)
        Q2 = internal.scalar_Q_direct(cache, cfg.medium, cfg.source, E_true, F2)
    timings["internal"] = time.perf_counter() - t0

    Q1n = internal.add_noise(Q1, cfg.noise.level, cfg.noise.seed)
    Q2n = internal.add_noise(Q2, cfg.noise.level, cfg.noise.seed + 1)
    Qvec, cond, flagged = internal.vectorize_Q(
        cache, Q1n, Q2n, F1, F2, cfg.internal.cond_threshold
    )
    data = InternalDataSet(
        Q1n, Q2n, Qvec, cond, flagged,
        mode=cfg.internal.mode, noise_level=cfg.noise.level,
        seed=cfg.noise.seed, records=records,
    )

    info = reconstruct.classify_case(cache, cfg.medium)
    label = info.label
    if cfg.case != "auto":
        want = {"I1": CaseLabel.UNIQUE_I1, "II4": CaseLabel.UNIQUE_II4}[cfg.case]
        if label is not want:
            raise CaseViolationError(
                f"configured case {cfg.case} but medium classifies as "
                f"{label.value}"
            )
    if not info.unique:
        raise CaseViolationError(
            f"medium classifies as {label.value}: the source is not uniquely "
            "determined (see demo-nonradiating for the constructive witness)"
        )

    t0 = time.perf_counter()
    J_true = fem.interpolate(mesh, cfg.source.sample)
    truth = {"J": J_true, "E": E_true}
    if label is CaseLabel.UNIQUE_I1:
        result = reconstruct.reconstruct_I1(cache, cfg.medium, data, truth)
    else:
        g = traces.circulations(cache)
        result = reconstruct.reconstruct_II4(cache, cfg.medium, data, g, truth)
    timings["reconstruct"] = time.perf_counter() - t0

    energy = None
    if info.a is not None:
        pts = cache.points.reshape(-1, 2)
        kappa = cfg.medium.kappa_at(pts).reshape(cache.points.shape[:2])
        E_true_v = fem.eval_at_quad(cache, E_true)
        Jv = forward._source_samples(cache, cfg.source)
        Q_clean = kappa[:, :, None] * E_true_v \
            + 1j * cfg.medium.omega * cfg.medium.gammas.J * Jv
        dQ = data.Qvec - Q_clean
        u = result.E_rec - E_true
        res_re, res_im = reconstruct.energy_identity_residual(
            cache, cfg.medium, u, dQ, None, info
        )
        energy = {"real": res_re, "imag": res_im}

    artifacts = {}
    if write_artifacts:
        paths = {
            "mesh": "mesh.txt",
            "E_true": "E_true.csv",
            "E_rec": "E_rec.csv",
            "J_true": "J_true.csv",
            "J_rec": "J_rec.csv",
            "traces": "traces.csv",
            "internal": "internal.csv",
        }
        save_mesh(mesh, os.path.join(out, paths["mesh"]))
        forward.export_field_csv(cache, E_true, os.path.join(out, paths["E_true"]))
        forward.export_field_csv(cache, result.E_rec, os.path.join(out, paths["E_rec"]))
        forward.export_field_csv(cache, J_true, os.path.join(out, paths["J_true"]))
        forward.export_field_csv(cache, result.J_rec, os.path.join(out, paths["J_rec"]))
        forward.export_trace_csv(cache, traces, os.path.join(out, paths["traces"]))
        internal.export_internal_csv(cache, data, os.path.join(out, paths["internal"]))
        if records:
            for j in (0, 1):
                name = f"sweep_j{j + 1}.csv"
                internal.export_sweep_csv(records, j, os.path.join(out, name))
                paths[f"sweep_j{j + 1}"] = name
        artifacts = paths

    timings["total"] = time.perf_counter() - t_all
    report = {
        "case": label.value,
        "gammas": {
            "eps": cfg.medium.gammas.eps,
            "sigma": cfg.medium.gammas.sigma,
            "J": cfg.medium.gammas.J,
        },
        "mesh": mesh.stats(),
        "internal_mode": cfg.internal.mode,
        "noise": {"level": cfg.noise.level, "seed": cfg.noise.seed},
        "errors": result.errors,
        "energy_residuals": energy,
        "diagnostics": {
            "conditioning": data.conditioning_stats(),
            "pointwise_J_discrepancy":
                result.diagnostics.get("pointwise_J_discrepancy"),
        },
        "solver": [
            _solver_report_dict(E_true.report),
            _solver_report_dict(F1.report),
            _solver_report_dict(F2.report),
        ] + [_solver_report_dict(r) for r in result.diagnostics.get("solver", [])],
        "artifacts": artifacts,
        "runtime": timings,
    }
    if write_artifacts:
        with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return report, out


def run_forward_stage(cfg):
    mesh = _build_mesh(cfg)
    cache = QuadratureCache(mesh)
    cfg.medium.validate(cache.points.reshape(-1, 2))
    cfg.source.validate(mesh.radius)
    os.makedirs(cfg.output_dir, exist_ok=True)
    E = forward.solve_impedance(cache, cfg.medium, source=cfg.source)
    traces = forward.extract_traces(cache, cfg.medium, E)
    save_mesh(mesh, os.path.join(cfg.output_dir, "mesh.txt"))
    forward.export_field_csv(cache, E, os.path.join(cfg.output_dir, "E_true.csv"))
    forward.export_trace_csv(cache, traces, os.path.join(cfg.output_dir, "traces.csv"))
    return E


def run_internal_stage(cfg, workers=1):
    mesh = _build_mesh(cfg)
    cache = QuadratureCache(mesh)
    cfg.medium.validate(cache.points.reshape(-1, 2))
    cfg.source.validate(mesh.radius)
    os.makedirs(cfg.output_dir, exist_ok=True)
    E = forward.solve_impedance(cache, cfg.medium, source=cfg.source)
    F1 = forward.auxiliary_plane_wave(cache, cfg.medium, 1)
    F2 = forward.auxiliary_plane_wave(cache, cfg.medium, 2)
    records = []
    if cfg.internal.mode == "measured":
        (Q1, Q2), records = internal.measured_Q(
            cache, cfg.medium, cfg.source, [F1, F2], cfg.internal.sweep,
            workers=workers,
        )
    else:
        Q1 = internal.scalar_Q_direct(cache, cfg.medium, cfg.source, E, F1)
        Q2 = internal.scalar_Q_direct(cache, cfg.medium, cfg.source, E, F2)
    Q1n = internal.add_noise(Q1, cfg.noise.level, cfg.noise.seed)
    Q2n = internal.add_noise(Q2, cfg.noise.level, cfg.noise.seed + 1)
    Qvec, cond, flagged = internal.vectorize_Q(
        cache, Q1n, Q2n, F1, F2, cfg.internal.cond_threshold
    )
    data = InternalDataSet(Q1n, Q2n, Qvec, cond, flagged,
                           mode=cfg.internal.mode,
                           noise_level=cfg.noise.level, seed=cfg.noise.seed,
                           records=records)
    internal.export_internal_csv(cache, data,
                                 os.path.join(cfg.output_dir, "internal.csv"))
    for j in range(2) if records else range(0):
        internal.export_sweep_csv(records, j,
                                  os.path.join(cfg.output_dir, f"sweep_j{j+1}.csv"))
    return data


# ---------------------------------------------------------------------------
# demos and gates
# ---------------------------------------------------------------------------

def demo_nonradiating(refinement=4, out_dir=None):
    """Forward solves with J and J + (i w eps - sig) grad(phi): identical
    boundary traces, interior fields differing by grad(phi)."""
    medium = validation_medium()
    from .config import validation_source

    source = validation_source()
    mesh = gen_disk_mesh(1.0, refinement)
    cache = QuadratureCache(mesh)
    ghost = reconstruct.nonradiating_source(mesh, medium, (0.1, 0.05), 0.35)
    E1 = forward.solve_impedance(cache, medium, source=source)
    E2 = forward.solve_impedance(
        cache, medium, source=forward.SumSource(source, ghost)
    )
    tr1 = forward.extract_traces(cache, medium, E1)
    tr2 = forward.extract_traces(cache, medium, E2)
    g_scale = np.abs(tr1.g).max()
    trace_dev = float(max(np.abs(tr2.g - tr1.g).max(),
                          np.abs(tr2.h - tr1.h).max()) / g_scale)
    diff = E2 - E1
    grad = ghost.grad_phi
    rel_field_dev = fem.relative_l2_error(cache, diff, grad)
    grad_norm = fem.l2_norm(cache, grad)
    result = {
        "trace_relative_deviation": trace_dev,
        "interior_shift_vs_grad_phi": rel_field_dev,
        "grad_phi_l2": grad_norm,
        "interior_shift_l2": fem.l2_norm(cache, diff),
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "nonradiating.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
    return result


def run_validate(which, refinement):
    results = {}
    if which in ("traces", "all"):
        results["traces"] = gates.trace_gate(level=refinement)
    if which in ("convergence", "all"):
        results["convergence"] = gates.convergence_gate()
    if which in ("identity", "all"):
        results["identity"] = gates.identity_gate(level=refinement)
    return results


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="scenario JSON path")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--refinement", type=int, help="mesh refinement override")
    p.add_argument("--seed", type=int, help="noise seed override")
    p.add_argument("--serial", action="store_true",
                   help="bit-reproducible serial reference mode")
    p.add_argument("--scenario", choices=["I1", "II4", "measured-gate"],
                   help="use a canned scenario instead of --config")


def _scenario_from_args(args):
    if args.config:
        cfg = load_scenario(args.config)
    elif args.scenario == "I1":
        cfg = case_I1_scenario()
    elif args.scenario == "II4":
        cfg = case_II4_scenario()
    elif args.scenario == "measured-gate":
        cfg = measured_gate_scenario()
    else:
        raise ConfigError("provide --config FILE or --scenario NAME")
    if args.refinement is not None:
        cfg.mesh.refinement = args.refinement
    if args.seed is not None:
        cfg.noise.seed = args.seed
    if args.out:
        cfg.output_dir = args.out
    return cfg.validate()


def make_parser():
    p = argparse.ArgumentParser(
        prog="acoustomax",
        description="acoustically modulated Maxwell source-reconstruction lab",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("mesh-gen", help="generate a disk mesh file")
    g.add_argument("--refinement", type=int, default=4)
    g.add_argument("--radius", type=float, default=1.0)
    g.add_argument("--out", required=True, help="mesh file path")

    for name in ("forward", "internal", "reconstruct", "pipeline"):
        _add_common(sub.add_parser(name, help=f"run the {name} stage"))

    v = sub.add_parser("validate", help="run validation gates")
    v.add_argument("suite", choices=["traces", "convergence", "identity", "all"])
    v.add_argument("--refinement", type=int, default=4)

    d = sub.add_parser("demo-nonradiating",
                       help="non-uniqueness witness: boundary-invisible source")
    d.add_argument("--refinement", type=int, default=4)
    d.add_argument("--out", help="output directory")
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        if args.command == "mesh-gen":
            mesh = gen_disk_mesh(args.radius, args.refinement)
            save_mesh(mesh, args.out)
            print(f"wrote {args.out}: {mesh.stats()}")
            return EXIT_OK

        if args.command in ("forward", "internal", "reconstruct", "pipeline"):
            cfg = _scenario_from_args(args)
            workers = 1 if args.serial else min(4, os.cpu_count() or 1)
            if args.command == "forward":
                run_forward_stage(cfg)
                print(f"forward artifacts in {cfg.output_dir}")
            elif args.command == "internal":
                data = run_internal_stage(cfg, workers=workers)
                stats = data.conditioning_stats()
                print(f"internal data in {cfg.output_dir} "
                      f"(flagged {100 * stats['flagged_fraction']:.2f}%)")
            else:
                report, out = run_pipeline(cfg, workers=workers)
                print(f"case {report['case']}; errors {report['errors']}; "
                      f"report in {out}/report.json")
            return EXIT_OK

        if args.command == "validate":
            results = run_validate(args.suite, args.refinement)
            ok = True
            for name, res in results.items():
                ok &= res["passed"]
                detail = {k: v for k, v in res.items() if k != "passed"}
                print(f"[{'PASS' if res['passed'] else 'FAIL'}] {name}: {detail}")
            return EXIT_OK if ok else 1

        if args.command == "demo-nonradiating":
            res = demo_nonradiating(args.refinement, args.out)
            for k, v in res.items():
                print(f"{k}: {v:.3e}")
            ok = (res["trace_relative_deviation"] <= 1e-8
                  and res["interior_shift_vs_grad_phi"] <= 1e-8)
            print("boundary-invisible:", "yes" if ok else "NO")
            return EXIT_OK if ok else 1

    except (ConfigError, ValidationError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (HypothesisViolationError, CaseViolationError) as exc:
        print(f"case/hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_CASE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
