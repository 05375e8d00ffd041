"""Command line runner: soh coeffs|macro|kinetic|limit|check.

--threads pins the BLAS/OpenMP pools, which only works before numpy first
loads; the pipeline modules are therefore imported inside the handlers, and
the package __init__ stays import-free. Every run directory receives its
manifest before any output; outputs land write-temp-rename and are indexed
with their hashes, so an interrupted run never lists a partial file. Errors
leave a machine-readable error.json and exit 2 (configuration), 3
(numerics), or 4 (invariant violation).

Environment overrides use the SOH_ prefix documented in config.
"""

import argparse
import json
import os
import sys

from .config import load_config
from .errors import ConfigError, InvariantViolation, NumericError, RangeError

__all__ = ["main"]

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

_COEFF_NAMES = ("kappa", "c1", "c2", "c3", "c4", "k0", "gamma", "lambda0", "lambda_tilde")

_SERIES_COLUMNS = {
    "t": "simulation time",
    "mass": "total mass (integral of rho over the box)",
    "energy": "well-posedness energy functional E at output.sobolev_s",
    "dissipation": "dissipation functional D",
    "div_norm": "L2 norm of div v",
    "max_w": "largest pole gauge over the grid (stereographic W, or its Omega_f analogue)",
}

_STUDY_COLUMNS = {
    "eps": "kinetic scale separation epsilon",
    "sup_norm_vR": "sup over output times of the H^s norm of the velocity remainder",
    "sup_norm_fR": "sup over output times of the weighted norm of the kinetic remainder",
    "err_rho": "sup over output times of the L2 density moment error",
    "err_j": "sup over output times of the L2 current moment error",
}

_EPS_SERIES_COLUMNS = {
    "t": "simulation time",
    "norm_vR": "H^s norm of the velocity remainder",
    "norm_fR": "weighted norm of the kinetic remainder",
    "err_rho": "L2 density moment error against the reference",
    "err_j": "L2 current moment error against the reference",
    "phi0": "largest mass-plus-current moment of f_R (monitored side constraint)",
    "energy": "remainder energy functional",
}

_DIAG_COLUMNS = {
    "t": "snapshot time",
    "energy": "energy functional E recomputed from the snapshot",
    "dissipation": "dissipation functional D from the run series",
    "mass": "total mass recomputed from the snapshot",
    "divergence": "L2 norm of div v recomputed from the snapshot",
    "defect_scalar": "L2 norm of the mass collision-invariant defect (macro; nan where undefined)",
    "defect_vector": "L2 norm of the GCI collision-invariant defect (macro; nan where undefined)",
}

_MASS_DRIFT_TOL = 1e-9
_DIV_TOL = 1e-10


def _model_params(config):
    from .coefficients import ModelParams

    return ModelParams(
        a=config["params.a"],
        b=config["params.b"],
        nu=config["params.nu"],
        d_noise=config["params.d_noise"],
        lam=config["params.lam"],
        sensing_radius=config["params.sensing_radius"],
        reynolds=config["params.reynolds"],
        kernel=config["params.kernel"],
        kernel_param=config["params.kernel_param"],
    )


def _coefficient_dict(coeffs):
    return {name: float(getattr(coeffs, name)) for name in _COEFF_NAMES}


def _solver_config(config):
    from .macro import SolverConfig

    return SolverConfig(
        dt=config["time.dt"],
        t_end=config["time.t_end"],
        cfl_safety=config["time.cfl_safety"],
        imex=config["time.imex"],
        output_every=config["output.every"],
        series_sobolev_s=config["output.sobolev_s"],
    )


def _snapshot_base(path):
    for suffix in (".bin", ".json"):
        if path.endswith(suffix):
            return path[: -len(suffix)]
    return path


def _load_macro_snapshot(path):
    """A MacroState from a snapshot written by the macro pipeline."""
    import numpy as np

    from .macro import MacroState
    from .runio import read_snapshot
    from .torus import TorusGrid

    fields, sidecar = read_snapshot(_snapshot_base(path))
    for name in ("rho_hat", "phi", "psi", "v"):
        if name not in fields:
            raise RangeError(f"snapshot {path} lacks the macro field '{name}'")
    shape = fields["rho_hat"].shape
    if len(set(shape)) != 1:
        raise RangeError(f"snapshot {path} has a non-square grid {shape}")
    grid = TorusGrid(dim=len(shape), n=shape[0])
    return MacroState(
        grid=grid,
        rho_hat=np.array(fields["rho_hat"]),
        phi=np.array(fields["phi"]),
        psi=np.array(fields["psi"]),
        v=np.array(fields["v"]),
        t=float(sidecar["time"]),
    )


def _series_rows(series):
    return [[row[name] for name in _SERIES_COLUMNS] for row in series]


def _cmd_coeffs(writer, config, coeffs):
    from .coefficients import compute_c2_c3, solve_gci

    writer.write_csv(
        "coefficients.csv",
        {name: f"closure coefficient {name}" for name in _COEFF_NAMES},
        [[getattr(coeffs, name) for name in _COEFF_NAMES]],
    )
    gci = solve_gci(coeffs.kappa)
    c2_coarse, _ = compute_c2_c3(solve_gci(coeffs.kappa, degree=gci.galerkin_degree // 2))
    writer.write_json(
        "certificate.json",
        {
            "kappa": coeffs.kappa,
            "galerkin_degree": gci.galerkin_degree,
            "residual_norm": gci.residual_norm,
            "h_sign": gci.h_sign,
            "h_single_signed": True,
            "c2_degree_stability": abs(coeffs.c2 - c2_coarse),
        },
    )


def _cmd_macro(writer, config, coeffs):
    from .macro import benchmark_state, run_macro
    from .torus import TorusGrid

    if config["init.file"]:
        initial = _load_macro_snapshot(config["init.file"])
    else:
        grid = TorusGrid(dim=config["grid.dim"], n=config["grid.n"])
        initial = benchmark_state(grid)
    _, series, snapshots = run_macro(initial, coeffs, _solver_config(config))
    writer.write_csv("series.csv", _SERIES_COLUMNS, _series_rows(series))
    for i, state in enumerate(snapshots):
        writer.write_snapshot(
            f"snapshot_{i:04d}",
            {"rho_hat": state.rho_hat, "phi": state.phi, "psi": state.psi, "v": state.v},
            time=state.t,
            meta={"index": i},
        )


def _cmd_kinetic(writer, config, coeffs):
    from .kinetic import run_kinetic
    from .limit import prepare_well_prepared_data
    from .macro import benchmark_state
    from .sphere import SphereGrid
    from .torus import TorusGrid

    sphere = SphereGrid(config["sphere.L"])
    if config["init.well_prepared"]:
        macro_initial = _load_macro_snapshot(config["init.well_prepared"])
    else:
        grid = TorusGrid(dim=config["grid.dim"], n=config["grid.n"])
        macro_initial = benchmark_state(grid)
    initial = prepare_well_prepared_data(macro_initial, coeffs, sphere, config["epsilon"])
    _, series, snapshots = run_kinetic(initial, coeffs, _solver_config(config))
    writer.write_csv("series.csv", _SERIES_COLUMNS, _series_rows(series))
    for i, state in enumerate(snapshots):
        writer.write_snapshot(
            f"snapshot_{i:04d}",
            {"f": state.f, "v": state.v},
            time=state.t,
            meta={"index": i, "epsilon": state.epsilon, "sphere_L": config["sphere.L"]},
        )


def _cmd_limit(writer, config, coeffs):
    from .limit import run_convergence_study
    from .sphere import SphereGrid

    study = run_convergence_study(
        config["epsilons"],
        coeffs,
        SphereGrid(config["sphere.L"]),
        t_end=config["time.t_end"],
        dt=config["time.dt"],
        n_kinetic=config["grid.n"],
        n_reference=config["limit.n_reference"],
        output_every=config["output.every"],
        s=config["output.sobolev_s"],
        imex=config["time.imex"],
    )
    good = [r for r in study.runs if not r.failed]
    writer.write_csv(
        "study.csv",
        _STUDY_COLUMNS,
        [
            [r.eps, r.sup("norm_vR"), r.sup("norm_fR"), r.sup("err_rho"), r.sup("err_j")]
            for r in good
        ],
    )
    writer.write_json(
        "fit.json",
        {
            "slope": study.slope,
            "intercept": study.intercept,
            "r_squared": study.r_squared,
            "slope_band": list(study.slope_band),
            "slope_j": study.slope_j,
            "energy_ratio": study.energy_ratio,
            "epsilons": list(study.epsilons),
            "failed": [{"eps": r.eps, "error": r.error} for r in study.runs if r.failed],
        },
    )
    for i, run in enumerate(study.runs):
        sub = f"runs/eps{i:02d}_{run.eps:g}"
        if run.failed:
            writer.write_json(f"{sub}/error.json", {"eps": run.eps, "error": run.error})
            continue
        writer.write_csv(
            f"{sub}/series.csv",
            _EPS_SERIES_COLUMNS,
            list(
                zip(
                    run.times,
                    run.norm_vR,
                    run.norm_fR,
                    run.err_rho,
                    run.err_j,
                    run.phi0,
                    run.energy,
                )
            ),
        )


def _check_macro_rows(run_dir, manifest, series):
    import numpy as np

    from .coefficients import assemble_coefficients, solve_gci
    from .diagnostics import energy_functionals_macro, gci_projections_h0
    from .sphere import SphereGrid

    config = manifest.config
    coeffs = assemble_coefficients(_model_params(config))
    s = config["output.sobolev_s"]
    states = [
        _load_macro_snapshot(os.path.join(run_dir, f"snapshot_{i:04d}"))
        for i in range(len(series["t"]))
    ]
    gci = solve_gci(coeffs.kappa)
    sphere = SphereGrid(config["sphere.L"])
    rows = []
    for i, state in enumerate(states):
        e_tot, d_tot = energy_functionals_macro(state, coeffs, s)
        mass = state.grid.integrate(np.exp(state.rho_hat))
        div = state.grid.divergence_norm(state.v)
        defect_s = defect_v = float("nan")
        if 0 < i < len(states) - 1:
            dt_prev = states[i].t - states[i - 1].t
            dt_next = states[i + 1].t - states[i].t
            if abs(dt_next - dt_prev) < 1e-12:
                sc, vec = gci_projections_h0(
                    states[i - 1], states[i], states[i + 1], coeffs, gci, sphere
                )
                defect_s = np.sqrt(state.grid.integrate(sc**2))
                defect_v = np.sqrt(state.grid.integrate(np.sum(vec**2, axis=0)))
        rows.append([state.t, e_tot, d_tot, mass, div, defect_s, defect_v])
    return rows


def _check_kinetic_rows(run_dir, manifest, series):
    import numpy as np

    from .kinetic import _moment_arrays
    from .runio import read_snapshot
    from .sphere import SphereGrid
    from .torus import TorusGrid

    sphere = SphereGrid(manifest.config["sphere.L"])
    p0 = _moment_arrays(sphere)[0]
    rows = []
    for i in range(len(series["t"])):
        fields, sidecar = read_snapshot(os.path.join(run_dir, f"snapshot_{i:04d}"))
        f, v = fields["f"], fields["v"]
        grid = TorusGrid(dim=f.ndim - 1, n=f.shape[0])
        mass = grid.integrate(f @ p0)
        div = grid.divergence_norm(v)
        rows.append(
            [
                sidecar["time"],
                series["energy"][i],
                series["dissipation"][i],
                mass,
                div,
                float("nan"),
                float("nan"),
            ]
        )
    return rows


def _cmd_check(writer, config, coeffs):
    import numpy as np

    from .diagnostics import gronwall_envelope
    from .runio import read_manifest, read_series

    run_dir = config["check.run"]
    if not run_dir:
        raise RangeError("check needs check.run = <run directory>")
    manifest = read_manifest(run_dir)
    if manifest.subcommand not in ("macro", "kinetic"):
        raise RangeError(f"check supports macro and kinetic runs, not '{manifest.subcommand}'")
    series = read_series(os.path.join(run_dir, "series.csv"))
    if manifest.subcommand == "macro":
        rows = _check_macro_rows(run_dir, manifest, series)
    else:
        rows = _check_kinetic_rows(run_dir, manifest, series)
    writer.write_csv("diagnostics.csv", _DIAG_COLUMNS, rows)

    masses = np.array([row[3] for row in rows])
    mass_drift = float(np.max(np.abs(masses - masses[0])) / abs(masses[0]))
    div_max = float(np.max([row[4] for row in rows]))
    envelope = gronwall_envelope(
        series["t"], series["energy"], s=manifest.config["output.sobolev_s"],
        dissipations=series["dissipation"],
    )
    summary = {
        "subcommand": manifest.subcommand,
        "mass_drift_rel": mass_drift,
        "mass_ok": mass_drift <= _MASS_DRIFT_TOL,
        "divergence_max": div_max,
        "divergence_ok": div_max <= _DIV_TOL,
        "gronwall_constant": envelope["constant"],
        "gronwall_margin": envelope["margin"],
        "gronwall_ok": bool(envelope["passed"]),
    }
    summary["passed"] = bool(
        summary["mass_ok"] and summary["divergence_ok"] and summary["gronwall_ok"]
    )
    writer.write_json("summary.json", summary)


_HANDLERS = {
    "coeffs": _cmd_coeffs,
    "macro": _cmd_macro,
    "kinetic": _cmd_kinetic,
    "limit": _cmd_limit,
    "check": _cmd_check,
}


def _input_hashes(config):
    from .runio import sha256_file

    hashes = {}
    for key in ("init.file", "init.well_prepared"):
        if config[key]:
            base = _snapshot_base(config[key])
            for ext in (".bin", ".json"):
                hashes[key + ext] = sha256_file(base + ext)
    if config["check.run"]:
        hashes["check.run/manifest.json"] = sha256_file(
            os.path.join(config["check.run"], "manifest.json")
        )
    return hashes


def _dispatch(subcommand, config, out_dir, seed, threads):
    from . import __version__
    from .coefficients import assemble_coefficients
    from .runio import RunManifest, RunWriter

    coeffs = assemble_coefficients(_model_params(config))
    manifest = RunManifest(
        subcommand=subcommand,
        config=config,
        coefficients=_coefficient_dict(coeffs),
        code_version=__version__,
        seed=seed,
        threads=threads,
        inputs=_input_hashes(config),
    )
    writer = RunWriter(out_dir, manifest)
    _HANDLERS[subcommand](writer, config, coeffs)
    writer.finish()


def _emit_error(out_dir, exc, code):
    print(f"soh: {type(exc).__name__}: {exc}", file=sys.stderr)
    try:
        from .runio import atomic_write_bytes

        os.makedirs(out_dir, exist_ok=True)
        payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        atomic_write_bytes(
            os.path.join(out_dir, "error.json"),
            (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode(),
        )
    except OSError:
        pass


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="soh",
        description="coupled alignment-fluid models: coefficients, solvers, limit study",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, blurb in (
        ("coeffs", "closure coefficients and the collision-invariant certificate"),
        ("macro", "run the closed macroscopic solver"),
        ("kinetic", "run the mean-field kinetic solver"),
        ("limit", "run the epsilon-sweep convergence study"),
        ("check", "recompute diagnostics for an existing run directory"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", default=None, help="path to a key = value config file")
        p.add_argument("--out", required=True, help="run directory for all outputs")
        p.add_argument("--threads", type=int, default=None, help="pin BLAS/OpenMP threads")
        p.add_argument("--seed", type=int, default=None, help="recorded in the manifest")
    args = parser.parse_args(argv)

    if args.threads is not None:
        if args.threads < 1:
            print("soh: --threads must be >= 1", file=sys.stderr)
            return 2
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)

    try:
        config = load_config(args.config)
        _dispatch(args.subcommand, config, args.out, args.seed, args.threads)
    except ConfigError as exc:
        _emit_error(args.out, exc, 2)
        return 2
    except NumericError as exc:
        _emit_error(args.out, exc, 3)
        return 3
    except InvariantViolation as exc:
        _emit_error(args.out, exc, 4)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
