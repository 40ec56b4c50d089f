"""Command-line interface.

Command tree::

    nyvie [--config FILE] [--out DIR] [--threads N] [--seed N] COMMAND
        weights compute   --m M --delta D [--resolution table|fast]
                          [--table-dir DIR] [--force]
        weights inspect   FILE
        solve
        experiment weight-accuracy
        experiment delta-independence
        experiment p-convergence

Exit codes: 0 success, 2 configuration problem (bad config file, bad flags,
missing/corrupt tables, invalid geometry), 3 numeric-accuracy failure,
4 solver failure.  When a command fails after its output directory was
created, a ``FAILED`` marker file with the error message is left there.

Outputs are byte-reproducible: reports carry no timestamps and rerunning a
command with the same inputs and the same repository state writes identical
bytes.  (Weight-table files embed an informational build timestamp, but it is
excluded from their content checksum, so downstream reports are unaffected.)

``--threads`` caps BLAS/OpenMP thread pools via environment variables; for
the cap to be effective it must be set before numpy is first imported, which
is why this module defers all numeric imports into the command bodies.
"""

from __future__ import annotations

import argparse
import os
import sys
from contextlib import contextmanager
from pathlib import Path

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS",
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ACCURACY = 3
EXIT_SOLVER = 4


def table_filename(m: int, delta: float, resolution_ident: str) -> str:
    """Canonical cache filename for a weight table."""
    return f"viewt_m{m}_delta{delta!r}_res{resolution_ident}.viewt"


def _status(msg: str) -> None:
    print(msg, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nyvie",
        description="High-order volume-integral-equation solver for "
                    "electromagnetic scattering by dielectric cubes")
    parser.add_argument("--config", type=Path, default=None,
                        help="TOML run configuration file")
    parser.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory (default: ./out)")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/OpenMP thread pools at N")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed recorded in report metadata")
    sub = parser.add_subparsers(dest="command", required=True)

    weights = sub.add_parser("weights", help="build or inspect weight tables")
    wsub = weights.add_subparsers(dest="weights_command", required=True)
    wc = wsub.add_parser("compute", help="build one weight table and cache it")
    wc.add_argument("--m", type=int, required=True,
                    help="nodes per axis (3..7)")
    wc.add_argument("--delta", type=float, required=True,
                    help="exclusion radius on the reference cube")
    wc.add_argument("--resolution", choices=("table", "fast"), default=None,
                    help="brute-force quadrature preset "
                         "(default: config value or 'table')")
    wc.add_argument("--table-dir", type=Path, default=None,
                    help="cache directory (default: config value or .cache/tables)")
    wc.add_argument("--force", action="store_true",
                    help="rebuild even when the cache file exists")
    wi = wsub.add_parser("inspect", help="print a table's header and checksum")
    wi.add_argument("file", type=Path, help="weight-table file")

    sub.add_parser("solve", help="assemble, solve and export fields "
                                 "(config: mesh/contrast/singular/...)")

    exp = sub.add_parser("experiment", help="run a reproduction experiment")
    esub = exp.add_subparsers(dest="experiment_command", required=True)
    esub.add_parser("weight-accuracy",
                    help="singular-quadrature benchmark vs brute force")
    esub.add_parser("delta-independence",
                    help="exclusion-radius sweep of entries and solutions")
    esub.add_parser("p-convergence",
                    help="solution convergence under order refinement")
    return parser


# --------------------------------------------------------------------------
# helpers shared by commands (numeric imports deferred)


def _load_config(args, required_sections=()):
    from .config import RunConfig, load_config
    from .errors import ConfigError
    if args.config is None:
        if required_sections:
            raise ConfigError(
                f"this command needs --config with sections: "
                f"{', '.join(required_sections)}")
        return RunConfig()
    cfg = load_config(args.config)
    for name in required_sections:
        if getattr(cfg, name) is None:
            raise ConfigError(
                f"config file {args.config} lacks the required [{name}] section")
    return cfg


def _table_path(table_dir: Path, m: int, delta: float, resolution) -> Path:
    return Path(table_dir) / table_filename(m, delta, resolution.ident())


def _obtain_tables(pairs, singular, command_hint: str):
    """Load weight tables for (m, delta) pairs from the cache directory.

    Missing tables are either built on the spot (``build_missing``) or
    reported in one error that lists the exact compute commands to run.
    """
    from .errors import ConfigError
    from .weights import compute_weight_table, load_table, save_table
    res = singular.resolution
    found, missing = {}, []
    for m, delta in pairs:
        path = _table_path(singular.table_dir, m, delta, res)
        if path.exists():
            found[(m, delta)] = load_table(path)
        else:
            missing.append((m, delta, path))
    if missing and not singular.build_missing:
        cmds = "\n".join(
            f"  nyvie weights compute --m {m} --delta {delta!r} "
            f"--resolution {singular.table_resolution} "
            f"--table-dir {singular.table_dir}"
            for m, delta, _ in missing)
        raise ConfigError(
            f"{command_hint} needs {len(missing)} weight table(s) that are not "
            f"in {singular.table_dir}; build them with:\n{cmds}\n"
            f"or set singular.build_missing = true")
    for m, delta, path in missing:
        _status(f"building missing table m={m} delta={delta!r} "
                f"({singular.table_resolution} resolution) ...")
        table = compute_weight_table(m, delta, res, progress=_status)
        save_table(table, path)
        _status(f"wrote {path}")
        found[(m, delta)] = table
    return found


@contextmanager
def _output_guard(outdir: Path):
    """Leave a FAILED marker in the output directory when a command dies
    after starting to write; clear a stale marker on success."""
    try:
        yield
    except Exception as exc:
        if outdir.is_dir():
            try:
                (outdir / "FAILED").write_text(f"{type(exc).__name__}: {exc}\n")
            except OSError:
                pass
        raise
    marker = outdir / "FAILED"
    if marker.exists():
        marker.unlink()


def _write_report(report, cfg, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "resolved_config.json").write_text(cfg.resolved_json())
    jpath, tpath = report.write(outdir)
    _status(f"wrote {outdir / 'resolved_config.json'}")
    _status(f"wrote {jpath}")
    _status(f"wrote {tpath}")


def _metadata(cfg, tables, seed):
    from .experiments import report_metadata
    return report_metadata(config_blob=cfg.to_blob(), tables=tables, seed=seed)


# --------------------------------------------------------------------------
# commands


def cmd_weights_compute(args) -> int:
    from .weights import compute_weight_table, save_table
    cfg = _load_config(args)
    if cfg.singular is not None:
        default_res = cfg.singular.table_resolution
        default_dir = cfg.singular.table_dir
    else:
        default_res, default_dir = "table", Path(".cache/tables")
    res_name = args.resolution or default_res
    table_dir = args.table_dir or default_dir
    from .config import _RESOLUTIONS
    res = _RESOLUTIONS[res_name]
    path = _table_path(table_dir, args.m, args.delta, res)
    if path.exists() and not args.force:
        _status(f"{path} already exists (use --force to rebuild)")
        return EXIT_OK
    _status(f"building weight table m={args.m} delta={args.delta!r} "
            f"resolution={res_name} ...")
    table = compute_weight_table(args.m, args.delta, res, progress=_status)
    save_table(table, path)
    print(f"{path}  checksum={table.checksum()}")
    return EXIT_OK


def cmd_weights_inspect(args) -> int:
    from .weights import load_table, node_orbits
    table = load_table(args.file)
    print(f"file:       {args.file}")
    print(f"header:     {table.header_line()}")
    print(f"checksum:   {table.checksum()}")
    print(f"m:          {table.m} ({table.n_nodes} nodes, "
          f"{len(node_orbits(table.m))} symmetry classes)")
    print(f"delta:      {table.delta!r}")
    print(f"resolution: {table.resolution}")
    print(f"built:      {table.built or '(not recorded)'}")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _load_config(args, required_sections=("mesh", "contrast", "singular"))
    mesh = cfg.build_mesh()
    mat = cfg.build_material()
    wave = cfg.build_wave()
    corr = cfg.build_corrections()
    tables = _obtain_tables([(mesh.m, cfg.singular.delta)], cfg.singular, "solve")
    table = tables[(mesh.m, cfg.singular.delta)]
    plane = None
    if cfg.export is not None:
        plane = (cfg.export.plane_axis, cfg.export.plane_value,
                 cfg.export.grid_n)
    solver_kwargs = dict(tol=cfg.solver.tol, restart=cfg.solver.restart,
                         max_iter=cfg.solver.max_iter,
                         preconditioner=cfg.solver.preconditioner)
    outdir = args.out
    with _output_guard(outdir):
        from .experiments import solve_and_export
        outdir.mkdir(parents=True, exist_ok=True)
        report = solve_and_export(
            mesh, mat, wave, table, corr, outdir,
            solver=cfg.solver.method, solver_kwargs=solver_kwargs,
            plane=plane, metadata=_metadata(cfg, [table], args.seed))
        _write_report(report, cfg, outdir)
        for case in report.cases:
            _status(f"wrote {outdir / case['file']}")
    print(f"solved {report.metadata['unknowns']} unknowns "
          f"({report.metadata['solver']}), residual "
          f"{report.metadata['residual']:.3e}")
    return EXIT_OK


def cmd_experiment_weight_accuracy(args) -> int:
    from .errors import AccuracyError
    cfg = _load_config(args, required_sections=("singular",))
    exp = cfg.experiment
    pairs = [(3, d) for d in exp.deltas]
    tables = _obtain_tables(pairs, cfg.singular, "experiment weight-accuracy")
    by_delta = {d: tables[(3, d)] for d in exp.deltas}
    with _output_guard(args.out):
        from .experiments import weight_accuracy_experiment
        _status("comparing tabulated weights against brute-force references ...")
        report = weight_accuracy_experiment(
            by_delta, reference_delta=exp.reference_delta,
            resolution=cfg.singular.resolution,
            metadata=_metadata(cfg, by_delta.values(), args.seed))
        _write_report(report, cfg, args.out)
        if not report.passed:
            raise AccuracyError(
                "weight-accuracy experiment failed: observed orders leave the "
                "second-order band (see report.txt)")
    print("weight-accuracy: pass")
    return EXIT_OK


def cmd_experiment_delta_independence(args) -> int:
    from .errors import AccuracyError
    cfg = _load_config(args, required_sections=("mesh", "contrast", "singular"))
    exp = cfg.experiment
    mesh = cfg.build_mesh()
    deltas = list(exp.deltas)
    pairs = [(mesh.m, d) for d in deltas + [exp.reference_delta]]
    tables = _obtain_tables(pairs, cfg.singular, "experiment delta-independence")
    by_delta = {d: tables[(mesh.m, d)] for d in deltas + [exp.reference_delta]}
    with _output_guard(args.out):
        from .experiments import delta_independence_experiment
        _status(f"sweeping exclusion radius over {deltas} "
                f"(reference {exp.reference_delta!r}) ...")
        report = delta_independence_experiment(
            mesh, cfg.build_material(), cfg.build_wave(), by_delta,
            deltas, exp.reference_delta, solver=cfg.solver.method,
            metadata=_metadata(cfg, by_delta.values(), args.seed))
        _write_report(report, cfg, args.out)
        if not report.passed:
            raise AccuracyError(
                "delta-independence experiment failed (see report.txt)")
    print("delta-independence: pass")
    return EXIT_OK


def cmd_experiment_p_convergence(args) -> int:
    from .errors import AccuracyError
    cfg = _load_config(args, required_sections=("mesh", "contrast", "singular"))
    exp = cfg.experiment
    m_all = sorted(set(exp.m_values)) + [exp.m_reference]
    delta = cfg.singular.delta
    pairs = [(m, delta) for m in m_all]
    tables = _obtain_tables(pairs, cfg.singular, "experiment p-convergence")
    by_m = {m: tables[(m, delta)] for m in m_all}
    meshes = {m: cfg.build_mesh(m=m) for m in m_all}
    with _output_guard(args.out):
        from .experiments import (p_convergence_csv_rows,
                                  p_convergence_experiment)
        _status(f"solving at m = {m_all} ...")
        report = p_convergence_experiment(
            meshes, cfg.build_material(), cfg.build_wave(), by_m, delta,
            m_values=list(exp.m_values), m_reference=exp.m_reference,
            grid_n=exp.grid_n, solver=cfg.solver.method,
            metadata=_metadata(cfg, by_m.values(), args.seed))
        _write_report(report, cfg, args.out)
        csv_path = args.out / "p_convergence.csv"
        with csv_path.open("w", newline="") as fh:
            import csv as _csv
            _csv.writer(fh).writerows(p_convergence_csv_rows(report))
        _status(f"wrote {csv_path}")
        if not report.passed:
            raise AccuracyError(
                "p-convergence experiment failed: errors not decreasing or "
                "fit quality below threshold (see report.txt)")
    print("p-convergence: pass")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def _dispatch(args) -> int:
    if args.command == "weights":
        if args.weights_command == "compute":
            return cmd_weights_compute(args)
        return cmd_weights_inspect(args)
    if args.command == "solve":
        return cmd_solve(args)
    handlers = {
        "weight-accuracy": cmd_experiment_weight_accuracy,
        "delta-independence": cmd_experiment_delta_independence,
        "p-convergence": cmd_experiment_p_convergence,
    }
    return handlers[args.experiment_command](args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        if "numpy" in sys.modules:
            _status("warning: numpy already imported; --threads cap may not "
                    "take effect for BLAS pools")
        for var in _THREAD_ENV_VARS:
            os.environ[var] = str(args.threads)
    from .errors import (AccuracyError, NyvieError, SolverError)
    try:
        return _dispatch(args)
    except SolverError as exc:
        print(f"error (solver): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AccuracyError as exc:
        print(f"error (accuracy): {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    except NyvieError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
