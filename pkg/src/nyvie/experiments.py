"""Reproduction experiments behind the CLI: weight accuracy of the tabulated
singular quadratures, exclusion-radius independence of the assembled system
and its solution, order-refinement convergence, and the array solve/export.

Each experiment returns an :class:`ExperimentReport` holding per-case values,
in-repo reference values, errors, observed convergence orders, and pass/fail
flags.  Reports are bit-reproducible for fixed inputs: no timestamps, canonical
JSON key order, and deterministic float repr.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import subprocess
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import MaterialParams, Mesh, reference_nodes
from .corrections import CorrectionConfig
from .errors import ParameterError
from .quadrature import (BruteForceResolution, TABLE_RESOLUTION,
                         apply_to_chunks, cube_minus_ball_quadrature,
                         gauss_legendre_1d, lagrange_basis_3d)
from .system import (IncidentWave, Solution, assemble_system,
                     evaluate_solution_many, incident_field, solve_direct,
                     solve_gmres)
from .weights import BENCHMARK_RECIPE, WeightTable, apply_weights

#: flat node index of each singularity class representative at m=3
BENCHMARK_NODES = {"center": 13, "corner": 0, "edge": 1, "face": 4}

#: matrix entries reported per class; the face g22 entry duplicates g11 by
#: mirror symmetry and is emitted flagged (informational, not asserted)
BENCHMARK_ENTRIES = {
    "center": (("g11", 0, 0, False),),
    "corner": (("g11", 0, 0, False), ("g12", 0, 1, False)),
    "edge": (("g11", 0, 0, False), ("g22", 1, 1, False), ("g23", 1, 2, False)),
    "face": (("g11", 0, 0, False), ("g33", 2, 2, False), ("g22", 1, 1, True)),
}

ORDER_BAND = (1.7, 2.3)


# --------------------------------------------------------------------------
# report plumbing


def _git_build_id() -> str:
    here = Path(__file__).resolve()
    for parent in here.parents:
        if (parent / ".git").exists():
            try:
                out = subprocess.run(
                    ["git", "describe", "--always", "--dirty"],
                    cwd=parent, capture_output=True, text=True, timeout=10)
                if out.returncode == 0 and out.stdout.strip():
                    return out.stdout.strip()
            except OSError:
                break
            break
    return f"nyvie-{__version__}"


def config_hash(blob) -> str:
    """Stable short hash of a JSON-serializable configuration blob."""
    canon = json.dumps(blob, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def report_metadata(config_blob=None, tables=(), seed=None) -> dict:
    """Common report metadata: build id, config hash, table checksums, seed."""
    meta = {
        "build": _git_build_id(),
        "config_hash": config_hash(config_blob) if config_blob is not None else "",
        "table_checksums": {t.header_line(): t.checksum() for t in tables},
        "seed": seed,
    }
    return meta


@dataclass
class ExperimentReport:
    """Machine- and human-readable experiment outcome."""

    name: str
    metadata: dict = field(default_factory=dict)
    cases: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    passed: bool | None = None

    def to_json(self) -> str:
        blob = {
            "name": self.name,
            "metadata": self.metadata,
            "cases": self.cases,
            "notes": self.notes,
            "passed": self.passed,
        }
        return json.dumps(blob, sort_keys=True, indent=2) + "\n"

    def render_text(self) -> str:
        lines = [f"experiment: {self.name}"]
        for key in sorted(self.metadata):
            val = self.metadata[key]
            if key == "table_checksums":
                for header in sorted(val):
                    lines.append(f"  table: {header}  checksum={val[header]}")
            else:
                lines.append(f"  {key}: {val}")
        for case in self.cases:
            lines.append("case: " + case.get("case", "?"))
            for key in sorted(case):
                if key == "case":
                    continue
                val = case[key]
                if isinstance(val, float):
                    val = f"{val:.9e}"
                elif isinstance(val, list) and val and isinstance(val[0], float):
                    val = "[" + ", ".join(f"{v:.9e}" for v in val) + "]"
                lines.append(f"  {key}: {val}")
        for note in self.notes:
            lines.append(f"note: {note}")
        lines.append(f"passed: {self.passed}")
        return "\n".join(lines) + "\n"

    def write(self, outdir, basename: str = "report") -> tuple[Path, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        jpath = outdir / f"{basename}.json"
        tpath = outdir / f"{basename}.txt"
        jpath.write_text(self.to_json())
        tpath.write_text(self.render_text())
        return jpath, tpath


def observed_orders(errors) -> list:
    """log2 ratio of successive absolute errors (radius halves step to step)."""
    out = []
    for a, b in zip(errors[:-1], errors[1:]):
        if a == 0.0 or b == 0.0:
            out.append(float("nan"))
        else:
            out.append(math.log2(abs(a) / abs(b)))
    return out


def _orders_in_band(orders) -> bool:
    return all(ORDER_BAND[0] <= o <= ORDER_BAND[1]
               for o in orders if not math.isnan(o))


# --------------------------------------------------------------------------
# weight-accuracy experiment (singular-quadrature benchmark)


def benchmark_value(table: WeightTable, j: int) -> np.ndarray:
    """Tabulated-weight value of the benchmark integral for node j: (3, 3).

    The benchmark integrand is cos R times the three dyadic singular factors
    with unit coefficients; cos R is sampled at the nodes and transferred
    through the weights.
    """
    ref = reference_nodes(table.m)
    f = np.cos(np.linalg.norm(ref.nodes - ref.nodes[j], axis=1))
    return apply_weights(table, j, f, BENCHMARK_RECIPE).real


def benchmark_reference(m: int, j: int, delta: float = 1e-3,
                        resolution: BruteForceResolution = TABLE_RESOLUTION,
                        ) -> np.ndarray:
    """Brute-force value of the benchmark integral at a small radius: (3, 3).

    Integrates kernel x interpolated cos R samples (the same integrand the
    weights represent), so that weight-vs-reference differences measure only
    the exclusion-radius truncation, with clean O(delta^2) decay.
    """
    ref = reference_nodes(m)
    node = ref.nodes[j]
    fvals = np.cos(np.linalg.norm(ref.nodes - node, axis=1))
    eye = np.eye(3)

    def kern(pts):
        d = pts - node
        R = np.sqrt(np.einsum("qc,qc->q", d, d))
        u = d / R[:, None]
        uu = np.einsum("qa,qb->qab", u, u)
        interp = lagrange_basis_3d(m, pts) @ fvals
        t1 = (interp / R)[:, None, None] * (eye - uu)
        t23 = (interp / R**2 + interp / R**3)[:, None, None] * (eye - 3.0 * uu)
        return t1 + t23

    chunks = cube_minus_ball_quadrature(node, delta, resolution)
    return apply_to_chunks(kern, chunks).real


def weight_accuracy_experiment(tables: dict, reference_delta: float = 1e-3,
                               resolution: BruteForceResolution = TABLE_RESOLUTION,
                               metadata: dict | None = None) -> ExperimentReport:
    """Benchmark-integral accuracy of tabulated weights per node class.

    ``tables`` maps exclusion radius -> m=3 weight table; values are compared
    against in-repo brute-force references at ``reference_delta`` and the
    observed orders are checked against the O(delta^2) truncation law.
    """
    deltas = sorted(tables, reverse=True)
    if not deltas:
        raise ParameterError("weight-accuracy experiment needs at least one table")
    report = ExperimentReport(name="weight-accuracy",
                              metadata=metadata or {})
    report.metadata.setdefault("reference_delta", reference_delta)
    report.metadata.setdefault("resolution", resolution.ident())
    report.metadata.setdefault("deltas", list(deltas))
    ok = True
    for cls, j in BENCHMARK_NODES.items():
        values = {d: benchmark_value(tables[d], j) for d in deltas}
        reference = benchmark_reference(3, j, reference_delta, resolution)
        for entry, r, c, flagged in BENCHMARK_ENTRIES[cls]:
            vals = [float(values[d][r, c]) for d in deltas]
            refv = float(reference[r, c])
            errors = [v - refv for v in vals]
            orders = observed_orders(errors)
            in_band = _orders_in_band(orders)
            case = {
                "case": f"{cls}/{entry}",
                "node": j,
                "deltas": list(deltas),
                "values": vals,
                "reference": refv,
                "errors": errors,
                "orders": orders,
                "orders_in_band": in_band,
                "flagged": flagged,
            }
            report.cases.append(case)
            if not flagged:
                ok = ok and in_band
    report.notes.append(
        "references integrate kernel x interpolated samples at the reference "
        "radius; orders are log2 of successive error ratios")
    report.notes.append(
        "face/g22 is informational: mirror symmetry of the face node forces "
        "g22 = g11, so a zero entry there would be inconsistent")
    report.passed = ok
    return report


# --------------------------------------------------------------------------
# exclusion-radius independence experiment


def _center_row_index(mesh: Mesh) -> tuple[int, int]:
    """(element, node) of the collocation row used for entry-difference plots:
    the node closest to the domain center."""
    nodes = mesh.all_node_positions()
    center = 0.5 * (nodes.min(axis=0) + nodes.max(axis=0))
    flat = int(np.argmin(np.einsum("pc,pc->p", nodes - center, nodes - center)))
    return divmod(flat, mesh.nodes_per_element)


def delta_independence_experiment(mesh: Mesh, mat: MaterialParams,
                                  wave: IncidentWave, tables: dict,
                                  deltas, reference_delta: float,
                                  solver: str = "direct",
                                  metadata: dict | None = None,
                                  ) -> ExperimentReport:
    """Entry-level and solution-level dependence on the exclusion radius.

    Assembles the system at every radius with corrections on and off, records
    the max entry difference over one collocation row (radius = largest vs
    reference) and the per-component L-infinity solution differences against
    the reference-radius solution.
    """
    deltas = sorted(deltas, reverse=True)
    if reference_delta in deltas:
        raise ParameterError("reference delta must not be part of the sweep")
    needed = list(deltas) + [reference_delta]
    missing = [d for d in needed if d not in tables]
    if missing:
        raise ParameterError(f"missing weight tables for deltas {missing}")
    report = ExperimentReport(name="delta-independence",
                              metadata=metadata or {})
    report.metadata.setdefault("deltas", list(deltas))
    report.metadata.setdefault("reference_delta", reference_delta)
    report.metadata.setdefault("solver", solver)

    elem_i, node_j = _center_row_index(mesh)
    solve = solve_direct if solver == "direct" else solve_gmres
    ok = True
    for corrections in (False, True):
        tag = "on" if corrections else "off"
        rows = {}
        sols = {}
        for d in needed:
            cfg = CorrectionConfig(delta=d, enabled=corrections)
            system = assemble_system(mesh, mat, wave, tables[d], cfg)
            if system.matrix is None:
                raise ParameterError(
                    "entry-difference measurement needs dense assembly; the "
                    "mesh exceeds the dense size limit")
            row = system.node_index(elem_i, node_j, 0)
            rows[d] = system.matrix[row].copy()
            sols[d] = solve(system).coefficients.reshape(3, -1)
            del system
        row_diff = float(np.max(np.abs(rows[deltas[0]] - rows[reference_delta])))
        report.cases.append({
            "case": f"matrix-row/corrections-{tag}",
            "row_element": elem_i,
            "row_node": node_j,
            "delta_pair": [deltas[0], reference_delta],
            "max_entry_diff": row_diff,
        })
        if corrections:
            ok = ok and row_diff <= 1e-8
        else:
            ok = ok and row_diff >= 1e-3
        for ci, comp in enumerate("xyz"):
            diffs = [float(np.max(np.abs(sols[d][ci] - sols[reference_delta][ci])))
                     for d in deltas]
            orders = observed_orders(diffs)
            case = {
                "case": f"solution-E{comp}/corrections-{tag}",
                "deltas": list(deltas),
                "linf_diffs": diffs,
                "orders": orders,
            }
            report.cases.append(case)
            if corrections:
                ok = ok and all(d <= 1e-9 for d in diffs)
            else:
                case["orders_in_band"] = _orders_in_band(orders)
                ok = ok and case["orders_in_band"]
    report.notes.append(
        "corrections-off differences measure the uncompensated exclusion ball "
        "and must shrink as the radius squared; corrections-on differences "
        "measure table/ball-quadrature consistency only")
    report.passed = ok
    return report


# --------------------------------------------------------------------------
# order-refinement (p) convergence experiment


def _l2_errors_on_grid(sol: Solution, ref_sol: Solution, grid_n: int) -> np.ndarray:
    """Component-wise L2(domain) differences of two single-element solutions."""
    mesh = sol.mesh
    if mesh.n_elements != 1 or ref_sol.mesh.n_elements != 1:
        raise ParameterError("L2 comparison implemented for single-element meshes")
    elem = mesh.elements[0]
    x, w = gauss_legendre_1d(grid_n)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    pts_ref = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    scale = (0.5 * elem.a) ** 3

    def values(s: Solution) -> np.ndarray:
        m = s.mesh.m
        basis = lagrange_basis_3d(m, pts_ref)           # (Q, M)
        coeff = s.components()[:, 0, :]                 # (3, M)
        return basis @ coeff.T                          # (Q, 3)

    diff = values(sol) - values(ref_sol)
    return np.sqrt(scale * np.einsum("q,qc->c", W, np.abs(diff) ** 2))


def _line_fit(p_values, log_errors) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R^2 of log-error vs order."""
    p = np.asarray(p_values, dtype=float)
    y = np.asarray(log_errors, dtype=float)
    slope, intercept = np.polyfit(p, y, 1)
    fit = slope * p + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def p_convergence_experiment(meshes: dict, mat: MaterialParams,
                             wave: IncidentWave, tables: dict,
                             delta: float, m_values, m_reference: int,
                             grid_n: int = 21, solver: str = "direct",
                             metadata: dict | None = None,
                             ) -> ExperimentReport:
    """Convergence of the solution under node-count (order) refinement.

    ``meshes`` maps m -> single-element mesh, ``tables`` maps m -> weight
    table at ``delta``.  Solves at every m in ``m_values`` plus the reference
    ``m_reference``, measures component-wise L2 differences on a fixed tensor
    Gauss grid, and fits log10(error) against polynomial order p = m - 1.
    """
    m_values = sorted(m_values)
    solve = solve_direct if solver == "direct" else solve_gmres
    report = ExperimentReport(name="p-convergence", metadata=metadata or {})
    report.metadata.setdefault("delta", delta)
    report.metadata.setdefault("m_values", list(m_values))
    report.metadata.setdefault("m_reference", m_reference)
    report.metadata.setdefault("grid_n", grid_n)

    sols = {}
    for m in list(m_values) + [m_reference]:
        cfg = CorrectionConfig(delta=delta)
        system = assemble_system(meshes[m], mat, wave, tables[m], cfg)
        sols[m] = solve(system)
    errors = np.array([_l2_errors_on_grid(sols[m], sols[m_reference], grid_n)
                       for m in m_values])          # (len(m_values), 3)
    p_values = [m - 1 for m in m_values]
    ok = True
    for ci, comp in enumerate("xyz"):
        errs = errors[:, ci].tolist()
        slope, intercept, r2 = _line_fit(p_values, np.log10(errors[:, ci]))
        decreasing = all(a > b for a, b in zip(errs[:-1], errs[1:]))
        report.cases.append({
            "case": f"E{comp}",
            "p": p_values,
            "l2_errors": errs,
            "slope": slope,
            "intercept": intercept,
            "r_squared": r2,
            "decreasing": decreasing,
        })
        ok = ok and decreasing and r2 >= 0.95
    report.notes.append(
        "errors are L2 differences of the element interpolants against the "
        "highest-order run on a fixed tensor Gauss grid")
    report.passed = ok
    return report


def p_convergence_csv_rows(report: ExperimentReport) -> list:
    """(component, p, error) rows for the plot-data CSV."""
    rows = [("component", "p", "l2_error")]
    for case in report.cases:
        comp = case["case"]
        for p, e in zip(case["p"], case["l2_errors"]):
            rows.append((comp, p, f"{e:.17g}"))
    return rows


# --------------------------------------------------------------------------
# solve + field export


def write_field_csv(path, points: np.ndarray, values: np.ndarray) -> None:
    """CSV with x,y,z and Re/Im of the three field components, full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z",
                         "Re(Ex)", "Im(Ex)", "Re(Ey)", "Im(Ey)",
                         "Re(Ez)", "Im(Ez)"])
        for p, v in zip(points, values):
            writer.writerow([f"{p[0]:.17g}", f"{p[1]:.17g}", f"{p[2]:.17g}",
                             f"{v[0].real:.17g}", f"{v[0].imag:.17g}",
                             f"{v[1].real:.17g}", f"{v[1].imag:.17g}",
                             f"{v[2].real:.17g}", f"{v[2].imag:.17g}"])


def plane_grid(mesh: Mesh, axis: str, value: float, grid_n: int) -> np.ndarray:
    """Uniform grid_n x grid_n points on an axis-aligned plane spanning the
    mesh's bounding box in the two remaining directions."""
    if axis not in ("x", "y", "z"):
        raise ParameterError(f"plane axis must be 'x', 'y' or 'z', got {axis!r}")
    nodes = mesh.all_node_positions()
    lo, hi = nodes.min(axis=0), nodes.max(axis=0)
    ia = "xyz".index(axis)
    others = [i for i in range(3) if i != ia]
    lin = [np.linspace(lo[i], hi[i], grid_n) for i in others]
    A, B = np.meshgrid(lin[0], lin[1], indexing="ij")
    pts = np.empty((grid_n * grid_n, 3))
    pts[:, others[0]] = A.ravel()
    pts[:, others[1]] = B.ravel()
    pts[:, ia] = value
    return pts


def solve_and_export(mesh: Mesh, mat: MaterialParams, wave: IncidentWave,
                     table: WeightTable, cfg: CorrectionConfig,
                     outdir, solver: str = "direct",
                     solver_kwargs: dict | None = None,
                     plane: tuple | None = None,
                     metadata: dict | None = None) -> ExperimentReport:
    """Solve one configuration and export fields.

    Always writes ``scattered_nodes.csv`` (total minus incident at the
    collocation nodes).  When ``plane`` = (axis, value, grid_n) is given, also
    writes ``field_plane.csv`` with the interpolated total field at the plane
    points that fall inside the mesh; exterior points are skipped with a
    warning (exterior field evaluation is out of scope).
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    system = assemble_system(mesh, mat, wave, table, cfg)
    if solver == "direct":
        sol = solve_direct(system)
    else:
        sol = solve_gmres(system, **(solver_kwargs or {}))
    report = ExperimentReport(name="solve", metadata=metadata or {})
    report.metadata.setdefault("solver", sol.method)
    report.metadata.setdefault("residual", sol.residual)
    report.metadata.setdefault("unknowns", system.size)

    nodes = mesh.all_node_positions()
    coeffs = sol.coefficients.reshape(3, -1).T          # (NM, 3)
    scattered = coeffs - incident_field(wave, mat.k, nodes)
    write_field_csv(outdir / "scattered_nodes.csv", nodes, scattered)
    report.cases.append({
        "case": "scattered-at-nodes",
        "file": "scattered_nodes.csv",
        "max_abs": float(np.max(np.abs(scattered))),
    })
    if plane is not None:
        axis, value, grid_n = plane
        pts = plane_grid(mesh, axis, value, int(grid_n))
        vals, inside = evaluate_solution_many(sol, pts)
        n_out = int(np.count_nonzero(~inside))
        if n_out:
            warnings.warn(
                f"{n_out} of {len(pts)} plane points lie outside the mesh and "
                "were skipped (exterior evaluation is out of scope)",
                RuntimeWarning, stacklevel=2)
        write_field_csv(outdir / "field_plane.csv", pts[inside], vals[inside])
        report.cases.append({
            "case": "field-on-plane",
            "file": "field_plane.csv",
            "plane_axis": axis,
            "plane_value": float(value),
            "points_total": int(len(pts)),
            "points_inside": int(np.count_nonzero(inside)),
            "max_abs": float(np.max(np.abs(vals[inside]))) if inside.any() else 0.0,
        })
    report.passed = True
    return report
