"""End-to-end accuracy gates: frozen benchmark values for the singular
quadratures, exclusion-radius independence of entries and solutions,
order-refinement convergence, core invariants, and oracle equivalence.

Each test records one PASS/FAIL line (shown in the pytest summary section)
and asserts the corresponding bound.
"""

import math

import numpy as np
import pytest

from conftest import cached_table, record_acceptance
from nyvie.core import MaterialParams, build_mesh, reference_nodes
from nyvie.experiments import (delta_independence_experiment,
                               p_convergence_experiment,
                               weight_accuracy_experiment)
from nyvie.greens import dyadic_G, scalar_g, scalar_g0, scalar_g_tilde
from nyvie.quadrature import (BruteForceResolution, FAST_RESOLUTION,
                              apply_to_chunks, cube_minus_ball_quadrature,
                              lagrange_basis_3d)
from nyvie.system import IncidentWave, assemble_system, solve_direct, solve_gmres
from nyvie.corrections import CorrectionConfig
from nyvie.weights import (KernelRecipe, apply_weights, load_table, save_table)

# ---------------------------------------------------------------------------
# frozen expected values
#
# Benchmark sweep: tabulated-weight evaluations of the three singular dyadic
# factors against a cos R sample, at exclusion radii 0.1/0.05/0.025/0.0125,
# per singularity-node class.  The reference column is reproduced by the
# in-repo brute-force oracle at radius 1e-3.  ``order_checked`` marks which
# successive-ratio orders must land in the second-order band; the unmarked
# ratios belong to near-constant entries whose differences sit at the
# reference noise floor.

DELTAS = (0.1, 0.05, 0.025, 0.0125)
REFERENCE_DELTA = 1e-3
VALUE_TOL = 5e-4
ORDER_BAND = (1.7, 2.3)

EXPECTED_BENCHMARKS = {
    "center/g11": ([3.985701, 4.017024, 4.024872, 4.026835], 4.027477,
                   (True, True, True)),
    "corner/g11": ([0.940714, 0.972063, 0.979913, 0.981876], 0.982526,
                   (True, True, True)),
    "corner/g12": ([-0.998084, -0.998094, -0.998097, -0.998097], -0.998097,
                   (True, False, False)),
    "edge/g11": ([-1.559532, -1.526351, -1.518059, -1.515987], -1.515302,
                 (True, True, True)),
    "edge/g22": ([3.35175, 3.38217, 3.389798, 3.391707], 3.39234,
                 (True, True, True)),
    "edge/g23": ([-1.579072, -1.579082, -1.579085, -1.579085], -1.579086,
                 (True, True, False)),
    "face/g11": ([0.83442, 0.866672, 0.874742, 0.87676], 0.877428,
                 (True, True, True)),
    "face/g33": ([6.455419, 6.484909, 6.492315, 6.49417], 6.494784,
                 (True, True, True)),
}

# Uncorrected-solve sweep: expected per-component L-infinity differences
# against the radius-1e-3 reference on the 3x3x3 mesh; matched within a
# factor of 3 at each radius.
EXPECTED_SOLUTION_DIFFS = {
    "x": (3.360e-3, 8.264e-4, 2.044e-4, 5.039e-5),
    "y": (1.476e-3, 3.696e-4, 9.258e-5, 2.358e-5),
    "z": (2.533e-3, 6.387e-4, 1.597e-4, 3.969e-5),
}
DIFF_FACTOR = 3.0

# Order-refinement study: expected fitted slopes of log10(L2 error) vs
# polynomial order per component, matched within +-0.15.
EXPECTED_SLOPES = {"Ex": -0.464, "Ey": -0.353, "Ez": -0.391}
SLOPE_TOL = 0.15

HALF = math.pi / 2.0


def scenario_material():
    return MaterialParams(omega=1.0, mu=1.0, eps_background=5.0)


def scenario_wave():
    return IncidentWave(component="x", phase_vector=(0.0, -1.0, 0.5))


def scenario_mesh(n, m):
    return build_mesh([-HALF] * 3, [HALF] * 3, (n, n, n), m, lambda p: 4.0)


def in_band(order):
    return ORDER_BAND[0] <= order <= ORDER_BAND[1]


# ---------------------------------------------------------------------------
# shared experiment runs (each executed once per session)


@pytest.fixture(scope="module")
def weight_report():
    tables = {d: cached_table(3, d) for d in DELTAS}
    return weight_accuracy_experiment(tables, reference_delta=REFERENCE_DELTA,
                                      resolution=FAST_RESOLUTION)


@pytest.fixture(scope="module")
def sweep_report():
    mesh = scenario_mesh(3, 3)
    tables = {d: cached_table(3, d) for d in list(DELTAS) + [REFERENCE_DELTA]}
    return delta_independence_experiment(
        mesh, scenario_material(), scenario_wave(), tables,
        list(DELTAS), REFERENCE_DELTA, solver="direct")


@pytest.fixture(scope="module")
def p_report():
    m_all = [3, 4, 5, 6, 7]
    delta = 0.0125
    meshes = {m: scenario_mesh(1, m) for m in m_all}
    tables = {m: cached_table(m, delta) for m in m_all}
    return p_convergence_experiment(
        meshes, scenario_material(), scenario_wave(), tables, delta,
        m_values=[3, 4, 5, 6], m_reference=7, grid_n=21)


def report_case(report, name):
    for case in report.cases:
        if case["case"] == name:
            return case
    raise AssertionError(f"report lacks case {name!r}")


# ---------------------------------------------------------------------------
# 1. center-node benchmark values


def test_center_node_weight_values(weight_report):
    case = report_case(weight_report, "center/g11")
    expected, reference, checked = EXPECTED_BENCHMARKS["center/g11"]
    value_errs = [abs(v - e) for v, e in zip(case["values"], expected)]
    ref_err = abs(case["reference"] - reference)
    orders_ok = all(in_band(o) for o, c in zip(case["orders"], checked) if c)
    ok = (max(value_errs) <= VALUE_TOL and ref_err <= VALUE_TOL and orders_ok)
    record_acceptance(
        1, "center-node weight values", ok,
        f"max value dev {max(value_errs):.2e} (tol {VALUE_TOL:.0e}), "
        f"reference dev {ref_err:.2e}, orders "
        + "/".join(f"{o:.2f}" for o in case["orders"]))
    assert ok


# ---------------------------------------------------------------------------
# 2. corner/edge/face benchmark values


def test_offcenter_node_weight_values(weight_report):
    worst_dev, worst_entry = 0.0, ""
    orders_ok = True
    for name, (expected, reference, checked) in EXPECTED_BENCHMARKS.items():
        if name == "center/g11":
            continue
        case = report_case(weight_report, name)
        devs = [abs(v - e) for v, e in zip(case["values"], expected)]
        devs.append(abs(case["reference"] - reference))
        if max(devs) > worst_dev:
            worst_dev, worst_entry = max(devs), name
        for order, check in zip(case["orders"], checked):
            if check and not in_band(order):
                orders_ok = False
    values_ok = worst_dev <= VALUE_TOL

    # known-inconsistent published entries are compared on values and
    # flagged, never asserted against the published numbers:
    # the face-node transverse diagonal equals the first diagonal by mirror
    # symmetry (so a published zero there cannot be right), and one published
    # error column disagrees with the difference of its own published values
    face_g22 = report_case(weight_report, "face/g22")
    face_g11 = report_case(weight_report, "face/g11")
    sym_dev = max(abs(a - b) for a, b in
                  zip(face_g22["values"], face_g11["values"]))
    flag_ok = bool(face_g22["flagged"]) and sym_dev <= 1e-8

    ok = values_ok and orders_ok and flag_ok
    record_acceptance(
        2, "off-center weight values", ok,
        f"worst value dev {worst_dev:.2e} at {worst_entry} "
        f"(tol {VALUE_TOL:.0e}); flagged transverse-diagonal symmetry dev "
        f"{sym_dev:.2e}")
    assert ok


# ---------------------------------------------------------------------------
# 3. matrix-entry radius independence


def test_matrix_row_radius_independence(sweep_report):
    off = report_case(sweep_report, "matrix-row/corrections-off")
    on = report_case(sweep_report, "matrix-row/corrections-on")
    ok = off["max_entry_diff"] >= 1e-3 and on["max_entry_diff"] <= 1e-8
    record_acceptance(
        3, "matrix-row radius independence", ok,
        f"uncorrected {off['max_entry_diff']:.3e} (>= 1e-3), "
        f"corrected {on['max_entry_diff']:.3e} (<= 1e-8)")
    assert ok


# ---------------------------------------------------------------------------
# 4. uncorrected solution sweep


def test_uncorrected_solution_sweep(sweep_report):
    worst_ratio = 1.0
    orders_ok = True
    for comp, expected in EXPECTED_SOLUTION_DIFFS.items():
        case = report_case(sweep_report, f"solution-E{comp}/corrections-off")
        for diff, exp in zip(case["linf_diffs"], expected):
            ratio = diff / exp
            worst_ratio = max(worst_ratio, ratio, 1.0 / ratio)
        orders_ok = orders_ok and all(in_band(o) for o in case["orders"])
    ok = worst_ratio <= DIFF_FACTOR and orders_ok
    record_acceptance(
        4, "uncorrected solution sweep", ok,
        f"worst ratio to expected {worst_ratio:.2f} (<= {DIFF_FACTOR:.0f}), "
        f"orders {'in' if orders_ok else 'OUT OF'} band")
    assert ok


# ---------------------------------------------------------------------------
# 5. corrected solution invariance


def test_corrected_solution_invariance(sweep_report):
    worst = 0.0
    for comp in "xyz":
        case = report_case(sweep_report, f"solution-E{comp}/corrections-on")
        worst = max(worst, max(case["linf_diffs"]))
    ok = worst <= 1e-9
    record_acceptance(
        5, "corrected solution invariance", ok,
        f"max L-inf difference {worst:.3e} (<= 1e-9)")
    assert ok


# ---------------------------------------------------------------------------
# 6. order-refinement convergence


def test_order_refinement_slopes(p_report):
    details = []
    ok = True
    for comp, target in EXPECTED_SLOPES.items():
        case = report_case(p_report, comp)
        slope_ok = abs(case["slope"] - target) <= SLOPE_TOL
        ok = ok and slope_ok and case["decreasing"] and case["r_squared"] >= 0.95
        details.append(f"{comp} slope {case['slope']:.3f} "
                       f"(target {target:+.3f}) R2 {case['r_squared']:.3f}")
    record_acceptance(6, "order-refinement slopes", ok, "; ".join(details))
    assert ok


# ---------------------------------------------------------------------------
# 7. property suite


def test_property_suite(tmp_path):
    checks = []

    # zero-contrast identity solve
    mesh = build_mesh([0, 0, 0], [1, 1, 1], (1, 1, 1), 3, lambda p: 0.0)
    mat = MaterialParams(omega=1.0)
    system = assemble_system(mesh, mat, scenario_wave(), cached_table(3, 0.1),
                             CorrectionConfig(delta=0.1))
    sol = solve_direct(system)
    dev = float(np.max(np.abs(sol.coefficients - system.rhs)))
    checks.append(("zero-contrast identity", dev <= 1e-12, dev))

    # scalar kernel splitting identity
    k = math.sqrt(5.0)
    R = np.geomspace(1e-6, 10.0, 200)
    g = scalar_g(k, R)
    split = scalar_g0(R) + scalar_g_tilde(k, R)
    dev = float(np.max(np.abs(g - split) / np.abs(g)))
    checks.append(("kernel splitting", dev <= 1e-15, dev))

    # dyadic symmetry and reciprocity
    rng = np.random.default_rng(11)
    dev = 0.0
    for _ in range(25):
        a, b = rng.normal(size=3), rng.normal(size=3)
        G = dyadic_G(k, a, b)
        Gt = dyadic_G(k, b, a)
        scale = float(np.max(np.abs(G)))
        dev = max(dev, float(np.max(np.abs(G - G.T))) / scale,
                  float(np.max(np.abs(G - Gt.T))) / scale)
    checks.append(("dyadic reciprocity", dev <= 1e-13, dev))

    # interpolation basis partition of unity
    pts = rng.uniform(-1.0, 1.0, size=(200, 3))
    dev = max(float(np.max(np.abs(lagrange_basis_3d(m, pts).sum(axis=1) - 1.0)))
              for m in range(3, 8))
    checks.append(("partition of unity", dev <= 1e-12, dev))

    # weight-table file round trip is bit-exact
    table = cached_table(3, 0.1)
    path = tmp_path / "roundtrip.viewt"
    save_table(table, path)
    loaded = load_table(path)
    exact = (np.array_equal(table.scalar, loaded.scalar)
             and np.array_equal(table.matrix, loaded.matrix)
             and table.checksum() == loaded.checksum())
    checks.append(("table round trip bit-exact", exact, 0.0 if exact else 1.0))

    # iterative and direct solves agree
    mesh4 = build_mesh([0, 0, 0], [1, 1, 1], (1, 1, 1), 3, lambda p: 4.0)
    system4 = assemble_system(mesh4, mat, scenario_wave(),
                              cached_table(3, 0.1),
                              CorrectionConfig(delta=0.1))
    dev = float(np.max(np.abs(solve_direct(system4).coefficients
                              - solve_gmres(system4, tol=1e-12).coefficients)))
    checks.append(("gmres agrees with direct", dev <= 1e-10, dev))

    # brute-force integrator self-consistency under resolution doubling
    c = np.array([0.4, 0.1, -0.3])

    def kern(p):
        d = p - c
        r = np.sqrt(np.sum(d * d, axis=1))
        return np.cos(r) * (1.0 + p[:, 0] * p[:, 1]) / r ** 3

    base = FAST_RESOLUTION
    double = BruteForceResolution(
        n_radial=2 * base.n_radial, n_polar=2 * base.n_polar,
        n_azimuthal=2 * base.n_azimuthal, n_outer=2 * base.n_outer)
    v1 = apply_to_chunks(kern, cube_minus_ball_quadrature(c, 0.05, base))
    v2 = apply_to_chunks(kern, cube_minus_ball_quadrature(c, 0.05, double))
    dev = abs(v1 - v2) / abs(v2)
    checks.append(("resolution-doubling consistency", dev <= 1e-8, float(dev)))

    ok = all(passed for _, passed, _ in checks)
    detail = "; ".join(f"{name} {'ok' if passed else 'FAIL'} ({dev:.1e})"
                       for name, passed, dev in checks)
    record_acceptance(7, "property suite", ok, detail)
    assert ok


# ---------------------------------------------------------------------------
# 8. oracle equivalence (exactness transfer)


def test_exactness_transfer_oracle():
    m, j, delta = 3, 1, 0.1
    table = cached_table(3, delta)
    ref = reference_nodes(m)
    node = ref.nodes[j]

    def poly(p):
        return ((1.0 + 0.3 * p[:, 0] + 0.7 * p[:, 0] ** 2)
                * (1.0 - 0.5 * p[:, 1] + 0.2 * p[:, 1] ** 2)
                * (0.5 + p[:, 2] ** 2))

    fvals = poly(ref.nodes)
    chunks = list(cube_minus_ball_quadrature(node, delta, FAST_RESOLUTION))
    worst = 0.0
    for power in (1, 2, 3):
        coeffs = [0.0, 0.0, 0.0]
        coeffs[power - 1] = 1.0

        def kern_scalar(p):
            d = p - node
            r = np.sqrt(np.sum(d * d, axis=1))
            return poly(p) * r ** -power

        def kern_matrix(p):
            d = p - node
            r = np.sqrt(np.sum(d * d, axis=1))
            u = d / r[:, None]
            uu = np.einsum("qa,qb->qab", u, u)
            return poly(p)[:, None, None] * uu * (r ** -power)[:, None, None]

        got = apply_weights(table, j, fvals,
                            KernelRecipe(tuple(coeffs), (0.0, 0.0, 0.0)))
        want = apply_to_chunks(kern_scalar, chunks) * np.eye(3)
        worst = max(worst, float(np.max(np.abs(got - want))))

        got = apply_weights(table, j, fvals,
                            KernelRecipe((0.0, 0.0, 0.0), tuple(coeffs)))
        want = apply_to_chunks(kern_matrix, chunks)
        worst = max(worst, float(np.max(np.abs(got - want))))

    ok = worst <= 1e-6
    record_acceptance(
        8, "exactness-transfer oracle", ok,
        f"max |weights - direct integration| {worst:.2e} (<= 1e-6) over six "
        f"singular kernels at an off-center node")
    assert ok
