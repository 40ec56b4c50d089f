"""Tabulated singular-quadrature weights: moment correctness, symmetry,
scaling, recipes, and the versioned file format."""

import numpy as np
import pytest

from conftest import cached_table
from nyvie.core import reference_nodes
from nyvie.errors import (GeometryError, ParameterError, TableCorruptionError,
                          TableFormatError)
from nyvie.experiments import benchmark_value
from nyvie.quadrature import (FAST_RESOLUTION, apply_to_chunks,
                              cube_minus_ball_quadrature, lagrange_basis_3d)
from nyvie.weights import (BENCHMARK_RECIPE, KernelRecipe, WeightTable,
                           apply_weights, combine_weights,
                           compute_weight_table, dyadic_recipe, load_table,
                           max_delta, node_orbits, save_table,
                           scale_weight_table)


@pytest.fixture(scope="module")
def t3():
    return cached_table(3, 0.1)


def brute_moments(m, j, delta, res=FAST_RESOLUTION):
    """Direct cube-minus-ball integrals of phi_n / R^k and phi_n uu / R^k."""
    ref = reference_nodes(m)
    node = ref.nodes[j]

    def kern_scalar(power):
        def kern(pts):
            d = pts - node
            R = np.sqrt(np.sum(d * d, axis=1))
            phi = lagrange_basis_3d(m, pts)                      # (Q, M)
            return phi * (R ** -power)[:, None]
        return kern

    def kern_matrix(power):
        def kern(pts):
            d = pts - node
            R = np.sqrt(np.sum(d * d, axis=1))
            u = d / R[:, None]
            uu = np.einsum("qa,qb->qab", u, u)
            phi = lagrange_basis_3d(m, pts)
            return np.einsum("qn,qab,q->qnab", phi, uu, R ** -power)
        return kern

    chunks = list(cube_minus_ball_quadrature(node, delta, res))
    scal = np.stack([apply_to_chunks(kern_scalar(k), chunks) for k in (1, 2, 3)])
    mats = np.stack([apply_to_chunks(kern_matrix(k), chunks) for k in (1, 2, 3)])
    return scal, mats         # (3, M), (3, M, 3, 3)


class TestMomentCorrectness:
    def test_rows_match_direct_integration(self, t3):
        # the j=1 row was produced from its symmetry-class representative;
        # direct integration at the same resolution must agree closely
        scal, mats = brute_moments(3, 1, 0.1)
        assert np.max(np.abs(t3.scalar[1] - scal)) <= 1e-8
        assert np.max(np.abs(t3.matrix_full(1) - mats)) <= 1e-8

    def test_matrix_trace_equals_scalar(self, t3):
        # trace(uu) = 1 pointwise, so traces of matrix moments must equal the
        # scalar moments up to quadrature rounding
        for j in (0, 1, 4, 13):
            full = t3.matrix_full(j)                 # (3, M, 3, 3)
            tr = np.trace(full, axis1=2, axis2=3)
            assert np.max(np.abs(tr - t3.scalar[j])) <= 1e-10

    def test_symmetry_across_node_class(self, t3):
        # the benchmark value is invariant under the cube symmetries mapping
        # one corner to another (the sampled function is radial)
        corner_vals = [benchmark_value(t3, j)[0, 0]
                       for j in (0, 2, 6, 8, 18, 20, 24, 26)]
        assert np.max(np.abs(np.diff(corner_vals))) <= 1e-12

    def test_center_row_diagonal_isotropic(self, t3):
        v = benchmark_value(t3, 13)
        assert v[0, 0] == pytest.approx(v[1, 1], abs=1e-12)
        assert v[1, 1] == pytest.approx(v[2, 2], abs=1e-12)


class TestExactnessTransfer:
    def test_polynomial_times_each_kernel(self, t3):
        # weights transfer any per-axis-degree <= m-1 polynomial through all
        # six singular kernels: apply_weights == direct integration of the
        # polynomial (which its own interpolant reproduces exactly)
        m, j, delta = 3, 1, 0.1
        ref = reference_nodes(m)

        def poly(p):
            return ((1.0 + 0.3 * p[:, 0] + 0.7 * p[:, 0] ** 2)
                    * (1.0 - 0.5 * p[:, 1] + 0.2 * p[:, 1] ** 2)
                    * (0.5 + p[:, 2] ** 2))

        fvals = poly(ref.nodes)
        node = ref.nodes[j]
        chunks = list(cube_minus_ball_quadrature(node, delta, FAST_RESOLUTION))

        for power in (1, 2, 3):
            scal_coeffs = [0.0, 0.0, 0.0]
            scal_coeffs[power - 1] = 1.0
            recipe_scal = KernelRecipe(tuple(scal_coeffs), (0.0, 0.0, 0.0))
            recipe_mat = KernelRecipe((0.0, 0.0, 0.0), tuple(scal_coeffs))

            def kern_scalar(pts):
                d = pts - node
                R = np.sqrt(np.sum(d * d, axis=1))
                return poly(pts) * R ** -power

            def kern_matrix(pts):
                d = pts - node
                R = np.sqrt(np.sum(d * d, axis=1))
                u = d / R[:, None]
                uu = np.einsum("qa,qb->qab", u, u)
                return poly(pts)[:, None, None] * uu * (R ** -power)[:, None, None]

            got_s = apply_weights(t3, j, fvals, recipe_scal)
            want_s = apply_to_chunks(kern_scalar, chunks) * np.eye(3)
            assert np.max(np.abs(got_s - want_s)) <= 1e-6

            got_m = apply_weights(t3, j, fvals, recipe_mat)
            want_m = apply_to_chunks(kern_matrix, chunks)
            assert np.max(np.abs(got_m - want_m)) <= 1e-6

    def test_constant_function_transfer(self, t3):
        # f = 1: apply_weights reduces to the summed moments
        ones = np.ones(27)
        got = apply_weights(t3, 13, ones, BENCHMARK_RECIPE)
        want = (np.sum(t3.scalar[13], axis=1) @ np.array(BENCHMARK_RECIPE.scalar)) * np.eye(3) \
            + np.einsum("k,knab->ab", np.array(BENCHMARK_RECIPE.matrix),
                        t3.matrix_full(13))
        assert np.max(np.abs(got - want)) <= 1e-12


class TestRecipes:
    def test_dyadic_recipe_coefficients(self):
        r = dyadic_recipe(2.0)
        assert r.scalar == (1.0, -0.5j, -0.25)
        assert r.matrix == (-1.0, 1.5j, 0.75)

    def test_apply_matches_combine(self, t3):
        rng = np.random.default_rng(5)
        f = rng.normal(size=27) + 1j * rng.normal(size=27)
        recipe = dyadic_recipe(1.3)
        per_node = combine_weights(t3, 4, recipe)          # (M, 3, 3)
        want = np.einsum("n,nab->ab", f, per_node)
        got = apply_weights(t3, 4, f, recipe)
        assert np.max(np.abs(got - want)) <= 1e-13 * np.max(np.abs(want))

    def test_recipe_validation(self):
        with pytest.raises(ParameterError):
            KernelRecipe((1.0, 2.0), (0.0, 0.0, 0.0))

    def test_apply_weights_validates_inputs(self, t3):
        with pytest.raises(ParameterError):
            apply_weights(t3, 99, np.ones(27), BENCHMARK_RECIPE)
        with pytest.raises(ParameterError):
            apply_weights(t3, 0, np.ones(5), BENCHMARK_RECIPE)


class TestScaling:
    def test_unit_edge_scaling_is_identity(self, t3):
        scaled = scale_weight_table(t3, 2.0)       # reference edge is 2
        assert np.array_equal(scaled.scalar, t3.scalar)
        assert np.array_equal(scaled.matrix, t3.matrix)

    def test_power_law(self, t3):
        a = 0.5
        scaled = scale_weight_table(t3, a)
        for k in (1, 2, 3):
            f = (2.0 / a) ** k
            assert np.allclose(scaled.scalar[:, k - 1], f * t3.scalar[:, k - 1],
                               rtol=0, atol=0)

    def test_physical_space_consistency(self, t3):
        # scaled weights integrate over the physical element minus the scaled
        # ball: check the weak kernel against direct physical-space integration
        a, center = 0.5, np.array([1.0, 2.0, -0.5])
        j = 13
        scaled = scale_weight_table(t3, a)
        ones = np.ones(27)
        recipe = KernelRecipe((1.0, 0.0, 0.0), (0.0, 0.0, 0.0))
        got = ((a / 2) ** 3 * apply_weights(scaled, j, ones, recipe))[0, 0]

        node = center  # node 13 is the element center
        def kern(pts):
            R = np.sqrt(np.sum((pts - node) ** 2, axis=1))
            return 1.0 / R
        # physical integral via the reference-cube integrator + change of variables
        def kern_ref(xi):
            return kern(center + (a / 2) * xi) * (a / 2) ** 3
        chunks = cube_minus_ball_quadrature(np.zeros(3), 0.1, FAST_RESOLUTION)
        want = apply_to_chunks(kern_ref, chunks)
        assert got == pytest.approx(want, rel=1e-12)

    def test_rejects_bad_edge(self, t3):
        with pytest.raises(ParameterError):
            scale_weight_table(t3, 0.0)


class TestGeometryLimits:
    def test_max_delta_decreases_with_m(self):
        vals = [max_delta(m) for m in (3, 4, 5, 6, 7)]
        assert all(a > b for a, b in zip(vals[:-1], vals[1:]))

    def test_oversized_delta_rejected(self):
        with pytest.raises(GeometryError):
            compute_weight_table(3, max_delta(3) + 0.01, FAST_RESOLUTION)

    def test_bad_m_rejected(self):
        with pytest.raises(ParameterError):
            compute_weight_table(2, 0.05, FAST_RESOLUTION)

    def test_orbit_partition(self):
        orbits = node_orbits(3)
        members = sorted(j for o in orbits for j in o.members)
        assert members == list(range(27))
        assert len(orbits) == 4


class TestFileFormat:
    def test_round_trip_bit_exact(self, t3, tmp_path):
        path = save_table(t3, tmp_path / "t.viewt")
        back = load_table(path)
        assert np.array_equal(back.scalar, t3.scalar)
        assert np.array_equal(back.matrix, t3.matrix)
        assert back.m == t3.m and back.delta == t3.delta
        assert back.resolution == t3.resolution
        assert back.checksum() == t3.checksum()
        assert back.header_line() == t3.header_line()
        # a second save produces identical payload bytes
        path2 = save_table(back, tmp_path / "t2.viewt")
        assert path.read_bytes()[:40] == path2.read_bytes()[:40]
        assert back.payload() == t3.payload()

    def test_checksum_excludes_timestamp(self, t3):
        other = WeightTable(m=t3.m, delta=t3.delta, scalar=t3.scalar,
                            matrix=t3.matrix, resolution=t3.resolution,
                            built="2000-01-01T00:00:00+00:00")
        assert other.checksum() == t3.checksum()

    def test_corrupted_payload_rejected(self, t3, tmp_path):
        path = save_table(t3, tmp_path / "t.viewt")
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(TableCorruptionError):
            load_table(path)

    def test_truncated_file_rejected(self, t3, tmp_path):
        path = save_table(t3, tmp_path / "t.viewt")
        blob = path.read_bytes()
        path.write_bytes(blob[:-20])
        with pytest.raises(TableCorruptionError):
            load_table(path)

    def test_trailing_garbage_rejected(self, t3, tmp_path):
        path = save_table(t3, tmp_path / "t.viewt")
        path.write_bytes(path.read_bytes() + b"extra")
        with pytest.raises(TableCorruptionError):
            load_table(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.viewt"
        path.write_bytes(b"NOTAT 1 m=3 delta=0.1 res=x\nbuilt=\n" + b"\x00" * 16)
        with pytest.raises(TableFormatError):
            load_table(path)

    def test_unsupported_version_rejected(self, t3, tmp_path):
        path = save_table(t3, tmp_path / "t.viewt")
        blob = path.read_bytes().replace(b"VIEWT 1 ", b"VIEWT 9 ", 1)
        path.write_bytes(blob)
        with pytest.raises(TableFormatError):
            load_table(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(TableFormatError):
            load_table(tmp_path / "absent.viewt")

    def test_save_creates_parent_dirs(self, t3, tmp_path):
        path = save_table(t3, tmp_path / "a" / "b" / "t.viewt")
        assert path.exists()
