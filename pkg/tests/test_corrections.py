"""Exclusion-ball correction blocks: exactness of the spherical rules,
scaling laws, and the radius-invariance they exist to provide."""

import numpy as np
import pytest

from conftest import cached_table
from nyvie.core import MaterialParams, mesh_from_centers
from nyvie.corrections import (CorrectionConfig, coefficient_C,
                               correction_B, correction_block,
                               exact_ball_rule, l_dyadic_sphere)
from nyvie.errors import GeometryError, ParameterError
from nyvie.system import assemble_A_self


def element(contrast=4.0, a=2.0, m=3, center=(0.0, 0.0, 0.0)):
    mesh = mesh_from_centers([center], a, m, lambda p: contrast)
    return mesh.elements[0]


MAT = MaterialParams(omega=1.0)


class TestBasics:
    def test_config_validation(self):
        with pytest.raises(ParameterError):
            CorrectionConfig(delta=0.0)
        with pytest.raises(ParameterError):
            CorrectionConfig(delta=-0.1)

    def test_depolarization_dyadic_sphere(self):
        assert np.array_equal(l_dyadic_sphere(), np.eye(3) / 3.0)

    def test_collocation_coefficient(self):
        C = coefficient_C(4.0)
        assert np.array_equal(C, (1 + 4.0 / 3.0) * np.eye(3))
        Cc = coefficient_C(3.0 + 3.0j)
        assert Cc[0, 0] == 2.0 + 1.0j

    def test_exact_rule_grows_with_m(self):
        r3 = exact_ball_rule(3)
        r7 = exact_ball_rule(7)
        assert all(b >= a for a, b in zip(r3, r7))

    def test_disabled_returns_zero(self):
        el = element()
        cfg = CorrectionConfig(delta=0.1, enabled=False)
        blk = correction_block(el, 13, MAT, cfg)
        assert blk.shape == (27, 3, 3)
        assert np.all(blk == 0.0)

    def test_zero_contrast_gives_zero_block(self):
        el = element(contrast=0.0)
        blk = correction_block(el, 13, MAT, CorrectionConfig(delta=0.1))
        assert np.max(np.abs(blk)) == 0.0

    def test_single_entry_matches_block(self):
        el = element()
        cfg = CorrectionConfig(delta=0.1)
        blk = correction_block(el, 4, MAT, cfg)
        one = correction_B(el, 4, 7, MAT, cfg)
        assert np.array_equal(one, blk[7])

    def test_index_validation(self):
        el = element()
        cfg = CorrectionConfig(delta=0.1)
        with pytest.raises(ParameterError):
            correction_block(el, 27, MAT, cfg)
        with pytest.raises(ParameterError):
            correction_B(el, 0, -1, MAT, cfg)

    def test_ball_must_fit_around_node(self):
        el = element()
        # corner node at reference coordinate ~0.7746: margin ~0.2254
        with pytest.raises(GeometryError):
            correction_block(el, 0, MAT, CorrectionConfig(delta=0.25))


class TestScalingLaws:
    def test_quadratic_radius_decay(self):
        # the block is dominated by its O(delta^2) terms: halving the radius
        # four times reduces it by ~4x each time
        el = element()
        norms = [np.max(np.abs(correction_block(el, 13, MAT,
                                                CorrectionConfig(delta=d))))
                 for d in (0.2, 0.1, 0.05)]
        assert norms[0] / norms[1] == pytest.approx(4.0, rel=0.05)
        assert norms[1] / norms[2] == pytest.approx(4.0, rel=0.05)

    def test_self_entry_wavenumber_independent(self):
        # at n = j the node factor e^{-ikR} is 1 and the k-dependent angular
        # parts integrate to zero over the sphere, so the self entry carries
        # omega^2 mu but no further wavenumber dependence (to rounding);
        # off-center entries keep their O(1) e^{-ikR_n} factors by design
        el = element()
        cfg = CorrectionConfig(delta=0.02)
        b1 = correction_block(el, 13, MaterialParams(omega=1.0), cfg)[13]
        b2 = correction_block(el, 13,
                              MaterialParams(omega=1.0, eps_background=5.0),
                              cfg)[13]
        # the k-dependent pieces cancel through quadrature sums whose terms
        # are O(1e-2), leaving ~1e-16 rounding; an O(1) dependence would be
        # ~1e-4 here
        assert np.max(np.abs(b1 - b2)) <= 1e-13

    def test_self_entry_leading_closed_form(self):
        # B_jj -> omega^2 mu contrast (r^2/3) I as the ball shrinks, with the
        # physical radius r = (a/2) delta
        el = element(contrast=4.0, a=2.0)
        for d in (0.1, 0.02):
            b = correction_block(el, 13, MAT, CorrectionConfig(delta=d))[13]
            expected = 4.0 * d * d / 3.0 * np.eye(3)
            assert np.max(np.abs(b - expected)) <= 0.02 * d * d

    def test_contrast_linearity(self):
        el1 = element(contrast=2.0)
        el2 = element(contrast=6.0)
        cfg = CorrectionConfig(delta=0.1)
        b1 = correction_block(el1, 13, MAT, cfg)
        b2 = correction_block(el2, 13, MAT, cfg)
        assert np.max(np.abs(b2 - 3.0 * b1)) <= 1e-14 * np.max(np.abs(b2))


class TestRadiusInvariance:
    @pytest.mark.parametrize("j", [13, 1])
    def test_self_block_plus_correction_invariant(self, j):
        # the defining property: A_self(delta) + correction(delta) is the same
        # for every admissible radius, to table-quadrature precision
        el = element(contrast=4.0, a=2.0)
        totals = []
        for d in (0.1, 0.025):
            table = cached_table(3, d)
            A = assemble_A_self(el, j, table, MAT)
            B = correction_block(el, j, MAT, CorrectionConfig(delta=d))
            om2mu = MAT.omega ** 2 * MAT.mu
            totals.append((-om2mu) * A - B)
        diff = np.max(np.abs(totals[0] - totals[1]))
        assert diff <= 1e-10

    def test_invariance_on_scaled_element(self):
        el = element(contrast=4.0, a=0.6, center=(2.0, -1.0, 0.3))
        mat = MaterialParams(omega=1.0, eps_background=5.0)
        om2mu = mat.omega ** 2 * mat.mu
        totals = []
        for d in (0.1, 0.0125):
            table = cached_table(3, d)
            A = assemble_A_self(el, 13, table, mat)
            B = correction_block(el, 13, mat, CorrectionConfig(delta=d))
            totals.append((-om2mu) * A - B)
        assert np.max(np.abs(totals[0] - totals[1])) <= 1e-10

    def test_exact_rule_suffices(self):
        # refining the spherical rule beyond the polynomial-exact default
        # must not change the block beyond rounding
        from nyvie.quadrature import BruteForceResolution
        el = element()
        cfg_default = CorrectionConfig(delta=0.1)
        cfg_fine = CorrectionConfig(
            delta=0.1, ball_res=BruteForceResolution(
                n_radial=20, n_polar=24, n_azimuthal=32, n_outer=12))
        b1 = correction_block(el, 13, MAT, cfg_default)
        b2 = correction_block(el, 13, MAT, cfg_fine)
        assert np.max(np.abs(b1 - b2)) <= 1e-13 * max(np.max(np.abs(b2)), 1e-16)
