"""Finite-exclusion-volume corrections restoring delta-independence.

Removing a small ball around the observation point from the volume integral
leaves three residual contributions that depend on the ball radius.  For a
spherical exclusion they are: the depolarization coefficient (1 + contrast/3)
multiplying the field at the point, and three ball integrals (the correction
block B) pairing the interpolated smooth factor with the weak part of the
scalar kernel, the intermediate dyadic terms, and the hypersingular static
Hessian with its collocation value subtracted.

The smooth factor is sampled node-wise exactly as in the self-interaction
weights: f_n(r') = contrast_n * e^{-i k R_n} * phi_n(r'), with the constants
frozen at the node.  With that placement the combined self block
A_self(delta) + B(delta) is exactly independent of the exclusion radius (the
kernel identity k^2 * stripped_dyadic = k^2 g0 I + intermediate + static
Hessian holds algebraically, and the static Hessian integrates to zero over
every full spherical shell), so measured delta-dependence isolates quadrature
error in the weight tables.

All three ball integrands are polynomials in radius along each direction and
polynomials in the direction vector at each radius, so the default spherical
product rule (chosen from the basis degree) integrates them exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Element, MaterialParams, reference_nodes
from .errors import GeometryError, ParameterError
from .quadrature import (BruteForceResolution, ball_quadrature,
                         lagrange_basis_3d, spherical_to_cartesian)

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class CorrectionConfig:
    """Exclusion-ball settings paired with a weight table.

    delta     reference exclusion radius; must equal the weight table's delta
              (the physical ball radius is (a/2) * delta per element).
    ball_res  spherical rule for the ball integrals; None selects the
              smallest rule that is exact for the polynomial integrands.
    enabled   when False the correction block is zero (ablation runs).
    """

    delta: float
    ball_res: BruteForceResolution | None = None
    enabled: bool = True

    def __post_init__(self):
        if not (self.delta > 0.0):
            raise ParameterError(f"exclusion radius must be positive, got {self.delta!r}")


def l_dyadic_sphere() -> np.ndarray:
    """Depolarization dyadic of a spherical exclusion volume: I/3."""
    return np.eye(3) / 3.0


def coefficient_C(delta_eps: complex) -> np.ndarray:
    """Collocation-point coefficient matrix (1 + contrast/3) I."""
    return (1.0 + complex(delta_eps) / 3.0) * np.eye(3, dtype=np.complex128)


def exact_ball_rule(m: int) -> tuple[int, int, int]:
    """(n_radial, n_polar, n_azimuthal) integrating the ball integrands exactly.

    The integrands are polynomials of degree <= 3(m-1)+1 in radius (after the
    Jacobian) and spherical polynomials of degree <= 3(m-1)+2 in direction.
    """
    deg_dir = 3 * (m - 1) + 2
    n_gauss = max(6, deg_dir // 2 + 2)
    return n_gauss, n_gauss, max(8, deg_dir + 2)


def correction_block(element: Element, j: int, mat: MaterialParams,
                     cfg: CorrectionConfig) -> np.ndarray:
    """All M correction dyadics B_{j,n} for collocation node j: (M, 3, 3).

    Row contribution is -sum_n B_{j,n} c_n; the block already carries the
    omega^2 mu factor.
    """
    m = element.m
    M = m ** 3
    if not (0 <= j < M):
        raise ParameterError(f"collocation index {j!r} out of range 0..{M - 1}")
    if not cfg.enabled:
        return np.zeros((M, 3, 3), dtype=np.complex128)
    ref = reference_nodes(m)
    xi_j = ref.nodes[j]
    r_j = element.node_positions[j]
    half = 0.5 * element.a
    r_ball = half * cfg.delta
    margin = half * (1.0 - float(np.max(np.abs(xi_j))))
    if not (r_ball < margin):
        raise GeometryError(
            f"exclusion ball radius {r_ball:.6g} does not fit inside the element "
            f"around node {r_j.tolist()} (distance to boundary {margin:.6g}); "
            f"reduce delta below {margin / half:.6g}")
    if cfg.ball_res is None:
        n_r, n_pol, n_az = exact_ball_rule(m)
    else:
        n_r, n_pol, n_az = (cfg.ball_res.n_radial, cfg.ball_res.n_polar,
                            cfg.ball_res.n_azimuthal)
    r, th, ph, w = ball_quadrature(r_ball, n_r, n_pol, n_az)
    offs = spherical_to_cartesian(r, th, ph)
    pts = r_j + offs
    phi = lagrange_basis_3d(m, element.to_reference(pts))        # (Q, M)
    u = offs / r[:, None]
    uu = np.einsum("qa,qb->qab", u, u)
    eye = np.eye(3)[None, :, :]
    k = mat.k
    om2mu = mat.omega ** 2 * mat.mu
    inv_r = 1.0 / r
    # weak part: g0 * I
    part1 = np.tensordot(w * inv_r / FOUR_PI, phi, axes=(0, 0))   # (M,)
    # intermediate dyadic terms, divided by k^2:
    #   -(1/4pi) [ k^2 u u^T / r + i k (I - 3 u u^T) / r^2 ] / k^2
    mid = (-1.0 / FOUR_PI) * (
        uu * inv_r[:, None, None]
        + (1j / k) * (eye - 3.0 * uu) * (inv_r ** 2)[:, None, None])
    wphi = phi * w[:, None]                                       # (Q, M)
    part2 = np.tensordot(wphi, mid.reshape(-1, 9), axes=(0, 0)).reshape(M, 3, 3)
    # static Hessian with the collocation value subtracted, divided by k^2
    hess0 = (-1.0 / (FOUR_PI * k ** 2)) * (eye - 3.0 * uu) * (inv_r ** 3)[:, None, None]
    phi0 = phi.copy()
    phi0[:, j] -= 1.0
    wphi0 = phi0 * w[:, None]
    part3 = np.tensordot(wphi0, hess0.reshape(-1, 9), axes=(0, 0)).reshape(M, 3, 3)
    blocks = part1[:, None, None] * np.eye(3)[None, :, :] + part2 + part3
    dist = np.sqrt(np.einsum("nc,nc->n", element.node_positions - r_j,
                             element.node_positions - r_j))
    factor = om2mu * element.delta_eps * np.exp(-1j * k * dist)
    return factor[:, None, None] * blocks


def correction_B(element: Element, j: int, n: int, mat: MaterialParams,
                 cfg: CorrectionConfig) -> np.ndarray:
    """Single correction dyadic B_{j,n} (3, 3) for one basis node n."""
    M = element.m ** 3
    if not (0 <= n < M):
        raise ParameterError(f"basis index {n!r} out of range 0..{M - 1}")
    return correction_block(element, j, mat, cfg)[n]
