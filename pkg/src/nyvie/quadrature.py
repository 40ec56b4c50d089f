"""Gauss rules, Lagrange cardinal bases, and the singular-region integrators.

The central object is a deterministic quadrature covering

    [-1, 1]^3  minus the ball B(center, delta)

built from two zones:

(a) Inner cube S, centered at the singularity with half-width s equal to the
    distance to the nearest cube face, integrated in spherical coordinates.
    Directions are enumerated by tensor Gauss grids on the six faces of S
    (solid angle dOmega = s dA / |q|^3 for a face point q), and each ray is
    integrated radially from delta to its exit distance |q| with Gauss panels
    on geometrically growing intervals [delta*2^i, delta*2^(i+1)].  Along a
    ray the direction u is constant and any polynomial integrand stays a
    polynomial in r, so the panels are exact for the polynomial part and
    converge like 3^(-2 n_radial) for the 1/r part of hypersingular kernels.

(b) The rest of the cube: up to 26 boxes obtained by extending the faces of S
    (3 x 3 x 3 partition minus the center cell), each octree-subdivided until
    its edge does not exceed its distance to the singularity, then integrated
    with a tensor Gauss rule per leaf box.

Both zones produce plain (points, weights) chunks, so one sweep can serve
many integrands at once (used by the weight-table builder).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import AccuracyError, GeometryError, ParameterError

MAX_GAUSS_ORDER = 64

# geometric growth ratio of the radial panels
_PANEL_RATIO = 2.0
# outer boxes are split until edge <= _SUBDIVISION_RATIO * distance
_SUBDIVISION_RATIO = 1.0
_MAX_SUBDIV_DEPTH = 24


@lru_cache(maxsize=None)
def gauss_legendre_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1], exactly symmetric."""
    if not isinstance(n, int) or not (1 <= n <= MAX_GAUSS_ORDER):
        raise ParameterError(f"Gauss order must be an integer in 1..{MAX_GAUSS_ORDER}, got {n!r}")
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    if n % 2 == 1:
        x[n // 2] = 0.0
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def _barycentric_weights(nodes: tuple) -> np.ndarray:
    x = np.asarray(nodes)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_cardinal_1d(nodes1d: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Values of all cardinal polynomials on ``nodes1d`` at points t: (Q, m).

    Barycentric product form; exact cardinal rows when t hits a node.
    """
    x = np.asarray(nodes1d, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    bw = _barycentric_weights(tuple(x.tolist()))
    d = t[:, None] - x[None, :]
    hit = d == 0.0
    dsafe = np.where(hit, 1.0, d)
    ell = np.prod(dsafe, axis=1)
    out = (bw[None, :] / dsafe) * ell[:, None]
    rows = hit.any(axis=1)
    if np.any(rows):
        out[rows] = hit[rows].astype(float)
    return out


def lagrange_basis_3d(m: int, xi: np.ndarray) -> np.ndarray:
    """All m^3 tensor cardinal basis values at reference points xi (Q, 3).

    Output (Q, m^3), flat index ix + m*iy + m^2*iz (x index fastest),
    matching core.reference_nodes ordering.
    """
    from .core import reference_nodes
    ref = reference_nodes(m)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    Lx = lagrange_cardinal_1d(ref.nodes1d, xi[:, 0])
    Ly = lagrange_cardinal_1d(ref.nodes1d, xi[:, 1])
    Lz = lagrange_cardinal_1d(ref.nodes1d, xi[:, 2])
    out = np.einsum("qi,qj,qk->qkji", Lx, Ly, Lz)
    return out.reshape(xi.shape[0], m ** 3)


@dataclass(frozen=True)
class BruteForceResolution:
    """Resolution knobs for the brute-force integrators.

    n_radial     Gauss points per radial panel (spherical zones)
    n_polar,
    n_azimuthal  per-face angular grid for cube-minus-ball; polar x azimuthal
                 grid for ball integration
    n_outer      Gauss points per axis on each outer leaf box
    refinement_factor  order multiplier between convergence checks
    rel_tol      relative agreement required between successive refinements
    """

    n_radial: int = 12
    n_polar: int = 16
    n_azimuthal: int = 16
    n_outer: int = 12
    refinement_factor: float = 1.5
    rel_tol: float = 1e-8

    def __post_init__(self):
        for name in ("n_radial", "n_polar", "n_azimuthal", "n_outer"):
            v = getattr(self, name)
            if not isinstance(v, int) or not (2 <= v <= MAX_GAUSS_ORDER):
                raise ParameterError(f"BruteForceResolution.{name} must be an integer in 2..{MAX_GAUSS_ORDER}, got {v!r}")
        if not (0.0 < self.rel_tol <= 1e-4):
            raise ParameterError(f"rel_tol must lie in (0, 1e-4], got {self.rel_tol!r}")
        if not (self.refinement_factor > 1.0):
            raise ParameterError(f"refinement_factor must exceed 1, got {self.refinement_factor!r}")

    def refined(self) -> "BruteForceResolution":
        f = self.refinement_factor
        return replace(
            self,
            n_radial=min(MAX_GAUSS_ORDER, math.ceil(self.n_radial * f)),
            n_polar=min(MAX_GAUSS_ORDER, math.ceil(self.n_polar * f)),
            n_azimuthal=min(MAX_GAUSS_ORDER, math.ceil(self.n_azimuthal * f)),
            n_outer=min(MAX_GAUSS_ORDER, math.ceil(self.n_outer * f)),
        )

    def ident(self) -> str:
        return (f"r{self.n_radial}p{self.n_polar}a{self.n_azimuthal}"
                f"o{self.n_outer}f{self.refinement_factor:g}t{self.rel_tol:g}")


#: accuracy preset for production weight tables (weight errors ~1e-12)
TABLE_RESOLUTION = BruteForceResolution(n_radial=16, n_polar=24, n_azimuthal=24, n_outer=16)
#: cheaper preset for large node counts and smoke tests (errors ~1e-9)
FAST_RESOLUTION = BruteForceResolution(n_radial=12, n_polar=16, n_azimuthal=16, n_outer=12)


def _face_distance(center: np.ndarray) -> float:
    return float(np.min(np.minimum(1.0 - center, 1.0 + center)))


def cube_minus_ball_quadrature(center, delta: float, res: BruteForceResolution,
                               max_chunk: int = 400_000):
    """Deterministic (points, weights) chunks covering [-1,1]^3 \\ B(center, delta).

    The exclusion ball must lie strictly inside the cube.  Chunk boundaries
    and point order depend only on (center, delta, res).
    """
    c = np.asarray(center, dtype=float)
    if c.shape != (3,):
        raise ParameterError("center must be a 3-vector")
    if np.any(np.abs(c) >= 1.0):
        raise GeometryError(f"singularity {c.tolist()} must lie strictly inside the cube")
    s = _face_distance(c)
    if not (0.0 < delta < s):
        raise GeometryError(
            f"exclusion radius must satisfy 0 < delta < {s:.6g} (distance from {c.tolist()} "
            f"to the nearest face), got {delta!r}")
    chunks = []
    chunks.extend(_spherical_zone(c, s, delta, res))
    chunks.extend(_outer_zone(c, s, res, max_chunk))
    return chunks


def _spherical_zone(c, s, delta, res):
    """Inner cube minus ball, one chunk per face pyramid."""
    tg, wg = gauss_legendre_1d(res.n_radial)
    t1, w1 = gauss_legendre_1d(res.n_polar)
    t2, w2 = gauss_legendre_1d(res.n_azimuthal)
    n_panels = max(1, math.ceil(math.log(math.sqrt(3.0) * s / delta) / math.log(_PANEL_RATIO)))
    bounds = delta * _PANEL_RATIO ** np.arange(n_panels + 1)
    chunks = []
    for axis in range(3):
        o1, o2 = [d for d in range(3) if d != axis]
        Y1, Y2 = np.meshgrid(s * t1, s * t2, indexing="ij")
        Y1, Y2 = Y1.ravel(), Y2.ravel()
        W = (np.outer(w1, w2)).ravel() * s * s
        for sign in (1.0, -1.0):
            q = np.empty((Y1.size, 3))
            q[:, axis] = sign * s
            q[:, o1] = Y1
            q[:, o2] = Y2
            rho = np.sqrt(np.einsum("qc,qc->q", q, q))
            uhat = q / rho[:, None]
            w_ang = W * s / rho ** 3
            lo = np.minimum(bounds[:-1][None, :], rho[:, None])   # (D, K)
            hi = np.minimum(bounds[1:][None, :], rho[:, None])
            mid = 0.5 * (lo + hi)
            half = 0.5 * (hi - lo)
            r = mid[:, :, None] + half[:, :, None] * tg           # (D, K, n_r)
            wr = half[:, :, None] * wg * r * r
            pts = c + r[..., None] * uhat[:, None, None, :]
            wts = w_ang[:, None, None] * wr
            chunks.append((pts.reshape(-1, 3), wts.reshape(-1)))
    return chunks


def _outer_zone(c, s, res, max_chunk):
    """Cube minus inner cube: graded boxes with tensor Gauss rules."""
    leaves = []
    segments = []
    for d in range(3):
        segs = []
        for lo, hi in ((-1.0, c[d] - s), (c[d] - s, c[d] + s), (c[d] + s, 1.0)):
            segs.append((lo, hi, abs(hi - lo) > 1e-14))
        segments.append(segs)
    for i0 in range(3):
        for i1 in range(3):
            for i2 in range(3):
                if i0 == i1 == i2 == 1:
                    continue  # the inner cube S itself
                if not (segments[0][i0][2] and segments[1][i1][2] and segments[2][i2][2]):
                    continue
                lo = np.array([segments[0][i0][0], segments[1][i1][0], segments[2][i2][0]])
                hi = np.array([segments[0][i0][1], segments[1][i1][1], segments[2][i2][1]])
                _subdivide(c, lo, hi, 0, leaves)
    if not leaves:
        return []
    tg, wg = gauss_legendre_1d(res.n_outer)
    n = res.n_outer
    TX, TY, TZ = np.meshgrid(tg, tg, tg, indexing="ij")
    tgrid = np.stack([TX.ravel(), TY.ravel(), TZ.ravel()], axis=1)      # (n^3, 3)
    wgrid = (np.einsum("i,j,k->ijk", wg, wg, wg)).ravel()
    lo = np.array([b[0] for b in leaves])
    hi = np.array([b[1] for b in leaves])
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    per_chunk = max(1, max_chunk // (n ** 3))
    chunks = []
    for start in range(0, len(leaves), per_chunk):
        sl = slice(start, start + per_chunk)
        pts = mid[sl, None, :] + half[sl, None, :] * tgrid[None, :, :]   # (L, n^3, 3)
        wts = np.prod(half[sl], axis=1)[:, None] * wgrid[None, :]
        chunks.append((pts.reshape(-1, 3), wts.reshape(-1)))
    return chunks


def _subdivide(c, lo, hi, depth, leaves):
    gap = np.maximum(np.maximum(lo - c, c - hi), 0.0)
    dist = math.sqrt(float(gap @ gap))
    edge = float(np.max(hi - lo))
    if edge <= _SUBDIVISION_RATIO * dist or depth >= _MAX_SUBDIV_DEPTH:
        leaves.append((lo.copy(), hi.copy()))
        return
    mid = 0.5 * (lo + hi)
    for i0 in range(2):
        for i1 in range(2):
            for i2 in range(2):
                pick = np.array([i0, i1, i2])
                nlo = np.where(pick == 0, lo, mid)
                nhi = np.where(pick == 0, mid, hi)
                _subdivide(c, nlo, nhi, depth + 1, leaves)


def apply_to_chunks(kernel, chunks):
    """Sum kernel(points) . weights over chunks.

    ``kernel`` maps (Q, 3) points to (Q,) scalars or (Q, 3, 3) dyadics.
    """
    total = None
    for pts, w in chunks:
        v = np.asarray(kernel(pts))
        if v.shape[0] != pts.shape[0]:
            raise ParameterError(
                f"kernel returned shape {v.shape} for {pts.shape[0]} points; expected (Q,) or (Q,3,3)")
        contrib = np.tensordot(w, v, axes=(0, 0))
        total = contrib if total is None else total + contrib
    return total


def integrate_cube_minus_ball(kernel, center, delta: float,
                              res: BruteForceResolution = FAST_RESOLUTION,
                              max_refinements: int = 3):
    """Integrate kernel over [-1,1]^3 minus B(center, delta), with refinement
    until two successive resolutions agree within res.rel_tol (relative to the
    finer estimate's sup-norm).  Raises AccuracyError with both estimates on
    non-convergence."""
    cur = res
    prev = apply_to_chunks(kernel, cube_minus_ball_quadrature(center, delta, cur))
    for _ in range(max_refinements):
        cur = cur.refined()
        nxt = apply_to_chunks(kernel, cube_minus_ball_quadrature(center, delta, cur))
        scale = max(float(np.max(np.abs(nxt))), 1e-12)
        if float(np.max(np.abs(nxt - prev))) <= res.rel_tol * scale:
            return nxt
        prev = nxt
    raise AccuracyError(
        f"cube-minus-ball integration did not converge to rel_tol={res.rel_tol:g} "
        f"after {max_refinements} refinements", coarse=prev, fine=nxt)


def ball_quadrature(radius: float, n_r: int, n_polar: int, n_azimuthal: int):
    """(r, theta, phi, w) arrays for B(0, radius); w includes the r^2 sin(theta)
    Jacobian (Gauss in r and cos(theta), uniform midpoint in phi)."""
    if not (radius > 0):
        raise ParameterError(f"ball radius must be positive, got {radius!r}")
    tr, wr = gauss_legendre_1d(n_r)
    tc, wc = gauss_legendre_1d(n_polar)
    r1 = 0.5 * radius * (tr + 1.0)
    w1 = 0.5 * radius * wr * r1 * r1
    theta1 = np.arccos(tc)
    phi1 = 2.0 * math.pi * (np.arange(n_azimuthal) + 0.5) / n_azimuthal
    wphi = 2.0 * math.pi / n_azimuthal
    R, T, P = np.meshgrid(r1, theta1, phi1, indexing="ij")
    W = np.einsum("i,j,k->ijk", w1, wc, np.full(n_azimuthal, wphi))
    return R.ravel(), T.ravel(), P.ravel(), W.ravel()


def integrate_ball(kernel_spherical, radius: float,
                   res: BruteForceResolution = FAST_RESOLUTION):
    """Integrate over the ball of given radius around the kernel's own origin.

    ``kernel_spherical`` maps flat arrays (r, theta, phi) -> (Q,) or (Q,3,3);
    the r^2 Jacobian is supplied by the integrator.
    """
    r, t, p, w = ball_quadrature(radius, res.n_radial, res.n_polar, res.n_azimuthal)
    v = np.asarray(kernel_spherical(r, t, p))
    if v.shape[0] != r.shape[0]:
        raise ParameterError(
            f"spherical kernel returned shape {v.shape} for {r.shape[0]} points")
    return np.tensordot(w, v, axes=(0, 0))


def spherical_to_cartesian(r, theta, phi):
    """Offsets from the ball center for spherical coordinate arrays."""
    st = np.sin(theta)
    return np.stack([r * st * np.cos(phi), r * st * np.sin(phi), r * np.cos(theta)], axis=-1)
