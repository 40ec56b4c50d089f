"""Material parameters, reference tensor-product Gauss nodes, and cube meshes.

Conventions used throughout the package:

- Vectors are numpy arrays of shape (3,), dyadics complex arrays of shape
  (3, 3), points batched as (..., 3).
- The reference element is the cube [-1, 1]^3.  A physical element of edge
  ``a`` centered at ``c`` maps reference coordinates ``xi`` to
  ``c + (a/2) * xi``.
- Per-element nodes are the tensor product of the m-point Gauss-Legendre rule,
  ordered lexicographically by (ix, iy, iz) with the x index varying fastest:
  flat = ix + m*iy + m*m*iz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import GeometryError, ParameterError

MAX_NODES_PER_AXIS = 16


@dataclass(frozen=True)
class MaterialParams:
    """Background material and angular frequency of the time-harmonic problem.

    The scatterer is described separately by the permittivity contrast
    attached to mesh nodes; this class only carries what determines the
    background wavenumber k = omega * sqrt(eps_background * mu).
    """

    omega: float
    mu: float = 1.0
    eps_background: float = 1.0

    def __post_init__(self):
        for name in ("omega", "mu", "eps_background"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ParameterError(f"MaterialParams.{name} must be a positive finite real, got {v!r}")

    @property
    def k(self) -> float:
        """Background wavenumber."""
        return self.omega * math.sqrt(self.eps_background * self.mu)


@dataclass(frozen=True)
class ReferenceNodeSet:
    """Tensor-product Gauss-Legendre nodes/weights on [-1, 1]^3.

    ``nodes1d`` is exactly antisymmetric (nodes1d[i] == -nodes1d[m-1-i]
    bitwise) so that sign flips and axis permutations map the 3-D node set
    onto itself exactly; the symmetry machinery in weights.py depends on it.
    """

    m: int
    nodes1d: np.ndarray       # (m,)
    weights1d: np.ndarray     # (m,)
    nodes: np.ndarray         # (m^3, 3)
    weights: np.ndarray       # (m^3,) products of 1-D weights, sum = 8

    @property
    def n_nodes(self) -> int:
        return self.m ** 3


@lru_cache(maxsize=None)
def reference_nodes(m: int) -> ReferenceNodeSet:
    """Build (and cache) the reference node set for m nodes per axis.

    m = 1 is the midpoint rule (single node, weight 8); the practical range
    for weight tables is 3..7.
    """
    if not isinstance(m, int) or not (1 <= m <= MAX_NODES_PER_AXIS):
        raise ParameterError(f"nodes per axis must be an integer in 1..{MAX_NODES_PER_AXIS}, got {m!r}")
    x, w = np.polynomial.legendre.leggauss(m)
    # enforce exact symmetry under negation (leggauss is symmetric only to
    # rounding); required for exact node-set invariance under sign flips
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    if m % 2 == 1:
        x[m // 2] = 0.0
    idx = np.arange(m)
    ix, iy, iz = np.meshgrid(idx, idx, idx, indexing="ij")
    # flat = ix + m*iy + m^2*iz  -> x index fastest
    order = (ix + m * iy + m * m * iz).ravel()
    nodes = np.empty((m ** 3, 3))
    nodes[order, 0] = x[ix].ravel()
    nodes[order, 1] = x[iy].ravel()
    nodes[order, 2] = x[iz].ravel()
    weights = np.empty(m ** 3)
    weights[order] = (w[ix] * w[iy] * w[iz]).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    x.setflags(write=False)
    w.setflags(write=False)
    return ReferenceNodeSet(m=m, nodes1d=x, weights1d=w, nodes=nodes, weights=weights)


@dataclass(frozen=True)
class Element:
    """One cubic element: center, edge length, per-node permittivity contrast.

    ``node_positions`` are computed as center + (a/2)*reference_node with one
    multiply-add per coordinate, so rebuilding an element from the same
    parameters reproduces bit-identical positions.
    """

    center: np.ndarray        # (3,)
    a: float                  # edge length
    m: int
    node_positions: np.ndarray  # (m^3, 3)
    delta_eps: np.ndarray       # (m^3,) complex contrast at the nodes

    @property
    def n_nodes(self) -> int:
        return self.m ** 3

    def to_reference(self, points: np.ndarray) -> np.ndarray:
        """Map physical points (..., 3) to reference coordinates."""
        return (np.asarray(points, dtype=float) - self.center) * (2.0 / self.a)

    def from_reference(self, xi: np.ndarray) -> np.ndarray:
        """Map reference coordinates (..., 3) to physical points."""
        return self.center + (self.a / 2.0) * np.asarray(xi, dtype=float)

    def contains(self, point: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(np.asarray(point) - self.center) <= self.a / 2.0 + tol))


@dataclass(frozen=True)
class Mesh:
    """Collection of congruent cubic elements with disjoint interiors."""

    elements: tuple[Element, ...]
    m: int

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def nodes_per_element(self) -> int:
        return self.m ** 3

    @property
    def n_nodes(self) -> int:
        return self.n_elements * self.nodes_per_element

    def all_node_positions(self) -> np.ndarray:
        """(N*M, 3) node positions, element-major."""
        return np.concatenate([e.node_positions for e in self.elements], axis=0)

    def all_delta_eps(self) -> np.ndarray:
        return np.concatenate([e.delta_eps for e in self.elements], axis=0)


ContrastFn = Callable[[np.ndarray], "complex | np.ndarray"]


def _eval_contrast(delta_eps_fn: ContrastFn, points: np.ndarray) -> np.ndarray:
    """Evaluate a contrast callable at (M, 3) points, broadcasting scalars."""
    raw = delta_eps_fn(points)
    arr = np.asarray(raw, dtype=complex)
    if arr.ndim == 0:
        return np.full(points.shape[0], complex(arr), dtype=complex)
    if arr.shape != (points.shape[0],):
        raise ParameterError(
            f"contrast function returned shape {arr.shape}, expected scalar or ({points.shape[0]},)")
    return arr


def _make_element(center: np.ndarray, a: float, m: int, delta_eps_fn: ContrastFn) -> Element:
    ref = reference_nodes(m)
    center = np.asarray(center, dtype=float).copy()
    positions = center + (a / 2.0) * ref.nodes
    deps = _eval_contrast(delta_eps_fn, positions)
    center.setflags(write=False)
    positions.setflags(write=False)
    deps.setflags(write=False)
    return Element(center=center, a=float(a), m=m, node_positions=positions, delta_eps=deps)


def build_mesh(domain_min: Sequence[float], domain_max: Sequence[float],
               n_per_axis: Sequence[int], m: int,
               delta_eps_fn: ContrastFn) -> Mesh:
    """Uniform grid of cubic elements over an axis-aligned box.

    The box divided by ``n_per_axis`` must produce *cubic* cells (equal edge
    on every axis); anything else raises GeometryError.
    """
    lo = np.asarray(domain_min, dtype=float)
    hi = np.asarray(domain_max, dtype=float)
    n = np.asarray(n_per_axis, dtype=int)
    if lo.shape != (3,) or hi.shape != (3,) or n.shape != (3,):
        raise ParameterError("domain_min, domain_max, n_per_axis must each have 3 entries")
    if np.any(n < 1):
        raise ParameterError(f"n_per_axis must be >= 1, got {n.tolist()}")
    if np.any(hi <= lo):
        raise GeometryError(f"domain_max must exceed domain_min componentwise, got {lo.tolist()}..{hi.tolist()}")
    edges = (hi - lo) / n
    a = float(edges[0])
    if not np.allclose(edges, a, rtol=1e-12, atol=0.0):
        raise GeometryError(f"cells must be cubes; per-axis edges {edges.tolist()} differ")
    elements = []
    for iz in range(n[2]):
        for iy in range(n[1]):
            for ix in range(n[0]):
                center = lo + a * (np.array([ix, iy, iz], dtype=float) + 0.5)
                elements.append(_make_element(center, a, m, delta_eps_fn))
    return Mesh(elements=tuple(elements), m=m)


def mesh_from_centers(centers: Sequence[Sequence[float]], edge: float, m: int,
                      delta_eps_fn: ContrastFn) -> Mesh:
    """Mesh of congruent cubes at explicit centers (e.g. sparse arrays with
    gaps that a uniform grid cannot express).  Interiors must be disjoint."""
    pts = np.asarray(centers, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
        raise ParameterError("centers must be a non-empty sequence of 3-vectors")
    if not (edge > 0):
        raise ParameterError(f"edge must be positive, got {edge}")
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            gap = np.max(np.abs(pts[i] - pts[j]))
            if gap < edge - 1e-12:
                raise GeometryError(
                    f"elements {i} and {j} overlap: centers {pts[i].tolist()} / {pts[j].tolist()}, edge {edge}")
    elements = tuple(_make_element(c, edge, m, delta_eps_fn) for c in pts)
    return Mesh(elements=elements, m=m)
