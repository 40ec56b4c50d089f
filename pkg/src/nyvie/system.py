"""Collocation assembly and solution of the volume-integral-equation system.

Unknowns are the three Cartesian field components at every mesh node,
flattened component-major: index = component * (N*M) + element * M + node.
The row for a collocation node balances the depolarization coefficient
(1 + contrast/3) I against the quadrature of the dyadic kernel over all
elements (interpolated singular weights on the node's own element, standard
Gauss weights elsewhere) and the exclusion-ball correction block, with the
incident field on the right-hand side.

Dense assembly is the default; above ``dense_limit`` rows the system keeps a
matrix-free operator that reassembles element-pair blocks on the fly per
matrix-vector product (memory-light, CPU-heavy).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .core import Element, MaterialParams, Mesh, reference_nodes
from .corrections import CorrectionConfig, correction_block
from .errors import ConfigError, DomainError, ParameterError, SolverError
from .greens import dyadic_G_pairs
from .quadrature import lagrange_basis_3d
from .weights import WeightTable, combine_weights, dyadic_recipe, scale_weight_table

FOUR_PI = 4.0 * np.pi
#: dense assembly is used while 3*N*M does not exceed this
DEFAULT_DENSE_LIMIT = 20_000


@dataclass(frozen=True)
class IncidentWave:
    """Single-component exponential incident field.

    The stated component carries amplitude * e^{i k (p . r)} with p the
    phase vector; the other components are zero.  The phase vector is used
    verbatim (no normalization).
    """

    component: str
    phase_vector: np.ndarray
    amplitude: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.component not in ("x", "y", "z"):
            raise ParameterError(f"component must be 'x', 'y' or 'z', got {self.component!r}")
        p = np.asarray(self.phase_vector, dtype=float)
        if p.shape != (3,):
            raise ParameterError("phase_vector must be a real 3-vector")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "phase_vector", p)
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    @property
    def component_index(self) -> int:
        return "xyz".index(self.component)


def incident_field(wave: IncidentWave, k: float, points) -> np.ndarray:
    """Incident field at one point (3,) or a batch (P, 3)."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    out = np.zeros((pts.shape[0], 3), dtype=np.complex128)
    phase = np.exp(1j * k * (pts @ wave.phase_vector))
    out[:, wave.component_index] = wave.amplitude * phase
    return out[0] if single else out


def assemble_A_far(target_node, source_element: Element, mat: MaterialParams) -> np.ndarray:
    """Standard-quadrature interaction dyadics (M, 3, 3) from one element.

    Entry n is (a/2)^3 * contrast_n * dyadic(target, node_n) * gauss_weight_n.
    The target must lie outside the source element (its own element is
    handled by the interpolated singular weights).
    """
    r = np.asarray(target_node, dtype=float)
    if source_element.contains(r):
        raise ParameterError(
            "target node lies inside the source element; use assemble_A_self")
    ref = reference_nodes(source_element.m)
    G = dyadic_G_pairs(mat.k, r[None, :], source_element.node_positions)[0]
    fac = ((0.5 * source_element.a) ** 3 * source_element.delta_eps * ref.weights)
    return fac[:, None, None] * G


def assemble_A_self(element: Element, j: int, table: WeightTable,
                    mat: MaterialParams) -> np.ndarray:
    """Singular-quadrature self-interaction dyadics (M, 3, 3) for node j.

    Combines the per-element scaled weight table with the oscillation-stripped
    dyadic recipe and the node-frozen smooth factors contrast_n e^{-i k R_n}.
    """
    if table.m != element.m:
        raise ConfigError(
            f"weight table is for m={table.m} but element has m={element.m}")
    scaled = scale_weight_table(table, element.a)
    return _self_rows(element, [j], scaled, mat)[0]


def _self_rows(element: Element, rows, scaled: WeightTable,
               mat: MaterialParams) -> np.ndarray:
    """Self-interaction dyadics for several collocation rows: (len(rows), M, 3, 3)."""
    k = mat.k
    recipe = dyadic_recipe(k)
    pref = (0.5 * element.a) ** 3 / FOUR_PI
    out = np.empty((len(rows), element.n_nodes, 3, 3), dtype=np.complex128)
    pos = element.node_positions
    for i, j in enumerate(rows):
        dist = np.sqrt(np.einsum("nc,nc->n", pos - pos[j], pos - pos[j]))
        f = element.delta_eps * np.exp(-1j * k * dist)
        out[i] = pref * f[:, None, None] * combine_weights(scaled, j, recipe)
    return out


@dataclass(frozen=True)
class VieSystem:
    """Assembled linear system: dense matrix or matrix-free operator.

    ``matrix`` is (3NM, 3NM) complex when dense, else None and ``_context``
    holds what the operator needs.  rhs is ordered component-major.
    """

    mesh: Mesh
    mat: MaterialParams
    rhs: np.ndarray
    matrix: np.ndarray | None
    table_checksum: str = ""
    _context: dict | None = field(default=None, repr=False)

    @property
    def n_flat(self) -> int:
        return self.mesh.n_nodes

    @property
    def size(self) -> int:
        return 3 * self.n_flat

    def node_index(self, element: int, node: int, component: int = 0) -> int:
        """Flat row index of (element, node) for one field component."""
        if not (0 <= element < self.mesh.n_elements):
            raise ParameterError(f"element index {element} out of range")
        if not (0 <= node < self.mesh.nodes_per_element):
            raise ParameterError(f"node index {node} out of range")
        if not (0 <= component < 3):
            raise ParameterError(f"component index {component} out of range")
        return component * self.n_flat + element * self.mesh.nodes_per_element + node

    def block(self, comp_row: int, comp_col: int) -> np.ndarray:
        """View of one NMxNM component block of the dense matrix."""
        if self.matrix is None:
            raise ParameterError("block access requires dense assembly")
        n = self.n_flat
        return self.matrix[comp_row * n:(comp_row + 1) * n,
                           comp_col * n:(comp_col + 1) * n]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        if x.shape != (self.size,):
            raise ParameterError(f"operand must have shape ({self.size},)")
        if self.matrix is not None:
            return self.matrix @ x
        return _operator_matvec(self, x)

    def as_linear_operator(self) -> scipy.sparse.linalg.LinearOperator:
        return scipy.sparse.linalg.LinearOperator(
            (self.size, self.size), matvec=self.matvec, dtype=np.complex128)


def _pair_block(mesh: Mesh, mat: MaterialParams, ei: int, en: int,
                scaled_tables: dict, cfg: CorrectionConfig) -> np.ndarray:
    """Full (M, M, 3, 3) coupling of target element ei to source element en.

    Includes the -omega^2 mu factor and (for the self pair) the correction
    block; excludes the diagonal depolarization coefficient.
    """
    k = mat.k
    om2mu = mat.omega ** 2 * mat.mu
    tgt = mesh.elements[ei]
    src = mesh.elements[en]
    M = mesh.nodes_per_element
    if ei != en:
        G = dyadic_G_pairs(k, tgt.node_positions, src.node_positions)
        fac = (0.5 * src.a) ** 3 * src.delta_eps * reference_nodes(src.m).weights
        return (-om2mu) * fac[None, :, None, None] * G
    block = (-om2mu) * _self_rows(tgt, range(M), scaled_tables[tgt.a], mat)
    for j in range(M):
        block[j] -= correction_block(tgt, j, mat, cfg)
    return block


def _scaled_tables(mesh: Mesh, table: WeightTable) -> dict:
    return {a: scale_weight_table(table, a)
            for a in sorted({el.a for el in mesh.elements})}


def assemble_system(mesh: Mesh, mat: MaterialParams, wave: IncidentWave,
                    table: WeightTable, cfg: CorrectionConfig,
                    dense_limit: int = DEFAULT_DENSE_LIMIT) -> VieSystem:
    """Build the collocation system for a mesh, material and incident wave.

    The weight table must match the mesh's nodes-per-axis and the correction
    config's exclusion radius must equal the table's.  Assembly is
    deterministic (fixed element order and summation order).
    """
    if table.m != mesh.m:
        raise ConfigError(f"weight table m={table.m} does not match mesh m={mesh.m}")
    if cfg.delta != table.delta:
        raise ConfigError(
            f"correction delta {cfg.delta!r} must equal the weight table delta "
            f"{table.delta!r}")
    NM = mesh.n_nodes
    size = 3 * NM
    rhs = incident_field(wave, mat.k, mesh.all_node_positions())
    rhs_flat = np.concatenate([rhs[:, 0], rhs[:, 1], rhs[:, 2]])
    scaled = _scaled_tables(mesh, table)
    checksum = table.checksum()
    if size > dense_limit:
        ctx = {"scaled_tables": scaled, "cfg": cfg, "wave": wave}
        return VieSystem(mesh=mesh, mat=mat, rhs=rhs_flat, matrix=None,
                         table_checksum=checksum, _context=ctx)
    M = mesh.nodes_per_element
    V = np.zeros((size, size), dtype=np.complex128)
    for ei in range(mesh.n_elements):
        for en in range(mesh.n_elements):
            blk = _pair_block(mesh, mat, ei, en, scaled, cfg)
            for b1 in range(3):
                for b2 in range(3):
                    V[b1 * NM + ei * M: b1 * NM + (ei + 1) * M,
                      b2 * NM + en * M: b2 * NM + (en + 1) * M] = blk[..., b1, b2]
    coeff = 1.0 + mesh.all_delta_eps() / 3.0
    idx = np.arange(NM)
    for b in range(3):
        V[b * NM + idx, b * NM + idx] += coeff
    return VieSystem(mesh=mesh, mat=mat, rhs=rhs_flat, matrix=V,
                     table_checksum=checksum)


def _operator_matvec(system: VieSystem, x: np.ndarray) -> np.ndarray:
    mesh = system.mesh
    ctx = system._context
    NM = system.n_flat
    M = mesh.nodes_per_element
    xc = x.reshape(3, NM)
    out = np.empty_like(xc)
    coeff = 1.0 + mesh.all_delta_eps() / 3.0
    for b in range(3):
        out[b] = coeff * xc[b]
    for ei in range(mesh.n_elements):
        for en in range(mesh.n_elements):
            blk = _pair_block(mesh, system.mat, ei, en,
                              ctx["scaled_tables"], ctx["cfg"])
            seg = xc[:, en * M:(en + 1) * M]                      # (3, M)
            contrib = np.einsum("jmab,bm->aj", blk, seg)
            out[:, ei * M:(ei + 1) * M] += contrib
    return out.reshape(-1)


@dataclass(frozen=True)
class Solution:
    """Solved coefficients with the mesh needed to evaluate them."""

    coefficients: np.ndarray          # (3NM,) component-major
    mesh: Mesh
    method: str
    residual: float
    residual_history: tuple = ()

    def components(self) -> np.ndarray:
        """(3, N, M) view of the coefficients."""
        return self.coefficients.reshape(3, self.mesh.n_elements,
                                         self.mesh.nodes_per_element)


def _residual(system: VieSystem, x: np.ndarray) -> float:
    r = system.matvec(x) - system.rhs
    denom = float(np.linalg.norm(system.rhs))
    return float(np.linalg.norm(r)) / (denom if denom > 0.0 else 1.0)


def solve_gmres(system: VieSystem, tol: float = 1e-10, restart: int = 50,
                max_iter: int = 1000, preconditioner: str = "none") -> Solution:
    """Restarted GMRES solve; records the preconditioned residual history.

    ``preconditioner`` is "none" (default; the system is second-kind and
    well-conditioned) or "diagonal" (right-scaling by the inverse diagonal).
    Raises a solver error carrying the best iterate and its residual when the
    iteration does not reach ``tol`` within ``max_iter`` (outer) iterations.
    """
    if not (0.0 < tol <= 1e-2):
        raise ParameterError(f"gmres tolerance must lie in (0, 1e-2], got {tol!r}")
    if preconditioner not in ("none", "diagonal"):
        raise ParameterError(
            f"preconditioner must be 'none' or 'diagonal', got {preconditioner!r}")
    history: list[float] = []
    op = system.as_linear_operator()
    M = None
    if preconditioner == "diagonal":
        if system.matrix is not None:
            diag = np.diagonal(system.matrix).copy()
        else:
            coeff = 1.0 + system.mesh.all_delta_eps() / 3.0
            diag = np.concatenate([coeff, coeff, coeff])
        M = scipy.sparse.linalg.LinearOperator(
            (system.size, system.size), matvec=lambda v: v / diag,
            dtype=np.complex128)
    x, info = scipy.sparse.linalg.gmres(
        op, system.rhs, rtol=tol, atol=0.0, restart=restart, maxiter=max_iter,
        M=M,
        callback=lambda pr: history.append(float(pr)), callback_type="pr_norm")
    res = _residual(system, x)
    if info != 0:
        raise SolverError(
            f"GMRES did not reach tolerance {tol:g} within {max_iter} iterations "
            f"(final relative residual {res:.3e})", iterate=x, residual=res)
    return Solution(coefficients=x, mesh=system.mesh, method="gmres",
                    residual=res, residual_history=tuple(history))


def solve_direct(system: VieSystem) -> Solution:
    """LU solve of the dense system; warns when the residual is large."""
    if system.matrix is None:
        raise ParameterError("direct solve requires dense assembly")
    try:
        lu, piv = scipy.linalg.lu_factor(system.matrix)
    except scipy.linalg.LinAlgError as exc:
        raise SolverError(f"LU factorization failed: {exc}") from exc
    x = scipy.linalg.lu_solve((lu, piv), system.rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("direct solve produced non-finite values "
                          "(matrix singular to working precision)")
    res = _residual(system, x)
    if res > 1e-10:
        warnings.warn(f"direct solve residual {res:.3e} exceeds 1e-10 "
                      f"(ill-conditioned system)", RuntimeWarning, stacklevel=2)
    return Solution(coefficients=x, mesh=system.mesh, method="direct", residual=res)


def evaluate_solution_many(sol: Solution, points) -> tuple[np.ndarray, np.ndarray]:
    """Field values at arbitrary points: ((P, 3) complex, (P,) inside mask).

    Points outside every element get a False mask entry and zeros; the field
    representation is element-local (discontinuous across element faces), and
    boundary points are attributed to the first containing element.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    P = pts.shape[0]
    vals = np.zeros((P, 3), dtype=np.complex128)
    inside = np.zeros(P, dtype=bool)
    comps = sol.components()                           # (3, N, M)
    m = sol.mesh.m
    for ei, el in enumerate(sol.mesh.elements):
        half = 0.5 * el.a
        rel = (pts - el.center) / half
        sel = np.all(np.abs(rel) <= 1.0 + 1e-12, axis=1) & ~inside
        if not np.any(sel):
            continue
        phi = lagrange_basis_3d(m, rel[sel])           # (q, M)
        for b in range(3):
            vals[sel, b] = phi @ comps[b, ei]
        inside[sel] = True
    return vals, inside


def evaluate_solution(sol: Solution, r) -> np.ndarray:
    """Field value (3,) at one point inside the mesh; errors outside."""
    vals, inside = evaluate_solution_many(sol, np.asarray(r, dtype=float)[None, :])
    if not inside[0]:
        raise DomainError(
            f"point {np.asarray(r, dtype=float).tolist()} lies outside every element "
            f"(exterior field evaluation is not supported)")
    return vals[0]
