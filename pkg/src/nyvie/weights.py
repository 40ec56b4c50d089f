"""Interpolated quadrature weight tables for singular kernels on the reference cube.

For each singularity node r_j of the m^3 tensor Gauss grid on [-1, 1]^3 and
each cardinal basis function phi_n, the table stores the cube-minus-ball
moments

    scalar  w^(k)_{j,n} = Int_{[-1,1]^3 \\ B(r_j, delta)} phi_n(r') / R^k dV'
    matrix  L^(k)_{j,n} = Int_{[-1,1]^3 \\ B(r_j, delta)} phi_n(r') (u u^T) / R^k dV'

for the weak (k=1), strong (k=2) and hypersingular (k=3) kernels, with
R = |r' - r_j| and u = (r' - r_j)/R.  A kernel recipe combines the six
moment families into the quadrature rule

    Int_{cube \\ ball} interp(f)(r') K(R, u) dV'
        ~= sum_n f[n] * (sum_k c_k w^(k)_{j,n} I + sum_k d_k L^(k)_{j,n})

for any kernel K expressible as sum_k (c_k I + d_k u u^T) / R^k, where
interp(f) is the tensor Lagrange interpolant of the samples f on the nodes.
The rule is exact (up to the brute-force builder's accuracy) whenever f is a
tensor-product polynomial of per-axis degree <= m-1.

Symmetry: the node set is invariant under the 48 signed axis permutations of
the cube, so moments are computed once per node class (orbit) and propagated
by index permutation and conjugation; class representatives are additionally
averaged over their stabilizer subgroup, which enforces the exact symmetry
invariants (equal diagonals, vanishing odd couplings) to machine precision.

A completed table is immutable and safe to share across threads.
"""

from __future__ import annotations

import hashlib
import itertools
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import reference_nodes
from .errors import (GeometryError, ParameterError, TableCorruptionError,
                     TableFormatError)
from .quadrature import (TABLE_RESOLUTION, BruteForceResolution,
                         cube_minus_ball_quadrature, lagrange_basis_3d)

TABLE_MAGIC = "VIEWT"
TABLE_VERSION = 1
#: weight tables are supported for this node range (classes grow with m)
MIN_TABLE_M = 3
MAX_TABLE_M = 7

#: storage order of the six independent entries of a symmetric 3x3 matrix
MATRIX_COMPONENTS = ("xx", "yy", "zz", "xy", "xz", "yz")
_COMP_IJ = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
_ROW_IDX = np.array([ij[0] for ij in _COMP_IJ])
_COL_IDX = np.array([ij[1] for ij in _COMP_IJ])

#: cap on points per basis-evaluation slice while accumulating moments
_SLICE_BYTES = 2.0e8


def sym6_to_full(six: np.ndarray) -> np.ndarray:
    """(..., 6) packed symmetric entries -> (..., 3, 3) full matrices."""
    six = np.asarray(six)
    out = np.empty(six.shape[:-1] + (3, 3), dtype=six.dtype)
    for c, (i, j) in enumerate(_COMP_IJ):
        out[..., i, j] = six[..., c]
        out[..., j, i] = six[..., c]
    return out


def full_to_sym6(mat: np.ndarray) -> np.ndarray:
    """(..., 3, 3) symmetric matrices -> (..., 6) packed entries."""
    mat = np.asarray(mat)
    return mat[..., _ROW_IDX, _COL_IDX]


def max_delta(m: int) -> float:
    """Largest exclusion radius for which every node's ball stays interior."""
    nodes1d = reference_nodes(m).nodes1d
    return float(1.0 - np.max(np.abs(nodes1d)))


# ---------------------------------------------------------------------------
# node-class symmetry machinery


@dataclass(frozen=True)
class NodeOrbit:
    """One node class: canonical representative, members, and group data.

    ``to_member[j]`` is the index (into the group) of a transform T with
    T(rep) = member j; ``stabilizer`` lists group indices fixing the rep.
    """

    rep: int
    members: tuple[int, ...]
    to_member: dict[int, int]
    stabilizer: tuple[int, ...]
    levels: tuple[int, ...]


@lru_cache(maxsize=None)
def symmetry_group(m: int):
    """The 48 signed axis permutations acting on the m^3 node grid.

    Returns (mats, node_maps, inv_maps): mats[t] is the 3x3 signed permutation
    matrix P_t; node_maps[t][f] is the flat index of P_t applied to node f;
    inv_maps[t] is the inverse permutation.
    """
    ref = reference_nodes(m)
    M = m ** 3
    flat = np.arange(M)
    ix = flat % m
    iy = (flat // m) % m
    iz = flat // (m * m)
    idx = np.stack([ix, iy, iz])                      # (3, M)
    mats = []
    node_maps = []
    inv_maps = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            P = np.zeros((3, 3))
            new_idx = np.empty_like(idx)
            for a in range(3):
                P[a, perm[a]] = signs[a]
                src = idx[perm[a]]
                new_idx[a] = src if signs[a] > 0 else (m - 1) - src
            node_map = new_idx[0] + m * new_idx[1] + m * m * new_idx[2]
            mats.append(P)
            node_maps.append(node_map)
            inv_maps.append(np.argsort(node_map))
    # sanity: the index action must reproduce the coordinate action exactly
    check = mats[1] @ ref.nodes.T                      # arbitrary non-identity
    if not np.array_equal(check.T, ref.nodes[node_maps[1]]):
        raise AssertionError("node symmetry maps disagree with coordinate action")
    return tuple(mats), tuple(node_maps), tuple(inv_maps)


@lru_cache(maxsize=None)
def node_orbits(m: int) -> tuple[NodeOrbit, ...]:
    """Node classes of the m^3 grid under the 48 signed axis permutations.

    The canonical representative of each class has coordinates sorted by
    magnitude ascending along (x, y, z) with every coordinate nonpositive;
    e.g. for m=3 the four classes are represented by the corner
    (-v,-v,-v), the edge (0,-v,-v), the face (0,0,-v) and the center.
    """
    _, node_maps, _ = symmetry_group(m)
    M = m ** 3
    flat = np.arange(M)
    ix, iy, iz = flat % m, (flat // m) % m, flat // (m * m)
    # magnitude level per axis: distance from the nearest end of the 1-D node
    # array; larger level = smaller |coordinate| (level (m-1)//2 is the center)
    lev = np.stack([np.minimum(i, m - 1 - i) for i in (ix, iy, iz)], axis=1)
    canon = -np.sort(-lev, axis=1)                    # descending levels
    canon_flat = canon[:, 0] + m * canon[:, 1] + m * m * canon[:, 2]
    orbits = []
    for rep in sorted(set(canon_flat.tolist())):
        members = sorted(set(int(nm[rep]) for nm in node_maps))
        to_member = {}
        stab = []
        for t, nm in enumerate(node_maps):
            target = int(nm[rep])
            if target not in to_member:
                to_member[target] = t
            if target == rep:
                stab.append(t)
        levels = tuple(int(v) for v in canon[np.nonzero(canon_flat == rep)[0][0]])
        orbits.append(NodeOrbit(rep=rep, members=tuple(members),
                                to_member=to_member, stabilizer=tuple(stab),
                                levels=levels))
    if sum(len(o.members) for o in orbits) != M:
        raise AssertionError("node orbits do not partition the grid")
    return tuple(orbits)


# ---------------------------------------------------------------------------
# the table


@dataclass(frozen=True)
class WeightTable:
    """Cube-minus-ball singular-kernel moments on the reference cube.

    scalar[j, k-1, n] and matrix[j, k-1, n, c] hold the scalar and packed
    symmetric matrix moments for singularity node j, kernel power k in
    {1, 2, 3} and basis node n; c indexes MATRIX_COMPONENTS.
    ``resolution`` identifies the brute-force preset used to build the table
    and ``built`` is an informational UTC timestamp (excluded from the
    checksum so identical builds reproduce identical checksums).
    """

    m: int
    delta: float
    scalar: np.ndarray        # (M, 3, M) float64
    matrix: np.ndarray        # (M, 3, M, 6) float64
    resolution: str = ""
    built: str = ""

    def __post_init__(self):
        M = self.m ** 3
        scalar = np.ascontiguousarray(np.asarray(self.scalar, dtype=np.float64))
        matrix = np.ascontiguousarray(np.asarray(self.matrix, dtype=np.float64))
        if scalar.shape != (M, 3, M):
            raise ParameterError(f"scalar moments must have shape {(M, 3, M)}, got {scalar.shape}")
        if matrix.shape != (M, 3, M, 6):
            raise ParameterError(f"matrix moments must have shape {(M, 3, M, 6)}, got {matrix.shape}")
        if not (np.all(np.isfinite(scalar)) and np.all(np.isfinite(matrix))):
            raise ParameterError("weight table contains non-finite entries")
        scalar.setflags(write=False)
        matrix.setflags(write=False)
        object.__setattr__(self, "scalar", scalar)
        object.__setattr__(self, "matrix", matrix)
        if not (self.delta > 0.0):
            raise ParameterError(f"table delta must be positive, got {self.delta!r}")

    @property
    def n_nodes(self) -> int:
        return self.m ** 3

    def header_line(self) -> str:
        return (f"{TABLE_MAGIC} {TABLE_VERSION} m={self.m} "
                f"delta={self.delta!r} res={self.resolution}")

    def payload(self) -> bytes:
        """Binary payload: doubles, j-major, then power k, then basis node,
        each group ordered (scalar, xx, yy, zz, xy, xz, yz)."""
        M = self.n_nodes
        arr = np.empty((M, 3, M, 7), dtype="<f8")
        arr[..., 0] = self.scalar
        arr[..., 1:] = self.matrix
        return arr.tobytes()

    def checksum(self) -> str:
        """16-hex-digit content checksum (header + payload; timestamp excluded)."""
        payload = self.payload()
        h = hashlib.sha256()
        h.update(self.header_line().encode("ascii"))
        h.update(struct.pack("<Q", len(payload)))
        h.update(payload)
        return h.digest()[:8].hex()

    def matrix_full(self, j: int) -> np.ndarray:
        """(3, M, 3, 3) unpacked matrix moments for singularity node j."""
        return sym6_to_full(self.matrix[j])


# ---------------------------------------------------------------------------
# construction


def _accumulate_moments(chunks, node: np.ndarray, m: int):
    """Sum basis x weighted-kernel products over quadrature chunks.

    Returns (scalar (3, M), matrix (3, M, 6)) moment accumulators for the
    singularity at ``node``.
    """
    M = m ** 3
    acc = np.zeros((M, 21))
    cap = max(4096, int(_SLICE_BYTES / (8 * M)))
    for pts, w in chunks:
        for start in range(0, pts.shape[0], cap):
            p = pts[start:start + cap]
            ww = w[start:start + cap]
            d = p - node
            R = np.sqrt(np.einsum("qc,qc->q", d, d))
            u = d / R[:, None]
            uu6 = u[:, _ROW_IDX] * u[:, _COL_IDX]            # (Q, 6)
            phi = lagrange_basis_3d(m, p)                    # (Q, M)
            cols = np.empty((p.shape[0], 21))
            wk = ww / R
            for k in range(3):
                cols[:, 7 * k] = wk
                cols[:, 7 * k + 1:7 * k + 7] = wk[:, None] * uu6
                if k < 2:
                    wk = wk / R
            acc += phi.T @ cols
    acc = acc.reshape(M, 3, 7).transpose(1, 0, 2)            # (3, M, 7)
    return np.ascontiguousarray(acc[..., 0]), np.ascontiguousarray(acc[..., 1:])


def _symmetrize_rep(orbit: NodeOrbit, m: int, scal, mat6):
    """Average a representative's moments over its stabilizer subgroup.

    Exact values are fixed points of this projection, so it only removes
    asymmetric quadrature noise and enforces the class invariants exactly.
    """
    mats, _, inv_maps = symmetry_group(m)
    full = sym6_to_full(mat6)                                # (3, M, 3, 3)
    s_sum = np.zeros_like(scal)
    f_sum = np.zeros_like(full)
    for t in orbit.stabilizer:
        pi = inv_maps[t]
        P = mats[t]
        s_sum += scal[:, pi]
        f_sum += np.einsum("ab,knbc,dc->knad", P, full[:, pi], P, optimize=True)
    n = len(orbit.stabilizer)
    return s_sum / n, full_to_sym6(f_sum / n)


def compute_weight_table(m: int, delta: float,
                         res: BruteForceResolution = TABLE_RESOLUTION,
                         progress=None) -> WeightTable:
    """Build the moment table for all m^3 singularity nodes at one delta.

    The exclusion ball must fit inside the cube for every node, i.e.
    0 < delta < 1 - max |node coordinate|.  ``progress``, if given, is called
    with a status string once per node class.  Output is deterministic for
    fixed inputs (fixed chunk and summation order).
    """
    if not isinstance(m, int) or not (MIN_TABLE_M <= m <= MAX_TABLE_M):
        raise ParameterError(
            f"weight tables support {MIN_TABLE_M} <= m <= {MAX_TABLE_M}, got {m!r}")
    ref = reference_nodes(m)
    limit = max_delta(m)
    if not (0.0 < delta < limit):
        worst = ref.nodes1d[0]
        raise GeometryError(
            f"exclusion radius delta={delta!r} must lie in (0, {limit:.6g}) so the "
            f"ball around the extreme node ({worst:.6g}, {worst:.6g}, {worst:.6g}) "
            f"stays inside the cube")
    M = m ** 3
    mats, _, inv_maps = symmetry_group(m)
    orbits = node_orbits(m)
    scalar = np.empty((M, 3, M))
    matrix = np.empty((M, 3, M, 6))
    for oi, orbit in enumerate(orbits):
        if progress is not None:
            progress(f"node class {oi + 1}/{len(orbits)} "
                     f"(levels {orbit.levels}, {len(orbit.members)} nodes)")
        node = ref.nodes[orbit.rep]
        chunks = cube_minus_ball_quadrature(node, delta, res)
        scal, mat6 = _accumulate_moments(chunks, node, m)
        scal, mat6 = _symmetrize_rep(orbit, m, scal, mat6)
        full = sym6_to_full(mat6)                            # (3, M, 3, 3)
        for j in orbit.members:
            t = orbit.to_member[j]
            pi = inv_maps[t]
            P = mats[t]
            scalar[j] = scal[:, pi]
            rot = np.einsum("ab,knbc,dc->knad", P, full[:, pi], P, optimize=True)
            matrix[j] = full_to_sym6(rot)
    return WeightTable(m=m, delta=float(delta), scalar=scalar, matrix=matrix,
                       resolution=res.ident(),
                       built=datetime.now(timezone.utc).isoformat(timespec="seconds"))


def scale_weight_table(table: WeightTable, a: float) -> WeightTable:
    """Rescale reference moments to an element of edge length ``a``.

    Power-k moments are multiplied by (2/a)^k; together with the (a/2)^3
    volume factor applied at assembly time this reproduces the physical-space
    integral with exclusion radius (a/2) * table.delta.
    """
    if not (a > 0.0):
        raise ParameterError(f"element edge must be positive, got {a!r}")
    f = np.array([2.0 / a, (2.0 / a) ** 2, (2.0 / a) ** 3])
    return WeightTable(m=table.m, delta=table.delta,
                       scalar=table.scalar * f[None, :, None],
                       matrix=table.matrix * f[None, :, None, None],
                       resolution=table.resolution, built=table.built)


# ---------------------------------------------------------------------------
# recipes and application


@dataclass(frozen=True)
class KernelRecipe:
    """Coefficients combining the moment families into one dyadic kernel.

    Represents the kernel sum_k (scalar[k-1] I + matrix[k-1] u u^T) / R^k for
    k = 1, 2, 3; applied to a table it yields
    sum_k scalar[k-1] w^(k) I + matrix[k-1] L^(k) per (j, n) pair.
    """

    scalar: tuple
    matrix: tuple

    def __post_init__(self):
        for name in ("scalar", "matrix"):
            v = tuple(complex(c) for c in getattr(self, name))
            if len(v) != 3:
                raise ParameterError(f"recipe {name} needs 3 coefficients, got {len(v)}")
            object.__setattr__(self, name, v)

    @property
    def is_real(self) -> bool:
        return all(c.imag == 0.0 for c in self.scalar + self.matrix)


#: weak kernel paired with (I - u u^T), strong and hypersingular with
#: (I - 3 u u^T); the combination used by the accuracy benchmark tables
BENCHMARK_RECIPE = KernelRecipe(scalar=(1.0, 1.0, 1.0), matrix=(-1.0, -3.0, -3.0))


def dyadic_recipe(k: float) -> KernelRecipe:
    """Oscillation-stripped dyadic kernel recipe.

    Combining with sample values f[n] = e^{-i k R_n} g[n] and a 1/(4 pi)
    prefactor reproduces the quadrature of the full dyadic Green's kernel
    against interp(g).
    """
    if not (k > 0.0):
        raise ParameterError(f"wavenumber must be positive, got {k!r}")
    return KernelRecipe(scalar=(1.0, -1j / k, -1.0 / k ** 2),
                        matrix=(-1.0, 3j / k, 3.0 / k ** 2))


def combine_weights(table: WeightTable, j: int, recipe: KernelRecipe) -> np.ndarray:
    """Per-basis-node dyadics (M, 3, 3) for singularity node j under a recipe."""
    if not (0 <= j < table.n_nodes):
        raise ParameterError(f"singularity index {j!r} out of range 0..{table.n_nodes - 1}")
    if recipe.is_real:
        cs = np.array([c.real for c in recipe.scalar])
        cm = np.array([c.real for c in recipe.matrix])
    else:
        cs = np.asarray(recipe.scalar, dtype=np.complex128)
        cm = np.asarray(recipe.matrix, dtype=np.complex128)
    scal = np.tensordot(cs, table.scalar[j], axes=(0, 0))        # (M,)
    mat6 = np.tensordot(cm, table.matrix[j], axes=(0, 0))        # (M, 6)
    out = sym6_to_full(mat6)
    out[..., 0, 0] += scal
    out[..., 1, 1] += scal
    out[..., 2, 2] += scal
    return out


def apply_weights(table: WeightTable, j: int, f_values, recipe: KernelRecipe) -> np.ndarray:
    """Quadrature of interp(f) x kernel over cube-minus-ball: a 3x3 dyadic.

    ``f_values`` are the M samples of the smooth factor at the reference
    nodes; the kernel is defined by the recipe.
    """
    f = np.asarray(f_values)
    if f.shape != (table.n_nodes,):
        raise ParameterError(
            f"need {table.n_nodes} sample values, got array of shape {f.shape}")
    per_node = combine_weights(table, j, recipe)
    return np.tensordot(f, per_node, axes=(0, 0))


# ---------------------------------------------------------------------------
# persistence


def save_table(table: WeightTable, destination) -> Path:
    """Write the table in the versioned binary format; returns the path.

    Layout: two ASCII header lines (identity line, then the informational
    build timestamp), an 8-byte little-endian payload length, the payload
    doubles, and an 8-byte checksum over (identity line + length + payload).
    """
    path = Path(destination)
    payload = table.payload()
    header = table.header_line()
    blob = (header.encode("ascii") + b"\n"
            + f"built={table.built}".encode("ascii") + b"\n"
            + struct.pack("<Q", len(payload)) + payload
            + bytes.fromhex(table.checksum()))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    return path


def _parse_header(line: bytes) -> tuple[int, float, str]:
    try:
        text = line.decode("ascii")
    except UnicodeDecodeError as exc:
        raise TableFormatError(f"undecodable table header: {exc}") from None
    parts = text.split()
    if len(parts) < 2 or parts[0] != TABLE_MAGIC:
        raise TableFormatError(f"not a weight-table file (header {text[:40]!r})")
    if parts[1] != str(TABLE_VERSION):
        raise TableFormatError(
            f"unsupported weight-table version {parts[1]!r} (supported: {TABLE_VERSION})")
    fields = dict(p.split("=", 1) for p in parts[2:] if "=" in p)
    try:
        m = int(fields["m"])
        delta = float(fields["delta"])
    except (KeyError, ValueError) as exc:
        raise TableFormatError(f"malformed table header fields: {exc}") from None
    return m, delta, fields.get("res", "")


def load_table(source) -> WeightTable:
    """Read and verify a table written by save_table.

    Fail-closed: bad magic or version raise a format error; truncation,
    length mismatch, checksum mismatch or non-finite payload raise a
    corruption error.  Round-trips are bit-exact.
    """
    path = Path(source)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise TableFormatError(f"cannot read weight table {path}: {exc}") from exc
    nl1 = blob.find(b"\n")
    nl2 = blob.find(b"\n", nl1 + 1) if nl1 >= 0 else -1
    if nl1 < 0 or nl2 < 0:
        raise TableFormatError(f"{path}: missing table header lines")
    header = blob[:nl1]
    built_line = blob[nl1 + 1:nl2].decode("ascii", errors="replace")
    built = built_line[len("built="):] if built_line.startswith("built=") else ""
    m, delta, res = _parse_header(header)
    body = blob[nl2 + 1:]
    if len(body) < 8:
        raise TableCorruptionError(f"{path}: truncated before payload length")
    (length,) = struct.unpack("<Q", body[:8])
    if not (1 <= m <= 16):
        raise TableFormatError(f"{path}: nodes-per-axis {m} out of supported range")
    M = m ** 3
    expected = M * 3 * M * 7 * 8
    if length != expected:
        raise TableCorruptionError(
            f"{path}: payload length {length} does not match m={m} (expected {expected})")
    if len(body) != 8 + length + 8:
        kind = "truncated" if len(body) < 8 + length + 8 else "trailing bytes after checksum"
        raise TableCorruptionError(f"{path}: {kind} (payload {length} bytes)")
    payload = body[8:8 + length]
    stored_sum = body[8 + length:]
    h = hashlib.sha256()
    h.update(header)
    h.update(struct.pack("<Q", length))
    h.update(payload)
    if h.digest()[:8] != stored_sum:
        raise TableCorruptionError(f"{path}: checksum mismatch")
    arr = np.frombuffer(payload, dtype="<f8").reshape(M, 3, M, 7)
    if not np.all(np.isfinite(arr)):
        raise TableCorruptionError(f"{path}: non-finite payload entries")
    table = WeightTable(m=m, delta=delta, scalar=arr[..., 0].copy(),
                        matrix=arr[..., 1:].copy(), resolution=res, built=built)
    return table
