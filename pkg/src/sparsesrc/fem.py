"""P1 finite elements on structured triangulations of the unit square.

Nodes are numbered row-major (x fastest).  Every square cell is split along
its lower-left to upper-right diagonal, so meshes with ``n`` and ``2n - 1``
nodes per side are nested.

Stiffness, mass and prolongation matrices are returned as ``scipy.sparse``
CSR matrices; the boundary mass matrix is small and returned dense.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class TriMesh:
    nodes_per_side: int
    coords: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary_nodes: np.ndarray = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / (self.nodes_per_side - 1)

    @property
    def cell_diameter(self) -> float:
        return np.sqrt(2.0) * self.h

    def node_index(self, i: int, j: int) -> int:
        """Index of the node in column ``i`` and row ``j``."""
        return j * self.nodes_per_side + i


def build_mesh(nodes_per_side: int) -> TriMesh:
    n = int(nodes_per_side)
    if n < 2:
        raise ValueError(f"nodes_per_side must be >= 2, got {nodes_per_side}")

    t = np.linspace(0.0, 1.0, n)
    xx, yy = np.meshgrid(t, t)  # row-major: y is the slow index
    coords = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(n - 1), np.arange(n - 1))
    n00 = (j * n + i).ravel()
    n10 = n00 + 1
    n01 = n00 + n
    n11 = n01 + 1
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    # interleave so that the two halves of a cell are adjacent
    triangles = np.empty((2 * lower.shape[0], 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    # counter-clockwise loop starting at the origin
    side = np.arange(n - 1)
    bottom = side
    right = (n - 1) + side * n
    top = n * n - 1 - side
    left = (n - 1 - side) * n
    boundary = np.concatenate([bottom, right, top, left]).astype(np.int64)

    return TriMesh(n, coords, triangles, boundary)


def _element_geometry(mesh: TriMesh):
    p = mesh.coords[mesh.triangles]  # (T, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    return p, 0.5 * det


def triangle_areas(mesh: TriMesh) -> np.ndarray:
    """Signed areas; positive for counter-clockwise triangles."""
    return _element_geometry(mesh)[1]


def _assemble(mesh: TriMesh, local: np.ndarray) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.num_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    """Pure Neumann Laplacian: K_ij = int grad(psi_i) . grad(psi_j)."""
    p, area = _element_geometry(mesh)
    # gradients of barycentric coordinates: rotate the opposite edge
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    edges = np.stack([e0, e1, e2], axis=1)  # (T, 3, 2)
    grads = np.stack([edges[..., 1], -edges[..., 0]], axis=-1) / (2.0 * area)[:, None, None]
    local = area[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    return _assemble(mesh, local)


_REF_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def assemble_mass(mesh: TriMesh) -> sp.csr_matrix:
    _, area = _element_geometry(mesh)
    local = area[:, None, None] * _REF_MASS[None, :, :]
    return _assemble(mesh, local)


def boundary_weights(mesh: TriMesh) -> np.ndarray:
    """Lumped boundary mass, one weight per entry of ``mesh.boundary_nodes``."""
    b = mesh.boundary_nodes
    pts = mesh.coords[b]
    lengths = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    # edge k joins boundary positions k and k+1; each end gets half
    return 0.5 * (lengths + np.roll(lengths, 1))


def assemble_boundary_mass(mesh: TriMesh) -> np.ndarray:
    """Diagonal (mass-lumped) boundary mass matrix restricted to boundary nodes."""
    return np.diag(boundary_weights(mesh))


def is_nested(coarse: TriMesh, fine: TriMesh) -> bool:
    return fine.nodes_per_side == 2 * coarse.nodes_per_side - 1


def prolongation(coarse: TriMesh, fine: TriMesh) -> sp.csr_matrix:
    """Values of the coarse hat functions at the fine nodes (fine-n x coarse-n)."""
    if not is_nested(coarse, fine):
        raise ValueError(
            f"meshes are not nested: fine has {fine.nodes_per_side} nodes per side, "
            f"expected {2 * coarse.nodes_per_side - 1}"
        )
    nc = coarse.nodes_per_side
    nf = fine.nodes_per_side
    rows, cols, vals = [], [], []
    for J in range(nf):
        for I in range(nf):
            r = J * nf + I
            i0, j0 = I // 2, J // 2
            # odd fine index -> midpoint between coarse i0 and i0 + 1
            i1 = i0 + (I % 2)
            j1 = j0 + (J % 2)
            a = j0 * nc + i0
            b = j1 * nc + i1
            if a == b:
                rows.append(r)
                cols.append(a)
                vals.append(1.0)
            else:
                # horizontal, vertical or diagonal (lower-left/upper-right) edge midpoint
                rows += [r, r]
                cols += [a, b]
                vals += [0.5, 0.5]
    return sp.csr_matrix((vals, (rows, cols)), shape=(fine.num_nodes, coarse.num_nodes))


def nested_node_map(coarse: TriMesh, fine: TriMesh) -> np.ndarray:
    """For each coarse node, the index of the coinciding fine node."""
    if not is_nested(coarse, fine):
        raise ValueError("meshes are not nested")
    nc = coarse.nodes_per_side
    nf = fine.nodes_per_side
    j, i = np.divmod(np.arange(nc * nc), nc)
    return (2 * j) * nf + 2 * i
