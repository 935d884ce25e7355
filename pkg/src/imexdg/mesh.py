"""Structured quadrilateral/hexahedral meshes over box domains.

Supports an optional terrain-following vertical mapping built from a
bell-shaped hill profile.  The hill displacement decays linearly with height
so the domain top stays flat.  Metric terms are evaluated from a polynomial
interpolant of the mapping (degree twice the solution degree, on Gauss-Lobatto
nodes), which keeps the discrete divergence of constant fields exactly zero
under consistent integration, while the interpolation error of resolved
terrain stays far below quadrature tolerances.

Cells and nodes are ordered lexicographically with the x direction fastest;
the vertical direction is always the last coordinate.
"""

from dataclasses import dataclass

import numpy as np

from .basis import lagrange_derivatives, lagrange_values, tensor_apply
from .errors import InvalidArgumentError, InvalidGeometryError, SingularGeometryError
from .quadrature import gauss_legendre, gauss_lobatto, tensor_weights

PERIODIC = "periodic"
SLIP_WALL = "slip_wall"


@dataclass(frozen=True)
class HillParams:
    """Bell-shaped hill: peak height h_c, half-width a_c, center (x_c, y_c)."""

    h_c: float
    a_c: float
    x_c: float
    y_c: float = 0.0

    def __post_init__(self):
        if self.h_c < 0:
            raise InvalidArgumentError("hill height h_c must be >= 0")
        if self.a_c <= 0:
            raise InvalidArgumentError("hill half-width a_c must be > 0")


def hill_height(x, y, params: HillParams):
    """Surface elevation h(x, y); pass y=None for the 2D (x-z) profile."""
    sq = ((np.asarray(x, dtype=float) - params.x_c) / params.a_c) ** 2
    if y is not None:
        sq = sq + ((np.asarray(y, dtype=float) - params.y_c) / params.a_c) ** 2
    return params.h_c * (1.0 + sq) ** -1.5


def hill_gradient(x, y, params: HillParams):
    """(dh/dx, dh/dy) of the hill profile; dh/dy is None in 2D."""
    x = np.asarray(x, dtype=float)
    sq = ((x - params.x_c) / params.a_c) ** 2
    if y is not None:
        y = np.asarray(y, dtype=float)
        sq = sq + ((y - params.y_c) / params.a_c) ** 2
    common = -3.0 * params.h_c * (1.0 + sq) ** -2.5 / params.a_c**2
    gx = common * (x - params.x_c)
    gy = common * (y - params.y_c) if y is not None else None
    return gx, gy


def terrain_map(reference_coords, params: HillParams, domain_top: float):
    """Map flat-domain coordinates to terrain-following physical coordinates.

    ``reference_coords`` is an array (..., dim) of coordinates in the
    unmapped box; the vertical coordinate (last component) must lie in
    [0, domain_top].  The hill displacement decays linearly to zero at the
    top.  Returns (physical_coords, jacobian) with jacobian of shape
    (..., dim, dim) holding the analytic derivative of the map.
    """
    ref = np.asarray(reference_coords, dtype=float)
    dim = ref.shape[-1]
    if dim not in (2, 3):
        raise InvalidArgumentError("reference coordinates must have 2 or 3 components")
    z = ref[..., -1]
    if np.any(z < -1e-9) or np.any(z > domain_top + 1e-9 * max(1.0, domain_top)):
        raise InvalidArgumentError("vertical coordinate outside [0, domain_top]")
    x = ref[..., 0]
    y = ref[..., 1] if dim == 3 else None
    h = hill_height(x, y, params)
    hx, hy = hill_gradient(x, y, params)
    decay = 1.0 - z / domain_top

    phys = ref.copy()
    phys[..., -1] = z + h * decay

    jac = np.zeros(ref.shape + (dim,))
    for m in range(dim - 1):
        jac[..., m, m] = 1.0
    jac[..., -1, 0] = hx * decay
    if dim == 3:
        jac[..., -1, 1] = hy * decay
    jac[..., -1, -1] = 1.0 - h / domain_top
    return phys, jac


@dataclass(frozen=True)
class VolumeMetric:
    """Metric data at the volume quadrature points of one 1D rule.

    ``jac_det`` has shape (ncells, nq) -- or a broadcastable (1, 1) on affine
    meshes -- and ``contra`` shape (..., nq, dim, dim) where
    ``contra[..., q, k, :]`` is the k-th cofactor column of the mapping
    (det J times row k of the inverse Jacobian).
    """

    points_1d: np.ndarray
    weights: np.ndarray
    jac_det: np.ndarray
    contra: np.ndarray


@dataclass(frozen=True)
class FaceBlock:
    """A batch of faces sharing orientation and metric layout.

    The stored ``normal`` points outward from ``left_cells``; interior blocks
    have ``right_cells`` on the other side (outward normal = negation) while
    boundary blocks have ``right_cells is None`` and a boundary tag.
    ``left_side``/``right_side`` give the reference-cell side (0 = minus face,
    1 = plus face) the respective cell exposes.  ``normal`` and ``sjac`` are
    dicts keyed by the 1D quadrature point count, with array shapes
    (nfaces, nfq, dim) and (nfaces, nfq); tangential quad points are ordered
    lexicographically over the remaining directions, first one fastest.
    """

    direction: int
    left_cells: np.ndarray
    left_side: int
    right_cells: np.ndarray | None
    right_side: int
    normal: dict
    sjac: dict
    boundary: str | None = None

    @property
    def nfaces(self) -> int:
        return self.left_cells.size


@dataclass(frozen=True)
class MeshGeometry:
    """Structured mesh with per-cell metric data and face connectivity."""

    dim: int
    extents: tuple
    cell_counts: tuple
    degree: int
    mapping: HillParams | None
    domain_top: float
    boundary: tuple
    node_coords: np.ndarray
    volume: dict
    face_blocks: list
    cell_widths: tuple

    @property
    def ncells(self) -> int:
        return int(np.prod(self.cell_counts))

    @property
    def nodes_per_cell(self) -> int:
        return (self.degree + 1) ** self.dim

    def volume_metric(self, n1d: int) -> VolumeMetric:
        return self.volume[n1d]

    def total_volume(self) -> float:
        vm = self.volume[2 * self.degree + 1]
        det = np.broadcast_to(vm.jac_det, (self.ncells, vm.weights.size))
        return float(np.sum(det @ vm.weights))

    def summary(self) -> str:
        vm = self.volume[2 * self.degree + 1]
        det = np.broadcast_to(vm.jac_det, (self.ncells, vm.weights.size))
        lines = [
            f"mesh: dim={self.dim} cells={'x'.join(str(n) for n in self.cell_counts)}"
            f" (total {self.ncells}), degree r={self.degree}",
            f"extents: {tuple(float(e) for e in self.extents)} m",
            f"mapping: {'terrain' if self.mapping is not None else 'identity'}",
            f"boundary: {self.boundary}",
            f"volume: {self.total_volume():.6e} m^{self.dim}",
            f"det J: min {det.min():.6e} max {det.max():.6e}",
        ]
        return "\n".join(lines)


def _tensor_grid(cols):
    """Cartesian product of 1-d arrays, lexicographic with the first fastest."""
    if len(cols) == 0:
        return np.zeros((1, 0))
    grids = np.meshgrid(*reversed(cols), indexing="ij")
    return np.stack([g.ravel() for g in reversed(grids)], axis=-1)


class _TerrainInterpolant:
    """Per-column polynomial interpolant of the hill displacement.

    Samples the hill at horizontal Gauss-Lobatto geometry nodes of every cell
    column; value/derivative evaluation then reduces to small matrix products.
    Column ordering is lexicographic over the horizontal directions, x fastest.
    """

    def __init__(self, dim, counts, widths, params, geo_degree):
        self.dim = dim
        self.params = params
        self.geo_degree = geo_degree
        self.geo_nodes = gauss_lobatto(geo_degree + 1).points
        p1 = geo_degree + 1
        node_coords = []
        for m in range(dim - 1):
            edges = np.arange(counts[m]) * widths[m]
            node_coords.append(edges[:, None] + (self.geo_nodes[None, :] + 1) * 0.5 * widths[m])
        if dim == 2:
            self.samples = hill_height(node_coords[0], None, params)  # (nx, p1)
        else:
            nx, ny = counts[0], counts[1]
            xs = node_coords[0].reshape(1, nx, 1, p1)
            ys = node_coords[1].reshape(ny, 1, p1, 1)
            self.samples = hill_height(
                np.broadcast_to(xs, (ny, nx, p1, p1)),
                np.broadcast_to(ys, (ny, nx, p1, p1)),
                params,
            ).reshape(ny * nx, p1, p1)

    def eval_volume(self, pts_1d):
        """h and reference-space dh at the horizontal tensor grid per column."""
        vmat = lagrange_values(self.geo_nodes, pts_1d)
        dmat = lagrange_derivatives(self.geo_nodes, pts_1d)
        if self.dim == 2:
            return self.samples @ vmat.T, [self.samples @ dmat.T]
        h = tensor_apply([vmat, vmat], self.samples, 2)
        dx = tensor_apply([dmat, vmat], self.samples, 2)
        dy = tensor_apply([vmat, dmat], self.samples, 2)
        n = h.shape[0]
        return h.reshape(n, -1), [dx.reshape(n, -1), dy.reshape(n, -1)]

    def eval_line(self, x, along, pts_1d, counts, widths):
        """Trace of the volume interpolant on a vertical plane at coordinate x.

        The plane sits at a cell edge, which is a geometry node, so the trace
        is the 1D interpolant through the hill samples along direction
        ``along``.  Returns values of shape (ncells_along, len(pts_1d)).
        """
        if self.dim == 2:
            raise InvalidArgumentError("eval_line is only meaningful in 3D")
        edges = np.arange(counts[along]) * widths[along]
        node_coords = edges[:, None] + (self.geo_nodes[None, :] + 1) * 0.5 * widths[along]
        if along == 1:
            samples = hill_height(np.full_like(node_coords, x), node_coords, self.params)
        else:
            samples = hill_height(node_coords, np.full_like(node_coords, x), self.params)
        vmat = lagrange_values(self.geo_nodes, pts_1d)
        return samples @ vmat.T


def _volume_metric(dim, counts, widths, terrain, domain_top, rule):
    n1d = rule.npoints
    nq = n1d**dim
    weights = tensor_weights(rule, dim)
    half = [0.5 * w for w in widths]

    if terrain is None:
        det = float(np.prod(half))
        contra = np.zeros((1, 1, dim, dim))
        for k in range(dim):
            contra[0, 0, k, k] = det / half[k]
        return VolumeMetric(rule.points, weights, np.full((1, 1), det), contra)

    ncells = int(np.prod(counts))
    nq_h = n1d ** (dim - 1)
    h, dh = terrain.eval_volume(rule.points)  # (ncols, nq_h)
    ncols = h.shape[0]
    nz = counts[-1]

    zhat = (np.arange(nz)[:, None] * widths[-1]) + (rule.points[None, :] + 1) * 0.5 * widths[-1]
    decay = 1.0 - zhat / domain_top  # (nz, n1d): per layer, per vertical quad point

    z_zeta = half[-1] * (1.0 - h / domain_top)  # (ncols, nq_h), height-independent
    horiz_det = float(np.prod(half[:-1])) if dim == 3 else 1.0
    a = half[0]

    jac_det = np.empty((ncells, nq))
    contra = np.zeros((ncells, nq, dim, dim))
    for iz in range(nz):
        cells = slice(iz * ncols, (iz + 1) * ncols)
        for qz in range(n1d):
            q = slice(qz * nq_h, (qz + 1) * nq_h)
            dec = decay[iz, qz]
            if dim == 2:
                jac_det[cells, q] = a * z_zeta
                contra[cells, q, 0, 0] = z_zeta
                contra[cells, q, 1, 0] = -dh[0] * dec
                contra[cells, q, 1, 1] = a
            else:
                b = half[1]
                jac_det[cells, q] = horiz_det * z_zeta
                contra[cells, q, 0, 0] = b * z_zeta
                contra[cells, q, 1, 1] = a * z_zeta
                contra[cells, q, 2, 0] = -b * dh[0] * dec
                contra[cells, q, 2, 1] = -a * dh[1] * dec
                contra[cells, q, 2, 2] = a * b
    if np.any(jac_det <= 0):
        raise SingularGeometryError("non-positive Jacobian determinant under terrain mapping")
    return VolumeMetric(rule.points, weights, jac_det, contra)


def _transverse_cells(counts, k):
    """Flat indices of the cells in one slab i_k = 0, ordered transversally."""
    dim = len(counts)
    strides = np.cumprod([1] + list(counts[:-1]))
    axes = [np.arange(counts[m]) * strides[m] for m in range(dim) if m != k]
    cols = _tensor_grid(axes).sum(axis=-1).astype(np.intp)
    return cols, int(strides[k])


def _face_geometry(dim, k, counts, widths, terrain, domain_top, rule, position):
    """Outward-plus normal and surface Jacobian on one face plane.

    Returns (normal, sjac) of shape (ncols, nfq, dim) / (ncols, nfq), columns
    ordered like :func:`_transverse_cells`, tangential quad points
    lexicographic with the first remaining direction fastest.  The normal is
    oriented toward increasing direction k.
    """
    half = [0.5 * w for w in widths]
    n1d = rule.npoints
    nfq = n1d ** (dim - 1)
    ncols = int(np.prod([counts[m] for m in range(dim) if m != k]))
    raw = np.zeros((ncols, nfq, dim))

    if terrain is None:
        det = float(np.prod(half))
        raw[..., k] = det / half[k]
    elif k == dim - 1:
        # bottom/top faces: tilted by the in-plane hill slope
        h, dh = terrain.eval_volume(rule.points)
        dec = 1.0 - position / domain_top
        if dim == 2:
            raw[:, :, 0] = -dh[0] * dec
            raw[:, :, 1] = half[0]
        else:
            raw[:, :, 0] = -half[1] * dh[0] * dec
            raw[:, :, 1] = -half[0] * dh[1] * dec
            raw[:, :, 2] = half[0] * half[1]
    else:
        # vertical faces stay planar; only the vertical stretching varies
        if dim == 2:
            hval = float(hill_height(position, None, terrain.params))
            raw[:, :, 0] = half[-1] * (1.0 - hval / domain_top)
        else:
            along = 1 - k  # the in-plane horizontal direction
            hline = terrain.eval_line(position, along, rule.points, counts, widths)
            z_zeta = half[-1] * (1.0 - hline / domain_top)  # (n_along, n1d)
            nz = counts[-1]
            # tangential ordering (along, z) with along fastest; z_zeta is
            # height-independent, so repeat over the z quad index and z cells
            vals = np.repeat(z_zeta[:, None, :], n1d, axis=1).reshape(z_zeta.shape[0], nfq)
            raw[:, :, k] = half[along] * np.tile(vals, (nz, 1))
    sjac = np.linalg.norm(raw, axis=-1)
    if np.any(sjac <= 0):
        raise SingularGeometryError("degenerate face geometry under terrain mapping")
    return raw / sjac[..., None], sjac


def _build_face_blocks(dim, counts, widths, terrain, domain_top, boundary, rules):
    blocks = []
    for k in range(dim):
        cols, stride = _transverse_cells(counts, k)
        nk = counts[k]
        periodic = boundary[k] == PERIODIC

        def geo(position):
            normals, sjacs = {}, {}
            for rule in rules:
                n, s = _face_geometry(dim, k, counts, widths, terrain, domain_top, rule, position)
                normals[rule.npoints] = n
                sjacs[rule.npoints] = s
            return normals, sjacs

        # interior planes between i and i+1
        lefts, rights, normals, sjacs = [], [], {r.npoints: [] for r in rules}, {r.npoints: [] for r in rules}
        for i in range(nk - 1):
            n, s = geo((i + 1) * widths[k])
            lefts.append(cols + (i * stride))
            rights.append(cols + ((i + 1) * stride))
            for key in n:
                normals[key].append(n[key])
                sjacs[key].append(s[key])
        if periodic:
            n, s = geo(0.0)
            lefts.append(cols + ((nk - 1) * stride))
            rights.append(cols)
            for key in n:
                normals[key].append(n[key])
                sjacs[key].append(s[key])
        if lefts:
            blocks.append(
                FaceBlock(
                    direction=k,
                    left_cells=np.concatenate(lefts),
                    left_side=1,
                    right_cells=np.concatenate(rights),
                    right_side=0,
                    normal={key: np.concatenate(vals) for key, vals in normals.items()},
                    sjac={key: np.concatenate(vals) for key, vals in sjacs.items()},
                )
            )
        if not periodic:
            n_lo, s_lo = geo(0.0)
            blocks.append(
                FaceBlock(
                    direction=k,
                    left_cells=cols.copy(),
                    left_side=0,
                    right_cells=None,
                    right_side=0,
                    normal={key: -val for key, val in n_lo.items()},
                    sjac=s_lo,
                    boundary=boundary[k],
                )
            )
            n_hi, s_hi = geo(nk * widths[k])
            blocks.append(
                FaceBlock(
                    direction=k,
                    left_cells=cols + ((nk - 1) * stride),
                    left_side=1,
                    right_cells=None,
                    right_side=0,
                    normal=n_hi,
                    sjac=s_hi,
                    boundary=boundary[k],
                )
            )
    return blocks


def build_mesh(dim, extents, cell_counts, mapping=None, boundary=None, degree=1, domain_top=None):
    """Construct a MeshGeometry with metric data for both integration rules.

    ``mapping`` is None for the identity (box) mapping or a HillParams for the
    terrain-following mapping.  ``boundary`` gives one tag per direction
    ('periodic' or 'slip_wall'); the default is periodic horizontally and
    slip walls vertically.  ``degree`` is the solution polynomial degree the
    mesh will serve (it fixes node placement and quadrature metric storage).
    """
    if dim not in (2, 3):
        raise InvalidArgumentError(f"mesh dimension must be 2 or 3, got {dim}")
    extents = tuple(float(e) for e in extents)
    cell_counts = tuple(int(n) for n in cell_counts)
    if len(extents) != dim or len(cell_counts) != dim:
        raise InvalidArgumentError("extents and cell_counts must have one entry per direction")
    if any(e <= 0 for e in extents):
        raise InvalidArgumentError("extents must be positive")
    if any(n < 1 for n in cell_counts):
        raise InvalidArgumentError("cell_counts must be >= 1")
    if degree < 1:
        raise InvalidArgumentError("degree must be >= 1")
    if boundary is None:
        boundary = (PERIODIC,) * (dim - 1) + (SLIP_WALL,)
    boundary = tuple(boundary)
    if len(boundary) != dim or any(b not in (PERIODIC, SLIP_WALL) for b in boundary):
        raise InvalidArgumentError(f"boundary tags must be per-direction {PERIODIC!r} or {SLIP_WALL!r}")

    if domain_top is None:
        domain_top = extents[-1]
    widths = tuple(e / n for e, n in zip(extents, cell_counts))

    terrain = None
    if mapping is not None and mapping.h_c > 0:
        if mapping.h_c >= domain_top:
            raise InvalidGeometryError(
                f"hill height {mapping.h_c} must stay below the domain top {domain_top}"
            )
        terrain = _TerrainInterpolant(dim, cell_counts, widths, mapping, 2 * degree)

    rules = [gauss_legendre(degree + 1), gauss_legendre(2 * degree + 1)]
    volume = {
        rule.npoints: _volume_metric(dim, cell_counts, widths, terrain, domain_top, rule)
        for rule in rules
    }
    face_blocks = _build_face_blocks(dim, cell_counts, widths, terrain, domain_top, boundary, rules)

    # physical coordinates of the solution nodes (exact mapping)
    nodes_1d = gauss_lobatto(degree + 1).points
    origins = _tensor_grid([np.arange(n) * w for n, w in zip(cell_counts, widths)])
    local = _tensor_grid([nodes_1d] * dim)
    box_coords = origins[:, None, :] + (local[None, :, :] + 1.0) * 0.5 * np.asarray(widths)
    if terrain is not None:
        node_coords, _ = terrain_map(box_coords, mapping, domain_top)
    else:
        node_coords = box_coords

    return MeshGeometry(
        dim=dim,
        extents=extents,
        cell_counts=cell_counts,
        degree=degree,
        mapping=mapping if terrain is not None else None,
        domain_top=domain_top,
        boundary=boundary,
        node_coords=node_coords,
        volume=volume,
        face_blocks=face_blocks,
        cell_widths=widths,
    )
