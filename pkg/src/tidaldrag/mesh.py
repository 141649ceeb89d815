"""Structured triangulated meshes of the idealised rectangular channel.

The channel is covered by a tensor grid of near-square quads, each split into
two triangles.  The quad containing the turbine is always exactly ``dx`` by
``dx`` and centred on the turbine location; the grid lines on either side are
spaced as uniformly as the remaining lengths allow.

Two drag-footprint variants are supported:

* ``EMBEDDED_SQUARE``: both triangles of the turbine quad carry the drag, so
  the footprint is a flow-aligned square.
* ``ARBITRARY_TRIANGLE``: a single triangle of the turbine quad carries the
  drag. ``orientation`` (0-3) picks which of the four possible right
  triangles it is.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .correction import CellGeometry, CellShape, VelocityModel
from .errors import PointOutsideDomain, ResolutionError, ValidationError

# boundary tags stored per edge; interior edges carry INTERIOR
INTERIOR, INFLOW, OUTFLOW, WALL = 0, 1, 2, 3
TAG_NAMES = {INTERIOR: "interior", INFLOW: "inflow", OUTFLOW: "outflow", WALL: "wall"}


class Variant(str, enum.Enum):
    ARBITRARY_TRIANGLE = "triangle"
    EMBEDDED_SQUARE = "square"


# (diagonal, half) of the turbine quad for each triangle orientation;
# "/" joins (x0, y0)-(x1, y1), "\" joins (x1, y0)-(x0, y1)
ORIENTATIONS = {
    0: ("/", "lower"),  # right angle bottom-right, vertical edge downstream
    1: ("/", "upper"),  # right angle top-left, vertical edge upstream
    2: ("\\", "lower"),  # right angle bottom-left, vertical edge upstream
    3: ("\\", "upper"),  # right angle top-right, vertical edge downstream
}


@dataclass(frozen=True)
class DragFootprint:
    """Cells carrying the turbine drag and the geometry of their union."""

    cells: tuple
    shape: CellShape
    area: float
    dy: float
    dx_max: float

    def geometry(self, depth, velocity_model=VelocityModel.CELL_CONSTANT):
        return CellGeometry(
            A=self.area,
            dy=self.dy,
            dx_max=self.dx_max,
            H=depth,
            shape=self.shape,
            velocity_model=velocity_model,
        )


@dataclass(frozen=True, eq=False)
class ChannelMesh:
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3) counterclockwise
    edge_vertices: np.ndarray  # (ne, 2)
    edge_cells: np.ndarray  # (ne, 2), second entry -1 on boundaries
    edge_tags: np.ndarray  # (ne,)
    edge_normals: np.ndarray  # (ne, 2) unit, pointing out of edge_cells[:, 0]
    edge_lengths: np.ndarray
    edge_midpoints: np.ndarray
    edge_offsets: np.ndarray  # (ne, 2) centroid(c1) - centroid(c0), incl. periodic shift
    areas: np.ndarray
    centroids: np.ndarray
    dx: float
    length: float
    width: float
    footprint: DragFootprint | None = None
    periodic: bool = False
    cell_edges: np.ndarray = field(default=None)  # (nt, 3)

    @property
    def n_cells(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edge_cells)

    @property
    def drag_cells(self):
        return () if self.footprint is None else self.footprint.cells

    def boundary_edges(self, tag):
        return np.flatnonzero(self.edge_tags == tag)

    def cells_at(self, x, y):
        """Indices of triangles whose closure contains the point (x, y)."""
        tri = self.vertices[self.triangles]
        p = np.array([x, y])
        inside = np.ones(len(tri), dtype=bool)
        for k in range(3):
            a, b = tri[:, k], tri[:, (k + 1) % 3]
            cross = (b[:, 0] - a[:, 0]) * (p[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (p[0] - a[:, 0])
            scale = np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1])
            inside &= cross >= -1e-9 * scale
        return np.flatnonzero(inside)

    def check(self):
        """Raise ValidationError unless the mesh satisfies its invariants."""
        if np.any(self.areas <= 0):
            raise ValidationError("mesh has non-positive triangle areas")
        tri = self.vertices[self.triangles]
        signed = 0.5 * (
            (tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1])
            - (tri[:, 2, 0] - tri[:, 0, 0]) * (tri[:, 1, 1] - tri[:, 0, 1])
        )
        if np.any(signed <= 0):
            raise ValidationError("mesh has clockwise triangles")
        interior = self.edge_cells[:, 1] >= 0
        if np.any(self.edge_tags[interior] != INTERIOR) or np.any(self.edge_tags[~interior] == INTERIOR):
            raise ValidationError("boundary tags inconsistent with edge connectivity")
        counts = np.bincount(self.edge_cells[interior].ravel(), minlength=self.n_cells)
        counts += np.bincount(self.edge_cells[~interior, 0], minlength=self.n_cells)
        if np.any(counts != 3):
            raise ValidationError("mesh is not conforming")
        total = self.areas.sum()
        if abs(total - self.length * self.width) > 1e-9 * self.length * self.width:
            raise ValidationError(f"mesh area {total} differs from channel area")
        if self.footprint is not None and not self.footprint.cells:
            raise ValidationError("turbine configured but no drag cells marked")

    def euler_characteristic(self):
        """V - E + F, counting only triangles as faces (1 for a disc)."""
        return len(self.vertices) - self.n_edges + self.n_cells


def _axis_lines(extent, centre, dx):
    lo, hi = centre - 0.5 * dx, centre + 0.5 * dx
    if lo < 0 or hi > extent:
        raise PointOutsideDomain(f"turbine cell [{lo}, {hi}] does not fit inside [0, {extent}]")
    parts = []
    for a, b in ((0.0, lo), (hi, extent)):
        n = int(round((b - a) / dx))
        if b - a > 0:
            parts.append(np.linspace(a, b, max(n, 1) + 1))
        else:
            parts.append(np.array([a]))
    return np.concatenate([parts[0], parts[1]])


# a 1000 m width must accept dx = 320 (3 cells of 333 m), hence 5% rather than 1%
DIVIDE_TOLERANCE = 0.05


def _check_divides(extent, dx, name):
    n = max(int(round(extent / dx)), 1)
    if abs(extent / n - dx) > DIVIDE_TOLERANCE * dx:
        raise ResolutionError(f"dx={dx} does not divide channel {name} {extent} within {DIVIDE_TOLERANCE:.0%}")


def build_channel_mesh(
    length=10000.0,
    width=1000.0,
    dx=80.0,
    turbine_at=None,
    variant=Variant.EMBEDDED_SQUARE,
    orientation=0,
    turbine=True,
    periodic=False,
):
    """Build the triangulated channel.

    ``turbine=False`` gives the same grid with no drag cells marked, which is
    what the no-turbine calibration runs use.  ``periodic=True`` connects the
    inflow and outflow ends (used for translation-invariance tests).
    """
    if dx <= 0:
        raise ResolutionError("dx must be positive")
    _check_divides(length, dx, "length")
    _check_divides(width, dx, "width")
    if turbine_at is None:
        turbine_at = (0.5 * length, 0.5 * width)
    xt, yt = map(float, turbine_at)
    if not (0 <= xt <= length and 0 <= yt <= width):
        raise PointOutsideDomain(f"turbine location {turbine_at} outside the channel")
    variant = Variant(variant)
    if orientation not in ORIENTATIONS:
        raise ValidationError(f"orientation must be one of {sorted(ORIENTATIONS)}")

    xs = _axis_lines(length, xt, dx)
    ys = _axis_lines(width, yt, dx)
    nx, ny = len(xs) - 1, len(ys) - 1
    it = int(np.searchsorted(xs, xt)) - 1
    jt = int(np.searchsorted(ys, yt)) - 1

    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    I, J = I.ravel(), J.ravel()
    v00 = I * (ny + 1) + J
    v10 = v00 + (ny + 1)
    v01 = v00 + 1
    v11 = v10 + 1

    slash = (I + J) % 2 == 0
    turbine_quad = (I == it) & (J == jt)
    if variant is Variant.ARBITRARY_TRIANGLE:
        diag, half = ORIENTATIONS[orientation]
        slash = np.where(turbine_quad, diag == "/", slash)

    lower = np.where(slash[:, None], np.column_stack([v00, v10, v11]), np.column_stack([v00, v10, v01]))
    upper = np.where(slash[:, None], np.column_stack([v00, v11, v01]), np.column_stack([v10, v11, v01]))
    triangles = np.empty((2 * len(I), 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    q = int(np.flatnonzero(turbine_quad)[0])
    if not turbine:
        drag = ()
    elif variant is Variant.EMBEDDED_SQUARE:
        drag = (2 * q, 2 * q + 1)
    else:
        drag = (2 * q + (0 if ORIENTATIONS[orientation][1] == "lower" else 1),)

    mesh = _assemble(vertices, triangles, dx, length, width, drag, variant, periodic)
    mesh.check()
    return mesh


def _assemble(vertices, triangles, dx, length, width, drag, variant, periodic=False):
    tri = vertices[triangles]
    areas = 0.5 * (
        (tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1])
        - (tri[:, 2, 0] - tri[:, 0, 0]) * (tri[:, 1, 1] - tri[:, 0, 1])
    )
    centroids = tri.mean(axis=1)

    nt = len(triangles)
    half = np.stack([triangles, np.roll(triangles, -1, axis=1)], axis=2).reshape(-1, 2)
    owner = np.repeat(np.arange(nt), 3)
    key = np.sort(half, axis=1)
    uniq, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    ne = len(uniq)
    edge_cells = np.full((ne, 2), -1, dtype=np.int64)
    # first occurrence owns the edge (and its orientation), second is the neighbour
    edge_cells[:, 0] = owner[first]
    second = np.ones(len(half), dtype=bool)
    second[first] = False
    edge_cells[inverse[second], 1] = owner[second]
    cell_edges = inverse.reshape(nt, 3)

    a = vertices[half[first, 0]]
    b = vertices[half[first, 1]]
    d = b - a
    lengths = np.hypot(d[:, 0], d[:, 1])
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
    mids = 0.5 * (a + b)

    tags = np.zeros(ne, dtype=np.int64)
    bnd = edge_cells[:, 1] < 0
    tol = 1e-9 * max(length, width)
    tags[bnd & (np.abs(mids[:, 0]) < tol)] = INFLOW
    tags[bnd & (np.abs(mids[:, 0] - length) < tol)] = OUTFLOW
    tags[bnd & (tags == INTERIOR)] = WALL

    offsets = np.zeros((ne, 2))
    inner = ~bnd
    offsets[inner] = centroids[edge_cells[inner, 1]] - centroids[edge_cells[inner, 0]]
    # boundary offsets: mirror of the centroid through the edge
    c0 = centroids[edge_cells[bnd, 0]]
    offsets[bnd] = 2.0 * np.sum((mids[bnd] - c0) * normals[bnd], axis=1)[:, None] * normals[bnd]

    edges = dict(
        vertices=half[first], cells=edge_cells, tags=tags, normals=normals,
        lengths=lengths, mids=mids, offsets=offsets,
    )
    if periodic:
        edges, remap = _connect_periodic(edges, mids, centroids, length)
        cell_edges = remap[cell_edges]

    footprint = None
    if drag:
        footprint = _footprint(vertices, triangles, areas, drag, variant)

    return ChannelMesh(
        vertices=vertices,
        triangles=triangles,
        edge_vertices=edges["vertices"],
        edge_cells=edges["cells"],
        edge_tags=edges["tags"],
        edge_normals=edges["normals"],
        edge_lengths=edges["lengths"],
        edge_midpoints=edges["mids"],
        edge_offsets=edges["offsets"],
        areas=areas,
        centroids=centroids,
        dx=float(dx),
        length=float(length),
        width=float(width),
        footprint=footprint,
        periodic=periodic,
        cell_edges=cell_edges,
    )


def _connect_periodic(edges, mids, centroids, length):
    """Merge inflow edges into their outflow partners; returns filtered arrays."""
    tags = edges["tags"]
    inflow = np.flatnonzero(tags == INFLOW)
    outflow = np.flatnonzero(tags == OUTFLOW)
    order_in = inflow[np.argsort(mids[inflow, 1])]
    order_out = outflow[np.argsort(mids[outflow, 1])]
    if len(order_in) != len(order_out) or not np.allclose(mids[order_in, 1], mids[order_out, 1]):
        raise ValidationError("inflow and outflow boundaries do not match for periodic connection")
    cells = edges["cells"]
    cells[order_out, 1] = cells[order_in, 0]
    tags[order_out] = INTERIOR
    shift = np.array([length, 0.0])
    edges["offsets"][order_out] = centroids[cells[order_out, 1]] + shift - centroids[cells[order_out, 0]]

    keep = np.ones(len(tags), dtype=bool)
    keep[order_in] = False
    remap = np.cumsum(keep) - 1
    remap[order_in] = remap[order_out]
    edges = {k: v[keep] for k, v in edges.items()}
    return edges, remap


def triangle_extent(points, flow_dir=(1.0, 0.0)):
    """Cross-stream width and maximum streamwise chord of a triangle.

    ``points`` is a (3, 2) array.  Returns ``(dy, dx_max)``.
    """
    pts = np.asarray(points, dtype=float)
    f = np.asarray(flow_dir, dtype=float)
    f = f / np.hypot(*f)
    s = pts @ f  # streamwise coordinate
    c = pts @ np.array([-f[1], f[0]])  # cross-stream coordinate
    order = np.argsort(c)
    c, s = c[order], s[order]
    dy = c[2] - c[0]
    if dy <= 0:
        raise ValidationError("degenerate triangle: zero cross-stream width")
    # chord through the middle vertex, measured to the opposite (long) edge
    t = (c[1] - c[0]) / dy
    s_opp = s[0] + t * (s[2] - s[0])
    return dy, abs(s[1] - s_opp)


def _footprint(vertices, triangles, areas, drag, variant):
    pts = vertices[triangles[list(drag)]].reshape(-1, 2)
    area = float(areas[list(drag)].sum())
    if variant is Variant.EMBEDDED_SQUARE:
        side_x = pts[:, 0].max() - pts[:, 0].min()
        side_y = pts[:, 1].max() - pts[:, 1].min()
        return DragFootprint(tuple(int(c) for c in drag), CellShape.SQUARE_ALIGNED, area, float(side_y), float(side_x))
    dy, dx_max = triangle_extent(pts)
    return DragFootprint((int(drag[0]),), CellShape.TRIANGLE, area, float(dy), float(dx_max))


def write_mesh(mesh, path):
    """Write the minimal ASCII mesh format (see README)."""
    drag = set(mesh.drag_cells)
    bnd = np.flatnonzero((mesh.edge_cells[:, 1] < 0) & (mesh.edge_tags > 0))
    with open(path, "w", newline="\n") as fh:
        fh.write(f"vertices {len(mesh.vertices)}\n")
        for x, y in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r}\n")
        fh.write(f"triangles {mesh.n_cells}\n")
        for k, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{a} {b} {c} {1 if k in drag else 0}\n")
        fh.write(f"boundary {len(bnd)}\n")
        for e in bnd:
            a, b = mesh.edge_vertices[e]
            fh.write(f"{a} {b} {TAG_NAMES[int(mesh.edge_tags[e])]}\n")


def read_mesh(path, dx=None):
    """Read a mesh written by :func:`write_mesh`.

    Coordinates are shifted so the bounding box starts at the origin; the
    channel extent is taken from that box, boundary tags
    from the ``boundary`` section. Drag triangles (tag 1) form a square
    footprint when there are two of them, a triangle footprint otherwise.
    """
    with open(path) as fh:
        tokens = [line.split() for line in fh if line.strip() and not line.startswith("#")]
    pos = 0

    def header(name):
        nonlocal pos
        word, count = tokens[pos]
        if word != name:
            raise ValidationError(f"expected section '{name}', found '{word}'")
        pos += 1
        return int(count)

    nv = header("vertices")
    vertices = np.array([[float(v) for v in tokens[pos + k]] for k in range(nv)])
    pos += nv
    nt = header("triangles")
    rows = [[int(v) for v in tokens[pos + k]] for k in range(nt)]
    pos += nt
    triangles = np.array([r[:3] for r in rows], dtype=np.int64)
    drag = tuple(k for k, r in enumerate(rows) if r[3] == 1)
    boundary = {}
    if pos < len(tokens):
        nb = header("boundary")
        names = {v: k for k, v in TAG_NAMES.items()}
        for k in range(nb):
            a, b, name = tokens[pos + k]
            boundary[tuple(sorted((int(a), int(b))))] = names[name]
    vertices = vertices - vertices.min(axis=0)
    length, width = vertices.max(axis=0)
    if dx is None:
        dx = float(np.sqrt(2.0 * length * width / nt))
    variant = Variant.EMBEDDED_SQUARE if len(drag) == 2 else Variant.ARBITRARY_TRIANGLE
    mesh = _retag(_assemble(vertices, triangles, dx, length, width, drag, variant), boundary)
    mesh.check()
    return mesh


def _retag(mesh, boundary):
    if not boundary:
        return mesh
    tags = mesh.edge_tags.copy()
    for e in np.flatnonzero(mesh.edge_cells[:, 1] < 0):
        key = tuple(sorted(int(v) for v in mesh.edge_vertices[e]))
        if key in boundary:
            tags[e] = boundary[key]
    object.__setattr__(mesh, "edge_tags", tags)
    return mesh
