import numpy as np
import pytest

from tidaldrag import mesh as m
from tidaldrag.correction import CellShape
from tidaldrag.errors import PointOutsideDomain, ResolutionError, ValidationError

TWO_TRIANGLES = """\
# 20 m x 10 m channel, the upper-left triangle carries the drag
vertices 4
0.0 0.0
20.0 0.0
20.0 10.0
0.0 10.0
triangles 2
0 1 2 0
0 2 3 1
boundary 4
0 1 wall
1 2 outflow
2 3 wall
3 0 inflow
"""


def shoelace(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@pytest.mark.parametrize("dx", [320.0, 160.0, 80.0, 40.0])
def test_cell_counts_and_topology(dx):
    mesh = m.build_channel_mesh(dx=dx)
    # one dx-wide column (row) centred on the turbine, the rest split evenly on either side
    nx = 1 + 2 * round((5000 - dx / 2) / dx)
    ny = 1 + 2 * round((500 - dx / 2) / dx)
    assert mesh.n_cells == 2 * nx * ny
    assert mesh.euler_characteristic() == 1
    assert abs(mesh.areas.sum() - 1e7) < 1e-9 * 1e7
    assert len(mesh.vertices) == (nx + 1) * (ny + 1)


def test_boundary_tags():
    mesh = m.build_channel_mesh(dx=160.0)
    mid = mesh.edge_midpoints
    for tag, test in [
        (m.INFLOW, lambda p: np.isclose(p[:, 0], 0.0)),
        (m.OUTFLOW, lambda p: np.isclose(p[:, 0], 10000.0)),
        (m.WALL, lambda p: np.isclose(p[:, 1], 0.0) | np.isclose(p[:, 1], 1000.0)),
    ]:
        edges = mesh.boundary_edges(tag)
        assert len(edges) > 0 and np.all(test(mid[edges]))
    assert mesh.boundary_edges(m.INFLOW).size + mesh.boundary_edges(m.OUTFLOW).size + mesh.boundary_edges(
        m.WALL
    ).size == np.count_nonzero(mesh.edge_cells[:, 1] < 0)
    # outward normals on the boundary
    for tag, normal in [(m.INFLOW, (-1, 0)), (m.OUTFLOW, (1, 0))]:
        assert np.allclose(mesh.edge_normals[mesh.boundary_edges(tag)], normal)


def test_embedded_square_footprint():
    mesh = m.build_channel_mesh(dx=16.0)
    fp = mesh.footprint
    assert fp.shape is CellShape.SQUARE_ALIGNED and len(fp.cells) == 2
    assert fp.area == pytest.approx(256.0, rel=1e-12)
    pts = mesh.vertices[np.unique(mesh.triangles[list(fp.cells)])]
    assert len(pts) == 4
    assert np.allclose(pts.min(axis=0), [4992.0, 492.0]) and np.allclose(pts.max(axis=0), [5008.0, 508.0])
    geom = fp.geometry(25.0)
    assert (geom.A, geom.dy, geom.dx_max) == pytest.approx((256.0, 16.0, 16.0))


@pytest.mark.parametrize("orientation", range(4))
def test_arbitrary_triangle_footprint(orientation):
    mesh = m.build_channel_mesh(dx=160.0, variant=m.Variant.ARBITRARY_TRIANGLE, orientation=orientation)
    (cell,) = mesh.drag_cells
    pts = mesh.vertices[mesh.triangles[cell]]
    assert shoelace(pts) == pytest.approx(12800.0, rel=1e-12)
    assert mesh.areas[cell] == pytest.approx(12800.0, rel=1e-12)
    assert len(mesh.cells_at(5000.0, 500.0)) >= 1 and cell in mesh.cells_at(5000.0, 500.0)
    fp = mesh.footprint
    # right triangle with legs dx: cross-stream width dx, longest streamwise chord dx
    assert (fp.area, fp.dy, fp.dx_max) == pytest.approx((12800.0, 160.0, 160.0))
    fp.geometry(25.0)  # satisfies A/dy = dx_max/2


def test_orientations_differ():
    shapes = set()
    for o in range(4):
        mesh = m.build_channel_mesh(dx=160.0, variant=m.Variant.ARBITRARY_TRIANGLE, orientation=o)
        pts = mesh.vertices[mesh.triangles[mesh.drag_cells[0]]] - [4920.0, 420.0]
        shapes.add(tuple(sorted(map(tuple, np.round(pts, 6)))))
    assert len(shapes) == 4


def test_no_turbine_and_periodic():
    mesh = m.build_channel_mesh(dx=320.0, turbine=False)
    assert mesh.drag_cells == ()
    per = m.build_channel_mesh(dx=320.0, turbine=False, periodic=True)
    assert per.boundary_edges(m.INFLOW).size == 0 and per.boundary_edges(m.OUTFLOW).size == 0
    assert per.euler_characteristic() != 1  # the ends are glued together


def test_resolution_and_location_errors():
    with pytest.raises(ResolutionError):
        m.build_channel_mesh(dx=700.0)
    with pytest.raises(ResolutionError):
        m.build_channel_mesh(dx=-5.0)
    with pytest.raises(PointOutsideDomain):
        m.build_channel_mesh(dx=80.0, turbine_at=(12000.0, 500.0))
    with pytest.raises(ValidationError):
        m.build_channel_mesh(dx=80.0, variant=m.Variant.ARBITRARY_TRIANGLE, orientation=5)


def test_ccw_and_normals():
    mesh = m.build_channel_mesh(dx=320.0, variant=m.Variant.ARBITRARY_TRIANGLE)
    mesh.check()
    # the normal points from the first cell towards the edge midpoint
    d = mesh.edge_midpoints - mesh.centroids[mesh.edge_cells[:, 0]]
    assert np.all(np.einsum("ij,ij->i", d, mesh.edge_normals) > 0)


def test_two_triangle_example(tmp_path):
    path = tmp_path / "two.mesh"
    path.write_text(TWO_TRIANGLES)
    mesh = m.read_mesh(path)
    assert mesh.n_cells == 2 and mesh.drag_cells == (1,)
    assert mesh.areas.tolist() == [100.0, 100.0]
    assert (mesh.length, mesh.width) == (20.0, 10.0)
    assert mesh.boundary_edges(m.INFLOW).size == 1 and mesh.boundary_edges(m.OUTFLOW).size == 1
    fp = mesh.footprint
    assert fp.shape is CellShape.TRIANGLE and (fp.dy, fp.dx_max) == pytest.approx((10.0, 20.0))


@pytest.mark.parametrize("variant", list(m.Variant))
def test_write_read_round_trip(tmp_path, variant):
    mesh = m.build_channel_mesh(dx=320.0, variant=variant, orientation=2)
    path = tmp_path / "channel.mesh"
    m.write_mesh(mesh, path)
    back = m.read_mesh(path, dx=320.0)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert back.drag_cells == mesh.drag_cells
    assert back.footprint.dy == pytest.approx(mesh.footprint.dy)
    assert np.array_equal(np.sort(back.edge_tags), np.sort(mesh.edge_tags))
