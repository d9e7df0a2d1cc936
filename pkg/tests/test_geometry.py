import numpy as np
import pytest
from hypothesis import given, strategies as st

from cloakbench.geometry import (GeometryError, MeshResolution, PartialGeneratorSpec, RegionTag,
                                 analytic_slab_area, analytic_slab_volume, analytic_tube_area,
                                 analytic_tube_volume, make_curve, read_vtk, refine, slab_domain,
                                 sphere_mesh, tube_domain, write_vtk)


def _frames_ok(curve):
    t, n1, n2 = curve.tangents, curve.normals1, curve.normals2
    F = np.stack([t, n1, n2], axis=2)
    gram = np.einsum("pki,pkj->pij", F, F)
    assert np.abs(gram - np.eye(3)).max() < 1e-10
    assert np.all(np.linalg.det(F) > 0)
    ang = np.arccos(np.clip(np.sum(n1[1:] * n1[:-1], axis=1), -1, 1))
    assert ang.max() < 0.2
    assert np.all(np.diff(curve.xi) > 0)


def test_segment_curve(segment):
    assert segment.length == pytest.approx(1.0)
    assert np.allclose(segment.tangents, [1, 0, 0])
    _frames_ok(segment)
    assert np.isinf(segment.tubular_radius)


def test_arc_length():
    c = make_curve("arc", {"radius": 1.0, "angle": np.pi / 2})
    assert abs(c.length - np.pi / 2) < 1e-6
    _frames_ok(c)
    assert c.tubular_radius == pytest.approx(1.0, rel=1e-6)


def test_helix_frames_and_arclength():
    s = np.linspace(0, 2 * np.pi, 400)
    pts = np.stack([np.cos(s), np.sin(s), 0.5 * s / (2 * np.pi)], 1)
    c = make_curve("custom", {"points": pts})
    _frames_ok(c)
    exact = 2 * np.pi * np.sqrt(1 + (0.5 / (2 * np.pi)) ** 2)
    assert abs(c.length - exact) < 1e-4
    # arc-length parametrisation: |d position / d xi| = 1
    xi = np.linspace(0.1, c.length - 0.1, 50)
    h = 1e-5
    speed = np.linalg.norm(c.position(xi + h) - c.position(xi - h), axis=1) / (2 * h)
    assert np.abs(speed - 1).max() < 1e-6


def test_curve_errors():
    with pytest.raises(GeometryError):
        make_curve("segment", {"p0": (0, 0, 0), "q0": (0, 0, 0)})
    with pytest.raises(GeometryError):
        make_curve("custom", {"points": [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0.5, -1, 0]]})
    with pytest.raises(GeometryError):
        make_curve("spiral", {})


@given(st.floats(-1, 2), st.floats(-1, 1), st.floats(-1, 1))
def test_segment_nearest_point(x, y, z):
    c = make_curve("segment", {"p0": (0, 0, 0), "q0": (1, 0, 0)})
    xi, p = c.nearest(np.array([[x, y, z]]))
    assert xi[0] == pytest.approx(min(max(x, 0.0), 1.0), abs=1e-12)
    assert np.allclose(p[0], [min(max(x, 0), 1), 0, 0], atol=1e-12)


@given(st.floats(0.0, 1.0), st.floats(0.01, 0.5))
def test_arc_nearest_point(theta, r):
    c = make_curve("arc", {"radius": 1.0, "angle": 1.0})
    y = (1 + r) * np.array([np.cos(theta), np.sin(theta), 0.0])
    xi, p = c.nearest(y[None])
    assert xi[0] == pytest.approx(theta, abs=1e-9)


def test_tube_area_and_topology(segment):
    m = tube_domain(segment, 0.1, MeshResolution(n_circ=12))
    assert abs(m.total_area - 0.754) / 0.754 < 0.02
    assert m.boundary_edge_count == 0 and m.euler_characteristic == 2
    assert m.check_orientation() and m.volume > 0
    tags = set(np.unique(m.region_tag))
    assert tags == {RegionTag.FACADE, RegionTag.CAP_A, RegionTag.CAP_B}
    assert sum(m.tag_area(t) for t in tags) == pytest.approx(m.total_area)


def test_tube_straight_large_delta(segment):
    m = tube_domain(segment, 0.5)
    assert m.euler_characteristic == 2 and m.boundary_edge_count == 0


def test_tube_rejects(arc):
    with pytest.raises(GeometryError):
        tube_domain(arc, 1.5)
    with pytest.raises(GeometryError):
        tube_domain(arc, 0.1, MeshResolution(n_circ=6))


def test_tube_projection_rules(segment):
    m = tube_domain(segment, 0.1, MeshResolution(n_circ=8))
    z = m.z_projection
    assert np.abs(z[:, 1:]).max() < 1e-12
    assert np.all((z[:, 0] >= -1e-12) & (z[:, 0] <= 1 + 1e-12))
    d = np.linalg.norm(m.vertices - z, axis=1)
    assert np.abs(d - 0.1).max() < 1e-12
    cap_a = m.triangles[m.region_tag == RegionTag.CAP_A]
    assert np.allclose(z[np.unique(cap_a)], segment.P0, atol=1e-12)


def test_tube_refinement_area_rate(segment):
    m = tube_domain(segment, 0.1, MeshResolution(n_circ=8, h_max=0.2))
    exact = analytic_tube_area(1.0, 0.1)
    errs = [abs(m.total_area - exact)]
    for _ in range(2):
        m = refine(m, 1)
        errs.append(abs(m.total_area - exact))
    r = errs[1] / errs[2]
    assert 3 <= r <= 5
    assert abs(m.volume - analytic_tube_volume(1.0, 0.1)) / analytic_tube_volume(1.0, 0.1) < 0.03


def test_arc_tube(arc):
    m = tube_domain(arc, 0.1, MeshResolution(n_circ=8))
    assert m.boundary_edge_count == 0 and m.volume > 0


def test_slab_area_and_projection():
    spec = PartialGeneratorSpec()
    m = slab_domain(spec, 0.1)
    assert abs(m.total_area - 3.382) / 3.382 < 0.02
    assert m.euler_characteristic == 2 and m.volume > 0
    assert np.abs(m.z_projection[:, 2]).max() < 1e-14
    top = np.unique(m.triangles[m.region_tag == RegionTag.S0])
    assert np.allclose(m.z_projection[top, :2], m.vertices[top, :2])


def test_slab_refine_corner_reprojection():
    m = refine(slab_domain(PartialGeneratorSpec(), 0.1, MeshResolution(h_max=0.2)), 1)
    verts = np.unique(m.triangles[m.region_tag == RegionTag.S2])
    d = np.linalg.norm(m.vertices[verts] - m.z_projection[verts], axis=1)
    assert np.abs(d - 0.1).max() < 1e-10
    m2 = refine(m, 1)
    assert abs(m2.volume - analytic_slab_volume(1, 0.1)) / analytic_slab_volume(1, 0.1) < 0.03
    assert abs(m2.total_area - analytic_slab_area(1, 0.1)) / analytic_slab_area(1, 0.1) < 0.01


def test_slab_rejects():
    with pytest.raises(GeometryError):
        slab_domain(PartialGeneratorSpec(), 0.6)
    with pytest.raises(GeometryError):
        PartialGeneratorSpec(side=-1)
    with pytest.raises(GeometryError):
        PartialGeneratorSpec(normal=(0, 0, 2))


def test_refine_counts_and_tags(slab_coarse):
    r = refine(slab_coarse, 1)
    assert r.n_triangles == 4 * slab_coarse.n_triangles
    assert np.array_equal(r.region_tag[::4], slab_coarse.region_tag)
    with pytest.raises(ValueError):
        refine(slab_coarse, 0)


def test_projection_idempotent(slab_coarse, tube_coarse):
    for m in (slab_coarse, tube_coarse):
        z, _ = m.projector.nearest(m.z_projection)
        assert np.abs(z - m.z_projection).max() < 1e-12


def test_sphere_mesh():
    m = sphere_mesh(1.0, 10)
    assert m.n_triangles == 2000 and len(m.edges) == 3000
    assert abs(m.total_area - 4 * np.pi) / (4 * np.pi) < 0.01


def test_vtk_roundtrip(tmp_path, tube_coarse):
    p = tmp_path / "m.vtk"
    write_vtk(tube_coarse, p)
    d = read_vtk(p)
    assert np.array_equal(d["triangles"], tube_coarse.triangles)
    assert np.array_equal(d["vertices"], tube_coarse.vertices)
    assert np.array_equal(d["region_tag"], tube_coarse.region_tag)
    assert np.array_equal(d["z_projection"], tube_coarse.z_projection)


def test_mesh_hash_stable(segment):
    a = tube_domain(segment, 0.2, MeshResolution(n_circ=8))
    b = tube_domain(segment, 0.2, MeshResolution(n_circ=8))
    assert a.hash == b.hash
