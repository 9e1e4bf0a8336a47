import itertools

import numpy as np
import pytest

from frankoseen.mesh import (MeshError, build_ball_mesh, build_box_mesh, build_colloid_mesh,
                             check_conforming, classify_boundary, export_mesh, import_mesh,
                             signed_volumes)


def test_single_cell_cube():
    m = build_box_mesh((0, 0, 0), (1, 1, 1), 1, 1, 1)
    assert m.n_vertices == 8
    assert m.n_tets == 6
    assert m.volume == pytest.approx(1.0, abs=1e-14)


def test_box_volume_and_labels():
    m = build_box_mesh((0, 0, 0), (1, 1, 1), 4, 4, 4)
    assert abs(m.volume - 1.0) < 1e-12
    assert np.all(m.volumes > 0)
    assert set(m.regions) == {"left", "right", "front", "back", "bottom", "top"}
    check_conforming(m)


def test_slab_h_matches_exhaustive_edge_scan():
    m = build_box_mesh((0, 0, 0), (1, 1, 0.5), 3, 3, 6)
    longest = 0.0
    for t in m.tets:
        for i, j in itertools.combinations(t, 2):
            longest = max(longest, np.linalg.norm(m.vertices[i] - m.vertices[j]))
    assert m.h == pytest.approx(longest, rel=1e-15)


@pytest.mark.parametrize("args", [((0, 0, 0), (1, 1, 1), 0, 1, 1),
                                  ((0, 0, 0), (1, 0, 1), 1, 1, 1),
                                  ((0, 0, 0), (-1, 1, 1), 1, 1, 1)])
def test_box_rejects_bad_input(args):
    with pytest.raises(MeshError):
        build_box_mesh(*args)


def test_ball_boundary_on_sphere_and_origin_excluded():
    for ref in range(3):
        m = build_ball_mesh(1.0, ref)
        r = np.linalg.norm(m.vertices, axis=1)
        assert np.allclose(r[m.boundary_nodes], 1.0, atol=1e-12, rtol=0)
        assert r.min() > 1e-12
        assert np.all(m.volumes > 0)
        check_conforming(m)


def test_ball_volume_converges_monotonically():
    exact = 4 * np.pi / 3
    errs = [abs(build_ball_mesh(1.0, ref).volume - exact) for ref in range(4)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_ball_radius_scaling():
    m = build_ball_mesh(2.5, 1)
    assert np.allclose(np.linalg.norm(m.vertices[m.boundary_nodes], axis=1), 2.5, atol=1e-12)


def test_ball_jitter_is_seeded_and_keeps_boundary():
    a = build_ball_mesh(1.0, cells=9, jitter=0.1, seed=3)
    b = build_ball_mesh(1.0, cells=9, jitter=0.1, seed=3)
    c = build_ball_mesh(1.0, cells=9, jitter=0.1, seed=4)
    assert np.array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, c.vertices)
    assert np.allclose(np.linalg.norm(a.vertices[a.boundary_nodes], axis=1), 1.0, atol=1e-12)
    with pytest.raises(MeshError):
        build_ball_mesh(1.0, cells=9, jitter=0.5)


def test_ball_rejects_even_cells():
    with pytest.raises(MeshError):
        build_ball_mesh(1.0, cells=8)


@pytest.mark.parametrize("build", [lambda r: build_box_mesh((0, 0, 0), (1, 1, 0.5), *(2 ** r,) * 2, 2 ** (r + 1)),
                                   lambda r: build_ball_mesh(1.0, r),
                                   lambda r: build_colloid_mesh(2.0, 0.75, r)])
def test_quasi_uniformity_bounded(build):
    for r in (1, 2):
        d = build(r).element_diameters
        assert d.max() / d.min() <= 10


def test_colloid_geometry():
    m = build_colloid_mesh(2.0, 0.75, 1)
    r = np.linalg.norm(m.vertices, axis=1)
    labels = m.face_labels.astype(str)
    sphere_nodes = np.unique(m.faces[labels == "sphere"])
    assert np.allclose(r[sphere_nodes], 0.75, atol=1e-10)
    assert r.min() >= 0.75 - 1e-10
    outer_nodes = np.unique(m.faces[labels == "outer"])
    assert np.allclose(np.abs(m.vertices[outer_nodes]).max(axis=1), 2.0)
    assert np.all(m.volumes > 0)
    check_conforming(m)


def test_colloid_volume_converges():
    exact = 64 - 4 * np.pi / 3 * 0.75 ** 3
    errs = [abs(build_colloid_mesh(2.0, 0.75, ref).volume - exact) for ref in (0, 1, 2)]
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] / exact < 1e-3


def test_colloid_too_coarse():
    with pytest.raises(MeshError):
        build_colloid_mesh(2.0, 0.75, cells=2)
    with pytest.raises(MeshError):
        build_colloid_mesh(1.0, 1.5)


def test_classify_boundary():
    m = build_box_mesh((0, 0, 0), (1, 1, 0.5), 2, 2, 2)
    all_six = classify_boundary(m, ["left", "right", "front", "back", "bottom", "top"])
    assert np.array_equal(all_six.dirichlet_nodes, m.boundary_nodes)
    tb = classify_boundary(m, ["top", "bottom"])
    z = m.vertices[tb.dirichlet_nodes, 2]
    assert np.all((z == 0) | (z == 0.5))
    side_only = np.setdiff1d(m.boundary_nodes, tb.dirichlet_nodes)
    assert len(side_only) > 0
    sides = classify_boundary(m, "sides")
    assert set(sides.dirichlet_regions) == {"left", "right", "front", "back"}
    with pytest.raises(MeshError):
        classify_boundary(m, ["nope"])


def test_classify_colloid_union():
    m = build_colloid_mesh(2.0, 0.75, 0)
    both = classify_boundary(m, {"sphere", "outer"}).dirichlet_nodes
    s = classify_boundary(m, ["sphere"]).dirichlet_nodes
    o = classify_boundary(m, ["outer"]).dirichlet_nodes
    assert np.array_equal(both, np.union1d(s, o))


def test_export_import_round_trip(tmp_path):
    m = build_box_mesh((0, 0, 0), (1, 2, 1), 2, 3, 1)
    p = tmp_path / "cube.mesh"
    export_mesh(m, p)
    m2 = import_mesh(p)
    assert np.array_equal(m.vertices, m2.vertices)
    assert np.array_equal(m.tets, m2.tets)
    assert sorted(m2.regions) == sorted(m.regions)
    key = lambda faces, labels: sorted(zip(map(tuple, np.sort(faces, axis=1).tolist()), labels.astype(str)))
    assert key(m.faces, m.face_labels) == key(m2.faces, m2.face_labels)


TET = """tetmesh 1
vertices 4
0 0 0
1 0 0
0 1 0
0 0 1
tets 1
{tet}
faces 4 skin
1 2 3
0 3 2
0 1 3
{face}
"""


def test_import_fixes_orientation(tmp_path):
    p = tmp_path / "neg.mesh"
    p.write_text(TET.format(tet="0 2 1 3", face="0 2 1"))
    m = import_mesh(p)
    assert signed_volumes(m.vertices, m.tets)[0] > 0
    assert m.regions == ("skin",)


def test_import_dangling_face_names_line(tmp_path):
    p = tmp_path / "bad.mesh"
    p.write_text(TET.format(tet="0 1 2 3", face="0 1 7"))
    with pytest.raises(MeshError, match=r"bad.mesh:13"):
        import_mesh(p)


def test_import_non_boundary_face(tmp_path):
    text = """tetmesh 1
vertices 5
0 0 0
1 0 0
0 1 0
0 0 1
1 1 1
tets 2
0 1 2 3
1 2 3 4
faces 1 x
1 2 3
"""
    p = tmp_path / "inner.mesh"
    p.write_text(text)
    with pytest.raises(MeshError, match=r"inner.mesh:12: face"):
        import_mesh(p)


def test_import_zero_volume(tmp_path):
    p = tmp_path / "flat.mesh"
    p.write_text("tetmesh 1\nvertices 4\n0 0 0\n1 0 0\n0 1 0\n1 1 0\ntets 1\n0 1 2 3\n")
    with pytest.raises(MeshError, match="zero volume"):
        import_mesh(p)


def test_import_parse_errors(tmp_path):
    p = tmp_path / "junk.mesh"
    p.write_text("tetmesh 1\nvertices 2\n0 0 0\n1 x 0\n")
    with pytest.raises(MeshError, match=r"junk.mesh:4"):
        import_mesh(p)
    q = tmp_path / "hdr.mesh"
    q.write_text("hello\n")
    with pytest.raises(MeshError, match="header"):
        import_mesh(q)


def test_import_non_conforming(tmp_path):
    # three tets sharing one face
    text = """tetmesh 1
vertices 6
0 0 0
1 0 0
0 1 0
0 0 1
0 0 -1
1 1 1
tets 3
0 1 2 3
0 1 2 4
0 1 2 5
"""
    p = tmp_path / "nc.mesh"
    p.write_text(text)
    with pytest.raises(MeshError, match="non-conforming"):
        import_mesh(p)


GMSH = """$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
2 1 "skin"
3 2 "bulk"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
5
1 2 2 1 1 2 3 4
2 2 2 1 1 1 4 3
3 2 2 1 1 1 2 4
4 2 2 1 1 1 3 2
5 4 2 2 1 1 2 3 4
$EndElements
"""


def test_import_gmsh(tmp_path):
    p = tmp_path / "t.msh"
    p.write_text(GMSH)
    m = import_mesh(p)
    assert m.n_vertices == 4 and m.n_tets == 1
    assert m.volume == pytest.approx(1 / 6)
    assert m.regions == ("skin",)


def test_mesh_is_immutable():
    m = build_box_mesh((0, 0, 0), (1, 1, 1), 1, 1, 1)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
