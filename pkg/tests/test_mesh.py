import numpy as np
import pytest

from phongfit.mesh import (
    ControlMesh,
    MeshError,
    NonManifoldEdgeError,
    SurfaceCoordinate,
    build_adjacency,
    load_mesh_text,
    remap_across_edge,
    save_mesh_text,
    walk,
    walk_batch,
)

from conftest import OCTA_FACES, OCTA_VERTS


def test_adjacency_two_triangles(two_triangles):
    adj = two_triangles.edge_adjacency
    interior = [(k, v) for k, v in adj.items() if v is not None]
    boundary = [k for k, v in adj.items() if v is None]
    assert len(interior) == 2   # one shared edge, seen from both sides
    assert len(boundary) == 4
    (k0, v0), (k1, v1) = interior
    assert v0 == k1 and v1 == k0  # symmetric


def test_adjacency_single_triangle():
    adj_tri, _ = build_adjacency(np.array([[0, 1, 2]]))
    assert (adj_tri == -1).all()


def test_adjacency_octahedron_euler(octahedron):
    # V - E + F = 2 for the sphere: 6 - 12 + 8
    interior = sum(v is not None for v in octahedron.edge_adjacency.values())
    assert interior == 24  # 12 interior edges, each counted from both sides
    assert octahedron.is_closed()


def test_adjacency_rejects_nonmanifold():
    tris = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(NonManifoldEdgeError) as exc:
        build_adjacency(tris)
    assert "(0, 1)" in str(exc.value)


def test_surface_coordinate_validation():
    u = SurfaceCoordinate(0, 0.3, 0.2)
    assert (u.v, u.w) == (0.3, 0.2)
    clamped = SurfaceCoordinate(0, -1e-13, 0.5)
    assert clamped.v == 0.0
    with pytest.raises(ValueError):
        SurfaceCoordinate(0, 0.7, 0.7)
    with pytest.raises(ValueError):
        SurfaceCoordinate(0, -1e-3, 0.1)


def test_control_mesh_validation():
    verts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]])
    with pytest.raises(MeshError):
        ControlMesh(verts, np.full((3, 3), 0.5), np.array([[0, 1, 2]]))  # non-unit
    with pytest.raises(MeshError):
        ControlMesh(verts, np.eye(3), np.array([[0, 1, 5]]))  # bad index
    degenerate = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
    with pytest.raises(MeshError):
        ControlMesh(degenerate, np.eye(3), np.array([[0, 1, 2]]))


def test_walk_interior(two_triangles):
    res = walk(two_triangles, SurfaceCoordinate(0, 0.2, 0.2), np.array([0.1, 0.1]))
    assert res.coord.patch == 0
    assert res.crossings == 0 and not res.hit_boundary and not res.truncated
    assert np.allclose([res.coord.v, res.coord.w], [0.3, 0.3])


def test_walk_zero_delta(two_triangles):
    u = SurfaceCoordinate(1, 0.37, 0.11)
    res = walk(two_triangles, u, np.zeros(2))
    assert res.coord == u and res.crossings == 0


def test_walk_crossing_consumes_partial_step(two_triangles):
    # crossing the w=0 edge of patch 0 into patch 1
    res = walk(two_triangles, SurfaceCoordinate(0, 0.3, 0.2), np.array([0.0, -0.5]))
    assert res.coord.patch == 1
    assert res.crossings == 1
    # remaining length after the crossing: total 0.5, consumed 0.2
    assert np.isclose(np.linalg.norm(res.delta_out), 0.5)


def _flat_pair():
    # two coplanar unit triangles sharing the hypotenuse edge (1, 2)
    verts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [1.0, 1, 0]])
    normals = np.tile([0.0, 0.0, 1.0], (4, 1))
    return ControlMesh(verts, normals, np.array([[0, 1, 2], [2, 1, 3]]))


def test_walk_hypotenuse_crossing_magnitude():
    # exit through v + w = 1 at r = (1 - 0.95) / 0.2 = 0.25
    mesh = _flat_pair()
    res = walk(mesh, SurfaceCoordinate(0, 0.5, 0.45), np.array([0.2, 0.0]))
    assert res.crossings == 1
    assert res.coord.patch == 1
    assert not res.hit_boundary
    # the full step keeps its domain magnitude through the remap
    assert np.isclose(np.linalg.norm(res.delta_out), 0.2)
    # the remainder applied inside the neighbor has length (1 - r)*0.2 = 0.15
    entry = np.array([0.55, 0.0])   # crossing point in the neighbor's domain
    end = np.array([res.coord.v, res.coord.w])
    assert np.isclose(np.linalg.norm(end - entry), 0.15)


def test_walk_boundary_truncation(single_triangle):
    res = walk(single_triangle, SurfaceCoordinate(0, 0.5, 0.3), np.array([1.0, 0.0]))
    assert res.hit_boundary
    assert np.isclose(res.coord.v + res.coord.w, 1.0, atol=1e-12)


def test_walk_crossing_cap(octahedron):
    # enormous step keeps circling the closed surface until the cap trips
    res = walk(octahedron, SurfaceCoordinate(0, 0.3, 0.3), np.array([500.0, 0.2]),
               max_crossings=8)
    assert res.truncated
    assert res.crossings == 8
    assert 0.0 <= res.coord.v and 0.0 <= res.coord.w
    assert res.coord.v + res.coord.w <= 1.0 + 1e-12


def test_walk_reverse_returns_to_start(octahedron):
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(200):
        u = SurfaceCoordinate(int(rng.integers(8)), *_interior(rng))
        delta = rng.uniform(-0.8, 0.8, size=2)
        fwd = walk(octahedron, u, delta)
        if fwd.hit_boundary or fwd.truncated or fwd.crossings > 1:
            continue
        back = walk(octahedron, fwd.coord, -fwd.delta_out)
        p0 = octahedron.embed(u)
        p1 = octahedron.embed(back.coord)
        assert np.linalg.norm(p0 - p1) < 1e-7
        checked += 1
    assert checked > 40


def _interior(rng, margin=0.05):
    v = rng.uniform(margin, 1 - 2 * margin)
    w = rng.uniform(margin, 1 - v - margin)
    return v, w


def test_walk_position_continuous_at_crossing(octahedron):
    # the 3D point of the crossing, evaluated from both incident patches
    rng = np.random.default_rng(41)
    checked = 0
    for _ in range(100):
        u = SurfaceCoordinate(int(rng.integers(8)), *_interior(rng))
        delta = rng.uniform(-0.8, 0.8, size=2)
        res = walk(octahedron, u, delta)
        if res.crossings != 1 or res.hit_boundary:
            continue
        # shrink the step just short of / just past the boundary
        lo, hi = 0.0, 1.0
        for _ in range(60):  # bisect the crossing fraction
            mid = 0.5 * (lo + hi)
            if walk(octahedron, u, mid * delta).crossings == 0:
                lo = mid
            else:
                hi = mid
        before = octahedron.embed(walk(octahedron, u, lo * delta).coord)
        after = octahedron.embed(walk(octahedron, u, hi * delta).coord)
        assert np.linalg.norm(before - after) < 1e-9
        checked += 1
    assert checked > 20


def test_walk_closed_mesh_never_hits_boundary(octahedron):
    rng = np.random.default_rng(11)
    patches = rng.integers(0, 8, size=300)
    vw = np.array([_interior(rng) for _ in range(300)])
    deltas = rng.uniform(-2.0, 2.0, size=(300, 2))
    _, _, n_boundary, _ = walk_batch(octahedron, patches, vw, deltas)
    assert n_boundary == 0


def test_walk_batch_matches_scalar(octahedron):
    rng = np.random.default_rng(3)
    n = 64
    patches = rng.integers(0, 8, size=n)
    vw = np.array([_interior(rng) for _ in range(n)])
    deltas = rng.uniform(-0.9, 0.9, size=(n, 2))
    bp, bvw, _, _ = walk_batch(octahedron, patches.copy(), vw.copy(), deltas)
    for i in range(n):
        res = walk(octahedron, SurfaceCoordinate(int(patches[i]), *vw[i]), deltas[i])
        assert res.coord.patch == bp[i]
        assert np.allclose([res.coord.v, res.coord.w], bvw[i], atol=1e-12)


def test_walk_output_always_valid(octahedron):
    rng = np.random.default_rng(17)
    for _ in range(500):
        u = SurfaceCoordinate(int(rng.integers(8)), *_interior(rng))
        delta = rng.uniform(-5, 5, size=2)
        res = walk(octahedron, u, delta)
        assert res.coord.v >= 0 and res.coord.w >= 0
        assert res.coord.v + res.coord.w <= 1.0 + 1e-12


def test_remap_along_edge_preserves_speed(two_triangles):
    # a step exactly along the shared edge keeps its parameter speed
    q, out = remap_across_edge(two_triangles, 0, 0, np.array([0.25, 0.0]))
    assert q == 1
    assert np.isclose(np.linalg.norm(out), 0.25)
    # and stays on the shared edge line of the neighbor (edge 0 of patch 1: w=0)
    assert np.isclose(out[1], 0.0, atol=1e-12)


def test_remap_transverse_points_inward(two_triangles):
    # exiting patch 0 through its w=0 edge must enter patch 1's interior
    q, out = remap_across_edge(two_triangles, 0, 0, np.array([0.0, -0.3]))
    assert q == 1
    assert out[1] > 0  # inward component of patch 1's w=0 edge


def test_remap_round_trip(two_triangles):
    rng = np.random.default_rng(23)
    for _ in range(50):
        delta = rng.uniform(-1, 1, size=2)
        _, fwd = remap_across_edge(two_triangles, 0, 0, delta)
        _, back = remap_across_edge(two_triangles, 1, 0, -fwd)
        assert np.allclose(back, -delta, atol=1e-9)
        assert np.isclose(np.linalg.norm(fwd), np.linalg.norm(delta))


def test_mesh_text_round_trip(tmp_path, octahedron):
    path = tmp_path / "mesh.txt"
    save_mesh_text(octahedron, path)
    loaded = load_mesh_text(path)
    assert np.array_equal(loaded.vertex_positions, octahedron.vertex_positions)
    assert np.array_equal(loaded.vertex_normals, octahedron.vertex_normals)
    assert np.array_equal(loaded.triangles, octahedron.triangles)


def test_mesh_text_round_trip_awkward_floats(tmp_path):
    rng = np.random.default_rng(9)
    verts = OCTA_VERTS + 1e-7 * rng.standard_normal(OCTA_VERTS.shape)
    normals = verts / np.linalg.norm(verts, axis=1, keepdims=True)
    mesh = ControlMesh(verts, normals, OCTA_FACES)
    path = tmp_path / "mesh.txt"
    save_mesh_text(mesh, path)
    loaded = load_mesh_text(path)
    assert np.array_equal(loaded.vertex_positions, mesh.vertex_positions)
    assert np.array_equal(loaded.vertex_normals, mesh.vertex_normals)


def test_mesh_text_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("v 0 0 0\nvn 0 0 1\nq 1 2 3\n")
    with pytest.raises(MeshError) as exc:
        load_mesh_text(path)
    assert "line 3" in str(exc.value)
