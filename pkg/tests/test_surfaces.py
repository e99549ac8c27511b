import numpy as np
import pytest

from phongfit.kinematics import pose_rigid
from phongfit.mesh import ControlMesh, SurfaceCoordinate
from phongfit.surfaces import (
    DegenerateNormalError,
    eval_phong,
    eval_phong_batch,
    eval_trimesh,
    eval_trimesh_batch,
    loop_limit_mesh,
    loop_limit_stencil,
)

from conftest import central_diff, interior_vw, random_mesh_patch, rel_err, unit_rows


def _posed(mesh, theta=None):
    theta = np.zeros(6) if theta is None else theta
    return pose_rigid(mesh, theta)


def test_phong_corner_reproduces_vertex_data(two_triangles):
    posed = _posed(two_triangles)
    ev = eval_phong(posed, SurfaceCoordinate(0, 0.0, 0.0))
    assert np.allclose(ev.position, two_triangles.vertex_positions[0])
    assert np.allclose(ev.normal, two_triangles.vertex_normals[0], atol=1e-12)
    ev2 = eval_phong(posed, SurfaceCoordinate(0, 1.0, 0.0))
    assert np.allclose(ev2.normal, two_triangles.vertex_normals[1], atol=1e-12)


def test_phong_constant_normal_field():
    n = np.array([0.0, 0.0, 1.0])
    verts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]])
    mesh = ControlMesh(verts, np.tile(n, (3, 1)), np.array([[0, 1, 2]]))
    ev = eval_phong(_posed(mesh), SurfaceCoordinate(0, 1 / 3, 1 / 3))
    assert np.allclose(ev.normal, n)
    assert np.allclose(ev.dN_dv, 0.0) and np.allclose(ev.dN_dw, 0.0)


def test_phong_normal_is_unit_and_derivative_tangent():
    rng = np.random.default_rng(0)
    for _ in range(20):
        mesh = random_mesh_patch(rng)
        posed = _posed(mesh, rng.uniform(-0.5, 0.5, 6))
        v, w = interior_vw(rng)
        ev = eval_phong(posed, SurfaceCoordinate(0, v, w))
        assert abs(np.linalg.norm(ev.normal) - 1.0) < 1e-9
        assert abs(ev.normal @ ev.dN_dv) < 1e-7
        assert abs(ev.normal @ ev.dN_dw) < 1e-7


def test_phong_degenerate_normal_errors():
    verts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]])
    normals = np.array([[0.0, 0, 1], [0.0, 0, -1], [1.0, 0, 0]])
    mesh = ControlMesh(verts, normals, np.array([[0, 1, 2]]))
    with pytest.raises(DegenerateNormalError) as exc:
        eval_phong(_posed(mesh), SurfaceCoordinate(0, 0.5, 0.0))
    assert "patch 0" in str(exc.value)


def test_trimesh_normal_constant_on_facet():
    verts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]])
    normals = unit_rows(np.array([[0.3, 0, 1], [0, 0.3, 1], [0, 0, 1.0]]))
    mesh = ControlMesh(verts, normals, np.array([[0, 1, 2]]))
    posed = _posed(mesh)
    corner = eval_trimesh(posed, SurfaceCoordinate(0, 0.0, 0.0))
    assert np.allclose(corner.normal, [0, 0, 1])
    rng = np.random.default_rng(1)
    for _ in range(10):
        v, w = interior_vw(rng)
        ev = eval_trimesh(posed, SurfaceCoordinate(0, v, w))
        assert np.allclose(ev.normal, corner.normal)
        assert np.all(ev.dN_dv == 0.0) and np.all(ev.dN_dw == 0.0)


def test_positions_identical_between_surface_types():
    rng = np.random.default_rng(2)
    for _ in range(10):
        mesh = random_mesh_patch(rng)
        posed = _posed(mesh, rng.uniform(-0.5, 0.5, 6))
        patches = np.zeros(8, dtype=int)
        vw = np.array([interior_vw(rng) for _ in range(8)])
        a = eval_phong_batch(posed, patches, vw)
        b = eval_trimesh_batch(posed, patches, vw)
        assert np.array_equal(a.position, b.position)
        assert np.array_equal(a.dS_du, b.dS_du)


def test_phong_normal_continuous_across_interior_edges(two_triangles):
    posed = _posed(two_triangles, np.array([0.1, -0.2, 0.05, 0.3, 0.1, -0.2]))
    rng = np.random.default_rng(3)
    # shared edge of patches 0 and 1 joins mesh vertices 0 and 1
    for _ in range(10):
        s = rng.uniform(0.01, 0.99)
        # vertex 0 at corner 0 and vertex 1 at corner 1 of patch 0: w = 0
        u0 = SurfaceCoordinate(0, s, 0.0)
        # vertex 1 at corner 0 and vertex 0 at corner 1 of patch 1: w = 0
        u1 = SurfaceCoordinate(1, 1.0 - s, 0.0)
        e0 = eval_phong(posed, u0)
        e1 = eval_phong(posed, u1)
        assert np.linalg.norm(e0.position - e1.position) < 1e-9
        assert np.linalg.norm(e0.normal - e1.normal) < 1e-9


def _fd_check_surface(eval_batch, surface_jacobians=True, seed=4, trials=25):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        mesh = random_mesh_patch(rng)
        theta = rng.uniform(-0.6, 0.6, 6)
        posed = pose_rigid(mesh, theta)
        v, w = interior_vw(rng)
        ev = eval_batch(posed, np.array([0]), np.array([[v, w]])).single()

        def f_u(uu):
            e = eval_batch(posed, np.array([0]), uu[None, :]).single()
            return np.concatenate([e.position, e.normal])

        J_u = central_diff(f_u, np.array([v, w]))
        worst = max(worst, rel_err(np.column_stack([ev.dS_dv, ev.dS_dw]), J_u[:3]))
        if surface_jacobians:
            worst = max(worst, rel_err(np.column_stack([ev.dN_dv, ev.dN_dw]), J_u[3:]))

        def f_th(th):
            p = pose_rigid(mesh, th)
            e = eval_batch(p, np.array([0]), np.array([[v, w]])).single()
            return np.concatenate([e.position, e.normal])

        J_th = central_diff(f_th, theta)
        worst = max(worst, rel_err(ev.dS_dtheta, J_th[:3]))
        worst = max(worst, rel_err(ev.dN_dtheta, J_th[3:]))
    return worst


def test_phong_derivatives_match_finite_differences():
    assert _fd_check_surface(eval_phong_batch) < 1e-5


def test_trimesh_derivatives_match_finite_differences():
    assert _fd_check_surface(eval_trimesh_batch) < 1e-5


def test_rigid_equivariance():
    rng = np.random.default_rng(6)
    for _ in range(10):
        mesh = random_mesh_patch(rng)
        theta = rng.uniform(-1.0, 1.0, 6)
        posed = pose_rigid(mesh, theta)
        ident = pose_rigid(mesh, np.zeros(6))
        from phongfit.kinematics import rotation_matrix
        R = rotation_matrix(theta[3:])
        t = theta[:3]
        v, w = interior_vw(rng)
        u = SurfaceCoordinate(0, v, w)
        for ev in (eval_phong, eval_trimesh):
            posed_ev = ev(posed, u)
            ident_ev = ev(ident, u)
            assert np.linalg.norm(posed_ev.position - (R @ ident_ev.position + t)) < 1e-9
            assert np.linalg.norm(posed_ev.normal - R @ ident_ev.normal) < 1e-9


# ---------------------------------------------------------------------------
# Loop limit stencils

def test_limit_position_planar_ring_stays_planar():
    # regular valence-6 ring in the z = 0 plane
    ang = 2 * np.pi * np.arange(6) / 6
    ring = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(6)])
    verts = np.vstack([[0.0, 0.0, 0.0], ring])
    faces = np.array([[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)])
    # close the mesh with a far apex below so every ring edge is interior
    apex = np.array([[0.0, 0.0, -3.0]])
    verts = np.vstack([verts, apex])
    lower = np.array([[7, 1 + (i + 1) % 6, 1 + i] for i in range(6)])
    faces = np.vstack([faces, lower])
    normals = unit_rows(verts + np.array([0, 0, 1e-3]))
    normals[0] = [0, 0, 1.0]
    mesh = ControlMesh(verts, normals, faces)
    pos, nrm = loop_limit_stencil(mesh, 0)
    assert abs(pos[2]) < 1e-12
    assert np.allclose(np.abs(nrm), [0, 0, 1])
    # uniform translation moves the limit position identically
    shifted = ControlMesh(verts + np.array([0.3, -0.2, 0.7]), normals, faces)
    pos2, _ = loop_limit_stencil(shifted, 0)
    assert np.allclose(pos2 - pos, [0.3, -0.2, 0.7], atol=1e-12)


def test_limit_normal_octahedron_radial(octahedron):
    for i in range(6):
        pos, nrm = loop_limit_stencil(octahedron, i)
        radial = octahedron.vertex_positions[i]
        assert np.linalg.norm(np.cross(nrm, radial)) < 1e-9
        assert nrm @ radial > 0  # outward
        # limit position shrinks towards the centroid but keeps the direction
        assert np.linalg.norm(np.cross(pos, radial)) < 1e-9


def test_limit_mesh_requires_closed(single_triangle):
    with pytest.raises(ValueError):
        loop_limit_mesh(single_triangle)


def test_limit_valence6_weights():
    # valence-6 limit mask has the classic 1/2, 1/12 weights: check via a
    # configuration whose ring sum isolates the center weight
    ang = 2 * np.pi * np.arange(6) / 6
    ring = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(6)])
    verts = np.vstack([[0.0, 0.0, 1.0], ring, [[0.0, 0.0, -3.0]]])
    faces = np.array([[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)]
                     + [[7, 1 + (i + 1) % 6, 1 + i] for i in range(6)])
    normals = unit_rows(verts + np.array([0, 0, 1e-3]))
    mesh = ControlMesh(verts, normals, faces)
    pos, _ = loop_limit_stencil(mesh, 0)
    # ring sum is zero in z, so the limit z is exactly half the center z
    assert abs(pos[2] - 0.5) < 1e-12
