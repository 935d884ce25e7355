"""Hill profile, terrain mapping, and mesh metric invariants."""

import numpy as np
import pytest
from scipy.integrate import quad as scipy_quad

from imexdg.errors import InvalidArgumentError, InvalidGeometryError
from imexdg.mesh import (
    PERIODIC,
    SLIP_WALL,
    HillParams,
    build_mesh,
    hill_height,
    terrain_map,
)

PAPER_HILL = HillParams(h_c=400.0, a_c=1000.0, x_c=30_000.0, y_c=20_000.0)


class TestHillHeight:
    def test_peak_value(self):
        assert hill_height(30_000.0, 20_000.0, PAPER_HILL) == pytest.approx(400.0)

    def test_one_halfwidth_off_center(self):
        val = hill_height(PAPER_HILL.x_c + PAPER_HILL.a_c, PAPER_HILL.y_c, PAPER_HILL)
        assert val == pytest.approx(400.0 * 2.0**-1.5, rel=1e-12)
        assert val == pytest.approx(141.4214, abs=5e-5)

    def test_decays_monotonically(self):
        xs = PAPER_HILL.x_c + np.linspace(0, 50_000.0, 200)
        vals = hill_height(xs, PAPER_HILL.y_c, PAPER_HILL)
        assert np.all(np.diff(vals) < 0)
        assert vals[-1] < 1.0

    def test_2d_profile_drops_y(self):
        p = HillParams(h_c=100.0, a_c=500.0, x_c=0.0)
        assert hill_height(500.0, None, p) == pytest.approx(100.0 * 2.0**-1.5)

    def test_invalid_params(self):
        with pytest.raises(InvalidArgumentError):
            HillParams(h_c=-1.0, a_c=1.0, x_c=0.0)
        with pytest.raises(InvalidArgumentError):
            HillParams(h_c=1.0, a_c=0.0, x_c=0.0)


class TestTerrainMap:
    def test_top_is_flat(self):
        top = 16_000.0
        ref = np.array([[31_000.0, 19_000.0, top]])
        phys, _ = terrain_map(ref, PAPER_HILL, top)
        assert phys[0, 2] == pytest.approx(top)

    def test_surface_follows_hill(self):
        top = 16_000.0
        ref = np.array([[30_000.0, 20_000.0, 0.0]])
        phys, _ = terrain_map(ref, PAPER_HILL, top)
        assert phys[0, 2] == pytest.approx(400.0)

    def test_zero_hill_is_identity(self):
        p = HillParams(h_c=0.0, a_c=1.0, x_c=0.0, y_c=0.0)
        ref = np.random.default_rng(0).uniform(0.0, 1.0, (5, 3)) * [10.0, 10.0, 5.0]
        phys, jac = terrain_map(ref, p, 5.0)
        assert phys == pytest.approx(ref)
        assert jac == pytest.approx(np.broadcast_to(np.eye(3), (5, 3, 3)))

    @pytest.mark.parametrize("dim", [2, 3])
    def test_jacobian_matches_finite_differences(self, dim):
        # unit-scale hill keeps the central-difference round-off below 1e-10
        top = 8.0
        params = HillParams(h_c=0.4, a_c=1.0, x_c=5.0, y_c=5.0)
        rng = np.random.default_rng(42)
        pts = rng.uniform(0.05, 0.95, (20, dim)) * np.array([10.0, 10.0, top][3 - dim :])
        _, jac = terrain_map(pts, params, top)
        eps = 1e-3
        for m in range(dim):
            shift = np.zeros(dim)
            shift[m] = eps
            f = [terrain_map(pts + s * shift, params, top)[0] for s in (-2, -1, 1, 2)]
            fd = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * eps)
            assert np.max(np.abs(jac[:, :, m] - fd)) < 1e-10


class TestBuildMesh:
    def test_single_reference_cell(self):
        mesh = build_mesh(2, (2.0, 2.0), (1, 1), degree=2)
        vm = mesh.volume_metric(5)
        assert np.broadcast_to(vm.jac_det, (1, vm.weights.size)) == pytest.approx(
            np.ones((1, vm.weights.size))
        )

    def test_paper_box_jacobian(self):
        mesh = build_mesh(
            3, (60_000.0, 40_000.0, 16_000.0), (30, 20, 8), degree=1,
            boundary=(PERIODIC, PERIODIC, SLIP_WALL),
        )
        vm = mesh.volume_metric(3)
        det = np.broadcast_to(vm.jac_det, (mesh.ncells, vm.weights.size))
        assert det == pytest.approx(np.full_like(det, 1000.0**3))

    def test_zero_height_terrain_matches_identity(self):
        flat = HillParams(h_c=0.0, a_c=1000.0, x_c=5_000.0)
        box = build_mesh(2, (10_000.0, 5_000.0), (4, 2), degree=2)
        hill = build_mesh(2, (10_000.0, 5_000.0), (4, 2), mapping=flat, degree=2)
        for n1d in (3, 5):
            a, b = box.volume_metric(n1d), hill.volume_metric(n1d)
            assert np.broadcast_to(a.jac_det, (8, n1d**2)) == pytest.approx(
                np.broadcast_to(b.jac_det, (8, n1d**2)), abs=1e-13
            )
            assert np.broadcast_to(a.contra, (8, n1d**2, 2, 2)) == pytest.approx(
                np.broadcast_to(b.contra, (8, n1d**2, 2, 2)), abs=1e-13
            )

    def test_positive_jacobians_on_hill(self):
        params = HillParams(h_c=400.0, a_c=2000.0, x_c=10_000.0)
        mesh = build_mesh(2, (20_000.0, 10_000.0), (10, 5), mapping=params, degree=3)
        for n1d in (4, 7):
            vm = mesh.volume_metric(n1d)
            assert np.all(vm.jac_det > 0)

    def test_hill_taller_than_domain_rejected(self):
        params = HillParams(h_c=6_000.0, a_c=2000.0, x_c=10_000.0)
        with pytest.raises(InvalidGeometryError):
            build_mesh(2, (20_000.0, 5_000.0), (10, 5), mapping=params, degree=2)

    def test_bad_arguments(self):
        with pytest.raises(InvalidArgumentError):
            build_mesh(1, (1.0,), (2,), degree=1)
        with pytest.raises(InvalidArgumentError):
            build_mesh(2, (1.0, 1.0), (0, 2), degree=1)
        with pytest.raises(InvalidArgumentError):
            build_mesh(2, (1.0, -1.0), (2, 2), degree=1)
        with pytest.raises(InvalidArgumentError):
            build_mesh(2, (1.0, 1.0), (2, 2), degree=1, boundary=("inflow", "periodic"))


class TestMeshVolume:
    def test_box_volume(self):
        mesh = build_mesh(3, (3.0, 2.0, 5.0), (3, 2, 4), degree=2)
        assert mesh.total_volume() == pytest.approx(30.0, rel=1e-12)

    def test_terrain_volume_matches_analytic_2d(self):
        lx, lz = 24_000.0, 8_000.0
        params = HillParams(h_c=600.0, a_c=3_000.0, x_c=12_000.0)
        mesh = build_mesh(2, (lx, lz), (24, 8), mapping=params, degree=3)
        hill_area, err = scipy_quad(lambda x: hill_height(x, None, params), 0.0, lx, limit=200)
        assert err < 1e-6 * hill_area
        exact = lx * lz - hill_area
        assert abs(mesh.total_volume() - exact) / exact < 1e-10

    def test_terrain_volume_matches_analytic_3d(self):
        lx, ly, lz = 16_000.0, 16_000.0, 8_000.0
        params = HillParams(h_c=500.0, a_c=4_000.0, x_c=8_000.0, y_c=8_000.0)
        mesh = build_mesh(3, (lx, ly, lz), (8, 8, 4), mapping=params, degree=3)
        from scipy.integrate import dblquad

        hill_vol, err = dblquad(
            lambda y, x: hill_height(x, y, params), 0.0, lx, 0.0, ly, epsabs=1e-3
        )
        exact = lx * ly * lz - hill_vol
        assert abs(mesh.total_volume() - exact) / exact < 1e-10


class TestFaces:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_unit_normals(self, dim):
        params = HillParams(h_c=300.0, a_c=2_000.0, x_c=5_000.0, y_c=5_000.0)
        extents = (10_000.0, 10_000.0, 4_000.0)[3 - dim :] if dim == 3 else (10_000.0, 4_000.0)
        counts = (4, 4, 2) if dim == 3 else (4, 2)
        mesh = build_mesh(dim, extents, counts, mapping=params, degree=2)
        for block in mesh.face_blocks:
            for n1d, normal in block.normal.items():
                norms = np.linalg.norm(normal, axis=-1)
                assert np.max(np.abs(norms - 1.0)) < 1e-13

    def test_periodic_connectivity_and_counts(self):
        mesh = build_mesh(2, (8.0, 4.0), (4, 2), boundary=(PERIODIC, PERIODIC), degree=1)
        interior = [b for b in mesh.face_blocks if b.right_cells is not None]
        boundary = [b for b in mesh.face_blocks if b.right_cells is None]
        assert not boundary
        total_faces = sum(b.nfaces for b in interior)
        assert total_faces == 4 * 2 * 2  # one face per cell per direction

        xseam = [b for b in interior if b.direction == 0][0]
        # the seam connects the last column back to the first
        assert 3 in xseam.left_cells
        assert set(xseam.right_cells) <= set(range(8))

    def test_slip_wall_blocks_present(self):
        mesh = build_mesh(2, (8.0, 4.0), (4, 2), boundary=(PERIODIC, SLIP_WALL), degree=1)
        walls = [b for b in mesh.face_blocks if b.boundary == SLIP_WALL]
        assert len(walls) == 2
        bottom = [b for b in walls if b.left_side == 0][0]
        for n1d, normal in bottom.normal.items():
            assert np.all(normal[..., -1] < 0)  # outward is downward

    def test_hill_bottom_normal_tilts(self):
        params = HillParams(h_c=1_000.0, a_c=2_000.0, x_c=8_000.0)
        mesh = build_mesh(2, (16_000.0, 8_000.0), (8, 4), mapping=params, degree=2)
        bottom = [b for b in mesh.face_blocks if b.boundary == SLIP_WALL and b.left_side == 0][0]
        normal = bottom.normal[5]
        # upwind slope: ground rises with x so the outward (downward) normal
        # acquires a positive x component ahead of the crest
        assert normal[1, :, 0].max() > 0.03

    def test_summary_text(self):
        mesh = build_mesh(2, (8.0, 4.0), (4, 2), degree=2)
        text = mesh.summary()
        assert "cells=4x2" in text
        assert "volume" in text
