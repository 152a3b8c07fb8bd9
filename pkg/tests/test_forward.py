import numpy as np
import pytest

from dbar_eit import forward as fw
from dbar_eit import phantom as ph

EMPTY = ph.Phantom(inclusions=(), style="kit4", seed=0)


def triangle_areas(mesh):
    v = mesh.vertices[mesh.triangles]
    return 0.5 * ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
                  - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1]))


class TestMesh:
    def test_level0_contract(self):
        mesh = fw.build_disk_mesh(0)
        nb = len(mesh.boundary)
        assert nb >= 64 and (nb & (nb - 1)) == 0
        assert np.all(triangle_areas(mesh) > 0)
        r = np.hypot(*mesh.vertices[mesh.boundary].T)
        assert np.max(np.abs(r - 1.0)) < 1e-12

    def test_area_converges_to_pi(self):
        mesh = fw.build_disk_mesh(3)
        assert abs(triangle_areas(mesh).sum() - np.pi) < 1e-3

    def test_deterministic(self):
        a, b = fw.build_disk_mesh(4), fw.build_disk_mesh(4)
        np.testing.assert_array_equal(a.vertices, b.vertices)
        np.testing.assert_array_equal(a.triangles, b.triangles)

    def test_boundary_ordered_by_angle(self):
        mesh = fw.build_disk_mesh(1)
        assert np.all(np.diff(mesh.boundary_angles) > 0)

    def test_vertex_growth(self):
        # the >= 64 boundary clamp makes levels 0 and 1 coincide; dyadic
        # scaling starts at level 1
        counts = [len(fw.build_disk_mesh(lv).vertices) for lv in (1, 2, 3)]
        assert 3.0 < counts[1] / counts[0] < 5.0
        assert 3.0 < counts[2] / counts[1] < 5.0


class TestSolveNeumann:
    # separation of variables: u_n = r^|n| phi_n / |n| for sigma = 1
    def test_homogeneous_analytic_trace(self):
        mesh = fw.build_disk_mesh(3)
        theta = mesh.boundary_angles
        for n in (1, -3):
            trace = fw.solve_neumann(mesh, EMPTY, n)
            exact = fw.trig_pattern(n, theta) / abs(n)
            assert np.max(np.abs(trace - exact)) < 1e-3

    def test_zero_mean_constraint(self):
        mesh = fw.build_disk_mesh(2)
        chord = 2.0 * np.sin(np.pi / len(mesh.boundary))
        for phantom in (EMPTY, ph.generate_kit4(3)):
            trace = fw.solve_neumann(mesh, phantom, 2)
            assert abs(chord * trace.sum()) < 1e-10

    def test_constant_pattern_rejected(self):
        with pytest.raises(ValueError):
            fw.solve_neumann(fw.build_disk_mesh(0), EMPTY, 0)


class TestComputeNtD:
    def test_homogeneous_matches_diag(self):
        mesh = fw.build_disk_mesh(3)
        R = fw.compute_ntd(mesh, EMPTY, N=16)
        target = np.array([1.0 / abs(n) for n in fw.pattern_indices(16)])
        rel = np.abs(np.diag(R) - target) / target
        assert rel.max() < 1e-2
        off = R - np.diag(np.diag(R))
        assert np.abs(off).max() < 1e-2 * target.min()

    def test_self_adjointness(self):
        mesh = fw.build_disk_mesh(3)
        R = fw.compute_ntd(mesh, ph.generate_kit4(1), N=16)
        assert np.linalg.norm(R - R.T) / np.linalg.norm(R) < 1e-4

    def test_positive_definite_and_spectrum(self):
        mesh = fw.build_disk_mesh(3)
        R = fw.compute_ntd(mesh, EMPTY, N=16)
        ev = np.sort(np.linalg.eigvalsh(R))[::-1]
        assert ev[-1] > 0
        # eigenvalues come in sin/cos pairs: k-th largest ~ 1/k within 2%
        for k in range(1, 17):
            assert abs(ev[2 * (k - 1)] * k - 1.0) < 0.02

    def test_monotone_in_conductivity(self):
        mesh = fw.build_disk_mesh(2)
        conductive = ph.Phantom(
            inclusions=(ph.Inclusion("circle", 2.2, (0.2, 0.1), (0.3, 0.3)),
                        ph.Inclusion("circle", 1.8, (-0.4, -0.3), (0.2, 0.2))),
            style="kit4", seed=0)
        R_sigma = fw.compute_ntd(mesh, conductive, N=16)
        R_one = fw.compute_ntd(mesh, EMPTY, N=16)
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.standard_normal(32)
            assert x @ R_sigma @ x <= x @ R_one @ x + 1e-12

    def test_refinement_convergence(self):
        p = ph.generate_kit4(2)
        Rs = [fw.compute_ntd(fw.build_disk_mesh(lv), p, N=8) for lv in (1, 2, 3)]
        d01 = np.linalg.norm(Rs[1] - Rs[0])
        d12 = np.linalg.norm(Rs[2] - Rs[1])
        assert d12 < d01


class TestPerturb:
    def test_zero_noise_identity(self):
        R = fw.compute_ntd(fw.build_disk_mesh(1), EMPTY, N=4)
        np.testing.assert_array_equal(fw.perturb_ntd(R, 0.0, seed=9), R)

    def test_deterministic(self):
        R = np.eye(8)
        np.testing.assert_array_equal(fw.perturb_ntd(R, 0.01, 7),
                                      fw.perturb_ntd(R, 0.01, 7))

    def test_column_scaling(self):
        rng = np.random.default_rng(3)
        R = rng.standard_normal((32, 32))
        delta = 0.0075
        out = fw.perturb_ntd(R, delta, seed=123)
        ratios = [np.max(np.abs(out[:, c] - R[:, c]))
                  / (delta * np.max(np.abs(R[:, c]))) for c in range(32)]
        assert max(ratios) <= 5.0
        assert min(ratios) > 0.0

    def test_negative_delta_rejected(self):
        with pytest.raises(ValueError):
            fw.perturb_ntd(np.eye(4), -0.1, 0)


class TestDtN:
    def test_diagonal_inversion(self):
        N = 4
        R = np.diag([1.0 / abs(n) for n in fw.pattern_indices(N)])
        L = fw.ntd_to_dtn(R)
        assert L.shape == (2 * N + 1, 2 * N + 1)
        np.testing.assert_allclose(L, fw.homogeneous_dtn(N), atol=1e-12)

    def test_dimensions_for_default_patterns(self):
        R = fw.compute_ntd(fw.build_disk_mesh(2), EMPTY, N=16)
        assert fw.ntd_to_dtn(R).shape == (33, 33)

    def test_middle_row_col_zero(self):
        L = fw.ntd_to_dtn(np.diag([0.5, 1.0, 1.0, 0.5]))
        assert np.all(L[2, :] == 0) and np.all(L[:, 2] == 0)

    def test_inverse_contract(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((8, 8))
        R = A @ A.T + 8 * np.eye(8)   # SPD, well conditioned
        L = fw.ntd_to_dtn(R)
        keep = [i for i in range(9) if i != 4]
        np.testing.assert_allclose(L[np.ix_(keep, keep)] @ R, np.eye(8), atol=1e-10)

    def test_singular_rejected(self):
        R = np.diag([1.0, 1.0, 1.0, 0.0])
        with pytest.raises(fw.SingularSystemError):
            fw.ntd_to_dtn(R)

    def test_homogeneous_examples(self):
        L = fw.homogeneous_dtn(2)
        np.testing.assert_array_equal(np.diag(L), [2, 1, 0, 1, 2])
        assert L[2, 2] == 0.0

    def test_homogeneous_matches_fem_chain(self):
        R = fw.compute_ntd(fw.build_disk_mesh(3), EMPTY, N=16)
        L = fw.ntd_to_dtn(R)
        L1 = fw.homogeneous_dtn(16)
        diag_ref = np.where(np.diag(L1) > 0, np.diag(L1), 1.0)
        assert np.max(np.abs(L - L1) / np.sqrt(np.outer(diag_ref, diag_ref))) < 1e-2
