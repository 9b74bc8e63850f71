import numpy as np
import pytest

from gravpose.errors import (
    BehindCameraError,
    DegenerateEpipolarError,
    DegenerateFactorizationError,
    DegenerateLineError,
)
from gravpose.geometry import (
    Pose4,
    PoseSE3,
    StereoRig,
    backproject,
    compose_stereo_pose,
    epipolar_distance,
    epipolar_line,
    factor_yaw_rollpitch,
    homogeneous,
    pose4_to_se3,
    project,
    relative_rotation,
    rot_rp,
    rot_yaw,
    so3_exp,
    so3_log,
    wrap_angle,
)

from conftest import make_rng


class TestRotYaw:
    def test_identity(self):
        np.testing.assert_allclose(rot_yaw(0.0), np.eye(3), atol=1e-15)

    def test_quarter_turn(self):
        expected = np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 1]], dtype=float)
        np.testing.assert_allclose(rot_yaw(np.pi / 2), expected, atol=1e-15)

    def test_entries_at_0p3(self):
        c, s = np.cos(0.3), np.sin(0.3)
        expected = np.array([[c, s, 0], [-s, c, 0], [0, 0, 1]])
        np.testing.assert_allclose(rot_yaw(0.3), expected, atol=1e-15)

    def test_third_row(self):
        for psi in (-1.2, 0.4, 2.9):
            np.testing.assert_allclose(rot_yaw(psi)[2], [0, 0, 1], atol=1e-15)


class TestRotRp:
    def test_identity(self):
        np.testing.assert_allclose(rot_rp(0.0, 0.0), np.eye(3), atol=1e-15)

    def test_pitch_quarter_turn(self):
        expected = np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0]], dtype=float)
        np.testing.assert_allclose(rot_rp(np.pi / 2, 0.0), expected, atol=1e-15)

    def test_third_row_stencil(self):
        th, ph = 0.4, -0.7
        r = rot_rp(th, ph)
        np.testing.assert_allclose(
            r[2], [-np.sin(th), -np.cos(th) * np.sin(ph), np.cos(th) * np.cos(ph)], atol=1e-15
        )

    def test_orthonormal_unit_det(self):
        rng = make_rng(1)
        for _ in range(50):
            th, ph = rng.uniform(-1.4, 1.4, 2)
            r = rot_rp(th, ph)
            np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)
            assert abs(np.linalg.det(r) - 1.0) < 1e-12


class TestFactorYawRollpitch:
    def test_identity(self):
        e = factor_yaw_rollpitch(np.eye(3))
        assert (e.psi, e.theta, e.phi) == (0.0, 0.0, 0.0)

    def test_round_trip_known_angles(self):
        e = factor_yaw_rollpitch(rot_yaw(0.3) @ rot_rp(0.1, -0.2))
        np.testing.assert_allclose([e.psi, e.theta, e.phi], [0.3, 0.1, -0.2], atol=1e-12)

    def test_yaw_only(self):
        e = factor_yaw_rollpitch(rot_yaw(1.0))
        np.testing.assert_allclose([e.psi, e.theta, e.phi], [1.0, 0.0, 0.0], atol=1e-12)

    def test_round_trip_random(self):
        rng = make_rng(2)
        for _ in range(200):
            psi = rng.uniform(-np.pi, np.pi)
            th = rng.uniform(-np.pi / 2 + 0.01, np.pi / 2 - 0.01)
            ph = rng.uniform(-np.pi, np.pi)
            r = rot_yaw(psi) @ rot_rp(th, ph)
            e = factor_yaw_rollpitch(r)
            np.testing.assert_allclose(
                rot_yaw(e.psi) @ rot_rp(e.theta, e.phi), r, atol=1e-10
            )
            assert abs(wrap_angle(e.psi - psi)) < 1e-9
            assert abs(e.theta - th) < 1e-9
            assert abs(wrap_angle(e.phi - ph)) < 1e-9

    def test_gimbal_degenerate_raises(self):
        with pytest.raises(DegenerateFactorizationError):
            factor_yaw_rollpitch(rot_rp(np.pi / 2, 0.0))


class TestProject:
    def test_unit_depth(self):
        np.testing.assert_allclose(project(np.array([0.0, 0.0, 1.0])), [0.0, 0.0])

    def test_direct_ratio(self):
        np.testing.assert_allclose(project(np.array([1.0, 2.0, 4.0])), [0.25, 0.5])

    def test_behind_camera(self):
        with pytest.raises(BehindCameraError):
            project(np.array([0.0, 0.0, -1.0]))

    def test_composed_with_pose_matches_arithmetic(self):
        # independent oracle: elementwise projection formula after R p + t
        rng = make_rng(3)
        r = rot_yaw(0.4) @ rot_rp(0.2, -0.1)
        t = np.array([0.3, -0.2, 0.5])
        pose = PoseSE3(r, t)
        for _ in range(20):
            p = rng.uniform([-1, -1, 2], [1, 1, 8])
            pc = r @ p + t
            expected = np.array([pc[0] / pc[2], pc[1] / pc[2]])
            np.testing.assert_allclose(project(pose.apply(p)), expected, atol=1e-14)

    def test_backproject_round_trip(self):
        rng = make_rng(4)
        uv = rng.uniform(-0.3, 0.3, (40, 2))
        depth = rng.uniform(1.0, 10.0, 40)
        np.testing.assert_allclose(project(backproject(uv, depth)), uv, atol=1e-12)


class TestEpipolarLine:
    def test_noise_free_point_on_line(self):
        rng = make_rng(5)
        pose = PoseSE3(rot_yaw(0.2) @ rot_rp(0.1, 0.05), np.array([0.3, 0.1, -0.2]))
        p = rng.uniform([-1, -1, 2], [1, 1, 8], (30, 3))
        q = project(pose.apply(p))
        z = project(p)
        lines = epipolar_line(q, pose)
        residual = np.abs(np.sum(lines * homogeneous(z), axis=1))
        norm = np.hypot(lines[:, 0], lines[:, 1])
        assert np.max(residual / norm) <= 1e-12

    def test_pure_x_translation_line(self):
        pose = PoseSE3(np.eye(3), np.array([0.5, 0.0, 0.0]))
        line = epipolar_line(np.zeros(2), pose)
        line = line / np.linalg.norm(line)
        np.testing.assert_allclose(np.abs(line), [0, 1, 0], atol=1e-15)

    def test_translation_scale_invariance(self):
        pose1 = PoseSE3(rot_yaw(0.3), np.array([0.2, -0.1, 0.3]))
        pose2 = PoseSE3(rot_yaw(0.3), 2.0 * np.array([0.2, -0.1, 0.3]))
        q = np.array([0.1, -0.2])
        l1 = epipolar_line(q, pose1)
        l2 = epipolar_line(q, pose2)
        np.testing.assert_allclose(l2, 2.0 * l1, atol=1e-15)

    def test_zero_translation_raises(self):
        with pytest.raises(DegenerateEpipolarError):
            epipolar_line(np.zeros(2), PoseSE3(np.eye(3), np.zeros(3)))


class TestEpipolarDistance:
    def test_point_on_line(self):
        assert abs(epipolar_distance(np.array([1.0, 1.0, -1.0]), np.array([0.5, 0.5]))) < 1e-15

    def test_axis_aligned(self):
        assert epipolar_distance(np.array([1.0, 0.0, 0.0]), np.array([0.5, 7.0])) == pytest.approx(0.5)

    def test_unit_normal_displacement(self):
        line = np.array([3.0, 4.0, -2.0])
        normal = line[:2] / 5.0
        on_line = np.array([2.0 / 3.0, 0.0])  # 3x - 2 = 0 at y = 0
        delta = 0.37
        d = epipolar_distance(line, on_line + delta * normal)
        assert d == pytest.approx(delta, abs=1e-12)

    def test_line_at_infinity_raises(self):
        with pytest.raises(DegenerateLineError):
            epipolar_distance(np.array([0.0, 0.0, 1.0]), np.zeros(2))


class TestComposeStereoPose:
    def test_matches_dense_inverse_oracle(self, rig):
        pose = PoseSE3(rot_yaw(0.25) @ rot_rp(0.1, -0.05), np.array([0.2, -0.1, 0.15]))
        out = compose_stereo_pose(pose, rig)
        t_rl = rig.right_from_left()
        m = np.eye(4)
        m[:3, :3], m[:3, 3] = t_rl.r, t_rl.t
        mk = np.eye(4)
        mk[:3, :3], mk[:3, 3] = pose.r, pose.t
        expected = mk @ np.linalg.inv(m)
        np.testing.assert_allclose(out.r, expected[:3, :3], atol=1e-12)
        np.testing.assert_allclose(out.t, expected[:3, 3], atol=1e-12)

    def test_identity_pose_gives_right_camera_position(self, rig):
        # right camera sits at +baseline in the left frame
        out = compose_stereo_pose(PoseSE3(np.eye(3), np.zeros(3)), rig)
        np.testing.assert_allclose(out.t, rig.baseline, atol=1e-15)
        np.testing.assert_allclose(out.r, np.eye(3), atol=1e-15)

    def test_round_trip(self, rig):
        pose = PoseSE3(rot_yaw(-0.4) @ rot_rp(0.2, 0.3), np.array([0.1, 0.4, -0.2]))
        out = compose_stereo_pose(pose, rig)
        back = out.compose(rig.right_from_left())
        np.testing.assert_allclose(back.r, pose.r, atol=1e-12)
        np.testing.assert_allclose(back.t, pose.t, atol=1e-12)


class TestNoiseFreeEpipolarInvariant:
    def test_both_images(self, cfg):
        from gravpose.pnp4dof import epipolar_distances
        from gravpose.sim import gen_scene, sample_relative_pose, synth_observations

        clean = cfg.replace(noise_px=0.0, n_points=60)
        rng = make_rng(6)
        pose, r_rp = sample_relative_pose(clean, rng)
        frame = synth_observations(
            gen_scene(clean, rng), pose4_to_se3(pose, r_rp), clean, rng
        )
        d_l, d_r = epipolar_distances(pose, r_rp, frame.corrs, clean.rig())
        assert np.max(np.abs(d_l)) <= 1e-10
        assert np.max(np.abs(d_r)) <= 1e-10


class TestSo3:
    def test_exp_log_round_trip(self):
        rng = make_rng(7)
        for _ in range(50):
            w = rng.normal(0, 1, 3)
            np.testing.assert_allclose(so3_log(so3_exp(w)), w, atol=1e-9)

    def test_small_angle(self):
        w = np.array([1e-12, -2e-12, 5e-13])
        np.testing.assert_allclose(so3_log(so3_exp(w)), w, atol=1e-15)


def test_wrap_angle_range():
    assert wrap_angle(np.pi) == pytest.approx(np.pi)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)
    assert wrap_angle(0.0) == 0.0


def test_relative_rotation_uses_transposed_yaw():
    psi, th, ph = 0.3, 0.1, -0.2
    np.testing.assert_allclose(
        relative_rotation(psi, rot_rp(th, ph)), rot_yaw(psi).T @ rot_rp(th, ph), atol=1e-15
    )
