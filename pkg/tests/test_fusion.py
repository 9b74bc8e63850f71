import numpy as np
import pytest

from gravpose.errors import (
    BehindCameraError,
    FreeFallSampleError,
    InsufficientDataError,
    StreamOrderError,
)
from gravpose.fusion import (
    FusionState,
    GravityVector,
    ImuSample,
    WishartPrior,
    bcd_solve,
    gravity_residual,
    predicted_gravity_body,
    propagate_attitude,
    relative_rotation_from_state,
    sample_covariance,
    visual_residual,
    wishart_map_update,
)
from gravpose.geometry import (
    project,
    relative_rotation,
    rot_rp,
    rot_yaw,
    rp_factor,
    so3_exp,
    so3_log,
)
from gravpose.sim import SimConfig, gen_scene
from gravpose.stereo import Correspondences, TriPoint

from conftest import make_rng

G = 9.81


def _samples(omegas, dt=0.005, accel=None):
    acc = accel if accel is not None else np.tile([0.0, 0.0, G], (len(omegas), 1))
    return [ImuSample(t=i * dt, omega=w, accel=a) for i, (w, a) in enumerate(zip(omegas, acc))]


class TestPropagateAttitude:
    def test_zero_rate_constant(self):
        track = propagate_attitude((0.1, -0.2, 0.3), _samples(np.zeros((20, 3))))
        np.testing.assert_allclose(track.angles, np.tile([0.1, -0.2, 0.3], (20, 1)), atol=1e-12)

    def test_constant_world_z_rate(self):
        # level start: roll/pitch stay zero, |yaw| advances at the rate
        w = np.tile([0.0, 0.0, 0.5], (41, 1))
        track = propagate_attitude((0.0, 0.0, 0.0), _samples(w, dt=0.01))
        np.testing.assert_allclose(track.angles[:, :2], 0.0, atol=1e-12)
        steps = np.diff(track.angles[:, 2])
        np.testing.assert_allclose(np.abs(steps), 0.5 * 0.01, atol=1e-12)

    def test_matches_rodrigues_closed_form(self):
        # constant body rate about a fixed axis: closed-form axis-angle oracle
        w = np.array([0.2, -0.1, 0.3])
        k = 30
        track = propagate_attitude((0.0, 0.0, 0.0), _samples(np.tile(w, (k, 1)), dt=0.01))
        for i in range(k):
            np.testing.assert_allclose(track.r_wi[i], so3_exp(w * 0.01 * i), atol=1e-10)

    def test_bias_error_growth(self):
        # constant bias b, truth static: attitude error angle ~ |b| t
        b = np.array([2e-3, -1e-3, 1.5e-3])
        k, dt = 200, 0.005
        track = propagate_attitude((0.0, 0.0, 0.0), _samples(np.tile(b, (k, 1)), dt=dt))
        t_final = (k - 1) * dt
        err = np.linalg.norm(so3_log(track.r_wi[-1]))
        assert err == pytest.approx(np.linalg.norm(b) * t_final, rel=0.01)

    def test_stream_order(self):
        samples = _samples(np.zeros((5, 3)))
        samples[3] = ImuSample(t=samples[1].t, omega=np.zeros(3), accel=[0, 0, G])
        with pytest.raises(StreamOrderError):
            propagate_attitude((0, 0, 0), samples)

    def test_needs_samples(self):
        with pytest.raises(InsufficientDataError):
            propagate_attitude((0, 0, 0), [])


class TestGravityResidual:
    def test_level_static_zero(self):
        r = gravity_residual(0.0, 0.0, np.array([0.0, 0.0, G]), GravityVector())
        np.testing.assert_allclose(r, 0.0, atol=1e-15)

    def test_small_roll_error_linear(self):
        delta = 1e-3
        a = predicted_gravity_body([[0.0, 0.0]], GravityVector())[0]
        r = gravity_residual(delta, 0.0, a, GravityVector())
        assert np.linalg.norm(r) == pytest.approx(delta, rel=1e-3)

    def test_lateral_acceleration_magnitude(self):
        # 1 m/s^2 lateral push on a level sensor: vector-geometry oracle
        a = np.array([1.0, 0.0, G])
        r = gravity_residual(0.0, 0.0, a, GravityVector())
        expected = a / np.linalg.norm(a) - np.array([0.0, 0.0, 1.0])
        np.testing.assert_allclose(r, expected, atol=1e-15)
        assert np.linalg.norm(r) == pytest.approx(1.0 / G, rel=0.05)

    def test_free_fall_raises(self):
        with pytest.raises(FreeFallSampleError):
            gravity_residual(0.0, 0.0, np.array([0.0, 0.0, 0.3]), GravityVector())

    def test_accepts_unit_vector(self):
        r = gravity_residual(0.0, 0.0, np.array([0.0, 0.0, 1.0]), GravityVector())
        np.testing.assert_allclose(r, 0.0, atol=1e-15)


class TestVisualResidual:
    def _state(self, psi, t, k=4):
        att = np.tile([0.02, -0.03], (k, 1))
        return FusionState(psi=psi, t=t, attitudes=att)

    def test_zero_at_truth(self):
        state = self._state(0.2, np.array([0.1, -0.05, 0.2]))
        r = relative_rotation_from_state(state)
        p = np.array([0.5, 0.3, 4.0])
        q = project(r @ p + state.t)
        res = visual_residual(state, q, TriPoint(p=p, cov=np.eye(3) * 1e-6))
        np.testing.assert_allclose(res, 0.0, atol=1e-15)

    def test_translation_sensitivity(self):
        # shifting t by 1 cm in x moves the projection by ~0.01/depth
        state0 = self._state(0.0, np.zeros(3), k=2)
        state0 = FusionState(psi=0.0, t=np.zeros(3), attitudes=np.zeros((2, 2)))
        p = np.array([0.0, 0.0, 5.0])
        q = project(p)
        shifted = FusionState(psi=0.0, t=np.array([0.01, 0.0, 0.0]), attitudes=np.zeros((2, 2)))
        res = visual_residual(shifted, q, TriPoint(p=p, cov=np.eye(3) * 1e-6))
        np.testing.assert_allclose(res, [-0.002, 0.0], atol=1e-9)

    def test_behind_camera(self):
        state = FusionState(psi=0.0, t=np.array([0.0, 0.0, -6.0]), attitudes=np.zeros((2, 2)))
        with pytest.raises(BehindCameraError):
            visual_residual(state, np.zeros(2), TriPoint(p=[0, 0, 5.0], cov=np.eye(3)))


class TestSampleCovariance:
    def test_zeros(self):
        np.testing.assert_allclose(sample_covariance(np.zeros((5, 3))), 0.0)

    def test_single_outer_product(self):
        r = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(sample_covariance(r[None]), np.outer(r, r))

    def test_matches_brute_force(self):
        rng = make_rng(600)
        r = rng.normal(0, 1, (100, 3))
        expected = sum(np.outer(v, v) for v in r) / 100
        np.testing.assert_allclose(sample_covariance(r), expected, atol=1e-12)

    def test_empty_raises(self):
        with pytest.raises(InsufficientDataError):
            sample_covariance(np.zeros((0, 3)))


class TestWishartMapUpdate:
    def test_zero_samples_gives_prior_mode(self):
        prior = WishartPrior.from_mode(np.diag([1.0, 2.0, 3.0]) * 1e-4, nu=12.0)
        np.testing.assert_allclose(
            wishart_map_update(prior, np.zeros((3, 3)), 0), prior.mode, atol=1e-18
        )

    def test_mode_is_fixed_point(self):
        prior = WishartPrior.from_mode(np.diag([1.0, 0.5, 2.0]) * 1e-4, nu=9.0)
        for k in (1, 10, 500):
            np.testing.assert_allclose(
                wishart_map_update(prior, prior.mode, k), prior.mode, atol=1e-18
            )

    def test_loewner_monotone_in_s(self):
        rng = make_rng(601)
        prior = WishartPrior.from_mode(1e-4, nu=8.0)
        for _ in range(20):
            a = rng.normal(0, 1, (3, 3))
            s = a @ a.T * 1e-4
            lo = wishart_map_update(prior, s, 15)
            hi = wishart_map_update(prior, 2.0 * s, 15)
            assert np.min(np.linalg.eigvalsh(hi - lo)) >= -1e-18

    def test_psd_preserved(self):
        rng = make_rng(602)
        prior = WishartPrior.from_mode(1e-5, nu=7.0)
        for _ in range(20):
            a = rng.normal(0, 1, (3, 3))
            out = wishart_map_update(prior, a @ a.T, 9)
            assert np.min(np.linalg.eigvalsh(out)) >= 0.0

    def test_nu_floor(self):
        with pytest.raises(ValueError):
            WishartPrior(psi=np.eye(3), nu=4.0)


def _quasi_static_setup(seed, k=10, noise=0.0, accel_extra=None):
    """Self-consistent zero-noise (or perturbed) fusion problem."""
    rng = make_rng(603, seed)
    dt = 0.005
    phis = 0.04 + 0.02 * np.cumsum(rng.normal(0, 0.1, k))
    thetas = -0.03 + 0.02 * np.cumsum(rng.normal(0, 0.1, k))
    yaws = 0.1 * np.cumsum(rng.normal(0, 0.1, k))
    r_wi = [rot_yaw(yaws[i]) @ rot_rp(thetas[i], phis[i]) for i in range(k)]
    omegas = [so3_log(r_wi[i].T @ r_wi[i + 1]) / dt for i in range(k - 1)]
    omegas.append(omegas[-1])
    psi_true = rng.uniform(-0.3, 0.3)
    t_true = rng.uniform(-0.3, 0.3, 3)
    att_true = np.column_stack([phis, thetas])
    f = rp_factor(rot_rp(thetas[-1], phis[-1]) @ rot_rp(thetas[0], phis[0]).T)
    r_rel = relative_rotation(psi_true, f)
    cfg = SimConfig(n_points=25)
    pts = gen_scene(cfg, rng, n=25)
    q = project(pts @ r_rel.T + t_true)
    if noise:
        q = q + rng.normal(0, noise, q.shape)
    corrs = Correspondences(q=q, z=project(pts), y=project(pts))
    acc = predicted_gravity_body(att_true, GravityVector()) * G
    if accel_extra is not None:
        acc = acc + accel_extra
    samples = [ImuSample(t=i * dt, omega=omegas[i], accel=acc[i]) for i in range(k)]
    return psi_true, t_true, att_true, pts, corrs, samples


class TestBcdSolve:
    def test_quasi_static_noise_free_exact(self):
        psi, t, att, pts, corrs, samples = _quasi_static_setup(0)
        k = len(samples)
        prior = WishartPrior.from_mode(1e-6, 20.0)
        rng = make_rng(604)
        init = FusionState(
            psi=psi + 0.01, t=t + rng.normal(0, 0.01, 3), attitudes=att + rng.normal(0, 1e-3, att.shape)
        )
        res = bcd_solve(init, corrs, pts, samples, 1e-6 * np.eye(2), prior, GravityVector())
        assert not res.degraded
        assert abs(res.state.psi - psi) <= 1e-9
        np.testing.assert_allclose(res.state.t, t, atol=1e-9)
        np.testing.assert_allclose(res.state.attitudes, att, atol=1e-9)
        # zero residuals: covariance collapses to Psi / (nu + K + 4)
        expected = prior.psi / (prior.nu + k + 4.0)
        np.testing.assert_allclose(res.cov_imu, expected, atol=1e-15)

    def test_burst_window_grows_covariance(self):
        rng = make_rng(605)
        quiet = _quasi_static_setup(1, k=12)
        burst_acc = rng.normal(0, 0.8, (12, 3))
        loud = _quasi_static_setup(1, k=12, accel_extra=burst_acc)
        prior = WishartPrior.from_mode(1e-6, 20.0)
        traces = []
        for psi, t, att, pts, corrs, samples in (quiet, loud):
            init = FusionState(psi=psi, t=t, attitudes=att)
            res = bcd_solve(init, corrs, pts, samples, 1e-6 * np.eye(2), prior, GravityVector())
            traces.append(np.trace(res.cov_imu))
        assert traces[1] > traces[0]

    def test_covariance_update_minimizes_nll(self):
        # the closed-form update beats nearby covariances on the penalized NLL
        psi, t, att, pts, corrs, samples = _quasi_static_setup(2, k=9, noise=1e-3)
        prior = WishartPrior.from_mode(2e-6, 11.0)
        accel = np.array([s.accel for s in samples])
        a_unit = accel / np.linalg.norm(accel, axis=1)[:, None]
        resid = a_unit - predicted_gravity_body(att, GravityVector())
        s_mat = sample_covariance(resid)
        k = len(samples)
        sigma_star = wishart_map_update(prior, s_mat, k)

        def nll(sigma):
            inv = np.linalg.inv(sigma)
            quad = float(np.einsum("ki,ij,kj->", resid, inv, resid))
            _, logdet = np.linalg.slogdet(sigma)
            return quad + (k + prior.nu + 4.0) * logdet + float(np.trace(prior.psi @ inv))

        base = nll(sigma_star)
        for scale in (0.8, 0.95, 1.05, 1.3):
            assert base <= nll(sigma_star * scale) + 1e-9
        rng = make_rng(606)
        for _ in range(5):
            d = rng.normal(0, 1, (3, 3)) * 1e-8
            assert base <= nll(sigma_star + d @ d.T) + 1e-12

    def test_joint_cost_non_increasing(self):
        psi, t, att, pts, corrs, samples = _quasi_static_setup(3, k=8, noise=2e-3)
        prior = WishartPrior.from_mode(1e-6, 15.0)
        rng = make_rng(607)
        init = FusionState(psi=psi + 0.03, t=t + 0.02, attitudes=att + 2e-3)
        costs = []
        for rounds in range(1, 6):
            res = bcd_solve(
                init, corrs, pts, samples, 4e-6 * np.eye(2), prior, GravityVector(),
                max_rounds=rounds,
            )
            costs.append(res.cost)
        assert all(a >= b - 1e-9 for a, b in zip(costs, costs[1:]))

    def test_degraded_on_invalid_geometry(self):
        psi, t, att, pts, corrs, samples = _quasi_static_setup(4)
        init = FusionState(psi=psi, t=t + np.array([0.0, 0.0, -50.0]), attitudes=att)
        prior = WishartPrior.from_mode(1e-6, 20.0)
        res = bcd_solve(init, corrs, pts, samples, 1e-6 * np.eye(2), prior, GravityVector())
        assert res.degraded

    def test_preconditions(self):
        psi, t, att, pts, corrs, samples = _quasi_static_setup(5)
        prior = WishartPrior.from_mode(1e-6, 20.0)
        init = FusionState(psi=psi, t=t, attitudes=att)
        with pytest.raises(InsufficientDataError):
            bcd_solve(init, corrs.take([0, 1]), pts[:2], samples, np.eye(2), prior, GravityVector())
        with pytest.raises(InsufficientDataError):
            bcd_solve(
                FusionState(psi=psi, t=t, attitudes=att[:2]),
                corrs,
                pts,
                samples[:1],
                np.eye(2),
                prior,
                GravityVector(),
            )


def test_gravity_vector_must_be_unit():
    with pytest.raises(ValueError):
        GravityVector(g=[0.0, 0.0, 2.0])
