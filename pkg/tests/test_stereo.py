import numpy as np
import pytest

from gravpose.errors import (
    InsufficientDataError,
    NonPositiveDisparityError,
    UnsupportedRigError,
)
from gravpose.geometry import StereoRig, project
from gravpose.stereo import (
    Correspondence,
    Correspondences,
    estimate_noise_variance,
    triangulate,
    triangulate_batch,
)

from conftest import make_rng


def _stereo_pairs(rig, n, sigma, rng):
    depth = rng.uniform(1.0, 10.0, n)
    u = rng.uniform(-0.3, 0.3, n)
    v = rng.uniform(-0.3, 0.3, n)
    pts = np.column_stack([u * depth, v * depth, depth])
    z = project(pts) + rng.normal(0, 1, (n, 2)) * sigma
    y = project(rig.right_from_left().apply(pts)) + rng.normal(0, 1, (n, 2)) * sigma
    return pts, z, y


class TestEstimateNoiseVariance:
    def test_zero_noise(self, rig):
        rng = make_rng(10)
        _, z, y = _stereo_pairs(rig, 100, 0.0, rng)
        assert estimate_noise_variance(z, y, rig) <= 1e-15

    def test_paper_noise_level_recovered(self, rig):
        # 2.5 px at f = 1100, 10k pairs: estimate within 10% of sigma^2
        sigma = 2.5 / 1100.0
        rng = make_rng(11)
        _, z, y = _stereo_pairs(rig, 10_000, sigma, rng)
        est = estimate_noise_variance(z, y, rig)
        assert abs(est - sigma**2) / sigma**2 < 0.10

    def test_consistency_improves_with_n(self, rig):
        sigma = 2.5 / 1100.0
        errs = []
        for n in (100, 10_000):
            rel = []
            for trial in range(20):
                rng = make_rng(12, n, trial)
                _, z, y = _stereo_pairs(rig, n, sigma, rng)
                rel.append(abs(estimate_noise_variance(z, y, rig) - sigma**2) / sigma**2)
            errs.append(np.mean(rel))
        assert errs[1] < errs[0]

    def test_needs_ten_pairs(self, rig):
        rng = make_rng(13)
        _, z, y = _stereo_pairs(rig, 9, 0.001, rng)
        with pytest.raises(InsufficientDataError):
            estimate_noise_variance(z, y, rig)

    def test_unrectified_rig_rejected(self):
        from gravpose.geometry import rot_rp

        rig = StereoRig(rotation=rot_rp(0.1, 0.0))
        z = np.zeros((20, 2))
        with pytest.raises(UnsupportedRigError):
            estimate_noise_variance(z, z, rig)


class TestTriangulate:
    def test_depth_from_disparity(self, rig):
        tp = triangulate(np.array([0.0, 0.0]), np.array([-0.02, 0.0]), rig, 0.0)
        np.testing.assert_allclose(tp.p, [0.0, 0.0, 10.0], atol=1e-12)

    def test_noise_free_round_trip(self, rig):
        p = np.array([0.4, -0.6, 3.0])
        z = project(p)
        y = project(rig.right_from_left().apply(p))
        tp = triangulate(z, y, rig, 0.0)
        np.testing.assert_allclose(tp.p, p, atol=1e-10)
        np.testing.assert_allclose(project(tp.p), z, atol=1e-10)
        np.testing.assert_allclose(project(rig.right_from_left().apply(tp.p)), y, atol=1e-10)

    def test_non_positive_disparity(self, rig):
        with pytest.raises(NonPositiveDisparityError):
            triangulate(np.array([0.0, 0.0]), np.array([0.01, 0.0]), rig, 0.0)

    def test_covariance_against_monte_carlo(self, rig):
        # empirical covariance of noisy triangulations vs the analytic report
        sigma = 2.5 / 1100.0
        p = np.array([0.5, -0.3, 4.0])
        z0 = project(p)
        y0 = project(rig.right_from_left().apply(p))
        reported = triangulate(z0, y0, rig, sigma**2).cov
        rng = make_rng(14)
        samples = []
        for _ in range(5000):
            z = z0 + rng.normal(0, sigma, 2)
            y = y0 + rng.normal(0, sigma, 2)
            samples.append(triangulate(z, y, rig, sigma**2).p)
        emp = np.cov(np.array(samples).T)
        rel = np.linalg.norm(emp - reported) / np.linalg.norm(reported)
        assert rel <= 0.20

    def test_batch_matches_single(self, rig):
        rng = make_rng(15)
        pts, z, y = _stereo_pairs(rig, 25, 1e-3, rng)
        pb, cb = triangulate_batch(z, y, rig, 1e-6)
        for i in range(25):
            tp = triangulate(z[i], y[i], rig, 1e-6)
            np.testing.assert_allclose(tp.p, pb[i], atol=1e-14)
            np.testing.assert_allclose(tp.cov, cb[i], atol=1e-20)

    def test_covariance_symmetric_psd(self, rig):
        rng = make_rng(16)
        _, z, y = _stereo_pairs(rig, 50, 1e-3, rng)
        _, covs = triangulate_batch(z, y, rig, (2.5 / 1100.0) ** 2)
        for c in covs:
            np.testing.assert_allclose(c, c.T, atol=1e-12)
            assert np.min(np.linalg.eigvalsh(c)) >= -1e-12


class TestStereoInvariants:
    def test_doubling_baseline_halves_relative_depth_error(self):
        sigma = 2.5 / 1100.0
        rel_errors = []
        for b in (0.2, 0.4):
            rig = StereoRig(baseline=[b, 0.0, 0.0])
            errs = []
            for trial in range(5000):
                rng = make_rng(17, int(b * 10), trial)
                depth = 5.0
                p = np.array([0.1, -0.1, depth])
                z = project(p) + rng.normal(0, sigma, 2)
                y = project(rig.right_from_left().apply(p)) + rng.normal(0, sigma, 2)
                try:
                    errs.append((triangulate(z, y, rig, sigma**2).p[2] - depth) / depth)
                except NonPositiveDisparityError:
                    pass
            rel_errors.append(np.sqrt(np.mean(np.square(errs))))
        ratio = rel_errors[0] / rel_errors[1]
        assert 2.0 * 0.85 <= ratio <= 2.0 * 1.15

    def test_normalized_errors_have_unit_variance(self, rig):
        sigma = 2.5 / 1100.0
        p = np.array([0.2, 0.1, 3.0])
        z0 = project(p)
        y0 = project(rig.right_from_left().apply(p))
        cov = triangulate(z0, y0, rig, sigma**2).cov
        li = np.linalg.inv(np.linalg.cholesky(cov))
        rng = make_rng(18)
        normalized = []
        for _ in range(5000):
            z = z0 + rng.normal(0, sigma, 2)
            y = y0 + rng.normal(0, sigma, 2)
            normalized.append(li @ (triangulate(z, y, rig, sigma**2).p - p))
        var = np.var(np.array(normalized), axis=0)
        assert np.all(var >= 0.8) and np.all(var <= 1.2)


def test_correspondences_container_round_trip():
    items = [
        Correspondence(q=[0.1, 0.2], z=[0.3, 0.4], y=[0.25, 0.4], is_inlier_truth=True),
        Correspondence(q=[-0.1, 0.0], z=[0.0, 0.1], y=[-0.05, 0.1], is_inlier_truth=False),
        Correspondence(q=[0.0, 0.0], z=[0.1, 0.0], y=[0.05, 0.0], is_inlier_truth=True),
    ]
    batch = Correspondences.from_items(items)
    assert len(batch) == 3
    np.testing.assert_array_equal(batch.inlier_truth, [True, False, True])
    sub = batch.take(np.array([True, False, True]))
    assert len(sub) == 2
    np.testing.assert_allclose(sub.q[1], [0.0, 0.0])
