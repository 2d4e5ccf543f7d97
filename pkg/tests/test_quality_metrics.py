import math
import unittest

import numpy as np

from flicr.sensor_presets import REFERENCE_ROWS
from flicr.utils.error_handler import DomainError, ParameterError
from flicr.utils.point_cloud import PointCloud
from flicr.utils.quality_metrics import (
    PSNR_LOSSLESS_CAP_DB,
    EpsnrParams,
    KDTreeIndex,
    VoxelGridIndex,
    brute_force_nn_sq_dists,
    build_index,
    chamfer_distance,
    entropy_factor,
    epsnr,
    full_report,
    mse,
    naive_epsnr,
    nn_sq_dist,
    psnr,
    psnr_from_mse,
    sampling_error,
)


def exhaustive_mse(c1, c2):
    """Double loop over both clouds"""
    total = []
    for qx, qy, qz in c2.xyz.tolist():
        best = math.inf
        for cx, cy, cz in c1.xyz.tolist():
            dx, dy, dz = qx - cx, qy - cy, qz - cz
            best = min(best, dx * dx + dy * dy + dz * dz)
        total.append(best)
    return math.fsum(total) / len(total)


def random_cloud(rng, n, scale=10.0):
    return PointCloud(rng.uniform(-scale, scale, size=(n, 3)))


class TestHandExamples(unittest.TestCase):

    def setUp(self):
        self.origin = PointCloud.from_points([(0, 0, 0)])
        self.pair = PointCloud.from_points([(1, 0, 0), (0, 3, 0)])

    def test_nn_sq_dist(self):
        cloud = PointCloud.from_points([(1, 0, 0), (3, 0, 0)])
        self.assertEqual(nn_sq_dist((0, 0, 0), cloud), 1.0)

    def test_mse_is_directional(self):
        self.assertEqual(mse(self.origin, self.pair), 5.0)
        self.assertEqual(mse(self.pair, self.origin), 1.0)

    def test_chamfer_is_sum_of_both_directions(self):
        self.assertEqual(chamfer_distance(self.origin, self.pair), 6.0)
        self.assertEqual(chamfer_distance(self.pair, self.origin), 6.0)

    def test_empty_clouds_rejected(self):
        empty = PointCloud.empty()
        with self.assertRaises(DomainError):
            nn_sq_dist((0, 0, 0), empty)
        with self.assertRaises(DomainError):
            mse(empty, self.pair)
        with self.assertRaises(DomainError):
            mse(self.pair, empty)
        with self.assertRaises(DomainError):
            brute_force_nn_sq_dists([(0, 0, 0)], empty)

    def test_unknown_index(self):
        with self.assertRaises(ParameterError) as ctx:
            build_index(self.pair, 'octree')
        self.assertEqual(ctx.exception.parameter, 'nn_index')

    def test_bad_voxel_cell(self):
        with self.assertRaises(ParameterError):
            VoxelGridIndex(self.pair, cell_m=0.0)


class TestExactness(unittest.TestCase):

    def test_kdtree_matches_exhaustive_search(self):
        rng = np.random.default_rng(100)
        for _ in range(200):
            a = random_cloud(rng, int(rng.integers(1, 40)))
            b = random_cloud(rng, int(rng.integers(1, 40)))
            self.assertEqual(mse(a, b, KDTreeIndex(a)), exhaustive_mse(a, b))
            self.assertEqual(mse(b, a, KDTreeIndex(b)), exhaustive_mse(b, a))

    def test_voxel_index_matches_exhaustive_search(self):
        rng = np.random.default_rng(200)
        for cell_m in (0.5, 2.0, 25.0):
            for _ in range(8):
                a = random_cloud(rng, int(rng.integers(1, 60)))
                b = random_cloud(rng, int(rng.integers(1, 60)))
                self.assertEqual(mse(a, b, VoxelGridIndex(a, cell_m)), exhaustive_mse(a, b))

    def test_indexes_agree_with_brute_force(self):
        rng = np.random.default_rng(300)
        cloud = random_cloud(rng, 500, scale=50.0)
        queries = rng.uniform(-60.0, 60.0, size=(300, 3))
        expected = brute_force_nn_sq_dists(queries, cloud)
        np.testing.assert_array_equal(KDTreeIndex(cloud).sq_dists(queries), expected)
        np.testing.assert_array_equal(VoxelGridIndex(cloud, 4.0).sq_dists(queries), expected)

    def test_chamfer_symmetric(self):
        rng = np.random.default_rng(400)
        for _ in range(20):
            a = random_cloud(rng, 30)
            b = random_cloud(rng, 25)
            self.assertEqual(chamfer_distance(a, b), chamfer_distance(b, a))


class TestPsnr(unittest.TestCase):

    def test_identical_clouds_hit_the_cap(self):
        pc = PointCloud.from_points([(1, 2, 3), (4, 5, 6)])
        self.assertEqual(psnr(pc, pc), PSNR_LOSSLESS_CAP_DB)
        self.assertEqual(psnr_from_mse(0.0, 120.0), PSNR_LOSSLESS_CAP_DB)

    def test_mse_equal_to_peak_squared_is_zero_db(self):
        orig = PointCloud.from_points([(0, 0, 0)])
        comp = PointCloud.from_points([(120, 0, 0)])
        self.assertAlmostEqual(psnr(orig, comp, peak_m=120.0), 0.0, places=12)

    def test_strictly_decreasing_in_mse(self):
        values = [psnr_from_mse(m, 120.0) for m in (1e-6, 1e-3, 0.1, 1.0, 100.0, 1e4)]
        self.assertTrue(all(a > b for a, b in zip(values, values[1:])))

    def test_tiny_mse_is_not_capped(self):
        values = [psnr_from_mse(m, 120.0) for m in (1e-15, 1e-16, 1e-17, 1e-18)]
        self.assertTrue(all(a < b for a, b in zip(values, values[1:])), values)
        self.assertGreater(values[-1], PSNR_LOSSLESS_CAP_DB)
        self.assertAlmostEqual(values[-1], 10.0 * math.log10(120.0 ** 2 / 1e-18))

    def test_non_positive_peak(self):
        pc = PointCloud.from_points([(1, 2, 3)])
        with self.assertRaises(DomainError):
            psnr(pc, pc, peak_m=0.0)


class TestSamplingAndEpsnr(unittest.TestCase):

    def test_sampling_error_bounds(self):
        orig = PointCloud(np.zeros((10, 3)))
        self.assertEqual(sampling_error(orig, orig), 0.0)
        self.assertEqual(sampling_error(orig, PointCloud.empty()), 1.0)
        self.assertEqual(sampling_error(orig, PointCloud(np.zeros((4, 3)))), 0.6)
        self.assertEqual(sampling_error(orig, PointCloud(np.zeros((12, 3)))), 0.0)
        with self.assertRaises(DomainError):
            sampling_error(PointCloud.empty(), orig)

    def test_entropy_factor(self):
        self.assertEqual(entropy_factor(1.0, 0.5), 1.0)
        self.assertAlmostEqual(entropy_factor(0.0, 0.5), math.exp(-2.0))
        with self.assertRaises(DomainError):
            entropy_factor(1.5, 0.5)
        with self.assertRaises(DomainError):
            entropy_factor(0.5, 0.0)
        with self.assertRaises(DomainError):
            EpsnrParams(beta=0.0)

    def test_zero_loss_keeps_psnr(self):
        self.assertEqual(epsnr(63.0, 0.0), 63.0)

    def test_published_rows(self):
        for resolution, row in REFERENCE_ROWS.items():
            tolerance = 0.5 if resolution in ((1024, 64), (512, 64)) else 0.05
            with self.subTest(resolution=resolution):
                self.assertAlmostEqual(epsnr(row.psnr_db, row.se), row.epsnr_db, delta=tolerance)

    def test_mid_loss_example(self):
        self.assertAlmostEqual(epsnr(61.41, 0.5877), 51.38, delta=0.5)

    def test_non_increasing_in_sampling_error(self):
        losses = np.linspace(0.0, 1.0, 101)
        values = [epsnr(60.0, float(se)) for se in losses]
        self.assertTrue(all(a >= b for a, b in zip(values, values[1:])))
        self.assertTrue(all(0.0 <= v <= 60.0 for v in values))

    def test_clamped_factor(self):
        # F(1) + alpha > 1 is clamped, so full loss scales by zero
        self.assertEqual(epsnr(50.0, 1.0, EpsnrParams(alpha=0.5)), 0.0)
        # F(se) + alpha < 0 is clamped, so nothing is subtracted
        self.assertEqual(epsnr(50.0, 0.1, EpsnrParams(alpha=-1.0)), 50.0)

    def test_naive_baseline(self):
        self.assertAlmostEqual(naive_epsnr(60.0, 0.25), 45.0)
        self.assertLess(naive_epsnr(61.41, 0.588), epsnr(61.41, 0.588))


class TestFullReport(unittest.TestCase):

    def test_identical_clouds(self):
        pc = PointCloud.from_points([(1, 2, 3), (4, 5, 6), (7, 8, 9)])
        report = full_report(pc, pc, raw_bytes=48, compressed_bytes=12)
        self.assertEqual(report.psnr_db, PSNR_LOSSLESS_CAP_DB)
        self.assertEqual(report.chamfer_m2, 0.0)
        self.assertEqual(report.se, 0.0)
        self.assertEqual(report.epsnr_db, PSNR_LOSSLESS_CAP_DB)
        self.assertEqual(report.compression_ratio, 4.0)
        self.assertEqual((report.n_orig, report.n_comp), (3, 3))

    def test_voxel_and_kdtree_reports_match(self):
        rng = np.random.default_rng(7)
        orig = random_cloud(rng, 200)
        comp = random_cloud(rng, 150)
        a = full_report(orig, comp, 3200, 400)
        b = full_report(orig, comp, 3200, 400, index_kind='voxel', cell_m=2.0)
        self.assertEqual(a.to_dict(), b.to_dict())
        self.assertAlmostEqual(a.se, 0.25)
        self.assertAlmostEqual(a.cd_root_cm, math.sqrt(a.chamfer_m2) * 100.0)

    def test_domain_errors(self):
        pc = PointCloud.from_points([(1, 2, 3)])
        with self.assertRaises(DomainError):
            full_report(pc, PointCloud.empty(), 16, 4)
        with self.assertRaises(DomainError):
            full_report(pc, pc, 16, 0)


if __name__ == '__main__':
    unittest.main()
