import math
import os
import shutil
import tempfile
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from flicr.utils.error_handler import ParameterError
from flicr.utils.point_cloud import PointCloud
from flicr.utils.range_image import (
    QuantizedRangeImage,
    RangeImage,
    SensorModel,
    cartesian_to_spherical,
    dequantize,
    locate_pixels,
    project,
    quantize,
    range_image_to_png,
    reconstruct,
)
from flicr.utils.scene_synth import SceneSpec, synth_scan


def point_at(model, row, col, r, d_pitch=0.0, d_azimuth=0.0):
    """Cartesian point at range r through the center of (row, col), optionally nudged in radians"""
    pitch, azimuth = model.cell_center_angles()
    p, a = pitch[row] + d_pitch, azimuth[col] + d_azimuth
    return (r * math.cos(p) * math.cos(a), r * math.cos(p) * math.sin(a), r * math.sin(p))



def random_cloud(model, seed, n):
    """Points in random directions inside the field of view at 1-119 m"""
    rng = np.random.default_rng(seed)
    azimuth = rng.uniform(math.radians(model.h_fov_deg[0]), math.radians(model.h_fov_deg[1]), n)
    pitch = rng.uniform(math.radians(model.v_fov_deg[1]), math.radians(model.v_fov_deg[0]), n)
    r = rng.uniform(1.0, 119.0, n)
    return PointCloud(np.stack((r * np.cos(pitch) * np.cos(azimuth),
                                r * np.cos(pitch) * np.sin(azimuth),
                                r * np.sin(pitch)), axis=1))


def azimuth_pitch(xyz):
    r = np.linalg.norm(xyz, axis=1)
    return np.arctan2(xyz[:, 1], xyz[:, 0]), np.arcsin(xyz[:, 2] / r)

class TestSensorModel(unittest.TestCase):

    def test_hdl64e_defaults(self):
        model = SensorModel.hdl64e()
        self.assertEqual((model.cols, model.rows), (4500, 64))
        self.assertEqual(model.max_range_m, 120.0)
        self.assertAlmostEqual(model.h_bin_deg, 0.08)

    def test_zero_cols_names_parameter(self):
        with self.assertRaises(ParameterError) as ctx:
            SensorModel(cols=0)
        self.assertEqual(ctx.exception.parameter, 'cols')

    def test_inverted_vertical_fov(self):
        with self.assertRaises(ParameterError) as ctx:
            SensorModel(v_fov_deg=(-24.8, 2.0))
        self.assertEqual(ctx.exception.parameter, 'v_fov_deg')

    def test_horizontal_fov_limits(self):
        with self.assertRaises(ParameterError):
            SensorModel(h_fov_deg=(-200.0, 180.0))
        with self.assertRaises(ParameterError):
            SensorModel(h_fov_deg=(10.0, 10.0))

    def test_non_positive_range(self):
        with self.assertRaises(ParameterError):
            SensorModel(max_range_m=0.0)

    def test_from_precision(self):
        model = SensorModel.from_precision(0.08, 0.41875)
        self.assertEqual((model.cols, model.rows), (4500, 64))

    def test_with_resolution_and_snapped(self):
        model = SensorModel(v_fov_deg=(2.00004, -24.8), max_range_m=120.0004).with_resolution(256, 32)
        self.assertEqual((model.cols, model.rows), (256, 32))
        snapped = model.snapped()
        self.assertEqual(snapped.v_fov_deg, (2.0, -24.8))
        self.assertEqual(snapped.max_range_m, 120.0)
        self.assertEqual(snapped, snapped.snapped())


class TestSpherical(unittest.TestCase):

    def test_axes(self):
        s = cartesian_to_spherical((1.0, 0.0, 0.0))
        self.assertAlmostEqual(s.r, 1.0)
        self.assertAlmostEqual(s.theta, math.pi / 2)
        self.assertAlmostEqual(s.phi, 0.0)
        self.assertAlmostEqual(cartesian_to_spherical((0.0, 0.0, 2.0)).theta, 0.0)
        self.assertAlmostEqual(cartesian_to_spherical((0.0, 3.0, 4.0)).r, 5.0)

    def test_negative_x_axis_maps_to_plus_pi(self):
        self.assertEqual(cartesian_to_spherical((-1.0, -0.0, 0.0)).phi, math.pi)
        self.assertEqual(cartesian_to_spherical((-1.0, 0.0, 0.0)).phi, math.pi)

    def test_minus_pi_kept_when_fov_ends_before_plus_pi(self):
        self.assertEqual(cartesian_to_spherical((-1.0, -0.0, 0.0), h_fov_deg=(-180.0, 0.0)).phi, -math.pi)
        self.assertEqual(cartesian_to_spherical((-1.0, -0.0, 0.0), h_fov_deg=(-180.0, 180.0)).phi, math.pi)


class TestProjection(unittest.TestCase):

    def setUp(self):
        self.model = SensorModel(cols=360, rows=64)

    def test_single_point_lands_in_its_cell(self):
        pc = PointCloud.from_points([point_at(self.model, 10, 190, 50.0)])
        ri = project(pc, self.model)
        self.assertEqual(ri.occupied, 1)
        self.assertAlmostEqual(ri.ranges[10, 190], 50.0, places=9)
        self.assertEqual(ri.dropped_points, 0)

    def test_collision_keeps_smallest_range(self):
        pc = PointCloud.from_points([
            point_at(self.model, 20, 5, 30.0),
            point_at(self.model, 20, 5, 20.0, d_azimuth=0.001),
            point_at(self.model, 20, 5, 25.0, d_pitch=-0.001),
        ])
        ri = project(pc, self.model)
        self.assertEqual(ri.occupied, 1)
        self.assertAlmostEqual(ri.ranges[20, 5], 20.0, places=9)
        self.assertEqual(ri.dropped_points, 2)

    def test_points_outside_are_dropped(self):
        pc = PointCloud.from_points([
            (10.0, 0.0, 10.0),          # 45 degrees up, above the field of view
            point_at(self.model, 30, 30, 130.0),  # beyond max range
            (0.0, 0.0, 0.0),            # zero range is the empty sentinel
            point_at(self.model, 30, 31, 40.0),
        ])
        ri = project(pc, self.model)
        self.assertEqual(ri.occupied, 1)
        self.assertEqual(ri.dropped_points, 3)

    def test_range_at_max_is_kept(self):
        pc = PointCloud.from_points([point_at(self.model, 40, 100, 120.0)])
        ri = project(pc, self.model)
        self.assertEqual(ri.occupied, 1)
        self.assertLessEqual(ri.ranges.max(), 120.0)

    def test_empty_cloud(self):
        ri = project(PointCloud.empty(), self.model)
        self.assertEqual(ri.occupied, 0)
        self.assertEqual(ri.ranges.shape, (64, 360))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(11)
        pc = synth_scan(SensorModel(cols=1024, rows=64), SceneSpec.urban(seed=2))
        shuffled = PointCloud(pc.xyz[rng.permutation(len(pc))])
        np.testing.assert_array_equal(project(pc, self.model).ranges, project(shuffled, self.model).ranges)

    def test_parallel_matches_sequential(self):
        pc = synth_scan(SensorModel(cols=2048, rows=64), SceneSpec.urban(seed=5))
        sequential = project(pc, self.model, workers=1)
        for workers in (2, 3, 8):
            parallel = project(pc, self.model, workers=workers)
            np.testing.assert_array_equal(parallel.ranges, sequential.ranges)
            self.assertEqual(parallel.dropped_points, sequential.dropped_points)

    def test_minus_180_azimuth_in_half_fov(self):
        point = PointCloud.from_points([(-10.0, -0.0, -1.0)])
        half = SensorModel(h_fov_deg=(-180.0, 0.0), cols=180, rows=64)
        ri = project(point, half)
        self.assertEqual(ri.occupied, 1)
        self.assertEqual(ri.dropped_points, 0)
        self.assertEqual(int(np.flatnonzero(ri.ranges.any(axis=0))[0]), 0)
        # a full circle closes the last column on +180 instead
        ri = project(point, self.model)
        self.assertEqual(int(np.flatnonzero(ri.ranges.any(axis=0))[0]), self.model.cols - 1)

    def test_power_of_two_subsampling_never_adds_cells(self):
        pc = random_cloud(SensorModel(), 6, 50_000)
        previous = None
        for cols in (4096, 2048, 1024, 512, 256):
            ri = project(pc, SensorModel(cols=cols, rows=64))
            if previous is not None:
                self.assertLessEqual(ri.occupied, previous.occupied)
                merged = (previous.ranges > 0).reshape(64, cols, 2).any(axis=2)
                np.testing.assert_array_equal(ri.ranges > 0, merged)
            previous = ri

    def test_scan_occupancy_falls_with_resolution(self):
        pc = synth_scan(SensorModel(), SceneSpec.urban(seed=10))
        counts = [project(pc, SensorModel(cols=cols, rows=64)).occupied for cols in (4500, 2048, 1024, 512, 256)]
        self.assertTrue(all(a >= b for a, b in zip(counts, counts[1:])), counts)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1), st.sampled_from([(4500, 64), (1024, 64), (256, 32)]))
    def test_reconstruction_within_half_bin(self, seed, resolution):
        model = SensorModel(cols=resolution[0], rows=resolution[1])
        pc = random_cloud(model, seed, 5000)
        valid, row, col, _ = locate_pixels(pc.xyz, model)
        rec = reconstruct(project(pc, model))
        _, rec_row, rec_col, _ = locate_pixels(rec.xyz, model)
        lookup = np.full(model.cells, -1)
        lookup[rec_row * model.cols + rec_col] = np.arange(len(rec))
        match = lookup[row[valid] * model.cols + col[valid]]
        self.assertTrue(np.all(match >= 0))

        orig_az, orig_pitch = azimuth_pitch(pc.xyz[valid])
        rec_az, rec_pitch = azimuth_pitch(rec.xyz[match])
        d_az = np.abs((orig_az - rec_az + np.pi) % (2 * np.pi) - np.pi)
        self.assertLessEqual(d_az.max(), math.radians(model.h_bin_deg) / 2 + 1e-9)
        self.assertLessEqual(np.abs(orig_pitch - rec_pitch).max(), math.radians(model.v_bin_deg) / 2 + 1e-9)

    def test_dropped_equals_points_minus_occupied(self):
        pc = synth_scan(SensorModel(cols=1024, rows=64), SceneSpec.urban(seed=3))
        ri = project(pc, SensorModel(cols=256, rows=64))
        self.assertEqual(ri.dropped_points, len(pc) - ri.occupied)


class TestQuantization(unittest.TestCase):

    def setUp(self):
        self.model = SensorModel(cols=4, rows=1)

    def test_examples(self):
        ri = RangeImage(np.array([[60.0, 120.0, 0.0, 0.01]]), self.model)
        qri = quantize(ri, 8)
        self.assertEqual(qri.codes.tolist(), [[128, 255, 0, 1]])

    def test_bpp_bounds(self):
        ri = RangeImage.empty(self.model)
        for bpp in (1, 17):
            with self.assertRaises(ParameterError) as ctx:
                quantize(ri, bpp)
            self.assertEqual(ctx.exception.parameter, 'bpp')

    def test_codes_are_identity_through_dequantize(self):
        for bpp in (2, 8, 12, 16):
            levels = (1 << bpp) - 1
            codes = np.arange(levels + 1, dtype=np.uint16).reshape(1, -1)
            model = SensorModel(cols=codes.shape[1], rows=1)
            qri = QuantizedRangeImage(codes, bpp, model)
            np.testing.assert_array_equal(quantize(dequantize(qri), bpp).codes, codes)

    def test_error_bound_on_random_ranges(self):
        rng = np.random.default_rng(0)
        ranges = rng.uniform(0.0, 120.0, size=(64, 4096))
        ranges[0, :3] = [120.0, 1e-9, 60.0]
        model = SensorModel(cols=4096, rows=64)
        restored = dequantize(quantize(RangeImage(ranges, model), 8)).ranges
        occupied = ranges > 0
        self.assertTrue(np.all(np.abs(restored - ranges)[occupied] <= 120.0 / 255 + 1e-12))
        self.assertTrue(np.all(restored[occupied] > 0))

    def test_half_step_bound_when_not_clamped(self):
        step = 120.0 / 255
        ranges = np.random.default_rng(4).uniform(step, 120.0, size=(64, 4096))
        model = SensorModel(cols=4096, rows=64)
        restored = dequantize(quantize(RangeImage(ranges, model), 8)).ranges
        error = np.abs(restored - ranges)
        self.assertLessEqual(error.max(), step / 2 + 1e-12)
        self.assertLessEqual(error.max(), 0.2353)

    def test_empty_cells_stay_empty(self):
        ri = RangeImage(np.array([[0.0, 5.0, 0.0, 0.0]]), self.model)
        restored = dequantize(quantize(ri, 4))
        self.assertEqual(restored.occupied, 1)
        self.assertEqual(restored.ranges[0, 0], 0.0)


class TestRangeImage(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.model = SensorModel(cols=360, rows=64)

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_values_outside_range_rejected(self):
        with self.assertRaises(ParameterError):
            RangeImage(np.full((64, 360), 121.0), self.model)
        with self.assertRaises(ParameterError):
            RangeImage(np.zeros((10, 10)), self.model)

    def test_reconstruct_places_points_at_cell_centers(self):
        ranges = np.zeros((64, 360))
        ranges[12, 200] = 33.0
        ranges[50, 3] = 7.5
        pc = reconstruct(RangeImage(ranges, self.model))
        self.assertEqual(len(pc), 2)
        np.testing.assert_allclose(pc.xyz[0], point_at(self.model, 12, 200, 33.0), atol=1e-12)
        np.testing.assert_allclose(pc.xyz[1], point_at(self.model, 50, 3, 7.5), atol=1e-12)
        np.testing.assert_allclose(project(pc, self.model).ranges, ranges, atol=1e-12)

    def test_parallel_reconstruct_matches(self):
        pc = synth_scan(self.model, SceneSpec.urban(seed=9))
        ri = project(pc, self.model)
        np.testing.assert_array_equal(reconstruct(ri, workers=4).xyz, reconstruct(ri).xyz)

    def test_float32_bytes_roundtrip(self):
        ri = project(synth_scan(self.model, SceneSpec.urban(seed=1)), self.model)
        data = ri.to_float32_bytes()
        self.assertEqual(len(data), 64 * 360 * 4)
        restored = RangeImage.from_float32_bytes(data, self.model)
        np.testing.assert_allclose(restored.ranges, ri.ranges, rtol=1e-6)

    def test_png_preview(self):
        ranges = np.zeros((64, 360))
        ranges[1, 2] = 1.0
        ranges[3, 4] = 120.0
        path = range_image_to_png(RangeImage(ranges, self.model), os.path.join(self.temp_dir, 'ri.png'))
        with Image.open(path) as image:
            self.assertEqual(image.size, (360, 64))
            self.assertEqual(image.getpixel((0, 0)), 0)
            self.assertGreater(image.getpixel((2, 1)), image.getpixel((4, 3)))
            self.assertGreater(image.getpixel((4, 3)), 0)


if __name__ == '__main__':
    unittest.main()
