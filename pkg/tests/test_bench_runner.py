import os
import shutil
import tempfile
import unittest

from openpyxl import load_workbook

from flicr.sensor_presets import REFERENCE_ROWS
from flicr.utils.bench_runner import (
    RAW_BPP,
    BenchRow,
    SweepRunner,
    SweepSpec,
    load_input,
    reference_check,
)
from flicr.utils.bytestream_codec import CodecId
from flicr.utils.error_handler import ParameterError
from flicr.utils.point_cloud import write_kitti_bin
from flicr.utils.quality_metrics import PSNR_LOSSLESS_CAP_DB
from flicr.utils.range_image import SensorModel
from flicr.utils.report_generator import SweepReportGenerator, write_plots
from flicr.utils.scene_synth import SceneSpec, synth_scan
from flicr.utils.sweep_tables import read_csv, summary_table, rows_to_frame, write_csv, write_xlsx

RESOLUTIONS = [(2048, 64), (1024, 64), (512, 64), (256, 64)]
BASE_MODEL = SensorModel(cols=1024, rows=64)


def make_row(input_id='000000', resolution=(4500, 64), **values):
    """BenchRow with zeroed metrics, 8 bpp LZ77 unless overridden"""
    record = {name: 0.0 for name in BenchRow.columns()}
    record.update(input_id=input_id, cols=resolution[0], rows=resolution[1], bpp=8, codec='lz77')
    record.update(values)
    return BenchRow(**record)


class TestSweep(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.spec = SweepSpec(resolutions=RESOLUTIONS, synthetic=1, repetitions=1, base_model=BASE_MODEL)
        cls.result = SweepRunner().run(cls.spec)

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _rows(self, codec):
        return [r for r in self.result.rows if r.codec == codec]

    def test_one_row_per_config(self):
        self.assertTrue(self.result.ok)
        self.assertEqual(len(self.result.rows), len(RESOLUTIONS) * 2)
        self.assertEqual([(r.cols, r.rows) for r in self._rows('lz77')], RESOLUTIONS)

    def test_ratio_grows_and_sampling_error_never_shrinks(self):
        for codec in ('lz77', 'rle'):
            rows = self._rows(codec)
            ratios = [r.compression_ratio for r in rows]
            losses = [r.se for r in rows]
            self.assertTrue(all(a < b for a, b in zip(ratios, ratios[1:])), ratios)
            self.assertTrue(all(a <= b for a, b in zip(losses, losses[1:])), losses)

    def test_lz77_beats_rle(self):
        for lz77, rle in zip(self._rows('lz77'), self._rows('rle')):
            self.assertGreater(lz77.compression_ratio, rle.compression_ratio)
            self.assertEqual(lz77.se, rle.se)

    def test_row_values(self):
        for row in self.result.rows:
            self.assertEqual(row.input_id, 'synthetic-0')
            self.assertEqual(row.raw_bytes, row.n_orig * 16)
            self.assertAlmostEqual(row.compression_ratio, row.raw_bytes / row.compressed_bytes)
            self.assertGreater(row.enc_ms, 0.0)
            self.assertLessEqual(row.epsnr_db, row.psnr_db)

    def test_reference_checks_skip_synthetic_rows(self):
        checks = reference_check(self.result.rows)
        self.assertEqual({c.status for c in checks}, {'SKIPPED'})

    def test_metadata(self):
        self.assertEqual(self.result.metadata['inputs'], ['synthetic-0'])
        self.assertEqual(self.result.metadata['repetitions'], 1)
        self.assertIn('system', self.result.metadata)
        self.assertEqual(self.result.metadata['input_resources']['count'], 1)

    def test_csv(self):
        path = write_csv(self.result.rows, os.path.join(self.temp_dir, 'sweep.csv'))
        df = read_csv(path)
        self.assertEqual(list(df.columns), BenchRow.columns())
        self.assertEqual(len(df), len(self.result.rows))

    def test_summary_table(self):
        table = summary_table(rows_to_frame(self.result.rows), bpp=8, codec='lz77')
        self.assertEqual(list(table.columns), ['2048x64', '1024x64', '512x64', '256x64'])
        self.assertIn('Compression ratio', table.index)
        self.assertIn('ePSNR (dB)', table.index)

    def test_xlsx(self):
        checks = reference_check(self.result.rows)
        path = write_xlsx(self.result.rows, os.path.join(self.temp_dir, 'sweep.xlsx'), checks, self.result.metadata)
        workbook = load_workbook(path)
        self.assertEqual(workbook.sheetnames,
                         ['rows', 'summary_lz77_8bpp', 'summary_rle_8bpp', 'reference', 'metadata'])
        self.assertEqual(workbook['rows'].max_row, len(self.result.rows) + 1)

    def test_plots_and_report(self):
        plots = write_plots(self.result.rows, os.path.join(self.temp_dir, 'plots'))
        self.assertEqual([p.name for p in plots],
                         ['ratio_vs_resolution.png', 'latency_breakdown_lz77.png', 'latency_breakdown_rle.png'])
        for plot in plots:
            self.assertGreater(plot.stat().st_size, 0)

        report = SweepReportGenerator().create_report(
            self.result.rows, os.path.join(self.temp_dir, 'report.pdf'),
            reference_check(self.result.rows), plots, self.result.metadata)
        with open(report, 'rb') as f:
            self.assertEqual(f.read(5), b'%PDF-')


class TestSweepRunner(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_bad_input_is_reported_and_sweep_continues(self):
        bad = os.path.join(self.temp_dir, 'broken.bin')
        with open(bad, 'wb') as f:
            f.write(b'\x00' * 100)
        spec = SweepSpec(resolutions=[(256, 64)], codecs=[CodecId.RLE], inputs=[bad],
                         synthetic=1, repetitions=1, base_model=BASE_MODEL)
        result = SweepRunner(max_workers=2).run(spec)
        self.assertFalse(result.ok)
        self.assertEqual(len(result.failures), 1)
        self.assertTrue(result.failures[0].startswith('broken:'))
        self.assertEqual([r.input_id for r in result.rows], ['synthetic-0'])

    def test_progress_callback(self):
        events = []
        runner = SweepRunner()
        runner.set_progress_callback(events.append)
        spec = SweepSpec(resolutions=[(256, 64)], codecs=['rle'], synthetic=2, repetitions=1, base_model=BASE_MODEL)
        result = runner.run(spec)
        self.assertEqual(len(result.rows), 2)
        self.assertEqual((events[-1]['current'], events[-1]['total']), (2, 2))
        self.assertEqual(runner.sweep_progress['status'], 'completed')
        self.assertEqual(runner.get_sweep_stats()['progress_percentage'], 100.0)

    def test_float_baseline_rows(self):
        spec = SweepSpec(resolutions=[(256, 64)], codecs=['rle'], synthetic=1, repetitions=1,
                         base_model=BASE_MODEL, float_baseline=True)
        self.assertEqual([(bpp, quantized) for _, bpp, _, quantized in spec.configs()], [(8, True), (32, False)])
        rows = SweepRunner().run(spec).rows
        self.assertEqual([r.bpp for r in rows], [8, 32])
        self.assertLess(rows[1].compression_ratio, rows[0].compression_ratio)

    def test_sequential_projection_by_default(self):
        spec = SweepSpec(resolutions=[(512, 64)], codecs=['rle'], synthetic=1, repetitions=1, base_model=BASE_MODEL)
        row = SweepRunner().run(spec).rows[0]
        self.assertEqual(row.projection_workers, 1)
        self.assertEqual(row.project_par_ms, row.project_ms)

    def test_parallel_projection_is_timed_separately(self):
        spec = SweepSpec(resolutions=[(512, 64), (256, 64)], codecs=['rle'], synthetic=1, repetitions=2,
                         base_model=BASE_MODEL, projection_workers=4)
        result = SweepRunner().run(spec)
        self.assertEqual(result.metadata['projection_workers'], 4)
        for row in result.rows:
            self.assertEqual(row.projection_workers, 4)
            self.assertGreater(row.project_ms, 0.0)
            self.assertGreater(row.project_par_ms, 0.0)
        table = summary_table(rows_to_frame(result.rows), bpp=8, codec='rle')
        self.assertIn('Projection, parallel (ms)', table.index)

    def test_projection_workers_validation(self):
        with self.assertRaises(ParameterError) as ctx:
            SweepSpec(synthetic=1, projection_workers=0)
        self.assertEqual(ctx.exception.parameter, 'projection_workers')

    def test_raw_baseline_rows(self):
        scan = os.path.join(self.temp_dir, '000007.bin')
        write_kitti_bin(synth_scan(BASE_MODEL, SceneSpec.urban(seed=3)), scan)
        spec = SweepSpec(resolutions=[(256, 64)], inputs=[scan], synthetic=1, repetitions=1,
                         base_model=BASE_MODEL, raw_baseline=True)
        rows = SweepRunner().run(spec).rows
        self.assertEqual([(r.input_id, r.bpp, r.codec) for r in rows], [
            ('000007', 8, 'lz77'), ('000007', 8, 'rle'), ('000007', RAW_BPP, 'lz77'), ('000007', RAW_BPP, 'rle'),
            ('synthetic-0', 8, 'lz77'), ('synthetic-0', 8, 'rle'),
            ('synthetic-0', RAW_BPP, 'lz77'), ('synthetic-0', RAW_BPP, 'rle'),
        ])
        by_key = {(r.input_id, r.bpp, r.codec): r for r in rows}
        raw = by_key[('000007', RAW_BPP, 'lz77')]
        self.assertEqual((raw.cols, raw.rows), (0, 0))
        self.assertEqual(raw.raw_bytes, os.path.getsize(scan))
        self.assertEqual(raw.n_comp, raw.n_orig)
        self.assertEqual(raw.se, 0.0)
        self.assertEqual(raw.psnr_db, PSNR_LOSSLESS_CAP_DB)
        self.assertAlmostEqual(raw.compression_ratio, raw.raw_bytes / raw.compressed_bytes)
        self.assertGreater(raw.compress_ms, 0.0)
        for input_id in ('000007', 'synthetic-0'):
            for codec in ('lz77', 'rle'):
                self.assertGreater(by_key[(input_id, 8, codec)].compression_ratio,
                                   by_key[(input_id, RAW_BPP, codec)].compression_ratio)
        self.assertEqual(summary_table(rows_to_frame(rows), bpp=RAW_BPP, codec='lz77').columns.tolist(), ['raw'])
        plots = write_plots(rows, os.path.join(self.temp_dir, 'plots'))
        report = SweepReportGenerator().create_report(rows, os.path.join(self.temp_dir, 'raw.pdf'), plots=plots)
        self.assertGreater(os.path.getsize(report), 0)

    def test_spec_validation(self):
        with self.assertRaises(ParameterError):
            SweepSpec()
        with self.assertRaises(ParameterError):
            SweepSpec(synthetic=1, repetitions=0)
        with self.assertRaises(ParameterError):
            SweepSpec(synthetic=1, bpps=[1])
        with self.assertRaises(ParameterError):
            SweepSpec(synthetic=1, resolutions=[(0, 64)])
        with self.assertRaises(ParameterError):
            SweepSpec(synthetic=1, codecs=['zip'])

    def test_colliding_stems_use_full_paths(self):
        a = os.path.join(self.temp_dir, 'a', '000000.bin')
        b = os.path.join(self.temp_dir, 'b', '000000.bin')
        spec = SweepSpec(inputs=[a, b], synthetic=1)
        self.assertEqual(spec.input_ids(), [a, b, 'synthetic-0'])

    def test_unknown_input_id(self):
        spec = SweepSpec(synthetic=1)
        with self.assertRaises(ParameterError):
            load_input(spec, 'nope')


class TestReferenceCheck(unittest.TestCase):

    def test_matching_rows_pass(self):
        native = REFERENCE_ROWS[(4500, 64)]
        rows = [
            make_row(resolution=(4500, 64), compression_ratio=native.compression_ratio * 1.1, psnr_db=native.psnr_db - 1.0),
            make_row(resolution=(1024, 64), se=REFERENCE_ROWS[(1024, 64)].se + 0.01),
            make_row(resolution=(1024, 64), codec='rle', se=0.0),
        ]
        self.assertEqual([c.status for c in reference_check(rows)], ['PASS', 'PASS', 'PASS'])

    def test_far_rows_fail(self):
        rows = [
            make_row(resolution=(4500, 64), compression_ratio=5.0, psnr_db=40.0),
            make_row(resolution=(1024, 64), se=0.1),
        ]
        checks = reference_check(rows)
        self.assertEqual([c.status for c in checks], ['FAIL', 'FAIL', 'FAIL'])
        self.assertEqual(checks[0].measured, 5.0)
        self.assertAlmostEqual(checks[0].tolerance, 0.30 * REFERENCE_ROWS[(4500, 64)].compression_ratio)

    def test_missing_resolution_is_skipped(self):
        checks = reference_check([make_row(resolution=(4500, 64), compression_ratio=21.0, psnr_db=63.0)])
        self.assertEqual([c.status for c in checks], ['PASS', 'PASS', 'SKIPPED'])
        self.assertIsNone(checks[2].measured)


if __name__ == '__main__':
    unittest.main()
