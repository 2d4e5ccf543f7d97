"""Sweep engine: one BenchRow per (input x resolution x bpp x codec)."""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from flicr.sensor_presets import DEFAULT_RESOLUTIONS, REFERENCE_CHECKS, REFERENCE_ROWS, Resolution
from flicr.utils.bytestream_codec import CodecId, Lz77Params, decode_bytes, encode_bytes
from flicr.utils.error_handler import ErrorHandler, ParameterError, StreamDecodeError
from flicr.utils.performance_monitor import PerformanceMonitor, StageTimer
from flicr.utils.pipeline import FLOAT_BPP, FlicrConfig, decode, encode
from flicr.utils.point_cloud import PointCloud, kitti_bytes, parse_kitti_bytes, read_kitti_bin
from flicr.utils.quality_metrics import EpsnrParams, full_report
from flicr.utils.range_image import SensorModel, project
from flicr.utils.scene_synth import SceneSpec, synth_scan

logger = logging.getLogger(__name__)

SYNTHETIC_PREFIX = 'synthetic-'

# bpp of rows that compress the raw KITTI records directly (cols = rows = 0)
RAW_BPP = 0


@dataclass(frozen=True)
class SweepSpec:
    resolutions: List[Resolution] = field(default_factory=lambda: list(DEFAULT_RESOLUTIONS))
    bpps: List[int] = field(default_factory=lambda: [8])
    codecs: List[CodecId] = field(default_factory=lambda: [CodecId.LZ77, CodecId.RLE])
    inputs: List[Path] = field(default_factory=list)
    synthetic: int = 0
    repetitions: int = 3
    float_baseline: bool = False
    base_model: SensorModel = field(default_factory=SensorModel)
    lz77: Lz77Params = field(default_factory=Lz77Params)
    epsnr: EpsnrParams = field(default_factory=EpsnrParams)
    peak_m: float = 120.0
    nn_index: str = 'kdtree'
    voxel_cell_m: float = 1.0
    projection_workers: int = 1
    raw_baseline: bool = False

    def __post_init__(self):
        if not self.resolutions:
            raise ParameterError("at least one resolution is required", 'resolutions')
        if not self.bpps:
            raise ParameterError("at least one bpp is required", 'bpps')
        if not self.codecs:
            raise ParameterError("at least one codec is required", 'codecs')
        object.__setattr__(self, 'codecs', [CodecId.parse(c) for c in self.codecs])
        object.__setattr__(self, 'inputs', [Path(p) for p in self.inputs])
        if self.synthetic < 0:
            raise ParameterError("synthetic scan count must be >= 0", 'synthetic')
        if not self.inputs and self.synthetic == 0:
            raise ParameterError("no inputs: pass scan paths or --synthetic N", 'inputs')
        if self.repetitions < 1:
            raise ParameterError(f"repetitions must be >= 1, got {self.repetitions}", 'repetitions')
        if self.projection_workers < 1:
            raise ParameterError(f"projection workers must be >= 1, got {self.projection_workers}",
                                 'projection_workers')
        for cols, rows in self.resolutions:
            self.base_model.with_resolution(cols, rows)
        for bpp in self.bpps:
            FlicrConfig(bpp=bpp)

    def input_paths(self) -> Dict[str, Path]:
        """Scan id -> path; ids are file stems unless two stems collide"""
        stems = [p.stem for p in self.inputs]
        unique = len(set(stems)) == len(stems)
        return {(p.stem if unique else str(p)): p for p in self.inputs}

    def input_ids(self) -> List[str]:
        return list(self.input_paths()) + [f"{SYNTHETIC_PREFIX}{i}" for i in range(self.synthetic)]

    def configs(self) -> List[Tuple[Resolution, int, CodecId, bool]]:
        """(resolution, header bpp, codec, quantize) in sweep order"""
        combos = []
        for resolution in self.resolutions:
            for bpp in self.bpps:
                for codec in self.codecs:
                    combos.append((resolution, bpp, codec, True))
            if self.float_baseline:
                for codec in self.codecs:
                    combos.append((resolution, FLOAT_BPP, codec, False))
        return combos


@dataclass
class BenchRow:
    input_id: str
    cols: int
    rows: int
    bpp: int
    codec: str
    compression_ratio: float
    se: float
    psnr_db: float
    epsnr_db: float
    cd_m2: float
    cd_root_cm: float
    naive_epsnr_db: float
    n_orig: int
    n_comp: int
    raw_bytes: int
    compressed_bytes: int
    dropped_points: int
    enc_ms: float
    dec_ms: float
    project_ms: float
    projection_workers: int
    project_par_ms: float
    quantize_ms: float
    serialize_ms: float
    compress_ms: float
    decompress_ms: float
    deserialize_ms: float
    dequantize_ms: float
    reconstruct_ms: float

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SweepResult:
    rows: List[BenchRow]
    failures: List[str]
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


@dataclass(frozen=True)
class ReferenceCheck:
    resolution: Resolution
    column: str
    expected: float
    tolerance: float
    measured: Optional[float]
    status: str


def _mean(values: List[float]) -> float:
    return sum(values) / len(values)


def load_input(spec: SweepSpec, input_id: str) -> PointCloud:
    path = spec.input_paths().get(input_id)
    if path is not None:
        return read_kitti_bin(path)
    if input_id.startswith(SYNTHETIC_PREFIX):
        seed = int(input_id[len(SYNTHETIC_PREFIX):])
        return synth_scan(spec.base_model, SceneSpec.urban(seed))
    raise ParameterError(f"unknown sweep input '{input_id}'", 'inputs')


def raw_input_bytes(spec: SweepSpec, input_id: str, pc: PointCloud) -> bytes:
    """The scan file as stored; synthetic scans as KITTI records with zero intensity"""
    path = spec.input_paths().get(input_id)
    if path is not None:
        return path.read_bytes()
    return kitti_bytes(pc)


def _parallel_project_ms(pc: PointCloud, cfg: FlicrConfig, workers: int) -> float:
    model = cfg.model.snapped()
    timer = StageTimer()
    with timer.stage('project'):
        project(pc, model, workers=workers)
    return timer.get('project')


def bench_one(pc: PointCloud, input_id: str, cfg: FlicrConfig, spec: SweepSpec) -> BenchRow:
    """Encode and decode `repetitions` times; latency is the mean, quality is from the last run.

    The codec path runs sequentially. With spec.projection_workers > 1 the
    projection is also timed on that many threads (`project_par_ms`).
    """
    enc_runs, dec_runs, par_runs = [], [], []
    for _ in range(spec.repetitions):
        stream, enc_stats = encode(pc, cfg)
        decoded, dec_stats = decode(stream, cfg.lz77, cfg.workers, pc.source_point_size_bytes)
        enc_runs.append(enc_stats)
        dec_runs.append(dec_stats)
        if spec.projection_workers > 1:
            par_runs.append(_parallel_project_ms(pc, cfg, spec.projection_workers))
    project_ms = _mean([s.t_project for s in enc_runs])

    report = full_report(pc, decoded, pc.raw_bytes, stream.nbytes, spec.peak_m, spec.epsnr,
                         spec.nn_index, spec.voxel_cell_m)
    return BenchRow(
        input_id=input_id,
        cols=cfg.model.cols,
        rows=cfg.model.rows,
        bpp=cfg.header_bpp,
        codec=cfg.codec.name.lower(),
        compression_ratio=report.compression_ratio,
        se=report.se,
        psnr_db=report.psnr_db,
        epsnr_db=report.epsnr_db,
        cd_m2=report.chamfer_m2,
        cd_root_cm=report.cd_root_cm,
        naive_epsnr_db=report.naive_epsnr_db,
        n_orig=report.n_orig,
        n_comp=report.n_comp,
        raw_bytes=report.raw_bytes,
        compressed_bytes=report.compressed_bytes,
        dropped_points=enc_runs[-1].dropped_points,
        enc_ms=_mean([s.t_total for s in enc_runs]),
        dec_ms=_mean([s.t_total for s in dec_runs]),
        project_ms=project_ms,
        projection_workers=spec.projection_workers,
        project_par_ms=_mean(par_runs) if par_runs else project_ms,
        quantize_ms=_mean([s.t_quantize for s in enc_runs]),
        serialize_ms=_mean([s.t_serialize for s in enc_runs]),
        compress_ms=_mean([s.t_compress for s in enc_runs]),
        decompress_ms=_mean([s.t_decompress for s in dec_runs]),
        deserialize_ms=_mean([s.t_deserialize for s in dec_runs]),
        dequantize_ms=_mean([s.t_dequantize for s in dec_runs]),
        reconstruct_ms=_mean([s.t_reconstruct for s in dec_runs]),
    )


def bench_raw(raw: bytes, input_id: str, codec: CodecId, spec: SweepSpec) -> BenchRow:
    """Lossless baseline: `codec` applied to the raw KITTI records, no range image.

    Quality is measured against the cloud the records hold, so it is lossless.
    """
    enc_ms, dec_ms = [], []
    for _ in range(spec.repetitions):
        timer = StageTimer()
        with timer.stage('compress'):
            payload = encode_bytes(raw, codec, spec.lz77)
        with timer.stage('decompress'):
            restored = decode_bytes(payload, codec, spec.lz77)
        enc_ms.append(timer.get('compress'))
        dec_ms.append(timer.get('decompress'))
    if restored != raw:
        raise StreamDecodeError(f"{input_id}: raw {codec.name} roundtrip differs from the input")

    stored = parse_kitti_bytes(raw, input_id)
    report = full_report(stored, parse_kitti_bytes(restored, input_id), len(raw), len(payload),
                         spec.peak_m, spec.epsnr, spec.nn_index, spec.voxel_cell_m)
    return BenchRow(
        input_id=input_id,
        cols=0,
        rows=0,
        bpp=RAW_BPP,
        codec=codec.name.lower(),
        compression_ratio=report.compression_ratio,
        se=report.se,
        psnr_db=report.psnr_db,
        epsnr_db=report.epsnr_db,
        cd_m2=report.chamfer_m2,
        cd_root_cm=report.cd_root_cm,
        naive_epsnr_db=report.naive_epsnr_db,
        n_orig=report.n_orig,
        n_comp=report.n_comp,
        raw_bytes=report.raw_bytes,
        compressed_bytes=report.compressed_bytes,
        dropped_points=0,
        enc_ms=_mean(enc_ms),
        dec_ms=_mean(dec_ms),
        project_ms=0.0,
        projection_workers=0,
        project_par_ms=0.0,
        quantize_ms=0.0,
        serialize_ms=0.0,
        compress_ms=_mean(enc_ms),
        decompress_ms=_mean(dec_ms),
        deserialize_ms=0.0,
        dequantize_ms=0.0,
        reconstruct_ms=0.0,
    )


class SweepRunner:
    """Runs a SweepSpec across inputs on a thread pool with progress tracking"""

    def __init__(self, max_workers: int = 1):
        self.max_workers = max(1, int(max_workers))
        self.monitor = PerformanceMonitor()
        self.sweep_progress = {}
        self._progress_callback = None
        self.reset_progress()

    def set_progress_callback(self, callback: Callable[[Dict[str, Any]], None]):
        """Set callback function for progress updates"""
        self._progress_callback = callback

    def update_progress(self, current: int, total: int, message: str):
        self.sweep_progress.update({
            'current': current,
            'total': total,
            'message': message,
            'status': 'running'
        })
        if self._progress_callback:
            self._progress_callback(dict(self.sweep_progress))

    def reset_progress(self):
        self.sweep_progress = {
            'status': 'idle',
            'current': 0,
            'total': 0,
            'message': '',
            'start_time': None,
        }

    def run_input(self, spec: SweepSpec, input_id: str) -> List[BenchRow]:
        with self.monitor.monitor_operation('sweep_input', input_id):
            pc = load_input(spec, input_id)
            rows = []
            for (cols, n_rows), bpp, codec, quantized in spec.configs():
                cfg = FlicrConfig(
                    model=spec.base_model.with_resolution(cols, n_rows),
                    bpp=bpp if quantized else 8,
                    codec=codec,
                    lz77=spec.lz77,
                    quantize=quantized,
                )
                row = bench_one(pc, input_id, cfg, spec)
                logger.info(f"{input_id} {cols}x{n_rows} bpp={row.bpp} {row.codec}: "
                            f"ratio={row.compression_ratio:.2f} se={row.se:.3f} psnr={row.psnr_db:.2f}dB")
                rows.append(row)
            if spec.raw_baseline:
                raw = raw_input_bytes(spec, input_id, pc)
                for codec in spec.codecs:
                    row = bench_raw(raw, input_id, codec, spec)
                    logger.info(f"{input_id} raw {row.codec}: ratio={row.compression_ratio:.2f}")
                    rows.append(row)
        return rows

    def run(self, spec: SweepSpec) -> SweepResult:
        self.reset_progress()
        self.monitor.reset()
        input_ids = spec.input_ids()
        self.sweep_progress['start_time'] = time.time()
        self.update_progress(0, len(input_ids), f"Starting sweep over {len(input_ids)} inputs")

        per_input: Dict[str, List[BenchRow]] = {}
        failures: List[str] = []
        workers = min(self.max_workers, len(input_ids))

        with ThreadPoolExecutor(max_workers=workers) as executor:
            future_to_input = {
                executor.submit(self.run_input, spec, input_id): input_id
                for input_id in input_ids
            }
            for i, future in enumerate(as_completed(future_to_input)):
                input_id = future_to_input[future]
                try:
                    per_input[input_id] = future.result()
                except Exception as e:
                    ErrorHandler.log_error(e, "sweep", {"input": input_id})
                    failures.append(f"{input_id}: {e}")
                self.update_progress(i + 1, len(input_ids), f"Finished {i + 1}/{len(input_ids)} inputs")

        rows = [row for input_id in input_ids for row in per_input.get(input_id, [])]
        self.sweep_progress['status'] = 'failed' if failures else 'completed'
        metadata = {
            'inputs': input_ids,
            'repetitions': spec.repetitions,
            'projection_workers': spec.projection_workers,
            'raw_baseline': spec.raw_baseline,
            'elapsed_s': time.time() - self.sweep_progress['start_time'],
            'input_resources': self.monitor.get_performance_summary().get('sweep_input', {}),
            'system': ErrorHandler.get_system_info(),
        }
        logger.info(f"Sweep finished: {len(rows)} rows, {len(failures)} failed inputs")
        return SweepResult(rows, failures, metadata)

    def get_sweep_stats(self) -> Dict[str, Any]:
        start = self.sweep_progress['start_time']
        current, total = self.sweep_progress['current'], self.sweep_progress['total']
        elapsed = time.time() - start if start else 0
        rate = current / elapsed if elapsed > 0 else 0
        return {
            'elapsed_time': elapsed,
            'estimated_remaining': (total - current) / rate if rate > 0 else 0,
            'progress_percentage': current / total * 100 if total > 0 else 0,
        }


def reference_check(rows: List[BenchRow]) -> List[ReferenceCheck]:
    """Compare per-corpus means of real-scan rows (8 bpp, LZ77) with the published figures.

    Synthetic rows never count; with no real-scan row at a resolution the
    check is SKIPPED.
    """
    checks = []
    for resolution, column, tolerance, absolute in REFERENCE_CHECKS:
        expected = getattr(REFERENCE_ROWS[resolution], column)
        values = [
            getattr(r, column) for r in rows
            if (r.cols, r.rows) == resolution and r.bpp == 8 and r.codec == 'lz77'
            and not r.input_id.startswith(SYNTHETIC_PREFIX)
        ]
        allowed = tolerance if absolute else tolerance * expected
        if not values:
            checks.append(ReferenceCheck(resolution, column, expected, allowed, None, 'SKIPPED'))
            continue
        measured = _mean(values)
        status = 'PASS' if math.isfinite(measured) and abs(measured - expected) <= allowed else 'FAIL'
        checks.append(ReferenceCheck(resolution, column, expected, allowed, measured, status))
    return checks
