"""Subcommand handlers for the `flicr` command line."""
import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path
from typing import Any, Callable, Dict, List

from flicr.sensor_presets import SENSOR_PRESETS, get_sensor, parse_resolutions
from flicr.utils.bench_runner import SweepRunner, SweepSpec, reference_check
from flicr.utils.bytestream_codec import CodecId, Lz77Params
from flicr.utils.config_manager import config_manager
from flicr.utils.error_handler import ErrorHandler, ParameterError
from flicr.utils.pipeline import (
    FlicrConfig,
    compression_ratio,
    decode,
    decode_range_image,
    encode,
    inspect_stream,
    read_stream,
    write_stream,
)
from flicr.utils.point_cloud import read_kitti_bin, write_kitti_bin
from flicr.utils.quality_metrics import EpsnrParams, full_report
from flicr.utils.range_image import SensorModel, range_image_to_png
from flicr.utils.validators import InputValidator

logger = logging.getLogger(__name__)

# parameter name carried by ParameterError -> command-line flag
PARAMETER_FLAGS = {
    'cols': '--cols',
    'rows': '--rows',
    'bpp': '--bpp',
    'max_range_m': '--max-range',
    'h_fov_deg': '--h-fov',
    'v_fov_deg': '--v-fov',
    'codec': '--codec',
    'window_bytes': '--lz77-window',
    'min_match': '--lz77-min-match',
    'max_match': '--lz77-max-match',
    'max_chain': '--lz77-max-chain',
    'workers': '--workers',
    'sensor': '--sensor',
    'resolutions': '--resolutions',
    'bpps': '--bpps',
    'codecs': '--codecs',
    'repetitions': '--repetitions',
    'synthetic': '--synthetic',
    'inputs': '--inputs',
    'nn_index': '--nn-index',
    'cell_m': '--voxel-cell',
    'projection_workers': '--projection-workers',
}


def _fail(message: str, exit_code: int = ErrorHandler.EXIT_FAILURE) -> int:
    print(f"Error: {message}", file=sys.stderr)
    return exit_code


def _run(context: str, func: Callable[[argparse.Namespace], int], args: argparse.Namespace) -> int:
    try:
        return func(args)
    except Exception as e:
        result = ErrorHandler.handle_command_error(e, context)
        details = result['details']
        if isinstance(e, ParameterError) and e.parameter in PARAMETER_FLAGS:
            details = f"{PARAMETER_FLAGS[e.parameter]}: {details}"
        return _fail(f"{result['error']}: {details}", result['exit_code'])


def _lz77_params(args: argparse.Namespace) -> Lz77Params:
    return Lz77Params(args.lz77_window, args.lz77_min_match, args.lz77_max_match, args.lz77_max_chain)


def _sensor_model(args: argparse.Namespace) -> SensorModel:
    if args.sensor:
        base = get_sensor(args.sensor)
    else:
        settings = config_manager.get_codec_settings()
        base = SensorModel(cols=settings['cols'], rows=settings['rows'], max_range_m=settings['max_range_m'])
    return SensorModel(
        h_fov_deg=tuple(args.h_fov) if args.h_fov else base.h_fov_deg,
        v_fov_deg=tuple(args.v_fov) if args.v_fov else base.v_fov_deg,
        cols=args.cols if args.cols is not None else base.cols,
        rows=args.rows if args.rows is not None else base.rows,
        max_range_m=args.max_range if args.max_range is not None else base.max_range_m,
    )


def _workers(args: argparse.Namespace) -> int:
    if args.workers is not None:
        return args.workers
    return config_manager.worker_count() if config_manager.get('PARALLEL_PROJECTION', True) else 1


def _epsnr_params(args: argparse.Namespace) -> EpsnrParams:
    return EpsnrParams(alpha=args.alpha, beta=args.beta)


def _csv_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(',') if part.strip()]


def _parse_bpps(text: str) -> List[int]:
    try:
        return [int(b) for b in _csv_list(text)]
    except ValueError:
        raise ParameterError(f"bpps must be comma-separated integers, got '{text}'", 'bpps')


def cmd_encode(args: argparse.Namespace) -> int:
    ok, message = InputValidator.validate_scan_file(args.input)
    if not ok:
        return _fail(message)
    ok, message = InputValidator.validate_output_path(args.output)
    if not ok:
        return _fail(message)

    cfg = FlicrConfig(
        model=_sensor_model(args),
        bpp=args.bpp,
        codec=CodecId.parse(args.codec),
        lz77=_lz77_params(args),
        quantize=not args.no_quantization,
        workers=_workers(args),
    )
    pc = read_kitti_bin(args.input)
    stream, stats = encode(pc, cfg)
    write_stream(args.output, stream)
    print(f"{args.output}: {len(pc)} points ratio={compression_ratio(pc, stream):.2f} {stats.summary()}")
    return ErrorHandler.EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    ok, message = InputValidator.validate_stream_file(args.input)
    if not ok:
        return _fail(message)
    ok, message = InputValidator.validate_output_path(args.output)
    if not ok:
        return _fail(message)

    stream = read_stream(args.input)
    pc, stats = decode(stream, _lz77_params(args), _workers(args))
    write_kitti_bin(pc, args.output)
    print(f"{args.output}: {stats.n_points} points decompress={stats.t_decompress:.2f}ms "
          f"reconstruct={stats.t_reconstruct:.2f}ms total={stats.t_total:.2f}ms")
    return ErrorHandler.EXIT_OK


def _format_report(report: Dict[str, Any]) -> str:
    width = max(len(k) for k in report)
    lines = []
    for key, value in report.items():
        text = f"{value:.6g}" if isinstance(value, float) else str(value)
        lines.append(f"{key:<{width}} : {text}")
    return "\n".join(lines)


def cmd_metrics(args: argparse.Namespace) -> int:
    for path in (args.original, args.compressed):
        ok, message = InputValidator.validate_scan_file(path)
        if not ok:
            return _fail(message)

    orig = read_kitti_bin(args.original)
    comp = read_kitti_bin(args.compressed)
    compressed_bytes = comp.raw_bytes
    if args.stream:
        compressed_bytes = read_stream(args.stream).nbytes

    report = full_report(orig, comp, orig.raw_bytes, compressed_bytes, args.peak, _epsnr_params(args),
                         args.nn_index, args.voxel_cell)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(_format_report(report.to_dict()))
    return ErrorHandler.EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    ok, message = InputValidator.validate_stream_file(args.input)
    if not ok:
        return _fail(message)

    stream = read_stream(args.input)
    info = inspect_stream(stream, source_point_size_bytes=16)
    if args.preview:
        ri = decode_range_image(stream, _lz77_params(args))
        info['occupied_cells'] = ri.occupied
        info['preview'] = str(range_image_to_png(ri, args.preview))

    if args.json:
        print(json.dumps(info, indent=2))
    else:
        print(_format_report(info))
    return ErrorHandler.EXIT_OK


def _print_progress(runner: SweepRunner, progress: Dict[str, Any]):
    stats = runner.get_sweep_stats()
    print(f"[{progress['current']}/{progress['total']}] {progress['message']} "
          f"({stats['progress_percentage']:.0f}%, {stats['elapsed_time']:.1f}s elapsed, "
          f"~{stats['estimated_remaining']:.1f}s left)", file=sys.stderr)


def cmd_sweep(args: argparse.Namespace) -> int:
    inputs = []
    if args.inputs:
        ok, message, inputs = InputValidator.validate_scan_inputs(args.inputs)
        if not ok:
            return _fail(message)

    spec = SweepSpec(
        resolutions=parse_resolutions(args.resolutions),
        bpps=_parse_bpps(args.bpps),
        codecs=[CodecId.parse(c) for c in _csv_list(args.codecs)],
        inputs=inputs,
        synthetic=args.synthetic,
        repetitions=args.repetitions,
        float_baseline=args.no_quantization,
        base_model=_sensor_model(args),
        lz77=_lz77_params(args),
        epsnr=_epsnr_params(args),
        peak_m=args.peak,
        nn_index=args.nn_index,
        voxel_cell_m=args.voxel_cell,
        projection_workers=args.projection_workers,
        raw_baseline=args.raw_baseline,
    )

    from flicr.utils.sweep_tables import bpp_label, format_summary, rows_to_frame, summary_tables, write_csv, write_xlsx

    runner = SweepRunner(max_workers=_workers(args))
    if args.verbose:
        runner.set_progress_callback(lambda progress: _print_progress(runner, progress))
    result = runner.run(spec)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(result.rows, out)
    print(f"Wrote {len(result.rows)} rows to {out}")

    checks = reference_check(result.rows) if args.reference_check else None
    for (bpp, codec), table in summary_tables(rows_to_frame(result.rows)).items():
        print(f"\n{codec.upper()} {bpp_label(bpp)}")
        print(format_summary(table))
    if checks:
        print("\nReference check")
        for check in checks:
            measured = '-' if check.measured is None else f"{check.measured:.4g}"
            print(f"  {check.resolution[0]}x{check.resolution[1]} {check.column}: "
                  f"expected {check.expected} +/- {check.tolerance:.4g}, measured {measured} [{check.status}]")

    if args.xlsx:
        write_xlsx(result.rows, args.xlsx, checks, result.metadata)
    if args.plot or args.report:
        from flicr.utils.report_generator import SweepReportGenerator, write_plots

        # the PDF embeds the charts; without --plot they go to a scratch dir
        scratch = None if args.plot else tempfile.mkdtemp(prefix='flicr_plots_')
        try:
            plots = write_plots(result.rows, args.plot or scratch) if result.rows else []
            if args.report:
                SweepReportGenerator().create_report(result.rows, args.report, checks, plots, result.metadata)
        finally:
            ErrorHandler.cleanup_temp_files(scratch)

    for failure in result.failures:
        print(f"Failed: {failure}", file=sys.stderr)
    if result.failures or (checks and any(c.status == 'FAIL' for c in checks)):
        return ErrorHandler.EXIT_FAILURE
    return ErrorHandler.EXIT_OK


def _add_model_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group('sensor model')
    group.add_argument('--sensor', default=None, choices=sorted(SENSOR_PRESETS),
                       help='preset supplying defaults for the flags below (default: HDL-64E grid from config)')
    group.add_argument('--cols', type=int, default=None, help='azimuth bins')
    group.add_argument('--rows', type=int, default=None, help='elevation bins')
    group.add_argument('--max-range', type=float, default=None, help='meters')
    group.add_argument('--h-fov', type=float, nargs=2, metavar=('START', 'END'), help='azimuth degrees')
    group.add_argument('--v-fov', type=float, nargs=2, metavar=('TOP', 'BOTTOM'), help='pitch degrees')


def _add_lz77_flags(parser: argparse.ArgumentParser):
    settings = config_manager.get_codec_settings()
    group = parser.add_argument_group('lz77')
    group.add_argument('--lz77-window', type=int, default=settings['lz77_window'])
    group.add_argument('--lz77-min-match', type=int, default=settings['lz77_min_match'])
    group.add_argument('--lz77-max-match', type=int, default=settings['lz77_max_match'])
    group.add_argument('--lz77-max-chain', type=int, default=settings['lz77_max_chain'],
                       help='candidates examined per position; 0 searches the whole window')


def _add_metric_flags(parser: argparse.ArgumentParser):
    settings = config_manager.get_metric_settings()
    group = parser.add_argument_group('metrics')
    group.add_argument('--alpha', type=float, default=settings['alpha'], help='ePSNR derivative adjustment')
    group.add_argument('--beta', type=float, default=settings['beta'], help='ePSNR exponential parameter')
    group.add_argument('--peak', type=float, default=settings['peak_m'], help='PSNR peak range, meters')
    group.add_argument('--nn-index', default=settings['nn_index'], choices=['kdtree', 'voxel'])
    group.add_argument('--voxel-cell', type=float, default=settings['voxel_cell_m'], help='voxel index cell, meters')


def build_parser() -> argparse.ArgumentParser:
    settings = config_manager.get_codec_settings()
    parser = argparse.ArgumentParser(prog='flicr', description='Range-image LiDAR point-cloud codec')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='-v for INFO, -vv for DEBUG')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('encode', help='compress a KITTI .bin scan into a .flicr stream')
    p.add_argument('input')
    p.add_argument('output')
    _add_model_flags(p)
    p.add_argument('--bpp', type=int, default=settings['bpp'])
    p.add_argument('--codec', default=settings['codec'], choices=['lz77', 'rle'])
    p.add_argument('--no-quantization', action='store_true', help='compress the float32 range grid')
    p.add_argument('--workers', type=int, default=None, help='projection threads (default FLICR_THREADS)')
    _add_lz77_flags(p)
    p.set_defaults(handler=lambda a: _run('encode', cmd_encode, a))

    p = sub.add_parser('decode', help='reconstruct a KITTI .bin scan from a .flicr stream')
    p.add_argument('input')
    p.add_argument('output')
    p.add_argument('--workers', type=int, default=None)
    _add_lz77_flags(p)
    p.set_defaults(handler=lambda a: _run('decode', cmd_decode, a))

    p = sub.add_parser('metrics', help='quality of a reconstructed scan against its original')
    p.add_argument('original')
    p.add_argument('compressed')
    p.add_argument('--stream', help='.flicr file whose size is used for the compression ratio')
    p.add_argument('--json', action='store_true')
    _add_metric_flags(p)
    p.set_defaults(handler=lambda a: _run('metrics', cmd_metrics, a))

    p = sub.add_parser('inspect', help='print the header of a .flicr stream')
    p.add_argument('input')
    p.add_argument('--preview', help='write a grayscale PNG of the decoded range image')
    p.add_argument('--json', action='store_true')
    _add_lz77_flags(p)
    p.set_defaults(handler=lambda a: _run('inspect', cmd_inspect, a))

    p = sub.add_parser('sweep', help='benchmark resolutions x bpp x codecs and write a CSV')
    p.add_argument('--inputs', nargs='+', help='KITTI .bin files or velodyne directories')
    p.add_argument('--synthetic', type=int, default=0, help='number of synthetic urban scans')
    p.add_argument('--resolutions', default='4500x64,4096x64,2048x64,1024x64,512x64,256x64')
    p.add_argument('--bpps', default=str(settings['bpp']))
    p.add_argument('--codecs', default='lz77,rle')
    p.add_argument('--repetitions', type=int, default=config_manager.get('SWEEP_REPETITIONS', 3))
    p.add_argument('--no-quantization', action='store_true', help='add float32 baseline rows (bpp 32)')
    p.add_argument('-o', '--out', default=str(Path(config_manager.get('RESULTS_DIR', 'results')) / 'sweep.csv'))
    p.add_argument('--plot', metavar='DIR', help='write ratio and latency charts')
    p.add_argument('--xlsx', metavar='PATH', help='write an Excel workbook')
    p.add_argument('--report', metavar='PATH', help='write a PDF report')
    p.add_argument('--reference-check', action='store_true',
                   help='compare real-scan means with the published reference rows')
    p.add_argument('--workers', type=int, default=None, help='inputs processed in parallel')
    p.add_argument('--projection-workers', type=int, default=1, metavar='N',
                   help='also time projection on N threads (project_par_ms)')
    p.add_argument('--raw-baseline', action='store_true',
                   help='add rows compressing the raw KITTI records with each codec')
    _add_model_flags(p)
    _add_lz77_flags(p)
    _add_metric_flags(p)
    p.set_defaults(handler=lambda a: _run('sweep', cmd_sweep, a))

    return parser
