"""End-to-end encoder/decoder and the `.flicr` container.

encode: project -> quantize -> serialize codes row-major -> codec -> header.
decode runs the same stages backwards. Both time every stage on the
monotonic clock.
"""
import logging
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from flicr.utils.bytestream_codec import CodecId, Lz77Params, decode_bytes, encode_bytes
from flicr.utils.error_handler import ParameterError, StreamDecodeError
from flicr.utils.performance_monitor import StageTimer
from flicr.utils.point_cloud import KITTI_RECORD_BYTES, PointCloud
from flicr.utils.range_image import (
    MAX_BPP,
    MIN_BPP,
    QuantizedRangeImage,
    RangeImage,
    SensorModel,
    _check_bpp,
    dequantize,
    project,
    quantize,
    reconstruct,
)

logger = logging.getLogger(__name__)

MAGIC = b'FLCR'
VERSION = 1
FLOAT_BPP = 32
HEADER = struct.Struct('<4sBBBHHIiiiiI')
HEADER_SIZE = HEADER.size


@dataclass(frozen=True)
class FlicrConfig:
    model: SensorModel = field(default_factory=SensorModel)
    bpp: int = 8
    codec: CodecId = CodecId.LZ77
    lz77: Lz77Params = field(default_factory=Lz77Params)
    quantize: bool = True
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'codec', CodecId.parse(self.codec))
        if self.quantize:
            _check_bpp(self.bpp)
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}", 'workers')
        if self.model.rows > 0xFFFF or self.model.cols > 0xFFFF:
            raise ParameterError("rows and cols must fit in 16 bits", 'cols')

    @property
    def header_bpp(self) -> int:
        return self.bpp if self.quantize else FLOAT_BPP


@dataclass(frozen=True)
class FlicrStream:
    codec: CodecId
    bpp: int
    rows: int
    cols: int
    max_range_mm: int
    h_fov_mdeg: Tuple[int, int]
    v_fov_mdeg: Tuple[int, int]
    payload: bytes
    version: int = VERSION

    @classmethod
    def for_model(cls, model: SensorModel, codec: CodecId, bpp: int, payload: bytes) -> 'FlicrStream':
        return cls(
            codec=codec,
            bpp=bpp,
            rows=model.rows,
            cols=model.cols,
            max_range_mm=int(round(model.max_range_m * 1000)),
            h_fov_mdeg=(int(round(model.h_fov_deg[0] * 1000)), int(round(model.h_fov_deg[1] * 1000))),
            v_fov_mdeg=(int(round(model.v_fov_deg[0] * 1000)), int(round(model.v_fov_deg[1] * 1000))),
            payload=bytes(payload),
        )

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    @property
    def nbytes(self) -> int:
        return HEADER_SIZE + len(self.payload)

    @property
    def quantized(self) -> bool:
        return self.bpp != FLOAT_BPP

    @property
    def model(self) -> SensorModel:
        return SensorModel(
            (self.h_fov_mdeg[0] / 1000, self.h_fov_mdeg[1] / 1000),
            (self.v_fov_mdeg[0] / 1000, self.v_fov_mdeg[1] / 1000),
            self.cols,
            self.rows,
            self.max_range_mm / 1000,
        )

    def to_bytes(self) -> bytes:
        header = HEADER.pack(
            MAGIC, self.version, int(self.codec), self.bpp, self.rows, self.cols, self.max_range_mm,
            self.h_fov_mdeg[0], self.h_fov_mdeg[1], self.v_fov_mdeg[0], self.v_fov_mdeg[1],
            len(self.payload),
        )
        return header + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> 'FlicrStream':
        data = bytes(data)
        if len(data) < HEADER_SIZE:
            raise StreamDecodeError(
                f"truncated header: need {HEADER_SIZE} bytes, got {len(data)} "
                f"({HEADER_SIZE - len(data)} bytes missing)")

        (magic, version, codec, bpp, rows, cols, max_range_mm,
         h_start, h_end, v_top, v_bottom, payload_len) = HEADER.unpack_from(data)

        if magic != MAGIC:
            raise StreamDecodeError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise StreamDecodeError(f"unsupported stream version {version}")
        try:
            codec = CodecId(codec)
        except ValueError:
            raise StreamDecodeError(f"unknown codec id {codec} in header")
        if bpp != FLOAT_BPP and not MIN_BPP <= bpp <= MAX_BPP:
            raise StreamDecodeError(f"invalid bpp {bpp} in header")

        available = len(data) - HEADER_SIZE
        if available < payload_len:
            raise StreamDecodeError(
                f"truncated payload: header declares {payload_len} bytes, got {available} "
                f"({payload_len - available} bytes missing)")
        if available > payload_len:
            raise StreamDecodeError(f"{available - payload_len} trailing bytes after payload")

        stream = cls(codec, bpp, rows, cols, max_range_mm, (h_start, h_end), (v_top, v_bottom),
                     data[HEADER_SIZE:], version)
        try:
            stream.model
        except ParameterError as e:
            raise StreamDecodeError(f"invalid sensor model in header: {e}")
        return stream


@dataclass(frozen=True)
class EncodeStats:
    t_project: float
    t_quantize: float
    t_serialize: float
    t_compress: float
    raw_bytes: int
    compressed_bytes: int
    dropped_points: int
    t_total: float = 0.0

    @property
    def stage_sum(self) -> float:
        return self.t_project + self.t_quantize + self.t_serialize + self.t_compress

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def summary(self) -> str:
        return (f"raw={self.raw_bytes}B compressed={self.compressed_bytes}B "
                f"dropped={self.dropped_points} project={self.t_project:.2f}ms "
                f"quantize={self.t_quantize:.2f}ms serialize={self.t_serialize:.2f}ms "
                f"compress={self.t_compress:.2f}ms total={self.t_total:.2f}ms")


@dataclass(frozen=True)
class DecodeStats:
    t_decompress: float
    t_deserialize: float
    t_dequantize: float
    t_reconstruct: float
    payload_bytes: int
    decoded_bytes: int
    n_points: int
    t_total: float = 0.0

    @property
    def stage_sum(self) -> float:
        return self.t_decompress + self.t_deserialize + self.t_dequantize + self.t_reconstruct

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def serialize_codes(codes: np.ndarray, bpp: int) -> bytes:
    """One byte per code up to 8 bpp, two bytes little-endian above"""
    if bpp <= 8:
        return codes.astype(np.uint8).tobytes()
    return codes.astype('<u2').tobytes()


def deserialize_codes(data: bytes, bpp: int, model: SensorModel) -> QuantizedRangeImage:
    width = 1 if bpp <= 8 else 2
    expected = model.cells * width
    if len(data) != expected:
        raise StreamDecodeError(
            f"decoded payload has {len(data)} bytes, expected {expected} for a "
            f"{model.rows}x{model.cols} grid at {bpp} bpp")
    codes = np.frombuffer(data, dtype=np.uint8 if width == 1 else '<u2').reshape(model.rows, model.cols)
    levels = (1 << bpp) - 1
    if codes.size and int(codes.max()) > levels:
        raise StreamDecodeError(f"code {int(codes.max())} out of range for {bpp} bpp")
    return QuantizedRangeImage(codes, bpp, model)


def encode(pc: PointCloud, cfg: FlicrConfig = FlicrConfig()) -> Tuple[FlicrStream, EncodeStats]:
    model = cfg.model.snapped()
    timer = StageTimer()

    with timer.stage('project'):
        ri = project(pc, model, workers=cfg.workers)

    if cfg.quantize:
        with timer.stage('quantize'):
            qri = quantize(ri, cfg.bpp)
        with timer.stage('serialize'):
            raw = serialize_codes(qri.codes, cfg.bpp)
    else:
        with timer.stage('serialize'):
            raw = ri.to_float32_bytes()

    with timer.stage('compress'):
        payload = encode_bytes(raw, cfg.codec, cfg.lz77)

    stream = FlicrStream.for_model(model, cfg.codec, cfg.header_bpp, payload)
    stats = EncodeStats(
        t_project=timer.get('project'),
        t_quantize=timer.get('quantize'),
        t_serialize=timer.get('serialize'),
        t_compress=timer.get('compress'),
        raw_bytes=pc.raw_bytes,
        compressed_bytes=stream.nbytes,
        dropped_points=ri.dropped_points,
        t_total=timer.elapsed_ms(),
    )
    logger.debug(f"encode {model.cols}x{model.rows} {cfg.codec.name} bpp={cfg.header_bpp}: {stats.summary()}")
    return stream, stats


def _decode_grid(stream: FlicrStream, lz77: Lz77Params, timer: StageTimer) -> Tuple[RangeImage, int]:
    model = stream.model

    with timer.stage('decompress'):
        raw = decode_bytes(stream.payload, stream.codec, lz77)

    if stream.quantized:
        with timer.stage('deserialize'):
            qri = deserialize_codes(raw, stream.bpp, model)
        with timer.stage('dequantize'):
            ri = dequantize(qri)
    else:
        with timer.stage('deserialize'):
            if len(raw) != model.cells * 4:
                raise StreamDecodeError(
                    f"decoded payload has {len(raw)} bytes, expected {model.cells * 4} float32 cells")
            if not np.all(np.isfinite(np.frombuffer(raw, dtype='<f4'))):
                raise StreamDecodeError("float payload contains non-finite ranges")
            ri = RangeImage.from_float32_bytes(raw, model)

    return ri, len(raw)


def decode_range_image(stream: FlicrStream, lz77: Lz77Params = Lz77Params()) -> RangeImage:
    """Decoded range grid without the reconstruction stage"""
    return _decode_grid(stream, lz77, StageTimer())[0]


def decode(stream: FlicrStream, lz77: Lz77Params = Lz77Params(), workers: int = 1,
           source_point_size_bytes: int = KITTI_RECORD_BYTES) -> Tuple[PointCloud, DecodeStats]:
    """Invert `encode`. `lz77` must carry the min_match used by the encoder."""
    timer = StageTimer()
    ri, decoded_bytes = _decode_grid(stream, lz77, timer)

    with timer.stage('reconstruct'):
        pc = reconstruct(ri, workers=workers, source_point_size_bytes=source_point_size_bytes)

    stats = DecodeStats(
        t_decompress=timer.get('decompress'),
        t_deserialize=timer.get('deserialize'),
        t_dequantize=timer.get('dequantize'),
        t_reconstruct=timer.get('reconstruct'),
        payload_bytes=stream.payload_len,
        decoded_bytes=decoded_bytes,
        n_points=len(pc),
        t_total=timer.elapsed_ms(),
    )
    logger.debug(f"decode {ri.cols}x{ri.rows}: {len(pc)} points in {stats.t_total:.2f}ms")
    return pc, stats


def compression_ratio(pc: PointCloud, stream: FlicrStream) -> float:
    return pc.raw_bytes / stream.nbytes


def write_stream(path: Union[str, os.PathLike], stream: FlicrStream) -> Path:
    path = Path(path)
    path.write_bytes(stream.to_bytes())
    logger.info(f"Wrote {path} ({stream.nbytes} bytes)")
    return path


def read_stream(path: Union[str, os.PathLike]) -> FlicrStream:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Stream file not found: {path}")
    return FlicrStream.from_bytes(path.read_bytes())


def inspect_stream(stream: FlicrStream, source_point_size_bytes: Optional[int] = None) -> Dict[str, Any]:
    """Header fields plus derived grid facts"""
    model = stream.model
    info = {
        'version': stream.version,
        'codec': stream.codec.name.lower(),
        'bpp': stream.bpp,
        'quantized': stream.quantized,
        'rows': stream.rows,
        'cols': stream.cols,
        'max_range_m': model.max_range_m,
        'h_fov_deg': list(model.h_fov_deg),
        'v_fov_deg': list(model.v_fov_deg),
        'h_bin_deg': model.h_bin_deg,
        'v_bin_deg': model.v_bin_deg,
        'payload_bytes': stream.payload_len,
        'total_bytes': stream.nbytes,
    }
    if stream.quantized:
        info['range_step_m'] = model.max_range_m / ((1 << stream.bpp) - 1)
    if source_point_size_bytes:
        info['max_ratio_vs_raw'] = model.cells * source_point_size_bytes / stream.nbytes
    return info
