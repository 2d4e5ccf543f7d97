"""Range-image projection, quantization and reconstruction.

A range image (RI) is a rows x cols grid indexed by (elevation bin, azimuth
bin). Row 0 is the top of the vertical field of view, column 0 the start of
the horizontal one. Cells hold the radial distance in meters; 0.0 marks an
empty cell.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, NamedTuple, Tuple, Union

import numpy as np

from flicr.utils.error_handler import ParameterError
from flicr.utils.point_cloud import Point3, PointCloud

logger = logging.getLogger(__name__)

EMPTY_RANGE = 0.0
MIN_BPP = 2
MAX_BPP = 16
# ranges this far above max_range_m (relative) are floating-point noise from
# reconstruction and get clamped instead of dropped
RANGE_CLAMP_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SensorModel:
    """Field of view and grid size defining the RI mapping.

    h_fov_deg is (start, end) azimuth, v_fov_deg is (top, bottom) pitch above
    the horizontal plane, both in degrees.
    """

    h_fov_deg: Tuple[float, float] = (-180.0, 180.0)
    v_fov_deg: Tuple[float, float] = (2.0, -24.8)
    cols: int = 4500
    rows: int = 64
    max_range_m: float = 120.0

    def __post_init__(self):
        object.__setattr__(self, 'h_fov_deg', (float(self.h_fov_deg[0]), float(self.h_fov_deg[1])))
        object.__setattr__(self, 'v_fov_deg', (float(self.v_fov_deg[0]), float(self.v_fov_deg[1])))
        if int(self.cols) != self.cols or self.cols < 1:
            raise ParameterError(f"cols must be a positive integer, got {self.cols}", 'cols')
        if int(self.rows) != self.rows or self.rows < 1:
            raise ParameterError(f"rows must be a positive integer, got {self.rows}", 'rows')
        object.__setattr__(self, 'cols', int(self.cols))
        object.__setattr__(self, 'rows', int(self.rows))
        h_start, h_end = self.h_fov_deg
        if not h_start < h_end or h_end - h_start > 360.0 or h_start < -180.0 or h_end > 180.0:
            raise ParameterError(
                f"h_fov_deg must satisfy -180 <= start < end <= 180, got {self.h_fov_deg}", 'h_fov_deg')
        v_top, v_bottom = self.v_fov_deg
        if not v_top > v_bottom or v_top > 90.0 or v_bottom < -90.0:
            raise ParameterError(
                f"v_fov_deg must satisfy 90 >= top > bottom >= -90, got {self.v_fov_deg}", 'v_fov_deg')
        if not (self.max_range_m > 0 and math.isfinite(self.max_range_m)):
            raise ParameterError(f"max_range_m must be positive, got {self.max_range_m}", 'max_range_m')

    @classmethod
    def hdl64e(cls) -> 'SensorModel':
        """Velodyne HDL-64E at native precision: 4500 x 64, 120 m"""
        return cls()

    @classmethod
    def from_precision(cls, h_res_deg: float, v_res_deg: float,
                       h_fov_deg: Tuple[float, float] = (-180.0, 180.0),
                       v_fov_deg: Tuple[float, float] = (2.0, -24.8),
                       max_range_m: float = 120.0) -> 'SensorModel':
        """Grid size derived from angular bin widths over the field of view"""
        if h_res_deg <= 0 or v_res_deg <= 0:
            raise ParameterError("angular precisions must be positive", 'precision')
        cols = max(1, int(round((h_fov_deg[1] - h_fov_deg[0]) / h_res_deg)))
        rows = max(1, int(round((v_fov_deg[0] - v_fov_deg[1]) / v_res_deg)))
        return cls(h_fov_deg, v_fov_deg, cols, rows, max_range_m)

    def with_resolution(self, cols: int, rows: int) -> 'SensorModel':
        return replace(self, cols=cols, rows=rows)

    def snapped(self) -> 'SensorModel':
        """Same model rounded to container precision (mm, milli-degrees)"""
        return SensorModel(
            (round(self.h_fov_deg[0] * 1000) / 1000, round(self.h_fov_deg[1] * 1000) / 1000),
            (round(self.v_fov_deg[0] * 1000) / 1000, round(self.v_fov_deg[1] * 1000) / 1000),
            self.cols,
            self.rows,
            round(self.max_range_m * 1000) / 1000,
        )

    @property
    def h_span_rad(self) -> float:
        return math.radians(self.h_fov_deg[1] - self.h_fov_deg[0])

    @property
    def v_span_rad(self) -> float:
        return math.radians(self.v_fov_deg[0] - self.v_fov_deg[1])

    @property
    def h_bin_deg(self) -> float:
        return (self.h_fov_deg[1] - self.h_fov_deg[0]) / self.cols

    @property
    def v_bin_deg(self) -> float:
        return (self.v_fov_deg[0] - self.v_fov_deg[1]) / self.rows

    @property
    def cells(self) -> int:
        return self.rows * self.cols

    def cell_center_angles(self) -> Tuple[np.ndarray, np.ndarray]:
        """(pitch per row, azimuth per column) at bin centers, radians"""
        v_top = math.radians(self.v_fov_deg[0])
        h_start = math.radians(self.h_fov_deg[0])
        pitch = v_top - (np.arange(self.rows) + 0.5) / self.rows * self.v_span_rad
        azimuth = h_start + (np.arange(self.cols) + 0.5) / self.cols * self.h_span_rad
        return pitch, azimuth


class SphericalPoint(NamedTuple):
    r: float
    theta: float
    phi: float


@dataclass(frozen=True)
class RangeImage:
    ranges: np.ndarray
    model: SensorModel
    dropped_points: int = 0

    def __post_init__(self):
        ranges = np.ascontiguousarray(np.asarray(self.ranges, dtype=np.float64))
        if ranges.shape != (self.model.rows, self.model.cols):
            raise ParameterError(
                f"range grid shape {ranges.shape} does not match model {self.model.rows}x{self.model.cols}",
                'ranges',
            )
        if np.any(ranges < 0) or np.any(ranges > self.model.max_range_m) or not np.all(np.isfinite(ranges)):
            raise ParameterError("range grid values must lie in [0, max_range_m]", 'ranges')
        if self.dropped_points < 0:
            raise ParameterError("dropped_points must be non-negative", 'dropped_points')
        ranges.setflags(write=False)
        object.__setattr__(self, 'ranges', ranges)

    @classmethod
    def empty(cls, model: SensorModel) -> 'RangeImage':
        return cls(np.zeros((model.rows, model.cols)), model)

    @property
    def rows(self) -> int:
        return self.model.rows

    @property
    def cols(self) -> int:
        return self.model.cols

    @property
    def occupied(self) -> int:
        return int(np.count_nonzero(self.ranges))

    def to_float32_bytes(self) -> bytes:
        """Row-major little-endian float32 grid (the unquantized payload)"""
        return self.ranges.astype('<f4').tobytes()

    @classmethod
    def from_float32_bytes(cls, data: bytes, model: SensorModel) -> 'RangeImage':
        grid = np.frombuffer(data, dtype='<f4').astype(np.float64)
        if grid.size != model.cells:
            raise ParameterError(f"expected {model.cells} float32 cells, got {grid.size}", 'data')
        grid = np.clip(grid.reshape(model.rows, model.cols), 0.0, model.max_range_m)
        return cls(grid, model)


@dataclass(frozen=True)
class QuantizedRangeImage:
    codes: np.ndarray
    bpp: int
    model: SensorModel

    def __post_init__(self):
        _check_bpp(self.bpp)
        codes = np.ascontiguousarray(np.asarray(self.codes))
        if codes.shape != (self.model.rows, self.model.cols):
            raise ParameterError(
                f"code grid shape {codes.shape} does not match model {self.model.rows}x{self.model.cols}",
                'codes',
            )
        if codes.size and (codes.min() < 0 or codes.max() > self.levels):
            raise ParameterError(f"codes must lie in [0, {self.levels}] for {self.bpp} bpp", 'codes')
        codes = codes.astype(np.uint16)
        codes.setflags(write=False)
        object.__setattr__(self, 'codes', codes)

    @property
    def rows(self) -> int:
        return self.model.rows

    @property
    def cols(self) -> int:
        return self.model.cols

    @property
    def levels(self) -> int:
        return (1 << self.bpp) - 1

    @property
    def step_m(self) -> float:
        return self.model.max_range_m / self.levels


def _check_bpp(bpp: int):
    if int(bpp) != bpp or not MIN_BPP <= bpp <= MAX_BPP:
        raise ParameterError(f"bpp must be an integer in [{MIN_BPP}, {MAX_BPP}], got {bpp}", 'bpp')


def _azimuth_wraps(h_fov_deg: Tuple[float, float]) -> bool:
    """-180 deg is reported as +180 unless the field of view stops short of +180"""
    return h_fov_deg[1] == 180.0


def cartesian_to_spherical(p: Union[Point3, Tuple[float, float, float]],
                           h_fov_deg: Tuple[float, float] = (-180.0, 180.0)) -> SphericalPoint:
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    r = math.sqrt(x * x + y * y + z * z)
    theta = math.acos(max(-1.0, min(1.0, z / r))) if r > 0 else 0.0
    phi = math.atan2(y, x)
    if phi == -math.pi and _azimuth_wraps(h_fov_deg):
        phi = math.pi
    return SphericalPoint(r, theta, phi)


def _spherical_arrays(xyz: np.ndarray, h_fov_deg: Tuple[float, float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    r = np.sqrt(x * x + y * y + z * z)
    with np.errstate(invalid='ignore', divide='ignore'):
        cos_theta = np.where(r > 0, z / np.where(r > 0, r, 1.0), 1.0)
    theta = np.arccos(np.clip(cos_theta, -1.0, 1.0))
    phi = np.arctan2(y, x)
    if _azimuth_wraps(h_fov_deg):
        phi = np.where(phi == -np.pi, np.pi, phi)
    return r, theta, phi


def locate_pixels(xyz: np.ndarray, model: SensorModel) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Bin every point: returns (valid mask, row, col, range).

    Points outside the field of view, beyond max range, or at the origin are
    marked invalid; row/col of invalid points are meaningless.
    """
    r, theta, phi = _spherical_arrays(xyz, model.h_fov_deg)
    pitch = np.pi / 2 - theta
    h_start = math.radians(model.h_fov_deg[0])
    h_end = math.radians(model.h_fov_deg[1])
    v_top = math.radians(model.v_fov_deg[0])
    v_bottom = math.radians(model.v_fov_deg[1])

    limit = model.max_range_m * (1.0 + RANGE_CLAMP_TOLERANCE)
    valid = (r > 0) & (r <= limit)
    valid &= (phi >= h_start) & (phi <= h_end)
    valid &= (pitch >= v_bottom) & (pitch <= v_top)

    col = np.floor((phi - h_start) / model.h_span_rad * model.cols)
    row = np.floor((v_top - pitch) / model.v_span_rad * model.rows)
    col = np.clip(np.nan_to_num(col), 0, model.cols - 1).astype(np.int64)
    row = np.clip(np.nan_to_num(row), 0, model.rows - 1).astype(np.int64)
    return valid, row, col, np.minimum(r, model.max_range_m)


def _min_range_grid(xyz: np.ndarray, model: SensorModel) -> np.ndarray:
    grid = np.full(model.cells, np.inf)
    if xyz.shape[0]:
        valid, row, col, r = locate_pixels(xyz, model)
        np.minimum.at(grid, row[valid] * model.cols + col[valid], r[valid])
    return grid


def _chunks(n: int, parts: int) -> List[slice]:
    parts = max(1, min(parts, n))
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def project(pc: PointCloud, model: SensorModel, workers: int = 1) -> RangeImage:
    """Map a cloud onto the model's grid; the smallest range wins on collision.

    With workers > 1 the points are split into chunks projected on a thread
    pool, and the partial grids are reduced by element-wise minimum, which
    gives the same grid as the sequential path.
    """
    xyz = pc.xyz
    if workers > 1 and xyz.shape[0] >= 2 * workers:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            partials = list(executor.map(lambda s: _min_range_grid(xyz[s], model), _chunks(xyz.shape[0], workers)))
        grid = np.minimum.reduce(partials)
    else:
        grid = _min_range_grid(xyz, model)

    grid[np.isinf(grid)] = EMPTY_RANGE
    grid = grid.reshape(model.rows, model.cols)
    occupied = int(np.count_nonzero(grid))
    return RangeImage(grid, model, len(pc) - occupied)


def _cells_to_xyz(ranges: np.ndarray, flat_idx: np.ndarray, model: SensorModel) -> np.ndarray:
    pitch_c, azimuth_c = model.cell_center_angles()
    rows = flat_idx // model.cols
    cols = flat_idx % model.cols
    r = ranges[flat_idx]
    pitch = pitch_c[rows]
    azimuth = azimuth_c[cols]
    horizontal = r * np.cos(pitch)
    return np.column_stack((horizontal * np.cos(azimuth), horizontal * np.sin(azimuth), r * np.sin(pitch)))


def reconstruct(ri: RangeImage, workers: int = 1, source_point_size_bytes: int = 16) -> PointCloud:
    """One point per non-empty cell, at the cell-center angles, row-major order"""
    flat = ri.ranges.reshape(-1)
    idx = np.flatnonzero(flat)
    if workers > 1 and idx.size >= 2 * workers:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(lambda s: _cells_to_xyz(flat, idx[s], ri.model), _chunks(idx.size, workers)))
        xyz = np.concatenate(parts)
    else:
        xyz = _cells_to_xyz(flat, idx, ri.model)
    return PointCloud(xyz, source_point_size_bytes)


def quantize(ri: RangeImage, bpp: int) -> QuantizedRangeImage:
    """code = clamp(round_half_away(r / max * (2^bpp - 1)), 1, 2^bpp - 1); 0 = empty"""
    _check_bpp(bpp)
    levels = (1 << bpp) - 1
    scaled = ri.ranges / ri.model.max_range_m * levels
    whole = np.floor(scaled)
    rounded = whole + (scaled - whole >= 0.5)
    codes = np.clip(rounded, 1, levels)
    codes = np.where(ri.ranges > 0, codes, 0).astype(np.uint16)
    return QuantizedRangeImage(codes, bpp, ri.model)


def dequantize(qri: QuantizedRangeImage) -> RangeImage:
    codes = qri.codes.astype(np.float64)
    ranges = codes * qri.model.max_range_m / qri.levels
    return RangeImage(np.minimum(ranges, qri.model.max_range_m), qri.model)


def range_image_to_png(ri: RangeImage, path: Union[str, Path]) -> Path:
    """Grayscale preview: near returns bright, far returns dark, empty cells black"""
    from PIL import Image

    ranges = ri.ranges
    shade = np.where(ranges > 0, 255.0 - 254.0 * ranges / ri.model.max_range_m, 0.0)
    image = Image.fromarray(np.round(shade).astype(np.uint8))
    path = Path(path)
    image.save(path)
    logger.info(f"Wrote range-image preview {path} ({ri.cols}x{ri.rows})")
    return path
