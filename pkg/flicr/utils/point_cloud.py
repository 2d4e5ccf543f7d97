"""Point-cloud container and KITTI velodyne scan I/O."""
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, NamedTuple, Sequence, Union

import numpy as np

from flicr.utils.error_handler import MalformedInputError, ParameterError

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

KITTI_RECORD_BYTES = 16
KITTI_DTYPE = np.dtype('<f4')


class Point3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class PointCloud:
    """Ordered 3D points in the sensor frame, meters.

    `xyz` is an (N, 3) float64 array and is made read-only on construction.
    `source_point_size_bytes` is the per-point size of the raw encoding the
    cloud came from; compression ratios are computed against it.
    """

    xyz: np.ndarray
    source_point_size_bytes: int = KITTI_RECORD_BYTES
    dropped_nonfinite: int = 0
    name: str = field(default='', compare=False)

    def __post_init__(self):
        xyz = np.ascontiguousarray(np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3))
        if not np.all(np.isfinite(xyz)):
            raise ParameterError("point cloud contains non-finite coordinates", 'xyz')
        if self.source_point_size_bytes < 12:
            raise ParameterError(
                f"source_point_size_bytes must be >= 12, got {self.source_point_size_bytes}",
                'source_point_size_bytes',
            )
        xyz.setflags(write=False)
        object.__setattr__(self, 'xyz', xyz)

    @classmethod
    def empty(cls, source_point_size_bytes: int = KITTI_RECORD_BYTES) -> 'PointCloud':
        return cls(np.zeros((0, 3)), source_point_size_bytes)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]], source_point_size_bytes: int = KITTI_RECORD_BYTES) -> 'PointCloud':
        return cls(np.asarray(points, dtype=np.float64).reshape(-1, 3), source_point_size_bytes)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @property
    def points(self) -> List[Point3]:
        return [Point3(float(x), float(y), float(z)) for x, y, z in self.xyz]

    def __iter__(self) -> Iterator[Point3]:
        return iter(self.points)

    @property
    def raw_bytes(self) -> int:
        return len(self) * self.source_point_size_bytes


def parse_kitti_bytes(raw: bytes, name: str = '') -> PointCloud:
    """Parse KITTI velodyne records (little-endian float32 x, y, z, intensity).

    Intensity is discarded. Records with NaN/Inf in any of the four fields are
    dropped and counted in `dropped_nonfinite`.
    """
    if len(raw) % KITTI_RECORD_BYTES != 0:
        offset = len(raw) - len(raw) % KITTI_RECORD_BYTES
        raise MalformedInputError(
            f"{name or 'scan'}: length {len(raw)} is not a multiple of {KITTI_RECORD_BYTES} bytes; "
            f"trailing partial record at offset {offset}",
            offset=offset,
        )

    records = np.frombuffer(raw, dtype=KITTI_DTYPE).reshape(-1, 4)
    finite = np.all(np.isfinite(records), axis=1)
    xyz = records[finite, :3].astype(np.float64)
    dropped = int(np.count_nonzero(~finite))
    if dropped:
        logger.info(f"{name}: dropped {dropped} non-finite points")

    return PointCloud(xyz, KITTI_RECORD_BYTES, dropped, name=name)


def read_kitti_bin(path: PathLike) -> PointCloud:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Scan file not found: {path}")
    return parse_kitti_bytes(path.read_bytes(), path.stem)


def kitti_bytes(pc: PointCloud) -> bytes:
    """KITTI records of `pc` with intensity 0.0.

    Coordinates are rounded to the nearest float32, so `parse_kitti_bytes`
    returns them bit for bit only when they are float32-representable.
    Coordinates beyond the float32 range raise ParameterError.
    """
    records = np.zeros((len(pc), 4), dtype=KITTI_DTYPE)
    with np.errstate(over='ignore'):
        records[:, :3] = pc.xyz
    overflow = ~np.all(np.isfinite(records[:, :3]), axis=1)
    if np.any(overflow):
        first = int(np.flatnonzero(overflow)[0])
        raise ParameterError(
            f"point {first} of {len(pc)} overflows float32 ({pc.xyz[first].tolist()})", 'xyz')
    return records.tobytes()


def write_kitti_bin(pc: PointCloud, path: PathLike) -> None:
    Path(path).write_bytes(kitti_bytes(pc))


def discover_scans(directory: PathLike) -> List[Path]:
    """Sorted `*.bin` scans of a KITTI velodyne directory"""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Scan directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == '.bin' and p.is_file())
