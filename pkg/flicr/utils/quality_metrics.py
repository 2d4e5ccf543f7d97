"""Point-cloud quality metrics: NN distance, MSE, Chamfer distance, PSNR, SE and ePSNR.

Squared distances are always evaluated as dx*dx + dy*dy + dz*dz on float64
and means use math.fsum, so every index returns exactly what an exhaustive
scan returns.
"""
import itertools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from flicr.utils.error_handler import DomainError, ParameterError
from flicr.utils.point_cloud import Point3, PointCloud

logger = logging.getLogger(__name__)

PSNR_LOSSLESS_CAP_DB = 200.0
DEFAULT_PEAK_M = 120.0
BRUTE_FORCE_CHUNK = 256


@dataclass(frozen=True)
class EpsnrParams:
    alpha: float = -0.15
    beta: float = 0.5

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class QualityReport:
    psnr_db: float
    chamfer_m2: float
    se: float
    epsnr_db: float
    n_orig: int
    n_comp: int
    raw_bytes: int
    compressed_bytes: int
    compression_ratio: float
    # convenience columns, not part of the metric definitions
    cd_root_cm: float = 0.0
    naive_epsnr_db: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    dx = a[..., 0] - b[..., 0]
    dy = a[..., 1] - b[..., 1]
    dz = a[..., 2] - b[..., 2]
    return dx * dx + dy * dy + dz * dz


def _as_xyz(points: Union[PointCloud, np.ndarray, Sequence]) -> np.ndarray:
    if isinstance(points, PointCloud):
        return points.xyz
    return np.asarray(points, dtype=np.float64).reshape(-1, 3)


def brute_force_nn_sq_dists(queries, cloud) -> np.ndarray:
    """Exhaustive minimum squared distance from each query to the cloud"""
    q = _as_xyz(queries)
    c = _as_xyz(cloud)
    if c.shape[0] == 0:
        raise DomainError("nearest-neighbor search against an empty cloud")
    result = np.empty(q.shape[0])
    for start in range(0, q.shape[0], BRUTE_FORCE_CHUNK):
        block = q[start:start + BRUTE_FORCE_CHUNK]
        result[start:start + block.shape[0]] = _sq_dists(block[:, None, :], c[None, :, :]).min(axis=1)
    return result


class NearestNeighborIndex(ABC):
    """Exact nearest-neighbor squared distances against a fixed cloud"""

    def __init__(self, cloud):
        self.xyz = _as_xyz(cloud)
        if self.xyz.shape[0] == 0:
            raise DomainError("cannot index an empty cloud")

    @abstractmethod
    def nn_indices(self, queries: np.ndarray) -> np.ndarray:
        """Index of a nearest cloud point for each query"""

    def sq_dists(self, queries) -> np.ndarray:
        q = _as_xyz(queries)
        if q.shape[0] == 0:
            return np.zeros(0)
        return _sq_dists(q, self.xyz[self.nn_indices(q)])


class KDTreeIndex(NearestNeighborIndex):
    """scipy cKDTree; the distance it minimises uses the same summation as _sq_dists"""

    def __init__(self, cloud):
        super().__init__(cloud)
        self.tree = cKDTree(self.xyz)

    def nn_indices(self, queries: np.ndarray) -> np.ndarray:
        _, idx = self.tree.query(queries, k=1)
        return np.asarray(idx, dtype=np.int64)


class VoxelGridIndex(NearestNeighborIndex):
    """Uniform voxel grid with expanding-ring search.

    After the shell at Chebyshev ring k has been scanned, every unscanned
    point is at least k * cell_m away, so the search stops once the best
    squared distance is below (k * cell_m)^2.
    """

    def __init__(self, cloud, cell_m: float = 1.0):
        super().__init__(cloud)
        if not cell_m > 0:
            raise ParameterError(f"voxel cell size must be positive, got {cell_m}", 'cell_m')
        self.cell_m = float(cell_m)
        keys = np.floor(self.xyz / self.cell_m).astype(np.int64)
        self.key_min = keys.min(axis=0)
        self.key_max = keys.max(axis=0)
        order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
        sorted_keys = keys[order]
        boundaries = np.flatnonzero(np.any(sorted_keys[1:] != sorted_keys[:-1], axis=1)) + 1
        starts = np.concatenate(([0], boundaries))
        ends = np.append(boundaries, order.size)
        self.cells = {
            tuple(int(v) for v in sorted_keys[s]): order[s:e]
            for s, e in zip(starts, ends)
        }
        logger.debug(f"voxel index: {len(self.xyz)} points in {len(self.cells)} cells of {self.cell_m} m")

    @staticmethod
    def _shell(k: int):
        if k == 0:
            yield (0, 0, 0)
            return
        for offset in itertools.product(range(-k, k + 1), repeat=3):
            if max(abs(offset[0]), abs(offset[1]), abs(offset[2])) == k:
                yield offset

    def _nearest(self, q: np.ndarray) -> int:
        center = np.floor(q / self.cell_m).astype(np.int64)
        k_limit = int(max(np.max(np.abs(center - self.key_min)), np.max(np.abs(self.key_max - center))))
        best_d2 = math.inf
        best_idx = -1
        k = 0
        while k <= k_limit:
            for dx, dy, dz in self._shell(k):
                members = self.cells.get((int(center[0]) + dx, int(center[1]) + dy, int(center[2]) + dz))
                if members is None:
                    continue
                d2 = _sq_dists(q[None, :], self.xyz[members])
                j = int(np.argmin(d2))
                if d2[j] < best_d2:
                    best_d2 = float(d2[j])
                    best_idx = int(members[j])
            reach = k * self.cell_m
            if best_idx >= 0 and best_d2 < reach * reach:
                break
            k += 1
        return best_idx

    def nn_indices(self, queries: np.ndarray) -> np.ndarray:
        return np.array([self._nearest(q) for q in queries], dtype=np.int64)


def build_index(cloud, kind: str = 'kdtree', cell_m: float = 1.0) -> NearestNeighborIndex:
    if kind == 'kdtree':
        return KDTreeIndex(cloud)
    if kind == 'voxel':
        return VoxelGridIndex(cloud, cell_m)
    raise ParameterError(f"unknown nearest-neighbor index '{kind}'", 'nn_index')


def _require_points(cloud: PointCloud, label: str):
    if len(cloud) == 0:
        raise DomainError(f"{label} point cloud is empty")


def _mean(values: np.ndarray) -> float:
    return math.fsum(values.tolist()) / values.size


def nn_sq_dist(p: Union[Point3, Sequence[float]], cloud: PointCloud, index: Optional[NearestNeighborIndex] = None) -> float:
    """min over c in cloud of |p - c|^2"""
    _require_points(cloud, 'reference')
    index = index or KDTreeIndex(cloud)
    return float(index.sq_dists(np.asarray(p, dtype=np.float64).reshape(1, 3))[0])


def mse(c1: PointCloud, c2: PointCloud, index: Optional[NearestNeighborIndex] = None) -> float:
    """Mean over points of c2 of their squared distance to the nearest point of c1"""
    _require_points(c1, 'first')
    _require_points(c2, 'second')
    index = index or KDTreeIndex(c1)
    return _mean(index.sq_dists(c2.xyz))


def chamfer_distance(orig: PointCloud, comp: PointCloud,
                     orig_index: Optional[NearestNeighborIndex] = None,
                     comp_index: Optional[NearestNeighborIndex] = None) -> float:
    return mse(orig, comp, orig_index) + mse(comp, orig, comp_index)


def psnr_from_mse(mse_m2: float, peak_m: float) -> float:
    if not peak_m > 0:
        raise DomainError(f"peak must be positive, got {peak_m}")
    if mse_m2 <= 0:
        return PSNR_LOSSLESS_CAP_DB
    return 10.0 * math.log10(peak_m * peak_m / mse_m2)


def psnr(orig: PointCloud, comp: PointCloud, peak_m: float = DEFAULT_PEAK_M,
         index: Optional[NearestNeighborIndex] = None) -> float:
    """10 log10(peak^2 / mse(orig, comp)); capped at 200 dB when lossless"""
    if not peak_m > 0:
        raise DomainError(f"peak must be positive, got {peak_m}")
    return psnr_from_mse(mse(orig, comp, index), peak_m)


def sampling_error(orig: PointCloud, comp: PointCloud) -> float:
    """Fraction of original points missing from the reconstruction, by count"""
    _require_points(orig, 'original')
    lost = max(0, len(orig) - len(comp))
    return min(1.0, max(0.0, lost / len(orig)))


def entropy_factor(se: float, beta: float) -> float:
    """Exponential survival function e^(-(1 - se) / beta)"""
    if not 0.0 <= se <= 1.0:
        raise DomainError(f"se must lie in [0, 1], got {se}")
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    return math.exp(-(1.0 - se) / beta)


def epsnr(psnr_db: float, se: float, params: EpsnrParams = EpsnrParams()) -> float:
    """PSNR scaled by 1 - se * clamp(F(se) + alpha, 0, 1)"""
    factor = min(1.0, max(0.0, entropy_factor(se, params.beta) + params.alpha))
    return psnr_db * (1.0 - se * factor)


def naive_epsnr(psnr_db: float, se: float) -> float:
    """PSNR x (1 - SE), the baseline that treats SE as the entropy loss"""
    if not 0.0 <= se <= 1.0:
        raise DomainError(f"se must lie in [0, 1], got {se}")
    return psnr_db * (1.0 - se)


def full_report(orig: PointCloud, comp: PointCloud, raw_bytes: int, compressed_bytes: int,
                peak_m: float = DEFAULT_PEAK_M, params: EpsnrParams = EpsnrParams(),
                index_kind: str = 'kdtree', cell_m: float = 1.0) -> QualityReport:
    _require_points(orig, 'original')
    _require_points(comp, 'reconstructed')
    if compressed_bytes <= 0:
        raise DomainError(f"compressed size must be positive, got {compressed_bytes}")

    orig_index = build_index(orig, index_kind, cell_m)
    comp_index = build_index(comp, index_kind, cell_m)
    mse_orig_comp = mse(orig, comp, orig_index)
    mse_comp_orig = mse(comp, orig, comp_index)
    chamfer = mse_orig_comp + mse_comp_orig
    psnr_db = psnr_from_mse(mse_orig_comp, peak_m)
    se = sampling_error(orig, comp)

    return QualityReport(
        psnr_db=psnr_db,
        chamfer_m2=chamfer,
        se=se,
        epsnr_db=epsnr(psnr_db, se, params),
        n_orig=len(orig),
        n_comp=len(comp),
        raw_bytes=int(raw_bytes),
        compressed_bytes=int(compressed_bytes),
        compression_ratio=raw_bytes / compressed_bytes,
        cd_root_cm=math.sqrt(chamfer) * 100.0,
        naive_epsnr_db=naive_epsnr(psnr_db, se),
    )
