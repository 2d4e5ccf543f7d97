"""Analytic ray-cast scans for dataset-free testing and benchmarking."""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from flicr.utils.error_handler import ParameterError
from flicr.utils.point_cloud import PointCloud
from flicr.utils.range_image import SensorModel

logger = logging.getLogger(__name__)

Vec3 = Tuple[float, float, float]

KITTI_SENSOR_HEIGHT_M = 1.73


@dataclass(frozen=True)
class AxisPlane:
    """Infinite plane {p : p[axis] == offset}"""

    axis: int
    offset: float

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ParameterError(f"plane axis must be 0, 1 or 2, got {self.axis}", 'axis')


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by opposite corners"""

    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ParameterError(f"box corners must satisfy lo < hi, got {self.lo} / {self.hi}", 'box')

    def contains_origin(self) -> bool:
        return all(a <= 0.0 <= b for a, b in zip(self.lo, self.hi))


@dataclass(frozen=True)
class SceneSpec:
    """Scene for `synth_scan`.

    range_noise_m adds Gaussian noise along each ray, so noisy points still
    fall in the pixel of the ray that produced them.
    """

    ground_z: Optional[float] = None
    planes: Tuple[AxisPlane, ...] = field(default_factory=tuple)
    boxes: Tuple[Box, ...] = field(default_factory=tuple)
    range_noise_m: float = 0.0
    seed: int = 0

    def is_empty(self) -> bool:
        return self.ground_z is None and not self.planes and not self.boxes

    @classmethod
    def ground(cls, z: float = -KITTI_SENSOR_HEIGHT_M) -> 'SceneSpec':
        return cls(ground_z=z)

    @classmethod
    def urban(cls, seed: int = 0, range_noise_m: float = 0.2) -> 'SceneSpec':
        """Street canyon: ground, two facades, parked cars and poles"""
        rng = np.random.default_rng(seed)
        ground_z = -KITTI_SENSOR_HEIGHT_M
        left = float(rng.uniform(8.0, 14.0))
        right = -float(rng.uniform(8.0, 14.0))
        planes = (AxisPlane(1, left), AxisPlane(1, right))

        boxes = []
        for _ in range(int(rng.integers(12, 25))):
            x = float(rng.uniform(-50.0, 50.0))
            side = 1.0 if rng.random() < 0.5 else -1.0
            y = side * float(rng.uniform(2.5, 6.0))
            if abs(x) < 3.0:
                continue
            length, width, height = rng.uniform(3.8, 4.8), rng.uniform(1.6, 2.0), rng.uniform(1.4, 1.9)
            boxes.append(Box(
                (x - length / 2, y - width / 2, ground_z),
                (x + length / 2, y + width / 2, ground_z + height),
            ))
        for _ in range(int(rng.integers(6, 12))):
            x = float(rng.uniform(-60.0, 60.0))
            y = (left - 1.0) if rng.random() < 0.5 else (right + 1.0)
            boxes.append(Box((x - 0.15, y - 0.15, ground_z), (x + 0.15, y + 0.15, ground_z + 6.0)))

        return cls(ground_z, planes, tuple(boxes), range_noise_m, seed)


def ray_directions(model: SensorModel) -> np.ndarray:
    """Unit ray per cell, through the cell-center angles, row-major (rows*cols, 3)"""
    pitch, azimuth = model.cell_center_angles()
    pitch_grid, azimuth_grid = np.meshgrid(pitch, azimuth, indexing='ij')
    cos_pitch = np.cos(pitch_grid)
    directions = np.stack((cos_pitch * np.cos(azimuth_grid),
                           cos_pitch * np.sin(azimuth_grid),
                           np.sin(pitch_grid)), axis=-1)
    return directions.reshape(-1, 3)


def _plane_hits(directions: np.ndarray, plane: AxisPlane) -> np.ndarray:
    component = directions[:, plane.axis]
    with np.errstate(divide='ignore', invalid='ignore'):
        t = plane.offset / component
    return np.where((component != 0) & (t > 0), t, np.inf)


def _box_hits(directions: np.ndarray, box: Box) -> np.ndarray:
    t_near = np.full(directions.shape[0], -np.inf)
    t_far = np.full(directions.shape[0], np.inf)
    for axis in range(3):
        component = directions[:, axis]
        lo, hi = box.lo[axis], box.hi[axis]
        parallel = component == 0
        with np.errstate(divide='ignore', invalid='ignore'):
            t1 = lo / component
            t2 = hi / component
        slab_near = np.where(parallel, np.where(lo <= 0.0 <= hi, -np.inf, np.inf), np.minimum(t1, t2))
        slab_far = np.where(parallel, np.where(lo <= 0.0 <= hi, np.inf, -np.inf), np.maximum(t1, t2))
        t_near = np.maximum(t_near, slab_near)
        t_far = np.minimum(t_far, slab_far)
    hit = (t_near <= t_far) & (t_far > 0)
    t = np.where(t_near > 0, t_near, t_far)
    return np.where(hit, t, np.inf)


def first_hit_distances(model: SensorModel, scene: SceneSpec) -> np.ndarray:
    """Distance along each cell's ray to the first surface, inf for a miss"""
    directions = ray_directions(model)
    t = np.full(directions.shape[0], np.inf)
    if scene.ground_z is not None:
        t = np.minimum(t, _plane_hits(directions, AxisPlane(2, scene.ground_z)))
    for plane in scene.planes:
        t = np.minimum(t, _plane_hits(directions, plane))
    for box in scene.boxes:
        t = np.minimum(t, _box_hits(directions, box))
    return t


def synth_scan(model: SensorModel, scene: SceneSpec) -> PointCloud:
    """Cast one ray per grid cell from the origin and keep first hits within max range"""
    if scene.is_empty():
        return PointCloud.empty()

    directions = ray_directions(model)
    t = first_hit_distances(model, scene)
    keep = np.isfinite(t) & (t <= model.max_range_m)
    r = t[keep]
    if scene.range_noise_m > 0:
        rng = np.random.default_rng(scene.seed)
        r = r + rng.normal(0.0, scene.range_noise_m, size=r.shape)
        r = np.clip(r, 1e-3, model.max_range_m)

    xyz = directions[keep] * r[:, None]
    logger.debug(f"synth_scan: {xyz.shape[0]} hits of {directions.shape[0]} rays")
    return PointCloud(xyz, name=f"synthetic-{scene.seed}")
