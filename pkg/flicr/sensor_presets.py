"""Sensor presets, the default sweep grid and published reference rows."""
from dataclasses import dataclass
from typing import Dict, List, Tuple

from flicr.utils.error_handler import ParameterError
from flicr.utils.range_image import SensorModel

Resolution = Tuple[int, int]

SENSOR_PRESETS: Dict[str, SensorModel] = {
    'hdl64e': SensorModel.hdl64e(),
    'hdl32e': SensorModel((-180.0, 180.0), (10.67, -30.67), 2250, 32, 100.0),
    'vlp16': SensorModel((-180.0, 180.0), (15.0, -15.0), 1800, 16, 100.0),
}

DEFAULT_RESOLUTIONS: List[Resolution] = [
    (4500, 64), (4096, 64), (2048, 64), (1024, 64), (512, 64), (256, 64),
]


@dataclass(frozen=True)
class ReferenceRow:
    """Published KITTI figures at 8 bpp with LZ77; se is a fraction"""

    compression_ratio: float
    se: float
    psnr_db: float
    epsnr_db: float


REFERENCE_ROWS: Dict[Resolution, ReferenceRow] = {
    (4500, 64): ReferenceRow(21.26, 0.084, 63.18, 63.13),
    (4096, 64): ReferenceRow(24.75, 0.091, 63.09, 63.01),
    (2048, 64): ReferenceRow(46.18, 0.210, 62.40, 61.64),
    (1024, 64): ReferenceRow(80.88, 0.588, 61.41, 51.38),
    (512, 64): ReferenceRow(131.13, 0.789, 58.61, 35.40),
    (256, 64): ReferenceRow(215.85, 0.892, 53.71, 22.29),
}

# (resolution, column, tolerance, absolute?) checked by `sweep --reference-check`
REFERENCE_CHECKS = (
    ((4500, 64), 'compression_ratio', 0.30, False),
    ((4500, 64), 'psnr_db', 2.0, True),
    ((1024, 64), 'se', 0.05, True),
)


def get_sensor(name: str) -> SensorModel:
    try:
        return SENSOR_PRESETS[name.strip().lower()]
    except KeyError:
        raise ParameterError(f"unknown sensor '{name}' (expected one of {', '.join(SENSOR_PRESETS)})", 'sensor')


def parse_resolution(text: str) -> Resolution:
    """'4500x64' -> (4500, 64)"""
    parts = text.strip().lower().split('x')
    if len(parts) != 2:
        raise ParameterError(f"resolution '{text}' must look like COLSxROWS", 'resolutions')
    try:
        cols, rows = int(parts[0]), int(parts[1])
    except ValueError:
        raise ParameterError(f"resolution '{text}' must look like COLSxROWS", 'resolutions')
    if cols < 1 or rows < 1:
        raise ParameterError(f"resolution '{text}' must be positive", 'resolutions')
    return cols, rows


def parse_resolutions(text: str) -> List[Resolution]:
    resolutions = [parse_resolution(part) for part in text.split(',') if part.strip()]
    if not resolutions:
        raise ParameterError("at least one resolution is required", 'resolutions')
    return resolutions
