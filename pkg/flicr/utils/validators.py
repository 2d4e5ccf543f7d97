import logging
import os
from pathlib import Path
from typing import List, Tuple, Union

from flicr.utils.pipeline import HEADER_SIZE, MAGIC
from flicr.utils.point_cloud import KITTI_RECORD_BYTES, discover_scans

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


class InputValidator:
    """Pre-flight checks for CLI inputs and outputs"""

    MAX_SCAN_SIZE = 64 * 1024 * 1024  # 64MB, about 4M points
    MAX_SWEEP_INPUTS = 1000
    SCAN_EXTENSIONS = {'.bin'}

    @staticmethod
    def validate_scan_file(path: PathLike) -> Tuple[bool, str]:
        """
        Check a KITTI scan before parsing

        Returns:
            Tuple[bool, str]: (is_valid, error_message)
        """
        path = Path(path)
        if not path.is_file():
            return False, f"Scan file not found: {path}"

        if path.suffix.lower() not in InputValidator.SCAN_EXTENSIONS:
            logger.warning(f"{path.name} does not have a .bin extension; reading as KITTI anyway")

        size = path.stat().st_size
        if size > InputValidator.MAX_SCAN_SIZE:
            return False, f"Scan {path.name} is too large ({size // (1024 * 1024)}MB)"
        if size % KITTI_RECORD_BYTES:
            return False, (f"Scan {path.name} is {size} bytes, not a multiple of {KITTI_RECORD_BYTES}; "
                           f"trailing partial record at offset {size - size % KITTI_RECORD_BYTES}")

        return True, ""

    @staticmethod
    def validate_stream_file(path: PathLike) -> Tuple[bool, str]:
        path = Path(path)
        if not path.is_file():
            return False, f"Stream file not found: {path}"

        with open(path, 'rb') as f:
            head = f.read(len(MAGIC))
        if head != MAGIC:
            return False, f"{path.name}: bad magic {head!r}, expected {MAGIC!r}"
        if path.stat().st_size < HEADER_SIZE:
            return False, f"{path.name}: truncated header ({path.stat().st_size} of {HEADER_SIZE} bytes)"

        return True, ""

    @staticmethod
    def validate_output_path(path: PathLike) -> Tuple[bool, str]:
        path = Path(path)
        parent = path.parent if str(path.parent) else Path('.')
        if path.is_dir():
            return False, f"Output path is a directory: {path}"
        if not parent.exists():
            return False, f"Output directory does not exist: {parent}"
        if not os.access(parent, os.W_OK):
            return False, f"Output directory is not writable: {parent}"
        return True, ""

    @staticmethod
    def validate_scan_inputs(inputs: List[PathLike]) -> Tuple[bool, str, List[Path]]:
        """
        Expand sweep inputs (files and KITTI velodyne directories)

        Returns:
            Tuple[bool, str, List[Path]]: (is_valid, error_message, scan_paths)
        """
        scans: List[Path] = []
        for item in inputs:
            item = Path(item)
            if item.is_dir():
                found = discover_scans(item)
                if not found:
                    return False, f"No .bin scans in directory {item}", []
                scans.extend(found)
            elif item.is_file():
                scans.append(item)
            else:
                return False, f"Input not found: {item}", []

        if not scans:
            return False, "No inputs provided", []
        if len(scans) > InputValidator.MAX_SWEEP_INPUTS:
            return False, f"Too many inputs ({len(scans)}); the limit is {InputValidator.MAX_SWEEP_INPUTS}", []

        return True, "", scans
