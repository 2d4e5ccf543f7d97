import json
import logging
import os
from pathlib import Path
from typing import Any, Dict

logger = logging.getLogger(__name__)


def _default_threads() -> int:
    try:
        import psutil
        return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    except Exception:
        return os.cpu_count() or 1


class ConfigManager:
    """Centralized configuration: defaults, then environment, then flicr.json"""

    CODECS = ('lz77', 'rle')
    NN_INDEXES = ('kdtree', 'voxel')

    def __init__(self):
        self.config = {}
        self.load_config()

    def load_config(self):
        """Load configuration from environment variables and config files"""
        self.config = {
            'APP_NAME': 'flicr',
            'APP_VERSION': '1.0.0',

            # Codec defaults
            'DEFAULT_COLS': 4500,
            'DEFAULT_ROWS': 64,
            'DEFAULT_BPP': 8,
            'DEFAULT_CODEC': 'lz77',
            'MAX_RANGE_M': 120.0,
            'LZ77_WINDOW': 32768,
            'LZ77_MIN_MATCH': 3,
            'LZ77_MAX_MATCH': 258,
            'LZ77_MAX_CHAIN': 0,  # 0 = search the whole window
            'PARALLEL_PROJECTION': True,

            # Metrics
            'EPSNR_ALPHA': -0.15,
            'EPSNR_BETA': 0.5,
            'PSNR_PEAK_M': 120.0,
            'NN_INDEX': 'kdtree',
            'VOXEL_CELL_M': 1.0,

            # Benchmark
            'FLICR_THREADS': _default_threads(),
            'SWEEP_REPETITIONS': 3,
            'RESULTS_DIR': 'results',

            # Logging
            'LOG_DIR': 'logs',
            'LOG_TO_FILE': True,
            'MAX_LOG_SIZE': 1024 * 1024,
            'LOG_BACKUP_COUNT': 5,
        }

        self._load_from_env()
        self._load_from_file()

    def _load_from_env(self):
        """Load configuration from environment variables"""
        env_mappings = {
            'FLICR_THREADS': ('FLICR_THREADS', int),
            'FLICR_DEFAULT_BPP': ('DEFAULT_BPP', int),
            'FLICR_DEFAULT_CODEC': ('DEFAULT_CODEC', str),
            'FLICR_MAX_RANGE_M': ('MAX_RANGE_M', float),
            'FLICR_EPSNR_ALPHA': ('EPSNR_ALPHA', float),
            'FLICR_EPSNR_BETA': ('EPSNR_BETA', float),
            'FLICR_PSNR_PEAK_M': ('PSNR_PEAK_M', float),
            'FLICR_NN_INDEX': ('NN_INDEX', str),
            'FLICR_SWEEP_REPETITIONS': ('SWEEP_REPETITIONS', int),
            'FLICR_PARALLEL_PROJECTION': ('PARALLEL_PROJECTION', bool),
            'FLICR_LOG_DIR': ('LOG_DIR', str),
            'FLICR_LOG_TO_FILE': ('LOG_TO_FILE', bool),
            'FLICR_RESULTS_DIR': ('RESULTS_DIR', str),
        }

        for env_var, (config_key, value_type) in env_mappings.items():
            env_value = os.environ.get(env_var)
            if env_value is not None:
                try:
                    if value_type == bool:
                        self.config[config_key] = env_value.lower() in ('true', '1', 'yes')
                    else:
                        self.config[config_key] = value_type(env_value)
                except (ValueError, TypeError):
                    logger.warning(f"Ignoring invalid value for {env_var}: {env_value!r}")

    def _load_from_file(self):
        """Load configuration from flicr.json (or the file named by FLICR_CONFIG)"""
        config_file = Path(os.environ.get('FLICR_CONFIG', 'flicr.json'))
        if config_file.exists():
            try:
                with open(config_file, 'r') as f:
                    file_config = json.load(f)
                    self.config.update(file_config)
            except (json.JSONDecodeError, IOError) as e:
                logger.warning(f"Could not read {config_file}: {e}")

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value"""
        return self.config.get(key, default)

    def set(self, key: str, value: Any):
        """Set configuration value"""
        self.config[key] = value

    def get_all(self) -> Dict[str, Any]:
        """Get all configuration values"""
        return self.config.copy()

    def get_codec_settings(self) -> Dict[str, Any]:
        return {
            'cols': self.get('DEFAULT_COLS'),
            'rows': self.get('DEFAULT_ROWS'),
            'bpp': self.get('DEFAULT_BPP'),
            'codec': self.get('DEFAULT_CODEC'),
            'max_range_m': self.get('MAX_RANGE_M'),
            'lz77_window': self.get('LZ77_WINDOW'),
            'lz77_min_match': self.get('LZ77_MIN_MATCH'),
            'lz77_max_match': self.get('LZ77_MAX_MATCH'),
            'lz77_max_chain': self.get('LZ77_MAX_CHAIN'),
        }

    def get_metric_settings(self) -> Dict[str, Any]:
        return {
            'alpha': self.get('EPSNR_ALPHA'),
            'beta': self.get('EPSNR_BETA'),
            'peak_m': self.get('PSNR_PEAK_M'),
            'nn_index': self.get('NN_INDEX'),
            'voxel_cell_m': self.get('VOXEL_CELL_M'),
        }

    def worker_count(self) -> int:
        """FLICR_THREADS, never below one"""
        try:
            return max(1, int(self.get('FLICR_THREADS', 1)))
        except (TypeError, ValueError):
            return 1

    def validate_config(self) -> tuple[bool, list[str]]:
        """Validate configuration settings"""
        errors = []

        if not 2 <= int(self.get('DEFAULT_BPP', 0)) <= 16:
            errors.append("DEFAULT_BPP must be within [2, 16]")

        if self.get('DEFAULT_CODEC') not in self.CODECS:
            errors.append(f"DEFAULT_CODEC must be one of {', '.join(self.CODECS)}")

        if self.get('MAX_RANGE_M', 0) <= 0:
            errors.append("MAX_RANGE_M must be positive")

        if self.get('PSNR_PEAK_M', 0) <= 0:
            errors.append("PSNR_PEAK_M must be positive")

        if self.get('EPSNR_BETA', 0) <= 0:
            errors.append("EPSNR_BETA must be positive")

        if self.get('NN_INDEX') not in self.NN_INDEXES:
            errors.append(f"NN_INDEX must be one of {', '.join(self.NN_INDEXES)}")

        if self.get('FLICR_THREADS', 0) <= 0:
            errors.append("FLICR_THREADS must be positive")

        if self.get('SWEEP_REPETITIONS', 0) <= 0:
            errors.append("SWEEP_REPETITIONS must be positive")

        if not 1 <= self.get('LZ77_WINDOW', 0) <= 65535:
            errors.append("LZ77_WINDOW must be within [1, 65535]")

        if self.get('LZ77_MAX_CHAIN', -1) < 0:
            errors.append("LZ77_MAX_CHAIN must be >= 0 (0 searches the whole window)")

        return len(errors) == 0, errors


# Global configuration instance
config_manager = ConfigManager()
