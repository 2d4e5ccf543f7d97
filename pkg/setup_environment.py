#!/usr/bin/env python3
"""
Environment setup script for the flicr codec
Creates the working directories and a starter flicr.json.
"""

import importlib
import json
import os
import sys
from typing import List

from flicr.utils.config_manager import config_manager

STARTER_KEYS = [
    'DEFAULT_COLS', 'DEFAULT_ROWS', 'DEFAULT_BPP', 'DEFAULT_CODEC', 'MAX_RANGE_M',
    'LZ77_WINDOW', 'LZ77_MIN_MATCH', 'LZ77_MAX_MATCH', 'LZ77_MAX_CHAIN',
    'EPSNR_ALPHA', 'EPSNR_BETA', 'PSNR_PEAK_M', 'NN_INDEX', 'SWEEP_REPETITIONS',
]

REQUIRED_MODULES = [
    'numpy', 'scipy.spatial', 'numba', 'pandas', 'openpyxl',
    'psutil', 'reportlab', 'PIL', 'matplotlib', 'flicr.commands',
]


def missing_modules(modules: List[str] = REQUIRED_MODULES) -> List[str]:
    """Modules that fail to import; run `pip install -r requirements.txt` for these"""
    missing = []
    for module in modules:
        try:
            importlib.import_module(module)
        except ImportError:
            missing.append(module)
    return missing


def setup_environment(config_path: str = 'flicr.json') -> bool:
    """Create logs/ and results/ and write a starter config if none exists"""

    print("🔧 Setting up flicr environment")
    print("=" * 50)

    python_version = sys.version_info
    if python_version < (3, 9):
        print("⚠️  Warning: Python 3.9+ is required")
    else:
        print(f"✅ Python version {python_version.major}.{python_version.minor} is compatible")

    missing = missing_modules()
    for module in missing:
        print(f"❌ Cannot import {module}")
    if not missing:
        print(f"✅ All {len(REQUIRED_MODULES)} required modules import")

    required_dirs = [config_manager.get('LOG_DIR', 'logs'), config_manager.get('RESULTS_DIR', 'results')]
    for directory in required_dirs:
        if not os.path.exists(directory):
            os.makedirs(directory, exist_ok=True)
            print(f"📁 Created directory: {directory}")
        else:
            print(f"✅ Directory exists: {directory}")

    if os.path.exists(config_path):
        print(f"✅ {config_path} already exists")
    else:
        starter = {key: config_manager.get(key) for key in STARTER_KEYS}
        with open(config_path, 'w') as f:
            json.dump(starter, f, indent=2)
        print(f"📝 Created {config_path} with default settings")

    ok, errors = config_manager.validate_config()
    ok = ok and not missing
    for error in errors:
        print(f"❌ {error}")

    if missing:
        print("\n❌ Missing packages: pip install -r requirements.txt")
    print("\n🚀 Environment setup complete!" if ok else "\n❌ Environment has errors")
    print("\nTo try the codec:")
    print("  python run.py sweep --synthetic 1 --repetitions 1 --plot results/plots")
    print("  python run.py encode scan.bin scan.flicr --cols 2048 --bpp 8")
    return ok


if __name__ == '__main__':
    sys.exit(0 if setup_environment() else 1)
