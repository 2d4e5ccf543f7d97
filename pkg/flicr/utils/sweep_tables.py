"""CSV, XLSX and summary tables for sweep results."""
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import pandas as pd

from flicr.utils.bench_runner import RAW_BPP, BenchRow, ReferenceCheck
from flicr.utils.pipeline import FLOAT_BPP

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

GROUP_KEYS = ['cols', 'rows', 'bpp', 'codec']

# metric rows of the summary table, in display order
SUMMARY_METRICS = [
    ('compression_ratio', 'Compression ratio'),
    ('se', 'Sampling error'),
    ('psnr_db', 'PSNR (dB)'),
    ('epsnr_db', 'ePSNR (dB)'),
    ('naive_epsnr_db', 'PSNR x (1 - SE) (dB)'),
    ('cd_m2', 'Chamfer distance (m^2)'),
    ('cd_root_cm', 'sqrt(CD) (cm)'),
    ('enc_ms', 'Encode (ms)'),
    ('dec_ms', 'Decode (ms)'),
    ('project_ms', 'Projection, 1 thread (ms)'),
    ('project_par_ms', 'Projection, parallel (ms)'),
]


def bpp_label(bpp: int) -> str:
    if bpp == FLOAT_BPP:
        return 'float32'
    if bpp == RAW_BPP:
        return 'raw cloud'
    return f"{bpp} bpp"


def resolution_label(cols: int, rows: int) -> str:
    return 'raw' if cols == 0 else f"{cols}x{rows}"


def rows_to_frame(rows: List[BenchRow]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in rows], columns=BenchRow.columns())


def write_csv(rows: List[BenchRow], path: PathLike) -> Path:
    """Header row once, one record per BenchRow, sweep order"""
    path = Path(path)
    rows_to_frame(rows).to_csv(path, index=False)
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def read_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path)


def group_means(df: pd.DataFrame) -> pd.DataFrame:
    """Per (cols, rows, bpp, codec) mean of every numeric column, sweep order kept"""
    numeric = [c for c in df.columns if c not in GROUP_KEYS and pd.api.types.is_numeric_dtype(df[c])]
    return df.groupby(GROUP_KEYS, sort=False)[numeric].mean().reset_index()


def summary_table(df: pd.DataFrame, bpp: int = 8, codec: str = 'lz77') -> pd.DataFrame:
    """Metrics as rows, resolutions as columns (widest grid first)"""
    means = group_means(df)
    subset = means[(means['bpp'] == bpp) & (means['codec'] == codec)]
    subset = subset.sort_values(['cols', 'rows'], ascending=False)
    labels = [resolution_label(c, r) for c, r in zip(subset['cols'], subset['rows'])]
    table = pd.DataFrame(
        [subset[metric].to_numpy() for metric, _ in SUMMARY_METRICS],
        index=[label for _, label in SUMMARY_METRICS],
        columns=labels,
    )
    return table


def summary_tables(df: pd.DataFrame) -> Dict[Tuple[int, str], pd.DataFrame]:
    keys = df[['bpp', 'codec']].drop_duplicates().itertuples(index=False, name=None)
    return {(int(bpp), codec): summary_table(df, int(bpp), codec) for bpp, codec in keys}


def reference_frame(checks: List[ReferenceCheck]) -> pd.DataFrame:
    return pd.DataFrame([{
        'resolution': f"{c.resolution[0]}x{c.resolution[1]}",
        'column': c.column,
        'expected': c.expected,
        'tolerance': c.tolerance,
        'measured': c.measured,
        'status': c.status,
    } for c in checks])


def write_xlsx(rows: List[BenchRow], path: PathLike, checks: Optional[List[ReferenceCheck]] = None,
               metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Workbook with the raw rows, one summary sheet per (bpp, codec) and the reference check"""
    path = Path(path)
    df = rows_to_frame(rows)
    with pd.ExcelWriter(path, engine='openpyxl') as writer:
        df.to_excel(writer, sheet_name='rows', index=False)
        for (bpp, codec), table in summary_tables(df).items():
            suffix = 'raw' if bpp == RAW_BPP else f"{bpp}bpp"
            table.to_excel(writer, sheet_name=f"summary_{codec}_{suffix}"[:31])
        if checks:
            reference_frame(checks).to_excel(writer, sheet_name='reference', index=False)
        if metadata:
            flat = {k: (v if not isinstance(v, (dict, list)) else str(v)) for k, v in metadata.items()}
            pd.DataFrame(list(flat.items()), columns=['key', 'value']).to_excel(
                writer, sheet_name='metadata', index=False)
    logger.info(f"Wrote workbook {path}")
    return path


def format_summary(table: pd.DataFrame) -> str:
    return table.to_string(float_format=lambda v: f"{v:.4g}")
