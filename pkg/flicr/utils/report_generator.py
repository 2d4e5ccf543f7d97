"""Sweep report artifacts: PNG charts (matplotlib) and a PDF summary (reportlab)."""
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import matplotlib
import matplotlib.pyplot as plt
import pandas as pd
from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4, landscape
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Image, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from flicr.utils.bench_runner import RAW_BPP, BenchRow, ReferenceCheck
from flicr.utils.sweep_tables import bpp_label, group_means, reference_frame, rows_to_frame, summary_tables

logger = logging.getLogger(__name__)

matplotlib.use('Agg')

PathLike = Union[str, os.PathLike]

ENCODE_STAGES = ['project_ms', 'quantize_ms', 'serialize_ms', 'compress_ms']
DECODE_STAGES = ['decompress_ms', 'deserialize_ms', 'dequantize_ms', 'reconstruct_ms']


def plot_ratio_vs_resolution(df: pd.DataFrame, path: PathLike) -> Path:
    """One line per (codec, bpp): mean compression ratio against grid columns.

    Raw-cloud baselines are drawn as horizontal dashed lines.
    """
    means = group_means(df)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    raw = means[means['bpp'] == RAW_BPP]
    for (codec, bpp), group in means[means['bpp'] != RAW_BPP].groupby(['codec', 'bpp'], sort=False):
        group = group.sort_values('cols', ascending=False)
        label = f"{codec} {bpp_label(bpp)}"
        ax.plot(group['cols'].astype(str) + 'x' + group['rows'].astype(str), group['compression_ratio'],
                marker='o', label=label)
    for codec, ratio in zip(raw['codec'], raw['compression_ratio']):
        ax.axhline(ratio, linestyle='--', linewidth=1, label=f"{codec} raw cloud")
    ax.set_xlabel('Range image resolution')
    ax.set_ylabel('Compression ratio')
    ax.set_yscale('log')
    ax.grid(True, which='both', alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_latency_breakdown(df: pd.DataFrame, path: PathLike, codec: Optional[str] = None) -> Path:
    """Stacked encode and decode stage times per resolution"""
    means = group_means(df)
    if codec is None and not means.empty:
        codec = means['codec'].iloc[0]
    subset = means[(means['codec'] == codec) & ~means['bpp'].isin([32, RAW_BPP])].sort_values('cols', ascending=False)
    labels = [f"{c}x{r}/{b}" for c, r, b in zip(subset['cols'], subset['rows'], subset['bpp'])]

    fig, (enc_ax, dec_ax) = plt.subplots(1, 2, figsize=(11, 4.5), sharey=False)
    for ax, stages, title in ((enc_ax, ENCODE_STAGES, 'Encode'), (dec_ax, DECODE_STAGES, 'Decode')):
        bottom = [0.0] * len(subset)
        for stage in stages:
            values = subset[stage].tolist()
            ax.bar(labels, values, bottom=bottom, label=stage.replace('_ms', ''))
            bottom = [b + v for b, v in zip(bottom, values)]
        ax.set_title(f"{title} latency ({codec})")
        ax.set_ylabel('ms')
        ax.tick_params(axis='x', rotation=45)
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_plots(rows: List[BenchRow], directory: PathLike) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    df = rows_to_frame(rows)
    paths = [plot_ratio_vs_resolution(df, directory / 'ratio_vs_resolution.png')]
    for codec in df['codec'].drop_duplicates():
        paths.append(plot_latency_breakdown(df, directory / f"latency_breakdown_{codec}.png", codec))
    logger.info(f"Wrote {len(paths)} plots to {directory}")
    return paths


class SweepReportGenerator:
    def __init__(self):
        self.styles = getSampleStyleSheet()
        self._setup_custom_styles()

    def _setup_custom_styles(self):
        self.styles.add(ParagraphStyle(
            name='ReportTitle',
            parent=self.styles['Heading1'],
            fontSize=18,
            spaceAfter=12,
            alignment=TA_CENTER
        ))

        self.styles.add(ParagraphStyle(
            name='ReportHeading',
            parent=self.styles['Heading2'],
            fontSize=14,
            spaceAfter=8,
            spaceBefore=12
        ))

        self.styles.add(ParagraphStyle(
            name='ReportNormal',
            parent=self.styles['Normal'],
            fontSize=10,
            spaceAfter=6,
        ))

    @staticmethod
    def _format_cell(value: Any) -> str:
        if value is None or (isinstance(value, float) and pd.isna(value)):
            return '-'
        if isinstance(value, float):
            return f"{value:.4g}"
        return str(value)

    def _create_table(self, frame: pd.DataFrame, index_label: Optional[str] = None) -> Table:
        header = ([index_label or ''] if index_label is not None else []) + [str(c) for c in frame.columns]
        data = [header]
        for idx, record in frame.iterrows():
            cells = [self._format_cell(v) for v in record.tolist()]
            data.append(([str(idx)] if index_label is not None else []) + cells)

        table = Table(data, repeatRows=1)
        table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (-1, 0), colors.grey),
            ('TEXTCOLOR', (0, 0), (-1, 0), colors.whitesmoke),
            ('ALIGN', (0, 0), (-1, -1), 'CENTER'),
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('FONTSIZE', (0, 0), (-1, -1), 8),
            ('BOTTOMPADDING', (0, 0), (-1, 0), 6),
            ('BACKGROUND', (0, 1), (-1, -1), colors.beige),
            ('GRID', (0, 0), (-1, -1), 0.5, colors.black),
        ]))
        return table

    def create_report(self, rows: List[BenchRow], output_path: PathLike,
                      checks: Optional[List[ReferenceCheck]] = None,
                      plots: Optional[List[Path]] = None,
                      metadata: Optional[Dict[str, Any]] = None) -> Path:
        """Summary tables per (bpp, codec), reference check and charts in one PDF"""
        output_path = Path(output_path)
        doc = SimpleDocTemplate(str(output_path), pagesize=landscape(A4))
        story = [
            Paragraph("Range-image LiDAR codec sweep", self.styles['ReportTitle']),
            Paragraph(f"Generated {datetime.now().strftime('%Y-%m-%d %H:%M')}", self.styles['ReportNormal']),
        ]
        if metadata:
            inputs = metadata.get('inputs', [])
            story.append(Paragraph(
                f"Inputs: {len(inputs)} | repetitions: {metadata.get('repetitions', '-')} | "
                f"platform: {metadata.get('system', {}).get('platform', '-')}",
                self.styles['ReportNormal']))

        df = rows_to_frame(rows)
        for (bpp, codec), table in summary_tables(df).items():
            story.append(Paragraph(f"{codec.upper()}, {bpp_label(bpp)}", self.styles['ReportHeading']))
            story.append(self._create_table(table, index_label='metric'))

        if checks:
            story.append(Paragraph("Reference check", self.styles['ReportHeading']))
            story.append(self._create_table(reference_frame(checks)))

        for plot in plots or []:
            story.append(Spacer(1, 12))
            story.append(Image(str(plot), width=7 * inch, height=4.5 * inch, kind='proportional'))

        doc.build(story)
        logger.info(f"Wrote report {output_path}")
        return output_path
