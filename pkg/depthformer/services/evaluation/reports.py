"""
Report writers: key/value records, aligned text tables and the markdown
ablation report.
"""
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from depthformer.config import settings
from depthformer.schemas.evaluation import MetricReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Row = Tuple[str, MetricReport]

TABLE_COLUMNS = ["d1", "d2", "d3", "abs_rel", "sq_rel", "rmse", "rmse_log", "log10", "silog", "irmse"]
ABLATION_TEMPLATE = "ablation_report.md.j2"


def _slug(label: str) -> str:
    return label.replace(" ", "_")


def report_records(rows: Sequence[Row]) -> List[str]:
    """
    One `bin metric value` line per metric and row.

    Values use repr, so records read back to the exact floats.
    """
    lines = []
    for label, report in rows:
        for name in MetricReport.metric_names():
            lines.append(f"{_slug(label)} {name} {getattr(report, name)!r}")
        lines.append(f"{_slug(label)} n_pixels {report.n_pixels}")
    return lines


def parse_records(lines: Sequence[str]) -> Dict[str, Dict[str, float]]:
    """Inverse of report_records: label → metric → value."""
    parsed: Dict[str, Dict[str, float]] = {}
    for line in lines:
        if not line.strip():
            continue
        label, name, value = line.split()
        parsed.setdefault(label, {})[name] = float(value)
    return parsed


def format_table(rows: Sequence[Row], columns: Sequence[str] = TABLE_COLUMNS) -> str:
    """
    Human-readable table with right-aligned columns.

    Args:
        rows: (label, report) pairs
        columns: Metric names to show

    Returns:
        str: Table text, one line per row after the header
    """
    header = ["bin"] + list(columns) + ["pixels"]
    body = [
        [label] + [f"{getattr(report, c):.4f}" for c in columns] + [str(report.n_pixels)]
        for label, report in rows
    ]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = []
    for r in [header] + body:
        cells = [r[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def write_reports(out_dir: PathLike, rows: Sequence[Row], stem: str = "report") -> Tuple[Path, Path]:
    """
    Write `<stem>.txt` records and `<stem>_table.txt`.

    Returns:
        Tuple[Path, Path]: Paths of the records and the table
    """
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    records_path = out_dir / f"{stem}.txt"
    table_path = out_dir / f"{stem}_table.txt"
    records_path.write_text("\n".join(report_records(rows)) + "\n")
    table_path.write_text(format_table(rows) + "\n")
    logger.info(f"Wrote {len(rows)} report rows to {records_path} and {table_path}")
    return records_path, table_path


def render_ablation_report(
    rows: Sequence[Row],
    context: Optional[Dict[str, Any]] = None,
    templates_dir: Optional[PathLike] = None,
) -> str:
    """
    Render the markdown ablation summary.

    Args:
        rows: (variant label, overall report) in table order
        context: Extra template values (run settings, scene counts)
        templates_dir: Directory holding the template (default: settings.TEMPLATES_DIR)

    Returns:
        str: Markdown text
    """
    env = Environment(
        loader=FileSystemLoader(str(templates_dir or settings.TEMPLATES_DIR)),
        undefined=StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )
    template = env.get_template(ABLATION_TEMPLATE)
    best = max(rows, key=lambda r: r[1].d1)[0] if rows else None
    return template.render(
        rows=[{"label": label, "report": report} for label, report in rows],
        columns=TABLE_COLUMNS,
        best=best,
        context=context or {},
    )


def write_ablation_report(out_dir: PathLike, rows: Sequence[Row], context: Optional[Dict[str, Any]] = None,
                          templates_dir: Optional[PathLike] = None) -> Path:
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    path = out_dir / "ablation.md"
    path.write_text(render_ablation_report(rows, context, templates_dir))
    write_reports(out_dir, rows, stem="ablation")
    logger.info(f"Archived ablation report at {path}")
    return path
