"""Report files: per-epoch curves (CSV), the results-table row (JSON), mask bar data."""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

from pydantic import ValidationError

from src.exceptions import ReportWriteError
from src.repositories.checkpoint import STAGE_DIRS
from src.schemas.sparsity.groups import ChannelMask
from src.schemas.training.stage import EpochRow, StageReport, SummaryRow
from src.sparsity import channel_sparsity

logger = logging.getLogger(__name__)

REPORT_CSV = "report.csv"
SUMMARY_JSON = "summary.json"
MASK_JSON = "mask.json"
TABLE_JSON = "table.json"
CSV_COLUMNS: List[str] = list(EpochRow.model_fields)


def _dumps(payload: Any) -> str:
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        logger.error(f"Could not write {path}: {e}")
        raise ReportWriteError(f"Could not write {path}: {e}") from e
    return path


def render_csv(rows: Sequence[EpochRow]) -> str:
    """One line per epoch; diagnostics a method does not produce are left empty."""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: "" if value is None else value for key, value in row.model_dump().items()})
    return buffer.getvalue()


def summary_payload(report: StageReport) -> Dict[str, Any]:
    return {
        "stage": report.stage.value,
        "method": report.method.value,
        "summary": report.summary.model_dump(by_alias=True),
        "channel_bars": list(report.channel_bars),
    }


def emit_report(report: StageReport, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write report.csv and summary.json; the same report always yields the same bytes.

    Raises:
        ReportWriteError: if the directory or files cannot be written.
    """
    out_dir = Path(out_dir)
    paths = {
        "csv": _write(out_dir / REPORT_CSV, render_csv(report.rows)),
        "summary": _write(out_dir / SUMMARY_JSON, _dumps(summary_payload(report))),
    }
    logger.info(f"Wrote stage {report.stage.value} report ({len(report.rows)} epochs) to {out_dir}")
    return paths


def write_mask(mask: ChannelMask, out_dir: Union[str, Path]) -> Path:
    payload = {
        "bits": list(mask.bits),
        "sparsity": channel_sparsity(mask),
        "channel_bars": list(mask.bits),
    }
    return _write(Path(out_dir) / MASK_JSON, _dumps(payload))


def write_table(summaries: Sequence[SummaryRow], out_dir: Union[str, Path]) -> Path:
    """All final rows of a run, in the results-table column set."""
    rows = [summary.model_dump(by_alias=True) for summary in summaries]
    return _write(Path(out_dir) / TABLE_JSON, _dumps(rows))


def collect_summaries(run_dir: Union[str, Path]) -> List[SummaryRow]:
    """Summary rows of every stage directory under ``run_dir``, in stage order."""
    rows: List[SummaryRow] = []
    for stage_dir in STAGE_DIRS.values():
        path = Path(run_dir) / stage_dir / SUMMARY_JSON
        if not path.is_file():
            continue
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            rows.append(SummaryRow.model_validate(payload["summary"]))
        except (OSError, json.JSONDecodeError, KeyError, ValidationError) as e:
            logger.warning(f"Skipping unreadable summary {path}: {e}")
    return rows


def format_table(summaries: Sequence[SummaryRow]) -> str:
    """Plain-text table with the columns Model, β, λ, μ, Accuracy, Ch. Sparsity."""
    header = ["Model", "β", "λ", "μ", "Accuracy", "Ch. Sparsity"]
    body = [
        [row.label, f"{row.beta:g}", f"{row.lam:g}", f"{row.mu:g}", f"{row.accuracy:.2f}", f"{row.channel_sparsity:.1f}"]
        for row in summaries
    ]
    widths = [max(len(cells[i]) for cells in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(cells, widths)).rstrip() for cells in [header, *body]]
    return "\n".join(lines)
