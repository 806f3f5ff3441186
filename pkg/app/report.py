"""
Report emission and loading. CSV columns are fixed; JSON carries the rows and the summary block.
"""
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import pandas as pd

from app.models import ExperimentSummary, ReportDocument, TrialRecord

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "env_id", "algorithm", "seed", "iteration", "simple_regret",
    "joint_score", "pr1", "pr2", "wallclock_ms",
]


class ReportError(Exception):
    """Raised when a report cannot be written or read"""
    pass


def records_frame(records: List[TrialRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.model_dump() for record in records], columns=CSV_COLUMNS)


def emit_report(records: List[TrialRecord], fmt: str, path, summary: Optional[ExperimentSummary] = None) -> None:
    """
    Write `records` as CSV or JSON.

    :raises ReportError: on empty records, an unknown format, or an unwritable path
    """
    if not records:
        raise ReportError("No records to report")
    if fmt not in ("csv", "json"):
        raise ReportError(f"Unknown report format: {fmt}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            # 17 significant digits parse back to the same doubles
            records_frame(records).to_csv(path, index=False, na_rep="", float_format="%.17g", lineterminator="\n")
        else:
            path.write_text(ReportDocument(records=records, summary=summary).model_dump_json(indent=2))
    except OSError as e:
        logger.error(f"Cannot write report to {path}: {str(e)}")
        raise ReportError(f"Cannot write report to {path}: {str(e)}")
    logger.info(f"Wrote {len(records)} records to {path}")


def load_csv_records(path) -> List[TrialRecord]:
    try:
        frame = pd.read_csv(path, float_precision="round_trip", dtype={"env_id": str, "algorithm": str})
    except (OSError, pd.errors.ParserError) as e:
        raise ReportError(f"Cannot read records from {path}: {str(e)}")
    if list(frame.columns) != CSV_COLUMNS:
        raise ReportError(f"Unexpected CSV columns in {path}: {list(frame.columns)}")
    frame = frame.astype(object).where(frame.notna(), None)
    return [TrialRecord(**row) for row in frame.to_dict(orient="records")]


def load_json_report(path) -> Tuple[List[TrialRecord], Optional[ExperimentSummary]]:
    try:
        document = ReportDocument.model_validate_json(Path(path).read_text())
    except OSError as e:
        raise ReportError(f"Cannot read report {path}: {str(e)}")
    return document.records, document.summary
