"""
Experiment records, seed aggregation and report tables

Outputs are byte-stable for fixed records: groups keep first-appearance order, numbers use
fixed precision and wallclock never enters a table.
"""

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ReportError
from .trace import CSV_FIELDS, TrainingTrace

logger = logging.getLogger(__name__)

METRICS = ["return_norm", "regret_norm", "monotonicity_errors", "residual_at_convergence", "wallclock_seconds"]
NO_VARIANT = "-"
OURS = "constraint_aware"


@dataclass
class MetricsRecord:
    """One trained cell: (agent, variant, fraction, seed)"""
    agent: str
    variant: str
    seed: int
    return_norm: float
    regret_norm: float
    monotonicity_errors: int
    residual_at_convergence: float
    wallclock_seconds: float
    config_hash: str
    fraction: float = 1.0
    status: str = "ok"
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def cell(self) -> str:
        variant = "" if self.variant == NO_VARIANT else f"-{self.variant}"
        return f"{self.agent}{variant}_f{self.fraction:g}_s{self.seed}"

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def stable_dict(self) -> Dict[str, object]:
        """Everything except wallclock (which is the only nondeterministic field)"""
        out = self.to_dict()
        out.pop("wallclock_seconds")
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "MetricsRecord":
        return cls(**data)


def records_digest(records: Iterable[MetricsRecord]) -> str:
    payload = json.dumps([r.stable_dict() for r in records], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def write_records(records: Sequence[MetricsRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    return path


def read_records(path: Union[str, Path]) -> List[MetricsRecord]:
    with open(path, "r", encoding="utf-8") as f:
        return [MetricsRecord.from_dict(json.loads(line)) for line in f if line.strip()]


# ==============================================================================
# AGGREGATION
# ==============================================================================

@dataclass
class AggregateRow:
    agent: str
    variant: str
    fraction: float
    n: int
    n_failed: int
    stats: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.agent if self.variant == NO_VARIANT else f"{self.agent} ({self.variant})"

    def to_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "agent": self.agent, "variant": self.variant, "fraction": self.fraction,
            "n": self.n, "n_failed": self.n_failed,
        }
        for metric, (mean, std) in self.stats.items():
            out[f"{metric}_mean"] = mean
            out[f"{metric}_std"] = std
        return out


def _mean_std(values: List[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    std = float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0
    return float(np.mean(arr)), std


def aggregate(records: Sequence[MetricsRecord]) -> List[AggregateRow]:
    """Mean and sample standard deviation over seeds per (agent, variant, fraction)"""
    if not records:
        raise ReportError("no records to aggregate")
    groups: Dict[Tuple[str, str, float], List[MetricsRecord]] = {}
    for record in records:
        groups.setdefault((record.agent, record.variant, record.fraction), []).append(record)
    rows = []
    for (agent, variant, fraction), members in groups.items():
        ok = [r for r in members if r.ok]
        row = AggregateRow(agent, variant, fraction, n=len(ok), n_failed=len(members) - len(ok))
        if ok:
            row.stats = {m: _mean_std([getattr(r, m) for r in ok]) for m in METRICS}
        rows.append(row)
    if not any(row.n for row in rows):
        raise ReportError("every record failed; nothing to aggregate")
    return rows


def write_aggregate(rows: Sequence[AggregateRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([row.to_dict() for row in rows], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ==============================================================================
# TABLES
# ==============================================================================

# (header, metric, decimals)
PERFORMANCE_COLUMNS = [
    ("Return ↑", "return_norm", 3),
    ("Normalized regret ↓", "regret_norm", 3),
    ("Monotonicity errors ↓", "monotonicity_errors", 1),
]
ABLATION_COLUMNS = [
    ("Return ↑", "return_norm", 3),
    ("Monotonicity errors ↓", "monotonicity_errors", 1),
    ("Residual at conv. ↓", "residual_at_convergence", 3),
]


def _cell(row: AggregateRow, metric: str, decimals: int) -> str:
    if not row.n:
        return f"failed ({row.n_failed})"
    mean, std = row.stats[metric]
    return f"{mean:.{decimals}f} ± {std:.{decimals}f}"


def _top_fraction(rows: Sequence[AggregateRow]) -> float:
    return max(row.fraction for row in rows)


def performance_rows(rows: Sequence[AggregateRow]) -> List[AggregateRow]:
    top = _top_fraction(rows)
    return [r for r in rows if r.fraction == top and (r.agent != OURS or r.variant == "full")]


def ablation_rows(rows: Sequence[AggregateRow]) -> List[AggregateRow]:
    top = _top_fraction(rows)
    return [r for r in rows if r.fraction == top and r.agent == OURS]


def _markdown(first_header: str, columns, rows: Sequence[AggregateRow], label) -> str:
    headers = [first_header] + [c[0] for c in columns]
    lines = ["| " + " | ".join(headers) + " |", "|" + "|".join("---" for _ in headers) + "|"]
    for row in rows:
        cells = [label(row)] + [_cell(row, metric, dec) for _, metric, dec in columns]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _csv(columns, rows: Sequence[AggregateRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["agent", "variant", "fraction", "n", "n_failed"]
    for _, metric, _ in columns:
        header += [f"{metric}_mean", f"{metric}_std"]
    writer.writerow(header)
    for row in rows:
        line = [row.agent, row.variant, f"{row.fraction:g}", row.n, row.n_failed]
        for _, metric, _ in columns:
            mean, std = row.stats.get(metric, (float("nan"), float("nan")))
            line += [repr(float(mean)), repr(float(std))]
        writer.writerow(line)
    return buf.getvalue()


def subsample_table(rows: Sequence[AggregateRow], fmt: str) -> str:
    """Return and monotonicity errors per agent across data fractions"""
    fractions = sorted({r.fraction for r in rows}, reverse=True)
    by_key: Dict[Tuple[str, str], Dict[float, AggregateRow]] = {}
    for row in rows:
        by_key.setdefault((row.agent, row.variant), {})[row.fraction] = row
    if fmt == "markdown":
        headers = ["Algorithm"]
        for f in fractions:
            headers += [f"Return @ {f:g}", f"Errors @ {f:g}"]
        lines = ["| " + " | ".join(headers) + " |", "|" + "|".join("---" for _ in headers) + "|"]
        for cells_by_fraction in by_key.values():
            any_row = next(iter(cells_by_fraction.values()))
            cells = [any_row.label]
            for f in fractions:
                row = cells_by_fraction.get(f)
                cells += ["" if row is None else _cell(row, "return_norm", 3),
                          "" if row is None else _cell(row, "monotonicity_errors", 1)]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
    columns = [("", "return_norm", 3), ("", "monotonicity_errors", 1)]
    return _csv(columns, [row for group in by_key.values() for row in group.values()])


def emit_report(records: Sequence[MetricsRecord], fmt: str = "markdown",
                out_dir: Union[str, Path] = ".",
                traces: Optional[Mapping[str, TrainingTrace]] = None) -> List[Path]:
    """Performance, ablation and sub-sampling tables plus per-metric plot data"""
    if fmt not in ("markdown", "csv"):
        raise ReportError(f"unknown report format '{fmt}'")
    rows = aggregate(records)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = "md" if fmt == "markdown" else "csv"
    written: List[Path] = []

    tables = {
        "performance": (performance_rows(rows), PERFORMANCE_COLUMNS, "Algorithm", lambda r: r.label),
        "ablation": (ablation_rows(rows), ABLATION_COLUMNS, "Variant", lambda r: r.variant),
    }
    for name, (selected, columns, first, label) in tables.items():
        if not selected:
            continue
        text = _markdown(first, columns, selected, label) if fmt == "markdown" else _csv(columns, selected)
        written.append(_write(out_dir / f"{name}.{ext}", text))
    if len({r.fraction for r in rows}) > 1:
        written.append(_write(out_dir / f"subsample.{ext}", subsample_table(rows, fmt)))
    if not written:
        raise ReportError("records produced no table rows")
    if traces:
        written.extend(emit_plot_data(traces, out_dir))
    logger.info(f"[REPORT] wrote {len(written)} files to {out_dir}")
    return written


def _write(path: Path, text: str) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return path


# ==============================================================================
# PLOT DATA
# ==============================================================================

def emit_plot_data(traces: Mapping[str, TrainingTrace], out_dir: Union[str, Path]) -> List[Path]:
    """One CSV per trace metric: step column plus one column per run (sorted by name)"""
    out_dir = Path(out_dir)
    names = sorted(traces)
    written = []
    for metric in CSV_FIELDS[1:]:
        table: Dict[int, Dict[str, object]] = {}
        for name in names:
            for row in traces[name]:
                value = row.to_dict()[metric]
                if value is not None:
                    table.setdefault(row.step, {})[name] = value
        if not table:
            continue
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step"] + names)
        for step in sorted(table):
            writer.writerow([step] + [_plot_value(table[step].get(name)) for name in names])
        written.append(_write(out_dir / f"plot_{metric}.csv", buf.getvalue()))
    return written


def _plot_value(value) -> str:
    if value is None:
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)
