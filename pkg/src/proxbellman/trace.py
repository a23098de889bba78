"""
Per-step training trace with a sliding tail window for progress logging
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

CSV_FIELDS = ["step", "bellman_residual", "c_value", "lambda", "eval_return", "monotonicity_errors"]


@dataclass
class TraceRow:
    """One optimizer step; evaluation fields are filled every eval_every steps"""
    step: int
    bellman_residual: float
    c_value: float
    lam: float
    eval_return: Optional[float] = None
    monotonicity_errors: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "bellman_residual": self.bellman_residual,
            "c_value": self.c_value,
            "lambda": self.lam,
            "eval_return": self.eval_return,
            "monotonicity_errors": self.monotonicity_errors,
        }

    def to_log_str(self) -> str:
        text = f"step {self.step}: residual={self.bellman_residual:.4g} C={self.c_value:.3g} lambda={self.lam:.4g}"
        if self.eval_return is not None:
            text += f" return={self.eval_return:.4f} errors={self.monotonicity_errors}"
        return text


@dataclass
class TrainingTrace:
    rows: List[TraceRow] = field(default_factory=list)
    window_size: int = 5

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[TraceRow]:
        return iter(self.rows)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrainingTrace):
            return NotImplemented
        return [r.to_dict() for r in self.rows] == [r.to_dict() for r in other.rows]

    def tail(self) -> List[TraceRow]:
        return self.rows[-self.window_size:]

    @property
    def last(self) -> Optional[TraceRow]:
        return self.rows[-1] if self.rows else None

    def column(self, name: str) -> List[Any]:
        return [row.to_dict()[name] for row in self.rows]

    def evaluated(self) -> List[TraceRow]:
        return [row for row in self.rows if row.eval_return is not None]

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_FIELDS, lineterminator="\n")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: ("" if v is None else repr(float(v)) if isinstance(v, float) else v)
                                 for k, v in row.to_dict().items()})
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "TrainingTrace":
        trace = cls()
        with open(path, "r", newline="", encoding="utf-8") as f:
            for raw in csv.DictReader(f):
                opt = lambda key, cast: cast(raw[key]) if raw[key] != "" else None
                trace.append(TraceRow(
                    step=int(raw["step"]),
                    bellman_residual=float(raw["bellman_residual"]),
                    c_value=float(raw["c_value"]),
                    lam=float(raw["lambda"]),
                    eval_return=opt("eval_return", float),
                    monotonicity_errors=opt("monotonicity_errors", int),
                ))
        return trace
