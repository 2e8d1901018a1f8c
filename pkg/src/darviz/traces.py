"""Training-trace fault detection over per-epoch metric logs.

Rule catalog (each rule fires at most once, at its first detection):

  R1  non-finite loss                                  fatal
  R2  loss exceeds divergence_factor x best prior loss fatal
  R3  best loss unimproved by plateau_epsilon (relative)
      for `window` consecutive epochs                  warning
  R4  val_loss strictly rising while loss strictly
      falling for `window` consecutive steps           warning

Scanning is a single forward pass and stops at the first fatal finding,
so findings for a prefix of a trace are always a prefix of the findings
for the whole trace; the engine works unchanged over a live stream.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass


class TraceError(Exception):
    pass


class MalformedRow(TraceError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        msg = f"malformed row at line {line}"
        super().__init__(msg + (f": {detail}" if detail else ""))


class MissingColumn(TraceError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"required column {column!r} is missing")


class EmptyTrace(TraceError):
    def __init__(self):
        super().__init__("trace has no epochs")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    val_loss: float | None = None
    accuracy: float | None = None


@dataclass(frozen=True)
class TrainingTrace:
    rows: tuple[EpochRecord, ...]

    def __post_init__(self):
        if not isinstance(self.rows, tuple):
            object.__setattr__(self, "rows", tuple(self.rows))
        if not self.rows:
            raise EmptyTrace()
        for prev, cur in zip(self.rows, self.rows[1:]):
            if cur.epoch <= prev.epoch:
                raise ValueError(
                    f"epochs must strictly increase, got {prev.epoch} then {cur.epoch}"
                )

    def __len__(self) -> int:
        return len(self.rows)

    def prefix(self, k: int) -> "TrainingTrace":
        return TrainingTrace(self.rows[:k])


@dataclass(frozen=True)
class TraceFinding:
    rule_id: str
    epoch: int
    severity: str
    message: str

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "epoch": self.epoch,
            "severity": self.severity,
            "message": self.message,
        }


@dataclass(frozen=True)
class DetectorConfig:
    """Detection thresholds. The defaults are deliberately conservative."""

    divergence_factor: float = 10.0
    plateau_epsilon: float = 1e-3
    window: int = 5


_COLUMNS = ("epoch", "loss", "val_loss", "accuracy")


def _to_float(token: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise MalformedRow(line, f"not a number: {token!r}") from None


def _record(fields: dict, line: int, fallback_epoch: int) -> EpochRecord:
    if "loss" not in fields or fields["loss"] is None:
        raise MissingColumn("loss")
    epoch = fields.get("epoch")
    if epoch is None:
        epoch = fallback_epoch
    acc = fields.get("accuracy")
    if acc is not None and not (0.0 <= acc <= 1.0):
        raise MalformedRow(line, f"accuracy {acc} outside [0, 1]")
    return EpochRecord(
        epoch=int(epoch),
        loss=fields["loss"],
        val_loss=fields.get("val_loss"),
        accuracy=acc,
    )


def _parse_csv(text: str) -> list[EpochRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyTrace() from None
    header = [h.strip() for h in header]
    for col in header:
        if col not in _COLUMNS:
            raise MalformedRow(1, f"unknown column {col!r}")
    if "loss" not in header:
        raise MissingColumn("loss")

    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise MalformedRow(line_no, f"expected {len(header)} fields, got {len(row)}")
        fields: dict = {}
        for col, token in zip(header, row):
            token = token.strip()
            if token == "":
                fields[col] = None
            elif col == "epoch":
                try:
                    fields[col] = int(token)
                except ValueError:
                    raise MalformedRow(line_no, f"bad epoch {token!r}") from None
            else:
                fields[col] = _to_float(token, line_no)
        records.append(_record(fields, line_no, fallback_epoch=len(records) + 1))
    return records


def _parse_jsonlines(text: str) -> list[EpochRecord]:
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRow(line_no, str(exc)) from None
        if not isinstance(obj, dict):
            raise MalformedRow(line_no, "expected an object")
        for key in obj:
            if key not in _COLUMNS:
                raise MalformedRow(line_no, f"unknown key {key!r}")
        fields = {}
        for col in _COLUMNS:
            if col not in obj or obj[col] is None:
                continue
            value = obj[col]
            if isinstance(value, str):
                value = _to_float(value, line_no) if col != "epoch" else int(value)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise MalformedRow(line_no, f"bad value for {col!r}: {value!r}")
            fields[col] = float(value) if col != "epoch" else int(value)
        records.append(_record(fields, line_no, fallback_epoch=len(records) + 1))
    return records


def parse_trace(text: str, format: str = "csv") -> TrainingTrace:
    """Parse a metric log into a trace.

    CSV needs a header row naming columns from {epoch, loss, val_loss,
    accuracy}; nan/inf tokens are accepted as losses. JSON-lines takes
    one object per line with the same keys. When the epoch column is
    absent, rows are numbered from 1. Line numbers in errors are
    1-based and count the CSV header.
    """
    if format == "csv":
        records = _parse_csv(text)
    elif format in ("jsonlines", "jsonl"):
        records = _parse_jsonlines(text)
    else:
        raise ValueError(f"unknown trace format {format!r}")
    if not records:
        raise EmptyTrace()
    try:
        return TrainingTrace(tuple(records))
    except ValueError as exc:
        raise MalformedRow(0, str(exc)) from None


def lint_trace(trace: TrainingTrace, config: DetectorConfig | None = None) -> list[TraceFinding]:
    """Scan a trace against R1..R4; never raises on a valid trace.

    Output is ordered by epoch then rule id. A fatal finding ends the
    scan immediately, so nothing after it is reported.
    """
    cfg = config or DetectorConfig()
    findings: list[TraceFinding] = []
    fired: set[str] = set()

    best = math.inf
    stalled = 0
    gap_streak = 0
    prev_loss: float | None = None
    prev_val: float | None = None

    for row in trace.rows:
        loss = row.loss

        if not math.isfinite(loss):
            findings.append(
                TraceFinding("R1", row.epoch, "fatal", f"loss is {loss} at epoch {row.epoch}")
            )
            break

        if "R2" not in fired and math.isfinite(best) and loss > cfg.divergence_factor * best:
            findings.append(
                TraceFinding(
                    "R2",
                    row.epoch,
                    "fatal",
                    f"loss {loss:g} exceeds {cfg.divergence_factor:g}x the best "
                    f"loss {best:g}",
                )
            )
            break

        # R3: an epoch counts as stalled when it improves the running best
        # by less than plateau_epsilon relative to that best.
        if math.isfinite(best):
            threshold = cfg.plateau_epsilon * abs(best) if best != 0 else cfg.plateau_epsilon
            if best - loss < threshold:
                stalled += 1
            else:
                stalled = 0
            if "R3" not in fired and stalled >= cfg.window:
                fired.add("R3")
                findings.append(
                    TraceFinding(
                        "R3",
                        row.epoch,
                        "warning",
                        f"no relative improvement >= {cfg.plateau_epsilon:g} "
                        f"for {cfg.window} consecutive epochs",
                    )
                )
        best = min(best, loss)

        # R4: consecutive steps with val_loss rising and loss falling.
        if (
            row.val_loss is not None
            and prev_val is not None
            and prev_loss is not None
            and math.isfinite(row.val_loss)
            and row.val_loss > prev_val
            and loss < prev_loss
        ):
            gap_streak += 1
        else:
            gap_streak = 0
        if "R4" not in fired and gap_streak >= cfg.window:
            fired.add("R4")
            findings.append(
                TraceFinding(
                    "R4",
                    row.epoch,
                    "warning",
                    f"validation loss rose while training loss fell for "
                    f"{cfg.window} consecutive epochs",
                )
            )

        prev_loss = loss
        prev_val = row.val_loss

    return findings
