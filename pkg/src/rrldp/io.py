"""Dataset ingestion, report serialization and run manifests."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EmptyDataset, MissingColumn, UnknownCode
from .mechanisms import Population
from .simulation import Cell, SimulationReport

SCHEMA = "rr-ldp/1"
REPORT_COLUMNS = (
    "mechanism", "epsilon", "var_theoretical", "var_empirical", "bias", "R", "N", "pi_A", "p2",
)
OUTPUT_DIR_ENV = "RRLDP_OUTPUT_DIR"
# manifest params that affect how a run executes but never what it outputs
EXECUTION_PARAMS = ("argv", "workers")

# IPUMS HCOVANY: 1 = no coverage (sensitive), 2 = covered
HCOVANY_CODES = {"1": 1, "2": 0}
HCOVANY_PI_A = 0.0778


@dataclass(frozen=True)
class DatasetCoding:
    """Which column holds the attribute and how its codes map to the sensitive bit."""

    column: str | int = "HCOVANY"
    mapping: dict = field(default_factory=lambda: dict(HCOVANY_CODES))


def ingest_csv(path, coding: DatasetCoding = DatasetCoding()) -> Population:
    """Read one sensitive bit per data row, in file order.

    An integer ``coding.column`` selects by position; a string by header name.
    Every code must appear in ``coding.mapping``.
    """
    mapping = {str(k).strip(): int(v) for k, v in coding.mapping.items()}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDataset(f"{path} is empty")
        header = [h.strip() for h in header]
        if isinstance(coding.column, int):
            if not 0 <= coding.column < len(header):
                raise MissingColumn(f"column index {coding.column} out of range for {path}")
            col = coding.column
        else:
            if coding.column not in header:
                raise MissingColumn(f"column {coding.column!r} not in header of {path}")
            col = header.index(coding.column)
        bits = []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            value = row[col].strip() if col < len(row) else ""
            try:
                bits.append(mapping[value])
            except KeyError:
                raise UnknownCode(row_no, value) from None
    if not bits:
        raise EmptyDataset(f"{path} has no data rows")
    return Population(np.asarray(bits, dtype=np.int8))


def synthesize_hcovany(path, n: int, seed: int, pi_a: float = HCOVANY_PI_A, column: str = "HCOVANY") -> Population:
    """Write an HCOVANY-style CSV with ``round(n * pi_a)`` uninsured rows, shuffled.

    Stands in for the IPUMS extract, which cannot be redistributed.
    """
    rng = np.random.default_rng(seed)
    bits = np.zeros(n, dtype=np.int8)
    bits[: round(n * pi_a)] = 1
    rng.shuffle(bits)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"SERIAL,{column}\r\n")
        fh.writelines(f"{i + 1},{1 if b else 2}\r\n" for i, b in enumerate(bits.tolist()))
    return Population(bits)


# --- reports ----------------------------------------------------------------

def _row(cell: Cell) -> dict:
    return {
        "mechanism": cell.mechanism,
        "epsilon": cell.epsilon,
        "var_theoretical": cell.var_theoretical,
        "var_empirical": cell.var_empirical,
        "bias": cell.bias,
        "R": cell.replications,
        "N": cell.n,
        "pi_A": cell.pi_a,
        "p2": cell.p2,
    }


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to regenerate an output.

    The timestamp is informational and never part of the reproduced payload.
    """

    command: str
    params: dict
    seed: int | None
    version: str = __version__
    timestamp: str = ""

    @classmethod
    def create(cls, command: str, params: dict, seed: int | None) -> RunManifest:
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return cls(command, params, seed, __version__, stamp)

    def to_json(self) -> str:
        return json.dumps({"schema": SCHEMA, **asdict(self)}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> RunManifest:
        data = json.loads(text)
        data.pop("schema", None)
        return cls(**data)


def emit_report(report: SimulationReport, fmt: str = "csv", manifest: RunManifest | None = None) -> bytes:
    """Serialize a report with a fixed column order.

    JSON embeds the manifest minus its timestamp and execution-only
    params, so identical runs give identical bytes at any parallelism.
    """
    rows = [_row(c) for c in report.cells]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in REPORT_COLUMNS])
        return buf.getvalue().encode("utf-8")
    if fmt == "json":
        doc = {"schema": SCHEMA, "columns": list(REPORT_COLUMNS), "rows": rows}
        if manifest is not None:
            m = asdict(manifest)
            m.pop("timestamp")
            m["params"] = {k: v for k, v in m["params"].items() if k not in EXECUTION_PARAMS}
            doc["manifest"] = m
        return (json.dumps(doc, indent=2, sort_keys=False) + "\n").encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")


def _parse(key: str, text: str):
    if text == "":
        return None
    if key == "mechanism":
        return text
    if key in ("R", "N"):
        return int(text)
    return float(text)


def read_report(data: bytes, fmt: str = "csv") -> list[dict]:
    """Rows of an emitted report, with the original Python types."""
    if fmt == "json":
        doc = json.loads(data)
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"unsupported report schema {doc.get('schema')!r}")
        return doc["rows"]
    reader = csv.DictReader(io.StringIO(data.decode("utf-8")))
    return [{k: _parse(k, row[k]) for k in REPORT_COLUMNS} for row in reader]


def resolve_output(path: str) -> Path:
    """Relative output paths land under ``$RRLDP_OUTPUT_DIR`` when it is set."""
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p
