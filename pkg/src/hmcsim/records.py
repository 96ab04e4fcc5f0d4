"""Per-run aggregate record with a fixed CSV column set."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable

NAN = float("nan")


@dataclass(frozen=True)
class ExperimentRecord:
    experiment: str = ""
    point: int = 0
    label: str = ""
    device: str = ""
    cooling: str = ""
    request_type: str = "ro"
    payload: int = 128
    ports: int = 9
    addressing: str = "random"
    mask: int = 0
    anti_mask: int = 0
    seed: int = 0
    duration_s: float = 20.0
    accesses: int = 0
    raw_bytes: int = 0
    bandwidth_gbs: float = 0.0
    mrps: float = 0.0
    latency_min_ns: float = NAN
    latency_avg_ns: float = NAN
    latency_max_ns: float = NAN
    residence_ns: float = NAN
    admitted_rate: float = NAN
    littles_bytes: float = NAN
    temperature_c: float = NAN
    power_w: float = NAN
    cooling_power_w: float = NAN
    failed: bool = False
    vault_utilization: tuple = ()


COLUMNS = tuple(f.name for f in dataclasses.fields(ExperimentRecord))
_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentRecord)}


def _emit(name: str, value) -> str:
    if name in ("mask", "anti_mask"):
        return f"{value:#011x}"
    if name == "vault_utilization":
        return ";".join(repr(float(u)) for u in value)
    if name == "failed":
        return "1" if value else "0"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def _parse(name: str, text: str):
    kind = _TYPES[name]
    if name in ("mask", "anti_mask"):
        return int(text, 16)
    if name == "vault_utilization":
        return tuple(float(u) for u in text.split(";")) if text else ()
    if kind == "bool":
        return text == "1"
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def to_row(record: ExperimentRecord) -> dict[str, str]:
    return {name: _emit(name, getattr(record, name)) for name in COLUMNS}


def from_row(row: dict[str, str]) -> ExperimentRecord:
    return ExperimentRecord(**{name: _parse(name, row[name]) for name in COLUMNS})


def write_csv(records: Iterable[ExperimentRecord], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(to_row(r))


def read_csv(fh) -> list[ExperimentRecord]:
    reader = csv.DictReader(fh)
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError("CSV columns do not match the record schema")
    return [from_row(row) for row in reader]


def dumps_csv(records: Iterable[ExperimentRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


def loads_csv(text: str) -> list[ExperimentRecord]:
    return read_csv(io.StringIO(text))


def to_json(record: ExperimentRecord) -> str:
    data = dataclasses.asdict(record)
    data["vault_utilization"] = list(record.vault_utilization)
    return json.dumps(data)


def from_json(text: str) -> ExperimentRecord:
    data = json.loads(text)
    data["vault_utilization"] = tuple(data["vault_utilization"])
    return ExperimentRecord(**data)
