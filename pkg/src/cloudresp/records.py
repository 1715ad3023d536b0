"""Intervention record store: JSONL persistence with atomic rewrites, CSV export."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import CorruptFileError, NotFoundError


@dataclass
class InterventionRecord:
    record_id: int
    created_at: str            # UTC ISO-8601
    scenario: dict             # serialized InterventionScenario
    ood_flags: dict = field(default_factory=dict)   # channel -> bool
    tipping_summary: list = field(default_factory=list)  # [(site_id, at_risk)]
    notes: str = ""

    def to_dict(self):
        return {
            "record_id": self.record_id, "created_at": self.created_at,
            "scenario": self.scenario, "ood_flags": self.ood_flags,
            "tipping_summary": [list(t) for t in self.tipping_summary],
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            record_id=int(d["record_id"]), created_at=d["created_at"],
            scenario=d["scenario"], ood_flags=d.get("ood_flags", {}),
            tipping_summary=[tuple(t) for t in d.get("tipping_summary", [])],
            notes=d.get("notes", ""),
        )


CSV_HEADER = ["record_id", "created_at", "region", "duration_years",
              "perturbations", "lag_set", "ood_any", "sites_at_risk", "notes"]


def _region_cell(region: dict) -> str:
    kind = region.get("kind")
    if kind == "named":
        return region["name"]
    if kind == "latlon_box":
        return "box(" + ",".join(str(v) for v in region["box"]) + ")"
    return "polygon(" + ";".join(f"{p[0]},{p[1]}" for p in region.get("polygon", [])) + ")"


def record_csv_row(rec: InterventionRecord) -> list:
    sc = rec.scenario
    perts = ";".join(
        f"{cid}:{p['mode']}:{p['value']}" for cid, p in sorted(sc.get("perturbations", {}).items()))
    lag_set = sc.get("lag_set")
    lags = ";".join(str(l) for l in lag_set) if lag_set else "auto"
    sites = ";".join(sid for sid, risk in rec.tipping_summary if risk)
    return [
        str(rec.record_id), rec.created_at, _region_cell(sc.get("region", {})),
        str(sc.get("duration_years", "")), perts, lags,
        str(bool(any(rec.ood_flags.values()))).lower(), sites, rec.notes,
    ]


def export_csv(records) -> bytes:
    """RFC-4180-style CSV (CRLF line endings, quotes doubled when needed)."""
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writerow(CSV_HEADER)
    for rec in records:
        writer.writerow(record_csv_row(rec))
    return buf.getvalue().encode("utf-8")


class RecordStore:
    """Single-writer record store persisted as one JSON object per line.

    Every mutation rewrites the file through a temp file + rename, so a crash
    never leaves a half-written record visible on reload.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._records: list[InterventionRecord] = []
        self._next_id = 1
        if self.path.exists():
            self._load()

    def _load(self):
        records = []
        with open(self.path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(InterventionRecord.from_dict(json.loads(line)))
                except (json.JSONDecodeError, KeyError) as e:
                    raise CorruptFileError(
                        f"{self.path}:{lineno}: bad record line: {e}") from e
        self._records = records
        self._next_id = max((r.record_id for r in records), default=0) + 1

    def _persist(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".records-", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                for rec in self._records:
                    f.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self.path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def append_record(self, scenario: dict, ood_flags=None, tipping_summary=None,
                      notes: str = "") -> InterventionRecord:
        rec = InterventionRecord(
            record_id=self._next_id,
            created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            scenario=scenario, ood_flags=dict(ood_flags or {}),
            tipping_summary=list(tipping_summary or []), notes=notes,
        )
        self._records.append(rec)
        self._next_id += 1
        self._persist()
        return rec

    def list_records(self) -> list:
        return list(self._records)

    def delete_record(self, record_id: int):
        for i, rec in enumerate(self._records):
            if rec.record_id == record_id:
                del self._records[i]
                self._persist()
                return
        raise NotFoundError(f"no record with id {record_id}")

    def export_csv(self) -> bytes:
        return export_csv(self._records)
