"""Provenance headers and JSON/JSONL record streams.

JSON artifacts carry a ``header`` object; JSONL streams start with one
``{"_header": {...}}`` line.  The wall-clock timestamp lives only in the
header so that reruns differ in that single field.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone

HEADER_KEY = "_header"


def digest(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def make_header(config_digest: str, seed, timestamp: str | None = None) -> dict:
    return {
        "config_digest": config_digest,
        "seed": seed,
        "timestamp": timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def read_jsonl(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                if HEADER_KEY not in rec:
                    out.append(rec)
    return out


def read_jsonl_header(path) -> dict | None:
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                return rec.get(HEADER_KEY)
    return None


def write_jsonl(path, records, header: dict | None = None) -> None:
    with open(path, "w") as fh:
        if header is not None:
            fh.write(json.dumps({HEADER_KEY: header}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_json(path, payload: dict, header: dict | None = None) -> None:
    body = dict(payload)
    if header is not None:
        body = {"header": header, **body}
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")


def strip_timestamp(payload: dict) -> dict:
    """Copy of a JSON artifact without its header timestamp."""
    out = dict(payload)
    if isinstance(out.get("header"), dict):
        out["header"] = {k: v for k, v in out["header"].items() if k != "timestamp"}
    return out
