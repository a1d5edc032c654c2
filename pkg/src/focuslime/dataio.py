"""Dataset JSONL reading, crash-safe writes and the shipped JSON schemas."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ContractViolation
from .segmenter import Document

SCHEMAS = ("dataset_record", "explanation", "cache_record", "synthetic_model", "summary", "aopc_report",
           "recall_report", "narrowing_trace")


class DatasetError(ContractViolation):
    pass


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    if name not in SCHEMAS:
        raise KeyError(name)
    text = resources.files("focuslime.schemas").joinpath(f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(instance, name: str) -> None:
    """Raise ``jsonschema.ValidationError`` if ``instance`` does not match schema ``name``."""
    jsonschema.validate(instance, load_schema(name))


def record_to_document(rec: dict) -> Document:
    try:
        validate(rec, "dataset_record")
    except jsonschema.ValidationError as exc:
        raise DatasetError(f"record {rec.get('id', '?')!r}: {exc.message}") from None
    spans = [(e["start"], e["end"]) for e in rec.get("evidence", [])]
    return Document.from_text(rec["document"], rec["id"], rec["question"], rec["answer"], spans)


def read_dataset(path: str | os.PathLike) -> list[Document]:
    docs, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            doc = record_to_document(rec)
            if doc.id in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


def write_jsonl(path: str | os.PathLike, records) -> None:
    atomic_write(path, "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records))


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write(path, dumps(obj))


def write_csv(path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write(path, buf.getvalue())


def safe_name(doc_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in doc_id) or "_"
