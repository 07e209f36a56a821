"""Report persistence: JSON summaries and CSV tables written atomically per run."""

from __future__ import annotations

import csv
import json
import math
import shutil
from contextlib import contextmanager
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Iterable, Iterator

REPORT_SCHEMA = "esqlab-report/1"


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, tuples lists."""
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = asdict(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def write_json(path: Path, kind: str, payload: dict) -> None:
    doc = {"schema": REPORT_SCHEMA, "kind": kind, **_clean(payload)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def write_csv(path: Path, rows: Iterable) -> None:
    rows = [asdict(r) if is_dataclass(r) else dict(r) for r in rows]
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


@contextmanager
def staged_output(directory: str | Path) -> Iterator[Path]:
    """Write into ``<directory>.partial`` and move it into place only on success."""
    final = Path(directory)
    stage = final.with_name(final.name + ".partial")
    if stage.exists():
        shutil.rmtree(stage)
    stage.mkdir(parents=True)
    try:
        yield stage
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    if final.exists():
        shutil.rmtree(final)
    stage.rename(final)
