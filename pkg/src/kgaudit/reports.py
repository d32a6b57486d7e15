"""Plot-ready CSV/JSON artifacts and their readers.

Floats are written with ``repr`` so that reading a file back reproduces the
in-memory values exactly.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .audit import ScoreDegreeRecord

SCORE_COLUMNS = ("entity_id", "etype", "degree", "score", "split", "group")
OUTCOME_COLUMNS = ("strategy", "grid_value", "repeat", "rank")
SUMMARY_COLUMNS = ("strategy", "grid_value", "mean_rank", "ci95")
LOSS_COLUMNS = ("epoch", "mean_loss")

_TYPES = {"degree": int, "score": float, "grid_value": float, "repeat": int, "rank": float,
          "mean_rank": float, "ci95": float, "epoch": int, "mean_loss": float}


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_csv(path, rows, columns) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: _TYPES.get(k, str)(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_score_table(path, table: list[ScoreDegreeRecord]) -> Path:
    rows = ({"entity_id": r.entity_id, "etype": r.etype, "degree": r.degree, "score": r.score,
             "split": r.split, "group": r.group} for r in table)
    return write_csv(path, rows, SCORE_COLUMNS)


def read_score_table(path, graph=None) -> list[ScoreDegreeRecord]:
    """Inverse of :func:`write_score_table`; entity indices need the graph (else -1)."""
    out = []
    for row in read_csv(path):
        idx = graph.entity_index(row["entity_id"]) if graph is not None else -1
        out.append(ScoreDegreeRecord(idx, row["entity_id"], row["etype"], row["degree"], row["score"],
                                     row["split"], row["group"]))
    return out


def write_loss(path, trace) -> Path:
    return write_csv(path, ({"epoch": i, "mean_loss": float(v)} for i, v in enumerate(trace)), LOSS_COLUMNS)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
