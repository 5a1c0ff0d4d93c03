"""Dataset ingestion and results serialization.

Datasets are JSON documents::

    {"version": "1", "response_range": [lo, hi], "scores": [...optional...],
     "questions": [{"id": "...", "text": "...", "options": [...],
                    "real_responses": [...], "synthetic_responses": [...],
                    "dims": 1}]}

When ``scores`` is present, responses are 1-based option codes and are mapped
to those scores on load. Questions with ``dims > 1`` hold option codes
1..dims and are one-hot encoded. :func:`encode_responses` is the only place
either conversion happens.
"""

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .calibration import CalibrationRecord
from .errors import DatasetError, ResultsError

SUPPORTED_VERSIONS = ("1",)
CSV_HEADER = ("k", "metric", "value", "split", "question_id")


# --------------------------------------------------------------- encoding


def encode_responses(values, dims=1, scores=None):
    """Map raw responses to the numeric representation used for calibration.

    dims > 1: option codes 1..dims become one-hot rows.
    scores given: option codes 1..len(scores) become scores[code - 1].
    Otherwise values pass through as floats.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if dims > 1:
        codes = v.astype(np.int64)
        out = np.zeros((v.size, dims))
        out[np.arange(v.size), codes - 1] = 1.0
        return out
    if scores is not None:
        return np.asarray(scores, dtype=np.float64)[v.astype(np.int64) - 1]
    return v


# ---------------------------------------------------------------- dataset


@dataclass
class Dataset:
    version: str
    response_range: tuple
    questions: list
    scores: list = None
    extra: dict = field(default_factory=dict)

    def records(self):
        return [CalibrationRecord(
            question_id=q["id"],
            real_responses=encode_responses(q["real_responses"], q.get("dims", 1), self.scores),
            synthetic_responses=encode_responses(q["synthetic_responses"], q.get("dims", 1),
                                                 self.scores),
            dims=q.get("dims", 1)) for q in self.questions]

    def to_json(self):
        doc = {"version": self.version, "response_range": list(self.response_range),
               "questions": self.questions}
        if self.scores is not None:
            doc["scores"] = self.scores
        doc.update(self.extra)
        return doc


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_codes(values, n_codes, qid, name):
    for x in values:
        if float(x) != int(x) or not 1 <= int(x) <= n_codes:
            raise DatasetError(f"option code {x!r} outside 1..{n_codes}", qid, name)


def validate_dataset(doc):
    """Check a parsed dataset document and return a :class:`Dataset`."""
    if not isinstance(doc, dict):
        raise DatasetError("dataset must be a JSON object")
    version = doc.get("version")
    if version not in SUPPORTED_VERSIONS:
        raise DatasetError(f"unsupported version {version!r}", field="version")
    rr = doc.get("response_range")
    if (not isinstance(rr, list) or len(rr) != 2 or not all(_is_number(x) for x in rr)
            or not rr[0] < rr[1]):
        raise DatasetError("response_range must be [lo, hi] with lo < hi", field="response_range")
    lo, hi = float(rr[0]), float(rr[1])
    scores = doc.get("scores")
    if scores is not None:
        if not isinstance(scores, list) or not scores or not all(_is_number(x) for x in scores):
            raise DatasetError("scores must be a nonempty list of numbers", field="scores")
        if any(not lo <= s <= hi for s in scores):
            raise DatasetError("every score must lie in response_range", field="scores")
    questions = doc.get("questions")
    if not isinstance(questions, list) or not questions:
        raise DatasetError("questions must be a nonempty list", field="questions")
    seen = set()
    for i, q in enumerate(questions):
        if not isinstance(q, dict):
            raise DatasetError(f"entry {i} is not an object", field="questions")
        qid = q.get("id")
        if not isinstance(qid, str) or not qid:
            raise DatasetError(f"entry {i} needs a nonempty string id", field="id")
        if qid in seen:
            raise DatasetError("duplicate question id", qid, "id")
        seen.add(qid)
        dims = q.get("dims", 1)
        if not isinstance(dims, int) or isinstance(dims, bool) or dims < 1:
            raise DatasetError("dims must be a positive integer", qid, "dims")
        for name in ("real_responses", "synthetic_responses"):
            values = q.get(name)
            if not isinstance(values, list) or not all(_is_number(x) for x in values):
                raise DatasetError("must be a list of numbers", qid, name)
            if name == "real_responses" and not values:
                raise DatasetError("needs at least one response", qid, name)
            if dims > 1:
                _check_codes(values, dims, qid, name)
            elif scores is not None:
                _check_codes(values, len(scores), qid, name)
            elif any(not lo <= x <= hi for x in values):
                raise DatasetError(f"response outside [{lo}, {hi}]", qid, name)
        for name in ("text",):
            if name in q and not isinstance(q[name], str):
                raise DatasetError("must be a string", qid, name)
        if "options" in q and not isinstance(q["options"], list):
            raise DatasetError("must be a list", qid, "options")
    known = {"version", "response_range", "questions", "scores"}
    extra = {k: v for k, v in doc.items() if k not in known}
    return Dataset(version, (lo, hi), questions, scores, extra)


def read_dataset(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DatasetError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: not valid JSON ({exc})") from None
    return validate_dataset(doc)


def load_dataset(path):
    """Validated calibration records from a dataset file."""
    return read_dataset(path).records()


def check_budget(records, budget):
    for r in records:
        if r.n_synthetic < budget:
            raise DatasetError(f"has {r.n_synthetic} synthetic responses, budget is {budget}",
                               r.question_id, "synthetic_responses")


def write_dataset(dataset, path):
    atomic_write_text(path, dumps_canonical(dataset.to_json()))


# ---------------------------------------------------------------- results


def _format_float(x):
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    return s if any(c in s for c in ".en") else s + ".0"


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return [_plain(x) for x in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _dump(obj, depth, pretty_depth):
    obj = _plain(obj)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        items = [(json.dumps(str(k), ensure_ascii=False), _dump(v, depth + 1, pretty_depth))
                 for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        if depth < pretty_depth and items:
            pad = " " * (depth + 1)
            return "{\n" + ",\n".join(f"{pad}{k}: {v}" for k, v in items) + "\n" + " " * depth + "}"
        return "{" + ", ".join(f"{k}: {v}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        parts = [_dump(v, depth + 1, pretty_depth) for v in obj]
        if depth < pretty_depth and parts and any(isinstance(_plain(v), (dict, list, tuple)) for v in obj):
            pad = " " * (depth + 1)
            return "[\n" + ",\n".join(pad + p for p in parts) + "\n" + " " * depth + "]"
        return "[" + ", ".join(parts) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_canonical(obj, pretty_depth=2):
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    return _dump(obj, 0, pretty_depth) + "\n"


def atomic_write_text(path, text):
    """Write via a temporary file in the same directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(report, path):
    try:
        atomic_write_text(path, dumps_canonical(report))
    except OSError as exc:
        raise ResultsError(f"{path}: cannot write results ({exc.strerror})") from None


def read_results(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ResultsError(f"{path}: no such results file") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ResultsError(f"{path}: cannot read results ({exc})") from None


def csv_rows(report):
    """Curve and aggregate rows flattened to (k, metric, value, split, question_id)."""
    rows = []
    for row in report.get("rows", []):
        kind = row.get("kind")
        if kind == "curve":
            rows.append((row["k"], row["metric"], row["value"], row.get("split", ""),
                         row.get("question_id", "")))
        elif kind == "aggregate":
            for stat in ("mean", "stderr", "stderr_1_96"):
                rows.append(("", f"{row['field']}_{stat}", row.get(stat), "", ""))
    return rows


def export_csv(report, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for k, metric, value, split, qid in csv_rows(report):
        cell = "" if value is None else (_format_float(value) if isinstance(value, float) else value)
        writer.writerow((k, metric, cell, split, qid))
    atomic_write_text(path, buf.getvalue())
