"""CSV datasets and JSON result documents."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .weights import PopulationFrame

logger = logging.getLogger(__name__)

RESULT_FORMAT = "integrated-quantiles/result@1"
CONFIG_FORMAT = "integrated-quantiles/config@1"
DATASET_COLUMNS = ("value", "pi", "alpha", "delta")


class DatasetError(ValueError):
    """Malformed dataset; ``line`` is the 1-based physical line when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _binary(text: str, name: str, line: int) -> int:
    text = text.strip()
    if text in ("0", "1"):
        return int(text)
    try:
        value = float(text)
    except ValueError:
        value = None
    if value in (0.0, 1.0):
        return int(value)
    raise DatasetError(f"{name} must be 0 or 1, got {text!r}", line)


def parse_dataset(path, n: Optional[int] = None) -> PopulationFrame:
    """Read a unit-level CSV into a :class:`PopulationFrame`.

    Columns: ``value`` (required), ``pi`` (optional, blank when unknown),
    ``alpha`` (required 0/1) and ``delta`` (optional 0/1, default 0). UTF-8
    with LF or CRLF line endings.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError("file is empty", 1) from None
        missing = [c for c in ("value", "alpha") if c not in header]
        if missing:
            raise DatasetError(f"missing required column(s): {', '.join(missing)}", 1)
        col = {name: header.index(name) for name in DATASET_COLUMNS if name in header}
        if "delta" not in col:
            logger.warning("%s has no delta column; every unit is treated as outside the big data", path)

        xs, pis, alphas, deltas = [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"expected {len(header)} fields, found {len(row)}", line)
            try:
                x = float(row[col["value"]])
            except ValueError:
                raise DatasetError(f"value is not a number: {row[col['value']]!r}", line) from None
            if not math.isfinite(x):
                raise DatasetError("value must be finite", line)
            alpha = _binary(row[col["alpha"]], "alpha", line)
            delta = _binary(row[col["delta"]], "delta", line) if "delta" in col else 0
            pi_text = row[col["pi"]].strip() if "pi" in col else ""
            if pi_text:
                try:
                    pi = float(pi_text)
                except ValueError:
                    raise DatasetError(f"pi is not a number: {pi_text!r}", line) from None
                if not 0.0 < pi <= 1.0:
                    raise DatasetError(f"pi must lie in (0, 1], got {pi_text}", line)
            else:
                pi = math.nan
            if alpha == 1 and math.isnan(pi):
                raise DatasetError("alpha=1 requires an inclusion probability pi", line)
            xs.append(x)
            pis.append(pi)
            alphas.append(alpha)
            deltas.append(delta)

    if not xs:
        raise DatasetError("dataset has no rows")
    if n is not None and n < len(xs):
        raise DatasetError(f"population size {n} is below the {len(xs)} rows")
    return PopulationFrame(xs, pis, alphas, deltas, n=n)


def write_dataset(frame: PopulationFrame, path) -> None:
    """Write a frame in the layout read by :func:`parse_dataset`."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(DATASET_COLUMNS)
        for x, pi, a, d in zip(frame.x.tolist(), frame.pi.tolist(), frame.alpha, frame.delta):
            out.writerow([repr(x), "" if math.isnan(pi) else repr(pi), int(a), int(d)])


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


@dataclass
class ResultDocument:
    """Machine-readable output of one command.

    ``body`` holds command-specific results; ``metadata`` holds the tool
    version, the exact configuration and its hash, and the seed if any.
    Floats are written with ``repr`` so reading a document back is lossless.
    """

    command: str
    body: dict
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain({"format": RESULT_FORMAT, "command": self.command,
                       "metadata": self.metadata, "body": self.body})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ResultDocument":
        doc = json.loads(text)
        if doc.get("format") != RESULT_FORMAT:
            raise ValueError(f"unsupported result format {doc.get('format')!r}")
        return cls(doc["command"], doc["body"], doc["metadata"])


def make_metadata(config: dict, seed: Optional[int] = None) -> dict:
    from . import __version__

    meta = {"tool": "integrated-quantiles", "version": __version__,
            "config": _plain(config), "config_hash": config_hash(config)}
    if seed is not None:
        meta["seed"] = seed
    return meta


def load_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    fmt = doc.get("format", CONFIG_FORMAT)
    if fmt != CONFIG_FORMAT:
        raise ValueError(f"unsupported config format {fmt!r}")
    return doc
