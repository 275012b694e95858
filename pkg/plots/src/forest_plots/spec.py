"""Plot specifications: what to read, which figure kind, where to write."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

KINDS = ("rate-curves", "knj-hist", "scaling")


class SpecError(ValueError):
    """Invalid plot spec or input data; message names the offending piece."""


@dataclass(frozen=True)
class PlotSpec:
    """One figure: input CSV, figure kind, output image, labels."""

    kind: str
    input: str
    output: str
    title: str | None = None
    xlabel: str | None = None
    ylabel: str | None = None
    # scaling-kind column selection
    x_column: str = "k_n"
    value_column: str = "variance"
    bound_column: str | None = "variance_bound"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"kind: expected one of {KINDS}, got {self.kind!r}")
        if not self.input:
            raise SpecError("input: missing CSV path")
        if not self.output:
            raise SpecError("output: missing image path")
        suffix = Path(self.output).suffix.lower()
        if suffix not in (".png", ".pdf", ".svg"):
            raise SpecError(f"output: unsupported image format {suffix!r}")

    @classmethod
    def from_json(cls, path: str) -> "PlotSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise SpecError(f"spec: cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SpecError(f"spec: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise SpecError("spec: top level must be a JSON object")
        allowed = set(cls.__dataclass_fields__)
        unknown = set(doc) - allowed
        if unknown:
            raise SpecError(f"spec: unknown fields {sorted(unknown)}")
        missing = {"kind", "input", "output"} - set(doc)
        if missing:
            raise SpecError(f"spec: missing required fields {sorted(missing)}")
        return cls(**doc)


def read_table(path: str, required: list[str]) -> dict[str, list[str]]:
    """Load a CSV as columns, insisting on the required header names and rows."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SpecError(f"input: {path} is empty") from None
            rows = list(reader)
    except OSError as exc:
        raise SpecError(f"input: cannot read {path}: {exc}") from exc
    for col in required:
        if col not in header:
            raise SpecError(f"input: {path} is missing required column {col!r}")
    if not rows:
        raise SpecError(f"input: {path} has a header but no data rows")
    idx = {name: header.index(name) for name in header}
    return {name: [row[i] for row in rows] for name, i in idx.items()}
