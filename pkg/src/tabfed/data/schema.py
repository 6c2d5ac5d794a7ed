"""Table schema, in-memory table and CSV ingestion."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from ..errors import DataLoadError

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise DataLoadError(f"column {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class TableSchema:
    columns: tuple[Column, ...]
    label_column: str | None = None
    split_column: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", tuple(self.columns))
        names = self.names
        if len(set(names)) != len(names):
            raise DataLoadError("column names must be unique")
        for role in ("label_column", "split_column"):
            name = getattr(self, role)
            if name is None:
                continue
            if name not in names:
                raise DataLoadError(f"{role} {name!r} is not a schema column")
            if self.kind(name) != CATEGORICAL:
                raise DataLoadError(f"{role} {name!r} must be categorical")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def numeric_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == NUMERIC]

    @property
    def categorical_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == CATEGORICAL]

    def kind(self, name: str) -> str:
        for c in self.columns:
            if c.name == name:
                return c.kind
        raise KeyError(f"unknown column {name!r}")

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown column {name!r}") from None

    def to_dict(self) -> dict:
        return {
            "columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
            "label_column": self.label_column,
            "split_column": self.split_column,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TableSchema":
        try:
            columns = tuple(Column(str(c["name"]), str(c["kind"])) for c in doc["columns"])
        except (KeyError, TypeError) as exc:
            raise DataLoadError(f"malformed schema document: {exc}") from exc
        return cls(columns, doc.get("label_column"), doc.get("split_column"))

    @classmethod
    def load(cls, path) -> "TableSchema":
        try:
            doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise DataLoadError(f"cannot read schema {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise DataLoadError(f"schema {path} is not a key-value document")
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False), encoding="utf-8")


@dataclass
class TableData:
    """Row-major cells; categorical cells hold integer category ids."""

    schema: TableSchema
    cells: np.ndarray
    vocab: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.cells = np.asarray(self.cells, dtype=np.float64).reshape(-1, len(self.schema.columns))
        for name in self.schema.categorical_columns:
            self.vocab.setdefault(name, [])
            ids = self.cells[:, self.schema.index(name)]
            if ids.size and (ids.min() < 0 or ids.max() >= len(self.vocab[name])):
                raise DataLoadError(f"category id out of range in column {name!r}")

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    def __len__(self) -> int:
        return self.n_rows

    def column(self, name: str) -> np.ndarray:
        values = self.cells[:, self.schema.index(name)]
        if self.schema.kind(name) == CATEGORICAL:
            return values.astype(np.int64)
        return values.copy()

    def labels(self, name: str) -> np.ndarray:
        """Category strings of a categorical column."""
        vocab = np.asarray(self.vocab[name], dtype=object)
        return vocab[self.column(name)] if len(vocab) else np.empty(0, dtype=object)

    def subset(self, indices) -> "TableData":
        return TableData(self.schema, self.cells[np.asarray(indices, dtype=np.int64)],
                         {k: list(v) for k, v in self.vocab.items()})

    @classmethod
    def from_columns(cls, schema: TableSchema, columns: Mapping[str, Sequence],
                     vocab: Mapping[str, Sequence[str]] | None = None) -> "TableData":
        """Build a table from per-column values; categoricals may be strings."""
        vocab = {k: list(v) for k, v in (vocab or {}).items()}
        n = len(next(iter(columns.values()))) if columns else 0
        cells = np.zeros((n, len(schema.columns)))
        for j, col in enumerate(schema.columns):
            values = list(columns[col.name])
            if len(values) != n:
                raise DataLoadError(f"column {col.name!r} has {len(values)} values, expected {n}")
            if col.kind == NUMERIC:
                cells[:, j] = np.asarray(values, dtype=np.float64)
            else:
                cats = vocab.setdefault(col.name, [])
                lookup = {c: i for i, c in enumerate(cats)}
                for i, v in enumerate(values):
                    v = str(v)
                    if v not in lookup:
                        lookup[v] = len(cats)
                        cats.append(v)
                    cells[i, j] = lookup[v]
        return cls(schema, cells, vocab)

    def with_vocab_of(self, reference: "TableData") -> "TableData":
        """Re-code categoricals so ids agree with ``reference`` (unseen labels appended)."""
        columns = {}
        vocab = {}
        for name in self.schema.names:
            if self.schema.kind(name) == CATEGORICAL:
                columns[name] = self.labels(name)
                vocab[name] = list(reference.vocab.get(name, []))
            else:
                columns[name] = self.column(name)
        return TableData.from_columns(self.schema, columns, vocab)


def schema_fingerprint(schema: TableSchema, vocab: Mapping[str, Sequence[str]] | None = None) -> str:
    doc = {"schema": schema.to_dict(), "vocab": {k: list(v) for k, v in sorted((vocab or {}).items())}}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


def load_csv(path, schema: TableSchema, vocab: Mapping[str, Sequence[str]] | None = None,
             missing_category: str | None = None, allow_empty: bool = False) -> TableData:
    """Parse an RFC-4180 CSV with a header row into a TableData.

    Column order in the file may differ from the schema. Category ids follow
    first appearance, starting after any labels already present in ``vocab``.
    Empty cells are rejected, except categorical ones when ``missing_category``
    names a sentinel label for them. Row numbers in errors count data rows
    from 1, excluding the header.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataLoadError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataLoadError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for name in schema.names:
            if name not in header:
                raise DataLoadError(f"{path}: missing column {name!r}")
        positions = [header.index(name) for name in schema.names]
        kinds = [c.kind for c in schema.columns]
        vocabs = {name: list((vocab or {}).get(name, [])) for name in schema.categorical_columns}
        lookups = {name: {c: i for i, c in enumerate(v)} for name, v in vocabs.items()}
        rows = []
        for row_no, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise DataLoadError(
                    f"{path}: row {row_no} has {len(record)} fields, header has {len(header)}"
                )
            out = []
            for name, kind, pos in zip(schema.names, kinds, positions):
                cell = record[pos]
                if kind == NUMERIC:
                    try:
                        value = float(cell)
                    except ValueError:
                        raise DataLoadError(
                            f"{path}: row {row_no}, column {name!r}: cannot parse {cell!r} as a number"
                        ) from None
                    if not np.isfinite(value):
                        raise DataLoadError(f"{path}: row {row_no}, column {name!r}: non-finite value")
                    out.append(value)
                else:
                    if cell == "":
                        if missing_category is None:
                            raise DataLoadError(f"{path}: row {row_no}, column {name!r}: missing value")
                        cell = missing_category
                    lookup = lookups[name]
                    if cell not in lookup:
                        lookup[cell] = len(vocabs[name])
                        vocabs[name].append(cell)
                    out.append(lookup[cell])
            rows.append(out)
    if not rows and not allow_empty:
        raise DataLoadError(f"{path}: no data rows")
    cells = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(schema.columns))
    return TableData(schema, cells, vocabs)


def _format_number(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def write_csv(table: TableData, path) -> None:
    """Write with the schema's header order; categoricals as their labels."""
    path = Path(path)
    kinds = [c.kind for c in table.schema.columns]
    label_cols = {name: table.labels(name) for name in table.schema.categorical_columns}
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(table.schema.names)
        for i in range(table.n_rows):
            row = []
            for j, (name, kind) in enumerate(zip(table.schema.names, kinds)):
                if kind == NUMERIC:
                    row.append(_format_number(table.cells[i, j]))
                else:
                    row.append(label_cols[name][i])
            writer.writerow(row)
