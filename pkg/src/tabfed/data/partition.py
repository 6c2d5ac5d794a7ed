"""Non-iid client partitioning by dominant categories of a split column."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import PartitionError
from .schema import CATEGORICAL, TableData


@dataclass
class Partition:
    """Row indices per client. Client ``i`` (1-based) is ``clients[i - 1]``."""

    split_column: str
    categories: list[str]
    clients: list[np.ndarray]
    dropped_row_count: int

    @property
    def n_clients(self) -> int:
        return len(self.clients)

    @property
    def client_sizes(self) -> list[int]:
        return [int(idx.size) for idx in self.clients]

    def rows_of(self, client_id: int) -> np.ndarray:
        if not 1 <= client_id <= self.n_clients:
            raise PartitionError(f"client id {client_id} outside 1..{self.n_clients}")
        return self.clients[client_id - 1]

    def retained_rows(self) -> np.ndarray:
        return np.sort(np.concatenate(self.clients)) if self.clients else np.zeros(0, dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "split_column": self.split_column,
            "clients": [
                {"id": i + 1, "category": cat, "size": int(idx.size), "rows": idx.tolist()}
                for i, (cat, idx) in enumerate(zip(self.categories, self.clients))
            ],
            "dropped_row_count": self.dropped_row_count,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Partition":
        clients = sorted(doc["clients"], key=lambda c: c["id"])
        return cls(
            doc["split_column"],
            [c["category"] for c in clients],
            [np.asarray(c["rows"], dtype=np.int64) for c in clients],
            int(doc["dropped_row_count"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Partition":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def partition_noniid(data: TableData, split_column: str, n_clients: int) -> Partition:
    """Give each of the ``n_clients`` most frequent categories its own client.

    Client 1 holds the most frequent category; frequency ties go to the lower
    category id. Rows of every other category are dropped.
    """
    if split_column not in data.schema.names:
        raise PartitionError(f"split column {split_column!r} is not in the schema")
    if data.schema.kind(split_column) != CATEGORICAL:
        raise PartitionError(f"split column {split_column!r} must be categorical")
    if n_clients < 1:
        raise PartitionError("need at least one client")
    ids = data.column(split_column)
    counts = np.bincount(ids, minlength=len(data.vocab[split_column]))
    present = np.flatnonzero(counts)
    if present.size < n_clients:
        raise PartitionError(
            f"split column {split_column!r} has {present.size} categories, "
            f"cannot form {n_clients} clients"
        )
    # stable sort on negated counts keeps lower ids first among ties
    order = present[np.argsort(-counts[present], kind="stable")][:n_clients]
    clients = [np.flatnonzero(ids == cat) for cat in order]
    kept = sum(idx.size for idx in clients)
    return Partition(
        split_column,
        [data.vocab[split_column][cat] for cat in order],
        clients,
        int(data.n_rows - kept),
    )
