"""Rows <-> continuous vectors.

A row is encoded as the normal scores of its numeric cells (schema order)
followed by the embedding vector of each categorical cell (schema order), so
``d = n_numeric + embed_dim * n_categorical``. Decoding inverts the quantile
transform and snaps each categorical block to its nearest embedding row.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from ..nn import ParamVector
from .quantile import QuantileTransform
from .schema import TableData, TableSchema

EMBED_PREFIX = "emb."


@dataclass
class EmbeddingCodec:
    schema: TableSchema
    tables: dict[str, np.ndarray]
    dim: int = 2

    @property
    def columns(self) -> list[str]:
        return self.schema.categorical_columns

    @property
    def data_dim(self) -> int:
        return len(self.schema.numeric_columns) + self.dim * len(self.columns)

    def vocab_sizes(self) -> list[int]:
        return [self.tables[c].shape[0] for c in self.columns]

    def to_params(self) -> ParamVector:
        return ParamVector.from_segments((EMBED_PREFIX + c, self.tables[c]) for c in self.columns)

    def with_params(self, params: ParamVector) -> "EmbeddingCodec":
        """Codec whose tables are read from the embedding segments of ``params``."""
        tables = {c: params.segment(EMBED_PREFIX + c).copy() for c in self.columns}
        return EmbeddingCodec(self.schema, tables, self.dim)

    def nearest(self, column: str, vectors: np.ndarray) -> np.ndarray:
        """Index of the closest embedding row; ties go to the lowest id."""
        table = self.tables[column]
        vectors = np.atleast_2d(vectors)
        d2 = ((vectors[:, None, :] - table[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)


def init_embeddings(schema: TableSchema, vocab, seed: int, dim: int = 2) -> EmbeddingCodec:
    """Seeded N(0, 1/2) embedding tables with pairwise-distinct rows."""
    rng = np.random.default_rng(seed)
    tables = {}
    for name in schema.categorical_columns:
        size = max(len(vocab[name]), 1)
        while True:
            table = rng.standard_normal((size, dim)) / np.sqrt(2.0)
            if size == 1 or len(np.unique(table, axis=0)) == size:
                break
        tables[name] = table
    return EmbeddingCodec(schema, tables, dim)


@dataclass
class EncodedTable:
    """Numeric normal scores plus raw category ids, ready for embedding lookup."""

    numeric: np.ndarray      # N x n_numeric
    categorical: np.ndarray  # N x n_categorical, int

    def __len__(self) -> int:
        return self.numeric.shape[0]

    def take(self, idx) -> "EncodedTable":
        return EncodedTable(self.numeric[idx], self.categorical[idx])

    @classmethod
    def from_numeric(cls, values) -> "EncodedTable":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        return cls(values, np.zeros((values.shape[0], 0), dtype=np.int64))


def score_table(table: TableData, qt: QuantileTransform) -> EncodedTable:
    schema = table.schema
    numeric = np.column_stack(
        [np.atleast_1d(qt.apply(table.column(c), c)) for c in schema.numeric_columns]
    ) if schema.numeric_columns else np.zeros((table.n_rows, 0))
    categorical = np.column_stack(
        [table.column(c) for c in schema.categorical_columns]
    ).astype(np.int64) if schema.categorical_columns else np.zeros((table.n_rows, 0), dtype=np.int64)
    return EncodedTable(numeric.reshape(table.n_rows, -1), categorical.reshape(table.n_rows, -1))


def embed(encoded: EncodedTable, tables: list[np.ndarray]) -> np.ndarray:
    """Assemble latent vectors from scores and embedding tables."""
    blocks = [encoded.numeric]
    for j, table in enumerate(tables):
        blocks.append(table[encoded.categorical[:, j]])
    return np.concatenate(blocks, axis=1)


def encode_table(table: TableData, qt: QuantileTransform, codec: EmbeddingCodec) -> np.ndarray:
    return embed(score_table(table, qt), [codec.tables[c] for c in codec.columns])


def encode_row(row, qt: QuantileTransform, codec: EmbeddingCodec) -> np.ndarray:
    schema = codec.schema
    row = list(row)
    if len(row) != len(schema.columns):
        raise ConfigurationError(f"row has {len(row)} cells, schema has {len(schema.columns)}")
    parts = [qt.apply(row[schema.index(c)], c) for c in schema.numeric_columns]
    vec = [np.asarray(parts, dtype=np.float64)]
    for c in codec.columns:
        vec.append(codec.tables[c][int(row[schema.index(c)])])
    return np.concatenate(vec)


def decode_matrix(latent, qt: QuantileTransform, codec: EmbeddingCodec, vocab) -> TableData:
    schema = codec.schema
    latent = np.asarray(latent, dtype=np.float64)
    if latent.size == 0:
        latent = latent.reshape(0, codec.data_dim)
    if latent.ndim != 2 or latent.shape[1] != codec.data_dim:
        raise ConfigurationError(f"latent width {latent.shape[1]} != {codec.data_dim}")
    n = latent.shape[0]
    cells = np.zeros((n, len(schema.columns)))
    for k, c in enumerate(schema.numeric_columns):
        cells[:, schema.index(c)] = qt.invert(latent[:, k], c)
    offset = len(schema.numeric_columns)
    for c in codec.columns:
        block = latent[:, offset:offset + codec.dim]
        cells[:, schema.index(c)] = codec.nearest(c, block)
        offset += codec.dim
    return TableData(schema, cells, {k: list(v) for k, v in vocab.items()})


def decode_row(vector, qt: QuantileTransform, codec: EmbeddingCodec) -> list:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (codec.data_dim,):
        raise ConfigurationError(f"expected a vector of length {codec.data_dim}, got {vector.shape}")
    schema = codec.schema
    row: list = [None] * len(schema.columns)
    for k, c in enumerate(schema.numeric_columns):
        row[schema.index(c)] = float(qt.invert(vector[k], c))
    offset = len(schema.numeric_columns)
    for c in codec.columns:
        row[schema.index(c)] = int(codec.nearest(c, vector[offset:offset + codec.dim])[0])
        offset += codec.dim
    return row
