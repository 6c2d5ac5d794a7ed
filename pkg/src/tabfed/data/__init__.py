from .codec import (
    EmbeddingCodec,
    EncodedTable,
    decode_matrix,
    decode_row,
    embed,
    encode_row,
    encode_table,
    init_embeddings,
    score_table,
)
from .partition import Partition, partition_noniid
from .quantile import QuantileTransform, fit_quantile, quantile_apply, quantile_invert
from .schema import (
    CATEGORICAL,
    NUMERIC,
    Column,
    TableData,
    TableSchema,
    load_csv,
    schema_fingerprint,
    write_csv,
)
from .toy import TOY_SCHEMA, generate_toy

__all__ = [
    "CATEGORICAL", "NUMERIC", "Column", "EmbeddingCodec", "EncodedTable", "Partition",
    "QuantileTransform", "TOY_SCHEMA", "TableData", "TableSchema", "decode_matrix",
    "decode_row", "embed", "encode_row", "encode_table", "fit_quantile", "generate_toy",
    "init_embeddings", "load_csv", "partition_noniid", "quantile_apply", "quantile_invert",
    "schema_fingerprint", "score_table", "write_csv",
]
