"""Experiment pipeline behind the command-line interface.

``prepare`` loads the CSV, partitions it, fits the quantile transform on the
retained rows and draws the initial embedding tables; ``train_federated`` and
``train_local`` build models from those artifacts and checkpoint them;
``synthesize`` and ``heatmap_report`` turn checkpoints back into tables and
cross-client scores.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..data.codec import EmbeddingCodec, EncodedTable, decode_matrix, init_embeddings, score_table
from ..data.partition import Partition, partition_noniid
from ..data.quantile import QuantileTransform, fit_quantile
from ..data.schema import TableData, TableSchema, load_csv, schema_fingerprint
from ..diffusion import DiffusionModel, init_model, linear_schedule, sample
from ..errors import CheckpointError, ConfigurationError, DataLoadError
from ..federation import (
    ClientState,
    FederationConfig,
    FederationState,
    RoundRecord,
    history_rows,
    init_federation,
    run_federation,
    run_local_baseline,
)
from ..metrics.report import HEATMAP_METRICS, heatmap_eval
from .checkpoint import Checkpoint, ClientSlot, load_checkpoint, save_checkpoint
from .config import RunConfig

PARTITION_FILE = "partition.json"
CODEC_FILE = "codec.json"
SNAPSHOT_DIR = "checkpoints"
SAMPLE_STREAM = 7  # second seed word of the sampling generator


@dataclass
class Prepared:
    config: RunConfig
    table: TableData
    partition: Partition
    qt: QuantileTransform
    codec: EmbeddingCodec  # initial embedding tables

    @property
    def schema(self) -> TableSchema:
        return self.table.schema

    @property
    def fingerprint(self) -> str:
        return schema_fingerprint(self.schema, self.table.vocab)

    def client_table(self, client_id: int) -> TableData:
        return self.table.subset(self.partition.rows_of(client_id))

    def client_encoded(self, client_id: int) -> EncodedTable:
        return score_table(self.client_table(client_id), self.qt)

    def summary_lines(self) -> list[str]:
        total = sum(self.partition.client_sizes)
        lines = [f"split column: {self.partition.split_column}",
                 f"{'client':>6}  {'category':<24} {'rows':>8}  {'share':>6}"]
        for i, (cat, size) in enumerate(zip(self.partition.categories, self.partition.client_sizes), 1):
            lines.append(f"{i:>6}  {cat:<24} {size:>8}  {size / total:>6.1%}")
        lines.append(f"retained {total} rows, dropped {self.partition.dropped_row_count}")
        return lines


def _split_column(config: RunConfig, schema: TableSchema) -> str:
    column = config.partition.split_column or schema.split_column
    if column is None:
        raise ConfigurationError("no split column: set partition.split_column or the schema's split_column")
    return column


def prepare(config: RunConfig) -> Prepared:
    config.validate()
    schema_path, data_path = config.require_inputs()
    schema = TableSchema.load(schema_path)
    table = load_csv(data_path, schema, missing_category=config.missing_category)
    partition = partition_noniid(table, _split_column(config, schema), config.partition.clients)
    qt = fit_quantile(table, config.model.n_quantiles, rows=partition.retained_rows())
    codec = init_embeddings(schema, table.vocab, config.federation.seed, config.model.embed_dim)
    return Prepared(config, table, partition, qt, codec)


def save_prepared(prep: Prepared, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prep.partition.save(out / PARTITION_FILE)
    doc = {
        "schema": prep.schema.to_dict(),
        "vocab": prep.table.vocab,
        "fingerprint": prep.fingerprint,
        "n_rows": prep.table.n_rows,
        "quantile_eps": prep.qt.eps,
        "quantile_knots": {c: prep.qt.knots[c].tolist() for c in prep.qt.columns},
        "embed_dim": prep.codec.dim,
        "embeddings": {c: prep.codec.tables[c].tolist() for c in prep.codec.columns},
    }
    (out / CODEC_FILE).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
    return [out / PARTITION_FILE, out / CODEC_FILE]


def load_prepared(config: RunConfig, out_dir) -> Prepared:
    """Reload the CSV and the artifacts written by ``save_prepared``."""
    out = Path(out_dir)
    for name in (PARTITION_FILE, CODEC_FILE):
        if not (out / name).is_file():
            raise ConfigurationError(f"{out / name} is missing; run `prepare` first")
    doc = json.loads((out / CODEC_FILE).read_text(encoding="utf-8"))
    schema = TableSchema.from_dict(doc["schema"])
    _, data_path = config.require_inputs()
    table = load_csv(data_path, schema, vocab=doc["vocab"], missing_category=config.missing_category)
    if table.n_rows != doc["n_rows"] or schema_fingerprint(schema, table.vocab) != doc["fingerprint"]:
        raise DataLoadError(f"{data_path} no longer matches the prepared artifacts in {out}")
    qt = QuantileTransform({c: np.asarray(v, dtype=np.float64) for c, v in doc["quantile_knots"].items()},
                           float(doc["quantile_eps"]))
    codec = EmbeddingCodec(schema, {c: np.asarray(v, dtype=np.float64) for c, v in doc["embeddings"].items()},
                           int(doc["embed_dim"]))
    return Prepared(config, table, Partition.load(out / PARTITION_FILE), qt, codec)


def federation_config(config: RunConfig) -> FederationConfig:
    f, o = config.federation, config.optimizer
    return FederationConfig(
        rounds=f.rounds, client_steps=f.client_steps, batch_size=f.batch_size,
        clients_per_round=f.clients_per_round, seed=f.seed, lr=o.lr, beta1=o.beta1,
        beta2=o.beta2, eps=o.eps, threads=f.threads,
    )


def new_model(prep: Prepared) -> DiffusionModel:
    m = prep.config.model
    schedule = linear_schedule(m.diffusion_steps, m.beta_start, m.beta_end)
    codec = prep.codec if prep.codec.columns else None
    return init_model(schedule, len(prep.schema.numeric_columns), codec,
                      hidden_layers=m.hidden_layers, hidden_width=m.hidden_width,
                      time_embed_dim=m.time_embed_dim, activation=m.activation,
                      seed=prep.config.federation.seed, train_embeddings=m.train_embeddings)


def _checkpoint(prep: Prepared, mode: str, model: DiffusionModel, r: int, complete: bool,
                clients: list[ClientSlot], history: list[RoundRecord]) -> Checkpoint:
    return Checkpoint(mode, r, complete, prep.config.to_dict(), prep.schema,
                      {k: list(v) for k, v in prep.table.vocab.items()}, model, prep.qt,
                      clients, list(history))


def write_history(path, history: Sequence[RoundRecord], client_ids: Sequence[int]) -> Path:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        csv.writer(handle).writerows(history_rows(history, client_ids))
    return Path(path)


def _check_resume(ckpt: Checkpoint, prep: Prepared, mode: str) -> None:
    if ckpt.fingerprint != prep.fingerprint:
        raise CheckpointError("checkpoint schema fingerprint does not match the prepared data")
    if ckpt.mode != mode:
        raise CheckpointError(f"checkpoint holds a {ckpt.mode} model, cannot resume {mode} training")
    if ckpt.round > prep.config.federation.rounds:
        raise ConfigurationError(
            f"checkpoint is at round {ckpt.round}, beyond the configured {prep.config.federation.rounds}"
        )


def train_federated(prep: Prepared, out_dir, resume: Checkpoint | None = None,
                    log: Callable[[str], None] = lambda s: None) -> Path:
    """Run (or continue) federated training; returns the final checkpoint path."""
    out = Path(out_dir)
    cfg = federation_config(prep.config)
    ids = list(range(1, prep.partition.n_clients + 1))
    data = [prep.client_encoded(i) for i in ids]
    if resume is None:
        state = init_federation(new_model(prep), data, cfg)
    else:
        _check_resume(resume, prep, "federated")
        if [c.client_id for c in resume.clients] != ids:
            raise CheckpointError("checkpoint client ids do not match the partition")
        clients = []
        for slot, d in zip(resume.clients, data):
            if slot.n_samples != len(d):
                raise CheckpointError(f"client {slot.client_id} size changed since the checkpoint")
            clients.append(ClientState(slot.client_id, d, slot.adam))
        state = FederationState(resume.model, clients, resume.round, list(resume.history))
    every = prep.config.federation.snapshot_every

    def snapshot(st: FederationState) -> Checkpoint:
        slots = [ClientSlot(c.client_id, c.n_samples, c.adam) for c in st.clients]
        return _checkpoint(prep, "federated", st.central, st.round, st.round >= cfg.rounds, slots, st.history)

    def on_round(st: FederationState) -> None:
        rec = st.history[-1]
        log(f"round {st.round}/{cfg.rounds}  loss {rec.aggregate_loss:.5f}")
        if every and st.round % every == 0 and st.round < cfg.rounds:
            save_checkpoint(snapshot(st), out / SNAPSHOT_DIR / f"federated_r{st.round:05d}.ftdf")

    state = run_federation(state, cfg, on_round)
    path = save_checkpoint(snapshot(state), out / "federated.ftdf")
    write_history(out / "federated_history.csv", state.history, ids)
    return path


def train_local(prep: Prepared, client_id: int, out_dir, resume: Checkpoint | None = None,
                log: Callable[[str], None] = lambda s: None) -> Path:
    """Compute-matched standalone model on one client's rows."""
    out = Path(out_dir)
    cfg = federation_config(prep.config)
    mode = f"local:{client_id}"
    data = prep.client_encoded(client_id)
    if resume is None:
        model = new_model(prep)
        adam, start, history = cfg.fresh_adam(len(model.params)), 0, []
    else:
        _check_resume(resume, prep, mode)
        slot = resume.clients[0]
        model, adam, start, history = resume.model, slot.adam, resume.round, list(resume.history)
    every = prep.config.federation.snapshot_every

    def snapshot(r: int) -> Checkpoint:
        return _checkpoint(prep, mode, model, r, r >= cfg.rounds,
                           [ClientSlot(client_id, len(data), adam)], history)

    for r in range(start, cfg.rounds):
        model, adam, losses = run_local_baseline(model, data, client_id, cfg,
                                                 total_steps=cfg.client_steps, adam=adam, start_round=r)
        loss = float(np.mean(losses))
        history.append(RoundRecord(r, {client_id: loss}, loss, 0.0))
        log(f"round {r + 1}/{cfg.rounds}  loss {loss:.5f}")
        if every and (r + 1) % every == 0 and r + 1 < cfg.rounds:
            save_checkpoint(snapshot(r + 1), out / SNAPSHOT_DIR / f"local_{client_id}_r{r + 1:05d}.ftdf")
    path = save_checkpoint(snapshot(cfg.rounds), out / f"local_{client_id}.ftdf")
    write_history(out / f"local_{client_id}_history.csv", history, [client_id])
    return path


def model_codec(ckpt: Checkpoint) -> EmbeddingCodec:
    m = ckpt.model
    tables = {c: m.params.segment("emb." + c).copy() for c in m.embed_columns}
    return EmbeddingCodec(ckpt.schema, tables, m.embed_dim)


def synthesize(ckpt: Checkpoint, n_rows: int, seed: int) -> TableData:
    """Draw ``n_rows`` latent samples and decode them to a table."""
    if n_rows < 0:
        raise ConfigurationError("number of rows must be >= 0")
    latent = sample(ckpt.model, n_rows, np.random.default_rng([seed, SAMPLE_STREAM]))
    return decode_matrix(latent, ckpt.qt, model_codec(ckpt), ckpt.vocab)


def model_name(ckpt: Checkpoint) -> str:
    return ckpt.mode.replace(":", "_")


def heatmap_report(prep: Prepared, checkpoint_paths: Sequence, n_rows: int, seed: int,
                   metrics: Sequence[str] = HEATMAP_METRICS):
    """Score each checkpoint's samples on every client subset.

    Returns ``(row_names, col_names, matrices)``.
    """
    if not checkpoint_paths:
        raise ConfigurationError("report needs at least one checkpoint")
    ckpts, offenders = [], []
    for path in checkpoint_paths:
        ckpt = load_checkpoint(path)
        if ckpt.fingerprint != prep.fingerprint:
            offenders.append(str(path))
        ckpts.append(ckpt)
    if offenders:
        raise CheckpointError("schema fingerprint mismatch: " + ", ".join(offenders))
    subsets = [prep.client_table(i) for i in range(1, prep.partition.n_clients + 1)]
    synthetic = [synthesize(c, n_rows, seed) for c in ckpts]
    grid = heatmap_eval(synthetic, subsets, metrics, prep.config.evaluation.max_pairs, seed)
    cols = [f"D_{i}" for i in range(1, len(subsets) + 1)]
    return [model_name(c) for c in ckpts], cols, grid
