"""Binary checkpoints.

Layout::

    b"FTDF" | u16 version | u64 header length | header (UTF-8 JSON, sorted keys)
    | model parameters | quantile knots | beta schedule
    | per client: Adam first moment, Adam second moment

Each block after the header is a serialized ``ParamVector`` (little-endian
float64 payload). The JSON header carries everything that is not an array:
config echo, schema and vocabulary with their fingerprint, network shape,
training round, mode, per-client bookkeeping and the loss history. Saving a
loaded checkpoint reproduces the file byte for byte.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data.quantile import QuantileTransform
from ..data.schema import TableSchema, schema_fingerprint
from ..diffusion import DiffusionModel, NoiseSchedule
from ..errors import CheckpointError, ConfigurationError
from ..federation import RoundRecord
from ..nn import AdamState, MlpConfig, ParamVector

MAGIC = b"FTDF"
VERSION = 1
_PREAMBLE = struct.Struct("<4sHQ")
_KNOT_PREFIX = "qt."


@dataclass
class ClientSlot:
    client_id: int
    n_samples: int
    adam: AdamState


@dataclass
class Checkpoint:
    mode: str                      # "federated" or "local:<client id>"
    round: int                     # completed rounds
    complete: bool                 # False for intermediate snapshots
    config: dict
    schema: TableSchema
    vocab: dict[str, list[str]]
    model: DiffusionModel
    qt: QuantileTransform
    clients: list[ClientSlot]
    history: list[RoundRecord] = field(default_factory=list)

    @property
    def fingerprint(self) -> str:
        return schema_fingerprint(self.schema, self.vocab)

    def header(self) -> dict:
        m = self.model
        return {
            "mode": self.mode,
            "round": self.round,
            "complete": self.complete,
            "config": self.config,
            "schema": self.schema.to_dict(),
            "vocab": self.vocab,
            "fingerprint": self.fingerprint,
            "mlp": {
                "input_dim": m.config.input_dim,
                "output_dim": m.config.output_dim,
                "hidden_layers": m.config.hidden_layers,
                "hidden_width": m.config.hidden_width,
                "time_embed_dim": m.config.time_embed_dim,
                "activation": m.config.activation,
            },
            "n_numeric": m.n_numeric,
            "embed_columns": list(m.embed_columns),
            "embed_dim": m.embed_dim,
            "train_embeddings": m.train_embeddings,
            "quantile_eps": self.qt.eps,
            "quantile_columns": self.qt.columns,
            "clients": [
                {"id": c.client_id, "n_samples": c.n_samples, "adam_step": c.adam.step,
                 "lr": c.adam.lr, "beta1": c.adam.beta1, "beta2": c.adam.beta2, "eps": c.adam.eps}
                for c in self.clients
            ],
            # wall-clock times are left out so identical runs give identical files
            "history": [
                {"round": r.round, "aggregate_loss": r.aggregate_loss,
                 "client_losses": {str(k): v for k, v in sorted(r.client_losses.items())}}
                for r in self.history
            ],
        }

    def to_bytes(self) -> bytes:
        header = json.dumps(self.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        knots = ParamVector.from_segments(
            (_KNOT_PREFIX + c, self.qt.knots[c]) for c in self.qt.columns
        ) if self.qt.columns else ParamVector(np.zeros(0), ())
        beta = ParamVector.from_segments([("schedule.beta", self.model.schedule.beta)])
        blocks = [self.model.params.to_bytes(), knots.to_bytes(), beta.to_bytes()]
        layout = self.model.params.layout
        for c in self.clients:
            blocks.append(ParamVector(c.adam.m, layout).to_bytes())
            blocks.append(ParamVector(c.adam.v, layout).to_bytes())
        return _PREAMBLE.pack(MAGIC, VERSION, len(header)) + header + b"".join(blocks)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        if len(blob) < _PREAMBLE.size:
            raise CheckpointError("checkpoint truncated before the header: bad magic")
        magic, version, header_len = _PREAMBLE.unpack_from(blob, 0)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}; not a checkpoint file")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
        offset = _PREAMBLE.size
        try:
            head = json.loads(blob[offset:offset + header_len].decode("utf-8"))
            offset += header_len
            params, offset = ParamVector.from_bytes(blob, offset)
            knots, offset = ParamVector.from_bytes(blob, offset)
            beta, offset = ParamVector.from_bytes(blob, offset)
            moments = []
            for slot in head["clients"]:
                m, offset = ParamVector.from_bytes(blob, offset)
                v, offset = ParamVector.from_bytes(blob, offset)
                moments.append((slot, m, v))
            if offset != len(blob):
                raise CheckpointError(f"{len(blob) - offset} trailing bytes after the last block")
            schema = TableSchema.from_dict(head["schema"])
            vocab = {k: list(v) for k, v in head["vocab"].items()}
            if schema_fingerprint(schema, vocab) != head["fingerprint"]:
                raise CheckpointError("stored fingerprint does not match the stored schema")
            config = MlpConfig(**head["mlp"])
            if params.layout[: len(config.layout())] != config.layout():
                raise CheckpointError("parameter layout does not match the network shape")
            model = DiffusionModel(
                NoiseSchedule.from_betas(beta.segment("schedule.beta").copy()), params, config,
                int(head["n_numeric"]), tuple(head["embed_columns"]), int(head["embed_dim"]),
                bool(head["train_embeddings"]),
            )
            qt = QuantileTransform(
                {c: knots.segment(_KNOT_PREFIX + c).copy() for c in head["quantile_columns"]},
                float(head["quantile_eps"]),
            )
            clients = []
            for slot, m, v in moments:
                if m.layout != params.layout or v.layout != params.layout:
                    raise CheckpointError(f"Adam state of client {slot['id']} has the wrong layout")
                adam = AdamState(m.values, v.values, int(slot["adam_step"]), float(slot["lr"]),
                                 float(slot["beta1"]), float(slot["beta2"]), float(slot["eps"]))
                clients.append(ClientSlot(int(slot["id"]), int(slot["n_samples"]), adam))
            history = [
                RoundRecord(int(r["round"]), {int(k): float(v) for k, v in r["client_losses"].items()},
                            float(r["aggregate_loss"]), 0.0)
                for r in head["history"]
            ]
            return cls(head["mode"], int(head["round"]), bool(head["complete"]), head["config"],
                       schema, vocab, model, qt, clients, history)
        except CheckpointError:
            raise
        except (ConfigurationError, KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint: {exc}") from exc


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    """Write atomically: the target is either absent, the old file, or complete."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(ckpt.to_bytes())
    os.replace(tmp, path)
    return path


def load_checkpoint(path, expected_fingerprint: str | None = None) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        ckpt = Checkpoint.from_bytes(blob)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    if expected_fingerprint is not None and ckpt.fingerprint != expected_fingerprint:
        raise CheckpointError(
            f"{path}: schema fingerprint {ckpt.fingerprint[:12]} does not match "
            f"the prepared data ({expected_fingerprint[:12]})"
        )
    return ckpt
