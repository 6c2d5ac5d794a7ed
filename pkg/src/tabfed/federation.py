"""Synchronous federated averaging, simulated in-process.

Each round broadcasts the central parameters, lets every selected client run
``client_steps`` local Adam updates on its private rows, and replaces the
central parameters by the sample-size-weighted mean of the returned ones.
Client Adam state stays with the client across rounds; only parameters are
exchanged. Per-client randomness is seeded by (base seed, client id, round)
and aggregation runs in ascending client-id order, so threaded and sequential
execution give bitwise-identical results.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .data.codec import EncodedTable
from .diffusion import DiffusionModel, train_steps
from .errors import ConfigurationError, TrainingError
from .nn import AdamState, ParamVector


@dataclass(frozen=True)
class FederationConfig:
    rounds: int = 1000
    client_steps: int = 20
    batch_size: int = 512
    clients_per_round: int | None = None  # None: every client, every round
    seed: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    threads: int = 1

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigurationError(f"rounds must be >= 1, got {self.rounds}")
        if self.client_steps < 1:
            raise ConfigurationError(f"client_steps must be >= 1, got {self.client_steps}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.clients_per_round is not None and self.clients_per_round < 1:
            raise ConfigurationError("clients_per_round must be >= 1")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")

    def fresh_adam(self, n_params: int) -> AdamState:
        return AdamState.fresh(n_params, self.lr, self.beta1, self.beta2, self.eps)


class ClientUpdate(NamedTuple):
    client_id: int
    params: ParamVector
    n_samples: int


def fedavg(updates: Sequence) -> ParamVector:
    """Sample-size-weighted average of client parameters.

    Accepts ``ClientUpdate`` items or ``(client_id, params, n_samples)``
    tuples; the input order does not matter. The mean is accumulated as
    ``theta_1 + sum_i w_i (theta_i - theta_1)`` in ascending client-id order,
    which equals the plain weighted sum when the weights sum to one and
    reproduces equal inputs exactly. The result is clamped coordinate-wise to
    the range spanned by the clients.
    """
    ups = sorted((ClientUpdate(*u) for u in updates), key=lambda u: u.client_id)
    if not ups:
        raise ConfigurationError("fedavg needs at least one client update")
    ids = [u.client_id for u in ups]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"duplicate client ids in {ids}")
    ref = ups[0].params
    for u in ups:
        if u.n_samples <= 0:
            raise ConfigurationError(f"client {u.client_id} reports {u.n_samples} samples")
        bad = ref.first_layout_mismatch(u.params)
        if bad is not None:
            raise ConfigurationError(
                f"client {u.client_id} parameter layout diverges at segment {bad!r}"
            )
    total = sum(int(u.n_samples) for u in ups)
    acc = ref.values.copy()
    lo = ref.values.copy()
    hi = ref.values.copy()
    for u in ups[1:]:
        acc += (u.n_samples / total) * (u.params.values - ref.values)
        np.minimum(lo, u.params.values, out=lo)
        np.maximum(hi, u.params.values, out=hi)
    np.clip(acc, lo, hi, out=acc)
    return ref.with_values(acc)


def fedavg_weights(sizes: Sequence[int]) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=np.float64)
    return sizes / sizes.sum()


def client_rng(seed: int, client_id: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, client_id, round_index]))


@dataclass
class ClientState:
    client_id: int
    data: EncodedTable
    adam: AdamState

    @property
    def n_samples(self) -> int:
        return len(self.data)


@dataclass
class RoundRecord:
    round: int
    client_losses: dict[int, float]
    aggregate_loss: float
    wall_time: float


@dataclass
class FederationState:
    central: DiffusionModel
    clients: list[ClientState]
    round: int = 0
    history: list[RoundRecord] = field(default_factory=list)

    @property
    def total_samples(self) -> int:
        return sum(c.n_samples for c in self.clients)


def init_federation(model: DiffusionModel, client_data: Sequence[EncodedTable],
                    config: FederationConfig) -> FederationState:
    """Clients get ids 1..C in the order of ``client_data``."""
    if not client_data:
        raise ConfigurationError("need at least one client")
    clients = []
    for i, data in enumerate(client_data, start=1):
        if len(data) == 0:
            raise ConfigurationError(f"client {i} has no rows")
        clients.append(ClientState(i, data, config.fresh_adam(len(model.params))))
    return FederationState(model, clients)


def select_clients(state: FederationState, config: FederationConfig) -> list[ClientState]:
    k = config.clients_per_round
    if k is None or k >= len(state.clients):
        return list(state.clients)
    rng = client_rng(config.seed, 0, state.round)
    chosen = np.sort(rng.choice(len(state.clients), size=k, replace=False))
    return [state.clients[i] for i in chosen]


def _train_client(central: DiffusionModel, client: ClientState, config: FederationConfig,
                  round_index: int):
    rng = client_rng(config.seed, client.client_id, round_index)
    model, adam, losses = train_steps(central, client.data, config.client_steps,
                                      config.batch_size, client.adam.copy(), rng)
    return model.params, adam, float(np.mean(losses))


def run_round(state: FederationState, config: FederationConfig,
              executor: ThreadPoolExecutor | None = None) -> FederationState:
    """One broadcast / local-train / aggregate cycle.

    Returns a new state; ``state`` itself is never modified, so a failing
    client leaves the caller holding the pre-round state.
    """
    if state.round >= config.rounds:
        raise ConfigurationError(f"round {state.round} reached the configured {config.rounds}")
    started = time.perf_counter()
    selected = select_clients(state, config)
    r = state.round

    def work(client: ClientState):
        try:
            return _train_client(state.central, client, config, r)
        except Exception as exc:
            raise TrainingError(f"client {client.client_id} failed in round {r}: {exc}") from exc

    if executor is not None:
        results = list(executor.map(work, selected))
    else:
        results = [work(c) for c in selected]

    central = fedavg(
        ClientUpdate(c.client_id, params, c.n_samples) for c, (params, _, _) in zip(selected, results)
    )
    new_adam = {c.client_id: adam for c, (_, adam, _) in zip(selected, results)}
    clients = [replace(c, adam=new_adam.get(c.client_id, c.adam)) for c in state.clients]
    losses = {c.client_id: loss for c, (_, _, loss) in zip(selected, results)}
    total = sum(c.n_samples for c in selected)
    aggregate = sum(c.n_samples * losses[c.client_id] for c in selected) / total
    record = RoundRecord(r, losses, aggregate, time.perf_counter() - started)
    return FederationState(state.central.with_params(central), clients, r + 1,
                           state.history + [record])


def run_federation(state: FederationState, config: FederationConfig,
                   on_round: Callable[[FederationState], None] | None = None) -> FederationState:
    """Run rounds until ``config.rounds`` have completed in total.

    ``state`` may come from a checkpoint; training resumes at ``state.round``.
    """
    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        while state.round < config.rounds:
            state = run_round(state, config, executor)
            if on_round is not None:
                on_round(state)
    finally:
        if executor is not None:
            executor.shutdown()
    return state


def run_local_baseline(model: DiffusionModel, data: EncodedTable, client_id: int,
                       config: FederationConfig, total_steps: int | None = None,
                       adam: AdamState | None = None, start_round: int = 0):
    """Train a standalone model on one client's rows.

    Defaults to the compute-matched budget ``rounds * client_steps``, stepped
    in chunks of ``client_steps`` with the same per-(client, round) seeds the
    federated run uses. Returns ``(model, adam, losses)``.
    """
    if total_steps is None:
        total_steps = config.rounds * config.client_steps
    if total_steps < 1:
        raise ConfigurationError("total_steps must be >= 1")
    adam = adam.copy() if adam is not None else config.fresh_adam(len(model.params))
    losses: list[float] = []
    done, r = 0, start_round
    while done < total_steps:
        chunk = min(config.client_steps, total_steps - done)
        model, adam, chunk_losses = train_steps(model, data, chunk, config.batch_size, adam,
                                                client_rng(config.seed, client_id, r))
        losses.extend(chunk_losses)
        done += chunk
        r += 1
    return model, adam, losses


def history_rows(history: Sequence[RoundRecord], client_ids: Sequence[int]) -> list[list]:
    """Rows for the history CSV: round, one loss per client, aggregate loss."""
    header = ["round"] + [f"client_{i}_loss" for i in client_ids] + ["aggregate_loss"]
    rows: list[list] = [header]
    for rec in history:
        rows.append([rec.round + 1] + [
            repr(rec.client_losses[i]) if i in rec.client_losses else "" for i in client_ids
        ] + [repr(rec.aggregate_loss)])
    return rows
