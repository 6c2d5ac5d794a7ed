"""Gaussian diffusion: noise schedule, forward noising, epsilon-prediction loss,
Adam training loop and ancestral sampling."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data.codec import EMBED_PREFIX, EmbeddingCodec, EncodedTable, embed
from .errors import ConfigurationError, NonFiniteError
from .nn import (
    AdamState,
    MlpConfig,
    ParamVector,
    adam_step,
    backward_from_cache,
    concat_params,
    forward_with_cache,
    init_mlp_params,
    mlp_forward,
)


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_bar: np.ndarray

    @property
    def T(self) -> int:
        return int(self.beta.size)

    @classmethod
    def from_betas(cls, beta) -> "NoiseSchedule":
        beta = np.asarray(beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise ConfigurationError("beta must be a non-empty 1-D array")
        if not np.all((beta > 0) & (beta < 1)):
            raise ConfigurationError("every beta_t must lie in (0, 1)")
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        return cls(beta, alpha, alpha_bar, 1.0 - alpha_bar)


def linear_schedule(T: int = 500, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 2:
        raise ConfigurationError(f"need at least 2 diffusion steps, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigurationError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    t = np.arange(T, dtype=np.float64)
    return NoiseSchedule.from_betas(beta_start + t * (beta_end - beta_start) / (T - 1))


def forward_sample(schedule: NoiseSchedule, x0, t, noise) -> np.ndarray:
    """x_t = sqrt(alpha_bar_t) x0 + sqrt(beta_bar_t) noise.

    ``t`` may be a scalar or one timestep per row of ``x0``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ConfigurationError(f"x0 {x0.shape} and noise {noise.shape} differ in shape")
    t = np.asarray(t)
    if np.any(t < 0) or np.any(t >= schedule.T):
        raise ConfigurationError(f"timestep outside [0, {schedule.T})")
    a = np.sqrt(schedule.alpha_bar[t])
    b = np.sqrt(schedule.beta_bar[t])
    if x0.ndim == 2 and t.ndim == 1:
        a, b = a[:, None], b[:, None]
    return a * x0 + b * noise


@dataclass
class DiffusionModel:
    """Noise predictor plus the embedding tables it trains jointly.

    ``params`` holds the MLP segments (``mlp.*``) followed by one
    ``emb.<column>`` table per categorical column.
    """

    schedule: NoiseSchedule
    params: ParamVector
    config: MlpConfig
    n_numeric: int
    embed_columns: tuple[str, ...] = ()
    embed_dim: int = 2
    train_embeddings: bool = True

    @property
    def data_dim(self) -> int:
        return self.config.input_dim

    def embedding_tables(self) -> list[np.ndarray]:
        return [self.params.segment(EMBED_PREFIX + c) for c in self.embed_columns]

    def latent(self, batch: EncodedTable) -> np.ndarray:
        return embed(batch, self.embedding_tables())

    def with_params(self, params: ParamVector) -> "DiffusionModel":
        return replace(self, params=params)

    def codec(self, template: EmbeddingCodec) -> EmbeddingCodec:
        """``template`` with embedding tables replaced by the trained ones."""
        return template.with_params(self.params)


def init_model(
    schedule: NoiseSchedule,
    n_numeric: int,
    codec: EmbeddingCodec | None = None,
    *,
    hidden_layers: int = 4,
    hidden_width: int = 1024,
    time_embed_dim: int = 16,
    activation: str = "relu",
    seed: int = 0,
    train_embeddings: bool = True,
) -> DiffusionModel:
    embed_columns = tuple(codec.columns) if codec is not None else ()
    embed_dim = codec.dim if codec is not None else 2
    d = n_numeric + embed_dim * len(embed_columns)
    config = MlpConfig(d, d, hidden_layers, hidden_width, time_embed_dim, activation)
    mlp = init_mlp_params(config, np.random.default_rng([seed, 0]))
    params = concat_params(mlp, codec.to_params()) if codec is not None else mlp
    return DiffusionModel(schedule, params, config, n_numeric, embed_columns, embed_dim,
                          train_embeddings)


def loss_batch(model: DiffusionModel, batch: EncodedTable, rng: np.random.Generator,
               t=None, noise=None):
    """Mean over rows of ||eps - eps_theta(x_t, t)||^2 and its gradient.

    Timesteps (uniform per row) and noise are drawn from ``rng`` unless given.
    The gradient includes the embedding tables through x_t's dependence on x0.
    """
    n = len(batch)
    if n == 0:
        raise ConfigurationError("empty batch")
    T = model.schedule.T
    if t is None:
        t = rng.integers(0, T, size=n)
    t = np.asarray(t)
    if noise is None:
        noise = rng.standard_normal((n, model.data_dim))
    x0 = model.latent(batch)
    x_t = forward_sample(model.schedule, x0, t, noise)
    pred, cache = forward_with_cache(model.params, model.config, x_t, t)
    resid = pred - noise
    per_row = np.sum(resid * resid, axis=1)
    loss = float(per_row.mean())
    if not np.isfinite(loss):
        bad = int(np.flatnonzero(~np.isfinite(per_row))[0])
        raise NonFiniteError(f"non-finite denoising loss at timestep {int(t[bad])}")
    grads, input_grad = backward_from_cache(model.params, model.config, cache, 2.0 * resid / n)
    if model.embed_columns and model.train_embeddings:
        grad_x0 = input_grad * np.sqrt(model.schedule.alpha_bar[t])[:, None]
        offset = model.n_numeric
        for j, column in enumerate(model.embed_columns):
            block = grad_x0[:, offset:offset + model.embed_dim]
            np.add.at(grads.segment(EMBED_PREFIX + column), batch.categorical[:, j], block)
            offset += model.embed_dim
    return loss, grads


def train_steps(model: DiffusionModel, data: EncodedTable, steps: int, batch_size: int,
                adam: AdamState, rng: np.random.Generator):
    """Run ``steps`` minibatch Adam updates. Returns ``(model, adam, losses)``.

    Minibatches are drawn without replacement, or with replacement when the
    data holds fewer rows than ``batch_size``.
    """
    if steps < 1:
        raise ConfigurationError(f"steps must be >= 1, got {steps}")
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    n = len(data)
    if n == 0:
        raise ConfigurationError("cannot train on an empty table")
    params = model.params
    losses = []
    for _ in range(steps):
        idx = rng.choice(n, size=batch_size, replace=n < batch_size)
        loss, grads = loss_batch(model.with_params(params), data.take(idx), rng)
        params, adam = adam_step(params, grads, adam)
        losses.append(loss)
    return model.with_params(params), adam, losses


def sample(model: DiffusionModel, n_rows: int, rng: np.random.Generator) -> np.ndarray:
    """Ancestral sampling from x_T ~ N(0, I) with sigma_t^2 = beta_t and no
    noise at the final step."""
    sch = model.schedule
    x = rng.standard_normal((n_rows, model.data_dim))
    if n_rows == 0:
        return x
    for t in range(sch.T - 1, -1, -1):
        eps = mlp_forward(model.params, model.config, x, np.full(n_rows, t))
        mean = (x - sch.beta[t] / np.sqrt(sch.beta_bar[t]) * eps) / np.sqrt(sch.alpha[t])
        if t > 0:
            x = mean + np.sqrt(sch.beta[t]) * rng.standard_normal(x.shape)
        else:
            x = mean
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(f"non-finite sample at timestep {t}")
    return x
