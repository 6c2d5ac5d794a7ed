"""Dense numpy kernel: flat parameter vectors, an MLP noise predictor and Adam.

Everything runs in float64. The MLP conditions on the diffusion timestep by
concatenating a sinusoidal embedding of ``t`` to the input of the first layer.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, NonFiniteError

Layout = tuple[tuple[str, tuple[int, ...]], ...]


def _segment_size(shape: Sequence[int]) -> int:
    size = 1
    for dim in shape:
        size *= int(dim)
    return size


@dataclass(eq=False)
class ParamVector:
    """A flat float64 array partitioned into named, shaped segments."""

    values: np.ndarray
    layout: Layout

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        self.layout = tuple((str(n), tuple(int(d) for d in s)) for n, s in self.layout)
        expected = sum(_segment_size(s) for _, s in self.layout)
        if self.values.size != expected:
            raise ConfigurationError(
                f"parameter vector has {self.values.size} values, layout needs {expected}"
            )
        names = [n for n, _ in self.layout]
        if len(set(names)) != len(names):
            raise ConfigurationError("segment names must be unique")
        self._offsets = {}
        offset = 0
        for name, shape in self.layout:
            size = _segment_size(shape)
            self._offsets[name] = (offset, offset + size, shape)
            offset += size

    @classmethod
    def zeros(cls, layout: Layout) -> "ParamVector":
        size = sum(_segment_size(s) for _, s in layout)
        return cls(np.zeros(size), layout)

    @classmethod
    def from_segments(cls, segments: Iterable[tuple[str, np.ndarray]]) -> "ParamVector":
        segments = [(name, np.asarray(arr, dtype=np.float64)) for name, arr in segments]
        layout = tuple((name, arr.shape) for name, arr in segments)
        if not segments:
            return cls(np.zeros(0), ())
        return cls(np.concatenate([arr.reshape(-1) for _, arr in segments]), layout)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.layout]

    def __len__(self) -> int:
        return self.values.size

    def __contains__(self, name: str) -> bool:
        return name in self._offsets

    def segment(self, name: str) -> np.ndarray:
        """Shaped view into the flat buffer (writes go through)."""
        try:
            start, stop, shape = self._offsets[name]
        except KeyError:
            raise KeyError(f"no segment named {name!r}") from None
        return self.values[start:stop].reshape(shape)

    def segment_of_index(self, index: int) -> str:
        for name, (start, stop, _) in self._offsets.items():
            if start <= index < stop:
                return name
        raise IndexError(index)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.values), self.layout)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values, self.layout)

    def first_layout_mismatch(self, other: "ParamVector") -> str | None:
        """Name of the first segment where the layouts diverge, or None."""
        for (n1, s1), (n2, s2) in zip(self.layout, other.layout):
            if n1 != n2 or s1 != s2:
                return n1
        if len(self.layout) != len(other.layout):
            longer = self.layout if len(self.layout) > len(other.layout) else other.layout
            return longer[min(len(self.layout), len(other.layout))][0]
        return None

    def _check(self, other: "ParamVector") -> None:
        bad = self.first_layout_mismatch(other)
        if bad is not None:
            raise ConfigurationError(f"parameter layouts differ at segment {bad!r}")

    def __add__(self, other: "ParamVector") -> "ParamVector":
        self._check(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ParamVector") -> "ParamVector":
        self._check(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: float) -> "ParamVector":
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    def equals(self, other: "ParamVector") -> bool:
        """Bitwise equality of layout and payload."""
        return self.layout == other.layout and self.values.tobytes() == other.values.tobytes()

    # serialization: u32 n_segments, then per segment u32 name_len, name, u32 rank,
    # u64 dims...; then the payload as little-endian float64.
    def to_bytes(self) -> bytes:
        parts = [struct.pack("<I", len(self.layout))]
        for name, shape in self.layout:
            raw = name.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)))
            parts.append(raw)
            parts.append(struct.pack("<I", len(shape)))
            parts.append(struct.pack(f"<{len(shape)}Q", *shape))
        parts.append(self.values.astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes, offset: int = 0) -> tuple["ParamVector", int]:
        """Decode a vector starting at ``offset``; returns it and the end offset."""
        try:
            (n_seg,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            layout = []
            for _ in range(n_seg):
                (name_len,) = struct.unpack_from("<I", blob, offset)
                offset += 4
                name = blob[offset:offset + name_len].decode("utf-8")
                offset += name_len
                (rank,) = struct.unpack_from("<I", blob, offset)
                offset += 4
                dims = struct.unpack_from(f"<{rank}Q", blob, offset)
                offset += 8 * rank
                layout.append((name, tuple(dims)))
            size = sum(_segment_size(s) for _, s in layout)
            end = offset + 8 * size
            if end > len(blob):
                raise ValueError("truncated payload")
            values = np.frombuffer(blob[offset:end], dtype="<f8").astype(np.float64)
        except (struct.error, UnicodeDecodeError, ValueError) as exc:
            raise ConfigurationError(f"corrupt parameter block: {exc}") from exc
        return cls(values, tuple(layout)), end


def concat_params(*vectors: ParamVector) -> ParamVector:
    layout = tuple(seg for vec in vectors for seg in vec.layout)
    values = np.concatenate([vec.values for vec in vectors]) if vectors else np.zeros(0)
    return ParamVector(values, layout)


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    output_dim: int
    hidden_layers: int = 4
    hidden_width: int = 1024
    time_embed_dim: int = 16
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ConfigurationError("need at least one hidden layer of width >= 1")
        if self.input_dim < 1 or self.input_dim != self.output_dim:
            raise ConfigurationError(
                f"noise predictor must map R^d to R^d, got {self.input_dim} -> {self.output_dim}"
            )
        if self.time_embed_dim < 0 or self.time_embed_dim % 2:
            raise ConfigurationError(f"time_embed_dim must be even, got {self.time_embed_dim}")
        if self.activation not in ("relu", "silu"):
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    def layout(self) -> Layout:
        widths = [self.input_dim + self.time_embed_dim]
        widths += [self.hidden_width] * self.hidden_layers
        widths.append(self.output_dim)
        segments = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            segments.append((f"mlp.W{i}", (fan_in, fan_out)))
            segments.append((f"mlp.b{i}", (fan_out,)))
        return tuple(segments)

    @property
    def n_linear(self) -> int:
        return self.hidden_layers + 1


def init_mlp_params(config: MlpConfig, rng: np.random.Generator) -> ParamVector:
    """Glorot-uniform weights, zero biases."""
    segments = []
    for name, shape in config.layout():
        if name.startswith("mlp.W"):
            fan_in, fan_out = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            segments.append((name, rng.uniform(-bound, bound, size=shape)))
        else:
            segments.append((name, np.zeros(shape)))
    return ParamVector.from_segments(segments)


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal timestep encoding, interleaved as (sin, cos) pairs.

    Accepts a scalar timestep (returns ``(dim,)``) or an array of timesteps
    (returns ``(len(t), dim)``).
    """
    if dim % 2 or dim < 0:
        raise ConfigurationError(f"time embedding dim must be even, got {dim}")
    t_arr = np.asarray(t, dtype=np.float64)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    k = np.arange(dim // 2, dtype=np.float64)
    freqs = 1.0 / np.power(10000.0, 2.0 * k / dim) if dim else k
    angles = t_arr[:, None] * freqs[None, :]
    out = np.empty((t_arr.size, dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out[0] if scalar else out


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z * expit(z)


def _activate_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(np.float64)
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each linear layer
    preacts: list[np.ndarray] = field(default_factory=list)  # hidden pre-activations


def _check_batch(config: MlpConfig, x_batch: np.ndarray, t_batch: np.ndarray) -> None:
    if x_batch.ndim != 2 or x_batch.shape[1] != config.input_dim:
        raise ConfigurationError(
            f"expected input of shape (B, {config.input_dim}), got {x_batch.shape}"
        )
    if t_batch.shape != (x_batch.shape[0],):
        raise ConfigurationError(
            f"expected {x_batch.shape[0]} timesteps, got shape {t_batch.shape}"
        )


def forward_with_cache(params: ParamVector, config: MlpConfig, x_batch, t_batch):
    """Forward pass that also returns the activations the backward pass needs."""
    x_batch = np.asarray(x_batch, dtype=np.float64)
    t_batch = np.asarray(t_batch)
    _check_batch(config, x_batch, t_batch)
    h = x_batch
    if config.time_embed_dim:
        h = np.concatenate([x_batch, time_embedding(t_batch, config.time_embed_dim)], axis=1)
    cache = ForwardCache()
    for i in range(config.n_linear):
        cache.inputs.append(h)
        z = h @ params.segment(f"mlp.W{i}") + params.segment(f"mlp.b{i}")
        if i < config.hidden_layers:
            cache.preacts.append(z)
            h = _activate(z, config.activation)
        else:
            h = z
    return h, cache


def backward_from_cache(params: ParamVector, config: MlpConfig, cache: ForwardCache, grad_output):
    """Gradients w.r.t. every MLP segment and w.r.t. the (non-time) input.

    The returned ParamVector shares ``params``' layout; segments the MLP does
    not read (e.g. embedding tables) are zero.
    """
    g = np.asarray(grad_output, dtype=np.float64)
    batch = cache.inputs[0].shape[0]
    if g.shape != (batch, config.output_dim):
        raise ConfigurationError(
            f"grad_output has shape {g.shape}, forward output was {(batch, config.output_dim)}"
        )
    grads = params.zeros_like()
    for i in reversed(range(config.n_linear)):
        if i < config.hidden_layers:
            g = g * _activate_grad(cache.preacts[i], config.activation)
        grads.segment(f"mlp.W{i}")[...] = cache.inputs[i].T @ g
        grads.segment(f"mlp.b{i}")[...] = g.sum(axis=0)
        g = g @ params.segment(f"mlp.W{i}").T
    return grads, g[:, : config.input_dim]


def mlp_forward(params: ParamVector, config: MlpConfig, x_batch, t_batch) -> np.ndarray:
    return forward_with_cache(params, config, x_batch, t_batch)[0]


def mlp_backward(params, config, x_batch, t_batch, grad_output, return_input_grad=False):
    """Backpropagate ``grad_output`` (dL/d output) to dL/d params."""
    _, cache = forward_with_cache(params, config, x_batch, t_batch)
    grads, input_grad = backward_from_cache(params, config, cache, grad_output)
    if return_input_grad:
        return grads, input_grad
    return grads


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n_params: int, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), 0, lr, beta1, beta2, eps)

    def copy(self) -> "AdamState":
        return replace(self, m=self.m.copy(), v=self.v.copy())


def adam_step(params: ParamVector, grads: ParamVector, state: AdamState):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if grads.layout != params.layout:
        bad = params.first_layout_mismatch(grads)
        raise ConfigurationError(f"gradient layout differs from parameters at {bad!r}")
    if state.m.size != len(params) or state.v.size != len(params):
        raise ConfigurationError("Adam moments do not match the parameter count")
    g = grads.values
    finite = np.isfinite(g)
    if not finite.all():
        bad = grads.segment_of_index(int(np.argmin(finite)))
        raise NonFiniteError(f"non-finite gradient in segment {bad!r}")
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    new_values = params.values - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params.with_values(new_values), replace(state, m=m, v=v, step=step)
