import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tabfed.data import TableData, TableSchema, Column, init_embeddings
from tabfed.data.codec import EncodedTable
from tabfed.diffusion import (
    NoiseSchedule,
    forward_sample,
    init_model,
    linear_schedule,
    loss_batch,
    sample,
    train_steps,
)
from tabfed.errors import ConfigurationError, NonFiniteError
from tabfed.nn import AdamState, ParamVector


def test_default_schedule_endpoints():
    sch = linear_schedule()
    assert sch.T == 500
    assert sch.beta[0] == pytest.approx(1e-4, abs=1e-15)
    assert sch.beta[-1] == pytest.approx(0.02, abs=1e-15)


def test_two_step_schedule():
    sch = linear_schedule(2, 0.5, 0.5)
    np.testing.assert_array_equal(sch.beta, [0.5, 0.5])
    np.testing.assert_array_equal(sch.alpha_bar, [0.5, 0.25])


@pytest.mark.parametrize("T,start,end", [(2, 0.5, 0.5), (100, 1e-4, 0.02), (500, 1e-4, 0.02), (1000, 1e-3, 0.05)])
def test_schedule_matches_recursive_product(T, start, end):
    sch = linear_schedule(T, start, end)
    prod = 1.0
    for t in range(T):
        prod = prod * (1.0 - sch.beta[t])
        assert abs(sch.alpha_bar[t] - prod) < 1e-12
        assert abs((1.0 - prod) - sch.beta_bar[t]) < 1e-12
    np.testing.assert_allclose(sch.alpha + sch.beta, 1.0, rtol=0, atol=1e-12)


@pytest.mark.parametrize("args", [(1,), (10, 0.0, 0.1), (10, 0.2, 0.1), (10, 1e-4, 1.0)])
def test_schedule_rejects_bad_bounds(args):
    with pytest.raises(ConfigurationError):
        linear_schedule(*args)


def test_forward_sample_noiseless_mean():
    sch = linear_schedule(100)
    x0 = np.array([[1.0, -2.0, 0.5]])
    out = forward_sample(sch, x0, np.array([37]), np.zeros_like(x0))
    np.testing.assert_allclose(out, np.sqrt(sch.alpha_bar[37]) * x0, rtol=0, atol=1e-15)


def test_forward_sample_late_step_is_almost_noise():
    sch = linear_schedule(2000, 1e-4, 0.02)
    t = int(np.flatnonzero(sch.alpha_bar < 1e-4)[0])
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=(50, 4))
    eps = rng.normal(size=(50, 4))
    out = forward_sample(sch, x0, np.full(50, t), eps)
    assert np.max(np.abs(out - eps)) < 0.05 * np.max(np.abs(eps))


@pytest.mark.parametrize("k", [0, 1, 10, 99])
def test_iterated_single_steps_match_closed_form_mean(k):
    sch = linear_schedule(100)
    x0 = np.array([0.7, -1.3, 2.0])
    x = x0.copy()
    for t in range(k + 1):
        x = np.sqrt(1.0 - sch.beta[t]) * x  # one noising step with zero noise
    np.testing.assert_allclose(x, np.sqrt(sch.alpha_bar[k]) * x0, rtol=0, atol=1e-10)


@pytest.mark.parametrize("t", [1, 250, 499])
def test_forward_sample_variance(t):
    sch = linear_schedule()
    rng = np.random.default_rng(t)
    eps = rng.standard_normal((100_000, 2))
    out = forward_sample(sch, np.zeros_like(eps), t, eps)
    var = out.var(axis=0)
    np.testing.assert_allclose(var, sch.beta_bar[t], rtol=0.03)


def test_forward_sample_rejects_bad_input():
    sch = linear_schedule(10)
    with pytest.raises(ConfigurationError):
        forward_sample(sch, np.zeros((2, 3)), 0, np.zeros((2, 2)))
    with pytest.raises(ConfigurationError):
        forward_sample(sch, np.zeros(3), 10, np.zeros(3))


def zero_model(d=4, T=50):
    model = init_model(linear_schedule(T), d, hidden_layers=1, hidden_width=4, time_embed_dim=2)
    return model.with_params(ParamVector.zeros(model.params.layout))


def test_loss_is_zero_when_prediction_equals_noise():
    # a zero network predicts zero, so zero noise is predicted exactly
    model = zero_model()
    batch = EncodedTable.from_numeric(np.random.default_rng(0).normal(size=(16, 4)))
    loss, grads = loss_batch(model, batch, None, t=np.arange(16) % 50, noise=np.zeros((16, 4)))
    assert loss == 0.0
    assert not np.any(grads.values)


def test_zero_predictor_loss_is_about_d():
    model = zero_model(d=4)
    batch = EncodedTable.from_numeric(np.zeros((256, 4)))
    loss, _ = loss_batch(model, batch, np.random.default_rng(11))
    assert abs(loss - 4.0) < 0.2 * 4.0


def toy_mixed_model(seed=0, activation="silu"):
    schema = TableSchema((Column("a", "numeric"), Column("c", "categorical"), Column("k", "categorical")))
    vocab = {"c": ["x", "y", "z"], "k": ["p", "q"]}
    codec = init_embeddings(schema, vocab, seed)
    model = init_model(linear_schedule(20), 1, codec, hidden_layers=2, hidden_width=4,
                       time_embed_dim=4, activation=activation, seed=seed)
    rng = np.random.default_rng(seed + 100)
    batch = EncodedTable(rng.normal(size=(7, 1)),
                         np.column_stack([rng.integers(0, 3, 7), rng.integers(0, 2, 7)]))
    return model, batch


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("activation", ["relu", "silu"])
def test_loss_gradient_matches_finite_differences(seed, activation):
    model, batch = toy_mixed_model(seed, activation)
    rng = np.random.default_rng(seed)
    t = rng.integers(0, model.schedule.T, len(batch))
    noise = rng.standard_normal((len(batch), model.data_dim))
    _, grads = loss_batch(model, batch, None, t=t, noise=noise)

    def f(values):
        return loss_batch(model.with_params(model.params.with_values(values)), batch, None, t=t, noise=noise)[0]

    h = 1e-5
    values = model.params.values
    fd = np.zeros_like(values)
    for i in range(values.size):
        plus, minus = values.copy(), values.copy()
        plus[i] += h
        minus[i] -= h
        fd[i] = (f(plus) - f(minus)) / (2 * h)
    scale = np.maximum(np.abs(fd), 1e-3)
    assert np.max(np.abs(grads.values - fd) / scale) < 1e-5
    # the embedding segments do receive signal
    assert np.any(grads.segment("emb.c")) and np.any(grads.segment("emb.k"))


def test_frozen_embeddings_get_no_gradient():
    model, batch = toy_mixed_model()
    model.train_embeddings = False
    _, grads = loss_batch(model, batch, np.random.default_rng(0))
    assert not np.any(grads.segment("emb.c"))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_loss_reports_timestep():
    model = zero_model()
    batch = EncodedTable.from_numeric(np.full((3, 4), np.inf))
    with pytest.raises(NonFiniteError, match="timestep 7"):
        loss_batch(model, batch, None, t=np.array([7, 7, 7]), noise=np.zeros((3, 4)))


def small_model(seed=0, T=20):
    return init_model(linear_schedule(T), 1, hidden_layers=2, hidden_width=16, time_embed_dim=4, seed=seed)


def test_train_steps_requires_positive_steps():
    model = small_model()
    data = EncodedTable.from_numeric(np.zeros(10))
    with pytest.raises(ConfigurationError):
        train_steps(model, data, 0, 4, AdamState.fresh(model.params.values.size, 1e-3), np.random.default_rng(0))


def test_train_steps_deterministic():
    data = EncodedTable.from_numeric(np.random.default_rng(5).normal(size=40))
    runs = []
    for _ in range(2):
        model = small_model()
        adam = AdamState.fresh(model.params.values.size, 1e-3)
        model, adam, _ = train_steps(model, data, 15, 16, adam, np.random.default_rng(9))
        runs.append(model.params)
    assert runs[0].equals(runs[1])


def test_train_steps_descends_on_point_mass():
    model = small_model(T=50)
    data = EncodedTable.from_numeric(np.full(256, 1.5))
    adam = AdamState.fresh(model.params.values.size, 1e-3)
    _, _, losses = train_steps(model, data, 500, 64, adam, np.random.default_rng(0))
    assert np.mean(losses[-20:]) < 0.5 * np.mean(losses[:20])


def test_batch_larger_than_data_samples_with_replacement():
    model = small_model()
    data = EncodedTable.from_numeric(np.arange(3.0))
    adam = AdamState.fresh(model.params.values.size, 1e-3)
    _, _, losses = train_steps(model, data, 2, 32, adam, np.random.default_rng(0))
    assert len(losses) == 2


def test_single_step_sampling_by_hand():
    sch = NoiseSchedule.from_betas([0.36])
    model = init_model(sch, 2, hidden_layers=1, hidden_width=3, time_embed_dim=0)
    model = model.with_params(ParamVector.zeros(model.params.layout))
    out = sample(model, 3, np.random.default_rng(4))
    x_T = np.random.default_rng(4).standard_normal((3, 2))
    # zero predictor and no noise at the last step: x / sqrt(1 - 0.36)
    np.testing.assert_allclose(out, x_T / 0.8, rtol=0, atol=1e-15)


def test_sampling_deterministic_and_shaped():
    model = small_model()
    a = sample(model, 11, np.random.default_rng(1))
    b = sample(model, 11, np.random.default_rng(1))
    assert a.shape == (11, 1)
    np.testing.assert_array_equal(a, b)
    assert sample(model, 0, np.random.default_rng(1)).shape == (0, 1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_sampling_reports_nonfinite_timestep():
    model = small_model()
    values = model.params.values.copy()
    values[:] = 1e300
    with pytest.raises(NonFiniteError, match="timestep"):
        sample(model.with_params(model.params.with_values(values)), 4, np.random.default_rng(0))


@settings(max_examples=25, deadline=None)
@given(T=st.integers(2, 300), lo=st.floats(1e-5, 0.05), span=st.floats(0.0, 0.4))
def test_schedule_properties(T, lo, span):
    sch = linear_schedule(T, lo, lo + span)
    assert np.all(np.diff(sch.alpha_bar) < 0)
    np.testing.assert_allclose(sch.alpha_bar + sch.beta_bar, 1.0, rtol=0, atol=1e-12)
    np.testing.assert_allclose(sch.alpha_bar[1:], sch.alpha_bar[:-1] * sch.alpha[1:], rtol=0, atol=1e-12)


def test_learns_narrow_gaussian_in_raw_space():
    data = EncodedTable.from_numeric(np.random.default_rng(0).normal(3.0, 0.1, 5000))
    model = init_model(linear_schedule(100), 1, hidden_layers=2, hidden_width=128, seed=0)
    adam = AdamState.fresh(model.params.values.size, 1e-3)
    model, _, _ = train_steps(model, data, 2000, 512, adam, np.random.default_rng(1))
    out = sample(model, 2000, np.random.default_rng(2))
    assert np.all(np.isfinite(out))
    assert abs(out.mean() - 3.0) < 0.3
