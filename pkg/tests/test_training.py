import math
from dataclasses import replace

import numpy as np
import pytest
import torch

from conftest import compact_geometry, make_dataset
from src.services.exwave.data import encode_batch
from src.services.exwave.exceptions import (
    ConfigError,
    InvalidDimensionError,
    NonFiniteGradientError,
    NonFiniteScoreError,
    TrainingDivergedError,
)
from src.services.exwave.field_core import random_field
from src.services.exwave import training
from src.services.exwave.training import (
    AdamState,
    TrainConfig,
    adam_step,
    batch_loss_and_grads,
    evaluate,
    grad_check,
    network_for,
    new_train_state,
    run_ablation,
    softmax_cross_entropy,
    train,
    train_epoch,
)


def tiny_config(**overrides) -> TrainConfig:
    settings = dict(epochs=1, batch_size=8, layer_count=2, side=8, master_seed=0)
    settings.update(overrides)
    return TrainConfig(**settings)


def tiny_network(config: TrainConfig):
    return network_for(config, compact_geometry(config.side))


def test_uniform_scores_give_log_ten():
    loss, grads = softmax_cross_entropy(torch.full((10,), 3.5, dtype=torch.float64), 4)
    assert float(loss) == pytest.approx(math.log(10), abs=1e-12)
    assert abs(float(grads.sum())) < 1e-12


def test_score_gradients_sum_to_zero(generator):
    scores = torch.randn((16, 10), generator=generator, dtype=torch.float64) * 5
    labels = torch.arange(16) % 10
    losses, grads = softmax_cross_entropy(scores, labels)
    assert losses.shape == (16,)
    assert float(grads.sum(dim=-1).abs().max()) < 1e-12


def test_large_scores_do_not_overflow():
    scores = torch.zeros(10, dtype=torch.float64)
    scores[0] = 1000.0
    loss, grads = softmax_cross_entropy(scores, 0)
    assert math.isfinite(float(loss))
    assert float(loss) == pytest.approx(0.0, abs=1e-12)
    assert bool(torch.isfinite(grads).all())


def test_cross_entropy_rejects_bad_inputs():
    with pytest.raises(NonFiniteScoreError):
        softmax_cross_entropy(torch.tensor([float("nan")] + [0.0] * 9, dtype=torch.float64), 0)
    with pytest.raises(InvalidDimensionError):
        softmax_cross_entropy(torch.zeros(10, dtype=torch.float64), 10)


def test_adam_with_zero_gradients_leaves_parameters_unchanged():
    config = tiny_config()
    params = {"layer_1": torch.tensor([0.3, 1.7], dtype=torch.float64)}
    updated, state = adam_step(params, {"layer_1": torch.zeros(2, dtype=torch.float64)}, AdamState(), config)
    assert torch.equal(updated["layer_1"], params["layer_1"])
    assert state.step == 1


def test_adam_decays_moments_on_zero_gradients():
    config = tiny_config()
    state = AdamState(
        m={"w": torch.ones(3, dtype=torch.float64)},
        v={"w": torch.ones(3, dtype=torch.float64)},
        step=4,
    )
    _, state = adam_step({"w": torch.zeros(3, dtype=torch.float64)}, {"w": torch.zeros(3, dtype=torch.float64)}, state, config)
    assert torch.allclose(state.m["w"], torch.full((3,), 0.9, dtype=torch.float64))
    assert torch.allclose(state.v["w"], torch.full((3,), 0.999, dtype=torch.float64))
    assert state.step == 5


@pytest.mark.parametrize("g", [2.0, -0.003])
def test_first_adam_step_moves_by_the_learning_rate(g):
    config = tiny_config(learning_rate=0.01)
    params = {"p": torch.tensor([0.5], dtype=torch.float64)}
    updated, _ = adam_step(params, {"p": torch.tensor([g], dtype=torch.float64)}, AdamState(), config)
    delta = float(updated["p"][0] - 0.5)
    assert abs(abs(delta) - 0.01) < 1e-5
    assert math.copysign(1.0, delta) == -math.copysign(1.0, g)


def test_adam_names_the_non_finite_parameter():
    state = AdamState()
    params = {"layer_1": torch.zeros(2, dtype=torch.float64), "express_weights": torch.zeros(2, dtype=torch.float64)}
    grads = {"layer_1": torch.zeros(2, dtype=torch.float64), "express_weights": torch.tensor([1.0, float("inf")], dtype=torch.float64)}
    with pytest.raises(NonFiniteGradientError) as excinfo:
        adam_step(params, grads, state, tiny_config())
    assert excinfo.value.parameter == "express_weights"
    assert state.step == 0


def test_train_config_validation():
    with pytest.raises(ConfigError):
        tiny_config(epochs=0)
    with pytest.raises(ConfigError):
        tiny_config(batch_size=0)
    with pytest.raises(ConfigError):
        tiny_config(ablation_mode="sideways")
    assert tiny_config(ablation_mode="full").mode_flags() == (True, True, False)
    assert tiny_config(ablation_mode="shift_only").mode_flags() == (True, False, False)
    assert tiny_config(ablation_mode="express_only").mode_flags() == (False, True, False)
    assert tiny_config(ablation_mode="neither").mode_flags() == (False, False, False)
    assert tiny_config(ablation_mode="dense_baseline").mode_flags() == (False, False, True)


def test_zero_learning_rate_keeps_parameters():
    config = tiny_config(learning_rate=0.0, batch_size=1)
    net = tiny_network(config)
    before = [p.clone() for _, p in net.parameter_vectors()]
    state = new_train_state(net)
    train_epoch(net, make_dataset(1), state, config, progress=False)
    for (_, after), original in zip(net.parameter_vectors(), before):
        assert torch.equal(after, original)
    row = state.history[0]
    assert row.epoch == 1
    assert math.isfinite(row.train_loss)
    assert math.isnan(row.test_accuracy)
    assert row.phase_drift == [0.0, 0.0]


def test_epoch_records_instrumentation():
    config = tiny_config(batch_size=4)
    net = tiny_network(config)
    data = make_dataset(10)
    state = new_train_state(net)
    train_epoch(net, data, state, config, eval_data=make_dataset(10, seed=3), progress=False)
    row = state.history[0]
    assert len(row.grad_norms) == 2
    assert all(g > 0 for g in row.grad_norms)
    assert len(row.express_weights) == 2
    assert len(state.batch_grad_ratios[0]) == 3
    assert row.grad_ratio_median > 0
    assert 0.0 <= row.test_accuracy <= 1.0
    assert any(d > 0 for d in row.phase_drift)
    assert state.adam.step == 3


def test_training_is_deterministic():
    config = tiny_config(epochs=2, batch_size=4)
    data = make_dataset(12)
    histories, parameters = [], []
    for _ in range(2):
        net = tiny_network(config)
        state = train(net, data, config, eval_data=make_dataset(6, seed=9), progress=False)
        histories.append(state.history)
        parameters.append([p.clone() for _, p in net.parameter_vectors()])
    assert histories[0] == histories[1]
    for a, b in zip(*parameters):
        assert torch.equal(a, b)


def test_tiny_subset_loss_goes_down():
    config = tiny_config(epochs=20, batch_size=64, layer_count=3, side=28)
    net = tiny_network(config)
    state = train(net, make_dataset(50), config, progress=False)
    assert state.history[-1].train_loss < state.history[0].train_loss


def test_first_step_decreases_the_loss_for_most_seeds():
    decreases = 0
    data = make_dataset(16)
    for seed in range(10):
        config = tiny_config(master_seed=seed, learning_rate=1e-4)
        net = tiny_network(config)
        fields, labels = encode_batch(data, np.arange(len(data)), net.n)
        loss, grads, _ = batch_loss_and_grads(net, fields, labels)
        updated, _ = adam_step(dict(net.parameter_vectors()), grads.as_named(net), AdamState(), config)
        for name, values in updated.items():
            net.set_parameter(name, values)
        new_loss, _, _ = batch_loss_and_grads(net, fields, labels)
        decreases += new_loss < loss
    assert decreases >= 9


def test_non_finite_loss_aborts_with_context(monkeypatch):
    config = tiny_config(batch_size=4)
    net = tiny_network(config)

    def diverged(net, fields, labels):
        return float("nan"), None, None

    monkeypatch.setattr(training, "batch_loss_and_grads", diverged)
    with pytest.raises(TrainingDivergedError, match="epoch 1, batch 0"):
        train_epoch(net, make_dataset(8), new_train_state(net), config, progress=False)


def test_evaluate_is_near_chance_for_an_untrained_network():
    net = tiny_network(tiny_config())
    data = make_dataset(500, seed=21)
    accuracy = evaluate(net, data)
    assert 0.02 <= accuracy <= 0.25
    assert evaluate(net, data) == accuracy


def test_evaluate_rejects_empty_data():
    net = tiny_network(tiny_config())
    with pytest.raises(InvalidDimensionError):
        evaluate(net, make_dataset(0))


def test_argmax_is_invariant_under_monotone_transforms(generator):
    scores = torch.rand((50, 10), generator=generator, dtype=torch.float64) * 4
    assert torch.equal(torch.argmax(scores, dim=-1), torch.argmax(torch.exp(scores) + 3.0, dim=-1))
    ties = torch.tensor([[1.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]], dtype=torch.float64)
    assert int(torch.argmax(ties, dim=-1)) == 1


def test_ablation_trains_the_four_modes_in_order():
    config = tiny_config(epochs=2, batch_size=5)
    rows = run_ablation(config, compact_geometry(8), make_dataset(10), make_dataset(10, seed=4), progress=False)
    assert [row.mode for row in rows] == ["full", "shift_only", "express_only", "neither"]
    for row in rows:
        assert [r.epoch for r in row.history] == [1, 2]
        assert 0.0 <= row.accuracy <= 1.0


def test_ablation_modes_share_seeds():
    base = tiny_config()
    full = network_for(base, compact_geometry(8))
    shift_only = network_for(replace(base, ablation_mode="shift_only"), compact_geometry(8))
    neither = network_for(replace(base, ablation_mode="neither"), compact_geometry(8))
    assert [l.map.q for l in full.layers] == [l.map.q for l in shift_only.layers]
    assert all(l.map.q == (4, 4) for l in neither.layers)
    assert full.express_enabled and not shift_only.express_enabled


def test_grad_check_on_small_networks(generator):
    wavelet = network_for(tiny_config(), compact_geometry(8))
    report = grad_check(wavelet, random_field(8, generator), torch.tensor(6))
    assert report.passed
    assert report.max_relative_error < 1e-4

    dense = network_for(tiny_config(layer_count=1, ablation_mode="dense_baseline"), compact_geometry(8))
    assert grad_check(dense, random_field(8, generator), torch.tensor(1)).passed


def test_grad_check_catches_a_sign_flip(generator):
    net = network_for(tiny_config(), compact_geometry(8))
    report = grad_check(net, random_field(8, generator), torch.tensor(6), flip_sign=True)
    assert not report.passed
    assert report.max_relative_error == pytest.approx(2.0, rel=1e-3)
