"""
Training loop for the diffractive network.

Softmax cross-entropy on detector intensities, Adam with bias correction,
seeded per-epoch shuffling, per-layer gradient-norm instrumentation and the
four-way ablation (shift wavelet × expressway) plus the dense baseline.
"""

import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import torch
from tqdm import tqdm

from .config import ABLATION_MODES, DENSE_MODE, NUM_CLASSES
from .data import Dataset, batches, encode_batch
from .diffraction import PropagationGeometry
from .exceptions import (
    ConfigError,
    InvalidDimensionError,
    NonFiniteGradientError,
    NonFiniteScoreError,
    TrainingDivergedError,
)
from .field_core import REAL_DTYPE, ComplexField
from .logger import logger
from .network import Network, backward, build_network, forward
from .wavelet_phase import expand_phases

TRAIN_MODES = tuple(ABLATION_MODES) + (DENSE_MODE,)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    master_seed: int = 0
    ablation_mode: str = "full"
    dataset: str = "mnist"
    layer_count: int = 5
    side: int = 56

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        # zero is accepted here so a no-op step can be exercised; the CLI requires > 0
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.ablation_mode not in TRAIN_MODES:
            raise ConfigError(f"Unknown mode '{self.ablation_mode}', expected one of {TRAIN_MODES}")
        if self.layer_count < 1 or self.side < 1:
            raise ConfigError("layer_count and side must be positive")

    def mode_flags(self) -> Tuple[bool, bool, bool]:
        """(shift, express, dense) for the configured mode."""
        if self.ablation_mode == DENSE_MODE:
            return False, False, True
        shift, express = ABLATION_MODES[self.ablation_mode]
        return shift, express, False


@dataclass
class AdamState:
    m: Dict[str, torch.Tensor] = field(default_factory=dict)
    v: Dict[str, torch.Tensor] = field(default_factory=dict)
    step: int = 0


@dataclass
class MetricRow:
    epoch: int
    train_loss: float
    test_accuracy: float
    grad_norms: List[float]
    express_weights: List[float]
    grad_ratio_median: float
    phase_drift: List[float]


@dataclass
class TrainState:
    adam: AdamState
    initial_phases: List[torch.Tensor]
    epoch: int = 0
    history: List[MetricRow] = field(default_factory=list)
    batch_grad_ratios: List[List[float]] = field(default_factory=list)


@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_parameter: str
    checked: int
    passed: bool
    tolerance: float


@dataclass
class AblationRow:
    mode: str
    accuracy: float
    history: List[MetricRow]


def network_for(config: TrainConfig, geometry: PropagationGeometry) -> Network:
    if geometry.n != config.side:
        raise ConfigError(f"Geometry is built for n={geometry.n}, config asks for side {config.side}")
    shift, express, dense = config.mode_flags()
    return build_network(geometry, config.layer_count, config.master_seed, shift=shift, express=express, dense=dense)


def new_train_state(net: Network) -> TrainState:
    return TrainState(adam=AdamState(), initial_phases=[expand_phases(layer).clone() for layer in net.layers])


def softmax_cross_entropy(scores: torch.Tensor, label) -> Tuple[torch.Tensor, torch.Tensor]:
    """Per-sample loss −ln softmax(scores)[label] and its gradient p − onehot."""
    scores = torch.as_tensor(scores, dtype=REAL_DTYPE)
    labels = torch.as_tensor(label, dtype=torch.long)
    single = scores.ndim == 1
    if single:
        scores = scores.unsqueeze(0)
        labels = labels.reshape(1)
    if not bool(torch.isfinite(scores).all()):
        raise NonFiniteScoreError("Detector scores contain NaN or Inf")
    if bool(((labels < 0) | (labels >= NUM_CLASSES)).any()):
        raise InvalidDimensionError(f"Labels must lie in 0..{NUM_CLASSES - 1}")

    shifted = scores - scores.max(dim=-1, keepdim=True).values
    log_norm = torch.log(torch.exp(shifted).sum(dim=-1, keepdim=True))
    log_probs = shifted - log_norm
    loss = -log_probs.gather(-1, labels[:, None]).squeeze(-1)
    grads = torch.exp(log_probs)
    grads[torch.arange(len(labels)), labels] -= 1.0
    if single:
        return loss[0], grads[0]
    return loss, grads


def adam_step(
    params: Dict[str, torch.Tensor],
    grads: Dict[str, torch.Tensor],
    state: AdamState,
    config: TrainConfig,
) -> Tuple[Dict[str, torch.Tensor], AdamState]:
    for name, g in grads.items():
        if name not in params or g.shape != params[name].shape:
            raise InvalidDimensionError(f"Gradient '{name}' does not match any parameter shape")
        if not bool(torch.isfinite(g).all()):
            raise NonFiniteGradientError(name)

    state.step += 1
    beta1, beta2 = config.adam_beta1, config.adam_beta2
    bias1 = 1.0 - beta1 ** state.step
    bias2 = 1.0 - beta2 ** state.step

    updated = {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name, torch.zeros_like(p))
        v = state.v.get(name, torch.zeros_like(p))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        updated[name] = p - config.learning_rate * (m / bias1) / (torch.sqrt(v / bias2) + config.adam_eps)
    return updated, state


def batch_loss_and_grads(net: Network, fields: ComplexField, labels: torch.Tensor):
    """Mean batch loss, gradients of that mean, and the raw scores."""
    scores, cache = forward(net, fields)
    losses, score_grads = softmax_cross_entropy(scores, labels)
    count = losses.numel()
    total = 0.0
    for value in losses.tolist():
        total += value
    grads = backward(net, cache, score_grads / count)
    return total / count, grads, scores


def _phase_drift(net: Network, state: TrainState) -> List[float]:
    drift = []
    for layer, initial in zip(net.layers, state.initial_phases):
        delta = expand_phases(layer) - initial
        drift.append(float(torch.sqrt(torch.mean(delta * delta))))
    return drift


def train_epoch(
    net: Network,
    data: Dataset,
    state: TrainState,
    config: TrainConfig,
    eval_data: Optional[Dataset] = None,
    progress: bool = True,
) -> TrainState:
    if len(data) == 0:
        raise InvalidDimensionError("Cannot train on an empty dataset")
    epoch = state.epoch + 1
    batch_list = batches(data, config.batch_size, config.master_seed, epoch)

    loss_sum = 0.0
    norm_sums = [0.0] * net.depth
    ratios = []
    for batch_index, indices in enumerate(tqdm(batch_list, desc=f"Epoch {epoch}", leave=False, disable=not progress)):
        fields, labels = encode_batch(data, indices, net.n)
        loss, grads, _ = batch_loss_and_grads(net, fields, labels)
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"Non-finite loss at epoch {epoch}, batch {batch_index}")
        loss_sum += loss * len(indices)

        norms = grads.norms()
        for i, value in enumerate(norms):
            norm_sums[i] += value
        ratios.append(norms[-1] / norms[0] if norms[0] > 0 else math.inf)

        params = dict(net.parameter_vectors())
        updated, state.adam = adam_step(params, grads.as_named(net), state.adam, config)
        for name, values in updated.items():
            net.set_parameter(name, values)

    state.epoch = epoch
    state.batch_grad_ratios.append(ratios)
    row = MetricRow(
        epoch=epoch,
        train_loss=loss_sum / len(data),
        test_accuracy=evaluate(net, eval_data) if eval_data is not None and len(eval_data) else math.nan,
        grad_norms=[s / len(batch_list) for s in norm_sums],
        express_weights=net.express_weights.tolist(),
        grad_ratio_median=statistics.median(ratios),
        phase_drift=_phase_drift(net, state),
    )
    state.history.append(row)
    logger.log_epoch(row)
    return state


def predict(net: Network, fields: ComplexField) -> torch.Tensor:
    """Argmax class per sample; ties go to the lowest index."""
    scores, _ = forward(net, fields)
    return torch.argmax(scores, dim=-1)


def evaluate(net: Network, data: Dataset, batch_size: int = 256) -> float:
    """Fraction of samples whose brightest detector matches the label."""
    if len(data) == 0:
        raise InvalidDimensionError("Cannot evaluate on an empty dataset")
    correct = dark = 0
    for start in range(0, len(data), batch_size):
        indices = np.arange(start, min(start + batch_size, len(data)))
        fields, labels = encode_batch(data, indices, net.n)
        scores, _ = forward(net, fields)
        dark += int((scores.sum(dim=-1) == 0).sum())
        correct += int((torch.argmax(scores, dim=-1) == labels).sum())
    if dark:
        logger.warning(f"{dark} of {len(data)} samples put no energy on the detector; they count as class 0")
    return correct / len(data)


def train(
    net: Network,
    train_data: Dataset,
    config: TrainConfig,
    eval_data: Optional[Dataset] = None,
    on_epoch: Optional[Callable[[Network, TrainState], None]] = None,
    progress: bool = True,
) -> TrainState:
    state = new_train_state(net)
    if on_epoch:
        on_epoch(net, state)
    for _ in range(config.epochs):
        train_epoch(net, train_data, state, config, eval_data=eval_data, progress=progress)
        if on_epoch:
            on_epoch(net, state)
    return state


def run_ablation(
    base_config: TrainConfig,
    geometry: PropagationGeometry,
    train_data: Dataset,
    test_data: Dataset,
    progress: bool = True,
) -> List[AblationRow]:
    """Train the four shift/expressway modes with identical seeds and data order."""
    rows = []
    for mode in tqdm(ABLATION_MODES, desc="Ablation modes", disable=not progress):
        config = replace(base_config, ablation_mode=mode)
        logger.info(f"Ablation mode {mode}: shift={config.mode_flags()[0]}, express={config.mode_flags()[1]}")
        net = network_for(config, geometry)
        state = train(net, train_data, config, eval_data=test_data, progress=progress)
        rows.append(AblationRow(mode=mode, accuracy=evaluate(net, test_data), history=state.history))
    logger.log_ablation(rows)
    return rows


def sample_loss(net: Network, fields: ComplexField, labels: torch.Tensor) -> float:
    scores, _ = forward(net, fields)
    losses, _ = softmax_cross_entropy(scores, labels)
    total = 0.0
    for value in torch.atleast_1d(losses).tolist():
        total += value
    return total / torch.atleast_1d(losses).numel()


def grad_check(
    net: Network,
    fields: ComplexField,
    labels: torch.Tensor,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    abs_floor: float = 1e-8,
    flip_sign: bool = False,
) -> GradCheckReport:
    """Compare every analytic gradient with central differences of the loss.

    Parameters whose gradient scale is below 1e-6 are judged on the absolute
    floor only. `flip_sign` negates the analytic gradients (fault injection).
    """
    scores, cache = forward(net, fields)
    losses, score_grads = softmax_cross_entropy(scores, labels)
    count = torch.atleast_1d(losses).numel()
    analytic = backward(net, cache, score_grads / count).as_named(net)

    worst_error, worst_name, checked, passed = 0.0, "", 0, True
    for name, original in net.parameter_vectors():
        for i in range(original.numel()):
            values = original.clone()
            values[i] = original[i] + step
            net.set_parameter(name, values)
            plus = sample_loss(net, fields, labels)
            values = original.clone()
            values[i] = original[i] - step
            net.set_parameter(name, values)
            minus = sample_loss(net, fields, labels)
            net.set_parameter(name, original)

            numeric = (plus - minus) / (2 * step)
            exact = float(analytic[name][i]) * (-1.0 if flip_sign else 1.0)
            difference = abs(exact - numeric)
            scale = max(abs(exact), abs(numeric))
            checked += 1
            if scale < 1e-6:
                if difference > abs_floor:
                    passed = False
                continue
            relative = difference / scale
            if relative > tolerance and difference > abs_floor:
                passed = False
            if relative > worst_error:
                worst_error, worst_name = relative, f"{name}[{i}]"

    report = GradCheckReport(
        max_relative_error=worst_error,
        worst_parameter=worst_name or "none",
        checked=checked,
        passed=passed,
        tolerance=tolerance,
    )
    logger.log_grad_check(report)
    return report
