"""
Per-class evaluation of detector predictions.
Computes overall accuracy, per-class accuracy and a confusion matrix
by comparing argmax predictions against dataset labels.
"""

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import torch

from .config import NUM_CLASSES
from .data import Dataset, encode_batch
from .exceptions import InvalidDimensionError
from .network import Network
from .training import predict


@dataclass
class ClassMetrics:
    """Counts and accuracy for one class"""
    label: int
    support: int = 0
    correct: int = 0
    accuracy: float = 0.0

    def compute_metrics(self):
        self.accuracy = self.correct / self.support if self.support > 0 else 0.0


@dataclass
class ClassificationMetrics:
    total: int = 0
    correct: int = 0
    accuracy: float = 0.0
    per_class: List[ClassMetrics] = field(default_factory=lambda: [ClassMetrics(label=c) for c in range(NUM_CLASSES)])
    # confusion[true][predicted]
    confusion: np.ndarray = field(default_factory=lambda: np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64))

    def update(self, predictions: torch.Tensor, labels: torch.Tensor):
        for truth, guess in zip(labels.tolist(), predictions.tolist()):
            self.confusion[truth, guess] += 1
            self.per_class[truth].support += 1
            if truth == guess:
                self.per_class[truth].correct += 1
                self.correct += 1
            self.total += 1

    def compute_metrics(self):
        self.accuracy = self.correct / self.total if self.total > 0 else 0.0
        for metrics in self.per_class:
            metrics.compute_metrics()

    def to_dict(self) -> Dict:
        return {
            "total": self.total,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "per_class": [
                {"label": m.label, "support": m.support, "correct": m.correct, "accuracy": m.accuracy}
                for m in self.per_class
            ],
            "confusion": self.confusion.tolist(),
        }


def evaluate_dataset(net: Network, data: Dataset, batch_size: int = 256) -> ClassificationMetrics:
    """Batch through the dataset in order and tally predictions per class."""
    if len(data) == 0:
        raise InvalidDimensionError("Cannot evaluate on an empty dataset")
    metrics = ClassificationMetrics()
    for start in range(0, len(data), batch_size):
        indices = np.arange(start, min(start + batch_size, len(data)))
        fields, labels = encode_batch(data, indices, net.n)
        metrics.update(predict(net, fields), labels)
    metrics.compute_metrics()
    return metrics


def print_results(metrics: ClassificationMetrics, title: str = "EVALUATION RESULTS"):
    """Print evaluation results in a formatted table"""
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)
    print(f"  Samples:   {metrics.total}")
    print(f"  Correct:   {metrics.correct}")
    print(f"  Accuracy:  {metrics.accuracy:.4f}")
    print(f"\n  {'class':>5}  {'support':>7}  {'correct':>7}  {'accuracy':>8}")
    for m in metrics.per_class:
        print(f"  {m.label:>5}  {m.support:>7}  {m.correct:>7}  {m.accuracy:>8.4f}")
    print("\n  CONFUSION (rows: true, columns: predicted)")
    print("        " + " ".join(f"{c:>5}" for c in range(NUM_CLASSES)))
    for c, row in enumerate(metrics.confusion):
        print(f"  {c:>5} " + " ".join(f"{v:>5}" for v in row))
    print("=" * 60 + "\n")
