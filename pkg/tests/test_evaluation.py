import pytest
import torch

from conftest import compact_geometry, make_dataset
from src.services.exwave.evaluation import ClassificationMetrics, evaluate_dataset, print_results
from src.services.exwave.exceptions import InvalidDimensionError
from src.services.exwave.network import build_network
from src.services.exwave.training import evaluate


def test_metrics_tally_per_class_and_confusion():
    metrics = ClassificationMetrics()
    metrics.update(torch.tensor([3, 3, 1, 0]), torch.tensor([3, 2, 1, 1]))
    metrics.compute_metrics()
    assert (metrics.total, metrics.correct) == (4, 2)
    assert metrics.accuracy == 0.5
    assert metrics.per_class[1].support == 2
    assert metrics.per_class[1].accuracy == 0.5
    assert metrics.per_class[5].accuracy == 0.0
    assert metrics.confusion[2, 3] == 1
    assert int(metrics.confusion.sum()) == 4
    assert metrics.to_dict()["per_class"][3] == {"label": 3, "support": 1, "correct": 1, "accuracy": 1.0}


def test_dataset_metrics_agree_with_training_accuracy(capsys):
    net = build_network(compact_geometry(8), 2, master_seed=3)
    data = make_dataset(40, seed=11)
    metrics = evaluate_dataset(net, data, batch_size=16)
    assert metrics.total == 40
    assert metrics.accuracy == pytest.approx(evaluate(net, data))

    print_results(metrics)
    assert "Samples:   40" in capsys.readouterr().out


def test_empty_dataset_is_rejected():
    with pytest.raises(InvalidDimensionError):
        evaluate_dataset(build_network(compact_geometry(8), 1, master_seed=0), make_dataset(0))
