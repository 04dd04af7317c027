import csv
import os
from typing import Iterable, List

import numpy as np

from .config import CONFIG, OUTPUT_FILES
from .logger import logger
from .network import Network
from .wavelet_phase import render_phase_map


def fmt(value: float) -> str:
    """Fixed 9-significant-digit decimal used by every CSV."""
    return format(float(value), ".9g")


def pgm_bytes(image: np.ndarray) -> bytes:
    """Binary P5 greyscale image, maxval 255."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    height, width = image.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + image.tobytes()


def write_pgm(path: str, image: np.ndarray) -> str:
    with open(path, "wb") as f:
        f.write(pgm_bytes(image))
    return path


def metrics_header(depth: int) -> List[str]:
    return (
        ["epoch", "train_loss", "test_accuracy"]
        + [f"grad_norm_l{i}" for i in range(1, depth + 1)]
        + [f"express_w{i}" for i in range(1, depth + 1)]
        + ["grad_ratio_median"]
    )


class ReportGenerator:
    """Writer for the fixed run-output layout."""

    def __init__(self, output_dir: str = None):
        self.output_dir = output_dir or CONFIG["output"]["out_dir"]
        os.makedirs(self.output_dir, exist_ok=True)

    def path(self, key: str) -> str:
        """Path of a named output file inside the output directory."""
        return os.path.join(self.output_dir, OUTPUT_FILES[key])

    def _write_rows(self, filepath: str, header: List[str], rows: Iterable[List[str]]) -> str:
        """Write a header plus rows as CSV with LF line endings."""
        with open(filepath, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        logger.debug(f"Wrote {filepath}")
        return filepath

    def save_metrics(self, history: List, depth: int, filename: str = None) -> str:
        """One row per epoch: loss, accuracy, per-layer grad norms, expressway weights."""
        rows = [
            [str(row.epoch), fmt(row.train_loss), fmt(row.test_accuracy)]
            + [fmt(g) for g in row.grad_norms]
            + [fmt(w) for w in row.express_weights]
            + [fmt(row.grad_ratio_median)]
            for row in history
        ]
        filepath = os.path.join(self.output_dir, filename) if filename else self.path("metrics")
        return self._write_rows(filepath, metrics_header(depth), rows)

    def save_phase_drift(self, history: List, depth: int) -> str:
        """Per-epoch phase drift of every layer relative to its initialization."""
        header = ["epoch"] + [f"drift_l{i}" for i in range(1, depth + 1)]
        rows = [[str(row.epoch)] + [fmt(d) for d in row.phase_drift] for row in history]
        return self._write_rows(self.path("phase_drift"), header, rows)

    def save_ablation(self, rows: List, dataset: str) -> str:
        """Four rows in mode order plus one learning-curve CSV per mode."""
        for row in rows:
            depth = len(row.history[0].grad_norms) if row.history else 0
            self.save_metrics(row.history, depth, filename=f"metrics_{row.mode}.csv")
        return self._write_rows(
            self.path("ablation"),
            ["mode", f"{dataset}_accuracy"],
            [[row.mode, fmt(row.accuracy)] for row in rows],
        )

    def render_layers(self, net: Network, directory: str) -> List[str]:
        """layer_1.pgm … layer_L.pgm under `directory`."""
        os.makedirs(directory, exist_ok=True)
        return [
            write_pgm(os.path.join(directory, f"layer_{i}.pgm"), render_phase_map(layer))
            for i, layer in enumerate(net.layers, start=1)
        ]

    def save_phase_maps(self, net: Network, epoch: int) -> List[str]:
        directory = os.path.join(self.path("phase_maps"), f"epoch_{epoch}")
        return self.render_layers(net, directory)

    def save_resolved_config(self, text: str) -> str:
        filepath = self.path("resolved_config")
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(text)
        return filepath

    def print_run_summary(self, title: str, items: dict):
        """Print a brief summary of the run to console."""
        print(f"\n{'=' * 60}")
        print(title)
        print(f"{'=' * 60}")
        for key, value in items.items():
            print(f"  {key}: {value}")
        print(f"Output directory: {self.output_dir}")
        print(f"{'=' * 60}")
