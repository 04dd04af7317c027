#!/usr/bin/env python3
"""
Command-line surface for the diffractive network simulator:
train, evaluate, ablate, gradcheck, render and fetch.
"""

import argparse
import json
import os
import sys
import time
from typing import Dict, List, Optional

import torch

from ...schemas import RunConfig, load_run_config
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, load_split, split_paths
from .diffraction import PropagationGeometry
from .evaluation import evaluate_dataset, print_results
from .exceptions import ExwaveError
from .field_core import random_field
from .fetcher import DatasetFetcher
from .logger import logger
from .network import Network, build_network, param_count
from .report_generator import ReportGenerator
from .seeding import STREAM_INPUT, derive_generator
from .training import TrainState, grad_check, network_for, run_ablation, train

DATASET_FLAGS = {"mnist": "mnist", "fashion": "fashion_mnist"}
MODE_FLAGS = {
    "full": "full",
    "shift_only": "shift_only",
    "express_only": "express_only",
    "neither": "neither",
    "dense": "dense_baseline",
}
GRADCHECK_FAILED = 2


class ExwaveExperiment:
    """One command run against a resolved configuration."""

    def __init__(self, config: RunConfig, progress: bool = True):
        self.config = config
        self.progress = progress
        self.report_generator = ReportGenerator(config.output.out_dir)
        torch.set_num_threads(config.training.num_threads)

    def _load(self, split: str) -> Dataset:
        data = self.config.data
        limit = data.train_limit if split == "train" else data.test_limit
        return load_split(data.dataset_dir, split, name=data.dataset, limit=limit)

    def _check_dataset(self):
        for split in ("train", "test"):
            split_paths(self.config.data.dataset_dir, split)

    def train(self) -> Dict:
        self._check_dataset()
        train_config = self.config.train_config()
        train_data, test_data = self._load("train"), self._load("test")
        net = network_for(train_config, self.config.propagation_geometry())
        logger.info(f"Network: {net.depth} layers, {param_count(net)} parameters, mode {train_config.ablation_mode}")

        render_epochs = set(self.config.output.epochs()) if self.config.output.render_phase_maps else set()

        def snapshot(net: Network, state: TrainState):
            if state.epoch in render_epochs:
                self.report_generator.save_phase_maps(net, state.epoch)

        state = train(net, train_data, train_config, eval_data=test_data, on_epoch=snapshot, progress=self.progress)

        self.report_generator.save_metrics(state.history, net.depth)
        self.report_generator.save_phase_drift(state.history, net.depth)
        save_checkpoint(
            self.report_generator.path("checkpoint"),
            net,
            train_config.master_seed,
            extra={"mode": train_config.ablation_mode, "dataset": train_config.dataset, "epochs": state.epoch},
        )
        self.report_generator.save_resolved_config(self.config.to_ini())
        return {
            "parameters": param_count(net),
            "epochs": state.epoch,
            "final_train_loss": f"{state.history[-1].train_loss:.6f}",
            "test_accuracy": f"{state.history[-1].test_accuracy:.4f}",
        }

    def evaluate(self, checkpoint_path: str) -> Dict:
        net, master_seed, extra = load_checkpoint(checkpoint_path)
        test_data = self._load("test")
        metrics = evaluate_dataset(net, test_data)
        print_results(metrics, title=f"EVALUATION: {os.path.basename(checkpoint_path)} on {test_data.name}/test")
        with open(self.report_generator.path("evaluation"), "w", encoding="utf-8") as f:
            json.dump({"checkpoint": checkpoint_path, "master_seed": master_seed, "extra": extra, **metrics.to_dict()}, f, indent=2)
        return {"samples": metrics.total, "accuracy": f"{metrics.accuracy:.4f}"}

    def ablate(self) -> Dict:
        self._check_dataset()
        train_data, test_data = self._load("train"), self._load("test")
        rows = run_ablation(
            self.config.train_config(), self.config.propagation_geometry(), train_data, test_data, progress=self.progress
        )
        self.report_generator.save_ablation(rows, self.config.data.dataset)
        self.report_generator.save_resolved_config(self.config.to_ini())
        return {row.mode: f"{row.accuracy:.4f}" for row in rows}

    def gradcheck(self, flip_sign: bool = False) -> bool:
        """Finite-difference check on a small seeded network with two random inputs."""
        settings = self.config.gradcheck
        pitch = self.config.geometry.pitch
        geometry = PropagationGeometry(
            n=settings.side,
            pitch=pitch,
            wavelength=self.config.geometry.wavelength,
            spacing=settings.hop_pitches * pitch,
        )
        seed = self.config.training.seed
        net = build_network(geometry, settings.layers, seed)
        fields = random_field(settings.side, derive_generator(seed, STREAM_INPUT), batch=2)
        labels = torch.tensor([3, 7], dtype=torch.long)
        report = grad_check(
            net,
            fields,
            labels,
            tolerance=settings.tolerance,
            step=settings.step,
            abs_floor=settings.abs_floor,
            flip_sign=flip_sign,
        )
        print(f"gradient check: {'PASS' if report.passed else 'FAIL'}")
        print(f"parameters checked: {report.checked}")
        print(f"max relative error: {report.max_relative_error:.12f}")
        print(f"worst parameter: {report.worst_parameter}")
        return report.passed

    def render(self, checkpoint_path: str, out_dir: Optional[str] = None) -> List[str]:
        net, _, _ = load_checkpoint(checkpoint_path)
        return self.report_generator.render_layers(net, out_dir or self.config.output.out_dir)

    def fetch(self, client=None) -> List[str]:
        fetcher = DatasetFetcher(
            self.config.data.dataset,
            self.config.data.dataset_dir,
            client=client,
            timeout=self.config.fetch.timeout,
            max_attempts=self.config.fetch.max_attempts,
            retry_wait=self.config.fetch.retry_wait,
        )
        return fetcher.fetch()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file merged over the built-in defaults")
    common.add_argument("--dataset", choices=sorted(DATASET_FLAGS), help="Dataset family")
    common.add_argument("--data-dir", help="Directory holding the IDX files")
    common.add_argument("--mode", choices=list(MODE_FLAGS), help="Layer parameterization / output structure")
    common.add_argument("--layers", type=int, help="Number of diffractive layers")
    common.add_argument("--side", type=int, help="Layer side length in pixels")
    common.add_argument("--epochs", type=int, help="Training epochs")
    common.add_argument("--seed", type=int, help="Master seed")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--no-progress", action="store_true", help="Hide progress bars")

    parser = argparse.ArgumentParser(description="Express wavelet diffractive network simulator")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("train", parents=[common], help="Train one network and write metrics, maps and checkpoint")
    evaluate_cmd = commands.add_parser("evaluate", parents=[common], help="Per-class test accuracy of a checkpoint")
    evaluate_cmd.add_argument("checkpoint")
    commands.add_parser("ablate", parents=[common], help="Train the four shift/expressway combinations")
    gradcheck_cmd = commands.add_parser("gradcheck", parents=[common], help="Finite-difference gradient check")
    gradcheck_cmd.add_argument("--inject-sign-flip", action="store_true", help=argparse.SUPPRESS)
    render_cmd = commands.add_parser("render", parents=[common], help="Write layer phase maps of a checkpoint as PGM")
    render_cmd.add_argument("checkpoint")
    commands.add_parser("fetch", parents=[common], help="Download the IDX files of a dataset")
    return parser


def overrides_from(args: argparse.Namespace) -> Dict[str, Dict]:
    return {
        "network": {
            "layers": args.layers,
            "side": args.side,
            "mode": MODE_FLAGS.get(args.mode),
        },
        "training": {"epochs": args.epochs, "seed": args.seed},
        "data": {"dataset": DATASET_FLAGS.get(args.dataset), "dataset_dir": args.data_dir},
        "output": {"out_dir": args.out},
    }


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)
    try:
        config = load_run_config(args.config, overrides_from(args))
        logger.log_run_start(args.command, config.model_dump())
        start = time.time()
        experiment = ExwaveExperiment(config, progress=not args.no_progress)

        if args.command == "train":
            summary = experiment.train()
            experiment.report_generator.print_run_summary("TRAINING SUMMARY", summary)
        elif args.command == "evaluate":
            summary = experiment.evaluate(args.checkpoint)
        elif args.command == "ablate":
            summary = experiment.ablate()
            experiment.report_generator.print_run_summary("ABLATION SUMMARY", summary)
        elif args.command == "gradcheck":
            passed = experiment.gradcheck(flip_sign=args.inject_sign_flip)
            if not passed:
                logger.error("Gradient check exceeded tolerance")
                return GRADCHECK_FAILED
            summary = {"gradcheck": "passed"}
        elif args.command == "render":
            paths = experiment.render(args.checkpoint, args.out)
            summary = {"phase_maps": len(paths)}
        else:
            paths = experiment.fetch()
            summary = {"files": len(paths)}

        summary["duration"] = f"{time.time() - start:.2f} seconds"
        logger.log_run_end(summary)
        return 0

    except ExwaveError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
