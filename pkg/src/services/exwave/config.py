import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

WAVELENGTH = 632.8e-9

# File names shared by MNIST and Fashion-MNIST
IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

DATASET_URLS = {
    "mnist": "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "fashion_mnist": "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
}

# Ablation modes in report order, mapped to (shift wavelet, expressway)
ABLATION_MODES = {
    "full": (True, True),
    "shift_only": (True, False),
    "express_only": (False, True),
    "neither": (False, False),
}

# Dense per-pixel baseline: centers are irrelevant, expressway off
DENSE_MODE = "dense_baseline"

NUM_CLASSES = 10

# System configuration
CONFIG = {
    "geometry": {
        "wavelength": WAVELENGTH,
        "pitch": WAVELENGTH / 2,
        "spacing": 12.5 * WAVELENGTH,
    },
    "network": {
        "layers": 5,
        "side": 56,
        "mode": "full",
    },
    "training": {
        "epochs": 20,
        "batch_size": 64,
        "learning_rate": 0.01,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_eps": 1e-8,
        "seed": 0,
        "num_threads": 1,
    },
    "data": {
        "dataset": "mnist",
        # Blank dataset_dir resolves to data_root/<dataset>; the two datasets share file names.
        "data_root": os.getenv("EXWAVE_DATA_DIR", "./data"),
        "dataset_dir": "",
        "train_limit": 10000,
        "test_limit": 2000,
    },
    "output": {
        "out_dir": os.getenv("EXWAVE_OUTPUT_DIR", "./output"),
        "render_phase_maps": True,
        "render_epochs": "0,10,20",
    },
    "fetch": {
        "timeout": 60.0,
        "max_attempts": 5,
        "retry_wait": 1.0,
    },
    "logging": {
        "log_dir": os.getenv("EXWAVE_LOG_DIR", "logs"),
        "console_level": os.getenv("EXWAVE_LOG_LEVEL", "INFO"),
    },
    "gradcheck": {
        "side": 8,
        "layers": 2,
        # propagation distance of the built-in instance, in pixel pitches
        "hop_pitches": 2.0,
        "step": 1e-5,
        "tolerance": 1e-4,
        "abs_floor": 1e-8,
    },
}

# Fixed output layout
OUTPUT_FILES = {
    "metrics": "metrics.csv",
    "ablation": "ablation.csv",
    "phase_drift": "phase_drift.csv",
    "phase_maps": "phase_maps",
    "checkpoint": "checkpoint.bin",
    "resolved_config": "config.resolved",
    "evaluation": "evaluation.json",
}
