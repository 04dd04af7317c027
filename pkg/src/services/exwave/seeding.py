"""
Stream splitting for reproducible runs.

Every random draw in a run comes from a torch.Generator whose seed is derived
from (master_seed, stream, index) through numpy's SeedSequence spawn keys, so
adding a layer or an epoch never shifts the draws of another stream.
"""

import numpy as np
import torch

STREAM_FIXED_POINT = 0
STREAM_LAYER_PHASES = 1
STREAM_SHUFFLE = 2
STREAM_INPUT = 3


def derive_seed(master_seed: int, stream: int, index: int = 0) -> int:
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream, index))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def derive_generator(master_seed: int, stream: int, index: int = 0) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(derive_seed(master_seed, stream, index))
    return generator
