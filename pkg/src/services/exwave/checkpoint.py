"""
Versioned binary checkpoint.

Layout: b"EXWAVECK" | uint32 BE version | uint32 BE header length |
UTF-8 JSON header | float64 LE blocks (layer parameters in order, then the
expressway weights). Floats in the header are written with repr precision,
so geometry and weights read back bit-exactly.
"""

import json
import struct
from typing import Dict, List, Tuple

import numpy as np
import torch

from .diffraction import PropagationGeometry, build_rs_kernel
from .exceptions import CheckpointFormatError
from .field_core import REAL_DTYPE
from .network import DetectorLayout, Network
from .wavelet_phase import PhaseMode, WaveletLayer, build_circle_map

MAGIC = b"EXWAVECK"
VERSION = 1
_PREFIX = struct.Struct(">II")


def _block(values: torch.Tensor) -> bytes:
    return values.detach().cpu().numpy().astype("<f8").tobytes()


def encode_checkpoint(net: Network, master_seed: int, extra: Dict = None) -> bytes:
    geometry = net.geometry
    header = {
        "n": net.n,
        "depth": net.depth,
        "geometry": {
            "pitch": geometry.pitch,
            "wavelength": geometry.wavelength,
            "spacing": geometry.spacing,
        },
        "express_enabled": net.express_enabled,
        "master_seed": master_seed,
        "detector": {
            "region_size": net.detector.region_size,
            "regions": [list(r) for r in net.detector.regions],
        },
        "layers": [
            {
                "mode": layer.mode.value,
                "q": list(layer.map.q) if layer.mode == PhaseMode.WAVELET else None,
                "count": layer.param_count,
            }
            for layer in net.layers
        ],
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(_block(layer.parameters) for layer in net.layers) + _block(net.express_weights)
    return MAGIC + _PREFIX.pack(VERSION, len(header_bytes)) + header_bytes + payload


def _layer_counts(header: Dict) -> List[int]:
    """Check each layer entry and return the block sizes, expressway last."""
    entries, depth = header["layers"], header["depth"]
    if not isinstance(entries, list) or not isinstance(depth, int) or len(entries) != depth:
        raise CheckpointFormatError(f"Checkpoint header lists {entries!r} for depth {depth!r}")
    counts = []
    for i, entry in enumerate(entries, start=1):
        if not isinstance(entry, dict) or not {"mode", "count", "q"} <= set(entry):
            raise CheckpointFormatError(f"Checkpoint layer {i} needs mode, count and q: {entry!r}")
        if entry["mode"] not in (PhaseMode.WAVELET.value, PhaseMode.DENSE.value):
            raise CheckpointFormatError(f"Checkpoint layer {i} has unknown mode {entry['mode']!r}")
        if not isinstance(entry["count"], int) or entry["count"] < 0:
            raise CheckpointFormatError(f"Checkpoint layer {i} has invalid count {entry['count']!r}")
        q = entry["q"]
        if entry["mode"] == PhaseMode.WAVELET.value and not (isinstance(q, list) and len(q) == 2):
            raise CheckpointFormatError(f"Checkpoint layer {i} has invalid center {q!r}")
        counts.append(entry["count"])
    return counts + [depth]


def _rebuild(header: Dict, blocks: List[torch.Tensor]) -> Network:
    n = header["n"]
    layers = []
    for entry, values in zip(header["layers"], blocks):
        if entry["mode"] == PhaseMode.WAVELET.value:
            circle_map = build_circle_map(n, tuple(entry["q"]))
            layers.append(WaveletLayer(mode=PhaseMode.WAVELET, map=circle_map, phases=values))
        else:
            layers.append(WaveletLayer(mode=PhaseMode.DENSE, dense_phases=values))

    geometry = PropagationGeometry(n=n, **header["geometry"])
    detector = DetectorLayout(
        n=n,
        region_size=header["detector"]["region_size"],
        regions=tuple(tuple(r) for r in header["detector"]["regions"]),
    )
    return Network(
        layers=layers,
        kernel=build_rs_kernel(geometry),
        express_weights=blocks[-1],
        express_enabled=header["express_enabled"],
        detector=detector,
    )


def decode_checkpoint(blob: bytes) -> Tuple[Network, int, Dict]:
    """Rebuild (network, master_seed, extra) from checkpoint bytes."""
    if not blob.startswith(MAGIC):
        raise CheckpointFormatError("Not an exwave checkpoint (bad magic)")
    offset = len(MAGIC)
    if len(blob) < offset + _PREFIX.size:
        raise CheckpointFormatError("Checkpoint truncated inside its prefix")
    version, header_length = _PREFIX.unpack_from(blob, offset)
    if version != VERSION:
        raise CheckpointFormatError(f"Unsupported checkpoint version {version} (expected {VERSION})")
    offset += _PREFIX.size
    try:
        header = json.loads(blob[offset:offset + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"Corrupt checkpoint header: {e}") from e
    offset += header_length
    if not isinstance(header, dict):
        raise CheckpointFormatError("Checkpoint header is not a JSON object")
    missing = {"n", "depth", "geometry", "express_enabled", "master_seed", "detector", "layers"} - set(header)
    if missing:
        raise CheckpointFormatError(f"Checkpoint header lacks {sorted(missing)}")

    counts = _layer_counts(header)
    expected = offset + 8 * sum(counts)
    if len(blob) != expected:
        raise CheckpointFormatError(f"Checkpoint payload is {len(blob) - offset} bytes, expected {expected - offset}")

    blocks = []
    for count in counts:
        values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        blocks.append(torch.from_numpy(values.astype(np.float64)).to(REAL_DTYPE))
        offset += 8 * count

    try:
        net = _rebuild(header, blocks)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError(f"Checkpoint header describes no valid network: {e!r}") from e
    return net, header["master_seed"], header.get("extra", {})


def save_checkpoint(path: str, net: Network, master_seed: int, extra: Dict = None) -> str:
    with open(path, "wb") as f:
        f.write(encode_checkpoint(net, master_seed, extra))
    return path


def load_checkpoint(path: str) -> Tuple[Network, int, Dict]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointFormatError(f"Cannot read checkpoint {path}: {e.strerror or e}") from e
    return decode_checkpoint(blob)
