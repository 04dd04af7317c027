import json
import struct

import pytest
import torch

from conftest import compact_geometry
from src.services.exwave.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from src.services.exwave.exceptions import CheckpointFormatError
from src.services.exwave.field_core import random_field
from src.services.exwave.network import build_network, forward


def trained_like(dense: bool = False):
    net = build_network(compact_geometry(8), 3, master_seed=12, dense=dense, express=not dense)
    for name, values in net.parameter_vectors():
        net.set_parameter(name, values * 1.37 + 0.01)
    return net


@pytest.mark.parametrize("dense", [False, True])
def test_round_trip_is_bit_exact(tmp_path, generator, dense):
    net = trained_like(dense)
    path = save_checkpoint(str(tmp_path / "checkpoint.bin"), net, 12, extra={"mode": "full"})
    restored, seed, extra = load_checkpoint(path)

    assert seed == 12
    assert extra == {"mode": "full"}
    assert restored.express_enabled == net.express_enabled
    assert restored.geometry == net.geometry
    assert restored.detector == net.detector
    for (name, a), (other, b) in zip(net.parameter_vectors(), restored.parameter_vectors()):
        assert name == other
        assert torch.equal(a, b)
    assert [layer.mode for layer in restored.layers] == [layer.mode for layer in net.layers]

    f = random_field(8, generator)
    assert torch.equal(forward(net, f)[0], forward(restored, f)[0])


def test_encoding_is_deterministic():
    assert encode_checkpoint(trained_like(), 12) == encode_checkpoint(trained_like(), 12)


def test_bad_magic_is_rejected():
    blob = encode_checkpoint(trained_like(), 12)
    with pytest.raises(CheckpointFormatError, match="magic"):
        decode_checkpoint(b"NOTACKPT" + blob[len(MAGIC):])


def test_unknown_version_is_rejected():
    blob = encode_checkpoint(trained_like(), 12)
    _, length = struct.unpack_from(">II", blob, len(MAGIC))
    patched = MAGIC + struct.pack(">II", 99, length) + blob[len(MAGIC) + 8:]
    with pytest.raises(CheckpointFormatError, match="version"):
        decode_checkpoint(patched)


def test_truncated_payload_is_rejected():
    blob = encode_checkpoint(trained_like(), 12)
    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(blob[:-8])
    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(blob[:len(MAGIC) + 3])
    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(blob + b"\x00")


def header_only(header) -> bytes:
    raw = json.dumps(header).encode("utf-8")
    return MAGIC + struct.pack(">II", 1, len(raw)) + raw


def incomplete_header(**changes):
    header = {
        "n": 8,
        "depth": 1,
        "geometry": {"pitch": 0.5e-6, "wavelength": 1e-6, "spacing": 1e-6},
        "express_enabled": True,
        "master_seed": 0,
        "detector": {"region_size": 1, "regions": []},
        "layers": [{"mode": "wavelet"}],
    }
    header.update(changes)
    return header


@pytest.mark.parametrize("changes", [
    {},
    {"layers": [{"mode": "spiral", "count": 8, "q": [1, 1]}]},
    {"layers": [{"mode": "wavelet", "count": "8", "q": [1, 1]}]},
    {"layers": [{"mode": "wavelet", "count": 8, "q": None}]},
    {"layers": ["wavelet"]},
    {"depth": 2},
])
def test_malformed_layer_entries_are_format_errors(changes):
    with pytest.raises(CheckpointFormatError, match="layer|depth"):
        decode_checkpoint(header_only(incomplete_header(**changes)))


def test_header_that_builds_no_network_is_a_format_error():
    header = incomplete_header(layers=[{"mode": "dense", "count": 64, "q": None}], geometry={"pitch": 0.5e-6})
    blob = header_only(header) + b"\x00" * 8 * 65
    with pytest.raises(CheckpointFormatError, match="no valid network"):
        decode_checkpoint(blob)


def test_missing_file_is_a_format_error(tmp_path):
    with pytest.raises(CheckpointFormatError, match="Cannot read checkpoint"):
        load_checkpoint(str(tmp_path / "nope.bin"))
