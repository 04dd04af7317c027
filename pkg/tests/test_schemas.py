import os

import pytest

from src.schemas import load_run_config
from src.services.exwave.config import CONFIG
from src.services.exwave.exceptions import ConfigError


def write_ini(tmp_path, text: str) -> str:
    path = tmp_path / "run.ini"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_defaults_come_from_config():
    config = load_run_config()
    assert config.network.layers == CONFIG["network"]["layers"]
    assert config.training.learning_rate == CONFIG["training"]["learning_rate"]
    assert config.geometry.spacing == CONFIG["geometry"]["spacing"]
    train_config = config.train_config()
    assert train_config.side == 56
    assert train_config.ablation_mode == "full"
    assert config.propagation_geometry().n == 56
    assert config.propagation_geometry(8).n == 8


def test_file_values_are_parsed(tmp_path):
    path = write_ini(tmp_path, "[network]\nlayers = 3\nmode = neither\n\n[data]\ntrain_limit = none\n")
    config = load_run_config(path)
    assert config.network.layers == 3
    assert config.network.mode == "neither"
    assert config.data.train_limit is None
    assert config.data.test_limit == CONFIG["data"]["test_limit"]


def test_flag_overrides_win_over_the_file(tmp_path):
    path = write_ini(tmp_path, "[training]\nepochs = 7\nseed = 3\n")
    config = load_run_config(path, {"training": {"epochs": 2, "seed": None}})
    assert config.training.epochs == 2
    assert config.training.seed == 3


@pytest.mark.parametrize(
    "text",
    [
        "[network]\nlayres = 3\n",
        "[telemetry]\nenabled = true\n",
        "layers = 3\n",
        "[training]\nepochs = 0\n",
        "[training]\nlearning_rate = 0\n",
        "[network]\nmode = sideways\n",
        "[data]\ndataset = cifar\n",
        "[geometry]\npitch = inf\n",
        "[output]\nrender_epochs = 0,ten\n",
        "[network\n",
    ],
)
def test_invalid_files_are_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        load_run_config(write_ini(tmp_path, text))


def test_missing_file_is_rejected(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_run_config(str(tmp_path / "absent.ini"))


def test_resolved_ini_reads_back_to_the_same_config(tmp_path):
    original = load_run_config(
        write_ini(tmp_path, "[geometry]\nspacing = 6.328e-07\n\n[output]\nrender_epochs = 0,2\n"),
        {"data": {"test_limit": "all"}, "network": {"side": 8}},
    )
    resolved = tmp_path / "config.resolved"
    resolved.write_text(original.to_ini(), encoding="utf-8")
    again = load_run_config(str(resolved))
    assert again == original
    assert again.geometry.spacing == 6.328e-07
    assert again.output.epochs() == [0, 2]
    assert again.data.test_limit is None


def test_dataset_dir_defaults_under_the_data_root(tmp_path):
    mnist = load_run_config()
    assert mnist.data.dataset_dir == os.path.join(CONFIG["data"]["data_root"], "mnist")
    fashion = load_run_config(overrides={"data": {"dataset": "fashion_mnist"}})
    assert fashion.data.dataset_dir == os.path.join(CONFIG["data"]["data_root"], "fashion_mnist")

    explicit = load_run_config(overrides={"data": {"dataset": "fashion_mnist", "dataset_dir": str(tmp_path)}})
    assert explicit.data.dataset_dir == str(tmp_path)
    from_file = load_run_config(write_ini(tmp_path, f"[data]\ndata_root = {tmp_path}\n"))
    assert from_file.data.dataset_dir == os.path.join(str(tmp_path), "mnist")
