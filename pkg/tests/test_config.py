from pathlib import Path

import pytest
from pydantic import ValidationError

from notaria.config import WORKSPACE_ENV, SimConfig, WorkspaceSettings, load_config
from notaria.exceptions import InvalidConfig


def test_defaults():
    config = load_config()
    assert config == SimConfig()
    assert config.scenario == "happy_path"
    assert config.m == 3
    assert config.guard_ms == 41


def test_overrides_win_and_none_is_ignored():
    config = load_config({"seed": 1, "m": 5, "num_clients": 4}, seed=9, m=None)
    assert (config.seed, config.m, config.num_clients) == (9, 5, 4)


@pytest.mark.parametrize(
    "values",
    [
        {"m": 1},
        {"num_nodes": 0},
        {"num_clients": 0},
        {"txs_per_client": 0},
        {"quorum": 0},
        {"quorum": 1.5},
        {"drop_rate": 1.0},
        {"drop_rate": -0.1},
        {"block_interval_ms": 100, "message_delay_ms": 10},
        {"first_receipt_timeout_ms": 40, "message_delay_ms": 10},
        {"unknown_knob": 1},
    ],
)
def test_invalid(values):
    with pytest.raises(InvalidConfig):
        load_config(values)
    with pytest.raises(InvalidConfig):
        SimConfig(**values)


def test_frozen():
    config = load_config()
    with pytest.raises(ValidationError):
        config.m = 4  # type: ignore[misc]


def test_workspace_resolution(monkeypatch, tmp_path):
    monkeypatch.delenv(WORKSPACE_ENV, raising=False)
    assert WorkspaceSettings.resolve().directory == Path("notaria-workspace")
    monkeypatch.setenv(WORKSPACE_ENV, str(tmp_path / "env"))
    assert WorkspaceSettings.resolve().directory == tmp_path / "env"
    assert WorkspaceSettings.resolve(tmp_path / "flag").directory == tmp_path / "flag"
