"""Tests for the ehdn.yaml defaults file"""

import pytest

from ehdn.core.config import (
    TIME_LIMIT_ENV,
    ConfigInvalidError,
    ConfigNotFoundError,
    load_config,
    merge_config,
    save_config,
)
from ehdn.models.config import RunConfig


def test_config_round_trip(tmp_path):
    """Test saved defaults load back unchanged"""
    config = RunConfig(instance="ieee33-like", levels=[1, 2], eps=0.1)
    path = save_config(config, tmp_path / "ehdn.yaml")

    assert load_config(path) == config


def test_config_missing(tmp_path):
    """Test a missing defaults file"""
    with pytest.raises(ConfigNotFoundError):
        load_config(tmp_path / "ehdn.yaml")


def test_config_invalid(tmp_path):
    """Test empty, malformed and out-of-range files"""
    path = tmp_path / "ehdn.yaml"
    path.write_text("")
    with pytest.raises(ConfigInvalidError, match="empty"):
        load_config(path)

    path.write_text("eps: [unclosed\n")
    with pytest.raises(ConfigInvalidError):
        load_config(path)

    path.write_text("eps: 1.5\n")
    with pytest.raises(ConfigInvalidError, match="eps"):
        load_config(path)


def test_merge_overrides(monkeypatch):
    """Test flags override defaults and None means not given"""
    monkeypatch.delenv(TIME_LIMIT_ENV, raising=False)
    merged = merge_config(RunConfig(eps=0.1), {"eps": None, "k_cc": 2.0, "mip_rel_gap": 1e-4})

    assert merged.eps == 0.1
    assert merged.k_cc == 2.0
    assert merged.solver.mip_rel_gap == 1e-4  # routed to the solver options
    with pytest.raises(ConfigInvalidError, match="levels"):
        merge_config(RunConfig(), {"levels": []})


def test_time_limit_from_environment(monkeypatch):
    """Test the solver time limit environment override"""
    monkeypatch.setenv(TIME_LIMIT_ENV, "30")
    assert merge_config(RunConfig(), {}).solver.time_limit == 30.0

    monkeypatch.setenv(TIME_LIMIT_ENV, "soon")
    with pytest.raises(ConfigInvalidError, match=TIME_LIMIT_ENV):
        merge_config(RunConfig(), {})
