"""Shared fixtures"""

import pytest
import yaml

from ehdn.core.components import ComponentIndex
from ehdn.core.instance import parse_instance
from ehdn.core.runner import build_level_model
from ehdn.instances import get_instance_path
from ehdn.models.config import RunConfig
from ehdn.models.network import Network


@pytest.fixture
def toy3() -> Network:
    return parse_instance("toy3")


@pytest.fixture
def toy_index(toy3) -> ComponentIndex:
    return ComponentIndex(toy3)


@pytest.fixture
def toy_raw() -> dict:
    """toy3 instance as a plain mapping, for building broken variants"""
    with open(get_instance_path("toy3")) as f:
        return yaml.safe_load(f)


@pytest.fixture
def toy_model(toy3):
    return build_level_model(toy3, 1, RunConfig(n_l=1))


@pytest.fixture
def toy_problem(toy_model):
    return toy_model.problem(RunConfig(n_l=1))


@pytest.fixture
def single_pipeline() -> Network:
    """One grid bus and one SSA pipeline under heavy accumulated rain"""
    return Network.model_validate({
        "version": "1",
        "name": "single",
        "horizon": {"periods": 1},
        "costs": {"budget": 100000.0},
        "grid_nodes": [{"id": "B1", "is_substation": True, "sub_p_max_kw": 10.0,
                        "sub_q_max_kvar": 10.0}],
        "h2_nodes": [{"id": "G1", "has_transmission_feed": True, "feed_max_m3h": 50.0},
                     {"id": "G2", "load_m3h": 10.0}],
        "pipelines": [{"id": "P1", "from_node": "G1", "to_node": "G2", "length_km": 1.0,
                       "f_max_m3h": 50.0, "in_ssa": True}],
        "zones": [{"id": "z", "pipelines": ["P1"]}],
    })
