import json
import math
import os

import numpy as np
import pytest

from config_loader import dump_graph_config, graph_to_dict, load_graph_config, load_run_config
from errors import ConfigError
from graph_model import HalfLineCoefficients, HalfLineData, TailRule, build_graph, free_star_graph
from m_matrix import assemble
from random_graphs import generator_data

CONFIGS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "configs")


def _config(name):
    return os.path.join(CONFIGS, name)


def test_load_free_star():
    graph, coeffs = load_graph_config(_config("free_star.json"))
    assert graph.compact_vertices == ("c", "l1", "l2", "l3")
    assert graph.halfline_roots == ("l1", "l2", "l3")
    reference = assemble(*free_star_graph(3), 1j).entries
    assert np.allclose(assemble(graph, coeffs, 1j).entries, reference, atol=1e-12)


def test_dump_and_load(tmp_path, dirichlet_star):
    path = dump_graph_config(*dirichlet_star, str(tmp_path / "graphs" / "star.json"))
    graph, coeffs = load_graph_config(path)
    z = 0.3 + 0.5j
    assert np.allclose(assemble(graph, coeffs, z).entries, assemble(*dirichlet_star, z).entries, atol=1e-12)


def test_periodic_tail_from_mapping():
    data = {
        "graph": {"compact": {"v": 0.5}, "edges": []},
        "halflines": {"v": {"b": [0.1], "a": [1.0, 0.7], "tail": {"rule": "periodic", "b": [0.0, 0.3], "a": [1.0, 0.5]}}},
    }
    graph, coeffs = load_graph_config(data)
    assert graph_to_dict(graph, coeffs)["halflines"]["v"]["tail"] == {"rule": "periodic", "b": [0.0, 0.3], "a": [1.0, 0.5]}


def test_measure_tail():
    data = {
        "graph": {"compact": {"v": 0.0}, "edges": []},
        "halflines": {"v": {"tail": {"rule": "measure", "depth": 64, "theta_shift": 0.0,
                                     "measure": {"densities": [
                                         {"kind": "uniform", "weight": 1.0, "lo": -1.0, "hi": 1.0}]}}}},
    }
    graph, coeffs = load_graph_config(data)
    assert coeffs.b_compact["v"] == pytest.approx(0.0, abs=1e-12)
    assert coeffs.halfline_data["v"].lead == pytest.approx(1 / np.sqrt(3))
    assert graph_to_dict(graph, coeffs)["halflines"]["v"]["tail"]["depth"] == 64


def test_example_config_root_potentials():
    graph, coeffs = load_graph_config(_config("triangle_example.json"))
    assert coeffs.b_compact["v1"] == pytest.approx(1.25)
    assert coeffs.b_compact["v2"] == pytest.approx(4 / 3)


ANDERSON_LINE = {"b": [0.4], "a": [1.0, 0.8],
                 "tail": {"rule": "generator", "name": "anderson", "params": [3.0], "seed": 7, "bound": 1.5}}


class TestGeneratorTail:
    @pytest.fixture
    def data(self):
        return {"graph": {"compact": {"v": 0.2, "w": -0.1}, "edges": [["v", "w", 1.0]]},
                "halflines": {"v": ANDERSON_LINE}}

    def test_load(self, data):
        graph, coeffs = load_graph_config(data)
        line = coeffs.halfline_data["v"].line
        reference = generator_data("anderson", (7, 3.0)).line
        assert line.b_at(1) == pytest.approx(0.4)
        assert line.a_at(1) == pytest.approx(0.8)
        assert [line.b_at(n) for n in range(2, 20)] == [reference.b_at(n) for n in range(2, 20)]
        assert line.tail.bound == 1.5

    def test_dump(self, data):
        assert graph_to_dict(*load_graph_config(data))["halflines"]["v"] == ANDERSON_LINE

    def test_dump_and_load(self, tmp_path):
        golden = (math.sqrt(5) - 1) / 2
        graph, coeffs = build_graph({"v": 0.0}, [], {"v": generator_data("almost_mathieu", (2.0, golden, 0.1))})
        path = dump_graph_config(graph, coeffs, str(tmp_path / "mathieu.json"))
        tail = json.loads((tmp_path / "mathieu.json").read_text())["halflines"]["v"]["tail"]
        assert tail == {"rule": "generator", "name": "almost_mathieu", "params": [2.0, golden, 0.1], "bound": 2.0}
        loaded = load_graph_config(path)
        z = 0.3 + 0.5j
        assert np.allclose(assemble(*loaded, z).entries, assemble(graph, coeffs, z).entries, atol=1e-12)

    @pytest.mark.parametrize("tail", [
        {"rule": "generator", "name": "brownian", "params": []},
        {"rule": "generator", "name": "anderson", "params": [3.0]},
        {"rule": "generator", "name": "anderson", "params": [3.0, 1.0], "seed": 1},
        {"rule": "generator", "name": "almost_mathieu", "params": [2.0, 0.5, 0.0], "seed": 1},
        {"rule": "generator", "params": [3.0], "seed": 1},
    ], ids=["unknown", "no_seed", "arity", "unseeded", "no_name"])
    def test_rejected(self, tail):
        data = {"graph": {"compact": {"v": 0.0}}, "halflines": {"v": {"tail": tail}}}
        with pytest.raises(ConfigError):
            load_graph_config(data)

    def test_unregistered_generator_cannot_be_written(self):
        tail = TailRule("generator", generator=lambda key, n: (0.0, 1.0), bound=1.0)
        graph, coeffs = build_graph({"v": 0.0}, [], {"v": HalfLineData(lead=1.0, line=HalfLineCoefficients(tail=tail))})
        with pytest.raises(ConfigError):
            graph_to_dict(graph, coeffs)


@pytest.mark.parametrize("data", [
    {"graph": {"compact": {"v": 0.0}}, "halflines": {"v": {"tail": {"rule": "spiral"}}}},
    {"graph": {"compact": {"v": 0.0}, "edges": [["v", "w", 1.0]]}, "halflines": {"v": {}}},
    {"graph": {"compact": {"v": 0.0}}, "halflines": {"v": {"a": []}}},
    {"graph": {"compact": {"v": 0.0}}, "halflines": {"v": {"a": ["x"]}}},
    {"halflines": {}},
], ids=["rule", "unknown_vertex", "no_lead", "not_numbers", "no_graph"])
def test_bad_graph_configs(data):
    with pytest.raises(ConfigError):
        load_graph_config(data)


def test_missing_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError):
        load_graph_config(str(tmp_path / "absent.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_graph_config(str(broken))


def test_run_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"task": "scan", "threshold": 0.01}))
    assert load_run_config(str(path))["task"] == "scan"
    path.write_text(json.dumps({"threshold": -1}))
    with pytest.raises(ConfigError):
        load_run_config(str(path))
    path.write_text(json.dumps([1, 2]))
    with pytest.raises(ConfigError):
        load_run_config(str(path))
