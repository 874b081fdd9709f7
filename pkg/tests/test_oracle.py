import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from apishift.core import ConfusionMatrix, PartitionWeights
from apishift.errors import (ConstructionError, DataError, LookupOracleError, OracleError, ProtocolError,
                             QueryError)
from apishift.oracle import (EndpointConfig, HttpOracle, PartitionedDataset, ReplayOracle, Scenario,
                             SimulatedOracle, http_predict, random_scenario, replay_predict,
                             scenario_true_confusion, simulated_predict, skewed_scenario)


class TestScenario:
    def test_true_confusion_example(self, small_scenario):
        C = scenario_true_confusion(small_scenario)
        np.testing.assert_allclose(C.entries, [[0.39, 0.11], [0.175, 0.325]], atol=1e-12)

    def test_single_level_reduces_to_label_distribution(self):
        sc = Scenario(PartitionWeights([0.6, 0.4]), [[[0.9, 0.1]], [[0.25, 0.75]]],
                      ConfusionMatrix([[0.5, 0.1], [0.1, 0.3]]))
        np.testing.assert_allclose(sc.true_confusion().entries, [[0.54, 0.06], [0.1, 0.3]], atol=1e-12)

    def test_no_shift(self, small_scenario):
        sc = Scenario(small_scenario.p, small_scenario.mu, small_scenario.true_confusion())
        assert np.all(sc.true_shift().entries == 0)

    def test_rejects_bad_mu(self, small_scenario):
        with pytest.raises(ConstructionError):
            Scenario(small_scenario.p, np.ones((2, 2, 2)), small_scenario.C_old)
        with pytest.raises(ConstructionError):
            Scenario(small_scenario.p, np.ones((2, 1, 2)) / 2, small_scenario.C_old)

    def test_spec_round_trip(self, small_scenario):
        back = Scenario.from_spec(json.loads(json.dumps(small_scenario.to_spec())))
        assert np.array_equal(back.mu, small_scenario.mu)
        assert np.array_equal(back.C_old.entries, small_scenario.C_old.entries)

    def test_spec_with_old_conditionals(self, small_scenario):
        spec = small_scenario.to_spec()
        del spec["c_old"]
        spec["mu_old"] = spec["mu"]
        assert np.all(Scenario.from_spec(spec).true_shift().entries == 0)

    def test_spec_missing_old_matrix(self, small_scenario):
        spec = small_scenario.to_spec()
        del spec["c_old"]
        with pytest.raises(ConstructionError):
            Scenario.from_spec(spec)

    def test_skewed_scores(self, skewed):
        s = skewed.sigma().ravel()
        assert s[0] == pytest.approx(0.9, abs=1e-12)
        np.testing.assert_allclose(s[1:], 0.01, atol=1e-12)
        np.testing.assert_allclose(skewed.p.p, 0.1)

    def test_weighted_sigma_with_unit_weights(self, rng):
        sc = random_scenario(3, 2, rng)
        np.testing.assert_allclose(sc.weighted_sigma(np.ones((3, 3))), sc.sigma(), atol=1e-12)


class TestSimulatedOracle:
    def test_frequencies_match_distribution(self, small_scenario):
        oracle = SimulatedOracle(small_scenario, np.random.default_rng(1))
        n = 20000
        for i in range(2):
            for k in range(2):
                draws = np.array([oracle.predict((i, k)) for _ in range(n)])
                freq = np.bincount(draws, minlength=2) / n
                target = small_scenario.mu[i, k]
                se = np.sqrt(target * (1 - target) / n)
                assert np.all(np.abs(freq - target) <= 3 * se + 1e-12)
        assert oracle.queries == 4 * n

    def test_draws_are_independent(self, small_scenario):
        oracle = SimulatedOracle(small_scenario, np.random.default_rng(2))
        x = np.array([oracle.predict((0, 1)) for _ in range(20000)])
        table = np.zeros((2, 2))
        np.add.at(table, (x[:-1], x[1:]), 1)
        expect = table.sum(1, keepdims=True) * table.sum(0, keepdims=True) / table.sum()
        chi2 = ((table - expect) ** 2 / expect).sum()
        assert chi2 < 10.83  # 1 dof, 0.1% level

    def test_standalone_matches_method(self, small_scenario):
        a = [simulated_predict(small_scenario, (1, 0), np.random.default_rng(5)) for _ in range(3)]
        o = SimulatedOracle(small_scenario, np.random.default_rng(5))
        assert a[0] == o.predict((1, 0))

    def test_bulk_uniforms_count_as_queries(self, small_scenario):
        o = SimulatedOracle(small_scenario, np.random.default_rng(0))
        o.uniforms(17)
        assert o.queries == 17


class TestReplay:
    def test_lookup(self):
        o = ReplayOracle({"a": 1, "b": 0})
        assert o.predict((0, 0), "a") == 1
        assert replay_predict({"x": 2}, "x") == 2
        assert o.queries == 1

    def test_missing_id(self):
        o = ReplayOracle({"a": 1})
        with pytest.raises(LookupOracleError) as err:
            o.predict((0, 0), "zzz")
        assert isinstance(err.value, KeyError) and isinstance(err.value, OracleError)
        assert o.queries == 0


class TestDataset:
    def test_partition_index(self):
        ds = PartitionedDataset(["a", "b", "c", "d"], [0, 1, 1, 0], [1, 0, 0, 0], 2, 2)
        assert ds.sizes().tolist() == [[1, 1], [2, 0]]
        assert [ds.ids[j] for j in ds.index[2]] == ["b", "c"]

    def test_empty_partition_has_no_weight(self):
        ds = PartitionedDataset(["a", "b"], [0, 1], [0, 0], 2, 2)
        with pytest.raises(DataError):
            ds.weights()

    @pytest.mark.parametrize("kwargs", [
        dict(ids=["a", "a"], true_labels=[0, 1], difficulty=[0, 0]),
        dict(ids=["a", "b"], true_labels=[0, 2], difficulty=[0, 0]),
        dict(ids=["a", "b"], true_labels=[0, 1], difficulty=[0, 1]),
        dict(ids=[], true_labels=[], difficulty=[]),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(DataError):
            PartitionedDataset(L=2, K=1, **kwargs)


class Endpoint(BaseHTTPRequestHandler):
    script = []
    seen = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        Endpoint.seen.append(body)
        status, reply = Endpoint.script.pop(0) if Endpoint.script else (200, {"label": 1})
        data = reply.encode() if isinstance(reply, str) else json.dumps(reply).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def endpoint():
    server = HTTPServer(("127.0.0.1", 0), Endpoint)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    Endpoint.script, Endpoint.seen = [], []
    yield f"http://127.0.0.1:{server.server_port}/predict", Endpoint
    server.shutdown()
    server.server_close()


def client(url, **kw):
    waits = []
    cfg = EndpointConfig(url=url, timeout=5, **kw)
    return HttpOracle(cfg, 3, payloads={"img7": {"pixels": [1, 2]}}, sleep=waits.append), waits


class TestHttp:
    def test_label_is_converted(self, endpoint):
        url, ep = endpoint
        ep.script = [(200, {"label": 2})]
        o, _ = client(url)
        assert o.predict((0, 0), "img7") == 1
        assert ep.seen == [{"id": "img7", "payload": {"pixels": [1, 2]}}]

    @pytest.mark.parametrize("reply", [{"label": 99}, {"label": 0}, {"label": "2"}, {"label": 1.5},
                                       {"other": 1}, "not json", {"label": True}])
    def test_malformed_replies(self, endpoint, reply):
        url, ep = endpoint
        ep.script = [(200, reply)]
        o, _ = client(url)
        with pytest.raises(ProtocolError):
            o.predict((0, 0), "img7")
        assert o.queries == 0

    def test_transient_failures_are_retried(self, endpoint):
        url, ep = endpoint
        ep.script = [(503, {}), (500, {}), (200, {"label": 3})]
        o, waits = client(url, attempts=3, backoff=0.5)
        assert o.predict((0, 0), "img7") == 2
        assert o.http_calls == 3 and o.queries == 1
        assert waits == [0.5, 1.0]

    def test_retries_exhausted(self, endpoint):
        url, ep = endpoint
        ep.script = [(503, {})] * 3
        o, _ = client(url, attempts=3)
        with pytest.raises(QueryError):
            o.predict((0, 0), "img7")
        assert o.http_calls == 3 and o.queries == 0

    def test_connection_refused(self):
        o, _ = client("http://127.0.0.1:9/none", attempts=2)
        with pytest.raises(QueryError):
            o.predict((0, 0), "img7")

    def test_standalone(self, endpoint):
        url, ep = endpoint
        ep.script = [(200, {"label": 1})]
        assert http_predict(EndpointConfig(url=url), "q", None, 2) == 0

    def test_config_from_dict(self):
        cfg = EndpointConfig.from_dict({"url": "http://x", "attempts": 5})
        assert cfg.attempts == 5 and cfg.timeout == 10
