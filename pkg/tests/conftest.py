import numpy as np
import pytest

from apishift.core import ConfusionMatrix, PartitionWeights
from apishift.oracle import Scenario, skewed_scenario


@pytest.fixture
def small_scenario():
    """L = K = 2 scenario with hand-checked true confusion [[0.39, 0.11], [0.175, 0.325]]."""
    p = PartitionWeights([[0.3, 0.2], [0.25, 0.25]])
    mu = [[[0.9, 0.1], [0.6, 0.4]], [[0.2, 0.8], [0.5, 0.5]]]
    c_old = ConfusionMatrix([[0.4, 0.1], [0.1, 0.4]])
    return Scenario(p, mu, c_old, name="small")


@pytest.fixture(scope="session")
def skewed():
    return skewed_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def write_synthetic_corpus(directory, n=1000, L=3, K=2, seed=0):
    """Manifest and replay log for ``n`` items; returns their paths."""
    import json
    g = np.random.default_rng(seed)
    truths = g.integers(1, L + 1, n)
    manifest, preds = [], []
    for t in range(n):
        rid = f"doc-{t:05d}"
        manifest.append({"id": rid, "true_label": int(truths[t]), "confidence": float(g.random()),
                         "old_prediction": int(g.integers(1, L + 1))})
        preds.append({"id": rid, "label": int(truths[t]) if g.random() < 0.7 else int(g.integers(1, L + 1))})
    mpath, ppath = directory / "manifest.jsonl", directory / "predictions.jsonl"
    mpath.write_text("".join(json.dumps(r) + "\n" for r in manifest), encoding="utf-8")
    ppath.write_text("".join(json.dumps(r) + "\n" for r in preds), encoding="utf-8")
    return mpath, ppath


@pytest.fixture
def corpus(tmp_path):
    return write_synthetic_corpus(tmp_path)
