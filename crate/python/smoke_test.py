"""Smoke test for the idsdetect Python module.

Build and install first, e.g. `maturin develop --release -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math
import random
import tempfile
from pathlib import Path

import idsdetect


def check_metrics():
    scores = [0.9, 0.8, 0.7, 0.1]
    labels = [1, 0, 1, 0]
    assert math.isclose(idsdetect.roc_auc(scores, labels), 0.75)
    assert math.isclose(idsdetect.average_precision(scores, labels), (1.0 + 2.0 / 3.0) / 2.0)
    assert math.isclose(idsdetect.noise_or([0.5, 0.5]), 0.75)
    assert idsdetect.cosine_distance([1.0, 0.0], [0.0, 0.0]) is None
    assert math.isclose(idsdetect.cosine_distance([1.0, 0.0], [0.0, 2.0]), 1.0)


def check_gmm():
    rng = random.Random(3)
    data = [[rng.gauss(c, 0.3), rng.gauss(-c, 0.3)] for c in (-2.0, 2.0) for _ in range(200)]
    gmm = idsdetect.GaussianMixture.fit(data, 2, seed=5)
    assert math.isclose(sum(gmm.weights), 1.0)
    assert sorted(round(m[0]) for m in gmm.means) == [-2, 2]
    fv = gmm.fisher_vector(data[:10])
    assert len(fv) == 2 * 2 * 2
    assert math.isclose(sum(v * v for v in fv), 1.0)
    assert gmm.fisher_vector([]) is None


def check_lda():
    rng = random.Random(4)
    docs = [[rng.randrange(5) + 5 * (i % 2) for _ in range(40)] for i in range(60)]
    lda = idsdetect.TopicModel.fit(docs, 10, 2, seed=1, alpha=0.1, iters=200)
    theta = lda.infer([0, 1, 2, 3, 4] * 4, seed=2)
    assert math.isclose(sum(theta), 1.0)
    assert max(theta) > 0.8


def check_config():
    cfg = idsdetect.Config(synth_taxis=40, synth_days=20, range_days=20, lda_topics=6, boost_rounds=5)
    assert "synth_taxis" in idsdetect.Config.keys()
    assert "synth_taxis = 40" in cfg.to_text()
    try:
        cfg.set("no_such_key", "1")
    except idsdetect.ConfigError as e:
        assert "no_such_key" in str(e)
    else:
        raise AssertionError("unknown key accepted")
    return cfg


def check_pipeline(cfg):
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        try:
            idsdetect.run_stage("fit-gmm", cfg, root / "data", root / "work")
        except idsdetect.MissingArtifactError as e:
            assert "stl.csv" in str(e)
        else:
            raise AssertionError("missing input not reported")
        metrics = idsdetect.run_pipeline(cfg, root / "data", root / "work", models=["mcmil", "logistic"])
        assert set(metrics) == {"mcmil", "logistic"}
        m = metrics["mcmil"]
        assert 0.0 <= m.auc <= 1.0 and m.n_pos > 0
        text = (root / "work" / "metrics.txt").read_text()
        assert text.startswith(f"auc={m.auc:.6f}")
        print(m)


if __name__ == "__main__":
    check_metrics()
    check_gmm()
    check_lda()
    check_pipeline(check_config())
    print("smoke test passed")
