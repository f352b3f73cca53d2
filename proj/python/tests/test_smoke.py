from pathlib import Path

import numpy as np
import pytest

import exposurelab as el

ROOT = Path(__file__).resolve().parents[2]


def test_decay_example():
    scores = el.tag_scores([("q", 2020, 10, ["ml"])], decay=0.5, end_year=2022)
    assert scores["ml"][2020] == pytest.approx(40 / 7, rel=1e-12)
    assert scores["ml"][2021] == pytest.approx(20 / 7, rel=1e-12)
    assert scores["ml"][2022] == pytest.approx(10 / 7, rel=1e-12)


def test_tag_split():
    posts = [("q1", 2010, 15, ["ML", "SemanticComparison", "NLP"]), ("q2", 2010, 6, ["ML", "DL"])]
    assert el.tag_scores(posts, end_year=2010)["ML"][2010] == pytest.approx(8.0)


def test_bad_decay_raises_validation_error():
    with pytest.raises(el.ValidationError):
        el.tag_scores([("q", 2020, 10, ["ml"])], decay=1.5)
    assert issubclass(el.ValidationError, el.Error)


def test_normalize_title():
    assert el.normalize_title("  Salesmen ") == el.normalize_title("salesman")


def test_joint_top_quantile_example():
    name = np.array([[0.9, 0.1], [0.2, 0.3]])
    desc = np.array([[0.8, 0.05], [0.4, 0.1]])
    t = el.joint_top_quantile(name, desc, 0.25)
    assert t[0, 0] == pytest.approx(0.85)
    assert np.count_nonzero(t) == 1


def test_embedding_round_trip(tmp_path):
    ids, vectors = el.test_embeddings(["data scientist", "truck driver"], dim=16, seed=7)
    assert vectors.shape == (2, 16)
    assert np.allclose(np.linalg.norm(vectors, axis=1), 1.0)
    v32 = vectors.astype(np.float32).astype(np.float64)
    for binary, name in ((True, "s.emb"), (False, "s.csv")):
        el.save_embeddings(tmp_path / name, ids, v32, binary=binary)
        back_ids, back = el.load_embeddings(tmp_path / name)
        assert back_ids == ids
        assert np.array_equal(back, v32)


def test_regressions_agree_with_numpy():
    rng = np.random.default_rng(3)
    n = 200
    g1 = [str(i % 10) for i in range(n)]
    g2 = [str(rng.integers(4)) for _ in range(n)]
    x = rng.normal(size=(n, 2))
    y = x @ np.array([0.5, -0.2]) + rng.normal(size=n)
    w = rng.uniform(0.5, 2.0, size=n)

    beta = el.wls(y, x, w)
    sw = np.sqrt(w)
    expected, *_ = np.linalg.lstsq(x * sw[:, None], y * sw, rcond=None)
    assert np.allclose(beta, expected, rtol=1e-10)

    dm = el.absorb(np.column_stack([y, x]), [g1, g2], w)
    dummies = np.column_stack([np.equal.outer(g1, sorted(set(g1))), np.equal.outer(g2, sorted(set(g2)))[:, 1:]])
    full = np.column_stack([x, dummies.astype(float)])
    oracle, *_ = np.linalg.lstsq(full * sw[:, None], y * sw, rcond=None)
    assert np.allclose(el.wls(dm[:, 0], dm[:, 1:], w), oracle[:2], rtol=1e-7)

    assert np.allclose(el.tsls(y, x, np.ones((n, 1)), x, w)[:2], el.wls(y, np.column_stack([x, np.ones(n)]), w)[:2])
    resid = y - x @ beta
    v = el.cluster_vcov(x, resid, g1, w)
    assert v.shape == (2, 2)
    assert np.allclose(v, v.T)


def test_pipeline_runs_and_caches(tmp_path):
    config = ROOT / "configs" / "synthetic.ini"
    first = el.run("newwork", config, out=tmp_path)
    assert [s["stage"] for s in first] == ["ingest", "newwork"]
    assert not any(s["cache_hit"] for s in first)
    assert all(s["cache_hit"] for s in el.run("newwork", config, out=tmp_path))
    with pytest.raises(el.ValidationError):
        el.run("train", config, out=tmp_path)
