import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from acl.errors import DataError, InfeasibleSeparationError
from acl.evaluation import (
    ExperimentConfig,
    em_baseline,
    empirical_excess_risk,
    generate_gmm_data,
    kmeans_baseline,
    kmeanspp_init,
    lloyd,
    load_experiment_config,
    log_likelihood,
    records_to_csv,
    risk,
    rows_to_csv,
    run_experiment,
    sse,
    success,
)
from acl.models import DiracMixture, GaussianMixture


def test_generate_data_shapes_and_separation():
    X, truth, labels = generate_gmm_data(5, 3, 500, separation=4.0, seed=1, return_labels=True)
    assert X.shape == (500, 3) and labels.shape == (500,)
    assert set(labels) == set(range(5))
    sig = np.sqrt(truth.variances[:, 0])
    D = np.linalg.norm(truth.means[:, None] - truth.means[None], axis=2)
    np.fill_diagonal(D, np.inf)
    assert D.min() >= 4.0 * sig.mean()
    assert np.array_equal(X, generate_gmm_data(5, 3, 500, separation=4.0, seed=1)[0])


def test_generate_data_errors():
    with pytest.raises(InfeasibleSeparationError):
        generate_gmm_data(20, 1, 100, separation=50.0, sigma=0.1)
    with pytest.raises(DataError):
        generate_gmm_data(5, 2, 3)


def test_sse_brute_force():
    rng = np.random.default_rng(0)
    X, C = rng.normal(size=(40, 3)), rng.normal(size=(4, 3))
    brute = sum(min(float(np.sum((x - c) ** 2)) for c in C) for x in X)
    assert sse(C, X) == pytest.approx(brute, rel=1e-12)
    assert sse(DiracMixture.uniform(C), X) == pytest.approx(brute, rel=1e-12)
    assert sse(X, X) == 0.0
    with pytest.raises(DataError):
        sse(C, np.zeros((0, 3)))


def test_log_likelihood_against_scipy():
    rng = np.random.default_rng(1)
    g = GaussianMixture([0.2, 0.8], rng.normal(size=(2, 3)), rng.uniform(0.1, 2, (2, 3)))
    X = rng.normal(size=(30, 3))
    naive = sum(math.log(sum(w * multivariate_normal(mu, np.diag(v)).pdf(x)
                             for w, mu, v in zip(g.weights, g.means, g.variances))) for x in X)
    assert log_likelihood(g, X) == pytest.approx(naive, rel=1e-10)
    assert risk(g, X, "gmm") == pytest.approx(-naive, rel=1e-10)


def test_lloyd_monotone_and_partition_recovery():
    X, truth, labels = generate_gmm_data(4, 2, 2000, separation=8.0, seed=3, return_labels=True)
    rng = np.random.default_rng(0)
    for _ in range(5):
        _, _, hist = lloyd(X, kmeanspp_init(X, 4, rng))
        assert np.all(np.diff(hist) <= 1e-9 * hist[0])
    res = kmeans_baseline(X, 4, restarts=10, seed=0, return_result=True)
    est = res.model.centroids
    assign = np.linalg.norm(truth.means[:, None] - est[None], axis=2).argmin(1)
    assert sorted(assign) == [0, 1, 2, 3]
    pred = np.linalg.norm(X[:, None] - est[None], axis=2).argmin(1)
    assert np.mean(assign[labels] == pred) >= 0.99


def test_lloyd_reseeds_empty_cluster():
    X = np.array([[0.0], [0.1], [5.0], [5.1]])
    C, labels, hist = lloyd(X, np.array([[0.05], [100.0], [5.05]]))
    assert len(set(labels)) == 3
    assert np.all(np.diff(hist) <= 0)


def test_em_monotone():
    X, _ = generate_gmm_data(3, 2, 1500, separation=6.0, seed=4)
    res = em_baseline(X, 3, restarts=3, seed=0, return_result=True)
    assert np.all(np.diff(res.history) >= -1e-8 * abs(res.history[0]))
    assert res.objective == pytest.approx(log_likelihood(res.model, X))


def test_success_examples():
    X = np.array([[0.0], [1.0]])
    base = DiracMixture([0.5, 0.5], [[0.0], [1.0]])
    assert success(base, base, X, "kmeans") is True
    cand = DiracMixture([1.0], [[0.5]])
    assert success(cand, base, X, "kmeans") is False
    assert empirical_excess_risk(cand, base, X, "kmeans") == pytest.approx(0.5)
    g = GaussianMixture([1.0], [[0.0]], [[1.0]])
    assert success(g, g, np.zeros((3, 1)), "gmm") is None  # LL < 0: rule not evaluable
    tight = GaussianMixture([1.0], [[0.0]], [[1e-4]])
    pts = np.zeros((3, 1))
    assert success(tight, tight, pts, "gmm") is True


@given(st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_success_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 2))
    a = DiracMixture.uniform(rng.normal(size=(3, 2)))
    b = DiracMixture.uniform(rng.normal(size=(3, 2)))
    perm = rng.permutation(50)
    assert success(a, b, X, "kmeans") == success(a, b, X[perm], "kmeans")


def test_config_json(tmp_path):
    cfg = ExperimentConfig(K=2, d=2, n=100, m_over_Kd=[2.5], trials=1)
    assert cfg.n == [100] and cfg.m_list == [10]
    assert cfg.kernel_scale == pytest.approx(1 / 20)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_json()))
    assert load_experiment_config(p) == cfg
    p.write_text(json.dumps({"K": 2, "bogus": 1}))
    with pytest.raises(DataError):
        load_experiment_config(p)
    with pytest.raises(ValueError):
        ExperimentConfig(kinds=["cauchy"])


def small_config(**kw):
    base = dict(K=2, d=2, n=[300], m_over_Kd=[5], trials=2, baseline_restarts=2, restarts=2,
                sigma=0.05, separation=6.0)
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_deterministic_csv():
    detail = []
    rows = run_experiment(small_config(), detail=detail)
    again = run_experiment(small_config())
    assert rows_to_csv(rows) == rows_to_csv(again)
    assert len(rows) == 3 and len(detail) == 6
    assert all(r["trials"] == 2 for r in rows)
    text = records_to_csv(detail)
    assert text.splitlines()[0] == "m,kind,n,trial,excess,success,error"


def test_experiment_parallel_matches_serial():
    cfg = small_config(kinds=["rff", "quantized"])
    assert rows_to_csv(run_experiment(cfg, jobs=2)) == rows_to_csv(run_experiment(cfg))


def test_experiment_shared_dataset():
    cfg = small_config(n=[50, 300], super_n=600, kinds=["rff"])
    detail = []
    rows = run_experiment(cfg, detail=detail)
    assert {r["n"] for r in rows} == {50, 300}
    assert all(not r.error for r in detail)


def test_gmm_experiment_runs():
    rows = run_experiment(small_config(task="gmm", kinds=["rff"], trials=1))
    assert rows[0]["task"] == "gmm"
    assert 0.0 <= rows[0]["success_rate"] <= 1.0
