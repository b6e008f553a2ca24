import csv

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from acl.errors import DimensionError, InfeasibleTaskError, UnsupportedAnalyticSketchError
from acl.features import FrequencySampler, apply_map, make_feature_map
from acl.models import Box, DiracMixture, GaussianMixture, sketch_model
from acl.sketch import Sketch, sketch_dataset
from acl.solver import (
    SolverOptions,
    TaskSpec,
    atom_correlation,
    clomp,
    cost,
    cost_gradient,
    default_variant,
    gaussian_splitting,
    solve,
)

BOX2 = Box([0.0, 0.0], [1.0, 1.0])


def fmap(m=40, d=2, sigma2=100.0, kind="exp", seed=0):
    return make_feature_map(FrequencySampler("gaussian", sigma2, d), m, kind, omega_seed=seed,
                            dither_seed=seed + 100)


def matched_error(est, ref):
    D = np.linalg.norm(est[:, None, :] - ref[None, :, :], axis=2)
    r, c = linear_sum_assignment(D)
    return D[r, c]


def test_cost_examples():
    fm = fmap()
    model = DiracMixture([0.5, 0.5], [[0.2, 0.2], [0.7, 0.6]])
    assert cost(fm, sketch_model(fm, model), model) == pytest.approx(0.0, abs=1e-15)
    single = DiracMixture([1.0], [[0.3, 0.3]])
    assert cost(fm, np.zeros(fm.m), single) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DimensionError):
        cost(fm, np.zeros(fm.m + 1), single)


def _central(f, x, h):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


@pytest.mark.parametrize("task", ["kmeans", "gmm"])
def test_cost_gradient_finite_differences(task):
    rng = np.random.default_rng(1)
    fm = fmap(m=30, sigma2=20.0)
    z = sketch_dataset(fm, rng.uniform(0, 1, (200, 2)))
    h = 1e-6
    for _ in range(20):
        K = 3
        w = rng.dirichlet(np.ones(K))
        C = rng.uniform(0, 1, (K, 2))
        V = rng.uniform(0.005, 0.05, (K, 2)) if task == "gmm" else None

        def f_of(w_, C_, V_):
            A = np.exp(1j * (C_ @ fm.omega + fm.dither)) * fm.scale
            if V_ is not None:
                A = A * np.exp(-0.5 * V_ @ fm.omega**2)
            return np.linalg.norm(z.values - w_ @ A)

        model = DiracMixture(w, C) if V is None else GaussianMixture(w, C, V)
        g = cost_gradient(fm, z, model)
        assert f_of(w, C, V) == pytest.approx(cost(fm, z, model), rel=1e-12)
        checks = [("weights", w, lambda x: f_of(x, C, V))]
        key = "centroids" if V is None else "means"
        checks.append((key, C, lambda x: f_of(w, x, V)))
        if V is not None:
            checks.append(("variances", V, lambda x: f_of(w, C, x)))
        for name, x, f in checks:
            fd = _central(f, x, h)
            assert np.linalg.norm(fd - g[name]) <= 1e-5 * np.linalg.norm(g[name])


@pytest.mark.parametrize("gmm", [False, True])
def test_atom_correlation_gradient(gmm):
    rng = np.random.default_rng(2)
    fm = fmap(m=30, sigma2=20.0)
    r = rng.normal(size=fm.m) + 1j * rng.normal(size=fm.m)
    c = rng.uniform(0, 1, 2)
    v = rng.uniform(0.01, 0.05, 2) if gmm else None
    val, gc, gv = atom_correlation(fm, r, c, v)
    fd = _central(lambda x: atom_correlation(fm, r, x, v)[0], c, 1e-6)
    assert np.allclose(fd, gc, rtol=1e-5, atol=1e-8)
    if gmm:
        fd = _central(lambda x: atom_correlation(fm, r, c, x)[0], v, 1e-7)
        assert np.allclose(fd, gv, rtol=1e-5, atol=1e-7)
    else:
        assert gv is None


def test_single_point_recovery():
    box = Box([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0])
    x = np.array([0.3, -0.55, 0.1])
    fm = fmap(m=60, d=3, sigma2=10.0)
    z = sketch_dataset(fm, x[None, :])
    est = clomp(z, fm, TaskSpec("kmeans", 1, box))
    assert np.max(np.abs(est.centroids[0] - x)) <= 1e-3 * box.width


def test_planted_dirac_recovery():
    # attraction radius ~ 1/sigma = 0.05; pairwise distances >= 0.66
    C = np.array([[0.15, 0.2], [0.8, 0.3], [0.4, 0.85]])
    true = DiracMixture.uniform(C)
    ok = 0
    for seed in range(10):
        fm = fmap(m=80, sigma2=400.0, seed=seed)
        est = clomp(sketch_model(fm, true), fm, TaskSpec("kmeans", 3, BOX2), SolverOptions(seed=seed))
        ok += np.all(matched_error(est.centroids, C) <= 1e-2 * np.linalg.norm(C, axis=1).min())
    assert ok >= 8


@pytest.mark.parametrize("variant", ["Splitting", "CLOMPR"])
def test_planted_gmm_recovery(variant):
    mu = np.array([[0.3, 0.3], [0.7, 0.7]])
    V = np.full((2, 2), 0.0025)
    true = GaussianMixture([0.5, 0.5], mu, V)
    # splitting starts from one Gaussian fit, which needs low frequencies
    fm = fmap(m=100, sigma2=25.0, seed=3)
    task = TaskSpec("gmm", 2, BOX2, S=0.25)
    est = solve(sketch_model(fm, true), fm, task, SolverOptions(variant=variant, seed=1))
    sep = np.linalg.norm(mu[0] - mu[1])
    assert np.all(matched_error(est.means, mu) <= 0.05 * sep)
    est.check(BOX2, 0.25)


def test_clomp_variant_keeps_k_atoms():
    fm = fmap()
    z = sketch_dataset(fm, np.random.default_rng(0).uniform(size=(100, 2)))
    for variant in ("CLOMP", "CLOMPR"):
        est = clomp(z, fm, TaskSpec("kmeans", 4, BOX2), SolverOptions(variant=variant))
        assert est.K == 4
        assert abs(est.weights.sum() - 1) <= 1e-12
        assert np.all(BOX2.contains(est.centroids))


def test_deterministic():
    fm = fmap()
    z = sketch_dataset(fm, np.random.default_rng(1).uniform(size=(100, 2)))
    task = TaskSpec("kmeans", 3, BOX2)
    a = clomp(z, fm, task, SolverOptions(seed=5))
    b = clomp(z, fm, task, SolverOptions(seed=5))
    assert np.array_equal(a.centroids, b.centroids) and np.array_equal(a.weights, b.weights)


@pytest.mark.parametrize("optimizer", ["lbfgsb", "pgd"])
def test_refinement_never_increases_cost(optimizer, tmp_path):
    fm = fmap()
    z = sketch_dataset(fm, np.random.default_rng(2).uniform(size=(300, 2)))
    path = tmp_path / "trace.csv"
    opts = SolverOptions(seed=0, optimizer=optimizer, trace_path=str(path))
    clomp(z, fm, TaskSpec("kmeans", 3, BOX2), opts)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0].keys() == {"iteration", "stage", "cost"}
    prev = None
    for row in rows:
        c = float(row["cost"])
        if row["stage"] in ("refine", "final"):
            assert c <= prev + 1e-12
        prev = c


def test_splitting_trace_monotone():
    fm = fmap(m=60)
    true = GaussianMixture([0.3, 0.3, 0.4], [[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]], np.full((3, 2), 0.003))
    trace = []
    gaussian_splitting(sketch_model(fm, true), fm, TaskSpec("gmm", 3, BOX2), SolverOptions(), trace)
    for (_, s0, c0), (_, s1, c1) in zip(trace, trace[1:]):
        if s1 == "refine":
            assert c1 <= c0 + 1e-12


def test_symmetric_and_asymmetric_sketches_use_same_code():
    fm = fmap()
    X = np.random.default_rng(3).uniform(size=(50, 2))
    zq = sketch_dataset(fm.with_nonlinearity("quantized", renormalize=True), X)
    task = TaskSpec("kmeans", 2, BOX2)
    a = clomp(zq, fm, task)
    b = clomp(Sketch(zq.values, zq.count, fm.map_hash), fm, task)
    c = clomp(zq.values, fm, task)
    assert np.array_equal(a.centroids, b.centroids) and np.array_equal(a.centroids, c.centroids)


def test_errors():
    fm = fmap()
    z = np.zeros(fm.m, dtype=complex)
    with pytest.raises(InfeasibleTaskError):
        TaskSpec("kmeans", 0, BOX2)
    with pytest.raises(InfeasibleTaskError):
        TaskSpec("gmm", 2, BOX2, S=-1.0)
    with pytest.raises(InfeasibleTaskError):
        gaussian_splitting(z, fm, TaskSpec("kmeans", 2, BOX2))
    with pytest.raises(UnsupportedAnalyticSketchError):
        clomp(z, fm.with_nonlinearity("quantized"), TaskSpec("kmeans", 2, BOX2))
    with pytest.raises(DimensionError):
        clomp(z, fm, TaskSpec("kmeans", 2, Box([0.0], [1.0])))
    with pytest.raises(ValueError):
        SolverOptions(restarts=0)
    with pytest.raises(ValueError):
        SolverOptions(variant="OMP")
    with pytest.raises(ValueError):
        cost_gradient(fm, apply_map(fm, np.array([0.5, 0.5])), DiracMixture([1.0], [[0.5, 0.5]]))


def test_default_variant():
    assert default_variant(TaskSpec("gmm", 20, BOX2)) == "Splitting"
    assert default_variant(TaskSpec("gmm", 5, BOX2)) == "CLOMPR"
    assert default_variant(TaskSpec("kmeans", 20, BOX2)) == "CLOMPR"
    assert TaskSpec("gmm", 2, BOX2).S == pytest.approx(0.25)
