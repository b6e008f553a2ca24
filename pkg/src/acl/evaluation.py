"""Synthetic data, classical baselines, task metrics and the experiment harness."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.special import logsumexp

from .errors import ACLError, DataError, InfeasibleSeparationError
from .features import FrequencySampler, kernel_scale_preset, make_feature_map
from .models import Box, DiracMixture, GaussianMixture
from .sketch import sketch_dataset
from .solver import SolverOptions, TaskSpec, solve

MAX_SEPARATION_ROUNDS = 1000
MAX_ITERS = 300
REL_TOL = 1e-9
KINDS = ("rff", "quantized", "modulo")
NONLINEARITY = {"rff": "exp", "quantized": "quantized", "modulo": "modulo"}


# --- data ------------------------------------------------------------------

def generate_gmm_data(K: int, d: int, n: int, separation: float = 4.0, seed=0,
                      sigma: float = 0.04, weight_concentration: float = 10.0,
                      return_labels: bool = False):
    """Sample n points from a random isotropic GMM in the unit box.

    Means are uniform in [0, 1]^d, redrawn until every pair is at least
    ``separation * mean(sigma_k)`` apart.  Standard deviations are
    ``sigma`` times a factor in [0.8, 1.2] and weights are Dirichlet with a
    large concentration.  The first K samples are forced to one per mode, so
    every mode is represented.
    """
    if n < K:
        raise DataError("n must be at least K")
    rng = np.random.default_rng(seed)
    sig = sigma * rng.uniform(0.8, 1.2, K)
    min_dist = separation * sig.mean()
    for _ in range(MAX_SEPARATION_ROUNDS):
        mu = rng.uniform(0.0, 1.0, (K, d))
        diff = mu[:, None, :] - mu[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() >= min_dist:
            break
    else:
        raise InfeasibleSeparationError(
            f"could not place {K} means {min_dist:.3g} apart in the unit {d}-cube")
    w = rng.dirichlet(np.full(K, weight_concentration))
    truth = GaussianMixture(w / w.sum(), mu, np.repeat(sig[:, None] ** 2, d, axis=1))
    labels = np.concatenate([np.arange(K), rng.choice(K, size=n - K, p=truth.weights)])
    X = mu[labels] + rng.standard_normal((n, d)) * sig[labels, None]
    perm = rng.permutation(n)
    X, labels = X[perm], labels[perm]
    return (X, truth, labels) if return_labels else (X, truth)


# --- metrics ---------------------------------------------------------------

def _sq_dists(X, C, chunk=8192):
    out = np.empty((X.shape[0], C.shape[0]))
    for i in range(0, X.shape[0], chunk):
        diff = X[i:i + chunk, None, :] - C[None, :, :]
        out[i:i + chunk] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def sse(model, X) -> float:
    """Sum over samples of the squared distance to the nearest centroid."""
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[0] == 0:
        raise DataError("empty dataset")
    C = model.centroids if isinstance(model, DiracMixture) else np.atleast_2d(model)
    return float(_sq_dists(X, C).min(axis=1).sum())


def _log_resp(model: GaussianMixture, X):
    """(n, K) log of w_k N(x_i; mu_k, diag(gamma_k))."""
    var = model.variances
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    out = np.empty((X.shape[0], model.K))
    for k in range(model.K):
        z = (X - model.means[k]) ** 2 / var[k]
        out[:, k] = logw[k] - 0.5 * (z.sum(1) + np.log(2 * np.pi * var[k]).sum())
    return out


def log_likelihood(model: GaussianMixture, X) -> float:
    X = np.atleast_2d(np.asarray(X, float))
    return float(logsumexp(_log_resp(model, X), axis=1).sum())


# --- baselines -------------------------------------------------------------

def kmeanspp_init(X, K, rng) -> np.ndarray:
    n = X.shape[0]
    C = [X[rng.integers(n)]]
    d2 = ((X - C[0]) ** 2).sum(1)
    for _ in range(1, K):
        tot = d2.sum()
        i = rng.integers(n) if tot <= 0 else rng.choice(n, p=d2 / tot)
        C.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(1))
    return np.array(C)


def lloyd(X, C, max_iters=MAX_ITERS, tol=REL_TOL):
    """Lloyd iterations from centroids C; returns (C, labels, sse history).

    An empty cluster is reseeded at the sample farthest from its current
    centroid, which cannot increase the SSE.
    """
    C = C.copy()
    history = []
    for _ in range(max_iters):
        D = _sq_dists(X, C)
        labels = D.argmin(1)
        dmin = D[np.arange(len(X)), labels]
        history.append(float(dmin.sum()))
        if len(history) > 1 and history[-2] - history[-1] <= tol * max(history[-2], 1e-300):
            break
        counts = np.bincount(labels, minlength=len(C))
        for k in range(len(C)):
            if counts[k]:
                C[k] = X[labels == k].mean(0)
        for k in np.flatnonzero(counts == 0):
            far = int(np.argmax(dmin))
            C[k] = X[far]
            dmin[far] = 0.0
    return C, labels, history


@dataclass
class BaselineResult:
    model: object
    history: list
    objective: float


def kmeans_baseline(X, K, restarts=10, seed=0, return_result=False):
    """Best-of-restarts Lloyd with k-means++ seeding."""
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[0] < K:
        raise DataError("need at least K samples")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        C, labels, hist = lloyd(X, kmeanspp_init(X, K, rng))
        obj = sse(C, X)
        if best is None or obj < best.objective:
            w = np.bincount(labels, minlength=K) / len(X)
            best = BaselineResult(DiracMixture(w / w.sum(), C), hist, obj)
    return best if return_result else best.model


def _em(X, model: GaussianMixture, floor, max_iters=MAX_ITERS, tol=REL_TOL):
    history = []
    n = X.shape[0]
    for _ in range(max_iters):
        lr = _log_resp(model, X)
        ll = logsumexp(lr, axis=1)
        history.append(float(ll.sum()))
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * abs(history[-2]):
            break
        R = np.exp(lr - ll[:, None])
        nk = R.sum(0)
        mu = model.means.copy()
        var = model.variances.copy()
        for k in np.flatnonzero(nk > 1e-10 * n):
            mu[k] = R[:, k] @ X / nk[k]
            var[k] = np.maximum(R[:, k] @ (X - mu[k]) ** 2 / nk[k], floor)
        w = nk / n
        model = GaussianMixture(w / w.sum(), mu, var)
    return model, history


def em_baseline(X, K, restarts=10, seed=0, return_result=False):
    """Best-of-restarts EM (diagonal covariances) from k-means++ seeded partitions."""
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[0] < K:
        raise DataError("need at least K samples")
    rng = np.random.default_rng(seed)
    floor = Box.from_data(X).variance_floor
    best = None
    for _ in range(restarts):
        C = kmeanspp_init(X, K, rng)
        labels = _sq_dists(X, C).argmin(1)
        glob = np.maximum(X.var(0), floor)
        var = np.array([X[labels == k].var(0) if np.sum(labels == k) > 1 else glob
                        for k in range(K)])
        w = np.bincount(labels, minlength=K) + 1.0
        init = GaussianMixture(w / w.sum(), C, np.maximum(var, floor))
        model, hist = _em(X, init, floor)
        obj = hist[-1]
        if best is None or obj > best.objective:
            best = BaselineResult(model, hist, obj)
    return best if return_result else best.model


# --- scoring ---------------------------------------------------------------

def risk(model, X, task) -> float:
    """SSE for k-means, negative log-likelihood for GMM."""
    return sse(model, X) if task == "kmeans" else -log_likelihood(model, X)


def empirical_excess_risk(candidate, baseline, X, task) -> float:
    if task == "kmeans":
        return sse(candidate, X) - sse(baseline, X)
    return log_likelihood(baseline, X) - log_likelihood(candidate, X)


def success(candidate, baseline, X, task, factor=1.2):
    """True/False per the task rule, or None when the GMM rule is not evaluable."""
    if task == "kmeans":
        return bool(sse(candidate, X) <= factor * sse(baseline, X))
    ll_b = log_likelihood(baseline, X)
    if ll_b <= 0:
        return None
    return bool(log_likelihood(candidate, X) >= ll_b / factor)


# --- experiment harness ----------------------------------------------------

@dataclass
class ExperimentConfig:
    """Sweep over sketch sizes, feature kinds and (optionally) dataset sizes.

    ``m_over_Kd`` entries are converted to m = round(ratio * K * d).  With
    ``super_n`` set, one dataset of that size is drawn, the baseline and the
    evaluation use it, and each trial sketches a subset of size n drawn
    without replacement.
    """

    task: str = "kmeans"
    K: int = 10
    d: int = 5
    n: list = field(default_factory=lambda: [10_000])
    m_over_Kd: list = field(default_factory=lambda: [2, 10])
    kinds: list = field(default_factory=lambda: list(KINDS))
    trials: int = 10
    seed: int = 0
    success_factor: float = 1.2
    law: str = "folded_gaussian"
    kernel_scale: float | None = None
    separation: float = 4.0
    sigma: float = 0.04
    super_n: int | None = None
    baseline_restarts: int = 10
    restarts: int = 5
    variant: str | None = None

    def __post_init__(self):
        if isinstance(self.n, int):
            self.n = [self.n]
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.success_factor > 1:
            raise ValueError("success_factor must exceed 1")
        bad = set(self.kinds) - set(KINDS)
        if bad:
            raise ValueError(f"unknown feature kinds {sorted(bad)}")
        if self.task not in ("kmeans", "gmm"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.kernel_scale is None:
            self.kernel_scale = kernel_scale_preset(self.task, self.d)

    @property
    def m_list(self):
        return [max(1, int(round(r * self.K * self.d))) for r in self.m_over_Kd]

    @classmethod
    def from_json(cls, obj: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise DataError(f"unknown experiment keys {sorted(extra)}")
        return cls(**obj)

    def to_json(self):
        return asdict(self)


@dataclass
class TrialRecord:
    m: int
    kind: str
    n: int
    trial: int
    excess: float
    success: bool | None
    error: str = ""


def _trial_seeds(cfg, trial):
    ss = np.random.SeedSequence([cfg.seed, trial])
    return [int(s.generate_state(1)[0]) for s in ss.spawn(4)]


def _learn(cfg, X_sketch, box, m, kind, omega_seed, dither_seed, solver_seed):
    sampler = FrequencySampler.from_kernel_scale(cfg.law, cfg.kernel_scale, cfg.d)
    symmetric = kind == "rff"
    phi = make_feature_map(sampler, m, "exp", omega_seed=omega_seed,
                           dither_seed=None if symmetric else dither_seed)
    if symmetric:
        z = sketch_dataset(phi, X_sketch)
    else:
        psi = phi.with_nonlinearity(NONLINEARITY[kind], renormalize=True)
        z = sketch_dataset(psi, X_sketch)
    task = TaskSpec(cfg.task, cfg.K, box)
    variant = cfg.variant or ("Splitting" if cfg.task == "gmm" and cfg.K >= 16 else "CLOMPR")
    return solve(z, phi, task, SolverOptions(restarts=cfg.restarts, seed=solver_seed,
                                             variant=variant))


def _baseline(cfg, X, seed):
    if cfg.task == "kmeans":
        return kmeans_baseline(X, cfg.K, cfg.baseline_restarts, seed)
    return em_baseline(X, cfg.K, cfg.baseline_restarts, seed)


def _run_trial(cfg: ExperimentConfig, trial: int, shared=None):
    data_seed, omega_seed, dither_seed, solver_seed = _trial_seeds(cfg, trial)
    rng = np.random.default_rng(data_seed)
    if shared is None:
        X_eval, _ = generate_gmm_data(cfg.K, cfg.d, max(cfg.n), cfg.separation, data_seed,
                                      sigma=cfg.sigma)
        baseline = _baseline(cfg, X_eval, data_seed)
    else:
        X_eval, baseline = shared
    box = Box.from_data(X_eval)
    records = []
    for n in cfg.n:
        if shared is None and n == X_eval.shape[0]:
            X_sk = X_eval
        else:
            X_sk = X_eval[np.sort(rng.choice(X_eval.shape[0], size=n, replace=False))]
        for m in cfg.m_list:
            for kind in cfg.kinds:
                try:
                    model = _learn(cfg, X_sk, box, m, kind, omega_seed + m, dither_seed + m,
                                   solver_seed)
                    exc = empirical_excess_risk(model, baseline, X_eval, cfg.task)
                    ok = success(model, baseline, X_eval, cfg.task, cfg.success_factor)
                    records.append(TrialRecord(m, kind, n, trial, exc, ok))
                except (ACLError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                    records.append(TrialRecord(m, kind, n, trial, math.nan, None,
                                               f"{type(exc).__name__}: {exc}"))
    return records


def run_trials(cfg: ExperimentConfig, jobs: int = 1) -> list[TrialRecord]:
    shared = None
    if cfg.super_n is not None:
        X, _ = generate_gmm_data(cfg.K, cfg.d, cfg.super_n, cfg.separation, cfg.seed,
                                 sigma=cfg.sigma)
        shared = (X, _baseline(cfg, X, cfg.seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_trial, cfg, t, shared) for t in range(cfg.trials)]
            results = [f.result() for f in futures]
    else:
        results = [_run_trial(cfg, t, shared) for t in range(cfg.trials)]
    records = [r for rs in results for r in rs]
    records.sort(key=lambda r: (r.n, r.m, KINDS.index(r.kind), r.trial))
    return records


ROW_FIELDS = ("task", "m", "m_over_Kd", "kind", "n", "median_excess", "success_rate", "trials")


def summarize(cfg: ExperimentConfig, records) -> list[dict]:
    rows = []
    ratios = dict(zip(cfg.m_list, cfg.m_over_Kd))
    cells = {}
    for r in records:
        cells.setdefault((r.n, r.m, r.kind), []).append(r)
    for (n, m, kind), rs in cells.items():
        exc = [r.excess for r in rs if not math.isnan(r.excess)]
        ev = [r.success for r in rs if r.success is not None]
        rows.append({
            "task": cfg.task, "m": m, "m_over_Kd": ratios[m], "kind": kind, "n": n,
            "median_excess": float(np.median(exc)) if exc else math.nan,
            "success_rate": float(np.mean(ev)) if ev else math.nan,
            "trials": len(rs),
        })
    return rows


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, detail: list | None = None) -> list[dict]:
    """Per-cell median excess risk and success rate; per-trial records go to ``detail``."""
    records = run_trials(cfg, jobs)
    if detail is not None:
        detail.extend(records)
    return summarize(cfg, records)


def rows_to_csv(rows, columns=ROW_FIELDS) -> str:
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    wr.writeheader()
    for row in rows:
        wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def records_to_csv(records) -> str:
    return rows_to_csv([asdict(r) for r in records],
                       columns=[f.name for f in fields(TrialRecord)])


def load_experiment_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return ExperimentConfig.from_json(json.load(fh))
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise DataError(f"cannot read experiment config {path}: {exc}") from exc
