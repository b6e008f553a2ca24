"""Sketch matching: the cost ||z - A_Phi(P_theta)||_2 and greedy minimizers.

``clomp`` implements CLOMP / CLOMPR (orthogonal matching pursuit over a
continuous dictionary of atoms, with optional hard thresholding from 2K back
to K atoms) and ``gaussian_splitting`` grows a GMM one split at a time.  The
solvers only look at ``z.values``, so the same code handles symmetric sketches
(built with Phi) and asymmetric ones (built with a periodic map Psi).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, nnls

from .errors import DimensionError, InfeasibleTaskError, UnsupportedAnalyticSketchError
from .features import FeatureMap, FrequencySampler
from .models import Box, DiracMixture, GaussianMixture, sketch_model
from .sketch import Sketch

VARIANTS = ("CLOMP", "CLOMPR", "Splitting")
OPTIMIZERS = ("lbfgsb", "pgd")
WEIGHT_UPPER = 2.0


@dataclass(frozen=True)
class TaskSpec:
    """What to learn: ``kind`` is "kmeans" or "gmm"; ``S`` caps GMM variances."""

    kind: str
    K: int
    box: Box
    S: float | None = None
    sampler: FrequencySampler | None = None

    def __post_init__(self):
        if self.kind not in ("kmeans", "gmm"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.K < 1:
            raise InfeasibleTaskError("K must be >= 1")
        if self.kind == "gmm":
            if self.S is None:
                object.__setattr__(self, "S", (self.box.width / 2) ** 2)
            if not self.S > 0:
                raise InfeasibleTaskError("variance cap S must be positive")
            if self.S < self.box.variance_floor:
                raise InfeasibleTaskError("variance cap S is below the variance floor")

    @property
    def d(self) -> int:
        return self.box.d

    @property
    def gamma_min(self) -> float:
        return self.box.variance_floor


@dataclass(frozen=True)
class SolverOptions:
    restarts: int = 5
    inner_max_iters: int = 300
    gradient_tolerance: float = 1e-9
    step_initial: float = 1.0
    seed: int = 0
    variant: str = "CLOMPR"
    optimizer: str = "lbfgsb"
    trace_path: str | None = None

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.inner_max_iters < 1:
            raise ValueError("inner_max_iters must be >= 1")
        if not (self.gradient_tolerance > 0 and self.step_initial > 0):
            raise ValueError("tolerances and steps must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")


def default_variant(task: TaskSpec) -> str:
    return "Splitting" if task.kind == "gmm" and task.K >= 16 else "CLOMPR"


# --- atoms and the cost ----------------------------------------------------

def _require_rff(fmap: FeatureMap):
    if not fmap.is_rff:
        raise UnsupportedAnalyticSketchError(
            "learning uses a complex-exponential map; pass Phi, not Psi")


def _z_values(z, fmap: FeatureMap) -> np.ndarray:
    v = z.values if isinstance(z, Sketch) else np.asarray(z, dtype=complex)
    if v.shape != (fmap.m,):
        raise DimensionError(f"sketch has {v.size} entries, map has m={fmap.m}")
    return v


def _atoms(fmap, centers, variances=None):
    A = fmap.scale * np.exp(1j * (centers @ fmap.omega + fmap.dither))
    if variances is not None:
        A = A * np.exp(-0.5 * variances @ fmap.omega**2)
    return A


def _split(model):
    if isinstance(model, DiracMixture):
        return model.weights, model.centroids, None
    return model.weights, model.means, model.variances


def cost(fmap: FeatureMap, z, model) -> float:
    """||z - A_Phi(P_theta)||_2."""
    return float(np.linalg.norm(_z_values(z, fmap) - sketch_model(fmap, model)))


def _half_sq_and_grad(fmap, zv, w, centers, variances):
    """0.5 ||r||^2 and its partials with respect to (w, centers, variances)."""
    A = _atoms(fmap, centers, variances)
    r = zv - w @ A
    P = A * np.conj(r)
    gw = -P.real.sum(axis=1)
    gc = -w[:, None] * (1j * P @ fmap.omega.T).real
    gv = None
    if variances is not None:
        gv = 0.5 * w[:, None] * (P @ (fmap.omega**2).T).real
    return 0.5 * float(np.vdot(r, r).real), gw, gc, gv


def cost_gradient(fmap: FeatureMap, z, model) -> dict:
    """Gradient of :func:`cost` w.r.t. weights, centers and (GMM) variances."""
    _require_rff(fmap)
    zv = _z_values(z, fmap)
    w, c, v = _split(model)
    f, gw, gc, gv = _half_sq_and_grad(fmap, zv, w, c, v)
    nrm = np.sqrt(2 * f)
    if nrm == 0:
        raise ValueError("cost is not differentiable at an exact match")
    key = "centroids" if v is None else "means"
    out = {"weights": gw / nrm, key: gc / nrm}
    if v is not None:
        out["variances"] = gv / nrm
    return out


def atom_correlation(fmap: FeatureMap, r, center, variance=None):
    """Re<A(theta), r> / ||A(theta)|| and its gradient in (center, variance)."""
    a = _atoms(fmap, center[None, :], None if variance is None else variance[None, :])[0]
    Q = np.conj(a) * r
    c = Q.sum().real
    dc_mu = (fmap.omega @ Q).imag
    n2 = float(np.sum(np.abs(a) ** 2))
    n = np.sqrt(n2)
    if variance is None:
        return c / n, dc_mu / n, None
    w2 = fmap.omega**2
    dc_var = -0.5 * (w2 @ Q).real
    dn2_var = -(w2 @ np.abs(a) ** 2)
    dn_var = dn2_var / (2 * n)
    return c / n, dc_mu / n, dc_var / n - c * dn_var / n2


# --- bounded minimization --------------------------------------------------

def _pgd(fun, x0, lo, hi, opts: SolverOptions, c=1e-4, shrink=0.5):
    """Projected gradient with Armijo backtracking along the projection arc."""
    x = np.clip(x0, lo, hi)
    f, g = fun(x)
    step = opts.step_initial
    for _ in range(opts.inner_max_iters):
        if np.linalg.norm(np.clip(x - g, lo, hi) - x) <= opts.gradient_tolerance:
            break
        while True:
            xn = np.clip(x - step * g, lo, hi)
            fn, gn = fun(xn)
            if fn <= f + c * g @ (xn - x):
                break
            step *= shrink
            if step < 1e-20:
                return x, f
        if f - fn <= 1e-15 * max(abs(f), 1.0):
            x, f, g = xn, fn, gn
            break
        x, f, g = xn, fn, gn
        step /= shrink
    return x, f


def _minimize_box(fun, x0, lo, hi, opts: SolverOptions):
    """Minimize ``fun`` (returning value, gradient) over [lo, hi].

    Never returns a point worse than the (projected) start.
    """
    x0 = np.clip(x0, lo, hi)
    f0, _ = fun(x0)
    if opts.optimizer == "pgd":
        x, f = _pgd(fun, x0, lo, hi, opts)
    else:
        res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)),
                       options={"maxiter": opts.inner_max_iters, "gtol": opts.gradient_tolerance,
                                "ftol": 1e-12})
        x, f = np.clip(res.x, lo, hi), float(res.fun)
    if not f <= f0:
        return x0, f0
    return x, f


# --- the greedy solvers ----------------------------------------------------

class _Problem:
    """Bounds and packing for one task; the support holds centers and variances."""

    def __init__(self, fmap, zv, task: TaskSpec):
        self.fmap, self.zv, self.task = fmap, zv, task
        self.gmm = task.kind == "gmm"
        box = task.box
        self.clo, self.chi = box.lower, box.upper
        self.var_init = np.clip((box.width / 8) ** 2, task.gamma_min, task.S) if self.gmm else None

    # parameters of one atom
    def atom_bounds(self):
        lo, hi = list(self.clo), list(self.chi)
        if self.gmm:
            lo += [self.task.gamma_min] * self.task.d
            hi += [self.task.S] * self.task.d
        return np.array(lo), np.array(hi)

    def atom_unpack(self, x):
        d = self.task.d
        return (x[:d], x[d:]) if self.gmm else (x, None)

    # all weights and atoms
    def pack(self, w, C, V):
        parts = [w, C.ravel()] + ([V.ravel()] if self.gmm else [])
        return np.concatenate(parts)

    def unpack(self, x, k):
        d = self.task.d
        w = x[:k]
        C = x[k:k + k * d].reshape(k, d)
        V = x[k + k * d:].reshape(k, d) if self.gmm else None
        return w, C, V

    def bounds(self, k):
        d = self.task.d
        lo = [np.zeros(k), np.tile(self.clo, k)]
        hi = [np.full(k, WEIGHT_UPPER), np.tile(self.chi, k)]
        if self.gmm:
            lo.append(np.full(k * d, self.task.gamma_min))
            hi.append(np.full(k * d, self.task.S))
        return np.concatenate(lo), np.concatenate(hi)

    def objective(self, k):
        def fun(x):
            w, C, V = self.unpack(x, k)
            f, gw, gc, gv = _half_sq_and_grad(self.fmap, self.zv, w, C, V)
            parts = [gw, gc.ravel()] + ([gv.ravel()] if self.gmm else [])
            return f, np.concatenate(parts)
        return fun

    def residual(self, w, C, V):
        if len(w) == 0:
            return self.zv.copy()
        return self.zv - w @ _atoms(self.fmap, C, V)

    def find_atom(self, r, rng, opts):
        lo, hi = self.atom_bounds()

        def fun(x):
            c, v = self.atom_unpack(x)
            val, gmu, gvar = atom_correlation(self.fmap, r, c, v)
            g = -gmu if gvar is None else -np.concatenate([gmu, gvar])
            return -val, g

        best = None
        for _ in range(opts.restarts):
            x0 = rng.uniform(self.clo, self.chi)
            if self.gmm:
                x0 = np.concatenate([x0, np.full(self.task.d, self.var_init)])
            x, f = _minimize_box(fun, x0, lo, hi, opts)
            if best is None or f < best[1]:
                best = (x, f)
        return self.atom_unpack(best[0])

    def nnls_weights(self, C, V, normalized=False):
        A = _atoms(self.fmap, C, V)
        if normalized:
            A = A / np.linalg.norm(A, axis=1, keepdims=True)
        M = np.vstack([A.real.T, A.imag.T])
        b = np.concatenate([self.zv.real, self.zv.imag])
        w, _ = nnls(M, b)
        return w

    def refine(self, w, C, V, opts):
        k = len(w)
        fun = self.objective(k)
        lo, hi = self.bounds(k)
        x0 = self.pack(np.clip(w, 0, WEIGHT_UPPER), C, V)
        x, f = _minimize_box(fun, x0, lo, hi, opts)
        return (*self.unpack(x, k), f)

    def model(self, w, C, V):
        s = w.sum()
        w = np.full(len(w), 1.0 / len(w)) if s <= 0 else w / s
        if self.gmm:
            return GaussianMixture(w, C, V)
        return DiracMixture(w, C)


def _setup(z, fmap, task):
    _require_rff(fmap)
    if task.box.d != fmap.d:
        raise DimensionError(f"task box has dimension {task.box.d}, map has d={fmap.d}")
    return _Problem(fmap, _z_values(z, fmap), task)


def _record(trace, it, stage, f):
    if trace is not None:
        trace.append((it, stage, float(np.sqrt(2 * f))))


def clomp(z, fmap: FeatureMap, task: TaskSpec, opts: SolverOptions = SolverOptions(),
          trace: list | None = None):
    """CLOMP (K greedy steps) or CLOMPR (2K steps with hard thresholding to K).

    ``trace``, if given, receives ``(iteration, stage, cost)`` tuples.
    """
    if opts.variant == "Splitting":
        return gaussian_splitting(z, fmap, task, opts, trace)
    pb = _setup(z, fmap, task)
    trace = [] if trace is None and opts.trace_path else trace
    rng = np.random.default_rng(opts.seed)
    K, d = task.K, task.d
    w = np.zeros(0)
    C = np.zeros((0, d))
    V = np.zeros((0, d)) if pb.gmm else None
    n_iter = 2 * K if opts.variant == "CLOMPR" else K
    for it in range(n_iter):
        c, v = pb.find_atom(pb.residual(w, C, V), rng, opts)
        C = np.vstack([C, c])
        if pb.gmm:
            V = np.vstack([V, v])
        if len(C) > K:
            keep = np.sort(np.argsort(-pb.nnls_weights(C, V, normalized=True), kind="stable")[:K])
            C = C[keep]
            V = V[keep] if pb.gmm else None
        w = pb.nnls_weights(C, V)
        _record(trace, it, "nnls", 0.5 * np.sum(np.abs(pb.residual(w, C, V)) ** 2))
        w, C, V, f = pb.refine(w, C, V, opts)
        _record(trace, it, "refine", f)
    w, C, V, f = pb.refine(w, C, V, opts)
    _record(trace, n_iter, "final", f)
    if opts.trace_path:
        write_trace(opts.trace_path, trace)
    return pb.model(w, C, V)


def gaussian_splitting(z, fmap: FeatureMap, task: TaskSpec, opts: SolverOptions = SolverOptions(),
                       trace: list | None = None) -> GaussianMixture:
    """Fit one Gaussian, then split the widest component until there are K."""
    if task.kind != "gmm":
        raise InfeasibleTaskError("Gaussian splitting needs a gmm task")
    pb = _setup(z, fmap, task)
    trace = [] if trace is None and opts.trace_path else trace
    rng = np.random.default_rng(opts.seed)
    c, v = pb.find_atom(pb.zv, rng, opts)
    C, V = c[None, :], v[None, :]
    w, C, V, f = pb.refine(pb.nnls_weights(C, V), C, V, opts)
    _record(trace, 0, "refine", f)
    it = 0
    while len(w) < task.K:
        it += 1
        k = int(np.argmax(V.sum(axis=1)))
        ax = int(np.argmax(V[k]))
        off = np.zeros(task.d)
        off[ax] = np.sqrt(V[k, ax])
        v_new = V[k].copy()
        v_new[ax] = max(v_new[ax] / 2, task.gamma_min)
        C = np.vstack([C[:k], task.box.clip(C[k] - off), task.box.clip(C[k] + off), C[k + 1:]])
        V = np.vstack([V[:k], v_new, v_new, V[k + 1:]])
        w = np.concatenate([w[:k], [w[k] / 2, w[k] / 2], w[k + 1:]])
        _record(trace, it, "split", 0.5 * np.sum(np.abs(pb.residual(w, C, V)) ** 2))
        w, C, V, f = pb.refine(w, C, V, opts)
        _record(trace, it, "refine", f)
    if opts.trace_path:
        write_trace(opts.trace_path, trace)
    return pb.model(w, C, V)


def solve(z, fmap: FeatureMap, task: TaskSpec, opts: SolverOptions | None = None, trace=None):
    """Dispatch on ``opts.variant`` (defaults chosen by :func:`default_variant`)."""
    if opts is None:
        opts = SolverOptions(variant=default_variant(task))
    if opts.variant == "Splitting":
        return gaussian_splitting(z, fmap, task, opts, trace)
    return clomp(z, fmap, task, opts, trace)


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "stage", "cost"])
        wr.writerows(trace)
