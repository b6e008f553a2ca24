"""Model sets for compressive k-means (Dirac mixtures) and diagonal GMM.

Also hosts the domain bounds used by the sketch-size guarantees: extended
boxes, the Gaussian tail mass ζ and the covering-entropy bound of a box.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, InfeasibleTaskError, UnsupportedAnalyticSketchError
from .features import FeatureMap, apply_map
from .periodic import PeriodicFunction, constant_cf, known_mean_lipschitz

WEIGHT_TOL = 1e-9
VARIANCE_FLOOR_FACTOR = 1e-8


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned data domain {x : lower <= x <= upper}."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float, ndmin=1)
        hi = np.array(self.upper, dtype=float, ndmin=1)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("box bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise InfeasibleTaskError("box lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, d: int) -> Box:
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def from_data(cls, X) -> Box:
        X = np.asarray(X, dtype=float)
        return cls(X.min(axis=0), X.max(axis=0))

    @property
    def d(self) -> int:
        return self.lower.size

    @property
    def width(self) -> float:
        """||u - l||_inf."""
        return float(np.max(self.upper - self.lower))

    @property
    def variance_floor(self) -> float:
        return VARIANCE_FLOOR_FACTOR * max(self.width, 1e-12) ** 2

    def contains(self, X, tol=0.0) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.all((X >= self.lower - tol) & (X <= self.upper + tol), axis=-1)

    def clip(self, X) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)

    def uniform(self, rng, size) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.d))

    def to_json(self):
        return {"l": self.lower.tolist(), "u": self.upper.tolist()}

    @classmethod
    def from_json(cls, obj) -> Box:
        return cls(obj["l"], obj["u"])


def _weights(w, K):
    w = np.array(w, dtype=float, ndmin=1)
    if w.shape != (K,):
        raise DimensionError(f"expected {K} weights, got shape {w.shape}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise DataError("weights must be nonnegative and sum to 1")
    return w


def _frozen(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiracMixture:
    weights: np.ndarray
    centroids: np.ndarray

    def __post_init__(self):
        c = np.array(self.centroids, dtype=float, ndmin=2)
        object.__setattr__(self, "centroids", _frozen(c))
        object.__setattr__(self, "weights", _frozen(_weights(self.weights, c.shape[0])))

    @classmethod
    def uniform(cls, centroids) -> DiracMixture:
        c = np.array(centroids, dtype=float, ndmin=2)
        return cls(np.full(c.shape[0], 1.0 / c.shape[0]), c)

    @property
    def K(self):
        return self.centroids.shape[0]

    @property
    def d(self):
        return self.centroids.shape[1]

    @property
    def centers(self):
        return self.centroids

    def check(self, box: Box, tol=1e-9):
        if not np.all(box.contains(self.centroids, tol)):
            raise DataError("centroids lie outside the task box")


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture of Gaussians with diagonal covariances (``variances`` is K x d)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        mu = np.array(self.means, dtype=float, ndmin=2)
        var = np.array(self.variances, dtype=float, ndmin=2)
        if var.shape != mu.shape:
            raise DimensionError("variances must have the same shape as means")
        if np.any(var <= 0):
            raise DataError("variances must be positive")
        object.__setattr__(self, "means", _frozen(mu))
        object.__setattr__(self, "variances", _frozen(var))
        object.__setattr__(self, "weights", _frozen(_weights(self.weights, mu.shape[0])))

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    @property
    def centers(self):
        return self.means

    def check(self, box: Box, S: float | None = None, tol=1e-9):
        if not np.all(box.contains(self.means, tol)):
            raise DataError("means lie outside the task box")
        if S is not None and np.max(self.variances) > S * (1 + tol):
            raise DataError("a variance exceeds the cap S")
        if np.min(self.variances) < box.variance_floor * (1 - tol):
            raise DataError("a variance is below the floor")

    def sample(self, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
        labels = rng.choice(self.K, size=n, p=self.weights)
        X = self.means[labels] + rng.standard_normal((n, self.d)) * np.sqrt(self.variances[labels])
        return X, labels


# --- analytic sketches -------------------------------------------------------

def dirac_atoms(fmap: FeatureMap, centroids) -> np.ndarray:
    """(K, m) sketches of unit Diracs."""
    return apply_map(fmap, np.atleast_2d(centroids))


def gaussian_atoms(fmap: FeatureMap, means, variances) -> np.ndarray:
    """(K, m) closed-form sketches A_Phi(N(mu_k, diag(gamma_k))) for RFF maps."""
    if not fmap.is_rff:
        raise UnsupportedAnalyticSketchError(
            "Gaussian sketches are only available in closed form for complex exponentials")
    means = np.atleast_2d(means)
    variances = np.atleast_2d(variances)
    damp = np.exp(-0.5 * variances @ fmap.omega**2)
    return apply_map(fmap, means) * damp


def atoms(fmap: FeatureMap, model) -> np.ndarray:
    if isinstance(model, DiracMixture):
        return dirac_atoms(fmap, model.centroids)
    return gaussian_atoms(fmap, model.means, model.variances)


def sketch_model(fmap: FeatureMap, model) -> np.ndarray:
    """A_Phi(P_theta) = sum_k w_k A_Phi(P_theta_k)."""
    return model.weights @ atoms(fmap, model)


def sketch_model_gradient(fmap: FeatureMap, model) -> dict:
    """Partial derivatives of :func:`sketch_model` with respect to every parameter.

    Returns complex arrays keyed by parameter name: ``weights`` (K, m),
    ``centroids`` or ``means`` (K, d, m) and, for GMMs, ``variances`` (K, d, m).
    Entry ``[k, l, j]`` is d(sketch_j) / d(param_{k,l}).
    """
    if not fmap.is_rff:
        raise UnsupportedAnalyticSketchError("gradients require a complex-exponential map")
    A = atoms(fmap, model)
    w = model.weights[:, None, None]
    d_center = w * 1j * fmap.omega[None, :, :] * A[:, None, :]
    if isinstance(model, DiracMixture):
        return {"weights": A, "centroids": d_center}
    d_var = w * (-0.5) * (fmap.omega**2)[None, :, :] * A[:, None, :]
    return {"weights": A, "means": d_center, "variances": d_var}


# --- domain bounds ---------------------------------------------------------

def extended_box(box: Box, rho: float, S: float) -> Box:
    """Box enlarged by rho * S on every side."""
    if rho < 0 or S < 0:
        raise ValueError("rho and S must be nonnegative")
    return Box(box.lower - rho * S, box.upper + rho * S)


def entropy_bound(box: Box, nu: float) -> float:
    """Upper bound (nats) on the ν-entropy of a box: d log(1 + sqrt(d) ||u-l||_inf / ν)."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    d = box.d
    return d * math.log(1.0 + math.sqrt(d) * box.width / nu)


def zeta_bound(rho: float, d: int) -> float:
    """Gaussian tail bound min(1, d e^{-ρ²/2} / (ρ sqrt(2π)))."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    return min(1.0, d / (rho * math.sqrt(2 * math.pi)) * math.exp(-rho**2 / 2))


def required_sketch_size(f: PeriodicFunction, C_Lambda: float, box: Box, eps0: float,
                         task: str = "kmeans", rho: float | None = None, S: float | None = None,
                         lipschitz: float | None = None) -> int:
    """Smallest m meeting ``m >= 128 eps0^-2 H_{eps0/c_f}(domain)``.

    The domain is ``box`` for k-means and ``extended_box(box, rho, S)`` for GMM.
    Named periodic functions use their closed-form mean Lipschitz constant
    unless ``lipschitz`` is given.
    """
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    if task == "gmm":
        if rho is None or S is None:
            raise ValueError("the gmm bound needs rho and S")
        box = extended_box(box, rho, S)
    elif task != "kmeans":
        raise ValueError(f"unknown task {task!r}")
    if lipschitz is None and f.closed_form:
        lipschitz = known_mean_lipschitz(f)
    cf = constant_cf(f, C_Lambda, lipschitz=lipschitz)
    bound = 128.0 / eps0**2 * entropy_bound(box, eps0 / cf)
    return int(math.ceil(bound - 1e-9 * bound))


# --- persistence ---------------------------------------------------------

def model_to_json(model, box: Box | None = None, S: float | None = None) -> dict:
    out = {"K": model.K, "d": model.d, "weights": model.weights.tolist()}
    if isinstance(model, DiracMixture):
        out.update(task="kmeans", centroids=model.centroids.tolist())
    else:
        out.update(task="gmm", means=model.means.tolist(), variances=model.variances.tolist())
    if box is not None:
        out["box"] = box.to_json()
    if S is not None:
        out["S"] = S
    return out


def model_from_json(obj: dict):
    """Return ``(model, box or None, S or None)``."""
    try:
        if obj["task"] == "kmeans":
            model = DiracMixture(obj["weights"], obj["centroids"])
        elif obj["task"] == "gmm":
            model = GaussianMixture(obj["weights"], obj["means"], obj["variances"])
        else:
            raise DataError(f"unknown task {obj['task']!r}")
    except KeyError as exc:
        raise DataError(f"model record lacks {exc}") from exc
    box = Box.from_json(obj["box"]) if "box" in obj else None
    return model, box, obj.get("S")


def save_model(path, model, box=None, S=None):
    Path(path).write_text(json.dumps(model_to_json(model, box, S), indent=1))


def load_model(path):
    try:
        return model_from_json(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
