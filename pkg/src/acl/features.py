"""Random Fourier / periodic feature maps.

    Psi_f(x) = f(Omega^T x + xi) / sqrt(m)          (optionally divided by F_1)

``Omega`` (d x m) has i.i.d. columns drawn from a :class:`FrequencySampler` and
``xi`` is a uniform dither on [0, 2π).  Both are regenerated from integer
seeds, so a map is fully described by its small JSON record.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DimensionError
from .periodic import Kind, PeriodicFunction, first_coefficient

LAWS = ("gaussian", "folded_gaussian")


def kernel_scale_preset(task: str, d: int) -> float:
    """Kernel variance heuristic: 1/(10d) for k-means, 1/(100d) for GMM.

    Frequencies are drawn with variance equal to the inverse of this scale,
    see :meth:`FrequencySampler.from_kernel_scale`.
    """
    if task == "kmeans":
        return 1.0 / (10 * d)
    if task == "gmm":
        return 1.0 / (100 * d)
    raise ValueError(f"unknown task {task!r}")


@dataclass(frozen=True)
class FrequencySampler:
    """Distribution Λ of the frequency vectors ω_j.

    ``gaussian``: ω ~ N(0, sigma2 I_d).
    ``folded_gaussian``: ω = r u with u uniform on the unit sphere and
    r = |g|, g ~ N(0, d sigma2), so that E||ω||² matches the Gaussian law
    while putting more mass on low frequencies.
    """

    law: str
    sigma2: float
    d: int

    def __post_init__(self):
        if self.law not in LAWS:
            raise ValueError(f"law must be one of {LAWS}, got {self.law!r}")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @classmethod
    def from_kernel_scale(cls, law: str, scale: float, d: int) -> FrequencySampler:
        return cls(law, 1.0 / scale, d)

    def sample(self, m: int, seed) -> np.ndarray:
        return sample_frequencies(self, m, seed)

    def to_json(self):
        return {"law": self.law, "sigma2": self.sigma2, "d": self.d}


def sample_frequencies(sampler: FrequencySampler, m: int, seed) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    d = sampler.d
    sigma = math.sqrt(sampler.sigma2)
    if sampler.law == "gaussian":
        return sigma * rng.standard_normal((d, m))
    g = rng.standard_normal((d, m))
    u = g / np.linalg.norm(g, axis=0, keepdims=True)
    r = np.abs(rng.standard_normal(m)) * sigma * math.sqrt(d)
    return u * r


def sample_dither(m: int, seed) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be >= 1")
    return np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, m)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Feature map x -> f(Omega^T x + xi) / sqrt(m), optionally scaled by 1/F_1.

    Build seeded maps with :func:`make_feature_map`; only those can be
    serialized.  ``dither_seed=None`` on a seeded map means xi = 0.
    """

    omega: np.ndarray
    dither: np.ndarray
    nonlinearity: PeriodicFunction = field(default_factory=PeriodicFunction.exp)
    renormalize: bool = False
    sampler: FrequencySampler | None = None
    omega_seed: int | None = None
    dither_seed: int | None = None

    def __post_init__(self):
        omega = np.array(self.omega, dtype=float, ndmin=2)
        dither = np.array(self.dither, dtype=float, ndmin=1)
        if dither.shape != (omega.shape[1],):
            raise DimensionError(f"dither must have length m={omega.shape[1]}")
        if np.any(dither < 0) or np.any(dither >= 2 * np.pi):
            raise DataError("dither entries must lie in [0, 2π)")
        omega.setflags(write=False)
        dither.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "dither", dither)
        if self.renormalize:
            first_coefficient(self.nonlinearity)

    @property
    def d(self) -> int:
        return self.omega.shape[0]

    @property
    def m(self) -> int:
        return self.omega.shape[1]

    @property
    def is_rff(self) -> bool:
        return self.nonlinearity.kind is Kind.EXP

    @property
    def scale(self) -> complex:
        """Overall factor applied to f(.): 1/sqrt(m), over F_1 if renormalized."""
        s = 1.0 / math.sqrt(self.m)
        if self.renormalize:
            return s / first_coefficient(self.nonlinearity)
        return complex(s)

    def phases(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.d:
            raise DimensionError(f"expected points of dimension {self.d}, got {X.shape[-1]}")
        return X @ self.omega + self.dither

    def __call__(self, X) -> np.ndarray:
        return apply_map(self, X)

    def jacobian(self, x) -> np.ndarray:
        """(d, m) derivative of an RFF map at a single point."""
        if not self.is_rff:
            raise ValueError("only complex-exponential maps are differentiable")
        return 1j * self.omega * apply_map(self, x)

    def with_nonlinearity(self, f: PeriodicFunction | str, renormalize=None) -> FeatureMap:
        """Same Omega and xi, different periodic function."""
        if isinstance(f, str):
            f = PeriodicFunction.from_name(f)
        if renormalize is None:
            renormalize = self.renormalize
        return replace(self, nonlinearity=f, renormalize=renormalize)

    def shares_draws_with(self, other: FeatureMap) -> bool:
        return (self.omega.shape == other.omega.shape
                and np.array_equal(self.omega, other.omega)
                and np.array_equal(self.dither, other.dither))

    @property
    def map_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.omega).tobytes())
        h.update(np.ascontiguousarray(self.dither).tobytes())
        h.update(self.nonlinearity.digest())
        h.update(b"renorm" if self.renormalize else b"raw")
        return h.hexdigest()[:16]

    def to_json(self) -> dict:
        if self.sampler is None or self.omega_seed is None:
            raise ValueError("only seeded feature maps can be serialized")
        return {
            "d": self.d,
            "m": self.m,
            "law": self.sampler.law,
            "sigma2": self.sampler.sigma2,
            "omega_seed": self.omega_seed,
            "dither_seed": self.dither_seed,
            "nonlinearity": self.nonlinearity.to_json(),
            "renormalize": self.renormalize,
        }

    @classmethod
    def from_json(cls, obj: dict) -> FeatureMap:
        sampler = FrequencySampler(obj["law"], float(obj["sigma2"]), int(obj["d"]))
        return make_feature_map(
            sampler, int(obj["m"]),
            nonlinearity=PeriodicFunction.from_json(obj.get("nonlinearity", "exp")),
            omega_seed=obj["omega_seed"],
            dither_seed=obj.get("dither_seed"),
            renormalize=bool(obj.get("renormalize", False)),
        )


def make_feature_map(sampler: FrequencySampler, m: int, nonlinearity="exp",
                     omega_seed: int = 0, dither_seed: int | None = 1,
                     renormalize: bool = False) -> FeatureMap:
    if isinstance(nonlinearity, str):
        nonlinearity = PeriodicFunction.from_name(nonlinearity)
    omega = sample_frequencies(sampler, m, omega_seed)
    dither = np.zeros(m) if dither_seed is None else sample_dither(m, dither_seed)
    return FeatureMap(omega, dither, nonlinearity, renormalize,
                      sampler=sampler, omega_seed=omega_seed, dither_seed=dither_seed)


def apply_map(fmap: FeatureMap, X) -> np.ndarray:
    """Features of a point (shape (d,) -> (m,)) or of rows (n, d) -> (n, m)."""
    return fmap.scale * fmap.nonlinearity(fmap.phases(X))


def contribution_bits(fmap: FeatureMap, float_bits: int = 64) -> int:
    """Bits needed to transmit one contribution Psi(x_i)."""
    if float_bits not in (32, 64):
        raise ValueError("float_bits must be 32 or 64")
    if fmap.nonlinearity.kind is Kind.QUANTIZED:
        return 2 * fmap.m
    return 2 * float_bits * fmap.m
