"""Empirical checks of the asymmetric-learning theory on finite probes.

The distortion between a periodic map Psi (renormalized by 1/F_1) and the
RFF map Phi sharing its draws is measured through projections

    |<A_Psi(P) - A_Phi(P), A_Phi(Q)>|

either on point pairs (the signal-level sLPD), on a discrete P against a
list of models (LPD), or inside the suboptimality certificate of
:func:`lemma2_check`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IncomparableMapsError
from .features import FeatureMap, apply_map
from .models import Box, sketch_model
from .periodic import Kind, first_coefficient, sup_norm
from .sketch import Sketch
from .solver import cost

PAIR_CHUNK = 4096


@dataclass(frozen=True)
class LPDReport:
    eps_hat: float
    pairs_tested: int
    m: int
    f_kind: str
    seed: int | None

    def __post_init__(self):
        if not self.eps_hat >= 0:
            raise ValueError("eps_hat must be nonnegative")

    def as_row(self) -> dict:
        return {"f_kind": self.f_kind, "m": self.m, "pairs": self.pairs_tested,
                "seed": self.seed, "eps_hat": self.eps_hat}


def _check_comparable(phi: FeatureMap, psi: FeatureMap):
    if not phi.shares_draws_with(psi):
        raise IncomparableMapsError("phi and psi must share the same frequencies and dither")
    if not phi.is_rff:
        raise IncomparableMapsError("the reference map phi must be the complex exponential")


def slpd_error(phi: FeatureMap, psi: FeatureMap, box: Box, pairs: int, seed) -> LPDReport:
    """max over random pairs (x, y) in the box of |<Psi(x) - Phi(x), Phi(y)>|."""
    _check_comparable(phi, psi)
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    rng = np.random.default_rng(seed)
    eps = 0.0
    done = 0
    while done < pairs:
        b = min(PAIR_CHUNK, pairs - done)
        x = box.uniform(rng, b)
        y = box.uniform(rng, b)
        diff = apply_map(psi, x) - apply_map(phi, x)
        proj = np.sum(diff * np.conj(apply_map(phi, y)), axis=1)
        eps = max(eps, float(np.max(np.abs(proj))))
        done += b
    return LPDReport(eps, pairs, phi.m, psi.nonlinearity.kind.value, seed)


def _discrete_sketch(fmap, points, weights):
    points = np.atleast_2d(points)
    w = np.full(len(points), 1.0 / len(points)) if weights is None else np.asarray(weights, float)
    return w @ apply_map(fmap, points)


def lpd_error_discrete(phi: FeatureMap, psi: FeatureMap, points, Q_models, weights=None) -> float:
    """max over Q of |<A_Psi(P) - A_Phi(P), A_Phi(Q)>| for P = sum_i w_i delta_{x_i}."""
    _check_comparable(phi, psi)
    e = _discrete_sketch(psi, points, weights) - _discrete_sketch(phi, points, weights)
    return max(abs(complex(np.vdot(sketch_model(phi, Q), e))) for Q in Q_models)


def kernel_bound(phi: FeatureMap, psi: FeatureMap) -> float:
    """C_Phi (C_Phi + C_Psi) with C the sup-norm of the unscaled feature function.

    Bounds every projection handled by :func:`lpd_error_discrete`.
    """
    c_phi = sup_norm(phi.nonlinearity) * abs(phi.scale) * math.sqrt(phi.m)
    c_psi = sup_norm(psi.nonlinearity) * abs(psi.scale) * math.sqrt(psi.m)
    return c_phi * (c_phi + c_psi)


@dataclass(frozen=True)
class Lemma2Result:
    lhs: float
    rhs: float
    holds: bool
    eps_hat: float


def lemma2_check(phi: FeatureMap, psi: FeatureMap, z_sym: Sketch, z_asym: Sketch,
                 theta_grid) -> Lemma2Result:
    """Suboptimality of the asymmetric grid minimizer, measured on the symmetric cost.

    lhs = C(theta') - C(theta) where theta, theta' minimize the symmetric and
    asymmetric costs over the grid; rhs = 2 sqrt(eps_hat) with eps_hat the
    largest projection of z_asym - z_sym onto a grid model sketch.
    """
    _check_comparable(phi, psi)
    theta_grid = list(theta_grid)
    if not theta_grid:
        raise ValueError("theta_grid is empty")
    sym = np.array([cost(phi, z_sym, t) for t in theta_grid])
    asym = np.array([cost(phi, z_asym, t) for t in theta_grid])
    i_sym, i_asym = int(np.argmin(sym)), int(np.argmin(asym))
    e = z_asym.values - z_sym.values
    eps_hat = max(abs(complex(np.vdot(sketch_model(phi, t), e))) for t in theta_grid)
    lhs = float(sym[i_asym] - sym[i_sym])
    rhs = 2.0 * math.sqrt(eps_hat)
    return Lemma2Result(lhs, rhs, lhs <= rhs + 1e-12, eps_hat)


def smoothness_constant_gaussian(sigma2: float) -> float:
    """max_{||a||=1} E|omega^T a| for omega ~ N(0, sigma2 I): sigma sqrt(2/π)."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    return math.sqrt(sigma2) * math.sqrt(2.0 / math.pi)


def smoothness_constant_mc(omega: np.ndarray, a) -> tuple[float, float]:
    """Monte Carlo E|omega^T a| over the columns of ``omega`` and its standard error."""
    a = np.asarray(a, float)
    v = np.abs(a @ omega / np.linalg.norm(a))
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass(frozen=True)
class DitherShiftResult:
    """Per-draw squared and plain cost differences (draws x thetas)."""

    sq_diff: np.ndarray
    diff: np.ndarray

    def _deviation(self, D):
        dev = D - D.mean(axis=1, keepdims=True)
        mean = dev.mean(axis=0)
        se = dev.std(axis=0, ddof=1) / math.sqrt(D.shape[0])
        return mean, se

    @property
    def shift(self) -> float:
        """Estimated common shift E||z_Psi - z_Phi||^2."""
        return float(self.sq_diff.mean())

    def zscores(self, squared=True) -> np.ndarray:
        """Deviation of each theta's mean difference from the across-theta mean, in SE units."""
        mean, se = self._deviation(self.sq_diff if squared else self.diff)
        return np.abs(mean) / np.where(se > 0, se, np.inf)

    def constant_within(self, n_sigma=3.0) -> bool:
        return bool(np.all(self.zscores(True) <= n_sigma))


def dither_cost_shift(omega: np.ndarray, psi_function, X, thetas, draws: int, seed) -> DitherShiftResult:
    """Monte Carlo over dithers of cost^2(theta; z_Psi-bar) - cost^2(theta; z_Phi).

    ``omega`` is held fixed; each draw samples a fresh uniform dither, builds
    the RFF and renormalized periodic sketches of ``X`` with it, and evaluates
    both costs on every model in ``thetas`` with the RFF map of that draw.
    """
    rng = np.random.default_rng(seed)
    X = np.atleast_2d(np.asarray(X, float))
    m = omega.shape[1]
    scale = 1.0 / math.sqrt(m)
    base = X @ omega
    rff_mean = np.exp(1j * base).mean(axis=0)
    F1 = first_coefficient(psi_function)
    thetas = list(thetas)
    # model sketches without the dither factor
    th_raw = []
    for t in thetas:
        if hasattr(t, "variances"):
            A = np.exp(1j * t.means @ omega - 0.5 * t.variances @ omega**2)
        else:
            A = np.exp(1j * t.centroids @ omega)
        th_raw.append(t.weights @ A)
    th_raw = np.array(th_raw)
    sq = np.empty((draws, len(thetas)))
    pl = np.empty((draws, len(thetas)))
    for i in range(draws):
        xi = rng.uniform(0.0, 2 * math.pi, m)
        ph = np.exp(1j * xi)
        z_phi = scale * ph * rff_mean
        if psi_function.kind is Kind.EXP:
            z_psi = z_phi
        else:
            z_psi = scale / F1 * psi_function(base + xi).mean(axis=0)
        A = scale * th_raw * ph
        c_sym = np.linalg.norm(z_phi - A, axis=1)
        c_asym = np.linalg.norm(z_psi - A, axis=1)
        sq[i] = c_asym**2 - c_sym**2
        pl[i] = c_asym - c_sym
    return DitherShiftResult(sq, pl)
