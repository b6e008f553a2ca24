"""2π-periodic nonlinearities used to build random periodic features.

A :class:`PeriodicFunction` is one of the closed-form maps

* ``exp``        t -> exp(i t)                       (random Fourier features)
* ``quantized``  t -> sign(cos t) + i sign(sin t)    (one-bit universal quantizer)
* ``modulo``     t -> mod(t) + i mod(t - π/2)        (normalized complex sawtooth)

or a ``tabulated`` map given by uniform samples over one period.  The module
also computes the quantities the LPD analysis needs: Fourier coefficients,
sup-norms, mean Lipschitz constants and the derived constants C_f and c_f.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateFunctionError

TWO_PI = 2.0 * np.pi

MAX_HARMONIC = 64
QUADRATURE_POINTS = 2**14
MIN_TABLE_LENGTH = 2**12

# mean-Lipschitz estimator settings
LIPSCHITZ_GRID_POINTS = 2**14
LIPSCHITZ_DELTAS = np.geomspace(1e-4, np.pi, 64)
_DENSE_OFFSETS = 32
_STRIDED_OFFSETS = 33


class Kind(str, enum.Enum):
    EXP = "exp"
    QUANTIZED = "quantized"
    MODULO = "modulo"
    TABULATED = "tabulated"


def _sign(v):
    # sign(0) := +1
    return np.where(v >= 0, 1.0, -1.0)


def normalized_mod(t, period=TWO_PI):
    """Sawtooth ``2 (t/T - floor(t/T)) - 1`` with values in [-1, 1)."""
    r = np.asarray(t, dtype=float) / period
    return 2.0 * (r - np.floor(r)) - 1.0


@dataclass(frozen=True, eq=False)
class PeriodicFunction:
    """Immutable description of a centered 2π-periodic map R -> C.

    For ``Kind.TABULATED`` the ``table`` holds samples at ``offset + 2πj/N``;
    the mean of the table is removed at construction so that F_0 = 0.
    Tabulated values are evaluated by periodic linear interpolation.
    """

    kind: Kind
    table: np.ndarray | None = None
    offset: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.TABULATED:
            if self.table is None:
                raise DataError("tabulated function requires a table")
            tab = np.asarray(self.table, dtype=complex).ravel()
            if tab.size < MIN_TABLE_LENGTH:
                raise DataError(
                    f"table must hold at least {MIN_TABLE_LENGTH} samples, got {tab.size}"
                )
            tab = tab - tab.mean()
            tab.setflags(write=False)
            object.__setattr__(self, "table", tab)
            object.__setattr__(self, "offset", float(self.offset) % TWO_PI)
        elif self.table is not None:
            raise DataError(f"{self.kind.value} function does not take a table")

    @classmethod
    def exp(cls) -> PeriodicFunction:
        return cls(Kind.EXP)

    @classmethod
    def quantized(cls) -> PeriodicFunction:
        return cls(Kind.QUANTIZED)

    @classmethod
    def modulo(cls) -> PeriodicFunction:
        return cls(Kind.MODULO)

    @classmethod
    def tabulated(cls, values, offset=0.0) -> PeriodicFunction:
        return cls(Kind.TABULATED, table=values, offset=offset)

    @classmethod
    def from_name(cls, name: str) -> PeriodicFunction:
        aliases = {"rff": "exp", "q": "quantized", "mod": "modulo"}
        return cls(Kind(aliases.get(name, name)))

    @property
    def closed_form(self) -> bool:
        return self.kind is not Kind.TABULATED

    def __call__(self, t):
        return evaluate(self, t)

    def digest(self) -> bytes:
        """Bytes identifying this function (used in feature-map hashes)."""
        if self.kind is Kind.TABULATED:
            return b"tab:" + np.float64(self.offset).tobytes() + self.table.tobytes()
        return self.kind.value.encode()

    def to_json(self):
        if self.kind is Kind.TABULATED:
            return {
                "kind": "tabulated",
                "offset": self.offset,
                "table": [[v.real, v.imag] for v in self.table],
            }
        return self.kind.value

    @classmethod
    def from_json(cls, obj) -> PeriodicFunction:
        if isinstance(obj, str):
            return cls.from_name(obj)
        tab = np.asarray(obj["table"], dtype=float)
        return cls.tabulated(tab[:, 0] + 1j * tab[:, 1], offset=obj.get("offset", 0.0))


def evaluate(f: PeriodicFunction, t):
    """Evaluate ``f`` componentwise on an array of phases (radians)."""
    t = np.asarray(t, dtype=float)
    if f.kind is Kind.EXP:
        return np.exp(1j * t)
    if f.kind is Kind.QUANTIZED:
        return _sign(np.cos(t)) + 1j * _sign(np.sin(t))
    if f.kind is Kind.MODULO:
        return normalized_mod(t) + 1j * normalized_mod(t - np.pi / 2)
    tab = f.table
    n = tab.size
    pos = np.mod((t - f.offset) * (n / TWO_PI), n)
    i0 = np.floor(pos).astype(np.int64) % n
    frac = pos - np.floor(pos)
    return (1.0 - frac) * tab[i0] + frac * tab[(i0 + 1) % n]


def load_tabulated_csv(path) -> PeriodicFunction:
    """Read a two-column CSV ``t, value`` where value is written ``re,im``.

    Rows are therefore ``t,re,im``.  The t column must be uniformly spaced and
    cover exactly one period starting anywhere in [0, 2π).
    """
    rows = []
    with open(Path(path), newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row[:3]])
            except ValueError:
                if rows:
                    raise DataError(f"non-numeric row in {path}: {row}")
                continue  # header
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise DataError(f"{path}: expected columns t,re[,im]")
    t = arr[:, 0]
    values = arr[:, 1] + (1j * arr[:, 2] if arr.shape[1] == 3 else 0.0)
    n = t.size
    h = TWO_PI / n
    if not np.allclose(np.diff(t), h, rtol=0, atol=1e-6 * h + 1e-9):
        raise DataError(f"{path}: t must be uniformly spaced over one period")
    return PeriodicFunction.tabulated(values, offset=t[0])


def _check_harmonic(k: int, kmax: int):
    if abs(k) > kmax:
        raise ValueError(f"harmonic |k|={abs(k)} exceeds the configured maximum {kmax}")


def fourier_coefficient(f: PeriodicFunction, k: int, kmax: int = MAX_HARMONIC) -> complex:
    """F_k = (1/2π) ∫_0^{2π} f(t) exp(-ikt) dt.

    Closed forms are used for the three named kinds; tabulated maps use the
    trapezoidal rule on at least ``QUADRATURE_POINTS`` uniform samples.
    """
    k = int(k)
    _check_harmonic(k, kmax)
    if f.kind is Kind.EXP:
        return complex(k == 1)
    if f.kind is Kind.QUANTIZED:
        # nonzero only for k = 1 mod 4, where Q_k = 4/(πk)
        return complex(4.0 / (np.pi * k)) if k % 4 == 1 else 0j
    if f.kind is Kind.MODULO:
        if k == 0:
            return 0j
        return 1j / (np.pi * k) * (1.0 + 1j * (-1j) ** k)
    return _quadrature_coefficient(f, k, max(f.table.size, QUADRATURE_POINTS))


def _quadrature_coefficient(f: PeriodicFunction, k: int, n: int, shift: float = 0.0) -> complex:
    if f.kind is Kind.TABULATED and n == f.table.size and shift == 0.0:
        t = f.offset + TWO_PI * np.arange(n) / n
        vals = f.table
    else:
        t = shift + TWO_PI * np.arange(n) / n
        vals = evaluate(f, t)
    return complex(np.mean(vals * np.exp(-1j * k * t)))


def quadrature_coefficient(f: PeriodicFunction, k: int, n: int = QUADRATURE_POINTS,
                           midpoint: bool = True) -> complex:
    """Trapezoidal estimate of F_k from ``n`` samples of ``f``.

    With ``midpoint`` the samples avoid the jump points of the closed-form
    kinds, which keeps the aliasing error second order in 1/n.
    """
    shift = np.pi / n if midpoint else 0.0
    return _quadrature_coefficient(f, int(k), int(n), shift)


def sup_norm(f: PeriodicFunction) -> float:
    if f.kind is Kind.EXP:
        return 1.0
    if f.kind is Kind.QUANTIZED:
        return math.sqrt(2.0)
    if f.kind is Kind.MODULO:
        return math.sqrt(5.0) / 2.0
    return float(np.max(np.abs(f.table)))


def known_mean_lipschitz(f: PeriodicFunction) -> float:
    """Closed-form mean Lipschitz constants of the named kinds."""
    if f.kind is Kind.EXP:
        return 1.0
    if f.kind is Kind.QUANTIZED:
        return 8.0 / np.pi
    if f.kind is Kind.MODULO:
        return (4.0 + math.sqrt(2.0)) / np.pi
    raise ValueError("no closed-form mean Lipschitz constant for tabulated maps")


def mean_lipschitz_profile(f: PeriodicFunction, deltas=LIPSCHITZ_DELTAS,
                           n: int = LIPSCHITZ_GRID_POINTS):
    """Return ``(deltas, ratios)`` with ratios ≈ I_δ / (2πδ).

    I_δ = ∫ sup_{|r|≤δ} |f(t+r) - f(t)| dt is approximated on an ``n``-point
    tabulation.  Each δ is snapped to a whole number ``w ≥ 1`` of grid steps so
    that the window edges fall on samples; the window sup scans every offset up
    to 32 steps and a strided subset beyond that (endpoints always included).
    """
    h = TWO_PI / n
    t = h * np.arange(n)
    vals = evaluate(f, t)
    widths = np.unique(np.clip(np.rint(np.asarray(deltas) / h).astype(int), 1, n // 2))

    cache = {}

    def dev(o):
        # |f(t + o h) - f(t)| for all t
        if o not in cache:
            cache[o] = np.abs(np.roll(vals, -o) - vals)
        return cache[o]

    out_d, out_r = [], []
    for w in widths:
        offsets = set(range(1, min(w, _DENSE_OFFSETS) + 1))
        if w > _DENSE_OFFSETS:
            offsets.update(np.rint(np.linspace(_DENSE_OFFSETS, w, _STRIDED_OFFSETS)).astype(int).tolist())
        best = np.zeros(n)
        for o in sorted(offsets):
            d = dev(o)
            np.maximum(best, d, out=best)
            np.maximum(best, np.roll(d, o), out=best)  # |f(t - o h) - f(t)|
        out_d.append(w * h)
        out_r.append(best.mean() / (w * h))
    return np.asarray(out_d), np.asarray(out_r)


def mean_lipschitz(f: PeriodicFunction) -> float:
    """Numerical mean Lipschitz constant: sup over δ of I_δ / (2πδ)."""
    if "lipschitz" not in f._cache:
        _, ratios = mean_lipschitz_profile(f)
        f._cache["lipschitz"] = float(ratios.max())
    return f._cache["lipschitz"]


def first_coefficient(f: PeriodicFunction) -> complex:
    F1 = fourier_coefficient(f, 1)
    if abs(F1) < 1e-12:
        raise DegenerateFunctionError("F_1 = 0: the map cannot be renormalized")
    return F1


def constant_Cf(f: PeriodicFunction) -> float:
    """C_f = 1 + ||f||_∞ / |F_1|."""
    return 1.0 + sup_norm(f) / abs(first_coefficient(f))


def constant_cf(f: PeriodicFunction, C_Lambda: float, lipschitz: float | None = None) -> float:
    """c_f = 4 C_Λ (4 + L_f / |F_1|).

    ``lipschitz`` overrides the numerical estimate of the mean Lipschitz
    constant (e.g. with :func:`known_mean_lipschitz`).
    """
    if C_Lambda <= 0:
        raise ValueError("C_Lambda must be positive")
    F1 = first_coefficient(f)
    L = mean_lipschitz(f) if lipschitz is None else float(lipschitz)
    return 4.0 * C_Lambda * (4.0 + L / abs(F1))
