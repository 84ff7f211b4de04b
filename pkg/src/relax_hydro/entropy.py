"""Internal energy / pressure laws and relative quantities.

The family covers ``h(rho) = k rho log rho`` (m = 1) and
``h(rho) = k rho**m / (m - 1)`` (m > 1), optionally perturbed by a
lower-order tail when m > 2.  Pressure follows from ``p = rho h' - h``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import binom, xlogy


class DomainError(ValueError):
    """Argument outside the domain of an entropy-law function."""


# below this |rho/rho_bar - 1| the Bregman bracket is summed as a series
_SERIES_CUTOFF = 0.05
_SERIES_TERMS = 16


@dataclass(frozen=True)
class PowerTail:
    """Tail ``c * rho**q`` with ``1 < q < m``; o(rho**m) as rho grows."""

    coef: float
    exponent: float

    def derivative(self, rho, order: int = 0):
        q, c = self.exponent, self.coef
        fac = 1.0
        for j in range(order):
            fac *= q - j
        with np.errstate(divide="ignore", invalid="ignore"):
            out = c * fac * np.power(rho, q - order)
        return np.where(np.asarray(rho) == 0, 0.0 if q - order > 0 else np.inf, out)


@dataclass(frozen=True)
class EntropyLaw:
    """Power-law internal energy with exponent ``m`` and coefficient ``k``.

    ``tail`` must expose ``derivative(rho, order)`` for orders 0..3 and is
    only accepted for ``m > 2``.  ``A`` is the constant in the bound
    ``|p''| <= A p'/rho``; it defaults to ``m - 1``, exact for the pure law.
    """

    m: float = 2.0
    k: float = 1.0
    tail: Optional[PowerTail] = None
    A: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.m) or self.m < 1:
            raise DomainError(f"exponent m must be >= 1, got {self.m}")
        if not self.k > 0:
            raise DomainError(f"coefficient k must be positive, got {self.k}")
        if self.tail is not None and self.m <= 2:
            raise DomainError("a tail perturbation is only allowed for m > 2")
        if self.A is None and self.m > 2:
            object.__setattr__(self, "A", self.m - 1.0)

    @property
    def is_pure(self) -> bool:
        return self.tail is None

    def _tail(self, rho, order):
        if self.tail is None:
            return 0.0
        return self.tail.derivative(rho, order)

    # -- h and its derivatives ------------------------------------------------
    def h(self, rho):
        rho = _check_density(rho)
        m, k = self.m, self.k
        if m == 1:
            return k * xlogy(rho, rho)
        return k / (m - 1) * rho**m + self._tail(rho, 0)

    def dh(self, rho):
        rho = _check_density(rho, strict=True)
        m, k = self.m, self.k
        if m == 1:
            return k * (np.log(rho) + 1.0)
        return k * m / (m - 1) * rho ** (m - 1) + self._tail(rho, 1)

    def d2h(self, rho):
        rho = _check_density(rho, strict=True)
        m, k = self.m, self.k
        if m == 1:
            return k / rho
        return k * m * rho ** (m - 2) + self._tail(rho, 2)

    # -- pressure -------------------------------------------------------------
    def pressure(self, rho):
        rho = _check_density(rho)
        m, k = self.m, self.k
        if m == 1:
            return k * rho
        p = k * rho**m
        if self.tail is not None:
            p = p + rho * self._tail(rho, 1) - self._tail(rho, 0)
        return p

    def dpressure(self, rho):
        """p'(rho) = rho h''(rho); finite at rho = 0 for m >= 1."""
        rho = _check_density(rho)
        m, k = self.m, self.k
        if m == 1:
            return k * np.ones_like(rho)
        dp = k * m * rho ** (m - 1)
        if self.tail is not None:
            dp = dp + rho * self._tail(rho, 2)
        return dp

    def d2pressure(self, rho):
        rho = _check_density(rho, strict=True)
        m, k = self.m, self.k
        if m == 1:
            return np.zeros_like(rho)
        d2p = k * m * (m - 1) * rho ** (m - 2)
        if self.tail is not None:
            d2p = d2p + self._tail(rho, 2) + rho * self._tail(rho, 3)
        return d2p

    def tail_condition_margin(self, rho):
        """``A p'(rho)/rho - |p''(rho)|``; nonnegative where the bound holds."""
        if self.m <= 2:
            raise DomainError("the tail condition only applies for m > 2")
        rho = _check_density(rho, strict=True)
        return self.A * self.dpressure(rho) / rho - np.abs(self.d2pressure(rho))

    # -- serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        out = {"m": self.m, "k": self.k}
        if self.tail is not None:
            out["tail_coef"] = self.tail.coef
            out["tail_exponent"] = self.tail.exponent
        if self.A is not None:
            out["A"] = self.A
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EntropyLaw":
        tail = None
        if "tail_coef" in d:
            tail = PowerTail(float(d["tail_coef"]), float(d["tail_exponent"]))
        A = d.get("A")
        return cls(m=float(d.get("m", 2.0)), k=float(d.get("k", 1.0)), tail=tail,
                   A=None if A is None else float(A))


def _check_density(rho, strict: bool = False):
    rho = np.asarray(rho, dtype=float)
    if not np.all(np.isfinite(rho)):
        raise DomainError("density must be finite")
    if strict:
        if np.any(rho <= 0):
            raise DomainError("density must be strictly positive here")
    elif np.any(rho < 0):
        raise DomainError("density must be nonnegative")
    return rho


def _bregman_bracket(x, m):
    """``x**m - 1 - m (x - 1)`` (m > 1) or ``x log x - x + 1`` (m = 1).

    Summed as a binomial / log series near ``x = 1`` so the result keeps full
    relative accuracy as the two arguments merge.
    """
    x = np.asarray(x, dtype=float)
    d = x - 1.0
    small = np.abs(d) < _SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        if m == 1:
            direct = xlogy(x, x) - d
        else:
            direct = np.expm1(m * np.log1p(d)) - m * d
            direct = np.where(x == 0, m - 1.0, direct)
    ds = np.where(small, d, 0.0)
    series = np.zeros_like(ds)
    for j in range(_SERIES_TERMS, 1, -1):
        if m == 1:
            c = (-1.0) ** j / (j * (j - 1))
        else:
            c = binom(m, j)
        series = (series + c) * ds
    series = series * ds
    return np.maximum(np.where(small, series, direct), 0.0)


def _check_pair(rho, rho_bar):
    rho = _check_density(rho)
    rho_bar = np.asarray(rho_bar, dtype=float)
    if not np.all(np.isfinite(rho_bar)) or np.any(rho_bar <= 0):
        raise DomainError("reference density rho_bar must be strictly positive")
    return rho, rho_bar


def relative_entropy(law: EntropyLaw, rho, rho_bar):
    """``h(rho) - h(rho_bar) - h'(rho_bar) (rho - rho_bar)``, always >= 0."""
    rho, rho_bar = _check_pair(rho, rho_bar)
    m, k = law.m, law.k
    x = rho / rho_bar
    if m == 1:
        out = k * rho_bar * _bregman_bracket(x, 1)
    else:
        out = k / (m - 1) * rho_bar**m * _bregman_bracket(x, m)
    if law.tail is not None:
        t = law.tail
        out = out + (t.derivative(rho, 0) - t.derivative(rho_bar, 0)
                     - t.derivative(rho_bar, 1) * (rho - rho_bar))
        out = np.maximum(out, 0.0)
    return out


def relative_pressure(law: EntropyLaw, rho, rho_bar):
    """``p(rho) - p(rho_bar) - p'(rho_bar) (rho - rho_bar)``."""
    rho, rho_bar = _check_pair(rho, rho_bar)
    m, k = law.m, law.k
    if m == 1:
        return np.zeros(np.broadcast(rho, rho_bar).shape)
    out = k * rho_bar**m * _bregman_bracket(rho / rho_bar, m)
    if law.tail is not None:
        def tail_p(r):
            return r * law.tail.derivative(r, 1) - law.tail.derivative(r, 0)

        def tail_dp(r):
            return r * law.tail.derivative(r, 2)

        out = out + tail_p(rho) - tail_p(rho_bar) - tail_dp(rho_bar) * (rho - rho_bar)
    return out


# -- certified lower bounds ---------------------------------------------------

@dataclass
class BoundCertificate:
    regime: str
    R0: float = float("nan")
    C1: float = float("nan")
    C2: float = float("nan")
    C_pressure: float = float("nan")
    samples_checked: int = 0
    worst_margin: float = float("nan")
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.worst_margin >= 0) and not self.notes


def quadratic_lower_bound(law: EntropyLaw, rho, rho_bar):
    """Right-hand side of the pointwise quadratic bound for m <= 2."""
    rho = np.asarray(rho, float)
    rho_bar = np.asarray(rho_bar, float)
    d2 = (rho - rho_bar) ** 2
    if law.m == 1:
        return 0.5 * law.k * np.minimum(1 / rho, 1 / rho_bar) * d2
    if law.m <= 2:
        return 0.5 * law.k * law.m * np.minimum(rho ** (law.m - 2), rho_bar ** (law.m - 2)) * d2
    raise DomainError("quadratic bound only stated for 1 <= m <= 2")


def _search_two_regime(h_rel, diff, rho, m, safety):
    """Best (R0, C1, C2) over candidate thresholds taken from sample quantiles."""
    absd = np.abs(diff)
    nz = absd > 0
    best = None
    for q in np.linspace(0.05, 0.95, 37):
        R0 = float(np.quantile(rho, q))
        low = nz & (rho <= R0)
        high = nz & (rho > R0)
        C1 = np.min(h_rel[low] / absd[low] ** 2) if low.any() else np.inf
        C2 = np.min(h_rel[high] / absd[high] ** m) if high.any() else np.inf
        score = min(C1, C2)
        if best is None or score > best[0]:
            best = (score, R0, C1, C2)
    _, R0, C1, C2 = best
    return R0, C1 * (1 - safety), C2 * (1 - safety)


# relative round-off below which a bound counts as met with equality
_ROUNDOFF = 1e-12


def _margin(h_rel, bound) -> float:
    """Smallest ``h_rel - bound``; gaps within round-off of the bound count as 0.

    At ``m = 2`` the quadratic bound is an identity and the raw difference
    is pure floating-point noise of either sign.
    """
    gap = h_rel - bound
    noise = np.abs(gap) <= _ROUNDOFF * np.maximum(np.abs(bound), np.finfo(float).tiny)
    return float(np.min(np.where(noise, np.maximum(gap, 0.0), gap)))


def certify_bounds(law: EntropyLaw, rho_range, rho_bar_range, n_samples: int,
                   seed: int = 0, safety: float = 0.01) -> BoundCertificate:
    """Sample ``(rho, rho_bar)`` pairs and witness the entropy lower bounds.

    For ``m <= 2`` the explicit pointwise quadratic bound is checked.  For
    ``m > 1`` a threshold ``R0`` and constants ``C1, C2`` of the two-regime
    bound are searched for as well; both regimes contribute to
    ``worst_margin``.  A failed search is reported in ``notes``.
    """
    rng = np.random.default_rng(seed)
    lo, hi = map(float, rho_range)
    blo, bhi = map(float, rho_bar_range)
    if lo < 0 or blo <= 0 or hi < lo or bhi < blo:
        raise DomainError("sample ranges must lie in (0, inf)")
    rho = rng.uniform(lo, hi, n_samples)
    rho_bar = rng.uniform(blo, bhi, n_samples)
    h_rel = relative_entropy(law, rho, rho_bar)
    diff = rho - rho_bar

    margins = []
    if law.m <= 2:
        regime = "log-quadratic" if law.m == 1 else "power-quadratic"
        margins.append(_margin(h_rel, quadratic_lower_bound(law, rho, rho_bar)))
    else:
        regime = "two-regime"
    cert = BoundCertificate(regime=regime, samples_checked=int(n_samples))

    if law.m > 1 and np.any(diff != 0):
        R0, C1, C2 = _search_two_regime(h_rel, diff, rho, law.m, safety)
        cert.R0, cert.C1, cert.C2 = R0, C1, C2
        if not (np.isfinite(C1) and np.isfinite(C2) and C1 > 0 and C2 > 0):
            cert.notes.append("no admissible (C1, C2) at this sample density")
        else:
            bound = np.where(rho <= R0, C1 * diff**2, C2 * np.abs(diff) ** law.m)
            margins.append(_margin(h_rel, bound))
        if law.m <= 2:
            cert.regime += "+two-regime"

    nz = h_rel > 0
    p_rel = relative_pressure(law, rho, rho_bar)
    cert.C_pressure = float(np.max(np.abs(p_rel[nz]) / h_rel[nz])) if nz.any() else 0.0
    cert.worst_margin = float(min(margins)) if margins else 0.0
    return cert
