"""Exact spectra: rectangles by separation of variables, sectors by Bessel zeros.

Bessel function values come from ``scipy.special``; zeros are bracketed by
a sign-change scan started at x = nu (no zero of J_nu or J'_nu lies below
it for nu > 0) and polished with Newton steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from . import geometry as geo
from .fem import DIRICHLET, NEUMANN, Spectrum, normalize_bc

J_ZERO = "J"
JP_ZERO = "Jp"
_SCAN_STEP = 0.5  # well below the minimal zero spacing (> 3 for nu >= 0)


class BracketError(RuntimeError):
    pass


def _kind(kind: str) -> str:
    k = str(kind).strip().lower()
    if k in ("j", "j-zero", "jzero"):
        return J_ZERO
    if k in ("jp", "j'", "j-prime", "jprime", "j'-zero", "dj"):
        return JP_ZERO
    raise ValueError(f"kind must be 'J' or 'Jp', got {kind!r}")


def _fun(nu: float, kind: str):
    if kind == J_ZERO:
        return lambda x: special.jv(nu, x), lambda x: special.jvp(nu, x, 1)
    return lambda x: special.jvp(nu, x, 1), lambda x: special.jvp(nu, x, 2)


def mcmahon(nu: float, n: int, kind: str = J_ZERO) -> float:
    """McMahon large-n approximation, used for brackets and sanity checks."""
    mu = 4.0 * nu * nu
    if _kind(kind) == J_ZERO:
        b = (n + 0.5 * nu - 0.25) * math.pi
        return b - (mu - 1) / (8 * b) - 4 * (mu - 1) * (7 * mu - 31) / (3 * (8 * b) ** 3)
    b = (n + 0.5 * nu - 0.75) * math.pi
    return b - (mu + 3) / (8 * b) - 4 * (7 * mu * mu + 82 * mu - 9) / (3 * (8 * b) ** 3)


def _polish(f, df, a, b):
    x = optimize.brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    for _ in range(3):
        d = df(x)
        if d == 0:
            break
        step = f(x) / d
        if not (a <= x - step <= b):
            break
        x -= step
        if abs(step) <= 1e-16 * x:
            break
    return x


def _scan_zeros(nu: float, kind: str, x_max: float | None = None, count: int | None = None) -> np.ndarray:
    f, df = _fun(nu, kind)
    x0 = max(nu, 1e-6)
    if count is not None:
        x_hi = max(mcmahon(nu, count, kind), x0) + 4.0
    else:
        x_hi = x_max
    zeros = []
    a = x0
    fa = f(a)
    while True:
        xs = np.arange(a, x_hi + _SCAN_STEP, _SCAN_STEP)
        fs = f(xs)
        idx = np.flatnonzero(np.sign(fs[:-1]) * np.sign(fs[1:]) < 0)
        for i in idx:
            zeros.append(_polish(f, df, xs[i], xs[i + 1]))
        exact = np.flatnonzero(fs[1:] == 0)
        for i in exact:
            zeros.append(float(xs[i + 1]))
        if count is None or len(zeros) >= count:
            break
        a, x_hi = xs[-1], xs[-1] + 2 * math.pi * max(1, count - len(zeros))
    z = np.unique(np.array(zeros, dtype=float))
    if x_max is not None:
        z = z[z <= x_max]
    if count is not None:
        z = z[:count]
    return z


def bessel_zero(nu: float, n: int, kind: str = J_ZERO) -> float:
    """n-th positive zero of J_nu (kind 'J') or J'_nu (kind 'Jp').

    For J'_0 the trivial zero at x = 0 is not counted, so
    ``bessel_zero(0, 1, 'Jp') == j_{1,1}``.
    """
    if nu < 0:
        raise ValueError("order must be nonnegative")
    if n < 1:
        raise ValueError("zero index starts at 1")
    kind = _kind(kind)
    z = _scan_zeros(float(nu), kind, count=int(n))
    if len(z) < n:
        raise BracketError(f"could not bracket zero {n} of {kind}_{nu}")
    return float(z[n - 1])


@dataclass(frozen=True)
class BesselZeroTable:
    """Increasing zeros of J_nu or J'_nu up to ``x_max``."""

    nu: float
    kind: str
    x_max: float
    zeros: np.ndarray

    @classmethod
    def build(cls, nu: float, kind: str, x_max: float) -> "BesselZeroTable":
        kind = _kind(kind)
        return cls(float(nu), kind, float(x_max), _cached_zeros(float(nu), kind, float(x_max)))

    def check_sign_changes(self, delta: float = 1e-10) -> bool:
        f, _ = _fun(self.nu, self.kind)
        z = self.zeros
        return bool(np.all(np.sign(f(z * (1 - delta))) * np.sign(f(z * (1 + delta))) < 0))


@lru_cache(maxsize=4096)
def _cached_zeros(nu, kind, x_max):
    z = _scan_zeros(nu, kind, x_max=x_max)
    z.setflags(write=False)
    return z


def interlaces(lower: np.ndarray, upper: np.ndarray) -> bool:
    """Check j_{nu,n} < j_{nu+1,n} < j_{nu,n+1} on the common range."""
    n = min(len(lower) - 1, len(upper))
    if n <= 0:
        return True
    return bool(np.all(lower[:n] < upper[:n]) and np.all(upper[:n] < lower[1:n + 1]))


# ---------------------------------------------------------------------------
# spectra

def rectangle_spectrum(a: float, b: float, bc: str, lambda_max: float) -> Spectrum:
    """Exact eigenvalues pi^2 (m^2/a^2 + n^2/b^2) up to ``lambda_max``."""
    if a <= 0 or b <= 0:
        raise ValueError("side lengths must be positive")
    bc = normalize_bc(bc)
    start = 1 if bc == DIRICHLET else 0
    mmax = int(math.floor(a * math.sqrt(lambda_max) / math.pi)) + 1
    nmax = int(math.floor(b * math.sqrt(lambda_max) / math.pi)) + 1
    m = np.arange(start, mmax + 1)
    n = np.arange(start, nmax + 1)
    lam = (math.pi ** 2) * ((m[:, None] / a) ** 2 + (n[None, :] / b) ** 2)
    vals = np.sort(lam[lam <= lambda_max])
    return Spectrum(bc, vals, "oracle", float(lambda_max), meta={"domain": f"rectangle {a}x{b}"})


def sector_spectrum(alpha: float, radius: float, bc: str, lambda_max: float) -> Spectrum:
    """Exact eigenvalues of the sector {0 < theta < alpha, r < radius}.

    Dirichlet: (j_{k pi/alpha, n} / R)^2 with k, n >= 1.  Neumann:
    (j'_{k pi/alpha, n} / R)^2 with k >= 0, n >= 1, plus the constant mode 0.
    Orders stop once nu exceeds R sqrt(lambda_max), since j_{nu,1} > nu.
    """
    if not (0 < alpha < 2 * math.pi) or radius <= 0:
        raise ValueError("need 0 < alpha < 2 pi and radius > 0")
    bc = normalize_bc(bc)
    x_max = radius * math.sqrt(lambda_max)
    kind = J_ZERO if bc == DIRICHLET else JP_ZERO
    vals = [0.0] if bc == NEUMANN else []
    k = 1 if bc == DIRICHLET else 0
    while True:
        nu = k * math.pi / alpha
        if nu > x_max:
            break
        z = _cached_zeros(nu, kind, x_max)
        vals.extend((z / radius) ** 2)
        k += 1
    vals = np.sort(np.array(vals))
    vals = vals[vals <= lambda_max]
    return Spectrum(bc, vals, "oracle", float(lambda_max),
                    meta={"domain": f"sector alpha={alpha!r} R={radius!r}"})


def weyl_count(d, lam: float, bc: str = DIRICHLET) -> tuple:
    """Leading and two-term Weyl estimates of the eigenvalue counting function.

    Returns ``(|Omega| lam / 4pi, |Omega| lam / 4pi -+ |dOmega| sqrt(lam) / 4pi)``,
    minus for Dirichlet and plus for Neumann.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    a = geo.area(d)
    p = geo.perimeter(d)
    lead = a * lam / (4 * math.pi)
    sign = -1.0 if normalize_bc(bc) == DIRICHLET else 1.0
    return lead, lead + sign * p * math.sqrt(lam) / (4 * math.pi)


# ---------------------------------------------------------------------------
# exact traces of intervals and rectangles

def interval_trace(length: float, t, bc: str = DIRICHLET):
    """sum_{m} exp(-pi^2 m^2 t / L^2), m >= 1 (Dirichlet) or m >= 0 (Neumann).

    Uses the direct series for large s = t / L^2 and the Poisson-resummed
    theta series for small s; both converge to machine precision.
    """
    bc = normalize_bc(bc)
    t = np.asarray(t, dtype=float)
    s = t / length ** 2
    out = np.empty_like(s)
    big = s >= 0.5
    m = np.arange(1, 12)
    if np.any(big):
        sb = s[big][..., None]
        out[big] = np.exp(-(math.pi ** 2) * m ** 2 * sb).sum(axis=-1)
    if np.any(~big):
        ss = s[~big][..., None]
        # theta(s) = sum_{m in Z} e^{-pi^2 m^2 s} = (pi s)^{-1/2} sum_{k in Z} e^{-k^2 / s}
        theta = (1.0 + 2.0 * np.exp(-(m ** 2) / ss).sum(axis=-1)) / np.sqrt(math.pi * s[~big])
        out[~big] = 0.5 * (theta - 1.0)
    if bc == NEUMANN:
        out = out + 1.0
    return out if out.ndim else float(out)


def rectangle_trace(a: float, b: float, t, bc: str = DIRICHLET):
    """Exact heat trace of the a x b rectangle (product of interval traces)."""
    return interval_trace(a, t, bc) * interval_trace(b, t, bc)
