"""Closed-form heat traces of sectors and cones at time 1.

All functions work at unit time; by parabolic scaling the time-t trace over
|z| <= rho equals the time-1 value at R = rho / sqrt(t).  The exponentially
small remainders O(exp(-c R^2)) are dropped; results carry a validity flag
(R >= 3) instead of an error estimate for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .fem import DIRICHLET, NEUMANN, normalize_bc

SQRT_PI = math.sqrt(math.pi)
VALID_R = 3.0
SERIES_CROSSOVER = 30.0


def corner_constant(alpha: float) -> float:
    """(pi^2 - alpha^2) / (24 pi alpha): heat-trace constant of one corner."""
    return (math.pi ** 2 - alpha ** 2) / (24.0 * math.pi * alpha)


def _check_alpha(alpha):
    if not (0.0 < alpha < 2 * math.pi):
        raise ValueError("sector angle must lie in (0, 2pi)")


@dataclass(frozen=True)
class SectorTraceValue:
    R: float
    alpha: float
    bc: str
    value: float
    area_term: float
    boundary_term: float  # signed: negative for Dirichlet
    corner_term: float
    valid: bool


# ---------------------------------------------------------------------------
# boundary layer

def _bl_series_terms(R: float, kmax: int = 30) -> list:
    # (R / 2pi) sum_k (-1)^k binom(1/2, k) Gamma(k + 1/2) / (2 R^{2k})
    out = []
    for k in range(kmax):
        c = (-1) ** k * special.binom(0.5, k) * special.gamma(k + 0.5) / 2.0
        out.append(R / (2 * math.pi) * c / R ** (2 * k))
    return out


def boundary_layer_series(R: float, terms: int | None = None) -> float:
    """Asymptotic series R/(4 sqrt pi) - 1/(16 sqrt pi R) - 3/(128 sqrt pi R^3) - ...

    With ``terms=None`` the divergent series is cut at its smallest term.
    """
    t = _bl_series_terms(R)
    if terms is not None:
        return float(sum(t[:terms]))
    total = 0.0
    prev = math.inf
    for x in t:
        if abs(x) > prev:
            break
        total += x
        prev = abs(x)
        if abs(x) < 1e-18 * abs(total):
            break
    return total


def boundary_layer_quad(R: float) -> float:
    """(R^2 / 2pi) int_0^1 exp(-R^2 y^2) sqrt(1 - y^2) dy by adaptive quadrature.

    Written as (R / 2pi) int_0^R exp(-u^2) sqrt(1 - u^2/R^2) du, split at
    the Gaussian scale u = 3 (y = 3/R).
    """
    if R <= 0:
        return 0.0
    f = lambda u: math.exp(-u * u) * math.sqrt(max(0.0, 1.0 - (u / R) ** 2))
    pts = [0.0, min(3.0, R), min(8.0, R), R]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            val, _ = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
            total += val
    return R / (2 * math.pi) * total


def boundary_layer_integral(R: float) -> float:
    """Boundary-layer term of the Dirichlet sector trace.

    Quadrature below R = 30, the asymptotic series above it (the two agree
    to better than 1e-12 there).
    """
    if R < 0:
        raise ValueError("R must be nonnegative")
    if R > SERIES_CROSSOVER:
        return boundary_layer_series(R)
    return boundary_layer_quad(R)


# ---------------------------------------------------------------------------
# sector and cone traces

def D_dirichlet(R: float, alpha: float) -> SectorTraceValue:
    """int_{|w| <= R} H^S(1, w, w) dw for the Dirichlet sector of angle alpha.

    alpha R^2 / (8 pi) - BL(R) + (pi^2 - alpha^2) / (24 pi alpha).
    """
    _check_alpha(alpha)
    area = alpha * R * R / (8 * math.pi)
    bl = boundary_layer_integral(R)
    c = corner_constant(alpha)
    return SectorTraceValue(R, alpha, DIRICHLET, area - bl + c, area, -bl, c, R >= VALID_R)


def cone_trace(R: float, cone_angle: float) -> float:
    """Trace over |w| <= R on the flat cone of total angle ``cone_angle`` at time 1.

    cone_angle R^2 / (8 pi) + (4 pi^2 - cone_angle^2) / (24 pi cone_angle).
    """
    if not (0.0 < cone_angle < 4 * math.pi):
        raise ValueError("cone angle must lie in (0, 4pi)")
    return cone_angle * R * R / (8 * math.pi) + (4 * math.pi ** 2 - cone_angle ** 2) / (24 * math.pi * cone_angle)


def D_neumann(R: float, alpha: float) -> SectorTraceValue:
    """Neumann sector trace, fixed by D_dirichlet + D_neumann = cone_trace(R, 2 alpha).

    Gluing the Dirichlet and Neumann sectors along their edges gives the cone
    of angle 2 alpha, so the area term is alpha R^2 / (8 pi), the boundary
    layer flips sign and the corner constant is unchanged.
    """
    _check_alpha(alpha)
    area = alpha * R * R / (8 * math.pi)
    bl = boundary_layer_integral(R)
    c = corner_constant(alpha)
    return SectorTraceValue(R, alpha, NEUMANN, area + bl + c, area, bl, c, R >= VALID_R)


def sector_trace(R: float, alpha: float, bc: str) -> SectorTraceValue:
    return D_dirichlet(R, alpha) if normalize_bc(bc) == DIRICHLET else D_neumann(R, alpha)


def D_asymptotic(R: float, alpha: float, bc: str = DIRICHLET, order: int = 3) -> tuple:
    """Large-R expansion of the sector trace and a remainder estimate.

    Order k keeps the first k + 1 terms of
    alpha R^2/(8pi), -+R/(4 sqrt pi), corner constant, +-1/(16 sqrt pi R),
    +-3/(128 sqrt pi R^3), ... (upper signs Dirichlet).  The remainder
    estimate is 1.5 times the first omitted term.

    Returns
    -------
    value, remainder_estimate : float
    """
    if R < VALID_R:
        raise ValueError(f"asymptotic expansion needs R >= {VALID_R}")
    if order < 0:
        raise ValueError("order must be nonnegative")
    s = -1.0 if normalize_bc(bc) == DIRICHLET else 1.0
    bl = _bl_series_terms(R, kmax=order + 2)
    terms = [alpha * R * R / (8 * math.pi), s * bl[0], corner_constant(alpha)]
    terms += [s * x for x in bl[1:]]
    return float(sum(terms[: order + 1])), 1.5 * abs(terms[order + 1])


def divergent_part(R: float, alpha: float, bc: str = DIRICHLET) -> float:
    """Area and boundary-length terms alpha R^2/(8pi) -+ R/(4 sqrt pi)."""
    s = -1.0 if normalize_bc(bc) == DIRICHLET else 1.0
    return alpha * R * R / (8 * math.pi) + s * R / (4 * SQRT_PI)


def sector_table(alphas, radii) -> list:
    """Rows (R, alpha, D_D, D_N, cone) for the CLI table."""
    rows = []
    for a in alphas:
        for r in radii:
            dd = D_dirichlet(r, a).value
            dn = D_neumann(r, a).value
            rows.append((float(r), float(a), dd, dn, cone_trace(r, 2 * a)))
    return rows
