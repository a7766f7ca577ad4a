"""Closed-form boundary-expansion formulas for the two constant-curvature
filling problems.

Everything here is pointwise algebra on a :class:`~renvol.boundary.BoundaryJet`
(plus chart quadrature for the integrated quantities):

* solution coefficients of the defining function
  ``u = r + f0 r^2 + f1 r^3 + f2 r^4 + ...`` for the scalar-curvature
  normalization (``k=1``) and the second-symmetric-function normalization
  (``k=2``);
* renormalized volume densities ``v0..v3`` and their integrals;
* the boundary integrand ladders (determinant ratio ``D``, flux integrand
  ``I``, their convolution ``B``), the Gauss-Bonnet boundary integrand
  ``S`` and the correction term ``Bterm``;
* the leading Einstein-tensor asymptotics and the associated energy
  densities;
* assorted algebraic identities used as cross-checks (divergence
  cancellation, the quotient-divergence identity, symmetric-function
  identities, indicial roots).

Conventions as in :mod:`renvol.boundary`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Optional

import numpy as np

from . import charts as _ch
from .boundary import BoundaryJet, boundary_jet
from .curvature import curvature_slice, sigma2
from .errors import DimensionUnsupported, FitUnstable, ParameterOutOfRange
from .geometry import CollarMetric


# ---------------------------------------------------------------------------
# solution coefficients
# ---------------------------------------------------------------------------

def yamabe_expansion(jet: BoundaryJet, n: int = 3):
    """Expansion coefficients of the defining function for the
    constant-scalar-curvature filling (``R = -n(n+1)``).

    ``f0`` and ``f1`` are available in any dimension ``n >= 2``; ``f2``
    only for ``n = 3``.
    """
    if n < 2:
        raise DimensionUnsupported("boundary dimension must be >= 2")
    f0 = -jet.H / (2.0 * n)
    f1 = (-jet.ric00 - jet.norm_Lring2 + jet.scalar / (2.0 * n)) \
        / (3.0 * (n - 1.0))
    if n != 3:
        raise DimensionUnsupported("third coefficient requires n = 3")
    f2 = (-3.0 * jet.ric00_r + jet.scalar_r - jet.lapl_H
          - 6.0 * jet.L_r0i0j - 6.0 * jet.tr_L3
          + (13.0 / 3.0) * jet.H * jet.norm_Lring2
          + (13.0 / 3.0) * jet.H * jet.ric00
          - (5.0 / 9.0) * jet.H * jet.scalar
          + (2.0 / 3.0) * jet.H ** 3) / 24.0
    return f0, f1, f2


def sigma2_expansion(jet: BoundaryJet):
    """Expansion coefficients of the defining function for the
    ``sigma_2`` filling normalization (``n = 3`` only)."""
    f0 = -jet.H / 6.0
    f1 = (-2.0 * jet.norm_Lring2 - 3.0 * jet.ric00
          + 0.5 * jet.scalar) / 18.0
    f2 = (-3.0 * jet.ric00_r + jet.scalar_r - jet.lapl_H
          - 2.0 * jet.L_r0i0j - 2.0 * jet.L_ricij - 2.0 * jet.tr_L3
          + (7.0 / 3.0) * jet.H * jet.ric00
          + (1.0 / 9.0) * jet.H * jet.scalar
          + (5.0 / 9.0) * jet.H * jet.norm_Lring2
          + (2.0 / 9.0) * jet.H ** 3) / 24.0
    return f0, f1, f2


def solution_coefficients(jet: BoundaryJet, k: int):
    if k == 1:
        return yamabe_expansion(jet)
    if k == 2:
        return sigma2_expansion(jet)
    raise ParameterOutOfRange(f"k must be 1 or 2, got {k}")


# ---------------------------------------------------------------------------
# volume densities
# ---------------------------------------------------------------------------

def volume_coefficients(jet: BoundaryJet, k: int):
    """Renormalized volume densities ``(v0, v1, v2, v3)``."""
    ones = np.ones_like(jet.H)
    v0 = ones
    v1 = -jet.H / 3.0
    v2 = (-jet.scalar / 9.0 + jet.ric00 / 6.0 - jet.H ** 2 / 18.0)
    div_part = jet.divdiv_L / 3.0 - jet.lapl_H / 6.0
    if k == 1:
        v2 = v2 + jet.norm_Lring2 / 6.0
        v3 = (2.0 / 3.0) * (jet.tr_Lring3 + jet.LW) + div_part
    elif k == 2:
        v2 = v2 - jet.norm_Lring2 / 18.0
        v3 = div_part
    else:
        raise ParameterOutOfRange(f"k must be 1 or 2, got {k}")
    return v0, v1, v2, v3


def volume_coefficients_series(jet: BoundaryJet, f0, f1, f2):
    """Independent route to ``(v0..v3)``: expand
    ``(1 + f0 r + f1 r^2 + f2 r^3)^{-4} * sqrt(det h_r / det h)`` through
    third order using only series arithmetic and the raw determinant
    coefficients.  Used to cross-check :func:`volume_coefficients`."""
    d1, d2, d3 = determinant_ladder_raw(jet)
    # (1+x)^(-4) = 1 - 4x + 10x^2 - 20x^3 with x = f0 r + f1 r^2 + f2 r^3
    p1 = -4.0 * f0
    p2 = -4.0 * f1 + 10.0 * f0 ** 2
    p3 = -4.0 * f2 + 20.0 * f0 * f1 - 20.0 * f0 ** 3
    v0 = np.ones_like(f0)
    v1 = p1 + d1
    v2 = p2 + p1 * d1 + d2
    v3 = p3 + p2 * d1 + p1 * d2 + d3
    return v0, v1, v2, v3


# ---------------------------------------------------------------------------
# integrand ladders
# ---------------------------------------------------------------------------

def determinant_ladder(jet: BoundaryJet):
    """Coefficients of ``sqrt(det h_r / det h)`` written in curvature
    terms."""
    D1 = -jet.H
    D2 = 0.5 * (-jet.ric00 - jet.norm_L2 + jet.H ** 2)
    D3 = (-jet.ric00_r - 2.0 * jet.L_r0i0j - 2.0 * jet.tr_L3
          + 3.0 * jet.H * jet.ric00 + 3.0 * jet.H * jet.norm_L2
          - jet.H ** 3) / 6.0
    return D1, D2, D3


def determinant_ladder_raw(jet: BoundaryJet):
    """The same coefficients from the raw radial jets of the slice
    metric (matrix traces only, no curvature substitution)."""
    # rebuild the raw slice jets out of the stored fundamental forms:
    # h' = -2L; h'' and h''' are recovered from the curvature blocks.
    hinv = jet.hinv
    h1 = -2.0 * jet.L
    h1up = np.einsum("xia,xab->xib", hinv, h1)
    tr1 = np.einsum("xii->x", h1up)
    sq1 = np.einsum("xij,xji->x", h1up, h1up)
    cube1 = np.einsum("xij,xjk,xki->x", h1up, h1up, h1up)
    # h'' = -2 R_{0i0j} + (h' hinv h')/2
    h2 = -2.0 * jet.r0i0j + 0.5 * np.einsum("xia,xab,xbj->xij",
                                            h1, hinv, h1)
    h2up = np.einsum("xia,xab->xib", hinv, h2)
    tr2 = np.einsum("xii->x", h2up)
    inner12 = np.einsum("xij,xji->x", h1up, h2up)
    # trace of h''' in curvature terms (used in the boundary jet as well)
    tr3 = -2.0 * jet.ric00_r + 8.0 * jet.L_r0i0j
    D1 = 0.5 * tr1
    D2 = 0.25 * (tr2 - sq1 + 0.5 * tr1 ** 2)
    D3 = (tr3 - 3.0 * inner12 + 2.0 * cube1 + 1.5 * tr1 * tr2
          - 1.5 * tr1 * sq1 + 0.25 * tr1 ** 3) / 12.0
    return D1, D2, D3


def flux_ladder(jet: BoundaryJet, k: int):
    """Coefficients ``(I1, I2, I3)`` of the boundary flux integrand."""
    I1 = 0.5 * jet.H
    if k == 1:
        I2 = jet.ric00 - jet.scalar / 3.0
        I3 = (9.0 * jet.ric00_r - 3.0 * jet.scalar_r - 5.0 * jet.lapl_H
              - 30.0 * jet.L_r0i0j - 30.0 * jet.tr_L3
              + 17.0 * jet.H * jet.norm_Lring2
              + 13.0 * jet.H * jet.ric00
              - (2.0 / 3.0) * jet.H * jet.scalar
              + (26.0 / 9.0) * jet.H ** 3) / 24.0
    elif k == 2:
        I2 = jet.norm_Lring2 / 3.0 + jet.ric00 - jet.scalar / 3.0
        I3 = (9.0 * jet.ric00_r - 3.0 * jet.scalar_r - 5.0 * jet.lapl_H
              + 6.0 * jet.L_r0i0j - 18.0 * jet.L_ricij + 6.0 * jet.tr_L3
              - 5.0 * jet.H * jet.ric00
              + (16.0 / 3.0) * jet.H * jet.scalar
              - (37.0 / 3.0) * jet.H * jet.norm_Lring2
              - (10.0 / 9.0) * jet.H ** 3) / 24.0
    else:
        raise ParameterOutOfRange(f"k must be 1 or 2, got {k}")
    return I1, I2, I3


def flux_volume_ladder_closed(jet: BoundaryJet, k: int):
    """Closed forms of ``(B1, B2, B3)`` after simplification, as an
    independent check on the convolution assembly."""
    if k == 1:
        B1 = -0.5 * jet.H
        B2 = 0.5 * jet.ric00 - jet.scalar / 3.0 - 0.5 * jet.norm_L2
        B3 = (5.0 * jet.ric00_r - 3.0 * jet.scalar_r - 5.0 * jet.lapl_H
              - 38.0 * jet.L_r0i0j - 38.0 * jet.tr_L3
              + 23.0 * jet.H * jet.norm_Lring2
              - 5.0 * jet.H * jet.ric00
              + (22.0 / 3.0) * jet.H * jet.scalar
              + (62.0 / 9.0) * jet.H ** 3) / 24.0
    elif k == 2:
        B1 = -0.5 * jet.H
        B2 = (0.5 * jet.ric00 - jet.scalar / 3.0
              - jet.norm_Lring2 / 6.0 - jet.H ** 2 / 6.0)
        B3 = (5.0 * jet.ric00_r - 3.0 * jet.scalar_r - 5.0 * jet.lapl_H
              - 2.0 * jet.L_r0i0j - 18.0 * jet.L_ricij - 2.0 * jet.tr_L3
              - 23.0 * jet.H * jet.ric00
              + (40.0 / 3.0) * jet.H * jet.scalar
              - (43.0 / 3.0) * jet.H * jet.norm_Lring2
              + (26.0 / 9.0) * jet.H ** 3) / 24.0
    else:
        raise ParameterOutOfRange(f"k must be 1 or 2, got {k}")
    return B1, B2, B3


def gauss_bonnet_boundary_integrand(jet: BoundaryJet):
    """The smooth-boundary Gauss-Bonnet integrand ``S``."""
    return (jet.scalar * jet.H - 2.0 * jet.ric00 * jet.H
            - 2.0 * (jet.L_ricij - jet.L_r0i0j)
            + (2.0 / 3.0) * jet.H ** 3 - 2.0 * jet.H * jet.norm_L2
            + (4.0 / 3.0) * jet.tr_L3)


def boundary_correction_term(jet: BoundaryJet, k: int,
                             force_general: bool = False):
    """The boundary correction ``Bterm`` entering the renormalized
    Gauss-Bonnet identity; collapses to a common trace-part formula on
    umbilic jets (selected automatically unless ``force_general``)."""
    trace_part = (jet.scalar_r + 6.0 * jet.H * jet.ric00
                  - (10.0 / 3.0) * jet.H * jet.scalar
                  - (16.0 / 9.0) * jet.H ** 3) / 24.0
    if jet.umbilic and not force_general:
        return trace_part
    if k == 1:
        extra = (124.0 * jet.LW + 108.0 * jet.tr_Lring3
                 + 14.0 * jet.H * jet.norm_Lring2
                 + 24.0 * jet.Lring_ricij) / 24.0
    elif k == 2:
        extra = (52.0 * jet.LW + 36.0 * jet.tr_Lring3
                 + (50.0 / 3.0) * jet.H * jet.norm_Lring2
                 + 24.0 * jet.Lring_ricij) / 24.0
    else:
        raise ParameterOutOfRange(f"k must be 1 or 2, got {k}")
    return trace_part + extra


def ladder_divergence_remainder(jet: BoundaryJet):
    """Pure-divergence discrepancy between ``S - 2 B3`` and ``Bterm``
    (identical for both problems; integrates to zero on a closed
    boundary)."""
    return (-5.0 * jet.divdiv_Lring + (25.0 / 3.0) * jet.lapl_H) / 12.0


@dataclass
class IntegrandLadder:
    """All boundary-integrand coefficients of one problem on one jet."""

    k: int
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    I3: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    B3: np.ndarray
    S: np.ndarray
    Bterm: np.ndarray
    div_remainder: np.ndarray

    def identity_residual(self) -> np.ndarray:
        """Pointwise residual of ``S - 2 B3 = Bterm + div_remainder``."""
        return self.S - 2.0 * self.B3 - self.Bterm - self.div_remainder


def integrand_ladder(jet: BoundaryJet, k: int) -> IntegrandLadder:
    D1, D2, D3 = determinant_ladder(jet)
    I1, I2, I3 = flux_ladder(jet, k)
    B0 = np.ones_like(jet.H)
    B1 = I1 + D1
    B2 = I2 + I1 * D1 + D2
    B3 = I3 + I2 * D1 + I1 * D2 + D3
    return IntegrandLadder(
        k=k, D1=D1, D2=D2, D3=D3, I1=I1, I2=I2, I3=I3,
        B0=B0, B1=B1, B2=B2, B3=B3,
        S=gauss_bonnet_boundary_integrand(jet),
        Bterm=boundary_correction_term(jet, k, force_general=True),
        div_remainder=ladder_divergence_remainder(jet),
    )


# ---------------------------------------------------------------------------
# integrated quantities
# ---------------------------------------------------------------------------

@dataclass
class EnergyData:
    k: int
    c0: float
    c1: float
    c2: float
    log_energy: float              # coefficient of log(1/eps)
    log_energy_density_route: float

    @property
    def c(self):
        return (self.c0, self.c1, self.c2)


def energy_functional(metric: CollarMetric, k: int,
                      jet: Optional[BoundaryJet] = None) -> EnergyData:
    jet = boundary_jet(metric) if jet is None else jet
    v0, v1, v2, v3 = volume_coefficients(jet, k)
    c0 = jet.integrate(v0) / 3.0
    c1 = jet.integrate(v1) / 2.0
    c2 = jet.integrate(v2)
    e = jet.integrate(v3)
    if k == 1:
        e_density = (2.0 / 3.0) * jet.integrate(jet.tr_Lring3 + jet.LW)
    else:
        e_density = 0.0
    return EnergyData(k=k, c0=c0, c1=c1, c2=c2, log_energy=e,
                      log_energy_density_route=e_density)


@dataclass
class EinsteinLeading:
    leading: np.ndarray        # coefficient of 1/r in the tangential block
    next_order: np.ndarray     # constant term of the tangential block
    a_density: np.ndarray
    f_density: np.ndarray
    a: float
    f: float


def einstein_leading(jet: BoundaryJet, n: int = 3) -> EinsteinLeading:
    """Leading boundary asymptotics of the trace-free Ricci (Einstein)
    tensor of the filling metric, and the associated energy densities."""
    if n < 2:
        raise DimensionUnsupported("boundary dimension must be >= 2")
    lead = -(n - 1.0) * jet.Lring
    lring_up = np.einsum("xia,xab->xib", jet.hinv, jet.Lring)
    lring_sq = np.einsum("xik,xkb->xib",
                         lring_up, jet.Lring)  # Lring_i^k Lring_kj
    nxt = (n - 1.0) * (jet.H[:, None, None] * jet.Lring / (2.0 * n)
                       - jet.w0i0j + lring_sq
                       + jet.norm_Lring2[:, None, None] * jet.h / (n - 1.0))
    if n != 3:
        raise DimensionUnsupported("energy densities require n = 3")
    a_density = 4.0 * jet.norm_Lring2
    f_density = 8.0 * (jet.tr_Lring3 + jet.LW)
    return EinsteinLeading(
        leading=lead, next_order=nxt, a_density=a_density,
        f_density=f_density, a=jet.integrate(a_density),
        f=jet.integrate(f_density),
    )


def divergence_cancellation(metric: CollarMetric, k: int):
    """Residuals of the four divergence-cancellation identities coupling
    the flux ladder to the volume coefficients.  All should vanish to
    quadrature accuracy."""
    jet = boundary_jet(metric)
    lad = integrand_ladder(jet, k)
    en = energy_functional(metric, k, jet=jet)
    ib = [jet.integrate(b) for b in (lad.B0, lad.B1, lad.B2)]
    if k == 1:
        ein = einstein_leading(jet)
        return (
            2.0 * ib[0] - 6.0 * en.c0,
            2.0 * ib[1] - 6.0 * en.c1,
            2.0 * ib[2] - (6.0 * en.c2 - 0.5 * ein.a),
            6.0 * en.log_energy - 0.5 * ein.f,
        )
    return (
        2.0 * ib[0] - 6.0 * en.c0,
        2.0 * ib[1] - 6.0 * en.c1,
        2.0 * ib[2] - 6.0 * en.c2,
        en.log_energy,
    )


# ---------------------------------------------------------------------------
# truncated solutions and equation residuals
# ---------------------------------------------------------------------------

class PolyScalarField:
    """Scalar field on the collar polynomial in the collar coordinate,
    ``u(r, x) = sum_j coeffs[j](x) r^j``, with exact jets."""

    def __init__(self, chart, coeffs):
        self.chart = chart
        self.coeffs = [np.asarray(c, dtype=float) for c in coeffs]

    def value(self, r: float) -> np.ndarray:
        return sum(c * r ** j for j, c in enumerate(self.coeffs))

    def d_dr(self, r: float, order: int = 1) -> np.ndarray:
        out = np.zeros_like(self.coeffs[0])
        for j, c in enumerate(self.coeffs):
            if j >= order:
                fac = 1.0
                for m in range(order):
                    fac *= j - m
                out = out + fac * c * r ** (j - order)
        return out

    def tangential_grad(self, r: float) -> np.ndarray:
        out = np.zeros(self.coeffs[0].shape + (3,))
        for j, c in enumerate(self.coeffs):
            out = out + self.chart.grad(c) * r ** j
        return out

    def tangential_grad_r(self, r: float) -> np.ndarray:
        """Gradient of the radial derivative field ``u_r(r, .)``."""
        out = np.zeros(self.coeffs[0].shape + (3,))
        for j, c in enumerate(self.coeffs):
            if j >= 1:
                out = out + j * self.chart.grad(c) * r ** (j - 1)
        return out

    def tangential_hessian(self, r: float, gamma: np.ndarray) -> np.ndarray:
        out = np.zeros(self.coeffs[0].shape + (3, 3))
        for j, c in enumerate(self.coeffs):
            out = out + _ch.covd_scalar2(self.chart, c, gamma) * r ** j
        return out


def truncated_solution(metric: CollarMetric, k: int) -> PolyScalarField:
    """``u = r + f0 r^2 + f1 r^3 + f2 r^4`` from the closed-form
    coefficients."""
    jet = boundary_jet(metric)
    f0, f1, f2 = solution_coefficients(jet, k)
    zeros = np.zeros_like(f0)
    ones = np.ones_like(f0)
    return PolyScalarField(metric.chart, [zeros, ones, f0, f1, f2])


def _slice_operator_data(metric: CollarMetric, r: float):
    h, h1, _, _ = metric.slice_metric(r)
    hinv = np.linalg.inv(h)
    gamma = _ch.christoffel3(metric.chart, h, hinv)
    m = 0.5 * np.einsum("xab,xab->x", hinv, h1)
    return h, h1, hinv, gamma, m


def _hessian_blocks(metric, u: PolyScalarField, r, h, h1, hinv, gamma):
    """Ambient covariant Hessian blocks of ``u`` on the slice at ``r``."""
    u_r = u.d_dr(r, 1)
    u_rr = u.d_dr(r, 2)
    du_t = u.tangential_grad(r)
    mixed_up = 0.5 * np.einsum("xka,xai->xki", hinv, h1)
    u_0i = u.tangential_grad_r(r) \
        - np.einsum("xki,xk->xi", mixed_up, du_t)
    u_ij = u.tangential_hessian(r, gamma) + 0.5 * h1 * u_r[:, None, None]
    return u_r, u_rr, du_t, u_0i, u_ij


def equation_residual_field(metric: CollarMetric, k: int,
                            u: PolyScalarField, r: float) -> np.ndarray:
    """Pointwise residual of the interior equation at collar radius
    ``r`` for a candidate defining function ``u``."""
    h, h1, hinv, gamma, m = _slice_operator_data(metric, r)
    sl = curvature_slice(metric, r)
    uval = u.value(r)
    u_r, u_rr, du_t, u_0i, u_ij = _hessian_blocks(
        metric, u, r, h, h1, hinv, gamma)
    grad_t2 = np.einsum("xia,xi,xa->x", hinv, du_t, du_t)
    du2 = u_r ** 2 + grad_t2
    lap = u_rr + m * u_r + np.einsum(
        "xij,xij->x", hinv, u.tangential_hessian(r, gamma))
    if k == 1:
        return uval ** 2 * sl.scalar + 6.0 * uval * lap - 12.0 * du2 + 12.0
    if k != 2:
        raise ParameterOutOfRange(f"k must be 1 or 2, got {k}")
    hess2 = (u_rr ** 2 + 2.0 * np.einsum("xia,xi,xa->x", hinv, u_0i, u_0i)
             + np.einsum("xia,xjb,xij,xab->x", hinv, hinv, u_ij, u_ij))
    ric00 = sl.ricci[:, 0, 0]
    ric0i = sl.ricci[:, 0, 1:]
    ricij = sl.ricci[:, 1:, 1:]
    ric_uab = (ric00 * u_rr
               + 2.0 * np.einsum("xia,xi,xa->x", hinv, ric0i, u_0i)
               + np.einsum("xia,xjb,xij,xab->x", hinv, hinv, ricij, u_ij))
    s2bar = sigma2(sl.schouten_endo())
    return (3.0 * (1.0 - du2 ** 2) + 3.0 * uval * du2 * lap
            + uval ** 2 * hess2 - uval ** 2 * lap ** 2
            + 0.5 * uval ** 2 * sl.scalar * du2
            + uval ** 3 * ric_uab - 0.5 * uval ** 3 * sl.scalar * lap
            - 2.0 * uval ** 4 * s2bar)


@dataclass
class DecayFit:
    exponent: float
    radii: np.ndarray
    residual_norms: np.ndarray


def pde_residual(metric: CollarMetric, k: int,
                 u: Optional[PolyScalarField] = None,
                 radii: Optional[np.ndarray] = None) -> DecayFit:
    """Sup-norm residual of the interior equation for the truncated
    closed-form solution on a ladder of radii, with the decay exponent
    from a log-log fit.  An identically-machine-zero residual reports an
    infinite exponent."""
    if u is None:
        u = truncated_solution(metric, k)
    if radii is None:
        hi = min(0.25, 0.8 * metric.collar_depth)
        radii = np.geomspace(hi / 32.0, hi, 12)
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 4 or radii.max() / radii.min() < 10.0:
        raise FitUnstable(
            "residual ladder needs >= 4 radii spanning a decade"
        )
    norms = np.array([
        float(np.max(np.abs(equation_residual_field(metric, k, u, float(r)))))
        for r in radii
    ])
    if np.all(norms < 1e-12):
        return DecayFit(exponent=float("inf"), radii=radii,
                        residual_norms=norms)
    slope = np.polyfit(np.log(radii), np.log(norms), 1)[0]
    return DecayFit(exponent=float(slope), radii=radii,
                    residual_norms=norms)


# ---------------------------------------------------------------------------
# quotient-divergence identity
# ---------------------------------------------------------------------------

def _flux_vector(metric: CollarMetric, u: PolyScalarField, r: float):
    """Normal and tangential components of the flux 1-form whose
    divergence converts between the two symmetric-function densities."""
    h, h1, hinv, gamma, m = _slice_operator_data(metric, r)
    sl = curvature_slice(metric, r)
    uval = u.value(r)
    u_r, u_rr, du_t, u_0i, u_ij = _hessian_blocks(
        metric, u, r, h, h1, hinv, gamma)
    grad_t2 = np.einsum("xia,xi,xa->x", hinv, du_t, du_t)
    du2 = u_r ** 2 + grad_t2
    lap = u_rr + m * u_r + np.einsum(
        "xij,xij->x", hinv, u.tangential_hessian(r, gamma))
    ric00 = sl.ricci[:, 0, 0]
    ric0i = sl.ricci[:, 0, 1:]
    ricij = sl.ricci[:, 1:, 1:]
    du_up = np.einsum("xia,xa->xi", hinv, du_t)
    v0 = (uval ** -3 * du2 * u_r - uval ** -2 * lap * u_r
          + uval ** -2 * (u_rr * u_r + np.einsum("xi,xi->x", u_0i, du_up))
          + uval ** -1 * (ric00 * u_r + np.einsum("xi,xi->x", ric0i, du_up))
          - 0.5 * uval ** -1 * sl.scalar * u_r)
    vi = (uval[:, None] ** -3 * du2[:, None] * du_t
          - uval[:, None] ** -2 * lap[:, None] * du_t
          + uval[:, None] ** -2 * (u_0i * u_r[:, None]
                                   + np.einsum("xij,xj->xi", u_ij, du_up))
          + uval[:, None] ** -1 * (ric0i * u_r[:, None]
                                   + np.einsum("xij,xj->xi", ricij, du_up))
          - 0.5 * uval[:, None] ** -1 * sl.scalar[:, None] * du_t)
    return v0, vi, h, hinv, gamma, m


def _tangential_div(chart, vi, hinv, gamma):
    dv = np.stack([chart.partial(vi[:, j], ax)
                   for j in range(3) for ax in range(3)], axis=-1)
    dv = dv.reshape(vi.shape[0], 3, 3)      # [x, j, ax] = d_ax v_j
    corr = np.einsum("xkij,xk->xij", gamma, vi)
    return np.einsum("xij,xji->x", hinv, dv - corr)


def sigma2_bar_field(metric: CollarMetric, r: float) -> np.ndarray:
    sl = curvature_slice(metric, r)
    return sigma2(sl.schouten_endo())


def sigma2_conformal_field(metric: CollarMetric, u: PolyScalarField,
                           r: float) -> np.ndarray:
    """``sigma_2`` of the Schouten endomorphism of ``u^{-2} gbar`` on the
    slice at ``r``, from the exact pointwise transformation law."""
    h, h1, hinv, gamma, m = _slice_operator_data(metric, r)
    sl = curvature_slice(metric, r)
    uval = u.value(r)
    u_r, u_rr, du_t, u_0i, u_ij = _hessian_blocks(
        metric, u, r, h, h1, hinv, gamma)
    du2 = u_r ** 2 + np.einsum("xia,xi,xa->x", hinv, du_t, du_t)
    P = sl.schouten
    hess = np.zeros_like(P)
    hess[:, 0, 0] = u_rr
    hess[:, 0, 1:] = u_0i
    hess[:, 1:, 0] = u_0i
    hess[:, 1:, 1:] = u_ij
    P_g = P + hess / uval[:, None, None] \
        - 0.5 * (du2 / uval ** 2)[:, None, None] * sl.gbar
    endo = uval[:, None, None] ** 2 * np.einsum(
        "xab,xbc->xac", sl.gbar_inv, P_g)
    return sigma2(endo)


def pdiv_residual(metric: CollarMetric, u: PolyScalarField, r: float,
                  delta: float = 1e-4) -> np.ndarray:
    """Residual of the divergence identity converting the background
    ``sigma_2`` density into the conformally transformed one.  The
    radial derivative inside the divergence is taken by Richardson
    finite differences; everything else is exact per slice."""
    def v0_at(rr: float):
        return _flux_vector(metric, u, rr)[0]

    v0, vi, h, hinv, gamma, m = _flux_vector(metric, u, r)
    d1 = (v0_at(r + delta) - v0_at(r - delta)) / (2.0 * delta)
    d2 = (v0_at(r + 2.0 * delta) - v0_at(r - 2.0 * delta)) / (4.0 * delta)
    dv0 = (4.0 * d1 - d2) / 3.0
    div = dv0 + m * v0 + _tangential_div(metric.chart, vi, hinv, gamma)
    lhs = 4.0 * sigma2_bar_field(metric, r)
    uval = u.value(r)
    rhs = 4.0 * uval ** -4 * sigma2_conformal_field(metric, u, r) + 2.0 * div
    return lhs - rhs


def pdiv_residual_algebraic(metric: CollarMetric, u: PolyScalarField,
                            r: float) -> np.ndarray:
    """Expanded (divergence-free) form of the same identity; exact per
    slice, used for tight tolerances."""
    h, h1, hinv, gamma, m = _slice_operator_data(metric, r)
    sl = curvature_slice(metric, r)
    uval = u.value(r)
    u_r, u_rr, du_t, u_0i, u_ij = _hessian_blocks(
        metric, u, r, h, h1, hinv, gamma)
    du2 = u_r ** 2 + np.einsum("xia,xi,xa->x", hinv, du_t, du_t)
    lap = u_rr + m * u_r + np.einsum(
        "xij,xij->x", hinv, u.tangential_hessian(r, gamma))
    hess2 = (u_rr ** 2 + 2.0 * np.einsum("xia,xi,xa->x", hinv, u_0i, u_0i)
             + np.einsum("xia,xjb,xij,xab->x", hinv, hinv, u_ij, u_ij))
    Jbar = sl.scalar / 6.0
    P = sl.schouten
    P_hess = (P[:, 0, 0] * u_rr
              + 2.0 * np.einsum("xia,xi,xa->x", hinv, P[:, 0, 1:], u_0i)
              + np.einsum("xia,xjb,xij,xab->x", hinv, hinv,
                          P[:, 1:, 1:], u_ij))
    lhs = 4.0 * uval ** -4 * sigma2_conformal_field(metric, u, r)
    rhs = (4.0 * sigma2_bar_field(metric, r)
           + 6.0 * uval ** -4 * du2 ** 2 - 6.0 * uval ** -3 * lap * du2
           + 2.0 * uval ** -2 * (lap ** 2 - hess2 - 3.0 * Jbar * du2)
           - 4.0 * uval ** -1 * (P_hess - Jbar * lap))
    return lhs - rhs


# ---------------------------------------------------------------------------
# symmetric-function identities and indicial roots
# ---------------------------------------------------------------------------

def sigma2_ric_identity(sl) -> tuple:
    """Residuals of the two algebraic identities relating
    ``sigma_2(Schouten)`` to the Ricci endomorphism and to the
    trace-free Ricci norm (4-dimensional pointwise algebra)."""
    endo_p = sl.schouten_endo()
    s2p = sigma2(endo_p)
    endo_ric = np.einsum("xab,xbc->xac", sl.gbar_inv, sl.ricci)
    s2ric = sigma2(endo_ric)
    e2 = np.einsum("xia,xjb,xab,xij->x", sl.gbar_inv, sl.gbar_inv,
                   sl.einstein_tf, sl.einstein_tf)
    res_ric = 4.0 * s2p - (s2ric / 9.0 - (4.0 / 9.0) * e2)
    res_scalar = 4.0 * s2p - (sl.scalar ** 2 / 24.0 - 0.5 * e2)
    return res_ric, res_scalar


@dataclass(frozen=True)
class IndicialData:
    k: int
    n: int
    newton_constant: Fraction       # c_{k,n}
    target_constant: Fraction       # right-hand side of the normalization
    gamma_plus: Fraction
    gamma_minus: Fraction

    @property
    def u_roots(self) -> tuple:
        return (self.gamma_minus + 1, self.gamma_plus + 1)


def indicial_roots(k: int, n: int) -> IndicialData:
    """Exact indicial data of the normalization equation, done in
    rational arithmetic.  The perturbation exponents are ``n/2 +- s``
    with ``s^2 = n^2/4 + 2 k beta / c``; the discriminant is a perfect
    square for every admissible ``(k, n)``, giving roots ``n+1`` and
    ``-1`` (hence ``{0, n+2}`` at the level of the defining function)."""
    if not (1 <= k <= n + 1):
        raise ParameterOutOfRange(f"need 1 <= k <= n+1, got k={k}, n={n}")
    c = Fraction(comb(n, k - 1), 2 ** (k - 1))
    beta = Fraction(comb(n + 1, k), 2 ** k)
    disc = Fraction(n * n, 4) + 2 * k * beta / c
    root = _fraction_sqrt(disc)
    gp = Fraction(n, 2) + root
    gm = Fraction(n, 2) - root
    return IndicialData(k=k, n=n, newton_constant=c, target_constant=beta,
                        gamma_plus=gp, gamma_minus=gm)


def _fraction_sqrt(q: Fraction) -> Fraction:
    num = _isqrt_exact(q.numerator)
    den = _isqrt_exact(q.denominator)
    return Fraction(num, den)


def _isqrt_exact(m: int) -> int:
    from math import isqrt
    s = isqrt(m)
    if s * s != m:
        raise ArithmeticError(f"{m} is not a perfect square")
    return s


# ---------------------------------------------------------------------------
# bundled profile
# ---------------------------------------------------------------------------

@dataclass
class ExpansionProfile:
    """Every pointwise coefficient of one problem on one geometry."""

    k: int
    f0: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    ladder: IntegrandLadder
    a_density: np.ndarray
    f_density: np.ndarray

    @classmethod
    def from_metric(cls, metric: CollarMetric, k: int,
                    jet: Optional[BoundaryJet] = None) -> "ExpansionProfile":
        jet = boundary_jet(metric) if jet is None else jet
        f0, f1, f2 = solution_coefficients(jet, k)
        v0, v1, v2, v3 = volume_coefficients(jet, k)
        ein = einstein_leading(jet)
        return cls(k=k, f0=f0, f1=f1, f2=f2, v0=v0, v1=v1, v2=v2, v3=v3,
                   ladder=integrand_ladder(jet, k),
                   a_density=ein.a_density, f_density=ein.f_density)

    def table_columns(self):
        lad = self.ladder
        return {
            "f0": self.f0, "f1": self.f1, "f2": self.f2,
            "v0": self.v0, "v1": self.v1, "v2": self.v2, "v3": self.v3,
            "D1": lad.D1, "D2": lad.D2, "D3": lad.D3,
            "I1": lad.I1, "I2": lad.I2, "I3": lad.I3,
            "B0": lad.B0, "B1": lad.B1, "B2": lad.B2, "B3": lad.B3,
            "S": lad.S, "Bterm": lad.Bterm,
            "div_remainder": lad.div_remainder,
            "a_density": self.a_density, "f_density": self.f_density,
        }
