"""Conformal change of the ambient metric at the boundary.

Two distinct services live here:

* :func:`jet_conformal_transform` — exact pointwise transformation of a
  :class:`~renvol.boundary.BoundaryJet` under ``g -> e^{2 omega} g``,
  using closed-form conformal laws (no re-derivation of a geodesic
  collar is needed: every stored field is defined invariantly with unit
  normal insertions, so the output is the boundary jet the rescaled
  metric would produce in its own normal collar).
* :func:`rescale_radial_geometry` — for *radial* geometries and radial
  conformal factors, an exact reparametrization of the collar
  coordinate that realizes the rescaled metric again in collar normal
  form.  Feeding the result through the ordinary jet extractor gives an
  independent check of the pointwise laws.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.chebyshev import Chebyshev
from scipy.optimize import brentq

from . import charts as _ch
from .boundary import BoundaryJet
from .errors import UnsupportedGeometry
from .geometry import CollarMetric, GeometrySpec, RadialProfile
from .jets1d import Jet, poly_jet


@dataclass
class ConformalFactorJet:
    """Normal jet of a conformal factor ``omega`` at the boundary.

    ``value``/``normal1``/``normal2``/``normal3`` are ``omega`` and its
    first three derivatives along the inward unit normal, as fields on
    the boundary chart.
    """

    chart: object
    value: np.ndarray
    normal1: np.ndarray
    normal2: np.ndarray
    normal3: np.ndarray

    @classmethod
    def from_constant(cls, chart, c: float) -> "ConformalFactorJet":
        z = np.zeros(chart.npts)
        return cls(chart, np.full(chart.npts, float(c)), z, z.copy(), z.copy())

    @classmethod
    def from_radial(cls, chart, jet: Jet) -> "ConformalFactorJet":
        ones = np.ones(chart.npts)
        return cls(chart, jet.f * ones, jet.f1 * ones,
                   jet.f2 * ones, jet.f3 * ones)

    @classmethod
    def from_boundary_field(cls, chart, field: np.ndarray,
                            normal1: Optional[np.ndarray] = None,
                            normal2: Optional[np.ndarray] = None,
                            normal3: Optional[np.ndarray] = None,
                            ) -> "ConformalFactorJet":
        z = np.zeros(chart.npts)
        pick = lambda a: z.copy() if a is None else np.asarray(a, dtype=float)
        return cls(chart, np.asarray(field, dtype=float),
                   pick(normal1), pick(normal2), pick(normal3))


def _sym(M):
    return 0.5 * (M + np.einsum("xij->xji", M))


def jet_conformal_transform(bj: BoundaryJet, w: ConformalFactorJet,
                            metric: CollarMetric) -> BoundaryJet:
    """Boundary jet of ``e^{2 omega} g`` from the jet of ``g``.

    ``metric`` supplies the collar jets of the background slice metric
    (needed for the radial derivative of the ambient Laplacian acting on
    ``omega``).
    """
    chart = bj.chart
    h, h1, h2, _h3 = metric.slice_metric(0.0)
    hinv = bj.hinv
    gamma = _ch.christoffel3(chart, h, hinv)

    om = w.value
    n1, n2, n3 = w.normal1, w.normal2, w.normal3
    e_m1 = np.exp(-om)
    e_p1 = np.exp(om)
    e_m2 = np.exp(-2.0 * om)
    e_p2 = np.exp(2.0 * om)

    # tangential derivatives of the jet fields
    dom = chart.grad(om)                       # (P, 3)
    dn1 = chart.grad(n1)
    hess0 = _ch.covd_scalar2(chart, om, gamma)  # intrinsic Hessian of omega|_bdy

    # ambient Hessian blocks in collar coordinates of the background
    Lup = np.einsum("xia,xab->xib", hinv, bj.L)
    hess_00 = n2
    hess_0i = dn1 + np.einsum("xki,xk->xi", Lup, dom)
    hess_ij = hess0 - bj.L * n1[:, None, None]

    lap = n2 - bj.H * n1 + (
        np.zeros(chart.npts) if chart.kind == "homogeneous"
        else _ch.laplacian_scalar(chart, om, hinv, gamma))
    grad_t2 = np.einsum("xia,xi,xa->x", hinv, dom, dom)
    grad2 = n1 * n1 + grad_t2

    # Ricci of the rescaled metric, collar components first
    drop = lap + 2.0 * grad2
    ric00_c = bj.ric00 - 2.0 * (hess_00 - n1 * n1) - drop
    ric0i_c = bj.ric0i - 2.0 * (hess_0i - n1[:, None] * dom)
    ricij_c = (bj.ricij - 2.0 * (hess_ij
                                 - np.einsum("xi,xj->xij", dom, dom))
               - drop[:, None, None] * h)
    scal_hat = e_m2 * (bj.scalar - 6.0 * lap - 6.0 * grad2)

    # unit-normal normalization (hat normal = e^{-omega} d/dr at r = 0)
    ric00_hat = e_m2 * ric00_c
    ric0i_hat = e_m1[:, None] * ric0i_c
    ricij_hat = ricij_c

    # Schouten blocks of the rescaled metric (collar components)
    p00_c = 0.5 * (bj.ric00 - bj.scalar / 6.0) - hess_00 + n1 * n1 \
        - 0.5 * grad2
    p0i_c = 0.5 * bj.ric0i - hess_0i + n1[:, None] * dom
    pij_c = (0.5 * (bj.ricij - (bj.scalar / 6.0)[:, None, None] * h)
             - hess_ij + np.einsum("xi,xj->xij", dom, dom)
             - 0.5 * grad2[:, None, None] * h)
    p00_hat = e_m2 * p00_c               # hat-Schouten with unit hat normals
    p0i_hat = e_m1[:, None] * p0i_c

    # fundamental forms
    h_hat = e_p2[:, None, None] * h
    hinv_hat = e_m2[:, None, None] * hinv
    L_hat = e_p1[:, None, None] * (bj.L - n1[:, None, None] * h)
    Lup_hat = np.einsum("xia,xab->xib", hinv_hat, L_hat)
    H_hat = np.einsum("xii->x", Lup_hat)
    Lring_hat = L_hat - (H_hat / 3.0)[:, None, None] * h_hat
    Lring_up = np.einsum("xia,xab->xib", hinv_hat, Lring_hat)
    norm_L2_hat = np.einsum("xij,xji->x", Lup_hat, Lup_hat)
    norm_Lring2_hat = np.einsum("xij,xji->x", Lring_up, Lring_up)
    tr_L3_hat = np.einsum("xij,xjk,xki->x", Lup_hat, Lup_hat, Lup_hat)
    tr_Lring3_hat = np.einsum("xij,xjk,xki->x", Lring_up, Lring_up, Lring_up)

    # curvature blocks with unit hat normal: Weyl(nu,i,nu,j) is invariant
    w0i0j_hat = bj.w0i0j
    r0i0j_hat = w0i0j_hat + p00_hat[:, None, None] * h_hat + pij_c

    # Codazzi block via the Weyl part: W(nu,i,j,k) scales by e^{omega}
    p0j_bg = 0.5 * bj.ric0i
    w0ijk = bj.r0ijk - (np.einsum("xj,xik->xijk", p0j_bg, h)
                        - np.einsum("xk,xij->xijk", p0j_bg, h))
    r0ijk_hat = e_p1[:, None, None, None] * w0ijk \
        + np.einsum("xj,xik->xijk", p0i_hat, h_hat) \
        - np.einsum("xk,xij->xijk", p0i_hat, h_hat)

    # intrinsic operators of the rescaled boundary data
    if chart.kind == "homogeneous":
        lapl_H_hat = np.zeros(chart.npts)
        divdiv_L_hat = np.zeros(chart.npts)
        divdiv_Lring_hat = np.zeros(chart.npts)
    else:
        gamma_hat = _ch.christoffel3(chart, h_hat, hinv_hat)
        lapl_H_hat = _ch.laplacian_scalar(chart, H_hat, hinv_hat, gamma_hat)
        divdiv_L_hat = _ch.divdiv2(chart, L_hat, hinv_hat, gamma_hat)
        divdiv_Lring_hat = _ch.divdiv2(chart, Lring_hat, hinv_hat, gamma_hat)

    # normal derivative of the rescaled scalar curvature:
    # d/dr of e^{-2 omega(r)} (R(r) - 6 lap_bar omega - 6 |d omega|^2),
    # then one factor e^{-omega} for the unit hat normal.
    M = np.einsum("xia,xab->xib", hinv, h1)
    m1_0 = 0.5 * (np.einsum("xab,xab->x", hinv, h2)
                  - np.einsum("xij,xji->x", M, M))
    if chart.kind == "homogeneous":
        lap_t_n1 = np.zeros(chart.npts)
        op_r = np.zeros(chart.npts)
        dgrad_t = np.zeros(chart.npts)
    else:
        lap_t_n1 = _ch.laplacian_scalar(chart, n1, hinv, gamma)
        # radial derivative of the slice Laplacian applied to omega|_bdy
        h1_up = np.einsum("xia,xjb,xab->xij", hinv, hinv, h1)
        dh1 = _ch.covd2(chart, h1, gamma)
        div_h1 = np.einsum("xam,xajm->xj", hinv, dh1)
        tr_h1 = np.einsum("xab,xab->x", hinv, h1)
        dtr_h1 = chart.grad(tr_h1)
        vec = div_h1 - 0.5 * dtr_h1
        op_r = (-np.einsum("xij,xij->x", h1_up, hess0)
                - np.einsum("xlk,xl,xk->x", hinv, vec, dom))
        dgrad_t = (-np.einsum("xij,xi,xj->x", h1_up, dom, dom)
                   + 2.0 * np.einsum("xia,xi,xa->x", hinv, dn1, dom))
    dlap = n3 + m1_0 * n1 - bj.H * n2 + lap_t_n1 + op_r
    dgrad2 = 2.0 * n1 * n2 + dgrad_t
    scal_r_coord = e_m2 * (-2.0 * n1 * (bj.scalar - 6.0 * lap - 6.0 * grad2)
                           + bj.scalar_r - 6.0 * dlap - 6.0 * dgrad2)
    scalar_r_hat = e_m1 * scal_r_coord

    # radial derivative of Ric(nu, nu) from the contracted second Bianchi
    # identity evaluated with rescaled fields
    L_ric_hat = np.einsum("xia,xjb,xab,xij->x", hinv_hat, hinv_hat,
                          L_hat, ricij_hat)
    ric00_r_hat = (0.5 * scalar_r_hat + divdiv_L_hat - lapl_H_hat
                   - L_ric_hat + H_hat * ric00_hat)

    return BoundaryJet(
        chart=chart, h=h_hat, hinv=hinv_hat, L=L_hat, Lring=Lring_hat,
        H=H_hat, norm_L2=norm_L2_hat, norm_Lring2=norm_Lring2_hat,
        tr_L3=tr_L3_hat, tr_Lring3=tr_Lring3_hat, scalar=scal_hat,
        ric00=ric00_hat, ric0i=ric0i_hat, ricij=ricij_hat,
        r0i0j=r0i0j_hat, r0ijk=r0ijk_hat, w0i0j=w0i0j_hat,
        ric00_r=ric00_r_hat, scalar_r=scalar_r_hat,
        lapl_H=lapl_H_hat, divdiv_L=divdiv_L_hat,
        divdiv_Lring=divdiv_Lring_hat,
    )


# ---------------------------------------------------------------------------
# radial conformal factors and the exact rescaled geometry
# ---------------------------------------------------------------------------

class RadialConformalFactor:
    """Smooth radial conformal factor adapted to a radial topology.

    * ``cap``: ``omega = p(s^2)`` with ``s = r_max - r`` (even in the
      distance from the center point, hence smooth across it);
    * ``two_sided``: ``omega = p(r (r_max - r))`` (mirror symmetric, so
      both boundary components transform identically).

    ``coeffs`` are the coefficients of ``p`` in increasing order.
    """

    def __init__(self, coeffs, r_max: float, topology: str):
        if topology not in ("cap", "two_sided"):
            raise ValueError(topology)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.r_max = float(r_max)
        self.topology = topology

    def jet(self, r: float) -> Jet:
        if self.topology == "cap":
            s = self.r_max - r
            inner = Jet(s * s, -2.0 * s, 2.0, 0.0)
        else:
            inner = Jet(r * (self.r_max - r), self.r_max - 2.0 * r, -2.0, 0.0)
        outer = poly_jet(self.coeffs, inner.f)
        return outer.compose(inner)

    def __call__(self, r: float) -> float:
        return float(self.jet(r).f)

    def sup_norm(self, samples: int = 257) -> float:
        rs = np.linspace(0.0, self.r_max, samples)
        return float(np.max(np.abs([self(float(r)) for r in rs])))


def rescaled_distance(factor: RadialConformalFactor, deg: int = 96
                      ) -> Callable[[float], float]:
    """Arc-length reparametrization ``rhat(r) = int_0^r e^{omega}``; for
    radial ``omega`` the radial lines remain geodesics of the rescaled
    metric, so ``rhat`` is its collar coordinate.

    The factor is smooth, so the integrand is replaced once by a
    Chebyshev interpolant and integrated term by term; downstream solvers
    evaluate ``rhat`` hundreds of thousands of times and adaptive
    quadrature per call would dominate the whole pipeline.
    """
    def integrand(r):
        return np.exp([factor(float(s)) for s in np.atleast_1d(r)])

    series = Chebyshev.interpolate(integrand, deg,
                                   domain=[0.0, factor.r_max])
    anti = series.integ(lbnd=0.0)

    def rhat(r: float) -> float:
        return float(anti(float(r)))

    return rhat


def rescale_radial_geometry(metric: CollarMetric,
                            factor: RadialConformalFactor):
    """Exact collar normal form of ``e^{2 omega} g`` for radial ``g`` and
    radial ``omega``.

    Returns ``(rescaled_metric, rhat)`` where ``rhat`` maps background
    collar distance to rescaled collar distance.  The rescaled geometry
    is a first-class :class:`CollarMetric` and can be fed to every
    downstream pipeline, giving an independent route to conformal
    transformation laws.
    """
    prof = metric.radial
    if prof is None:
        raise UnsupportedGeometry(
            "exact rescaling needs a radial geometry; use "
            "jet_conformal_transform for boundary jets on general charts"
        )
    if abs(factor.r_max - prof.r_max) > 1e-12 or \
            factor.topology != prof.topology:
        raise ValueError("conformal factor does not match the radial profile")

    rhat = rescaled_distance(factor)
    r_max_hat = rhat(prof.r_max)

    def solve_r(rh: float) -> float:
        if rh <= 0.0:
            return 0.0
        if rh >= r_max_hat:
            return prof.r_max
        return brentq(lambda r: rhat(r) - rh, 0.0, prof.r_max,
                      xtol=1e-14, rtol=8.9e-16)

    def warp_hat(rh: float):
        r = solve_r(float(rh))
        ojet = factor.jet(r)
        # forward map jet rhat(r): derivative e^{omega(r)}
        e = ojet.exp()
        fwd = Jet(rhat(r), e.f, e.f1, e.f2)
        back = fwd.inverse_function()         # jet of r(rhat) at rh
        scale = e                              # e^{omega} along the collar
        return [(scale * wj).compose(back) for wj in prof.warp_jet(r)]

    spec = GeometrySpec(
        kind=metric.spec.kind,
        params={**metric.spec.params,
                "conformal_rescale": [float(c) for c in factor.coeffs]},
        chi=metric.spec.chi,
        collar_depth=None,
    )
    prof_hat = RadialProfile(prof.fiber, warp_hat, r_max_hat,
                             prof.topology, rho=prof.rho)
    hat = CollarMetric(spec, metric.chart,
                       _jets_at_zero(prof_hat), radial=prof_hat)
    return hat, rhat


def _jets_at_zero(prof: RadialProfile):
    return prof.metric_jets(0.0)
