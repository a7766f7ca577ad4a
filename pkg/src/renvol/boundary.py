"""Boundary jets: all local boundary data entering the expansion
formulas.

Conventions (fixed package-wide): inward unit normal ``nu = +d/dr``,
second fundamental form ``L = -h'/2`` (unit ball: ``L = +h``, ``H = 3``),
ambient curvature components taken with unit normal insertions, e.g.
``ric00 = Ric(nu, nu)``.  Radial derivatives of curvature are exact:
``ric00_r`` comes from the trace of ``h'''`` and ``scalar_r`` from the
analytic derivative of the slice scalar-curvature formula, so the
contracted second Bianchi identity relating the two is a genuine
cross-check, not an input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import charts as _ch
from .curvature import _ambient_metric, _gauss_blocks, assemble_riemann, _finalize
from .geometry import CollarMetric

UMBILIC_TOL = 1e-12


@dataclass
class BoundaryJet:
    """Pointwise boundary data of a collar metric (fields carry a leading
    point axis)."""

    chart: object
    h: np.ndarray
    hinv: np.ndarray
    L: np.ndarray
    Lring: np.ndarray
    H: np.ndarray
    norm_L2: np.ndarray
    norm_Lring2: np.ndarray
    tr_L3: np.ndarray
    tr_Lring3: np.ndarray
    scalar: np.ndarray
    ric00: np.ndarray
    ric0i: np.ndarray
    ricij: np.ndarray
    r0i0j: np.ndarray
    r0ijk: np.ndarray
    w0i0j: np.ndarray
    ric00_r: np.ndarray
    scalar_r: np.ndarray
    lapl_H: np.ndarray
    divdiv_L: np.ndarray
    divdiv_Lring: np.ndarray

    # -- derived contractions -------------------------------------------
    def raise1(self, T2: np.ndarray) -> np.ndarray:
        return np.einsum("xia,xab->xib", self.hinv, T2)

    @property
    def LW(self) -> np.ndarray:
        """``Lring^{ij} W_{0i0j}``."""
        return np.einsum("xia,xjb,xab,xij->x", self.hinv, self.hinv,
                         self.Lring, self.w0i0j)

    @property
    def L_ricij(self) -> np.ndarray:
        return np.einsum("xia,xjb,xab,xij->x", self.hinv, self.hinv,
                         self.L, self.ricij)

    @property
    def Lring_ricij(self) -> np.ndarray:
        return np.einsum("xia,xjb,xab,xij->x", self.hinv, self.hinv,
                         self.Lring, self.ricij)

    @property
    def L_r0i0j(self) -> np.ndarray:
        return np.einsum("xia,xjb,xab,xij->x", self.hinv, self.hinv,
                         self.L, self.r0i0j)

    @property
    def umbilic(self) -> bool:
        return bool(np.max(np.sqrt(np.abs(self.norm_Lring2))) < UMBILIC_TOL)

    def bianchi_residual(self) -> np.ndarray:
        """Residual of the contracted second Bianchi identity
        ``ric00_r = scalar_r/2 + divdiv_L - lapl_H - L^{ij} ric_{ij}
        + H ric00``; vanishes for exact geometric jets."""
        rhs = (0.5 * self.scalar_r + self.divdiv_L - self.lapl_H
               - self.L_ricij + self.H * self.ric00)
        return self.ric00_r - rhs

    def integrate(self, scalar_field: np.ndarray) -> float:
        return self.chart.integrate(scalar_field, self.h)

    def boundary_measure(self) -> float:
        return self.chart.integrate(np.ones(self.chart.npts), self.h)


def _matrix_traces(hinv, A):
    """Traces of powers of ``hinv @ A`` for a symmetric (0,2) field."""
    up = np.einsum("xia,xab->xib", hinv, A)
    t1 = np.einsum("xii->x", up)
    t2 = np.einsum("xij,xji->x", up, up)
    t3 = np.einsum("xij,xjk,xki->x", up, up, up)
    return up, t1, t2, t3


def boundary_jet(metric: CollarMetric) -> BoundaryJet:
    """Extract the full boundary jet of a collar metric at ``r = 0``."""
    chart = metric.chart
    h, h1, h2, h3 = metric.slice_metric(0.0)
    hinv = np.linalg.inv(h)

    L = -0.5 * h1
    Lup, H, trL2, trL3 = _matrix_traces(hinv, L)
    Lring = L - (H / 3.0)[:, None, None] * h
    _, _, trLring2, trLring3 = _matrix_traces(hinv, Lring)

    # curvature blocks at the boundary (Gauss/Codazzi/radial route)
    hb, r0i0j, r0ijk, rijkl = _gauss_blocks(metric, 0.0)
    riem = assemble_riemann(h, r0i0j, r0ijk, rijkl)
    g, ginv = _ambient_metric(h)
    sl = _finalize(0.0, g, ginv, riem)

    ricci = sl.ricci
    scalar = sl.scalar
    w0i0j = sl.weyl[:, 0, 1:, 0, 1:]

    # exact radial derivative of Ric(d_r, d_r) from the trace of h'''
    tr_h3 = np.einsum("xij,xij->x", hinv, h3)
    l_r0i0j = np.einsum("xij,xij->x",
                        np.einsum("xia,xab,xjb->xij", hinv, r0i0j, hinv), L)
    ric00_r = 0.5 * (8.0 * l_r0i0j - tr_h3)

    # exact radial derivative of the ambient scalar curvature:
    # R(r) = R^{h_r} - (tr M)^2/4 + 3 tr(M^2)/4 - tr(h^{-1} h'')
    # with M = h^{-1} h'; differentiate each term analytically.
    M = np.einsum("xia,xab->xib", hinv, h1)
    hih2 = np.einsum("xia,xab->xib", hinv, h2)
    hih3 = np.einsum("xia,xab->xib", hinv, h3)
    Mp = -np.einsum("xij,xjk->xik", M, M) + hih2
    trM = np.einsum("xii->x", M)
    trMp = np.einsum("xii->x", Mp)
    term_quad = (-0.5 * trM * trMp
                 + 1.5 * np.einsum("xij,xji->x", M, Mp)
                 + np.einsum("xij,xji->x", M, hih2)
                 - np.einsum("xii->x", hih3))
    # first variation of the intrinsic scalar curvature along h' :
    # dR^h[v] = -<v, Ric_h> + divdiv v - lap_h tr v
    gamma = _ch.christoffel3(chart, h, hinv)
    if chart.kind == "homogeneous":
        ric_h = _intrinsic_ricci_homogeneous(chart, h)
        divdiv_h1 = np.zeros(chart.npts)
        lapl_trh1 = np.zeros(chart.npts)
    else:
        riem3 = _ch.riemann3(chart, h, hinv)
        ric_h = np.einsum("xac,xabcd->xbd", hinv, riem3)
        divdiv_h1 = _ch.divdiv2(chart, h1, hinv, gamma)
        lapl_trh1 = _ch.laplacian_scalar(
            chart, np.einsum("xij,xij->x", hinv, h1), hinv, gamma)
    pair_h1_ric = np.einsum("xia,xjb,xab,xij->x", hinv, hinv, h1, ric_h)
    dR_intrinsic = -pair_h1_ric + divdiv_h1 - lapl_trh1
    scalar_r = dR_intrinsic + term_quad

    # intrinsic derivatives of the fundamental forms
    if chart.kind == "homogeneous":
        lapl_H = np.zeros(chart.npts)
        divdiv_L = np.zeros(chart.npts)
        divdiv_Lring = np.zeros(chart.npts)
    else:
        lapl_H = _ch.laplacian_scalar(chart, H, hinv, gamma)
        divdiv_L = _ch.divdiv2(chart, L, hinv, gamma)
        divdiv_Lring = _ch.divdiv2(chart, Lring, hinv, gamma)

    return BoundaryJet(
        chart=chart, h=h, hinv=hinv, L=L, Lring=Lring, H=H,
        norm_L2=trL2, norm_Lring2=trLring2, tr_L3=trL3,
        tr_Lring3=trLring3, scalar=scalar,
        ric00=ricci[:, 0, 0], ric0i=ricci[:, 0, 1:],
        ricij=ricci[:, 1:, 1:], r0i0j=r0i0j, r0ijk=r0ijk,
        w0i0j=w0i0j, ric00_r=ric00_r, scalar_r=scalar_r,
        lapl_H=lapl_H, divdiv_L=divdiv_L, divdiv_Lring=divdiv_Lring,
    )


def _intrinsic_ricci_homogeneous(chart, h):
    """Ricci of the fiber metric on a one-point chart (constant
    curvature: ``Ric = 2 K h`` in dimension 3)."""
    K = chart.fiber_sectional(0.0)
    if K != 0.0:
        K = K / h[:, 0, 0]
    else:
        K = np.zeros(h.shape[0])
    return 2.0 * K[:, None, None] * h
