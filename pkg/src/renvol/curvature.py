"""Four-dimensional curvature of collar metrics ``dr^2 + h_r``.

Index conventions: ambient indices run 0..3 with 0 the radial direction
(inward unit normal ``+d/dr``); tangential indices are raised/lowered
with ``h_r``.  Curvature sign: ``R^a_{bcd} = d_c Gamma^a_{db} -
d_d Gamma^a_{cb} + Gamma Gamma - Gamma Gamma`` with ``Ric_{bd} =
R^a_{bad}``, so the unit round 3-sphere has scalar curvature +6 and
hyperbolic 4-space has scalar curvature -12.

Two assembly routes are provided:

* ``direct`` — ambient Christoffel symbols of the collar metric and
  their exact radial/spectral derivatives (torus charts);
* ``gauss`` — Gauss/Codazzi/radial block formulas built from
  ``(h, h', h'')`` and the intrinsic fiber curvature (closed form on
  homogeneous charts, available on torus charts as a cross-check).

The two routes agreeing on torus collars is one of the standing
consistency checks of the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate as _sint

from . import charts as _ch
from .errors import UnsupportedGeometry
from .geometry import CollarMetric


# ---------------------------------------------------------------------------
# small tensor helpers
# ---------------------------------------------------------------------------

def kulkarni_nomizu(P: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``(P ^ g)_{abcd} = P_ac g_bd - P_ad g_bc + g_ac P_bd - g_ad P_bc``."""
    return (
        np.einsum("xac,xbd->xabcd", P, g)
        - np.einsum("xad,xbc->xabcd", P, g)
        + np.einsum("xac,xbd->xabcd", g, P)
        - np.einsum("xad,xbc->xabcd", g, P)
    )


def sigma2(endo: np.ndarray) -> np.ndarray:
    """Second elementary symmetric function of an endomorphism field
    ``[p, a, b]``: ``((tr A)^2 - tr(A^2)) / 2``."""
    tr = np.einsum("xaa->x", endo)
    tr2 = np.einsum("xab,xba->x", endo, endo)
    return 0.5 * (tr * tr - tr2)


def tensor_norm2(T: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Squared norm of a (0,s) tensor field, all indices raised with
    ``ginv``."""
    s = T.ndim - 1
    letters = "abcd"[:s]
    primed = "efgh"[:s]
    gs = ",".join(f"x{letters[i]}{primed[i]}" for i in range(s))
    return np.einsum(f"x{letters},{gs},x{primed}->x", T, *([ginv] * s), T)


@dataclass
class CurvatureSlice:
    """Pointwise ambient curvature on a collar slice ``{r = const}``."""

    r: float
    gbar: np.ndarray           # (P,4,4)
    gbar_inv: np.ndarray
    riemann: np.ndarray        # (P,4,4,4,4), all indices down
    ricci: np.ndarray          # (P,4,4)
    scalar: np.ndarray         # (P,)
    schouten: np.ndarray       # (P,4,4)
    weyl: np.ndarray           # (P,4,4,4,4)
    einstein_tf: np.ndarray    # trace-free Ricci, (P,4,4)

    @property
    def J(self) -> np.ndarray:
        return self.scalar / 6.0

    def weyl_sq(self) -> np.ndarray:
        return tensor_norm2(self.weyl, self.gbar_inv)

    def schouten_endo(self) -> np.ndarray:
        """``gbar^{-1} P`` as an endomorphism field."""
        return np.einsum("xab,xbc->xac", self.gbar_inv, self.schouten)


def _finalize(r, g, ginv, riem) -> CurvatureSlice:
    ricci = np.einsum("xac,xabcd->xbd", ginv, riem)
    # Ricci symmetry is exact for a Levi-Civita connection; enforcing it
    # removes spectral-aliasing noise from the antisymmetric part.
    ricci = 0.5 * (ricci + np.swapaxes(ricci, 1, 2))
    scalar = np.einsum("xbd,xbd->x", ginv, ricci)
    J = scalar / 6.0
    schouten = 0.5 * (ricci - J[:, None, None] * g)
    weyl = riem - kulkarni_nomizu(schouten, g)
    einstein = ricci - 0.25 * scalar[:, None, None] * g
    return CurvatureSlice(r=r, gbar=g, gbar_inv=ginv, riemann=riem,
                          ricci=ricci, scalar=scalar, schouten=schouten,
                          weyl=weyl, einstein_tf=einstein)


def _ambient_metric(h):
    P = h.shape[0]
    g = np.zeros((P, 4, 4))
    g[:, 0, 0] = 1.0
    g[:, 1:, 1:] = h
    ginv = np.zeros_like(g)
    ginv[:, 0, 0] = 1.0
    ginv[:, 1:, 1:] = np.linalg.inv(h)
    return g, ginv


# ---------------------------------------------------------------------------
# direct route: ambient Christoffels on a spectral chart
# ---------------------------------------------------------------------------

def _ambient_christoffel(chart, h, h1, hinv):
    """``Gamma^alpha_{beta gamma}`` of ``dr^2 + h_r`` and its radial
    derivative is handled by the caller; returns shape (P,4,4,4)."""
    P = h.shape[0]
    G = np.zeros((P, 4, 4, 4))
    G[:, 0, 1:, 1:] = -0.5 * h1
    mixed = 0.5 * np.einsum("xkl,xlj->xkj", hinv, h1)
    G[:, 1:, 0, 1:] = mixed
    G[:, 1:, 1:, 0] = mixed
    G[:, 1:, 1:, 1:] = _ch.christoffel3(chart, h, hinv)
    return G


def _ambient_christoffel_rderiv(chart, h, h1, h2, hinv):
    """Exact ``d/dr`` of the ambient Christoffel symbols at the slice."""
    P = h.shape[0]
    dG = np.zeros((P, 4, 4, 4))
    dG[:, 0, 1:, 1:] = -0.5 * h2
    hinv1 = -np.einsum("xab,xbc,xcd->xad", hinv, h1, hinv)
    mixed = 0.5 * (np.einsum("xkl,xlj->xkj", hinv1, h1)
                   + np.einsum("xkl,xlj->xkj", hinv, h2))
    dG[:, 1:, 0, 1:] = mixed
    dG[:, 1:, 1:, 0] = mixed
    dh = chart.grad(h)    # [p,a,b,m]
    dh1 = chart.grad(h1)
    sym = lambda d: (np.einsum("xkl,xjli->xkij", *d)
                     + np.einsum("xkl,xilj->xkij", *d)
                     - np.einsum("xkl,xijl->xkij", *d))
    dG[:, 1:, 1:, 1:] = 0.5 * (sym((hinv1, dh)) + sym((hinv, dh1)))
    return dG


def _direct_slice(metric: CollarMetric, r: float) -> CurvatureSlice:
    chart = metric.chart
    h, h1, h2, _ = metric.slice_metric(r)
    hinv = np.linalg.inv(h)
    G = _ambient_christoffel(chart, h, h1, hinv)
    dG = np.zeros(G.shape + (4,))
    dG[..., 0] = _ambient_christoffel_rderiv(chart, h, h1, h2, hinv)
    for m in range(3):
        dG[..., 1 + m] = chart.partial(G, m)
    # R^a_{bcd} = d_c G^a_{db} - d_d G^a_{cb} + G^a_{ce} G^e_{db} - ...
    r_up = (
        np.einsum("xadbc->xabcd", dG)
        - np.einsum("xacbd->xabcd", dG)
        + np.einsum("xace,xedb->xabcd", G, G)
        - np.einsum("xade,xecb->xabcd", G, G)
    )
    g, ginv = _ambient_metric(h)
    riem = np.einsum("xae,xebcd->xabcd", g, r_up)
    return _finalize(r, g, ginv, riem)


# ---------------------------------------------------------------------------
# gauss route: block formulas from (h, h', h'') and fiber curvature
# ---------------------------------------------------------------------------

def _gauss_blocks(metric: CollarMetric, r: float):
    """Return ``(h, R_0i0j, R_0ijk, R_ijkl)`` (all lower indices) of the
    slice at ``r`` from the radial/Codazzi/Gauss formulas."""
    chart = metric.chart
    h, h1, h2, _ = metric.slice_metric(r)
    hinv = np.linalg.inv(h)
    L = -0.5 * h1
    # radial block: R_0i0j = -h''/2 + (h' h^{-1} h')/4
    r0i0j = -0.5 * h2 + 0.25 * np.einsum("xia,xab,xbj->xij", h1, hinv, h1)
    # Codazzi block: r0kjl[p, k, j, l] = (grad_l h'_{jk} - grad_j h'_{kl}) / 2
    gamma = _ch.christoffel3(chart, h, hinv)
    dh1 = _ch.covd2(chart, h1, gamma)  # [p, a, b, m] = grad_m h'_{ab}
    r0kjl = 0.5 * (np.einsum("xjkl->xkjl", dh1) - np.einsum("xklj->xkjl", dh1))
    # intrinsic fiber curvature
    if chart.kind == "homogeneous":
        K = chart.fiber_sectional(r)
        if K != 0.0:
            # slice metric is (rho w)^2 x unit round frame
            K = K / h[:, 0, 0]
        else:
            K = np.zeros(h.shape[0])
        riem3 = K[:, None, None, None, None] * (
            np.einsum("xik,xjl->xijkl", h, h)
            - np.einsum("xil,xjk->xijkl", h, h)
        )
    else:
        riem3 = _ch.riemann3(chart, h, hinv)
    rijkl = riem3 - (np.einsum("xik,xjl->xijkl", L, L)
                     - np.einsum("xil,xjk->xijkl", L, L))
    return h, r0i0j, r0kjl, rijkl


def assemble_riemann(h, r0i0j, r0ijk, rijkl) -> np.ndarray:
    """Pack curvature blocks into the full ambient (0,4) tensor using its
    algebraic symmetries.  ``r0ijk[p, i, j, k] = R_{0ijk}``."""
    P = h.shape[0]
    R = np.zeros((P, 4, 4, 4, 4))
    R[:, 1:, 1:, 1:, 1:] = rijkl
    R[:, 0, 1:, 0, 1:] = r0i0j
    R[:, 1:, 0, 1:, 0] = r0i0j
    R[:, 0, 1:, 1:, 0] = -r0i0j
    R[:, 1:, 0, 0, 1:] = -r0i0j
    R[:, 0, 1:, 1:, 1:] = r0ijk
    R[:, 1:, 0, 1:, 1:] = -r0ijk
    # pair symmetry: R_{jk0i} = R_{0ijk} and R_{jki0} = -R_{0ijk}
    mixed = np.einsum("xijk->xjki", r0ijk)
    R[:, 1:, 1:, 0, 1:] = mixed
    R[:, 1:, 1:, 1:, 0] = -mixed
    return R


def _gauss_slice(metric: CollarMetric, r: float) -> CurvatureSlice:
    h, r0i0j, r0kjl, rijkl = _gauss_blocks(metric, r)
    riem = assemble_riemann(h, r0i0j, r0kjl, rijkl)
    g, ginv = _ambient_metric(h)
    return _finalize(r, g, ginv, riem)


def curvature_slice(metric: CollarMetric, r: float,
                    method: str = "auto") -> CurvatureSlice:
    """Ambient curvature of the collar slice at coordinate ``r``.

    ``method`` is ``"direct"`` (ambient Christoffel assembly, spectral
    charts only), ``"gauss"`` (block formulas), or ``"auto"`` (direct on
    torus charts, gauss on homogeneous charts).
    """
    limit = (metric.radial.r_max if metric.radial is not None
             else metric.collar_depth)
    if not 0.0 <= r <= limit + 1e-12:
        raise UnsupportedGeometry(
            f"slice r={r} outside the collar (limit {limit})"
        )
    if method == "auto":
        method = "direct" if metric.chart.kind == "torus" else "gauss"
    if method == "direct":
        if metric.chart.kind != "torus":
            raise UnsupportedGeometry(
                "direct assembly needs a spectral chart"
            )
        return _direct_slice(metric, r)
    if method == "gauss":
        return _gauss_slice(metric, r)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# total Weyl energy
# ---------------------------------------------------------------------------

def weyl_energy(metric: CollarMetric, quad_tol: float = 1e-11) -> float:
    """Conformally invariant total ``int |W|^2 dv`` over the manifold.

    Defined for radial geometries (the collar form is global there);
    raises :class:`UnsupportedGeometry` for pure collars.
    """
    if metric.radial is None:
        raise UnsupportedGeometry(
            "Weyl energy needs a globally defined interior"
        )
    prof = metric.radial

    def dens(r: float) -> float:
        if prof.topology == "cap" and r >= prof.r_max - 1e-13:
            return 0.0
        sl = curvature_slice(metric, r, method="gauss")
        w2 = float(sl.weyl_sq()[0])
        return w2 * float(metric.volume_density(r))

    val, err = _sint.quad(dens, 0.0, prof.r_max, epsabs=quad_tol,
                          epsrel=quad_tol, limit=300)
    return float(val)
