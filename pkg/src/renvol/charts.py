"""Boundary charts: where jet fields live and how they are differentiated.

Two chart families cover every supported geometry:

* :class:`TorusChart` — a periodic ``N x N x N`` grid on ``[0, 2pi)^3``.
  Tangential derivatives are spectral (FFT); quadrature is the trapezoid
  rule, which is spectrally accurate for periodic smooth fields.
* :class:`HomogeneousChart` — a single-point chart for geometries whose
  boundary data are constant over the boundary (round spheres, flat
  anisotropic tori).  Tangential derivatives vanish identically and the
  intrinsic fiber curvature is supplied in closed form.

Fields carry a leading "point" axis of length ``npts`` (``N**3`` or 1)
followed by tensor axes of length 3.  Derivative indices appended by
covariant-derivative helpers always come last.
"""

from __future__ import annotations

import numpy as np

from .errors import ResolutionInsufficient

_TAIL_ENERGY_LIMIT = 1e-10


class TorusChart:
    """Periodic spectral chart on the flat 3-torus of side ``2 pi``."""

    kind = "torus"

    def __init__(self, n: int, n_components: int = 1):
        if n < 4 or n % 2:
            raise ValueError("grid size must be an even integer >= 4")
        self.n = n
        self.npts = n**3
        self.n_components = n_components
        self.base_volume = (2.0 * np.pi) ** 3
        k = np.fft.fftfreq(n, d=1.0 / n)  # integer wavenumbers
        self._ik = [None, None, None]
        shape = [1, 1, 1]
        for ax in range(3):
            s = shape.copy()
            s[ax] = n
            self._ik[ax] = (1j * k).reshape(s)
        x = 2.0 * np.pi * np.arange(n) / n
        self.axes = x
        X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
        self.coords = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)

    # -- differentiation -------------------------------------------------
    def partial(self, field: np.ndarray, axis: int) -> np.ndarray:
        """Spectral ``d/dx_axis`` applied along the grid, for any trailing
        tensor shape."""
        f = np.asarray(field)
        trailing = f.shape[1:]
        cube = f.reshape((self.n, self.n, self.n) + trailing)
        F = np.fft.fftn(cube, axes=(0, 1, 2))
        ik = self._ik[axis].reshape(
            self._ik[axis].shape + (1,) * len(trailing)
        )
        out = np.fft.ifftn(F * ik, axes=(0, 1, 2))
        if np.isrealobj(f):
            out = out.real
        return out.reshape(f.shape)

    def grad(self, field: np.ndarray) -> np.ndarray:
        """Append a coordinate-derivative index (last axis, length 3)."""
        return np.stack([self.partial(field, ax) for ax in range(3)], axis=-1)

    # -- quadrature ------------------------------------------------------
    def integrate(self, scalar: np.ndarray, h: np.ndarray) -> float:
        """Integral of a scalar field against ``dv_h`` over the whole
        boundary (all components)."""
        dens = np.sqrt(np.linalg.det(h))
        cell = self.base_volume / self.npts
        return float(self.n_components * np.sum(scalar * dens) * cell)

    # -- resolution guard ------------------------------------------------
    def tail_energy_fraction(self, field: np.ndarray) -> float:
        f = np.asarray(field, dtype=float)
        trailing = f.shape[1:]
        cube = f.reshape((self.n, self.n, self.n) + trailing)
        F = np.fft.fftn(cube, axes=(0, 1, 2))
        power = np.abs(F) ** 2
        if trailing:
            power = power.sum(axis=tuple(range(3, 3 + len(trailing))))
        k = np.abs(np.fft.fftfreq(self.n, d=1.0 / self.n))
        kmax = np.maximum.reduce(np.meshgrid(k, k, k, indexing="ij"))
        tail = power[kmax > self.n / 3.0].sum()
        total = power.sum()
        if total == 0.0:
            return 0.0
        return float(tail / total)

    def check_resolution(self, field: np.ndarray, label: str = "field") -> None:
        frac = self.tail_energy_fraction(field)
        if frac > _TAIL_ENERGY_LIMIT:
            raise ResolutionInsufficient(
                f"{label}: trailing-third spectral energy fraction "
                f"{frac:.3e} exceeds {_TAIL_ENERGY_LIMIT:.1e}"
            )

    # -- intrinsic fiber curvature ---------------------------------------
    def fiber_sectional(self, r: float) -> float:
        """Constant-curvature parameter of the undeformed fiber (flat)."""
        return 0.0


class HomogeneousChart:
    """One-point chart for boundaries with homogeneous data.

    ``fiber`` selects the model fiber:

    * ``"s3"`` — round 3-sphere of radius ``rho``; tensors are stored in
      an orthonormal frame of the unit round metric, so the boundary
      metric of a warp ``w`` is the matrix ``(w*rho)**2 * I``.
    * ``"t3"`` — flat 3-torus of side ``2 pi``; tensors are stored in the
      flat coordinate frame and anisotropic (diagonal) metrics are
      allowed.
    """

    kind = "homogeneous"

    def __init__(self, fiber: str = "s3", rho: float = 1.0, n_components: int = 1):
        if fiber not in ("s3", "t3"):
            raise ValueError(f"unknown fiber {fiber!r}")
        self.fiber = fiber
        self.rho = rho
        self.npts = 1
        self.n_components = n_components
        self.base_volume = 2.0 * np.pi**2 if fiber == "s3" else (2.0 * np.pi) ** 3

    def partial(self, field: np.ndarray, axis: int) -> np.ndarray:
        return np.zeros_like(np.asarray(field, dtype=float))

    def grad(self, field: np.ndarray) -> np.ndarray:
        f = np.asarray(field, dtype=float)
        return np.zeros(f.shape + (3,))

    def integrate(self, scalar: np.ndarray, h: np.ndarray) -> float:
        dens = np.sqrt(np.linalg.det(h))
        return float(self.n_components * np.sum(scalar * dens) * self.base_volume)

    def tail_energy_fraction(self, field: np.ndarray) -> float:
        return 0.0

    def check_resolution(self, field: np.ndarray, label: str = "field") -> None:
        return None

    def fiber_sectional(self, r: float) -> float:
        """Sectional curvature of the *unit-frame* fiber metric; the warp
        scaling is applied by callers through the slice metric."""
        if self.fiber == "s3":
            return 1.0
        return 0.0


# ---------------------------------------------------------------------------
# covariant calculus on a 3-metric field (chart-agnostic given `partial`)
# ---------------------------------------------------------------------------

def christoffel3(chart, h: np.ndarray, hinv: np.ndarray) -> np.ndarray:
    """Christoffel symbols ``Gamma^k_{ij}`` of a boundary 3-metric field,
    shape ``(npts, 3, 3, 3)`` indexed ``[p, k, i, j]``."""
    dh = chart.grad(h)  # [p, a, b, m] = d_m h_ab
    return 0.5 * (
        np.einsum("xkl,xjli->xkij", hinv, dh)
        + np.einsum("xkl,xilj->xkij", hinv, dh)
        - np.einsum("xkl,xijl->xkij", hinv, dh)
    )


def covd_scalar2(chart, f: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Covariant Hessian of a scalar: ``[p, i, j] = grad_i grad_j f``."""
    df = chart.grad(f)  # [p, m]
    ddf = chart.grad(df)  # [p, m, n] = d_n d_m f
    ddf = 0.5 * (ddf + np.transpose(ddf, (0, 2, 1)))
    return ddf - np.einsum("xkij,xk->xij", gamma, df)


def laplacian_scalar(chart, f: np.ndarray, hinv: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    hess = covd_scalar2(chart, f, gamma)
    return np.einsum("xij,xij->x", hinv, hess)


def covd2(chart, T: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Covariant derivative of a (0,2) tensor: ``[p, i, j, m] =
    grad_m T_{ij}``."""
    dT = chart.grad(T)  # [p, i, j, m] = d_m T_ij
    corr_i = np.einsum("xqmi,xqj->xijm", gamma, T)
    corr_j = np.einsum("xqmj,xiq->xijm", gamma, T)
    return dT - corr_i - corr_j


def covd3(chart, U: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Covariant derivative of a (0,3) tensor: ``[p, i, j, m, n] =
    grad_n U_{ijm}``."""
    dU = chart.grad(U)  # [p, i, j, m, n] = d_n U_ijm
    corr_i = np.einsum("xqni,xqjm->xijmn", gamma, U)
    corr_j = np.einsum("xqnj,xiqm->xijmn", gamma, U)
    corr_m = np.einsum("xqnm,xijq->xijmn", gamma, U)
    return dU - corr_i - corr_j - corr_m


def divdiv2(chart, T: np.ndarray, hinv: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Double covariant divergence ``grad^i grad^j T_{ij}`` of a symmetric
    (0,2) field."""
    first = covd2(chart, T, gamma)  # [p, i, j, m]
    second = covd3(chart, first, gamma)  # [p, i, j, m, n]
    return np.einsum("xim,xjn,xijmn->x", hinv, hinv, second)


def riemann3(chart, h: np.ndarray, hinv: np.ndarray) -> np.ndarray:
    """Intrinsic curvature ``R_{ijkl}`` (all indices down) of a boundary
    3-metric field.

    Convention: ``R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb}
    + Gamma^a_{ce} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{cb}`` with
    ``Ric_{bd} = R^a_{bad}``; the unit round 3-sphere then has scalar
    curvature +6.
    """
    gamma = christoffel3(chart, h, hinv)
    dgamma = chart.grad(gamma)  # [p, k, i, j, m] = d_m Gamma^k_{ij}
    r_up = (
        np.einsum("xadbc->xabcd", dgamma)
        - np.einsum("xacbd->xabcd", dgamma)
        + np.einsum("xace,xedb->xabcd", gamma, gamma)
        - np.einsum("xade,xecb->xabcd", gamma, gamma)
    )
    return np.einsum("xae,xebcd->xabcd", h, r_up)


def ricci_from_riemann(riem: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Contract the first and third (down) indices with the inverse metric."""
    return np.einsum("xac,xabcd->xbd", ginv, riem)
