"""Geometry catalog: collar metrics ``dr^2 + h_r`` on 4-manifolds with
boundary.

Every geometry is presented in collar normal form relative to its
boundary: a one-parameter family of boundary metrics ``h_r`` with exact
radial jets at ``r = 0`` and exact evaluation on interior slices.  The
supported kinds are

``euclidean_ball``
    Flat metric on the ball of radius ``rho`` in geodesic polar form
    relative to the boundary sphere: ``h_r = (rho - r)^2 g_round``.
``sphere_interval_product``
    ``S^3(rho) x [0, a]`` with two boundary components.
``warped_radial``
    ``T^3 x [0, 1]`` with independent per-axis warps
    ``w_i(r) = 1 + sum_j c_ij (r(1-r))^j``; anisotropic warps give
    non-umbilic boundaries while every field stays radial.
``torus_collar``
    Collar over the flat 3-torus with ``h_r`` a degree-<=4 polynomial in
    ``r`` whose coefficients are low-degree Fourier fields on a periodic
    grid.  Only the collar is defined, no closed interior.
``exact_catalog_entry``
    Named geometries with known exact data (see ``CATALOG``).

Sign conventions used throughout the package: the inward unit normal is
``+d/dr``, the second fundamental form is ``L = -h'/2`` (so the unit
ball in flat space has ``L = +h`` and mean curvature ``H = 3``), and the
curvature sign is fixed by the unit round 3-sphere having scalar
curvature +6.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly

from .charts import HomogeneousChart, TorusChart
from .errors import BadSpec, NonPositiveDefinite, UnsupportedGeometry
from .jets1d import Jet, poly_jet

RADIAL_KINDS = ("euclidean_ball", "sphere_interval_product", "warped_radial",
                "exact_catalog_entry")
ALL_KINDS = RADIAL_KINDS + ("torus_collar",)


@dataclass(frozen=True)
class GeometrySpec:
    """Declarative description of a geometry; see module docstring for
    the per-kind parameters."""

    kind: str
    params: dict = field(default_factory=dict)
    chi: Optional[int] = None
    collar_depth: Optional[float] = None

    def canonical(self) -> str:
        def _clean(x):
            if isinstance(x, dict):
                return {k: _clean(x[k]) for k in sorted(x)}
            if isinstance(x, (list, tuple)):
                return [_clean(v) for v in x]
            if isinstance(x, (np.floating, float)):
                return float(x)
            if isinstance(x, (np.integer, int)):
                return int(x)
            return x

        payload = {
            "kind": self.kind,
            "params": _clean(self.params),
            "chi": self.chi,
            "collar_depth": self.collar_depth,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


class RadialProfile:
    """Interior description of a radial geometry: per-axis warp jets as a
    function of the collar coordinate."""

    def __init__(self, fiber: str, warp_jet: Callable[[float], list],
                 r_max: float, topology: str, rho: float = 1.0):
        if topology not in ("cap", "two_sided"):
            raise ValueError(topology)
        self.fiber = fiber          # "s3" (isotropic) or "t3" (anisotropic)
        self.warp_jet = warp_jet    # r -> [Jet, Jet, Jet]
        self.r_max = r_max
        self.topology = topology
        self.rho = rho              # fiber radius for "s3"

    def scale(self) -> float:
        """Frame scale: the slice metric is ``diag((scale*w_i)^2)``."""
        return self.rho if self.fiber == "s3" else 1.0

    def metric_jets(self, r: float):
        """Slice metric and its first three radial derivatives at ``r``
        as ``(npts=1, 3, 3)`` arrays."""
        s = self.scale()
        jets = [(s * w) * (s * w) for w in self.warp_jet(r)]
        out = []
        for order in ("f", "f1", "f2", "f3"):
            m = np.zeros((1, 3, 3))
            for i, j in enumerate(jets):
                m[0, i, i] = getattr(j, order)
            out.append(m)
        return tuple(out)

    def volume_density(self, r, base_volume: float):
        """``A(r)`` with ``dv_gbar = A(r) dr`` over the whole fiber."""
        r = np.asarray(r, dtype=float)
        if r.ndim == 0:
            ws = self.warp_jet(float(r))
            return base_volume * self.scale() ** 3 * float(
                np.prod([w.f for w in ws])
            )
        return np.array(
            [self.volume_density(float(ri), base_volume) for ri in r]
        )


class CollarMetric:
    """A geometry realized on a chart with exact collar jets."""

    def __init__(self, spec: GeometrySpec, chart, h_jets, *,
                 radial: Optional[RadialProfile] = None,
                 torus_poly: Optional[list] = None,
                 exact_phi: Optional[Callable[[float], float]] = None):
        self.spec = spec
        self.kind = spec.kind
        self.chart = chart
        self.h0, self.h1, self.h2, self.h3 = [np.asarray(a, dtype=float)
                                              for a in h_jets]
        self.radial = radial
        self.torus_poly = torus_poly
        self.exact_phi = exact_phi
        self.chi = spec.chi
        if spec.collar_depth is not None:
            self.collar_depth = float(spec.collar_depth)
        elif radial is not None:
            self.collar_depth = (radial.r_max if radial.topology == "cap"
                                 else radial.r_max / 2.0)
        else:
            self.collar_depth = 0.5
        self._check_positivity()

    # -- basic queries ---------------------------------------------------
    @property
    def is_radial(self) -> bool:
        return self.radial is not None

    def boundary_measure(self) -> float:
        ones = np.ones(self.chart.npts)
        return self.chart.integrate(ones, self.h0)

    def slice_metric(self, r: float):
        """Exact ``(h_r, h_r', h_r'', h_r''')`` at collar coordinate
        ``r``, each of shape ``(npts, 3, 3)``."""
        if self.radial is not None:
            return self.radial.metric_jets(r)
        c = self.torus_poly
        h = sum(c[j] * r**j for j in range(len(c)))
        h1 = sum(j * c[j] * r ** (j - 1) for j in range(1, len(c)))
        h2 = sum(j * (j - 1) * c[j] * r ** (j - 2) for j in range(2, len(c)))
        h3 = sum(j * (j - 1) * (j - 2) * c[j] * r ** (j - 3)
                 for j in range(3, len(c)))
        if len(c) < 4:
            h3 = np.zeros_like(h)
        return h, np.asarray(h1), np.asarray(h2), np.asarray(h3)

    def volume_density(self, r):
        """``A(r)`` with ``Vol = int A(r) dr`` (radial kinds only)."""
        if self.radial is None:
            raise UnsupportedGeometry("volume density needs a radial geometry")
        base = self.chart.base_volume
        return self.radial.volume_density(r, base)

    # -- validation ------------------------------------------------------
    def _check_positivity(self) -> None:
        eigs = np.linalg.eigvalsh(self.h0)
        if not np.all(eigs > 0):
            raise NonPositiveDefinite("boundary metric is not positive definite")
        depth = self.collar_depth
        for r in np.linspace(0.0, depth, 9)[:-1]:
            h = self.slice_metric(float(r))[0]
            if not np.all(np.linalg.eigvalsh(h) > 0):
                raise NonPositiveDefinite(
                    f"collar slice metric loses positivity at r={r:.3f}"
                )


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _poly_warp(coeffs) -> Callable[[float], list]:
    polys = [np.asarray(c, dtype=float) for c in coeffs]

    def warp(r: float):
        return [poly_jet(c, r) for c in polys]

    return warp


def _symmetric_warp_poly(c_axis) -> np.ndarray:
    """Expand ``1 + sum_j c_j (r(1-r))^j`` into plain coefficients."""
    base = np.array([0.0, 1.0, -1.0])  # r(1-r)
    out = np.array([1.0])
    power = np.array([1.0])
    for cj in c_axis:
        power = npoly.polymul(power, base)
        out = npoly.polyadd(out, float(cj) * power)
    return out


def build_geometry(spec: GeometrySpec) -> CollarMetric:
    """Realize a :class:`GeometrySpec` as a :class:`CollarMetric`."""
    if spec.kind == "euclidean_ball":
        return _build_ball(spec)
    if spec.kind == "sphere_interval_product":
        return _build_product(spec)
    if spec.kind == "warped_radial":
        return _build_warped(spec)
    if spec.kind == "torus_collar":
        return _build_torus(spec)
    if spec.kind == "exact_catalog_entry":
        return _build_catalog(spec)
    raise BadSpec(f"unknown geometry kind {spec.kind!r}")


def _radial_metric(spec, profile, chart, **kw) -> CollarMetric:
    return CollarMetric(spec, chart, profile.metric_jets(0.0),
                        radial=profile, **kw)


def _build_ball(spec: GeometrySpec) -> CollarMetric:
    rho = float(spec.params.get("radius", 1.0))
    if rho <= 0:
        raise BadSpec("ball radius must be positive")
    if spec.chi is None:
        spec = GeometrySpec(spec.kind, spec.params, 1, spec.collar_depth)
    chart = HomogeneousChart("s3", rho=rho, n_components=1)
    warp = _poly_warp([[1.0, -1.0 / rho]] * 3)
    profile = RadialProfile("s3", warp, rho, "cap", rho=rho)
    return _radial_metric(spec, profile, chart,
                          exact_phi=lambda r: -1.0 / (2.0 * rho))


def _build_product(spec: GeometrySpec) -> CollarMetric:
    rho = float(spec.params.get("sphere_radius", 1.0))
    length = float(spec.params.get("length", 1.0))
    if rho <= 0 or length <= 0:
        raise BadSpec("product parameters must be positive")
    if spec.chi is None:
        spec = GeometrySpec(spec.kind, spec.params, 0, spec.collar_depth)
    chart = HomogeneousChart("s3", rho=rho, n_components=2)
    warp = _poly_warp([[1.0]] * 3)
    profile = RadialProfile("s3", warp, length, "two_sided", rho=rho)
    return _radial_metric(spec, profile, chart)


def _build_warped(spec: GeometrySpec) -> CollarMetric:
    coeffs = spec.params.get("warp", [[0.1], [0.0], [-0.1]])
    if len(coeffs) != 3:
        raise BadSpec("warped_radial needs warp coefficients for 3 axes")
    polys = [_symmetric_warp_poly(c) for c in coeffs]
    rr = np.linspace(0.0, 1.0, 201)
    for p in polys:
        if np.any(npoly.polyval(rr, p) <= 0):
            raise NonPositiveDefinite("warp profile must stay positive")
    if spec.chi is None:
        spec = GeometrySpec(spec.kind, spec.params, 0, spec.collar_depth)
    chart = HomogeneousChart("t3", n_components=2)
    profile = RadialProfile("t3", _poly_warp(polys), 1.0, "two_sided")
    return _radial_metric(spec, profile, chart)


def _build_torus(spec: GeometrySpec) -> CollarMetric:
    n = int(spec.params.get("grid_n", 16))
    if n not in (8, 12, 16, 24, 32):
        raise BadSpec(f"unsupported torus grid size {n}")
    chart = TorusChart(n)
    coeff_fields = []
    degree = 4
    for j in range(degree + 1):
        terms = spec.params.get(f"h{j}", [])
        base = np.zeros((chart.npts, 3, 3))
        if j == 0:
            base += np.eye(3)[None, :, :]
        for t in terms:
            if len(t) != 7:
                raise BadSpec(
                    "Fourier term must be [i, j, kx, ky, kz, cos, sin]"
                )
            i, jj = int(t[0]), int(t[1])
            if not (0 <= i < 3 and 0 <= jj < 3):
                raise BadSpec("component indices must be 0, 1 or 2")
            kvec = np.array(t[2:5], dtype=float)
            phase = chart.coords @ kvec
            wave = float(t[5]) * np.cos(phase) + float(t[6]) * np.sin(phase)
            base[:, i, jj] += wave
            if i != jj:
                base[:, jj, i] += wave
        chart.check_resolution(base, label=f"h{j}")
        coeff_fields.append(base)
    jets = (coeff_fields[0], coeff_fields[1], 2.0 * coeff_fields[2],
            6.0 * coeff_fields[3])
    depth = spec.collar_depth if spec.collar_depth is not None else 0.5
    spec = GeometrySpec(spec.kind, spec.params, spec.chi, depth)
    return CollarMetric(spec, chart, jets, torus_poly=coeff_fields)


CATALOG = {
    # Geodesic-gauge compactification of the standard Poincare-Einstein
    # ball: collar dr^2 + (1 - r^2/4)^2 g_round on (0, 2], totally
    # geodesic boundary, exact solution u = r for both problems.
    "hyperbolic_ball_geodesic": {
        "chi": 1,
        "build": lambda spec: _radial_metric(
            spec,
            RadialProfile("s3", _poly_warp([[1.0, 0.0, -0.25]] * 3), 2.0,
                          "cap", rho=1.0),
            HomogeneousChart("s3", rho=1.0, n_components=1),
            exact_phi=lambda r: 0.0,
        ),
    },
}


def _build_catalog(spec: GeometrySpec) -> CollarMetric:
    name = spec.params.get("name")
    if name not in CATALOG:
        raise BadSpec(
            f"unknown catalog entry {name!r}; have {sorted(CATALOG)}"
        )
    entry = CATALOG[name]
    if spec.chi is None:
        spec = GeometrySpec(spec.kind, spec.params, entry["chi"],
                            spec.collar_depth)
    return entry["build"](spec)


# ---------------------------------------------------------------------------
# randomized torus collars (for regression sweeps)
# ---------------------------------------------------------------------------

def random_torus_spec(seed: int, grid_n: int = 16, amplitude: float = 0.05,
                      umbilic: bool = False) -> GeometrySpec:
    """Draw a smooth random torus collar with low-wavenumber Fourier data.

    With ``umbilic=True`` the first radial jet is a pure-trace multiple
    of the boundary metric (``h1 = mu(x) h0`` with ``h0 = identity``);
    otherwise it carries an order-one trace-free part.
    """
    rng = np.random.default_rng(seed)

    def draw_terms(n_terms, amp, diag_only=False, trace_part=None):
        terms = []
        for _ in range(n_terms):
            if trace_part is not None:
                kvec = rng.integers(-2, 3, size=3)
                c, s = amp * rng.standard_normal(2)
                for i in range(3):
                    terms.append([i, i, *map(int, kvec), float(c), float(s)])
                continue
            if diag_only:
                i = j = int(rng.integers(0, 3))
            else:
                i = int(rng.integers(0, 3))
                j = int(rng.integers(i, 3))
            kvec = [int(v) for v in rng.integers(-2, 3, size=3)]
            c, s = (amp * rng.standard_normal(2)).tolist()
            terms.append([i, j, *kvec, float(c), float(s)])
        return terms

    params = {"grid_n": grid_n}
    if umbilic:
        # keep h0 = identity so that a diagonal h1 wave is pointwise
        # proportional to h0 (exact umbilicity)
        params["h0"] = []
        params["h1"] = draw_terms(2, amplitude, trace_part=True)
    else:
        params["h0"] = draw_terms(4, amplitude)
        params["h1"] = draw_terms(5, 2.0 * amplitude)
    params["h2"] = draw_terms(3, amplitude)
    params["h3"] = draw_terms(2, amplitude)
    params["h4"] = draw_terms(1, amplitude)
    return GeometrySpec("torus_collar", params)
