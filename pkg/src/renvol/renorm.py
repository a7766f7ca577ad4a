"""Volume ladders, divergent-coefficient fits, and finite parts.

The interior volume of the singular metric beyond a collar cutoff grows
like an explicit Laurent-plus-log ladder in the cutoff, and the constant
term of that ladder is the renormalized volume.  This module evaluates
the cutoff integrals by adaptive quadrature, fits the ladder by weighted
least squares, and cross-validates the divergent coefficients against
the independent boundary-integral route from the expansion layer.  The
trace-free Ricci energy gets the same treatment on its shorter ladder.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.chebyshev import Chebyshev
from scipy.integrate import quad
from scipy.optimize import brentq

from .boundary import boundary_jet
from .errors import (BadSpec, IllConditioned, ParameterOutOfRange,
                     QuadratureFailure, RouteMismatch, UnsupportedGeometry)
from .expansion import energy_functional, einstein_leading
from .geometry import CollarMetric
from .radial import RadialSolution, barycentric_eval

VOLUME_BASIS = ("eps^-3", "eps^-2", "eps^-1", "log(1/eps)", "const",
                "eps*log(eps)", "eps")
EINSTEIN_BASIS = ("eps^-1", "log(1/eps)", "const", "eps*log(eps)", "eps")

#: weight exponent that equalizes the column scales of each basis
_WEIGHT_POWER = {VOLUME_BASIS: 3, EINSTEIN_BASIS: 1}

def _tail_column(eps: np.ndarray, j: int, emax: float) -> np.ndarray:
    """Nuisance tail column eps^2 * T_j(x), x the affine map of
    [0, emax] onto [-1, 1].

    Real ladders continue analytically past the reported terms;
    truncating the model there pushes that remainder into the reported
    coefficients (0.2 absolute on the widest ball ladders).  Raw
    monomial tails are numerically hopeless next to the log columns, so
    the tail subspace is parametrized in Chebyshev form.
    """
    x = 2.0 * eps / emax - 1.0
    return eps ** 2 * np.polynomial.chebyshev.Chebyshev.basis(j)(x)


def _auto_tail_degree(decades: float) -> int:
    """Tail depth versus ladder span, tuned on closed-form and
    quadrature ladders: deeper tails cut truncation bias but amplify
    data noise, and the trade-off point moves with the span."""
    if decades >= 2.25:
        return 8
    if decades >= 2.1:
        return 6
    return 4


def default_epsilons(n: int = 24, lo: float = 1e-3,
                     hi: float = 1e-1) -> np.ndarray:
    """Geometric cutoff ladder used throughout unless overridden."""
    return np.geomspace(lo, hi, n)


def pipeline_epsilons(collar_depth: float, n: int = 40,
                      lo: float = 1e-3) -> np.ndarray:
    """Accuracy-tuned ladder for the cross-validated pipelines: it runs
    to the largest admissible cutoff because span is what decouples the
    reported coefficients from the analytic tail of a real ladder."""
    return np.geomspace(lo, 0.5 * collar_depth, n)


def _basis_column(eps: np.ndarray, name: str) -> np.ndarray:
    if name == "eps^-3":
        return eps ** -3.0
    if name == "eps^-2":
        return eps ** -2.0
    if name == "eps^-1":
        return eps ** -1.0
    if name == "log(1/eps)":
        return np.log(1.0 / eps)
    if name == "const":
        return np.ones_like(eps)
    if name == "eps*log(eps)":
        return eps * np.log(eps)
    if name == "eps":
        return eps
    if name == "eps^2*log(eps)":
        return eps ** 2 * np.log(eps)
    if name == "eps^2":
        return eps ** 2
    if name == "eps^3*log(eps)":
        return eps ** 3 * np.log(eps)
    if name == "eps^3":
        return eps ** 3
    raise BadSpec(f"unknown ladder basis function {name!r}")


@dataclass
class LadderFit:
    """Weighted least-squares decomposition of a cutoff ladder."""

    epsilons: np.ndarray
    values: np.ndarray
    basis: tuple
    coefficients: np.ndarray
    fit_residual: float
    condition_estimate: float
    # nuisance tail of the model, kept out of the reported coefficients
    tail_degree: int = -1
    tail_scale: float = 1.0
    tail_coefficients: np.ndarray = field(
        default_factory=lambda: np.zeros(0))

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.basis.index(name)])

    @property
    def finite_part(self) -> float:
        return self.coefficient("const")

    @property
    def log_coefficient(self) -> float:
        return self.coefficient("log(1/eps)")

    def drop_largest(self, count: int = 2) -> "LadderFit":
        """Refit on the ladder with the ``count`` largest cutoffs removed
        (the finite part should barely move; large movement means the
        nuisance terms are leaking into the constant)."""
        order = np.argsort(self.epsilons)
        keep = order[:-count] if count else order
        return fit_finite_part(self.epsilons[keep], self.values[keep],
                               self.basis, tail_degree=self.tail_degree)

    def stability(self) -> float:
        """Relative change of the finite part under dropping the two
        largest cutoffs."""
        other = self.drop_largest(2)
        scale = max(abs(self.finite_part), abs(other.finite_part), 1.0)
        return abs(self.finite_part - other.finite_part) / scale

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epsilon", "value", "model"])
            model = self.model_values()
            for e, v, m in zip(self.epsilons, self.values, model):
                writer.writerow([repr(float(e)), repr(float(v)),
                                 repr(float(m))])

    def model_values(self) -> np.ndarray:
        cols = [_basis_column(self.epsilons, b) for b in self.basis]
        cols += [_tail_column(self.epsilons, j, self.tail_scale)
                 for j in range(self.tail_degree + 1)]
        coefs = np.concatenate([self.coefficients, self.tail_coefficients])
        return np.stack(cols, axis=1) @ coefs

    def report(self) -> str:
        lines = ["ladder fit over %d cutoffs in [%.3e, %.3e]"
                 % (len(self.epsilons), self.epsilons.min(),
                    self.epsilons.max())]
        for name, c in zip(self.basis, self.coefficients):
            lines.append(f"  {name:>12s} : {c:+.12e}")
        lines.append(f"  fit residual       : {self.fit_residual:.3e}")
        lines.append(f"  condition estimate : {self.condition_estimate:.3e}")
        lines.append(f"  drop-2 stability   : {self.stability():.3e}")
        return "\n".join(lines)


def _qr_solve_extended(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Householder least squares in extended precision.

    The log-power design matrices are poorly conditioned (near-collinear
    columns over two decades), and double-precision SVD leaves
    coefficient errors far above the cross-validation tolerances; 80-bit
    accumulation buys the missing digits at negligible cost for these
    tiny systems.
    """
    R = A.astype(np.longdouble).copy()
    y = b.astype(np.longdouble).copy()
    m, n = R.shape
    for j in range(n):
        x = R[j:, j]
        norm = np.sqrt(np.sum(x * x))
        if norm == 0.0:
            raise IllConditioned("exactly singular ladder design matrix")
        alpha = -norm if x[0] >= 0 else norm
        v = x.copy()
        v[0] -= alpha
        v /= np.sqrt(np.sum(v * v))
        R[j:, j:] -= 2.0 * np.outer(v, v @ R[j:, j:])
        y[j:] -= 2.0 * v * np.dot(v, y[j:])
    coef = np.zeros(n, dtype=np.longdouble)
    for i in range(n - 1, -1, -1):
        coef[i] = (y[i] - np.dot(R[i, i + 1:], coef[i + 1:])) / R[i, i]
    return coef


def fit_finite_part(epsilons, values, basis=VOLUME_BASIS,
                    tail_degree=None) -> LadderFit:
    """Weighted least squares on a divergence ladder.

    The weights ``eps^p`` (``p`` the strongest divergence of the basis)
    equalize the scales of the columns, so the constant term is not
    swamped by the leading divergence.  The model carries a Chebyshev
    nuisance tail (see ``_tail_column``) sized to the ladder span;
    ``tail_degree`` overrides the automatic depth (and is pinned by the
    stability refits so the model stays fixed), with -1 disabling the
    tail.  The tail is also skipped when the bare basis already
    reproduces the data to working precision — the data then *is* the
    model, and extra columns would only amplify rounding.
    """
    eps = np.asarray(epsilons, dtype=float)
    vals = np.asarray(values, dtype=float)
    basis = tuple(basis)
    if eps.shape != vals.shape or eps.ndim != 1:
        raise BadSpec("ladder epsilons and values must be equal-length 1-d")
    if len(eps) < 2 * len(basis):
        raise BadSpec(
            f"need at least {2 * len(basis)} ladder points, got {len(eps)}"
        )
    span = np.log10(eps.max() / eps.min())
    if span < 1.5:
        raise BadSpec(
            f"ladder must span >= 1.5 decades, got {span:.2f}"
        )
    power = _WEIGHT_POWER.get(basis)
    if power is None:
        # custom basis: match the strongest inverse power present
        power = max((3 if "eps^-3" in basis else
                     2 if "eps^-2" in basis else
                     1 if "eps^-1" in basis else 0), 0)
    w = eps ** power
    emax = float(eps.max())

    def solve(deg):
        cols = [_basis_column(eps, b) for b in basis]
        cols += [_tail_column(eps, j, emax) for j in range(deg + 1)]
        cols = np.stack(cols, axis=1)
        A = cols * w[:, None]
        b = vals * w
        scale = np.max(np.abs(A), axis=0)
        As = A / scale
        cond = float(np.linalg.cond(As))
        if cond > 1e12:
            raise IllConditioned(
                f"ladder design matrix condition {cond:.3e} exceeds 1e12"
            )
        coef = np.asarray(_qr_solve_extended(As, b) / scale, dtype=float)
        bmax = max(float(np.max(np.abs(b))), np.finfo(float).tiny)
        wres = float(np.max(np.abs(A @ coef - b))) / bmax
        resid = float(np.max(np.abs(cols @ coef - vals)))
        return coef, cond, wres, resid

    if tail_degree is None:
        coef, cond, wres, resid = solve(-1)
        deg = -1
        # quadrature noise sits near 1e-12 of the weighted scale; only a
        # genuine unmodeled tail leaves more than that behind
        if wres > 3e-12:
            deg = min(_auto_tail_degree(span), len(eps) - len(basis) - 3)
            coef, cond, wres, resid = solve(deg)
    else:
        deg = int(tail_degree)
        coef, cond, wres, resid = solve(deg)
    n = len(basis)
    return LadderFit(epsilons=eps, values=vals, basis=basis,
                     coefficients=coef[:n], fit_residual=resid,
                     condition_estimate=cond, tail_degree=deg,
                     tail_scale=emax, tail_coefficients=coef[n:])


# ---------------------------------------------------------------------------
# cutoff integrals
# ---------------------------------------------------------------------------

def _radial_setup(metric: CollarMetric, solution: RadialSolution):
    if not metric.is_radial:
        raise UnsupportedGeometry("volume ladders need a radial geometry")
    if solution.residual_norm >= 1e-9:
        raise BadSpec(
            f"solution residual {solution.residual_norm:.3e} is not "
            f"accepted (needs < 1e-9)"
        )
    prof = metric.radial
    if prof.topology == "two_sided":
        return 0.5 * prof.r_max, 2.0
    return prof.r_max, 1.0


def _quad(func, lo, hi, scale=1.0):
    val, err, info, *rest = quad(func, lo, hi, epsabs=1e-14 * max(scale, 1.0),
                                 epsrel=1e-13, limit=400, full_output=1)
    if rest:
        raise QuadratureFailure(f"adaptive quadrature failed: {rest[0]}")
    if err > 1e-8 * max(abs(val), 1.0):
        raise QuadratureFailure(
            f"quadrature error estimate {err:.3e} too large for {val:.6e}"
        )
    return float(val)


class _CumulativeQuadrature:
    """Shared antiderivative for a whole cutoff ladder.

    Each ladder row is a tail integral of the same density with a
    different lower limit.  Integrating each row on its own adaptive
    mesh makes the row errors independent, and the ladder fit amplifies
    that white component by orders of magnitude more than a smooth one;
    evaluating every row from one piecewise Chebyshev antiderivative
    keeps the errors a smooth function of the cutoff (and costs one
    interpolation of the density per half-decade segment instead of
    hundreds of evaluations per row).
    """

    def __init__(self, integrand, lo: float, hi: float):
        if not hi > lo > 0.0:
            raise ParameterOutOfRange(
                f"cumulative quadrature needs 0 < lo < hi, got "
                f"[{lo:.3e}, {hi:.3e}]"
            )

        def sampled(x):
            return np.array([integrand(float(v)) for v in np.atleast_1d(x)])

        n_seg = max(1, int(np.ceil(np.log10(hi / lo) / 0.5)))
        self.knots = np.geomspace(lo, hi, n_seg + 1)
        self.pieces = []
        for a, b in zip(self.knots[:-1], self.knots[1:]):
            for deg in (64, 128, 256):
                ch = Chebyshev.interpolate(sampled, deg, domain=[a, b])
                coef = np.abs(ch.coef)
                if np.max(coef[-6:]) <= 1e-13 * np.max(coef):
                    break
            else:
                raise QuadratureFailure(
                    f"density interpolation not converged on "
                    f"[{a:.3e}, {b:.3e}]"
                )
            self.pieces.append(ch.integ(lbnd=a))
        # integral from each knot up to hi
        self.suffix = np.zeros(n_seg + 1)
        for i in range(n_seg - 1, -1, -1):
            piece_full = float(self.pieces[i](self.knots[i + 1]))
            self.suffix[i] = self.suffix[i + 1] + piece_full

    def tail_integral(self, lo: float) -> float:
        """Integral from ``lo`` up to the upper end."""
        i = int(np.searchsorted(self.knots, lo, side="right") - 1)
        i = min(max(i, 0), len(self.pieces) - 1)
        partial = float(self.pieces[i](lo))
        piece_full = float(self.pieces[i](self.knots[i + 1]))
        return (piece_full - partial) + self.suffix[i + 1]


def volume_ladder(metric: CollarMetric, solution: RadialSolution,
                  epsilons=None) -> np.ndarray:
    """Interior volume of the singular metric beyond each cutoff:
    the density is ``u^-4`` against the background volume form, and the
    angular directions are exact for radial geometries (the fiber volume
    is a constant factor)."""
    upper, sides = _radial_setup(metric, solution)
    eps = default_epsilons() if epsilons is None else \
        np.asarray(epsilons, dtype=float)
    if np.any(eps <= 0.0) or np.any(eps > 0.5 * metric.collar_depth + 1e-13):
        raise ParameterOutOfRange(
            "cutoffs must lie in (0, collar_depth/2]"
        )

    def integrand(r):
        return float(metric.volume_density(r)) * \
            float(solution.evaluate_u(r)) ** -4.0

    shared = _CumulativeQuadrature(integrand, float(eps.min()), upper)
    return sides * np.array([shared.tail_integral(float(e)) for e in eps])


def u_level_ladder(metric: CollarMetric, solution: RadialSolution,
                   epsilons=None) -> np.ndarray:
    """Same interior volumes, but cut off along level sets of the
    defining function instead of the collar coordinate.  The log
    coefficient of the fitted ladder must agree with the collar-cutoff
    one; the divergent coefficients need not."""
    upper, sides = _radial_setup(metric, solution)
    eps = default_epsilons() if epsilons is None else \
        np.asarray(epsilons, dtype=float)
    u_top = float(solution.evaluate_u(upper))

    def integrand(r):
        return float(metric.volume_density(r)) * \
            float(solution.evaluate_u(r)) ** -4.0

    if np.any(eps >= u_top):
        raise ParameterOutOfRange(
            f"cutoff at or above the interior maximum {u_top:.3e} of "
            f"the defining function"
        )
    roots = np.array([
        brentq(lambda r: float(solution.evaluate_u(r)) - float(e),
               0.0, upper, xtol=1e-15, rtol=8.9e-16)
        for e in eps
    ])
    shared = _CumulativeQuadrature(integrand, float(min(eps.min(),
                                                        roots.min())), upper)
    return sides * np.array([shared.tail_integral(float(r)) for r in roots])


# ---------------------------------------------------------------------------
# renormalized volume with two-route cross-validation
# ---------------------------------------------------------------------------

def _check_route(label: str, fitted: float, analytic: float,
                 rel: float = 1e-5) -> None:
    scale = max(abs(fitted), abs(analytic), 1.0)
    if abs(fitted - analytic) > rel * scale:
        raise RouteMismatch(
            f"{label}: ladder fit {fitted:+.8e} vs boundary integral "
            f"{analytic:+.8e} (relative scale {scale:.3e})"
        )


@dataclass
class RenormalizedVolume:
    """Ladder-fit renormalized volume with the analytic divergent data."""

    k: int
    volume: float                  # finite part of the ladder
    c: tuple                       # (c0, c1, c2) from boundary integrals
    log_coefficient: float         # boundary-integral route
    fit: LadderFit = field(repr=False)

    def report(self) -> str:
        head = (f"renormalized volume (k={self.k}): V = {self.volume:+.12e}\n"
                f"  divergences c = ({self.c[0]:+.9e}, {self.c[1]:+.9e}, "
                f"{self.c[2]:+.9e}), log coefficient {self.log_coefficient:+.9e}")
        return head + "\n" + self.fit.report()


def renormalized_volume(metric: CollarMetric, solution: RadialSolution,
                        epsilons=None) -> RenormalizedVolume:
    """Fit the volume ladder and cross-validate every coefficient that
    also has a boundary-integral expression; the finite part itself has
    no closed form in general and is reported from the fit."""
    eps = pipeline_epsilons(metric.collar_depth) if epsilons is None else \
        np.asarray(epsilons, dtype=float)
    values = volume_ladder(metric, solution, eps)
    fit = fit_finite_part(eps, values, VOLUME_BASIS)
    energy = energy_functional(metric, solution.k)
    c_analytic = energy.c
    _check_route("c0", fit.coefficient("eps^-3"), c_analytic[0])
    _check_route("c1", fit.coefficient("eps^-2"), c_analytic[1])
    _check_route("c2", fit.coefficient("eps^-1"), c_analytic[2])
    _check_route("log coefficient", fit.log_coefficient, energy.log_energy)
    return RenormalizedVolume(
        k=solution.k, volume=fit.finite_part, c=tuple(c_analytic),
        log_coefficient=energy.log_energy, fit=fit,
    )


# ---------------------------------------------------------------------------
# trace-free Ricci energy
# ---------------------------------------------------------------------------

def _warp_frame(metric: CollarMetric, r: float):
    """Per-axis scaled warps and their log-derivative data at ``r``."""
    prof = metric.radial
    s = prof.scale()
    jets = prof.warp_jet(float(r))
    A = s * np.array([w.f for w in jets])
    A1 = s * np.array([w.f1 for w in jets])
    b = s * np.array([w.f2 for w in jets]) / A
    a = A1 / A
    if prof.fiber == "s3":
        ric_tan = -b + 2.0 * (1.0 - A1 ** 2) / A ** 2
    else:
        ric_tan = -b - a * (a.sum() - a)
    r00 = -b.sum()
    return a, ric_tan, r00


def tracefree_ricci_norm2(metric: CollarMetric, solution: RadialSolution,
                          r: float) -> float:
    """Pointwise squared background norm of the trace-free Ricci tensor
    of the singular metric, in the warped orthonormal frame."""
    a, ric_tan, r00 = _warp_frame(metric, r)
    scal = r00 + ric_tan.sum()
    u = float(solution.evaluate_u(r))
    du = float(solution.evaluate_du(r))
    d2u = float(barycentric_eval(solution.grid, solution.d2u, r))
    lap = d2u + a.sum() * du
    shift = -0.25 * scal - 0.5 * lap / u
    e00 = r00 + 2.0 * d2u / u + shift
    eii = ric_tan + 2.0 * a * du / u + shift
    return float(e00 ** 2 + np.sum(eii ** 2))


@dataclass
class EinsteinFinitePart:
    """Fitted trace-free Ricci energy ladder with the analytic leading
    coefficients."""

    a: float                      # analytic 1/eps coefficient
    log_term: float               # analytic log coefficient
    finite_part: float
    fit: LadderFit = field(repr=False)

    def report(self) -> str:
        head = (f"trace-free Ricci energy: fp = {self.finite_part:+.12e}\n"
                f"  1/eps coefficient {self.a:+.9e}, "
                f"log coefficient {self.log_term:+.9e}")
        return head + "\n" + self.fit.report()


def einstein_ladder(metric: CollarMetric, solution: RadialSolution,
                    epsilons=None) -> np.ndarray:
    """Cutoff integrals of the squared trace-free Ricci norm; the
    integrand is conformally balanced, so background norm and background
    volume give the same values as the singular-metric pair."""
    upper, sides = _radial_setup(metric, solution)
    eps = default_epsilons() if epsilons is None else \
        np.asarray(epsilons, dtype=float)
    if np.any(eps <= 0.0) or np.any(eps > 0.5 * metric.collar_depth + 1e-13):
        raise ParameterOutOfRange("cutoffs must lie in (0, collar_depth/2]")

    def integrand(r):
        return float(metric.volume_density(r)) * \
            tracefree_ricci_norm2(metric, solution, r)

    shared = _CumulativeQuadrature(integrand, float(eps.min()), upper)
    return sides * np.array([shared.tail_integral(float(e)) for e in eps])


def fp_einstein(metric: CollarMetric, solution: RadialSolution,
                epsilons=None) -> EinsteinFinitePart:
    """Finite part of the trace-free Ricci energy (first-problem input
    to the Gauss-Bonnet identity), cross-validated against the
    boundary-integral expressions for both divergent coefficients."""
    if solution.k != 1:
        raise ParameterOutOfRange(
            "the trace-free Ricci finite part enters only the first "
            "problem; got a solution for k=%d" % solution.k
        )
    eps = pipeline_epsilons(metric.collar_depth) if epsilons is None else \
        np.asarray(epsilons, dtype=float)
    values = einstein_ladder(metric, solution, eps)
    fit = fit_finite_part(eps, values, EINSTEIN_BASIS)
    jet = boundary_jet(metric)
    lead = einstein_leading(jet)
    _check_route("1/eps coefficient", fit.coefficient("eps^-1"), lead.a)
    _check_route("log coefficient", fit.log_coefficient, lead.f)
    return EinsteinFinitePart(a=lead.a, log_term=lead.f,
                              finite_part=fit.finite_part, fit=fit)


def einstein_energy_direct(metric: CollarMetric,
                           solution: RadialSolution) -> float:
    """Convergent trace-free Ricci energy for geometries with vanishing
    divergences (totally geodesic boundaries): plain quadrature down to
    the boundary."""
    upper, sides = _radial_setup(metric, solution)

    def integrand(r):
        return float(metric.volume_density(r)) * \
            tracefree_ricci_norm2(metric, solution, r)

    return sides * _quad(integrand, 0.0, upper)
