"""Truncated Taylor arithmetic in one variable, to third order.

A :class:`Jet` packages a function value together with its first three
derivatives at a point.  Collar metrics are specified through radial warp
profiles, and every boundary-jet quantity needs exactly the orders carried
here (value, three derivatives of the slice metric).  Keeping the chain
rules in one audited place avoids scattering Leibniz/Faa-di-Bruno algebra
through the geometry code.

Entries may be floats or numpy arrays of a common shape; all operations
are elementwise in that case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly


@dataclass(frozen=True)
class Jet:
    """Value and first three derivatives of a function at a point."""

    f: float
    f1: float
    f2: float
    f3: float

    # -- ring operations -------------------------------------------------
    def __add__(self, other):
        o = _as_jet(other)
        return Jet(self.f + o.f, self.f1 + o.f1, self.f2 + o.f2, self.f3 + o.f3)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.f, -self.f1, -self.f2, -self.f3)

    def __sub__(self, other):
        return self + (-_as_jet(other))

    def __rsub__(self, other):
        return _as_jet(other) + (-self)

    def __mul__(self, other):
        o = _as_jet(other)
        return Jet(
            self.f * o.f,
            self.f1 * o.f + self.f * o.f1,
            self.f2 * o.f + 2.0 * self.f1 * o.f1 + self.f * o.f2,
            self.f3 * o.f + 3.0 * self.f2 * o.f1 + 3.0 * self.f1 * o.f2 + self.f * o.f3,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * _as_jet(other).reciprocal()

    def __rtruediv__(self, other):
        return _as_jet(other) * self.reciprocal()

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = Jet(1.0, 0.0, 0.0, 0.0)
        base = self
        k = n
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # -- transcendental / inverse ----------------------------------------
    def reciprocal(self) -> "Jet":
        g = 1.0 / self.f
        g1 = -self.f1 * g * g
        g2 = (2.0 * self.f1 * self.f1 / self.f - self.f2) * g * g
        g3 = (
            -self.f3
            + 6.0 * self.f1 * self.f2 / self.f
            - 6.0 * self.f1**3 / self.f**2
        ) * g * g
        return Jet(g, g1, g2, g3)

    def exp(self) -> "Jet":
        e = np.exp(self.f)
        return Jet(
            e,
            self.f1 * e,
            (self.f2 + self.f1**2) * e,
            (self.f3 + 3.0 * self.f1 * self.f2 + self.f1**3) * e,
        )

    def sqrt(self) -> "Jet":
        s = np.sqrt(self.f)
        g1 = 0.5 * self.f1 / s
        g2 = 0.5 * self.f2 / s - g1 * g1 / s
        g3 = 0.5 * self.f3 / s - 3.0 * g1 * g2 / s
        return Jet(s, g1, g2, g3)

    def compose(self, inner: "Jet") -> "Jet":
        """Jet of ``self`` after ``inner``: ``self`` must be taken at
        ``inner.f``.  Faa di Bruno through third order."""
        g1, g2, g3 = inner.f1, inner.f2, inner.f3
        return Jet(
            self.f,
            self.f1 * g1,
            self.f2 * g1 * g1 + self.f1 * g2,
            self.f3 * g1**3 + 3.0 * self.f2 * g1 * g2 + self.f1 * g3,
        )

    def inverse_function(self) -> "Jet":
        """Derivatives of the inverse map at the image point.

        Requires a locally invertible jet (nonzero first derivative); the
        value of the returned jet is not meaningful for non-zero-based
        jets and is set to 0 (callers track base points themselves).
        """
        yp, ypp, yppp = self.f1, self.f2, self.f3
        x1 = 1.0 / yp
        x2 = -ypp / yp**3
        x3 = (3.0 * ypp * ypp - yp * yppp) / yp**5
        return Jet(0.0, x1, x2, x3)


def _as_jet(x) -> Jet:
    if isinstance(x, Jet):
        return x
    return Jet(x, 0.0, 0.0, 0.0)


def constant(c) -> Jet:
    return Jet(c, 0.0, 0.0, 0.0)


def variable(x) -> Jet:
    """The identity function as a jet at the point ``x``."""
    return Jet(x, 1.0, 0.0, 0.0)


def poly_jet(coeffs, x) -> Jet:
    """Jet at ``x`` of the polynomial with coefficients ``coeffs``
    (ascending order)."""
    c = np.asarray(coeffs, dtype=float)
    return Jet(
        npoly.polyval(x, c),
        npoly.polyval(x, npoly.polyder(c, 1)) if len(c) > 1 else 0.0 * np.asarray(x),
        npoly.polyval(x, npoly.polyder(c, 2)) if len(c) > 2 else 0.0 * np.asarray(x),
        npoly.polyval(x, npoly.polyder(c, 3)) if len(c) > 3 else 0.0 * np.asarray(x),
    )
