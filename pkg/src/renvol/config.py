"""Geometry configuration files.

One geometry per file, TOML syntax (key-value pairs with nested
sections).  Top-level keys:

``kind``         one of the supported geometry kinds (required)
``chi``          integer Euler characteristic override (optional)
``collar_depth`` collar validity depth (optional)

and a ``[params]`` section holding kind-specific parameters:

* ``euclidean_ball``: ``radius`` (default 1.0)
* ``sphere_interval_product``: ``sphere_radius``, ``length``
* ``warped_radial``: ``warp`` — three lists of coefficients ``c_ij`` for
  the per-axis profiles ``w_i(r) = 1 + sum_j c_ij (r (1 - r))^j``
* ``torus_collar``: ``grid_n`` and radial-jet fields ``h0`` ... ``h4``,
  each a list of Fourier terms ``[i, j, kx, ky, kz, cos, sin]`` adding
  ``cos * cos(k.x) + sin * sin(k.x)`` to the symmetric component
  ``(i, j)`` (0-based) of the coefficient of ``r^m`` in ``h_r``
* ``exact_catalog_entry``: ``name``

Example::

    kind = "torus_collar"
    collar_depth = 0.5

    [params]
    grid_n = 16
    h1 = [[0, 0, 0, 0, 0, 0.30, 0.0], [0, 1, 1, 0, 0, 0.10, 0.05]]
"""

from __future__ import annotations

from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version dependent
    import tomli as tomllib

from .errors import BadSpec
from .geometry import ALL_KINDS, GeometrySpec


def parse_geometry_config(text: str) -> GeometrySpec:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise BadSpec(f"config is not valid TOML: {exc}") from exc
    if "kind" not in data:
        raise BadSpec("config must set 'kind'")
    kind = data["kind"]
    if kind not in ALL_KINDS:
        raise BadSpec(f"unknown geometry kind {kind!r}; have {ALL_KINDS}")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise BadSpec("'params' must be a section")
    chi = data.get("chi")
    if chi is not None and not isinstance(chi, int):
        raise BadSpec("'chi' must be an integer")
    depth = data.get("collar_depth")
    if depth is not None:
        depth = float(depth)
        if depth <= 0:
            raise BadSpec("'collar_depth' must be positive")
    extra = set(data) - {"kind", "params", "chi", "collar_depth"}
    if extra:
        raise BadSpec(f"unknown top-level keys: {sorted(extra)}")
    return GeometrySpec(kind=kind, params=params, chi=chi, collar_depth=depth)


def load_geometry_config(path) -> GeometrySpec:
    p = Path(path)
    if not p.exists():
        raise BadSpec(f"geometry config not found: {p}")
    return parse_geometry_config(p.read_text())
