"""Radial grids, profiles, resampling, and the profile CSV format."""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import GridTooShort


class Grading(Enum):
    UNIFORM = "Uniform"
    GEOMETRIC_NEAR_ORIGIN = "GeometricNearOrigin"


def uniform_grid(r_max: float, n: int) -> np.ndarray:
    return np.linspace(0.0, r_max, n + 1)


def graded_grid(r_max: float, n: int, ratio: float = 1.05, min_cell_rel: float = 1e-6) -> np.ndarray:
    """Geometric cells near the origin (growth `ratio`, first cell
    min_cell_rel * r_max), uniform once the geometric cell matches the
    uniform spacing needed to land on r_max with n cells total."""
    h0 = min_cell_rel * r_max
    cells = []
    r = 0.0
    h = h0
    while len(cells) < n:
        remaining = n - len(cells)
        h_flat = (r_max - r) / remaining
        if h >= h_flat:
            cells.extend([h_flat] * remaining)
            break
        cells.append(h)
        r += h
        h *= ratio
    nodes = np.concatenate([[0.0], np.cumsum(cells)])
    nodes[-1] = r_max
    return nodes


@dataclass(frozen=True)
class RadialProfile:
    """Nodal values of a radial function on a non-uniform grid.

    derivs are optional; when present, evaluation and quadrature use the
    cubic Hermite reconstruction, otherwise piecewise linear. A set
    support_radius pins V = 0 for r >= R; the monotone flag asserts a
    non-increasing profile and is validated at construction.
    """

    nodes: np.ndarray
    values: np.ndarray
    derivs: np.ndarray | None = None
    support_radius: float | None = None
    monotone: bool = False
    grading: Grading = Grading.UNIFORM

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise ValueError("grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        if nodes[0] < 0.0:
            raise ValueError("grid nodes must be >= 0")
        if not np.isfinite(nodes[-1]):
            raise ValueError("truncation radius must be finite")
        if values.shape != nodes.shape:
            raise ValueError("values and nodes shapes differ")
        if np.any(values < 0.0):
            raise ValueError("profile values must be non-negative")
        if self.derivs is not None:
            derivs = np.asarray(self.derivs, dtype=float)
            if derivs.shape != nodes.shape:
                raise ValueError("derivs and nodes shapes differ")
            object.__setattr__(self, "derivs", derivs)
        if self.monotone and np.any(np.diff(values) > 0.0):
            raise ValueError("monotone flag set but values increase somewhere")
        if self.support_radius is not None:
            beyond = nodes >= self.support_radius
            if np.any(values[beyond] != 0.0):
                raise ValueError("values must vanish beyond the support radius")

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def cell_widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def deriv_values(self) -> np.ndarray:
        """Nodal derivatives: stored, or 3-point finite differences
        (second order on non-uniform grids, one-sided at the ends)."""
        if self.derivs is not None:
            return self.derivs
        return fd_derivatives(self.nodes, self.values)

    def __call__(self, r):
        """Evaluate the reconstruction; zero beyond the support/grid end."""
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if self.derivs is None:
            out = np.interp(r, self.nodes, self.values, left=self.values[0], right=0.0)
        else:
            out = _hermite_eval(self.nodes, self.values, self.derivs, r)
        if self.support_radius is not None:
            out = np.where(r >= self.support_radius, 0.0, out)
        out = np.where(r > self.nodes[-1], 0.0, out)
        return float(out[0]) if scalar else out

    def is_nonincreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.values) <= tol))

    def with_support(self, R: float) -> "RadialProfile":
        return replace(self, support_radius=R)


def fd_derivatives(nodes: np.ndarray, values: np.ndarray) -> np.ndarray:
    """3-point non-uniform finite differences, one-sided at endpoints."""
    n = len(nodes)
    d = np.empty(n)
    if n == 2:
        s = (values[1] - values[0]) / (nodes[1] - nodes[0])
        return np.array([s, s])
    h1 = nodes[1:-1] - nodes[:-2]
    h2 = nodes[2:] - nodes[1:-1]
    d[1:-1] = (
        -h2 / (h1 * (h1 + h2)) * values[:-2]
        + (h2 - h1) / (h1 * h2) * values[1:-1]
        + h1 / (h2 * (h1 + h2)) * values[2:]
    )
    ha, hb = nodes[1] - nodes[0], nodes[2] - nodes[1]
    d[0] = (
        -(2 * ha + hb) / (ha * (ha + hb)) * values[0]
        + (ha + hb) / (ha * hb) * values[1]
        - ha / (hb * (ha + hb)) * values[2]
    )
    ha, hb = nodes[-2] - nodes[-3], nodes[-1] - nodes[-2]
    d[-1] = (
        hb / (ha * (ha + hb)) * values[-3]
        - (ha + hb) / (ha * hb) * values[-2]
        + (ha + 2 * hb) / (hb * (ha + hb)) * values[-1]
    )
    return d


def _hermite_eval(nodes, values, derivs, r):
    idx = np.clip(np.searchsorted(nodes, r, side="right") - 1, 0, len(nodes) - 2)
    h = nodes[idx + 1] - nodes[idx]
    t = np.clip((r - nodes[idx]) / h, 0.0, 1.0)
    v1, v2 = values[idx], values[idx + 1]
    m1, m2 = derivs[idx] * h, derivs[idx + 1] * h
    t2 = t * t
    t3 = t2 * t
    out = (
        (2 * t3 - 3 * t2 + 1) * v1
        + (t3 - 2 * t2 + t) * m1
        + (-2 * t3 + 3 * t2) * v2
        + (t3 - t2) * m2
    )
    out = np.where(r < nodes[0], values[0], out)
    out = np.where(r > nodes[-1], 0.0, out)
    return out


def resample(profile: RadialProfile, new_nodes: np.ndarray) -> RadialProfile:
    """Piecewise-linear resampling; preserves non-negativity and
    monotonicity by construction."""
    new_nodes = np.asarray(new_nodes, dtype=float)
    if profile.support_radius is not None and new_nodes[-1] < profile.support_radius:
        raise GridTooShort(
            f"target grid ends at {new_nodes[-1]}, support radius is {profile.support_radius}"
        )
    vals = np.interp(new_nodes, profile.nodes, profile.values,
                     left=profile.values[0], right=0.0)
    if profile.support_radius is not None:
        vals = np.where(new_nodes >= profile.support_radius, 0.0, vals)
    return RadialProfile(
        nodes=new_nodes,
        values=vals,
        support_radius=profile.support_radius,
        monotone=profile.monotone,
    )


def write_profile_csv(path, profile: RadialProfile, N: int, m: float, sigma: float) -> None:
    """Profile file format: a comment header with the parameters, then
    rows r,V,Vprime at full double precision."""
    R = profile.support_radius
    header = "# N=%d m=%.17g sigma=%.17g V0=%.17g R=%s" % (
        N, m, sigma, profile.values[0], ("%.17g" % R) if R is not None else "inf",
    )
    d = profile.deriv_values()
    buf = io.StringIO()
    buf.write(header + "\n")
    buf.write("r,V,Vprime\n")
    for r, v, dv in zip(profile.nodes, profile.values, d):
        buf.write("%.17g,%.17g,%.17g\n" % (r, v, dv))
    with open(path, "w") as f:
        f.write(buf.getvalue())


def read_profile_csv(path):
    """Read the profile format; returns (meta dict, RadialProfile)."""
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing parameter header line")
    meta = {}
    for tok in lines[0].lstrip("#").split():
        key, _, val = tok.partition("=")
        meta[key] = val
    meta["N"] = int(meta["N"])
    for key in ("m", "sigma", "V0"):
        meta[key] = float(meta[key])
    meta["R"] = float("inf") if meta["R"] == "inf" else float(meta["R"])
    body = lines[1:]
    if body and body[0].lower().startswith("r,"):
        body = body[1:]
    data = np.array([[float(x) for x in ln.split(",")] for ln in body])
    support = None if np.isinf(meta["R"]) else meta["R"]
    values = np.maximum(data[:, 1], 0.0)
    prof = RadialProfile(
        nodes=data[:, 0],
        values=values,
        derivs=data[:, 2] if data.shape[1] > 2 else None,
        support_radius=support,
        monotone=bool(np.all(np.diff(values) <= 0.0)),
    )
    return meta, prof
