"""Exact cell quadrature against power-law weights.

Profiles are piecewise polynomials (linear, or cubic Hermite when nodal
derivatives are known). Integrals of r^alpha times such a polynomial are
computed in closed form per cell near the origin, where alpha < 0 makes
generic quadrature lose digits, and by 12-point Gauss-Legendre away from
it, where the closed form would cancel catastrophically but the weight
is analytic and GL is exact to machine precision.

Cell polynomials use a local coordinate t = (r - r_left)/h in [0, 1].
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NonIntegrable

_GL_T, _GL_W = np.polynomial.legendre.leggauss(12)
_GL_T = 0.5 * (_GL_T + 1.0)  # nodes on [0, 1]
_GL_W = 0.5 * _GL_W

# cells with r_left <= NEAR_FACTOR * h take the closed-form branch
_NEAR_FACTOR = 2.0


def power_antideriv_moments(alpha: float, r1: np.ndarray, r2: np.ndarray, kmax: int) -> np.ndarray:
    """Moments I_k = int_{r1}^{r2} r^(alpha+k) dr for k = 0..kmax.

    Stable for r1 > 0 via expm1/log1p (no subtractive cancellation);
    r1 = 0 requires alpha + k + 1 > 0 and uses the direct primitive.
    Returns array of shape (kmax+1,) + r1.shape.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    out = np.empty((kmax + 1,) + r1.shape)
    pos = r1 > 0.0
    ks = np.arange(kmax + 1, dtype=float)
    beta1 = alpha + ks + 1.0  # exponent + 1 per moment

    if np.any(pos):
        L = np.log1p((r2[pos] - r1[pos]) / r1[pos])
        x = beta1[:, None] * L[None, :]
        # phi(x) = expm1(x)/x with phi(0) = 1
        phi = np.ones_like(x)
        nz = x != 0.0
        phi[nz] = np.expm1(x[nz]) / x[nz]
        out[:, pos] = r1[pos][None, :] ** beta1[:, None] * phi * L[None, :]
    if np.any(~pos):
        if np.any(beta1 <= 0.0):
            bad = ks[beta1 <= 0.0]
            raise NonIntegrable(
                f"int r^({alpha}+k) dr diverges at r=0 for k in {bad.astype(int).tolist()}"
            )
        z = ~pos
        out[:, z] = r2[z][None, :] ** beta1[:, None] / beta1[:, None]
    return out


def integrate_poly_cells(alpha: float, nodes: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Per-cell integrals of r^alpha * p_c(t(r)) over each grid cell.

    nodes   : (n,) strictly increasing, nodes[0] >= 0
    coeffs  : (n-1, deg+1) local-coordinate polynomial coefficients,
              p_c(t) = sum_k coeffs[c, k] t^k
    Returns (n-1,) cell integrals.
    """
    nodes = np.asarray(nodes, dtype=float)
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    r1, r2 = nodes[:-1], nodes[1:]
    h = r2 - r1
    ncell, ncoef = coeffs.shape
    kmax = ncoef - 1
    out = np.zeros(ncell)

    near = r1 <= _NEAR_FACTOR * h
    far = ~near

    if np.any(far):
        rq = r1[far, None] + h[far, None] * _GL_T[None, :]
        pq = np.zeros_like(rq)
        for k in range(kmax, -1, -1):  # Horner in t
            pq = pq * _GL_T[None, :] + coeffs[far, k][:, None]
        out[far] = h[far] * ((rq ** alpha * pq) @ _GL_W)

    if np.any(near):
        idx = np.nonzero(near)[0]
        if nodes[0] == 0.0 and near[0]:
            # origin cell: t = r/h, so only moments with nonzero
            # coefficients are needed; leading zeros of the polynomial
            # soften the integrability requirement
            c0 = coeffs[0]
            h0 = h[0]
            acc0 = 0.0
            for j in range(kmax + 1):
                if c0[j] == 0.0:
                    continue
                beta1 = alpha + j + 1.0
                if beta1 <= 0.0:
                    raise NonIntegrable(
                        f"int r^{alpha} t^{j} dr diverges at r=0 "
                        f"(nonzero origin coefficient)"
                    )
                acc0 += c0[j] * h0 ** (-j) * h0 ** beta1 / beta1
            out[0] = acc0
            idx = idx[idx != 0]
        if len(idx):
            moms = power_antideriv_moments(alpha, r1[idx], r2[idx], kmax)
            # p(t) = sum_k c_k ((r - r1)/h)^k  ->  monomials in r
            hn = h[idx]
            r1n = r1[idx]
            acc = np.zeros(len(idx))
            for k in range(kmax + 1):
                ck = coeffs[idx, k] / hn ** k
                if np.all(ck == 0.0):
                    continue
                # (r - r1)^k = sum_j binom(k,j) r^j (-r1)^(k-j)
                for j in range(k + 1):
                    acc += ck * math.comb(k, j) * (-r1n) ** (k - j) * moms[j]
            out[idx] = acc
    return out


def integrate_power_cells(alpha: float, nodes: np.ndarray) -> np.ndarray:
    """Per-cell integrals of r^alpha (unit polynomial)."""
    nodes = np.asarray(nodes, dtype=float)
    return integrate_poly_cells(alpha, nodes, np.ones((len(nodes) - 1, 1)))


def poly_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cellwise polynomial product of local-coordinate coefficients."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    ncell = a.shape[0]
    out = np.zeros((ncell, a.shape[1] + b.shape[1] - 1))
    for i in range(a.shape[1]):
        for j in range(b.shape[1]):
            out[:, i + j] += a[:, i] * b[:, j]
    return out


def poly_deriv_r(coeffs: np.ndarray, h: np.ndarray) -> np.ndarray:
    """d/dr of local-coordinate cell polynomials (chain rule by 1/h)."""
    coeffs = np.atleast_2d(coeffs)
    if coeffs.shape[1] == 1:
        return np.zeros((coeffs.shape[0], 1))
    ks = np.arange(1, coeffs.shape[1])
    return coeffs[:, 1:] * ks[None, :] / h[:, None]


def linear_cells(values: np.ndarray) -> np.ndarray:
    """Local coefficients of the piecewise-linear interpolant."""
    v1 = values[:-1]
    v2 = values[1:]
    return np.stack([v1, v2 - v1], axis=1)


def hermite_cells(values: np.ndarray, derivs: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Local coefficients of the cubic Hermite interpolant."""
    v1, v2 = values[:-1], values[1:]
    m1 = derivs[:-1] * h
    m2 = derivs[1:] * h
    c0 = v1
    c1 = m1
    c2 = -3.0 * v1 - 2.0 * m1 + 3.0 * v2 - m2
    c3 = 2.0 * v1 + m1 - 2.0 * v2 + m2
    return np.stack([c0, c1, c2, c3], axis=1)


def integrate_fractional_power_cells(
    alpha_int: int,
    nodes: np.ndarray,
    coeffs: np.ndarray,
    p: float,
) -> np.ndarray:
    """Per-cell integrals of r^alpha_int * max(p_c(t), 0)^p, p > 0 real.

    The weight exponent must be a non-negative integer (it is N-1 in all
    uses), so the integrand is smooth wherever the reconstruction stays
    away from zero. Cells where it approaches or crosses zero are split
    at the real roots and integrated with geometrically graded panels
    accumulating toward the branch point, which restores near-machine
    accuracy for the z^p endpoint singularity.
    """
    nodes = np.asarray(nodes, dtype=float)
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    r1 = nodes[:-1]
    h = nodes[1:] - r1
    ncell, ncoef = coeffs.shape
    out = np.empty(ncell)

    def values_at(c, ts):
        pv = np.zeros_like(ts)
        for k in range(ncoef - 1, -1, -1):
            pv = pv * ts + coeffs[c, k]
        return pv

    def gl_panel(c, t_lo, t_hi):
        ts = t_lo + (t_hi - t_lo) * _GL_T
        pv = np.maximum(values_at(c, ts), 0.0)
        rr = r1[c] + h[c] * ts
        return h[c] * (t_hi - t_lo) * np.dot(
            _GL_W, rr ** alpha_int * np.where(pv > 0.0, pv ** p, 0.0)
        )

    def graded(c, t_lo, t_hi, zero_left, zero_right, levels=40):
        # geometric panels accumulating toward zero endpoints
        if not (zero_left or zero_right):
            return gl_panel(c, t_lo, t_hi)
        if zero_left and zero_right:
            mid = 0.5 * (t_lo + t_hi)
            return graded(c, t_lo, mid, True, False) + graded(c, mid, t_hi, False, True)
        total = 0.0
        a, b = t_lo, t_hi
        if zero_right:
            width = b - a
            cuts = b - width * 0.5 ** np.arange(0, levels + 1)
            cuts[0] = a
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                total += gl_panel(c, lo, hi)
        else:
            width = b - a
            cuts = a + width * 0.5 ** np.arange(levels, -1, -1.0)
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                total += gl_panel(c, lo, hi)
            # sliver [a, a + 2^-levels width] dropped: O(2^(-levels(p+1)))
        return total

    # probe to classify cells: smooth-positive vs near-zero/crossing
    tprobe = np.linspace(0.0, 1.0, 9)
    pv = np.zeros((ncell, len(tprobe)))
    for k in range(ncoef - 1, -1, -1):
        pv = pv * tprobe[None, :] + coeffs[:, k][:, None]
    pmax = np.max(np.abs(pv), axis=1)
    pmin = np.min(pv, axis=1)
    delicate = (pmin <= 1e-3 * pmax) & (pmax > 0.0)
    trivial = pmax == 0.0
    simple = ~delicate & ~trivial

    out[trivial] = 0.0
    if np.any(simple):
        ts = _GL_T
        pq = np.zeros((int(simple.sum()), len(ts)))
        for k in range(ncoef - 1, -1, -1):
            pq = pq * ts[None, :] + coeffs[simple, k][:, None]
        pq = np.maximum(pq, 0.0)
        rr = r1[simple, None] + h[simple, None] * ts[None, :]
        out[simple] = h[simple] * ((pq ** p * rr ** alpha_int) @ _GL_W)

    for c in np.nonzero(delicate)[0]:
        cc = coeffs[c]
        deg = np.nonzero(cc != 0.0)[0]
        cuts = []
        if len(deg) and deg.max() >= 1:
            roots = np.roots(cc[: deg.max() + 1][::-1])
            cuts = sorted(
                float(z.real)
                for z in roots
                if abs(z.imag) < 1e-13 and 1e-13 < z.real < 1.0 - 1e-13
            )
        pts = [0.0] + cuts + [1.0]
        total = 0.0
        for lo, hi in zip(pts[:-1], pts[1:]):
            mid_val = values_at(c, np.array([0.5 * (lo + hi)]))[0]
            if mid_val <= 0.0:
                continue
            zl = abs(values_at(c, np.array([lo]))[0]) <= 1e-9 * pmax[c]
            zr = abs(values_at(c, np.array([hi]))[0]) <= 1e-9 * pmax[c]
            total += graded(c, lo, hi, zl, zr)
        out[c] = total
    return out
