"""Cell and whole-plane quadrature.

Whole-plane integrals of kernels with a 1/|z| singularity at the origin and
|z|^-3 decay are split into three pieces:

* a polar patch around the origin, where the area element r dr dtheta
  cancels the singularity;
* polar Gauss-Legendre panels out to ``R_cut``, with an angular count that
  grows with the radius so that unit-period oscillations stay resolved;
* an analytic tail.  The integrand is multiplied by a smooth taper that
  falls from 1 at ``R_cut/2`` to 0 at ``R_cut``; the missing part is
  restored from a power-law fit ``c1 r^-p + c2 r^-(p+2)`` made on the taper
  annulus with a smooth window, which averages out the oscillations.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np


class NonFiniteError(ArithmeticError):
    """A quadrature node produced NaN or infinity."""


def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0):
    """Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = _gl_reference(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@lru_cache(maxsize=64)
def _gl_reference(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def smooth_bump(s):
    """C-infinity bump supported on (0, 1)."""
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < 1)
    safe = np.where(inside, s, 0.5)
    return np.where(inside, np.exp(-1.0 / (safe * (1.0 - safe)) + 4.0), 0.0)


def inv_sqrt_diff(r2, b2, c2):
    """``1/sqrt(r2 + b2) - 1/sqrt(r2 + c2)`` without cancellation.

    Uses ``(c2 - b2) / (p q (p + q))`` with ``p = sqrt(r2 + b2)`` and
    ``q = sqrt(r2 + c2)``.
    """
    p = np.sqrt(r2 + b2)
    q = np.sqrt(r2 + c2)
    return (c2 - b2) / (p * q * (p + q))


@dataclass(frozen=True)
class CellRule:
    """Midpoint rule with ``n`` points per axis on the unit square."""

    n: int = 16

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("CellRule.n must be positive")

    @property
    def nodes(self) -> np.ndarray:
        t = (np.arange(self.n) + 0.5) / self.n
        return np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n * self.n, 1.0 / (self.n * self.n))

    def doubled(self) -> "CellRule":
        return CellRule(2 * self.n)


def integrate_cell(rule: CellRule, g):
    """Sum ``w_k g(x_k)`` over the cell rule.

    ``g`` is called once with the node array of shape ``(n*n, 2)`` and must
    return an array whose leading axis runs over the nodes.  A non-callable
    ``g`` is treated as a constant integrand.
    """
    if not callable(g):
        return np.asarray(g, dtype=float) * float(np.sum(rule.weights))
    vals = np.asarray(g(rule.nodes), dtype=float)
    return np.tensordot(rule.weights, vals, axes=(0, 0))


@dataclass(frozen=True)
class PlaneRule:
    """Parameters of the whole-plane rule.

    ``n_rad`` x ``n_ang`` is the resolution of the polar patch of radius
    ``r_inner``.  Beyond it the plane is covered by radial panels of width
    about ``panel_width`` with ``n_outer`` Gauss points each and at least
    ``arc_density`` angular nodes per unit of arc length.  ``tail_order`` is
    the assumed decay exponent of the integrand.
    """

    r_inner: float = 0.5
    R_cut: float = 40.0
    n_rad: int = 64
    n_ang: int = 128
    n_outer: int = 12
    tail_order: int = 3
    panel_width: float = 0.5
    arc_density: float = 6.0
    taper_start: float = 0.5

    def __post_init__(self):
        if not (0 < self.r_inner < self.R_cut):
            raise ValueError("PlaneRule requires 0 < r_inner < R_cut")
        if self.n_rad < 1 or self.n_ang < 4 or self.n_outer < 1:
            raise ValueError("PlaneRule resolutions must be positive (n_ang >= 4)")
        if self.tail_order <= 2:
            raise ValueError("tail_order must exceed 2 for an integrable tail")
        if not (0 < self.taper_start < 1):
            raise ValueError("taper_start must lie in (0, 1)")

    @property
    def R_taper(self) -> float:
        return self.taper_start * self.R_cut

    def doubled(self, radius: bool = True) -> "PlaneRule":
        """Twice the resolution everywhere (and twice ``R_cut`` if ``radius``)."""
        return replace(self, R_cut=self.R_cut * (2 if radius else 1), n_rad=2 * self.n_rad,
                       n_ang=2 * self.n_ang, n_outer=2 * self.n_outer,
                       arc_density=2 * self.arc_density)

    def angular_count(self, r: float) -> int:
        """Angular nodes on a circle of radius ``r`` (a multiple of 4)."""
        need = int(np.ceil(2 * np.pi * r * self.arc_density / 4.0)) * 4
        return max(self.n_ang - self.n_ang % 4, need)

    def taper(self, r):
        """Smooth cutoff: 1 up to ``R_taper``, 0 from ``R_cut`` on."""
        return smooth_step((self.R_cut - np.asarray(r, dtype=float)) / (self.R_cut - self.R_taper))

    def radial_panels(self, r_max: float):
        """Panel edges from ``r_inner`` to ``r_max``."""
        if r_max <= self.r_inner:
            return np.array([r_max])
        count = max(1, int(np.ceil((r_max - self.r_inner) / self.panel_width)))
        return np.linspace(self.r_inner, r_max, count + 1)

    def polar_nodes(self, r_max: float | None = None):
        """Polar nodes covering the disc of radius ``r_max``.

        Returns ``(z, r, w)`` where ``w`` already contains the area element
        ``r dr dtheta``.  Nodes are ordered radius-major, then by angle.
        """
        r_max = self.R_cut if r_max is None else float(r_max)
        return _polar_nodes(self, r_max)


@lru_cache(maxsize=32)
def _polar_nodes(rule: PlaneRule, r_max: float):
    zs, rs, ws = [], [], []

    def ring_block(r, wr, n_th):
        th = 2 * np.pi * np.arange(n_th) / n_th
        z = np.stack([np.outer(r, np.cos(th)), np.outer(r, np.sin(th))], axis=-1).reshape(-1, 2)
        rr = np.repeat(r, n_th)
        w = np.repeat(wr * r, n_th) * (2 * np.pi / n_th)
        zs.append(z)
        rs.append(rr)
        ws.append(w)

    inner = min(rule.r_inner, r_max)
    r, wr = gauss_legendre(rule.n_rad, 0.0, inner)
    ring_block(r, wr, rule.n_ang - rule.n_ang % 4)
    if r_max > rule.r_inner:
        edges = rule.radial_panels(r_max)
        for a, b in zip(edges[:-1], edges[1:]):
            r, wr = gauss_legendre(rule.n_outer, a, b)
            ring_block(r, wr, rule.angular_count(b))
    z = np.concatenate(zs)
    r = np.concatenate(rs)
    w = np.concatenate(ws)
    for arr in (z, r, w):
        arr.setflags(write=False)
    return z, r, w


def _check_finite(vals):
    if not np.all(np.isfinite(vals)):
        raise NonFiniteError("integrand evaluated to a non-finite value at a quadrature node")


def tail_fit_weights(rule: PlaneRule, r, w):
    """Least-squares weights for the power-law tail fit.

    Returns ``(mask, P)`` such that ``P @ k[mask]`` gives the two
    coefficients of ``c1 u^p + c2 u^(p+2)`` with ``u = R_taper / r``.
    """
    a, b = rule.R_taper, rule.R_cut
    mask = (r > a) & (r < b)
    rm = r[mask]
    psi = smooth_bump((rm - a) / (b - a)) * w[mask]
    u = a / rm
    p = rule.tail_order
    basis = np.stack([u ** p, u ** (p + 2)])
    normal = (basis * psi) @ basis.T
    return mask, np.linalg.solve(normal, basis * psi)


def tail_integral(rule: PlaneRule, coeffs):
    """Integral over the plane of ``(1 - taper) * (c1 u^p + c2 u^(p+2))``."""
    a, b = rule.R_taper, rule.R_cut
    p = rule.tail_order
    r, wr = gauss_legendre(64, a, b)
    u = a / r
    lost = (1.0 - rule.taper(r)) * 2 * np.pi * r * wr
    m1 = np.sum(lost * u ** p) + 2 * np.pi * a ** p * b ** (2 - p) / (p - 2)
    m2 = np.sum(lost * u ** (p + 2)) + 2 * np.pi * a ** (p + 2) * b ** (-p) / p
    return coeffs[0] * m1 + coeffs[1] * m2


def integrate_plane(rule: PlaneRule, k):
    """Integrate ``k`` over the whole plane.

    ``k`` is called once with all nodes, an array of shape ``(M, 2)``, and
    returns an array with leading axis of length ``M`` (scalar or matrix
    valued).  Raises :class:`NonFiniteError` if any value is not finite.
    """
    z, r, w = rule.polar_nodes()
    vals = np.asarray(k(z), dtype=float)
    _check_finite(vals)
    if not np.any(vals):
        return np.zeros(vals.shape[1:])
    main = np.tensordot(w * rule.taper(r), vals, axes=(0, 0))
    mask, proj = tail_fit_weights(rule, r, w)
    coeffs = np.tensordot(proj, vals[mask], axes=(1, 0))
    return main + tail_integral(rule, coeffs)


def kernel_mass(eps: float, L: float, rule: PlaneRule | None = None) -> float:
    """Plane integral of ``1/|z| - 1/sqrt(|z|^2 + (eps L)^2)``; exact value 2 pi eps L."""
    if eps <= 0 or L <= 0:
        raise ValueError("eps and L must be positive")
    rule = PlaneRule() if rule is None else rule
    d2 = (eps * L) ** 2

    def k(z):
        return inv_sqrt_diff(np.einsum("ij,ij->i", z, z), 0.0, d2)

    return float(integrate_plane(rule, k))
