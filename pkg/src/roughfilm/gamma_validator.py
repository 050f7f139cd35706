"""Finite-epsilon check of the homogenized anisotropy.

For a constant magnetization m the top/bottom boundary interaction of the
film over the rectangle omega is

    I_eps(m) = 1/(4 pi eps) int int (m.n1(x/eps))(m.n1(y/eps)) / R11
             + 1/(4 pi eps) int int (m.n2(x/eps))(m.n2(y/eps)) / R22
             - 1/(2 pi eps) int int (m.n1(x/eps))(m.n2(y/eps)) / R12

with R_ij = sqrt(|x - y|^2 + eps^2 (f_i(x/eps) - f_j(y/eps))^2).  When the
sides of omega are integer multiples of eps, rescaling by eps splits
omega x omega into pairs of unit cells.  Pairs of cells with the same
lattice offset D contribute the same integral J(D), so

    I_eps(m) = sum_D eps^2 (Nx - |D1|)(Ny - |D2|) m . J(D) m.

J(D) does not depend on eps and is computed once per geometry.  Offsets
with |D|_inf >= 2 use tensor Gauss rules on both cells.  For the nine
offsets around the origin the integral is rewritten in the relative
coordinate z = y - x; squares of z touching z = 0 use a polar (Duffy)
rule that absorbs the 1/|z| singularity.
"""
from __future__ import annotations

import hashlib
import math
import threading
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from ._parallel import ordered_map
from .profiles import FilmGeometry

FOUR_PI = 4.0 * np.pi
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ValidatorResolution:
    """Quadrature resolution of the cell-pair integrals.

    ``n_pair`` Gauss points per axis and cell for distant offsets
    (``n_pair_close`` when ``|D|_inf <= close_range``); ``n_rel`` points per
    axis (or per polar direction) in the relative coordinate and
    ``n_inner`` points per axis in the inner cell integral near the origin.
    """

    n_pair: int = 8
    n_pair_close: int = 12
    close_range: int = 3
    n_rel: int = 8
    n_inner: int = 8
    inner_panels: int = 4
    radial_edges: tuple = (0.04, 0.12, 0.3, 0.6)

    def doubled(self) -> "ValidatorResolution":
        return ValidatorResolution(2 * self.n_pair, 2 * self.n_pair_close, self.close_range,
                                   2 * self.n_rel, 2 * self.n_inner, self.inner_panels,
                                   self.radial_edges)


def _gl(n, a=0.0, b=1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return a + 0.5 * (b - a) * (x + 1), 0.5 * (b - a) * w


def _composite_gl(n, panels):
    edges = np.linspace(0.0, 1.0, panels + 1)
    parts = [_gl(n, a, b) for a, b in zip(edges[:-1], edges[1:])]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _normals(grad):
    n = np.empty(grad.shape[:-1] + (3,))
    n[..., :2] = -grad
    n[..., 2] = 1.0
    return n


class _Surfaces:
    """Profile values and normals at points shifted by a phase."""

    def __init__(self, geom: FilmGeometry, phase, formula):
        self.geom = geom
        self.phase = np.asarray(phase, dtype=float)
        self.formula = formula

    def __call__(self, pts):
        p = pts + self.phase
        f1, g1 = self.geom.f1.value_and_grad(p)
        f2, g2 = self.geom.f2.value_and_grad(p)
        return {"f1": f1, "f2": f2, "n1": _normals(g1), "n2": _normals(g2)}


def _terms(formula, offset):
    """Kernel list: (factor, left normal, right normal, kernel(r2, sx, sy))."""
    if formula == "parallel":
        a = offset

        def kern(r2, sx, sy):
            d = sx["f1"] - sy["f1"]
            p = np.sqrt(r2 + d * d)
            q = np.sqrt(r2 + (a + d) ** 2)
            return ((a + d) ** 2 - d * d) / (p * q * (p + q))

        return ((1.0 / TWO_PI, "n1", "n1", kern),)
    return (
        (1.0 / FOUR_PI, "n1", "n1", lambda r2, sx, sy: 1.0 / np.sqrt(r2 + (sx["f1"] - sy["f1"]) ** 2)),
        (1.0 / FOUR_PI, "n2", "n2", lambda r2, sx, sy: 1.0 / np.sqrt(r2 + (sx["f2"] - sy["f2"]) ** 2)),
        (-1.0 / TWO_PI, "n1", "n2", lambda r2, sx, sy: 1.0 / np.sqrt(r2 + (sx["f1"] - sy["f2"]) ** 2)),
    )


class PairTable:
    """Cache of the cell-pair integrals J(D) for one geometry and phase."""

    def __init__(self, geom: FilmGeometry, res: ValidatorResolution, phase=(0.0, 0.0),
                 formula: str = "general", threads: int | None = None):
        if formula not in ("general", "parallel"):
            raise ValueError("formula must be 'general' or 'parallel'")
        if formula == "parallel" and geom.parallel_offset is None:
            raise ValueError("the parallel kernel requires f2 = f1 + a")
        self.geom = geom
        self.res = res
        self.formula = formula
        self.threads = threads
        self.surf = _Surfaces(geom, phase, formula)
        self.terms = _terms(formula, geom.parallel_offset)
        self._table: dict[tuple[int, int], np.ndarray] = {}
        self._lock = threading.Lock()

    def get(self, kx: int, ky: int) -> dict:
        """J(D) for all offsets with ``|D1| <= kx`` and ``|D2| <= ky``."""
        want = [(i, j) for i in range(-kx, kx + 1) for j in range(-ky, ky + 1)]
        with self._lock:
            missing = [d for d in want if d not in self._table]
            if missing:
                self._fill(missing)
            return {d: self._table[d] for d in want}

    def _fill(self, offsets):
        near = [d for d in offsets if max(abs(d[0]), abs(d[1])) <= 1]
        close = [d for d in offsets if 1 < max(abs(d[0]), abs(d[1])) <= self.res.close_range]
        far = [d for d in offsets if max(abs(d[0]), abs(d[1])) > self.res.close_range]
        for d in near:
            self._table[d] = self._near(d)
        for group, m in ((close, self.res.n_pair_close), (far, self.res.n_pair)):
            if group:
                self._table.update(zip(group, self._distant(np.array(group, dtype=float), m)))

    # |D|_inf >= 2: Gauss rules on both cells

    def _distant(self, offsets, m):
        t, w = _gl(m)
        xi = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
        wx = np.outer(w, w).ravel()
        s = self.surf(xi)
        sx = {k: v[None, :, None] for k, v in s.items() if v.ndim == 1}
        sy = {k: v[None, None, :] for k, v in s.items() if v.ndim == 1}
        rel = xi[None, None, :, :] - xi[None, :, None, :]
        chunk = max(1, 400_000 // (m ** 4))
        blocks = [offsets[i:i + chunk] for i in range(0, len(offsets), chunk)]

        def work(dblock):
            z = rel + dblock[:, None, None, :]
            r2 = np.einsum("...a,...a->...", z, z)
            out = np.zeros((len(dblock), 3, 3))
            for c, left, right, kern in self.terms:
                k = kern(r2, sx, sy)
                out += c * np.einsum("ia,dij,jb->dab", s[left] * wx[:, None], k,
                                     s[right] * wx[:, None])
            return out

        return list(np.concatenate(ordered_map(work, blocks, self.threads)))

    # |D|_inf <= 1: relative coordinate z = eta + D - xi

    def _near(self, d):
        d = np.asarray(d, dtype=float)
        total = np.zeros((3, 3))
        for c in ((d[0] - 1, d[1] - 1), (d[0] - 1, d[1]), (d[0], d[1] - 1), (d[0], d[1])):
            c = np.asarray(c)
            if np.all(np.isin(c, (-1.0, 0.0))):
                z, wz = self._polar_square(c)
            else:
                t, w = _gl(self.res.n_rel)
                z = c + np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
                wz = np.outer(w, w).ravel()
            total += self._inner(d, z, wz)
        return total

    def _polar_square(self, corner):
        """Polar rule on the unit square ``corner + [0,1]^2`` centred at z = 0."""
        sign = np.where(corner < 0, -1.0, 1.0)
        n = self.res.n_rel
        pts, wts = [], []
        for lo, hi, edge in ((0.0, np.pi / 4, np.cos), (np.pi / 4, np.pi / 2, np.sin)):
            th, wth = _gl(n, lo, hi)
            for k in range(n):
                rho_max = 1.0 / edge(th[k])
                rho, wr = self._radial(rho_max)
                u = np.stack([rho * np.cos(th[k]), rho * np.sin(th[k])], axis=-1)
                pts.append(u * sign)
                wts.append(wth[k] * wr * rho)
        return np.concatenate(pts), np.concatenate(wts)

    def _radial(self, rho_max):
        # geometric panels toward the origin, where rho * G(rho) has
        # complex singularities at a distance of order 0.1
        edges = [0.0] + [g for g in self.res.radial_edges if g < rho_max] + [rho_max]
        parts = [_gl(self.res.n_rel, a, b) for a, b in zip(edges[:-1], edges[1:])]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    def _inner(self, d, z, wz):
        """Sum over z nodes of the inner integral over admissible xi."""
        rel = z - d                      # eta - xi
        lo = np.maximum(0.0, -rel)
        hi = np.minimum(1.0, 1.0 - rel)
        t, w = _composite_gl(self.res.n_inner, self.res.inner_panels)
        # xi nodes per z: (nz, n, n, 2)
        x1 = lo[:, 0:1] + (hi - lo)[:, 0:1] * t[None, :]
        x2 = lo[:, 1:2] + (hi - lo)[:, 1:2] * t[None, :]
        xi = np.stack(np.broadcast_arrays(x1[:, :, None], x2[:, None, :]), axis=-1)
        wxi = ((hi - lo)[:, 0:1, None] * (hi - lo)[:, 1:2].reshape(-1, 1, 1)
               * np.outer(w, w)[None])
        eta = xi + rel[:, None, None, :]
        sx = self.surf(xi)
        sy = self.surf(eta)
        r2 = np.einsum("za,za->z", z, z)[:, None, None]
        out = np.zeros((3, 3))
        weight = wz[:, None, None] * wxi
        for c, left, right, kern in self.terms:
            k = kern(r2, sx, sy) * weight
            out += c * np.einsum("zpqa,zpqb,zpq->ab", sx[left], sy[right], k)
        return out


@dataclass(frozen=True)
class EpsRecord:
    eps: float
    I_eps: float
    target: float
    abs_error: float
    rel_error: float
    resolution_insufficient: bool = False


@dataclass(frozen=True)
class EpsSweep:
    """Finite-epsilon energies of a constant magnetization against the limit.

    ``extrapolated`` fits ``I(eps) = A + eps (alpha log eps + beta)`` through
    the last three records (the first-order fit through the last two when
    fewer are available); ``extrapolated_first_order`` is always the
    first-order fit ``A + beta eps`` through the last two records.
    """

    m: np.ndarray
    eps_list: tuple
    records: tuple
    target: float
    extrapolated: float
    extrapolated_first_order: float
    extrapolation_model: str
    resolution: dict = field(default_factory=dict)


_TABLES: "OrderedDict[tuple, PairTable]" = OrderedDict()
_TABLES_LOCK = threading.Lock()
_TABLES_MAX = 32


def clear_cache() -> None:
    """Drop the shared pair tables, for instance before timing a sweep."""
    with _TABLES_LOCK:
        _TABLES.clear()


def _profile_key(p):
    grid = None if p.grid is None else hashlib.sha1(np.ascontiguousarray(p.grid).tobytes()).hexdigest()
    return (p.kind, p.value, p.amplitude, p.offset, grid)


def _table(geom, res, phase, formula, threads):
    """Pair table for the profiles of ``geom``, shared between equal geometries."""
    key = (_profile_key(geom.f1), _profile_key(geom.f2), res,
           tuple(np.round(phase, 15)), formula)
    with _TABLES_LOCK:
        table = _TABLES.get(key)
        if table is None:
            table = PairTable(geom, res, phase, formula, threads)
            _TABLES[key] = table
            if len(_TABLES) > _TABLES_MAX:
                _TABLES.popitem(last=False)
        else:
            _TABLES.move_to_end(key)
    table.threads = threads
    return table


def _cells(length, eps):
    n = length / eps
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise ValueError(f"side length {length} is not an integer multiple of eps = {eps}")
    return k


def _unit(m):
    m = np.asarray(m, dtype=float)
    if m.shape != (3,) or abs(np.linalg.norm(m) - 1.0) > 1e-12:
        raise ValueError("m must be a unit 3-vector")
    return m


def interaction_matrix(geom: FilmGeometry, eps: float, res: ValidatorResolution | None = None,
                       formula: str = "general", threads: int | None = None) -> np.ndarray:
    """3x3 matrix ``B`` with ``I_eps(m) = m . B m``."""
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    res = res or ValidatorResolution()
    x0, x1, y0, y1 = geom.omega
    nx, ny = _cells(x1 - x0, eps), _cells(y1 - y0, eps)
    phase = (math.fmod(x0 / eps, 1.0), math.fmod(y0 / eps, 1.0))
    table = _table(geom, res, phase, formula, threads).get(nx - 1, ny - 1)
    total = np.zeros((3, 3))
    for (i, j), val in table.items():
        total += (nx - abs(i)) * (ny - abs(j)) * val
    return eps * eps * total


def resolution_insufficient(geom: FilmGeometry, eps: float) -> bool:
    """True when the near-diagonal patch (radius 2 eps) exceeds diam(omega)/4."""
    return 2 * eps > geom.diameter / 4


def finite_eps_energy(geom: FilmGeometry, m, eps: float, res: ValidatorResolution | None = None,
                      formula: str = "general", threads: int | None = None) -> float:
    """Boundary interaction energy ``I_eps(m)`` of a constant magnetization."""
    m = _unit(m)
    b = interaction_matrix(geom, eps, res, formula, threads)
    return float(m @ b @ m)


def _extrapolate(eps, vals):
    e1, e2 = eps[-2], eps[-1]
    first = (e1 * vals[-1] - e2 * vals[-2]) / (e1 - e2)
    if len(eps) < 3:
        return first, first, "first_order"
    e = np.asarray(eps[-3:])
    a = np.stack([np.ones(3), e * np.log(e), e], axis=1)
    coef = np.linalg.solve(a, np.asarray(vals[-3:]))
    return float(coef[0]), float(first), "eps_log_eps"


def sweep(geom: FilmGeometry, m, eps_list, res: ValidatorResolution | None = None,
          anisotropy=None, formula: str = "general", threads: int | None = None) -> EpsSweep:
    """Energies along decreasing ``eps_list`` against ``|omega| A.sym m . m``.

    ``anisotropy`` is the homogenized tensor used for the target; it is
    computed (parallel formula when available) if not given.
    """
    m = _unit(m)
    eps_list = tuple(float(e) for e in eps_list)
    if len(eps_list) < 1 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    res = res or ValidatorResolution()
    if anisotropy is None:
        from .anisotropy import compute
        anisotropy = compute(geom, threads=threads)
    target = geom.area * float(m @ anisotropy.sym @ m)
    records = []
    for eps in eps_list:
        val = finite_eps_energy(geom, m, eps, res, formula, threads)
        err = abs(val - target)
        rel = err / abs(target) if target != 0 else (0.0 if err == 0 else math.inf)
        records.append(EpsRecord(eps, val, target, err, rel, resolution_insufficient(geom, eps)))
    if len(records) >= 2:
        extra, first, model = _extrapolate(eps_list, [r.I_eps for r in records])
    else:
        extra = first = records[-1].I_eps
        model = "none"
    return EpsSweep(m=m, eps_list=eps_list, records=tuple(records), target=target,
                    extrapolated=extra, extrapolated_first_order=first,
                    extrapolation_model=model, resolution=asdict(res))
