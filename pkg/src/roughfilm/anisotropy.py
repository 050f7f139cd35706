"""Homogenized shape anisotropy of a rough film.

The anisotropy matrix is a cell average over x in Q of plane integrals in z
of kernels that couple the surface normals at x and at x + z.  The plane
integral is split smoothly into three regions that are summed with the
same cell rule:

near field
    polar nodes around z = 0 (the area element removes the 1/|z|
    singularity) for every cell node x, weighted by a cutoff ``chi(|z|)``;
far field
    Gauss-Legendre pairs (xi, eta) in Q x Q for each lattice offset D, so
    that z = eta - xi + D, weighted by ``(1 - chi) * taper``;
tail
    beyond the taper radius the profile phases at x and x + z decorrelate
    and the integrand is replaced by its average over independent x and y.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ._parallel import ordered_reduce, ordered_sum
from .profiles import FilmGeometry
from .quadrature import (CellRule, NonFiniteError, PlaneRule, gauss_legendre, inv_sqrt_diff,
                         smooth_step)

FOUR_PI = 4.0 * np.pi
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SplitRule:
    """How the plane integral is shared between near and far field.

    The near field covers ``|z| < r_split + split_width``; the far field
    uses ``n_far`` Gauss points per axis and cell (``n_far_close`` for
    offsets within ``close_range`` of the origin).  ``n_tail`` radial
    points resolve the tail.
    """

    r_split: float = 1.5
    split_width: float = 2.0
    n_far: int = 8
    n_far_close: int = 12
    close_range: int = 5
    n_tail: int = 32

    def chi(self, r):
        return 1.0 - smooth_step((np.asarray(r) - self.r_split) / self.split_width)

    @property
    def r_near(self) -> float:
        return self.r_split + self.split_width

    def doubled(self) -> "SplitRule":
        return SplitRule(self.r_split, self.split_width, 2 * self.n_far, 2 * self.n_far_close,
                         self.close_range, 2 * self.n_tail)


@dataclass(frozen=True)
class AnisotropyTensor:
    """Homogenized anisotropy matrix with its per-term breakdown.

    ``terms`` holds the four contributions of the general formula (the
    in-plane fourth term embedded with zero third row and column); it is
    empty when the parallel formula was used.
    """

    total: np.ndarray
    terms: tuple = ()
    formula_used: str = "general"
    rule_parameters: dict = field(default_factory=dict)

    @property
    def sym(self) -> np.ndarray:
        return 0.5 * (self.total + self.total.T)

    def quadratic_form(self, m) -> float:
        m = np.asarray(m, dtype=float)
        return float(m @ self.sym @ m)

    @classmethod
    def from_matrix(cls, a) -> "AnisotropyTensor":
        """Wrap a given 3x3 matrix, for instance a known closed form."""
        return cls(total=np.array(a, dtype=float), formula_used="given")


@dataclass(frozen=True)
class EasyAxis:
    axis: np.ndarray
    value: float
    spectrum: np.ndarray
    degenerate: bool


# sampling of the profile data needed by the kernels

def _normals(grad):
    n = np.empty(grad.shape[:-1] + (3,))
    n[..., :2] = -grad
    n[..., 2] = 1.0
    return n


def _sample(geom: FilmGeometry, pts, parallel: bool):
    if parallel:
        f, g = geom.f1.value_and_grad(pts)
        n = _normals(g)
        return {"f": f}, {"n": n}
    f1, g1 = geom.f1.value_and_grad(pts)
    f2, g2 = geom.f2.value_and_grad(pts)
    return {"f1": f1, "f2": f2, "g": f2 - f1}, {"n1": _normals(g1), "n2": _normals(g2)}


def _expand(sample, axes):
    return {k: np.expand_dims(v, axes) for k, v in sample.items()}


# kernels: (name, factor, left normal, right normal, scalar kernel)

def _general_terms():
    return (
        ("term1", 1.0 / FOUR_PI, "n1", "n1",
         lambda r2, sx, sy: inv_sqrt_diff(r2, (sy["f1"] - sx["f1"]) ** 2, 1.0)),
        ("term2", 1.0 / FOUR_PI, "n2", "n2",
         lambda r2, sx, sy: inv_sqrt_diff(r2, (sy["f2"] - sx["f2"]) ** 2, 1.0)),
        ("term3", -1.0 / TWO_PI, "n1", "n2",
         lambda r2, sx, sy: inv_sqrt_diff(r2, (sy["f2"] - sx["f1"]) ** 2, 1.0)),
    )


def _parallel_terms(a):
    def kern(r2, sx, sy):
        d = sy["f"] - sx["f"]
        return inv_sqrt_diff(r2, d * d, (a + d) ** 2)

    return (("parallel", 1.0 / TWO_PI, "n", "n", kern),)


def _dipole_blocks(z, r2):
    """Scalar part and rank-one part of the in-plane dipole kernel."""
    s = r2 + 1.0
    k1 = s ** -1.5
    k2 = 3.0 * s ** -2.5
    zz = z[..., :, None] * z[..., None, :]
    return k1, k2[..., None, None] * zz


class _Assembler:
    def __init__(self, geom, cell, plane, split, parallel, threads):
        self.geom = geom
        self.cell = cell
        self.plane = plane
        self.split = split
        self.parallel = parallel
        self.threads = threads
        if parallel:
            self.terms = _parallel_terms(float(geom.parallel_offset))
            self.names = ("parallel",)
        else:
            self.terms = _general_terms()
            self.names = ("term1", "term2", "term3", "term4")

    def _zero(self):
        return np.zeros((len(self.names), 3, 3))

    # near field

    def near(self):
        z, r, w = self.plane.polar_nodes(self.split.r_near)
        wz = w * self.split.chi(r)
        r2 = r * r
        dip = None if self.parallel else _dipole_blocks(z, r2)
        nodes = self.cell.nodes
        weights = self.cell.weights
        chunk = max(1, 400_000 // len(z))
        blocks = [np.arange(i, min(i + chunk, len(nodes))) for i in range(0, len(nodes), chunk)]

        def work(idx):
            x = nodes[idx]
            y = x[:, None, :] + z[None, :, :]
            sx, nx = _sample(self.geom, x, self.parallel)
            sy, ny = _sample(self.geom, y, self.parallel)
            sx = _expand(sx, 1)
            out = self._zero()
            wx = weights[idx]
            for t, (_, c, left, right, kern) in enumerate(self.terms):
                k = kern(r2[None, :], sx, sy) * wz[None, :]
                out[t] = c * np.einsum("ia,ipb,ip->ab", nx[left] * wx[:, None], ny[right], k)
            if dip is not None:
                gx = sx["g"][:, 0] * wx
                k1, kzz = dip
                s1 = np.einsum("i,ip,p->", gx, sy["g"], wz * k1)
                szz = np.einsum("i,ip,pab->ab", gx, sy["g"], wz[:, None, None] * kzz)
                out[3, :2, :2] = (s1 * np.eye(2) - szz) / FOUR_PI
            return out

        return ordered_reduce(work, blocks, self.threads)

    # far field

    def _offsets(self):
        reach = int(np.ceil(self.plane.R_cut)) + 1
        k = np.arange(-reach, reach + 1)
        d = np.stack(np.meshgrid(k, k, indexing="ij"), axis=-1).reshape(-1, 2)
        gap = np.maximum(np.abs(d) - 1, 0)
        dmin = np.hypot(gap[:, 0], gap[:, 1])
        dmax = np.hypot(np.abs(d[:, 0]) + 1, np.abs(d[:, 1]) + 1)
        keep = (dmax > self.split.r_split) & (dmin < self.plane.R_cut)
        d = d[keep]
        close = np.max(np.abs(d), axis=1) <= self.split.close_range
        return d[close], d[~close]

    def far(self):
        close, distant = self._offsets()
        parts = []
        for offsets, m in ((close, self.split.n_far_close), (distant, self.split.n_far)):
            if len(offsets):
                parts.append(self._far_block(offsets.astype(float), m))
        return ordered_sum(parts)

    def _far_block(self, offsets, m):
        t, wt = gauss_legendre(m)
        xi = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
        wxi = np.outer(wt, wt).ravel()
        s, nrm = _sample(self.geom, xi, self.parallel)
        sx = _expand(s, (0, 2))
        sy = _expand(s, (0, 1))
        rel = xi[None, None, :, :] - xi[None, :, None, :]
        chunk = max(1, 200_000 // (m ** 4))
        blocks = [offsets[i:i + chunk] for i in range(0, len(offsets), chunk)]
        general = not self.parallel

        def work(dblock):
            z = rel + dblock[:, None, None, :]
            r2 = np.einsum("...a,...a->...", z, z)
            r = np.sqrt(r2)
            wgt = (1.0 - self.split.chi(r)) * self.plane.taper(r)
            ks = [np.sum(wgt * kern(r2, sx, sy), axis=0) for (_, _, _, _, kern) in self.terms]
            if general:
                k1, kzz = _dipole_blocks(z, r2)
                ks.append(np.sum(wgt * k1, axis=0))
                ks.append(np.einsum("dij,dijab->ijab", wgt, kzz))
            return ks

        sums = ordered_reduce(work, blocks, self.threads)
        out = self._zero()
        for t, (_, c, left, right, _) in enumerate(self.terms):
            out[t] = c * (nrm[left] * wxi[:, None]).T @ sums[t] @ (nrm[right] * wxi[:, None])
        if general:
            gw = s["g"] * wxi
            s1 = gw @ sums[3] @ gw
            szz = np.einsum("i,j,ijab->ab", gw, gw, sums[4])
            out[3, :2, :2] = (s1 * np.eye(2) - szz) / FOUR_PI
        return out

    # tail

    def tail(self):
        plane = self.plane
        r, wr = gauss_legendre(self.split.n_tail, plane.R_taper, plane.R_cut)
        rho = TWO_PI * r * wr * (1.0 - plane.taper(r))
        # beyond R_cut: r = R_cut / u with u in (0, 1]
        u, wu = gauss_legendre(self.split.n_tail // 2)
        r_out = plane.R_cut / u
        rho_out = TWO_PI * r_out * wu * plane.R_cut / (u * u)
        r = np.concatenate([r, r_out])
        rho = np.concatenate([rho, rho_out])

        cell = self.cell
        s, nrm = _sample(self.geom, cell.nodes, self.parallel)
        w = cell.weights
        sx = _expand(s, 1)
        sy = _expand(s, 0)
        out = self._zero()
        for t, (_, c, left, right, kern) in enumerate(self.terms):
            acc = ordered_sum(rho[q] * kern(r[q] ** 2, sx, sy) for q in range(len(r)))
            out[t] = c * (nrm[left] * w[:, None]).T @ acc @ (nrm[right] * w[:, None])
        if not self.parallel:
            gbar = float(w @ s["g"])
            s2 = r * r + 1.0
            radial = np.sum(rho * (s2 ** -1.5 - 1.5 * r * r * s2 ** -2.5))
            out[3, :2, :2] = gbar * gbar * radial * np.eye(2) / FOUR_PI
        return out

    def run(self):
        parts = self.near() + self.far() + self.tail()
        if not np.all(np.isfinite(parts)):
            raise NonFiniteError("anisotropy quadrature produced a non-finite value")
        return parts


def _rule_parameters(cell, plane, split):
    return {"cell_rule": asdict(cell), "plane_rule": asdict(plane), "split_rule": asdict(split)}


def compute_general(geom: FilmGeometry, cell: CellRule | None = None,
                    plane: PlaneRule | None = None, split: SplitRule | None = None,
                    threads: int | None = None) -> AnisotropyTensor:
    """Anisotropy matrix from the general four-term formula."""
    cell = cell or CellRule()
    plane = plane or PlaneRule()
    split = split or SplitRule()
    parts = _Assembler(geom, cell, plane, split, False, threads).run()
    terms = tuple(parts[i].copy() for i in range(4))
    return AnisotropyTensor(total=parts.sum(axis=0), terms=terms, formula_used="general",
                            rule_parameters=_rule_parameters(cell, plane, split))


def compute_parallel(geom: FilmGeometry, cell: CellRule | None = None,
                     plane: PlaneRule | None = None, split: SplitRule | None = None,
                     threads: int | None = None) -> AnisotropyTensor:
    """Anisotropy matrix for parallel roughness ``f2 = f1 + a``."""
    if geom.parallel_offset is None:
        raise ValueError("the parallel formula requires f2 = f1 + a (no parallel_offset)")
    cell = cell or CellRule()
    plane = plane or PlaneRule()
    split = split or SplitRule()
    parts = _Assembler(geom, cell, plane, split, True, threads).run()
    return AnisotropyTensor(total=parts[0].copy(), terms=(), formula_used="parallel",
                            rule_parameters=_rule_parameters(cell, plane, split))


def compute(geom: FilmGeometry, parallel: bool | None = None, **kw) -> AnisotropyTensor:
    """Use the parallel formula when available unless told otherwise."""
    if parallel is None:
        parallel = geom.parallel_offset is not None
    return compute_parallel(geom, **kw) if parallel else compute_general(geom, **kw)


DEGENERACY_GAP = 1e-8


def _pick_in_subspace(basis):
    """Deterministic unit vector in the span of the columns of ``basis``."""
    for e in np.eye(3)[[2, 0, 1]]:
        v = basis @ (basis.T @ e)
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            return v / norm
    return basis[:, 0]


def _fix_sign(v):
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if len(nz) and v[nz[0]] < 0:
        v = -v
    return v


def easy_axis(t) -> EasyAxis:
    """Minimizer of the symmetric quadratic form over the unit sphere.

    Accepts an :class:`AnisotropyTensor` or a 3x3 matrix.  When the lowest
    eigenvalue is degenerate the axis is chosen inside the eigenspace: the
    direction with the largest third component, then the largest first
    component, with a positive leading entry.
    """
    a = t.sym if isinstance(t, AnisotropyTensor) else 0.5 * (np.asarray(t) + np.asarray(t).T)
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("anisotropy matrix is not finite")
    vals, vecs = np.linalg.eigh(a)
    degenerate = bool(vals[1] - vals[0] < DEGENERACY_GAP)
    if degenerate:
        low = vals - vals[0] < DEGENERACY_GAP
        axis = _pick_in_subspace(vecs[:, low])
    else:
        axis = vecs[:, 0]
    axis = _fix_sign(axis / np.linalg.norm(axis))
    return EasyAxis(axis=axis, value=float(vals[0]), spectrum=vals, degenerate=degenerate)
