"""Periodic cell problem for the homogenized exchange energy.

The rough cell {f1(y) < y3 < f2(y)} is flattened by the graph map
y3 = f1(y) + t (f2(y) - f1(y)), t in [0, 1].  Each component of the
corrector is discretized with tensor Lagrange elements on the structured
(y1, y2, t) node grid, periodic in y1 and y2, and the quadratic energy

    int |xi_i + grad' phi_i|^2 + |d3 phi_i|^2

is assembled with tensor Gauss points.  Physical derivatives follow from
the chain rule through the map:

    d3 = (1/g) dt,   grad' = grad_y - s dt,   s = (grad f1 + t grad g) / g

with g = f2 - f1.  The three rows of xi decouple; they are solved together
by one preconditioned conjugate gradient run on the stacked system.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .profiles import FilmGeometry, GeometryError

# meshes up to this many nodes get a sparse LU preconditioner
LU_NODE_LIMIT = 40_000


class ConvergenceError(ArithmeticError):
    """Conjugate gradients stopped at the iteration cap."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class MeshParams:
    """Node grid ``n_h x n_h x (n_v + 1)`` and element order.

    Elements span ``order`` node intervals per axis, so ``n_h`` and ``n_v``
    must be multiples of ``order``.  ``preconditioner`` is ``"lu"``,
    ``"jacobi"`` or ``"auto"`` (LU on small meshes).
    """

    n_h: int = 32
    n_v: int = 16
    order: int = 4
    tol: float = 1e-10
    max_iter: int | None = None
    preconditioner: str = "auto"

    def __post_init__(self):
        if not 1 <= self.order <= 4:
            raise ValueError("element order must be between 1 and 4")
        if self.n_h < 2 * self.order or self.n_v < self.order:
            raise ValueError("mesh too coarse for the element order")
        if self.n_h % self.order or self.n_v % self.order:
            raise ValueError("n_h and n_v must be multiples of the element order")
        if self.preconditioner not in ("auto", "lu", "jacobi"):
            raise ValueError("preconditioner must be 'auto', 'lu' or 'jacobi'")

    @property
    def iteration_cap(self) -> int:
        return self.max_iter if self.max_iter is not None else 10 * self.n_h ** 2 * self.n_v

    @property
    def n_nodes(self) -> int:
        return self.n_h * self.n_h * (self.n_v + 1)

    def refined(self) -> "MeshParams":
        return replace(self, n_h=2 * self.n_h, n_v=2 * self.n_v)


def _lagrange_1d(order, s):
    """Equispaced Lagrange basis on [0, 1] and its derivative at points ``s``.

    Returns arrays of shape ``(order + 1, len(s))``.
    """
    nodes = np.linspace(0.0, 1.0, order + 1)
    val = np.ones((order + 1, len(s)))
    der = np.zeros((order + 1, len(s)))
    for j in range(order + 1):
        others = np.delete(nodes, j)
        denom = np.prod(nodes[j] - others)
        factors = s[None, :] - others[:, None]
        val[j] = factors.prod(axis=0) / denom
        for k in range(order):
            der[j] += np.delete(factors, k, axis=0).prod(axis=0) / denom
    return val, der


def _reference_element(order):
    """Tensor Lagrange shape functions and gradients at tensor Gauss points.

    Returns local node offsets ``(n_loc, 3)``, Gauss points and weights on
    the unit cube, values ``(n_gauss, n_loc)`` and gradients
    ``(n_gauss, 3, n_loc)``.
    """
    x, w = np.polynomial.legendre.leggauss(order + 1)
    pts, wts = 0.5 * (x + 1), 0.5 * w
    val, der = _lagrange_1d(order, pts)
    r = range(order + 1)
    loc = np.array([(a, b, c) for a in r for b in r for c in r])
    gidx = loc.copy()
    gauss = pts[gidx]
    gw = wts[gidx].prod(axis=1)
    v = [val[loc[:, d]][:, gidx[:, d]].T for d in range(3)]
    dv = [der[loc[:, d]][:, gidx[:, d]].T for d in range(3)]
    shape = v[0] * v[1] * v[2]
    grads = np.stack([dv[0] * v[1] * v[2], v[0] * dv[1] * v[2], v[0] * v[1] * dv[2]], axis=1)
    return loc, gauss, gw, shape, grads


@dataclass(eq=False)
class CellMesh:
    """Assembled discrete cell problem for one geometry."""

    params: MeshParams
    stiffness: sparse.csr_matrix
    loads: np.ndarray          # (n_nodes, 2): load vectors of unit slopes e1, e2
    load_scale: float          # size of the element loads before assembly
    lumped_mass: np.ndarray    # (n_nodes,) volume weights
    volume: float
    thickness: np.ndarray      # f2 - f1 at the in-plane nodes
    _lu: object = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.params.n_h, self.params.n_h, self.params.n_v + 1)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    def node_coordinates(self, geom: FilmGeometry) -> np.ndarray:
        """Physical node positions, shape ``(n_h, n_h, n_v + 1, 3)``."""
        nh, nv = self.params.n_h, self.params.n_v
        t = np.arange(nh) / nh
        y = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)
        f1 = geom.f1(y)
        s = np.arange(nv + 1) / nv
        out = np.empty(self.shape + (3,))
        out[..., 0] = y[..., 0][..., None]
        out[..., 1] = y[..., 1][..., None]
        out[..., 2] = f1[..., None] + s[None, None, :] * self.thickness[..., None]
        return out

    def uses_lu(self) -> bool:
        pre = self.params.preconditioner
        return pre == "lu" or (pre == "auto" and self.n_nodes <= LU_NODE_LIMIT)

    def preconditioner(self):
        """Function applying the preconditioner to a stacked residual."""
        if not self.uses_lu():
            d = self.stiffness.diagonal()[:, None]
            return lambda r: r / d
        if self._lu is None:
            # pinning node 0 removes the constants from the kernel
            self._lu = splu(self.stiffness[1:, 1:].tocsc(), permc_spec="MMD_AT_PLUS_A")
        lu = self._lu

        def apply(r):
            z = np.zeros_like(r)
            z[1:] = lu.solve(np.ascontiguousarray(r[1:]))
            return z

        return apply


def build_mesh(geom: FilmGeometry, params: MeshParams | None = None) -> CellMesh:
    """Assemble stiffness, loads and volume weights on the mapped cell."""
    params = params or MeshParams()
    nh, nv, p = params.n_h, params.n_v, params.order
    loc, gauss, gw, shape_fn, ref_grads = _reference_element(p)
    n_loc, n_q = len(loc), len(gauss)
    he = p / nh            # element width in y1, y2
    te = p / nv            # element height in t

    t_nodes = np.arange(nh) / nh
    node_pts = np.stack(np.meshgrid(t_nodes, t_nodes, indexing="ij"), axis=-1)
    node_thickness = geom.thickness(node_pts)
    if np.any(node_thickness <= 0):
        raise GeometryError("film thickness must be positive at every mesh node")

    ii, jj, kk = np.meshgrid(np.arange(nh // p), np.arange(nh // p), np.arange(nv // p),
                             indexing="ij")
    ii, jj, kk = ii.ravel(), jj.ravel(), kk.ravel()
    n_el = ii.size
    conn = np.empty((n_el, n_loc), dtype=np.int64)
    for l, (a, b, c) in enumerate(loc):
        conn[:, l] = (((ii * p + a) % nh) * nh + (jj * p + b) % nh) * (nv + 1) + kk * p + c

    n_nodes = params.n_nodes
    gy1 = ref_grads[:, 0, :] / he            # (n_q, n_loc)
    gy2 = ref_grads[:, 1, :] / he
    gt = ref_grads[:, 2, :] / te
    qw = gw * he * he * te

    parts = []
    loads = np.zeros((n_nodes, 2))
    mass = np.zeros(n_nodes)
    vol = 0.0
    scale2 = 0.0
    chunk = max(1, 4_000_000 // (3 * n_q * n_loc))
    for start in range(0, n_el, chunk):
        sl = slice(start, min(start + chunk, n_el))
        y = np.stack([(ii[sl, None] + gauss[None, :, 0]) * he,
                      (jj[sl, None] + gauss[None, :, 1]) * he], axis=-1)
        f1, d1 = geom.f1.value_and_grad(y)
        f2, d2 = geom.f2.value_and_grad(y)
        g = f2 - f1
        if np.any(g <= 0):
            raise GeometryError("film thickness must be positive at every quadrature point")
        t = (kk[sl, None] + gauss[None, :, 2]) * te
        slope = (d1 + t[..., None] * (d2 - d1)) / g[..., None]        # (c, n_q, 2)
        c = y.shape[0]
        b = np.empty((c, n_q, 3, n_loc))
        b[:, :, 0] = gy1[None] - slope[..., 0:1] * gt[None]
        b[:, :, 1] = gy2[None] - slope[..., 1:2] * gt[None]
        b[:, :, 2] = gt[None] / g[..., None]
        dv = g * qw[None, :]                                            # (c, n_q)
        bw = b * dv[:, :, None, None]
        ke = np.matmul(bw.reshape(c, 3 * n_q, n_loc).transpose(0, 2, 1),
                       b.reshape(c, 3 * n_q, n_loc))
        le = bw[:, :, :2, :].sum(axis=1)                                # (c, 2, n_loc)
        me = dv @ shape_fn                                              # (c, n_loc)
        cn = conn[sl]
        rows = np.repeat(cn, n_loc, axis=1).ravel()
        cols = np.tile(cn, (1, n_loc)).ravel()
        parts.append(sparse.coo_matrix((ke.ravel(), (rows, cols)),
                                       shape=(n_nodes, n_nodes)).tocsr())
        flat = cn.ravel()
        for a in (0, 1):
            loads[:, a] += np.bincount(flat, weights=le[:, a, :].ravel(), minlength=n_nodes)
        mass += np.bincount(flat, weights=me.ravel(), minlength=n_nodes)
        vol += float(np.sum(dv))
        scale2 += float(np.sum(le * le))
    # pairwise sums keep the sparse additions cheap
    while len(parts) > 1:
        parts = [parts[i] + parts[i + 1] if i + 1 < len(parts) else parts[i]
                 for i in range(0, len(parts), 2)]
    stiff = parts[0].tocsr()
    stiff.sum_duplicates()
    return CellMesh(params, stiff, loads, float(np.sqrt(scale2)), mass, vol, node_thickness)


@dataclass(frozen=True, eq=False)
class CellSolution:
    """Corrector and energy for a slope matrix ``xi`` (one row per component).

    ``phi`` has shape ``(n_h, n_h, n_v + 1, rows)`` indexed by (y1, y2, t)
    node and component.
    """

    xi: np.ndarray
    phi: np.ndarray
    energy: float
    row_energies: np.ndarray
    residual: float
    iterations: int
    volume: float


def _pcg(stiff, rhs, precondition, tol, cap):
    """Preconditioned CG on the stacked system ``K X = rhs``.

    All columns share the step lengths, so the iterates are the same matrix
    polynomial applied to every column.  Search directions are kept
    orthogonal to the constants, which span the kernel of ``K``.
    """
    def project(v):
        return v - v.mean(axis=0)

    x = np.zeros_like(rhs)
    r = rhs.copy()
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        return x, 0.0, 0
    z = project(precondition(r))
    p = z.copy()
    rz = np.sum(r * z)
    res = 1.0
    for it in range(1, cap + 1):
        kp = stiff @ p
        alpha = rz / np.sum(p * kp)
        x += alpha * p
        r -= alpha * kp
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, res, it
        z = project(precondition(r))
        rz_new = np.sum(r * z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"conjugate gradients did not converge in {cap} iterations "
                           f"(relative residual {res:.3e})", res)


def solve_cell(geom: FilmGeometry, mesh: CellMesh | MeshParams | None = None, xi=None) -> CellSolution:
    """Minimize the discrete cell energy for the slope matrix ``xi``.

    ``xi`` has one row of two slopes per corrector component (3 x 2 for a
    magnetization); a single row may be given as a 2-vector.  ``mesh`` may
    be a prebuilt :class:`CellMesh`, reused across calls, or
    :class:`MeshParams`.
    """
    if not isinstance(mesh, CellMesh):
        mesh = build_mesh(geom, mesh)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[1] != 2:
        raise ValueError("xi must have two columns")
    if not np.all(np.isfinite(xi)):
        raise ValueError("xi must be finite")
    rows = xi.shape[0]
    rhs = -(mesh.loads @ xi.T)
    k = mesh.stiffness
    if np.linalg.norm(rhs) <= 1e-13 * mesh.load_scale * np.linalg.norm(xi):
        # loads cancel exactly after assembly (flat boundaries)
        psi, res, its = np.zeros_like(rhs), 0.0, 0
    else:
        psi, res, its = _pcg(k, rhs, mesh.preconditioner(), mesh.params.tol,
                             mesh.params.iteration_cap)
    m = mesh.lumped_mass
    psi -= (m @ psi) / m.sum()
    kpsi = k @ psi
    row_energy = (np.sum(xi * xi, axis=1) * mesh.volume - 2 * np.sum(rhs * psi, axis=0)
                  + np.sum(psi * kpsi, axis=0))
    phi = psi.reshape(mesh.shape + (rows,))
    return CellSolution(xi=xi, phi=phi, energy=float(row_energy.sum()), row_energies=row_energy,
                        residual=float(res), iterations=its, volume=mesh.volume)


@dataclass(frozen=True, eq=False)
class ExchangeTensor:
    """2x2 tensor ``G`` with ``g_hom(xi) = sum_i G xi_i . xi_i``."""

    G: np.ndarray
    basis_energies: np.ndarray
    residuals: np.ndarray
    volume: float
    mesh: MeshParams | None = None

    def energy_density(self, xi) -> float:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return float(np.einsum("ia,ab,ib->", xi, self.G, xi))

    @classmethod
    def from_matrix(cls, g, volume: float = 1.0) -> "ExchangeTensor":
        g = np.array(g, dtype=float)
        return cls(G=g, basis_energies=np.array([g[0, 0], g[1, 1], g.sum()]),
                   residuals=np.zeros(3), volume=volume)


def exchange_tensor(geom: FilmGeometry, mesh: CellMesh | MeshParams | None = None) -> ExchangeTensor:
    """Assemble ``G`` from the slopes (1, 0), (0, 1) and (1, 1) by polarization."""
    if not isinstance(mesh, CellMesh):
        mesh = build_mesh(geom, mesh)
    sols = [solve_cell(geom, mesh, np.array([v])) for v in ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0))]
    e = np.array([s.energy for s in sols])
    g12 = 0.5 * (e[2] - e[0] - e[1])
    G = np.array([[e[0], g12], [g12, e[1]]])
    return ExchangeTensor(G=G, basis_energies=e, residuals=np.array([s.residual for s in sols]),
                          volume=mesh.volume, mesh=mesh.params)
