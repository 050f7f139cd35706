"""Acceptance checks bundled as one reproducible report.

Each check returns a dictionary with its name, a pass flag and the
measured quantities.  Timings are deliberately left out so that the
report is byte-identical between runs and thread counts.
"""
from __future__ import annotations

import numpy as np

from .anisotropy import compute_general, compute_parallel
from .cell_solver import build_mesh, exchange_tensor, solve_cell
from .gamma_validator import sweep
from .profiles import FilmGeometry, Profile, flat_slab, parallel_film
from .quadrature import kernel_mass

SEED = 20240611


def benchmark_geometries() -> dict[str, FilmGeometry]:
    """Flat slab plus sine roughness with gaps 0.5 and 1."""
    out = {"flat": flat_slab()}
    for kind in ("sine2_1d", "sine2_2d"):
        for a in (0.5, 1.0):
            out[f"{kind}_a{a:g}"] = parallel_film(Profile(kind), a)
    return out


X2_INDEPENDENT = ("flat", "sine2_1d_a0.5", "sine2_1d_a1")
X1_X2_SYMMETRIC = ("flat", "sine2_2d_a0.5", "sine2_2d_a1")


class _Cache:
    """Anisotropy results shared between checks."""

    def __init__(self, threads):
        self.threads = threads
        self.geoms = benchmark_geometries()
        self._general = {}
        self._parallel = {}

    def general(self, name):
        if name not in self._general:
            self._general[name] = compute_general(self.geoms[name], threads=self.threads)
        return self._general[name]

    def parallel(self, name):
        if name not in self._parallel:
            self._parallel[name] = compute_parallel(self.geoms[name], threads=self.threads)
        return self._parallel[name]


def _result(name, passed, **details):
    return {"name": name, "passed": bool(passed), "details": details}


def check_flat_anisotropy(cache):
    a = cache.general("flat")
    e3 = np.outer([0, 0, 1.0], [0, 0, 1.0])
    err = float(np.linalg.norm(a.total - e3))
    half = 0.5 * e3
    term_err = [float(np.abs(a.terms[0] - half).max()), float(np.abs(a.terms[1] - half).max()),
                float(np.abs(a.terms[2]).max()), float(np.abs(a.terms[3]).max())]
    return _result("flat_film_anisotropy", err < 1e-3, frobenius_error=err,
                   term_errors=term_err, tolerance=1e-3)


def check_parallel_vs_general(cache):
    diffs = {}
    for name in ("sine2_1d_a0.5", "sine2_1d_a1", "sine2_2d_a0.5", "sine2_2d_a1"):
        diffs[name] = float(np.abs(cache.parallel(name).total - cache.general(name).total).max())
    return _result("parallel_general_agreement", max(diffs.values()) < 2e-3,
                   max_entry_difference=diffs, tolerance=2e-3)


def check_kernel_mass():
    cases = []
    ok = True
    for eps in (1.0, 0.1, 0.01):
        for L in (1.0, np.pi):
            val = kernel_mass(eps, L)
            exact = 2 * np.pi * eps * L
            rel = abs(val - exact) / exact
            bound = np.pi ** 2 * eps * L
            ok &= rel < 1e-3 and val <= bound
            cases.append({"eps": eps, "L": float(L), "value": val, "relative_error": rel,
                          "bound": bound})
    return _result("kernel_mass_identity", ok, cases=cases, tolerance=1e-3)


def check_slab_exactness():
    rng = np.random.default_rng(SEED)
    geom = FilmGeometry(Profile.constant(-0.3), Profile.constant(0.45))
    mesh = build_mesh(geom)
    worst_rel, worst_phi = 0.0, 0.0
    for _ in range(10):
        xi = rng.normal(size=(3, 2))
        sol = solve_cell(geom, mesh, xi)
        exact = float(np.sum(xi * xi)) * 0.75
        worst_rel = max(worst_rel, abs(sol.energy - exact) / exact)
        worst_phi = max(worst_phi, float(np.abs(sol.phi).max()))
    return _result("slab_cell_exactness", worst_rel <= 1e-10 and worst_phi == 0.0,
                   max_relative_error=worst_rel, max_corrector=worst_phi, tolerance=1e-10)


def check_homogeneity_reconstruction(cache):
    rng = np.random.default_rng(SEED + 1)
    geom = cache.geoms["sine2_1d_a1"]
    mesh = build_mesh(geom)
    G = exchange_tensor(geom, mesh)
    worst_hom, worst_rec = 0.0, 0.0
    for _ in range(10):
        xi = rng.normal(size=(3, 2))
        lam = float(rng.uniform(0.1, 10.0))
        e = solve_cell(geom, mesh, xi).energy
        e_lam = solve_cell(geom, mesh, lam * xi).energy
        worst_hom = max(worst_hom, abs(e_lam - lam * lam * e) / abs(lam * lam * e))
        rec = G.energy_density(xi)
        worst_rec = max(worst_rec, abs(rec - e) / (1 + float(np.sum(xi * xi))))
    return _result("homogeneity_and_reconstruction", worst_hom <= 1e-8 and worst_rec <= 1e-6,
                   max_homogeneity_error=worst_hom, max_reconstruction_error=worst_rec,
                   G=G.G.tolist(), tolerances=[1e-8, 1e-6])


def check_null_direction(cache):
    rng = np.random.default_rng(SEED + 2)
    geom = cache.geoms["sine2_2d_a0.5"]
    mesh = build_mesh(geom)
    worst = 0.0
    for _ in range(5):
        s = rng.normal(size=3)
        s /= np.linalg.norm(s)
        xi = rng.normal(size=(3, 2))
        xi -= np.outer(s, s @ xi)
        sol = solve_cell(geom, mesh, xi)
        worst = max(worst, float(np.abs(sol.phi @ s).max()))
    return _result("null_direction", worst <= 1e-8, max_component=worst, tolerance=1e-8)


def check_gamma_convergence(cache):
    flat = sweep(cache.geoms["flat"], [0, 0, 1.0], [1 / 4, 1 / 8, 1 / 16, 1 / 32],
                 anisotropy=cache.general("flat"), threads=cache.threads)
    err = [r.abs_error for r in flat.records]
    flat_ok = all(b < a for a, b in zip(err, err[1:]))
    extra_rel = abs(flat.extrapolated - 1.0)
    details = {"flat": {"abs_errors": err, "extrapolated": flat.extrapolated,
                        "extrapolated_first_order": flat.extrapolated_first_order,
                        "extrapolation_model": flat.extrapolation_model,
                        "extrapolated_relative_error": extra_rel}}
    ok = flat_ok and extra_rel < 0.02
    target = cache.parallel("sine2_1d_a0.5")
    for label, m in (("e1", [1.0, 0, 0]), ("e3", [0, 0, 1.0])):
        s = sweep(cache.geoms["sine2_1d_a0.5"], m, [1 / 8, 1 / 16, 1 / 32], anisotropy=target,
                  threads=cache.threads)
        e = [r.abs_error for r in s.records]
        ok &= all(b < a for a, b in zip(e, e[1:]))
        details[f"sine2_1d_a0.5_{label}"] = {"target": s.target, "I_eps": [r.I_eps for r in s.records],
                                             "abs_errors": e, "extrapolated": s.extrapolated}
    return _result("gamma_convergence", ok, **details)


def check_structural_invariants(cache):
    ok = True
    details = {}
    for name in cache.geoms:
        a = cache.general(name)
        d = {"min_eigenvalue": float(np.linalg.eigvalsh(a.sym)[0]),
             "term_asymmetry": [float(np.abs(t - t.T).max()) for t in a.terms[:2]]}
        ok &= d["min_eigenvalue"] >= -1e-6 and max(d["term_asymmetry"]) <= 2e-3
        if name in X2_INDEPENDENT:
            d["mixed_entries"] = float(max(abs(a.total[0, 1]), abs(a.total[1, 0]),
                                           abs(a.total[1, 2]), abs(a.total[2, 1])))
            ok &= d["mixed_entries"] < 1e-3
        if name in X1_X2_SYMMETRIC:
            d["diagonal_mismatch"] = float(abs(a.total[0, 0] - a.total[1, 1]))
            ok &= d["diagonal_mismatch"] <= 2e-3
        details[name] = d
    return _result("structural_invariants", ok, **details)


def run_selftest(threads: int | None = None) -> dict:
    """Run all checks; the report's ``passed`` is true when every check passes."""
    cache = _Cache(threads)
    checks = [
        check_flat_anisotropy(cache),
        check_parallel_vs_general(cache),
        check_kernel_mass(),
        check_slab_exactness(),
        check_homogeneity_reconstruction(cache),
        check_null_direction(cache),
        check_gamma_convergence(cache),
        check_structural_invariants(cache),
    ]
    return {"checks": checks, "passed": all(c["passed"] for c in checks)}
