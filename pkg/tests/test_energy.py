import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from roughfilm.anisotropy import AnisotropyTensor
from roughfilm.cell_solver import ExchangeTensor
from roughfilm.energy import (EnergyParams, MagnetizationField, constant_minimizer, energy_terms,
                              evaluate_E0, field_gradient)
from roughfilm.profiles import flat_slab, parallel_film, Profile

FLAT_A = AnisotropyTensor.from_matrix(np.diag([0.0, 0.0, 1.0]))
ID_G = ExchangeTensor.from_matrix(np.eye(2))


def rotating_field(n=12, turns=1.5):
    def fn(p):
        t = 2 * np.pi * turns * p[..., 0]
        return np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=-1)
    return MagnetizationField.from_function(fn, flat_slab(), n)


def wavy_field(geom, n=10):
    def fn(p):
        a = 1.3 * p[..., 0] + 0.4 * np.sin(2 * np.pi * p[..., 1])
        b = 0.7 * p[..., 1] ** 2 + 0.2
        return np.stack([np.sin(b) * np.cos(a), np.sin(b) * np.sin(a), np.cos(b)], axis=-1)
    return MagnetizationField.from_function(fn, geom, n)


def loop_dirichlet(grid, h):
    """Sum of h^2 |grad m|^2 with differences written out node by node."""
    nx, ny, _ = grid.shape
    total = 0.0
    for i in range(nx):
        for j in range(ny):
            for axis, (k, n) in enumerate(((i, nx), (j, ny))):
                lo, hi = max(k - 1, 0), min(k + 1, n - 1)
                a = grid[lo, j] if axis == 0 else grid[i, lo]
                b = grid[hi, j] if axis == 0 else grid[i, hi]
                d = (b - a) / ((hi - lo) * h)
                total += h * h * float(d @ d)
    return total


def test_constant_field_is_pure_anisotropy(rng):
    geom = flat_slab(omega=(0.0, 2.0, 0.0, 1.0))
    m = rng.normal(size=(3, 3))
    a = AnisotropyTensor.from_matrix(m)
    params = EnergyParams(0.7, geom)
    for _ in range(5):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        field = MagnetizationField.constant(v, geom, 8)
        rep = energy_terms(field, ID_G, a, params)
        assert rep.exchange_term == 0.0
        assert rep.total == pytest.approx(geom.area * (v @ a.sym @ v), abs=1e-12)


def test_flat_examples():
    geom = flat_slab()
    params = EnergyParams(1.0, geom)
    assert evaluate_E0(MagnetizationField.constant([0, 0, 1], geom), ID_G, FLAT_A, params) == pytest.approx(1.0, abs=1e-12)
    assert evaluate_E0(MagnetizationField.constant([1, 1, 0], geom), ID_G, FLAT_A, params) == 0.0


def test_flat_example_with_computed_tensor(results):
    geom = results.geoms["flat"]
    field = MagnetizationField.constant([0, 0, 1], geom)
    e = evaluate_E0(field, ID_G, results.general("flat"), EnergyParams(1.0, geom))
    assert e == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("d", [1.0, 0.3])
def test_rotating_field_matches_loop_sum(d):
    field = rotating_field()
    rep = energy_terms(field, ID_G, FLAT_A, EnergyParams(d, flat_slab()))
    assert rep.exchange_term == pytest.approx(d ** 2 * loop_dirichlet(field.grid, field.spacing), rel=1e-12)
    assert rep.anisotropy_term == 0.0
    # interior differences of a 1.5-turn rotation approach (3 pi)^2
    assert 0.8 * (3 * np.pi) ** 2 < rep.exchange_term / d ** 2 < (3 * np.pi) ** 2


def test_gradient_stencils():
    field = rotating_field(n=6, turns=0.25)
    g = field_gradient(field)
    assert g.shape == (6, 6, 3, 2)
    assert np.all(g[..., 1] == 0)
    m, h = field.grid, field.spacing
    np.testing.assert_allclose(g[2, 0, :, 0], (m[3, 0] - m[1, 0]) / (2 * h), rtol=1e-14)
    np.testing.assert_allclose(g[0, 0, :, 0], (m[1, 0] - m[0, 0]) / h, rtol=1e-14)
    np.testing.assert_allclose(g[5, 0, :, 0], (m[5, 0] - m[4, 0]) / h, rtol=1e-14)


def test_anisotropic_exchange_tensor_weights_directions():
    field = rotating_field(n=8, turns=0.5)
    params = EnergyParams(1.0, flat_slab())
    e_x = energy_terms(field, ExchangeTensor.from_matrix(np.diag([1.0, 0.0])), FLAT_A, params).exchange_term
    e_y = energy_terms(field, ExchangeTensor.from_matrix(np.diag([0.0, 1.0])), FLAT_A, params).exchange_term
    assert e_x > 0 and e_y == 0.0


def test_lower_bound_by_constant_minimizer(rng):
    geom = parallel_film(Profile.sine2_1d(), 0.5)
    params = EnergyParams(0.5, geom)
    for _ in range(5):
        m = rng.normal(size=(3, 3))
        a = AnisotropyTensor.from_matrix(m @ m.T + rng.normal(size=(3, 3)) * 0.1)
        g = rng.normal(size=(2, 2))
        G = ExchangeTensor.from_matrix(g @ g.T)
        lam = np.linalg.eigvalsh(a.sym)[0]
        for field in (wavy_field(geom), rotating_field()):
            assert evaluate_E0(field, G, a, params) >= geom.area * lam - 1e-8
        axis, value = constant_minimizer(G, a, params)
        assert value == pytest.approx(geom.area * lam, abs=1e-12)
        assert evaluate_E0(MagnetizationField.constant(axis, geom), G, a, params) == pytest.approx(value, abs=1e-12)


def test_rotation_invariance_of_exchange(rng):
    geom = flat_slab()
    field = wavy_field(geom)
    g = rng.normal(size=(2, 2))
    G = ExchangeTensor.from_matrix(g @ g.T + np.eye(2))
    m = rng.normal(size=(3, 3))
    a = AnisotropyTensor.from_matrix(m @ m.T)
    params = EnergyParams(0.8, geom)
    R = Rotation.from_rotvec([0.3, -1.1, 0.7]).as_matrix()
    rotated = MagnetizationField(field.grid @ R.T, field.spacing)
    base = energy_terms(field, G, a, params)
    rot = energy_terms(rotated, G, a, params)
    assert rot.exchange_term == pytest.approx(base.exchange_term, rel=1e-12)
    # m -> R m is the same as keeping m and conjugating A by R
    conj = AnisotropyTensor.from_matrix(R.T @ a.sym @ R)
    assert rot.anisotropy_term == pytest.approx(energy_terms(field, G, conj, params).anisotropy_term, rel=1e-12)


def test_constant_minimizer_examples():
    params = EnergyParams(1.0, flat_slab())
    axis, value = constant_minimizer(ID_G, AnisotropyTensor.from_matrix(np.diag([2.0, 1.0, 3.0])), params)
    assert abs(axis[1]) == pytest.approx(1.0) and value == pytest.approx(1.0)
    axis, value = constant_minimizer(ID_G, AnisotropyTensor.from_matrix(np.diag([0.2, 0.5, 0.1])), params)
    assert abs(axis[2]) == pytest.approx(1.0) and value == pytest.approx(0.1)
    axis, value = constant_minimizer(ID_G, FLAT_A, params)
    assert value == pytest.approx(0.0, abs=1e-15) and abs(axis[2]) < 1e-12


def test_shape_mismatch_rejected():
    field = MagnetizationField.constant([0, 0, 1], flat_slab(), 8)
    wide = flat_slab(omega=(0.0, 2.0, 0.0, 1.0))
    with pytest.raises(ValueError, match="omega"):
        evaluate_E0(field, ID_G, FLAT_A, EnergyParams(1.0, wide))


def test_field_validation():
    grid = np.zeros((4, 4, 3))
    grid[..., 2] = 1.0
    MagnetizationField(grid, 0.25)
    grid[1, 2, 2] = 1 + 1e-9
    with pytest.raises(ValueError, match=r"\(1, 2\)"):
        MagnetizationField(grid, 0.25)
    with pytest.raises(ValueError):
        MagnetizationField(np.ones((4, 4, 2)), 0.25)
    with pytest.raises(ValueError):
        EnergyParams(0.0, flat_slab())


def test_csv_round_trip(tmp_path):
    geom = flat_slab(omega=(0.0, 1.0, 0.0, 0.5))
    field = wavy_field(geom, n=6)
    path = tmp_path / "m.csv"
    with open(path, "w") as fh:
        fh.write("x_index,y_index,m1,m2,m3\n")
        for i in range(6):
            for j in range(3):
                fh.write(f"{i},{j}," + ",".join(repr(float(v)) for v in field.grid[i, j]) + "\n")
    back = MagnetizationField.from_csv(path, geom)
    assert np.array_equal(back.grid, field.grid) and back.spacing == field.spacing
    with open(path, "a") as fh:
        fh.write("0,0,0,0,1\n")
    with pytest.raises(ValueError):
        MagnetizationField.from_csv(path, geom)
