import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpminkowski import measures as ms
from lpminkowski.measures import DensityField, MeasureSpec, Subspace
from lpminkowski.spheregrid import make_grid


def uniform(grid):
    return DensityField(grid, np.ones(grid.size), normalized=True)


def test_density_field_validation(circle256):
    with pytest.raises(ValueError):
        DensityField(circle256, -np.ones(256))
    with pytest.raises(ValueError):
        DensityField(circle256, np.ones(10))
    with pytest.raises(ValueError):
        DensityField(circle256, 2 * np.ones(256), normalized=True)
    d, s = DensityField(circle256, 3 * np.ones(256)).normalize()
    assert s == pytest.approx(3.0) and d.normalized
    assert abs(d.mass - 1) <= 1e-12


def test_measure_spec_normalization(circle256):
    mu = MeasureSpec.atoms([[2, 0], [0, 1]], [1.0, 3.0], DensityField(circle256, np.ones(256)))
    assert np.allclose(np.linalg.norm(mu.directions, axis=1), 1)
    assert mu.total_mass == pytest.approx(5.0)
    p, s = mu.normalize()
    assert s == pytest.approx(5.0)
    assert abs(p.total_mass - 1.0) <= 1e-12
    with pytest.raises(ValueError):
        MeasureSpec.atoms([[1, 0]], [-1.0])


def test_subspace_basics():
    L = Subspace.span([1, 1, 0], [2, 2, 0], [0, 0, 1])
    assert L.rank == 2
    assert np.allclose(L.basis @ L.basis.T, np.eye(2))
    comp = L.complement()
    assert np.allclose(np.abs(comp), [[1 / math.sqrt(2), 1 / math.sqrt(2), 0]])
    H = Subspace.hyperplane([0, 0, 1])
    assert np.allclose(H.distance(np.array([[0, 0.6, 0.8]])), 0.8)
    with pytest.raises(ValueError):
        Subspace(np.eye(3))
    with pytest.raises(ValueError):
        Subspace([[1.0, 0.1, 0.0]])


def test_collar_half_example(circle256):
    v = ms.collar_mass(uniform(circle256), Subspace.span([1, 0]), 0.5)
    assert abs(v - 2 / math.pi * math.asin(0.5)) <= 1e-6
    assert abs(v - 1 / 3) <= 1e-6


@pytest.mark.parametrize("res,tol", [(64, 2e-2), (128, 5e-3)])
def test_collar_sphere_uniform(res, tol):
    g = make_grid(2, res)
    U = uniform(g)
    # collar of a plane with width d is a band of area fraction d
    for normal in ([0, 0, 1], [0.6, 0, 0.8]):
        for d in (0.1, 0.3, 0.7):
            v = ms.collar_mass(U, Subspace.hyperplane(normal), d)
            assert abs(v - d) < tol
    # collar of a line: two caps of angular radius asin(d)
    v = ms.collar_mass(U, Subspace.span([0, 0, 1]), 0.5)
    assert abs(v - (1 - math.sqrt(0.75))) < tol


def test_collar_atoms_and_limits(circle256):
    mu = MeasureSpec.atoms([[1, 0], [0.6, 0.8]], [0.5, 0.5])
    L = Subspace.span([1, 0])
    assert ms.collar_mass(mu, L, 0.0) == pytest.approx(0.5)
    assert ms.collar_mass(mu, L, 0.79) == pytest.approx(0.5)
    assert ms.collar_mass(mu, L, 0.81) == pytest.approx(1.0)
    assert ms.collar_mass(uniform(circle256), L, 0.999999) > 0.99
    with pytest.raises(ValueError):
        ms.collar_mass(mu, L, 1.0)
    with pytest.raises(ValueError):
        ms.collar_mass(mu, L, 0.1, power=2.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.95), st.floats(0.0, 0.95), st.floats(0, math.pi))
def test_collar_monotone_in_delta(d1, d2, ang):
    g = make_grid(1, 128)
    f = DensityField(g, ms.builtin_density("bumps:3", g))
    L = Subspace.span([math.cos(ang), math.sin(ang)])
    lo, hi = sorted((d1, d2))
    assert ms.collar_mass(f, L, lo) <= ms.collar_mass(f, L, hi) + 1e-15


@pytest.mark.parametrize("alpha", [0.4, 1.0, 2.0])
def test_uniform_passes_every_case(circle256, alpha):
    rep = ms.check_hypothesis(MeasureSpec.from_density(uniform(circle256)), alpha)
    assert rep.ok
    ok, delta, tau, case = rep
    assert delta > 0 and tau > 0
    assert case == ms.case_for_alpha(alpha, 1)


@pytest.mark.parametrize("alpha", [0.3, 1.0, 3.0])
def test_uniform_passes_on_sphere(alpha):
    g = make_grid(2, 32)
    assert ms.check_hypothesis(MeasureSpec.from_density(uniform(g)), alpha).ok


def test_single_atom_fails_case_i():
    rep = ms.check_hypothesis(MeasureSpec.atoms([[1, 0]], [1.0]), 2.0)
    assert not rep.ok and rep.case == "i"
    z = rep.witness
    # the witness plane's collar contains the atom
    assert abs(np.dot(z, [1, 0])) <= 2 * 0.25


def test_antipodal_atoms_fail_case_ii():
    rep = ms.check_hypothesis(MeasureSpec.atoms([[1, 0], [-1, 0]], [0.5, 0.5]), 1.0)
    assert not rep.ok and rep.case == "ii"
    assert rep.values["mass"] == pytest.approx(1.0)
    assert np.allclose(np.abs(rep.witness.basis), [[1, 0]])


def test_square_atoms_equality_case():
    mu = MeasureSpec.atoms([[1, 0], [0, 1], [-1, 0], [0, -1]], [0.25] * 4)
    rep = ms.check_hypothesis(mu, 1.0)
    assert rep.ok and rep.equality
    assert not ms.check_hypothesis(mu, 0.5).ok      # atoms need alpha >= 1 here
    assert ms.check_hypothesis(mu, 2.0).ok


def test_octahedron_and_bad_sphere_atoms():
    octa = np.vstack([np.eye(3), -np.eye(3)])
    assert ms.check_hypothesis(MeasureSpec.atoms(octa, [1 / 6] * 6), 1.0).ok
    # all mass on one great circle
    t = np.linspace(0, 2 * np.pi, 5, endpoint=False)
    ring = np.column_stack([np.cos(t), np.sin(t), np.zeros(5)])
    assert not ms.check_hypothesis(MeasureSpec.atoms(ring, [0.2] * 5), 1.0).ok
    assert not ms.check_hypothesis(MeasureSpec.atoms(ring, [0.2] * 5), 2.0).ok


def test_collar_tau_values():
    # alpha = 1/2: p = -1, n = 1 gives tau = 2^(-1) / 2
    assert ms.collar_tau(0.5, 1) == pytest.approx(0.25)
    assert ms.collar_tau(1.0, 2) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        ms.case_for_alpha(0.25, 2)


def test_mollify_uniform_flat_profile():
    g = make_grid(1, 512)
    mu = MeasureSpec.from_density(uniform(g))
    for k in (2, 5, 16):
        f = ms.mollify(mu, k, profile="flat")
        assert np.max(np.abs(f.f - 1)) <= 1e-10


def test_mollify_single_atom():
    mu = MeasureSpec.atoms([[1, 0]], [1.0])
    m = ms.mollification(mu, 8)
    f = m.density
    assert np.min(f.f) > 0 and abs(f.mass - 1) <= 1e-12
    c = m.cell_of_node
    atom_cell = ms._circle_atom_cells(mu.directions, len(m.cell_mass))[0]
    above = (m.bumps > 0)
    assert np.all(c[above] == atom_cell)
    assert m.cell_mass[atom_cell] == pytest.approx(1.0)
    w = f.grid.weights / f.grid.omega
    assert np.dot(w, m.bumps) == pytest.approx(1.0, rel=1e-12)
    # bump bounds: plateau fraction and peak bound
    assert m.submax_fraction[atom_cell] < 1 / 8
    a = m.cell_area[atom_cell]
    assert m.cell_peak[atom_cell] <= (1 + 1 / 8) * m.cell_mass[atom_cell] / a


def test_mollify_cell_diameter_and_positivity():
    g = make_grid(2, 96)
    mu = MeasureSpec.atoms([[0, 0, 1], [1, 0, 0]], [0.5, 0.5])
    m = ms.mollification(mu, 3, grid=g)
    # nodes in one cell are within 1/k of each other
    x = g.nodes
    for cid in np.unique(m.cell_of_node)[::7]:
        pts = x[m.cell_of_node == cid]
        d = np.arccos(np.clip(pts @ pts.T, -1, 1)).max()
        assert d <= 1 / 3 + 1e-12
    f = m.density.f
    assert np.min(f) >= (1 / 3) / np.dot(g.weights / g.omega, 1 / 3 + m.bumps) * (1 - 1e-12)
    assert abs(m.density.mass - 1) <= 1e-12


def test_mollify_guards():
    g = make_grid(1, 64)
    with pytest.raises(ValueError):
        ms.mollify(MeasureSpec.atoms([[1, 0]], [1.0]), 16, grid=g)
    with pytest.raises(ValueError):
        ms.mollify(MeasureSpec.atoms([[1, 0]], [1.0]), 1)


def test_weak_convergence_rate():
    g = make_grid(1, 4096)
    smooth = DensityField(g, 0.5 * ms.builtin_density("cos2", g))
    mu = MeasureSpec.atoms([[math.cos(0.7), math.sin(0.7)], [-1, 0.2]], [0.25, 0.25], smooth)
    vs = [np.array([0.6, 0.8]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    worst = []
    for k in (4, 8, 16):
        f = ms.mollify(mu, k, grid=g)
        errs = []
        for v in vs:
            exact = float(mu.directions @ v @ mu.masses) + ms.spheregrid.mean(g, smooth.f * (g.nodes @ v))
            errs.append(abs(ms.spheregrid.mean(g, f.f * (g.nodes @ v)) - exact))
        worst.append(max(errs))
    assert worst[0] > worst[1] > worst[2]
    assert max(e * k for e, k in zip(worst, (4, 8, 16))) < 1.0


def test_floor_term_of_weak_error():
    # with exact cell pairings the error is (mean(phi) - <phi, mu>) / (k + 1)
    g = make_grid(1, 2048)
    mu = MeasureSpec.from_density(DensityField(g, ms.builtin_density("cos2", g)))
    phi = np.cos(2 * g.angles)
    exact = ms.spheregrid.mean(g, mu.density.f * phi) / mu.density.mass
    k = 8
    f = ms.mollify(mu, k, profile="flat")
    got = ms.spheregrid.mean(g, f.f * phi)
    assert abs(got - exact) == pytest.approx(abs(exact) / (k + 1), rel=5e-2)


def test_measure_file_roundtrip(tmp_path):
    g = make_grid(1, 128)
    dens = DensityField(g, ms.builtin_density("cos2", g))
    mu = MeasureSpec.atoms([[1, 0], [0, -1]], [0.3, 0.2], dens)
    p = tmp_path / "mu.txt"
    ms.write_measure_file(mu, p)
    back = ms.parse_measure_file(p)
    assert back.dim == 1
    assert np.allclose(back.directions, mu.directions)
    assert np.allclose(back.masses, mu.masses)
    assert np.allclose(back.density.f, dens.f)


def test_measure_file_builtin_and_errors(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("# comment\ndim 2\nresolution 32\ndensity cos2 mass 0.5\natom 0 0 1 0.5\n")
    mu = ms.parse_measure_file(p)
    assert mu.dim == 2 and mu.density.grid.nlon == 32
    assert mu.total_mass == pytest.approx(1.0)
    p.write_text("atom 1 0\n")
    with pytest.raises(ValueError):
        ms.parse_measure_file(p)
    p.write_text("bogus 1\n")
    with pytest.raises(ValueError):
        ms.parse_measure_file(p)
    with pytest.raises(ValueError):
        ms.builtin_density("nope", make_grid(1, 16))


def test_grid_for_count():
    assert ms.grid_for_count(2, 32 * 64).nlon == 64
    assert ms.grid_for_count(1, 100).size == 100
    with pytest.raises(ValueError):
        ms.grid_for_count(2, 1000)
