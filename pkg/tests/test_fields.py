import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqglab import fields
from lqglab.errors import NumericalError, ParameterError
from lqglab.fields import Domain, GridSpec, Kind

SQ2, SQ3 = math.sqrt(2), math.sqrt(3)


# --- parameters -------------------------------------------------------------

def test_params_gamma_sqrt2_w2():
    p = fields.derive_params(SQ2, 2.0)
    assert p.Q == pytest.approx(2.121320, abs=1e-6)
    assert p.beta == pytest.approx(1.414214, abs=1e-6)
    assert p.Q - p.beta == pytest.approx(0.707107, abs=1e-6)
    assert p.strip_drift == pytest.approx(p.Q - p.beta, abs=1e-15)


def test_params_boundary_weight_is_thick():
    # at W = gamma^2/2 the insertion is beta = Q: zero strip drift
    p = fields.derive_params(SQ2, 1.0)
    assert p.beta == pytest.approx(p.Q, abs=1e-15)
    assert p.strip_drift == pytest.approx(0.0, abs=1e-15)
    assert p.thick
    assert not fields.derive_params(SQ2, 0.999).thick


def test_params_gamma_sqrt3():
    p = fields.derive_params(SQ3, 2.0)
    assert p.Q == pytest.approx(2.020726, abs=1e-6)
    assert p.beta == pytest.approx(1.732051, abs=1e-6)


@given(st.floats(0.05, 1.95), st.floats(0.01, 10))
def test_params_invariants(gamma, W):
    p = fields.derive_params(gamma, W)
    assert p.Q == pytest.approx(gamma / 2 + 2 / gamma, rel=1e-15)
    assert p.alpha < p.Q
    # thick exactly when beta <= Q, i.e. when the strip drift is nonnegative
    if abs(W - gamma**2 / 2) > 1e-9:
        assert p.thick == (p.beta < p.Q) == (p.strip_drift > 0)


@pytest.mark.parametrize("gamma,W", [(0, 1), (2, 1), (-1, 1), (1, 0), (1, -2), (1, math.nan)])
def test_params_reject(gamma, W):
    with pytest.raises(ParameterError):
        fields.derive_params(gamma, W)


def test_grid_tiles_strip():
    g = GridSpec(4.0, 64, 8)
    assert g.dt > 0
    assert g.nx * g.dt == pytest.approx(2 * g.t_cut)
    assert g.ny * g.dy(Domain.STRIP) == pytest.approx(math.pi)
    assert g.nodes[0] == -4.0 and g.nodes[-1] == pytest.approx(4.0)
    for bad in [(0, 64, 8), (4, 63, 8), (4, 64, 2)]:
        with pytest.raises(ParameterError):
            GridSpec(*bad)


# --- conditioned negative Brownian motion -------------------------------------

def test_conditioned_paths_negative_and_start_at_zero():
    h = fields.sample_conditioned_negative_bm(1 / SQ2, 0.05, 2.0, 3, size=300)
    assert np.all(h.values <= 0)
    assert np.all(h.values[:, 0] == 0)


def test_conditioned_quadratic_variation():
    # gamma = sqrt2, W = 2: a = 1/sqrt2; QV per step is 2 dt
    dt = 0.01
    h = fields.sample_conditioned_negative_bm(1 / SQ2, dt, 1.0, 11, size=1000)
    inc = np.diff(h.values, axis=1)
    qv = np.mean(inc[:, 20:] ** 2) / dt  # away from the first steps near the barrier
    assert qv == pytest.approx(2.0, rel=0.02)


def test_conditioned_mean_decreases_with_drift():
    lo = fields.sample_conditioned_negative_bm(0.5, 0.05, 1.0, 5, size=2000).values[:, -1]
    hi = fields.sample_conditioned_negative_bm(2.0, 0.05, 1.0, 6, size=2000).values[:, -1]
    assert hi.mean() < lo.mean()
    assert hi.max() <= 0 and lo.max() <= 0


def test_conditioned_rejects_bad_input():
    with pytest.raises(ParameterError):
        fields.sample_conditioned_negative_bm(0.0, 0.1, 1.0, 0)
    with pytest.raises(ParameterError):
        fields.sample_conditioned_negative_bm(1.0, 0.0, 1.0, 0)


# --- horizontal processes -------------------------------------------------------

def test_thick_disk_horizontal():
    grid = GridSpec(16.0, 128, 8)
    p = fields.derive_params(SQ2, 2.0)
    vals = np.array([fields.sample_horizontal(Kind.THICK_DISK, p, grid, s).values
                     for s in range(1500)])
    mid = grid.nx // 2
    assert np.all(vals[:, mid] == 0)
    assert np.all(vals <= 0)
    # far from 0 (beyond a few v/a^2 = 4) the mean decreases at rate Q - beta
    t = grid.nodes
    right = (t > 6)
    slope = np.polyfit(t[right], vals[:, right].mean(axis=0), 1)[0]
    assert slope == pytest.approx(-p.strip_drift, rel=0.1)
    left = (t < -6)
    slope_l = np.polyfit(t[left], vals[:, left].mean(axis=0), 1)[0]
    assert slope_l == pytest.approx(p.strip_drift, rel=0.1)


def test_wedge_horizontal_positive_on_left():
    grid = GridSpec(4.0, 64, 8)
    p = fields.derive_params(SQ2, 3.0)
    for s in range(50):
        h = fields.sample_horizontal(Kind.WEDGE, p, grid, s)
        assert np.all(h.values[grid.nodes < 0] >= 0)


def test_thin_kinds_rejected():
    grid = GridSpec(4.0, 64, 8)
    with pytest.raises(ParameterError):
        fields.sample_horizontal(Kind.THICK_DISK, fields.derive_params(SQ2, 0.5), grid, 0)
    with pytest.raises(ParameterError):
        fields.sample_horizontal(Kind.WEDGE, fields.derive_params(SQ2, 1.0), grid, 0)


# --- lateral field -----------------------------------------------------------------

@pytest.mark.parametrize("domain", [Domain.STRIP, Domain.CYLINDER])
def test_lateral_column_means_vanish(domain):
    grid = GridSpec(4.0, 32, 8)
    h = fields.sample_lateral(grid, domain, 1, size=20)
    assert np.max(np.abs(h.mean(axis=-2))) < 1e-12


def test_lateral_variance_matches_series():
    grid = GridSpec(4.0, 32, 8)
    h = fields.sample_lateral(grid, Domain.STRIP, 2, size=10_000)
    cell = (0, 16)
    emp = h[:, cell[0], cell[1]].var()
    assert emp == pytest.approx(fields.lateral_variance(grid, Domain.STRIP, *cell), rel=0.05)


def test_lateral_covariance_matches_series():
    grid = GridSpec(4.0, 32, 8)
    n = 10_000
    h = fields.sample_lateral(grid, Domain.STRIP, 3, size=n)
    a, b = (0, 10), (0, 11)
    x, y = h[:, a[0], a[1]], h[:, b[0], b[1]]
    emp = np.mean(x * y) - x.mean() * y.mean()
    target = fields.lateral_covariance(grid, Domain.STRIP, a, b)
    se = math.sqrt((np.var(x) * np.var(y) + emp**2) / n)
    assert abs(emp - target) < 3 * se


def test_lateral_is_dirichlet_gff():
    # E[(f, h)_D^2] = (f, f)_D for column-mean-zero f
    grid = GridSpec(2.0, 16, 8)
    f1, _ = fields.bump_functions(grid)
    h = fields.sample_lateral(grid, Domain.STRIP, 4, size=20_000)
    Df = fields.dirichlet_apply(f1, grid, Domain.STRIP)
    proj = np.einsum("sij,ij->s", h, Df)
    energy = fields.dirichlet_inner(f1, f1, grid, Domain.STRIP)
    assert np.mean(proj**2) == pytest.approx(energy, rel=0.03)


# --- surfaces ------------------------------------------------------------------------

def test_window_mass_zero_zeta():
    p = fields.derive_params(SQ2, 2.0)
    assert fields.c_window_mass(Kind.THICK_DISK, p, (0.0, math.inf)) == pytest.approx(1.0, 1e-14)


def test_window_mass_converges_as_lower_cut_decreases():
    p = fields.derive_params(SQ2, 2.0)
    rate = p.Q - p.beta
    M = 1.0
    masses = [fields.c_window_mass(Kind.THICK_DISK, p, (-L, M)) for L in (1, 5, 20, 60)]
    assert all(b > a for a, b in zip(masses, masses[1:]))
    limit = (SQ2 / 2) / rate * math.exp(rate * 60)  # (gamma/2)/rate e^(rate * 60), lower cut dominates
    assert masses[-1] == pytest.approx(limit * (1 - math.exp(-rate * 61)), rel=1e-12)


def test_surface_cell_field_composition():
    grid = GridSpec(4.0, 64, 8)
    f = fields.sample_surface(Kind.THICK_DISK, SQ2, 2.0, grid, (0.0, math.inf), 5)
    cf = f.cell_field()
    assert np.allclose(cf, f.horizontal.cell_values[None, :] + f.lateral + f.c_const)
    assert f.c_const > 0
    assert f.importance_weight == pytest.approx(1.0)


def test_wedge_weight_one_and_window_rules():
    grid = GridSpec(4.0, 64, 8)
    for s in range(5):
        assert fields.sample_surface(Kind.WEDGE, SQ2, 3.0, grid, None, s).importance_weight == 1
    with pytest.raises(ParameterError):
        fields.sample_surface(Kind.WEDGE, SQ2, 3.0, grid, (0, 1), 0)
    with pytest.raises(ParameterError):
        fields.sample_surface(Kind.THICK_DISK, SQ2, 2.0, grid, None, 0)


def test_sphere_and_cone_live_on_cylinder():
    grid = GridSpec(4.0, 64, 8)
    s = fields.sample_surface(Kind.SPHERE, SQ2, 3.0, grid, (0.0, math.inf), 1)
    assert s.domain is Domain.CYLINDER
    assert s.lateral.shape == (8, 64)


def test_c_sampling_follows_exponential():
    grid = GridSpec(2.0, 16, 4)
    p = fields.derive_params(SQ2, 2.0)
    c = np.array([fields.sample_surface(Kind.THICK_DISK, SQ2, 2.0, grid, (0.0, math.inf), s,
                                        lateral=False).c_const for s in range(3000)])
    assert c.min() > 0
    assert c.mean() == pytest.approx(1 / (p.Q - p.beta), rel=0.06)


def test_dump_roundtrip(tmp_path):
    grid = GridSpec(2.0, 16, 4)
    f = fields.sample_surface(Kind.THICK_DISK, SQ3, 2.0, grid, (0.0, math.inf), 9)
    path = tmp_path / "f.csv"
    fields.dump_field(f, path)
    g = fields.load_field(path)
    assert np.array_equal(g.cell_field(), f.cell_field())
    assert g.kind is f.kind and g.seed == 9


def test_same_seed_same_field():
    grid = GridSpec(4.0, 64, 8)
    a = fields.sample_surface(Kind.THICK_DISK, SQ2, 2.0, grid, (0.0, math.inf), 77)
    b = fields.sample_surface(Kind.THICK_DISK, SQ2, 2.0, grid, (0.0, math.inf), 77)
    assert np.array_equal(a.cell_field(), b.cell_field())


# --- two-length disintegration --------------------------------------------------------

def test_two_lengths_exact_arcs():
    from lqglab import gmc
    grid = GridSpec(4.0, 128, 16)
    s = fields.sample_disk_two_lengths(3.0, 2.0, 3.0, 1.0, grid, 3)
    lo = gmc.boundary_measure(s, "lower")
    up = gmc.boundary_measure(s, "upper")
    assert lo.total == pytest.approx(2.0, rel=1e-6)
    assert up.total == pytest.approx(3.0, rel=1e-6)
    # the [0,1] arc carries the solved part d1
    assert gmc.arc_length(lo, (0, 1)) == pytest.approx(s.meta["d"][0], rel=1e-6)
    assert 0 < s.meta["acceptance_rate"] <= 1


def test_two_lengths_monotone_in_alpha():
    grid = GridSpec(4.0, 128, 16)
    f1, _ = fields.bump_functions(grid)
    cols = fields.arc_columns(grid)
    assert np.all(f1[0, cols] > 0)
    w = np.ones(cols.sum())
    masses = [np.sum(w * np.exp(SQ2 / 2 * a * f1[0, cols])) for a in np.linspace(-3, 3, 13)]
    assert np.all(np.diff(masses) > 0)


def test_two_lengths_errors():
    grid = GridSpec(4.0, 128, 16)
    with pytest.raises(ParameterError):
        fields.disk_two_lengths(1.0, 1, 1, 1, grid, 1, 0)
    with pytest.raises(ParameterError):
        fields.disk_two_lengths(3.0, -1, 1, 1, grid, 1, 0)
    with pytest.raises(NumericalError):
        fields._solve_alpha(np.ones(3), np.zeros(3), 5.0, 0.7)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 1.9), st.floats(0.1, 10))
def test_window_mass_monotone_in_zeta(gamma, excess):
    W = gamma**2 / 2 + excess
    p = fields.derive_params(gamma, W)
    m = [fields.c_window_mass(Kind.THICK_DISK, p, (-z, math.inf)) for z in (0, 0.5, 1)]
    assert m[0] < m[1] < m[2]
