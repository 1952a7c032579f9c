import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqglab import fields, gmc
from lqglab.errors import BoundaryError, ParameterError
from lqglab.fields import GridSpec, HorizontalProcess, Kind

SQ2 = math.sqrt(2)
GRID = GridSpec(4.0, 64, 8)


def _zero_field(gamma=SQ2, grid=GRID, kind=Kind.THICK_DISK):
    f = fields.sample_surface(kind, gamma, 2.0, grid, (0.0, 1.0) if kind is Kind.THICK_DISK
                              else None, 0)
    return replace(f, horizontal=HorizontalProcess(grid.nodes, np.zeros(grid.nx + 1)),
                   lateral=np.zeros((grid.ny, grid.nx)), c_const=0.0)


def test_constant_field_boundary_total():
    f = _zero_field()
    dx = GRID.dt
    m = gmc.boundary_measure(f, "lower")
    assert m.total == pytest.approx(GRID.nx * dx ** (1 + SQ2**2 / 4), rel=1e-14)


def test_constant_field_area_total():
    f = _zero_field()
    dx = GRID.dt
    a = gmc.area_measure(f)
    assert a.total == pytest.approx(GRID.nx * GRID.ny * dx * GRID.dy(f.domain) * dx ** (SQ2**2 / 2),
                                    rel=1e-14)


def test_smooth_field_refinement():
    # a fixed smooth horizontal profile; finer grids change the (unrenormalized) integral little
    def total(nx):
        g = GridSpec(4.0, nx, 8)
        f = _zero_field(grid=g)
        h = HorizontalProcess(g.nodes, -0.5 * g.nodes**2 / 4)
        f = replace(f, horizontal=h)
        m = gmc.boundary_measure(f, "lower")
        return m.total / g.dt ** (SQ2**2 / 4)
    assert total(256) == pytest.approx(total(128), rel=0.01)


def test_masses_positive_and_total_sums():
    f = fields.sample_surface(Kind.THICK_DISK, SQ2, 2.0, GRID, (0.0, math.inf), 3)
    m = gmc.boundary_measure(f, "upper")
    assert np.all(m.cell_masses >= 0)
    assert m.total == pytest.approx(math.fsum(m.cell_masses), rel=1e-12)
    a = gmc.area_measure(f)
    assert np.all(a.cell_masses > 0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 10_000))
def test_add_constant_scales_exactly(log_lam, seed):
    lam = math.exp(log_lam)
    f = fields.sample_surface(Kind.THICK_DISK, SQ2, 2.0, GRID, (0.0, math.inf), seed)
    g = gmc.add_constant(f, gmc.scale_constant(SQ2, lam))
    for side in ("lower", "upper"):
        a = gmc.boundary_measure(f, side).cell_masses
        b = gmc.boundary_measure(g, side).cell_masses
        assert np.max(np.abs(b / (lam * a) - 1)) < 1e-12
    A = gmc.area_measure(f).cell_masses
    B = gmc.area_measure(g).cell_masses
    assert np.max(np.abs(B / (lam**2 * A) - 1)) < 1e-12


def test_add_zero_identity():
    f = fields.sample_surface(Kind.THICK_DISK, SQ2, 2.0, GRID, (0.0, math.inf), 4)
    g = gmc.add_constant(f, 0.0)
    assert np.array_equal(gmc.boundary_measure(f).cell_masses, gmc.boundary_measure(g).cell_masses)


def test_scale_constant_rejects_nonpositive():
    with pytest.raises(ParameterError):
        gmc.scale_constant(SQ2, 0.0)


def test_arc_length_additive():
    f = fields.sample_surface(Kind.THICK_DISK, SQ2, 2.0, GRID, (0.0, math.inf), 5)
    m = gmc.boundary_measure(f)
    assert gmc.arc_length(m, (-GRID.t_cut, GRID.t_cut)) == pytest.approx(m.total, rel=1e-12)
    a = gmc.arc_length(m, (-1.03, 0.4))
    b = gmc.arc_length(m, (0.4, 2.71))
    assert a + b == pytest.approx(gmc.arc_length(m, (-1.03, 2.71)), rel=1e-12)
    assert gmc.arc_length(m, (1, 1)) == 0.0


def test_cylinder_has_no_boundary():
    f = fields.sample_surface(Kind.SPHERE, SQ2, 3.0, GRID, (0.0, math.inf), 1)
    with pytest.raises(BoundaryError):
        gmc.boundary_measure(f)
    assert gmc.area_measure(f).total > 0


def test_boundary_lengths_pair():
    f = fields.sample_surface(Kind.THICK_DISK, SQ2, 2.0, GRID, (0.0, math.inf), 6)
    lo, up = gmc.boundary_lengths(f)
    assert lo == gmc.boundary_measure(f, "lower").total
    assert up == gmc.boundary_measure(f, "upper").total


def test_measure_csv_rows():
    f = fields.sample_surface(Kind.THICK_DISK, SQ2, 2.0, GRID, (0.0, math.inf), 7)
    text = gmc.measure_csv(gmc.boundary_measure(f))
    assert text.count("\n") == GRID.nx + 2
