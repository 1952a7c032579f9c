"""Quantum boundary length and area of a discretized field.

Both measures are cell-averaged exponentials renormalized at the cell scale
``eps = dx``: boundary cells get ``exp(gamma/2 h) dx^(1 + gamma^2/4)`` and bulk
cells ``exp(gamma h) dA dx^(gamma^2/2)``.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BoundaryError, ParameterError
from .fields import Domain, FieldSample


class Side(str, enum.Enum):
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class BoundaryMeasure:
    side: Side
    edges: np.ndarray  # nx + 1 cell edges along the boundary
    cell_masses: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.cell_masses))


@dataclass(frozen=True)
class AreaMeasure:
    cell_masses: np.ndarray  # (ny, nx)

    @property
    def total(self) -> float:
        return float(np.sum(self.cell_masses))


def boundary_measure(field: FieldSample, side="lower") -> BoundaryMeasure:
    if field.domain is not Domain.STRIP:
        raise BoundaryError(f"{field.kind.value} surfaces have no boundary")
    side = Side(side)
    g = field.params.gamma
    dx = field.grid.dt
    row = field.lateral[0] if side is Side.LOWER else field.lateral[-1]
    h = field.horizontal.cell_values + row + field.c_const
    masses = np.exp(g / 2 * h) * dx ** (1 + g * g / 4)
    return BoundaryMeasure(side, field.grid.nodes, masses)


def area_measure(field: FieldSample) -> AreaMeasure:
    g = field.params.gamma
    dx = field.grid.dt
    dA = dx * field.grid.dy(field.domain)
    masses = np.exp(g * field.cell_field()) * (dA * dx ** (g * g / 2))
    return AreaMeasure(masses)


def add_constant(field: FieldSample, c: float) -> FieldSample:
    return replace(field, c_const=field.c_const + c)


def scale_constant(gamma: float, lam: float) -> float:
    """The constant ``(2/gamma) log lam`` that scales lengths by ``lam``."""
    if not lam > 0:
        raise ParameterError("scale factor must be positive")
    return 2 / gamma * math.log(lam)


def arc_length(measure: BoundaryMeasure, interval) -> float:
    """Mass of ``[a, b]`` with linear pro-rating of partially covered cells."""
    a, b = map(float, interval)
    if not b > a:
        return 0.0
    e = measure.edges
    lo, hi = e[:-1], e[1:]
    cover = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None) / (hi - lo)
    return float(np.sum(measure.cell_masses * cover))


def boundary_lengths(field: FieldSample) -> tuple[float, float]:
    """``(left, right)`` boundary lengths: the lower and upper arcs."""
    return boundary_measure(field, Side.LOWER).total, boundary_measure(field, Side.UPPER).total


def measure_csv(measure, path=None) -> str:
    """CSV with columns ``cell,position,mass`` (bulk cells use ``row,col``)."""
    buf = io.StringIO()
    if isinstance(measure, BoundaryMeasure):
        buf.write(f"# lqglab-measure/1 side={measure.side.value}\ncell,position,mass\n")
        mid = 0.5 * (measure.edges[1:] + measure.edges[:-1])
        for i, (x, m) in enumerate(zip(mid, measure.cell_masses)):
            buf.write(f"{i},{x:.17g},{m:.17g}\n")
    else:
        buf.write("# lqglab-measure/1 area\nrow,col,mass\n")
        for (r, c), m in np.ndenumerate(measure.cell_masses):
            buf.write(f"{r},{c},{m:.17g}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
