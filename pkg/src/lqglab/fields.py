"""Gaussian fields behind thick quantum disks, wedges, spheres and cones.

A field on the truncated strip ``[-t_cut, t_cut] x [0, pi]`` (or the cylinder
``[-t_cut, t_cut] x [0, 2pi)``) is stored as

    horizontal average process  +  lateral mean-zero field  +  additive constant

on a grid of ``nx`` horizontal by ``ny`` vertical cells.  The lateral part is
the discrete Neumann free field on the cell grid, projected onto functions
with zero mean on every column, normalized so that its Dirichlet form is
``(1/2pi) * sum |grad h|^2``.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from .errors import NumericalError, ParameterError
from .rng import as_rng

FORMAT_VERSION = "lqglab-field/1"


class Kind(str, enum.Enum):
    THICK_DISK = "ThickDisk"
    WEDGE = "Wedge"
    SPHERE = "Sphere"
    CONE = "Cone"

    @property
    def domain(self) -> "Domain":
        return Domain.STRIP if self in (Kind.THICK_DISK, Kind.WEDGE) else Domain.CYLINDER


class Domain(str, enum.Enum):
    STRIP = "Strip"
    CYLINDER = "Cylinder"

    @property
    def height(self) -> float:
        return math.pi if self is Domain.STRIP else 2 * math.pi

    @property
    def variance_rate(self) -> float:
        # quadratic variation per unit horizontal time of the average process
        return 2.0 if self is Domain.STRIP else 1.0


@dataclass(frozen=True)
class LqgParams:
    gamma: float
    W: float
    Q: float
    beta: float
    alpha: float

    @property
    def thick(self) -> bool:
        # relative slack so that W = gamma^2/2 computed in floating point counts as thick
        return self.W >= self.gamma**2 / 2 * (1 - 1e-12)

    @property
    def strip_drift(self) -> float:
        """Q - beta: drift magnitude of the strip average process."""
        return self.W / self.gamma - self.gamma / 2

    @property
    def cylinder_drift(self) -> float:
        """Q - alpha: drift magnitude of the cylinder average process."""
        return self.W / (2 * self.gamma)

    def drift(self, domain: Domain) -> float:
        return self.strip_drift if domain is Domain.STRIP else self.cylinder_drift

    @property
    def bessel_dimension(self) -> float:
        """delta = 2 + (2/gamma)(Q - beta) for the strip conditioned branch."""
        return 2 + 2 / self.gamma * self.strip_drift


def derive_params(gamma: float, W: float) -> LqgParams:
    if not (0 < gamma < 2) or not math.isfinite(gamma):
        raise ParameterError(f"gamma must lie in (0, 2), got {gamma!r}")
    if not (W > 0) or not math.isfinite(W):
        raise ParameterError(f"weight W must be positive, got {W!r}")
    Q = gamma / 2 + 2 / gamma
    return LqgParams(gamma=float(gamma), W=float(W), Q=Q,
                     beta=gamma / 2 + Q - W / gamma, alpha=Q - W / (2 * gamma))


@dataclass(frozen=True)
class GridSpec:
    t_cut: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.t_cut > 0):
            raise ParameterError("t_cut must be positive")
        if self.nx < 8 or self.nx % 2:
            raise ParameterError("nx must be an even integer >= 8")
        if self.ny < 4:
            raise ParameterError("ny must be >= 4")

    @property
    def dt(self) -> float:
        return 2 * self.t_cut / self.nx

    @property
    def nodes(self) -> np.ndarray:
        return -self.t_cut + self.dt * np.arange(self.nx + 1)

    @property
    def centers(self) -> np.ndarray:
        return -self.t_cut + self.dt * (np.arange(self.nx) + 0.5)

    def dy(self, domain: Domain) -> float:
        return domain.height / self.ny


@dataclass(frozen=True)
class HorizontalProcess:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.times.shape != self.values.shape:
            raise ParameterError("times and values must have the same length")

    @property
    def cell_values(self) -> np.ndarray:
        """Average over each grid cell (trapezoid of the node values)."""
        return 0.5 * (self.values[1:] + self.values[:-1])


@dataclass(frozen=True)
class FieldSample:
    grid: GridSpec
    horizontal: HorizontalProcess
    lateral: np.ndarray  # (ny, nx) cell values, zero mean on every column
    c_const: float
    kind: Kind
    params: LqgParams
    importance_weight: float = 1.0
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def domain(self) -> Domain:
        return self.kind.domain

    def cell_field(self) -> np.ndarray:
        """Total field value per cell, shape ``(ny, nx)``."""
        return self.horizontal.cell_values[None, :] + self.lateral + self.c_const


# ---------------------------------------------------------------------------
# horizontal (average) process

def _default_gamma(gamma):
    return math.sqrt(2) if gamma is None else float(gamma)


def _conditioned_negative_paths(a: float, dt: float, n_steps: int, rng: np.random.Generator,
                                size: int, gamma: float, variance: float,
                                substeps: int = 4) -> np.ndarray:
    """Paths of ``B_{v t} - a t`` conditioned to stay negative, shape ``(size, n_steps+1)``.

    A squared Bessel process of dimension ``2 + 4a/(gamma v)`` started near 0 and
    run until it reaches 1 is sampled with exact noncentral chi-square
    transitions at steps ``ds = h X`` with ``h = gamma^2 v dt / (4 substeps)``.
    The clock ``(4/(gamma^2 v)) int ds/X`` of ``(1/gamma) log X`` is integrated
    by the trapezoid rule, the path is time-reversed from the hitting time, and
    it is read off at the realized time closest to each grid time.
    """
    if not (a > 0):
        raise ParameterError("drift a must be positive for the conditioned sampler")
    m = int(substeps)
    delta = 2 + 4 * a / (gamma * variance)
    h = gamma**2 * variance * dt / (4 * m)
    horizon = n_steps * dt
    depth = a * horizon + 6 * math.sqrt(variance * horizon) + 6
    est = int(1.3 * depth / (a * dt / m)) + 64
    grid_t = dt * np.arange(n_steps + 1)
    out = np.empty((size, n_steps + 1))

    def steps(k):
        xi = np.log(h * rng.noncentral_chisquare(delta, 1 / h, size=k)) / gamma
        return xi, dt / m * 0.5 * (1 + np.exp(-gamma * xi))

    for i in range(size):
        y = -depth
        ys, taus = [], []
        while True:
            xi, tau = steps(est)
            walk = y + np.cumsum(xi)
            hit = np.flatnonzero(walk >= 0)
            if hit.size:
                ys.append(walk[: hit[0]])
                taus.append(tau[: hit[0] + 1])
                break
            ys.append(walk)
            taus.append(tau)
            y = walk[-1]
            est = max(64, est // 4)
        # reversed path: value 0 at time 0, then the walk backwards
        rev = np.concatenate(([0.0], np.concatenate(ys)[::-1]))
        rt = np.concatenate(([0.0], np.cumsum(np.concatenate(taus)[::-1][:-1])))
        if rt[-1] < horizon:
            # far from the barrier the conditioning is negligible: continue unconditioned
            k = int((horizon - rt[-1]) / (dt / m) * 1.2) + 2 * m
            xi, tau = steps(k)
            rev = np.concatenate((rev, rev[-1] - np.cumsum(xi)))
            rt = np.concatenate((rt, rt[-1] + np.cumsum(tau)))
        j = np.searchsorted(rt, grid_t)
        j = np.clip(j, 1, rt.size - 1)
        j -= (grid_t - rt[j - 1]) < (rt[j] - grid_t)
        out[i] = rev[j]
    return out


def sample_conditioned_negative_bm(a: float, dt: float, horizon: float, seed, *,
                                   gamma: float | None = None, variance: float = 2.0,
                                   size: int | None = None) -> HorizontalProcess:
    """``B_{2t} - a t`` conditioned to stay negative on ``[0, horizon]``.

    The continuum law does not involve ``gamma``; it only fixes the Bessel
    dimension ``2 + (2/gamma) a`` used by the construction.  With ``size`` given,
    ``values`` has shape ``(size, n+1)``.
    """
    if not (dt > 0) or horizon < dt:
        raise ParameterError("need dt > 0 and horizon >= dt")
    if not (a > 0):
        raise ParameterError("drift a must be positive")
    n = int(math.ceil(horizon / dt - 1e-9))
    rng = as_rng(seed)
    paths = _conditioned_negative_paths(a, dt, n, rng, 1 if size is None else size,
                                        _default_gamma(gamma), variance)
    times = dt * np.arange(n + 1)
    if size is None:
        return HorizontalProcess(times, paths[0])
    return HorizontalProcess(np.broadcast_to(times, paths.shape).copy(), paths)


def _free_paths(a, dt, n_steps, rng, variance):
    inc = -a * dt + math.sqrt(variance * dt) * rng.standard_normal(n_steps)
    return np.concatenate(([0.0], np.cumsum(inc)))


def _check_kind(kind: Kind, params: LqgParams):
    if kind is Kind.THICK_DISK and not params.thick:
        raise ParameterError("thick disks need W >= gamma^2/2 (thin disks are bead chains)")
    if kind is Kind.WEDGE and not params.W > params.gamma**2 / 2:
        raise ParameterError("field wedges need W > gamma^2/2 (thin wedges are bead chains)")


def sample_horizontal(kind, params: LqgParams, grid: GridSpec, seed) -> HorizontalProcess:
    kind = Kind(kind)
    _check_kind(kind, params)
    rng = as_rng(seed)
    dom = kind.domain
    v = dom.variance_rate
    a = params.drift(dom)
    half = grid.nx // 2
    dt = grid.dt
    g = params.gamma
    if kind in (Kind.THICK_DISK, Kind.SPHERE):
        if a > 0:
            right = _conditioned_negative_paths(a, dt, half, rng, 1, g, v)[0]
            left = _conditioned_negative_paths(a, dt, half, rng, 1, g, v)[0]
        else:
            # W = gamma^2/2 disk: driftless branches conditioned negative
            right = -_bes3_paths(dt, half, rng, v)
            left = -_bes3_paths(dt, half, rng, v)
    else:
        right = _free_paths(a, dt, half, rng, v)
        left = -_conditioned_negative_paths(a, dt, half, rng, 1, g, v)[0]
    values = np.concatenate((left[::-1], right[1:]))
    return HorizontalProcess(grid.nodes, values)


def _bes3_paths(dt, n, rng, v):
    """sqrt(v) times a 3-dimensional Bessel process from 0 (driftless limit)."""
    steps = math.sqrt(v * dt) * rng.standard_normal((n, 3))
    return np.concatenate(([0.0], np.linalg.norm(np.cumsum(steps, axis=0), axis=1)))


# ---------------------------------------------------------------------------
# lateral field

def _neumann_basis(n: int):
    """Orthonormal eigenbasis of the path-graph Laplacian (DCT-II vectors)."""
    j = np.arange(n)
    m = np.arange(n)
    U = np.cos(np.pi * np.outer(j + 0.5, m) / n)
    U[:, 0] *= math.sqrt(1.0 / n)
    U[:, 1:] *= math.sqrt(2.0 / n)
    lam = 4 * np.sin(np.pi * m / (2 * n)) ** 2
    return U, lam


def _periodic_basis(n: int):
    """Orthonormal eigenbasis of the cycle-graph Laplacian (real Fourier)."""
    j = np.arange(n)
    cols, lam = [np.full(n, 1 / math.sqrt(n))], [0.0]
    for k in range(1, n // 2 + 1):
        c = np.cos(2 * np.pi * k * j / n)
        if 2 * k == n:
            cols.append(c / math.sqrt(n))
            lam.append(4.0)
            continue
        cols.append(c * math.sqrt(2 / n))
        cols.append(np.sin(2 * np.pi * k * j / n) * math.sqrt(2 / n))
        lam += [4 * math.sin(math.pi * k / n) ** 2] * 2
    return np.column_stack(cols), np.asarray(lam)


@lru_cache(maxsize=16)
def lateral_basis(grid: GridSpec, domain: Domain):
    """``(U_y, U_x, eig)`` with the column-constant vertical mode removed.

    The lateral field is ``U_y @ (xi / sqrt(eig)) @ U_x.T`` for iid standard
    normal ``xi`` of shape ``(ny-1, nx)``.
    """
    domain = Domain(domain)
    dx, dy = grid.dt, grid.dy(domain)
    Ux, lx = _neumann_basis(grid.nx)
    Uy, ly = (_neumann_basis if domain is Domain.STRIP else _periodic_basis)(grid.ny)
    Uy, ly = Uy[:, 1:], ly[1:]
    eig = (dy / dx * lx[None, :] + dx / dy * ly[:, None]) / (2 * math.pi)
    for arr in (Ux, Uy, eig):
        arr.setflags(write=False)
    return Uy, Ux, eig


def lateral_variance(grid: GridSpec, domain, row: int, col: int) -> float:
    """Exact variance of one cell of the lateral field (the series oracle)."""
    Uy, Ux, eig = lateral_basis(grid, Domain(domain))
    return float(np.sum(np.outer(Uy[row] ** 2, Ux[col] ** 2) / eig))


def lateral_covariance(grid: GridSpec, domain, cell_a, cell_b) -> float:
    Uy, Ux, eig = lateral_basis(grid, Domain(domain))
    (ra, ca), (rb, cb) = cell_a, cell_b
    return float(np.sum(np.outer(Uy[ra] * Uy[rb], Ux[ca] * Ux[cb]) / eig))


def sample_lateral(grid: GridSpec, domain, seed, size: int | None = None) -> np.ndarray:
    Uy, Ux, eig = lateral_basis(grid, Domain(domain))
    rng = as_rng(seed)
    shape = eig.shape if size is None else (size,) + eig.shape
    xi = rng.standard_normal(shape) / np.sqrt(eig)
    return Uy @ xi @ Ux.T


def dirichlet_apply(h: np.ndarray, grid: GridSpec, domain) -> np.ndarray:
    """``D h`` where ``h @ D h = (1/2pi) sum |grad h|^2`` on the cell grid."""
    domain = Domain(domain)
    dx, dy = grid.dt, grid.dy(domain)
    out = np.zeros_like(h)
    dh = np.diff(h, axis=-1)
    out[..., :-1] -= dh
    out[..., 1:] += dh
    out *= dy / dx
    if domain is Domain.STRIP:
        dv = np.diff(h, axis=-2)
    else:
        dv = np.roll(h, -1, axis=-2) - h
    vert = np.zeros_like(h)
    if domain is Domain.STRIP:
        vert[..., :-1, :] -= dv
        vert[..., 1:, :] += dv
    else:
        vert -= dv
        vert += np.roll(dv, 1, axis=-2)
    out += dx / dy * vert
    return out / (2 * math.pi)


def dirichlet_inner(f: np.ndarray, g: np.ndarray, grid: GridSpec, domain) -> float:
    return float(np.sum(f * dirichlet_apply(g, grid, domain)))


# ---------------------------------------------------------------------------
# surfaces

def _c_rate(kind: Kind, params: LqgParams) -> float:
    if kind is Kind.THICK_DISK:
        return params.Q - params.beta
    return 2 * (params.Q - params.alpha)


def c_window_mass(kind, params: LqgParams, c_window) -> float:
    """Mass of ``(gamma/2) exp(-rate c) dc`` over ``(c_min, c_max]``."""
    kind = Kind(kind)
    c_min, c_max = map(float, c_window)
    if not math.isfinite(c_min) or not (c_min < c_max):
        raise ParameterError("c_window must be (c_min, c_max] with finite c_min < c_max")
    rate = _c_rate(kind, params)
    g2 = params.gamma / 2
    if rate == 0:
        if not math.isfinite(c_max):
            raise ParameterError("c law is Lebesgue for W = gamma^2/2; c_max must be finite")
        return g2 * (c_max - c_min)
    if math.isinf(c_max):
        return g2 / rate * math.exp(-rate * c_min)
    return -g2 / rate * math.exp(-rate * c_min) * math.expm1(-rate * (c_max - c_min))


def _sample_c(kind, params, c_window, rng) -> float:
    c_min, c_max = map(float, c_window)
    rate = _c_rate(kind, params)
    u = rng.random()
    if rate == 0:
        return c_min + u * (c_max - c_min)
    span = rate * (c_max - c_min)
    # inverse cdf of the truncated exponential
    return c_min - math.log1p(u * math.expm1(-span)) / rate if math.isfinite(span) \
        else c_min - math.log1p(-u) / rate


def sample_surface(kind, gamma: float, W: float, grid: GridSpec, c_window=None, seed=0,
                   *, lateral: bool = True) -> FieldSample:
    """Assemble a field sample; disk and sphere constants come from a window."""
    kind = Kind(kind)
    params = derive_params(gamma, W)
    rng = as_rng(seed)
    has_c = kind in (Kind.THICK_DISK, Kind.SPHERE)
    if has_c and c_window is None:
        raise ParameterError(f"{kind.value} needs a c_window (its c law is an infinite measure)")
    if not has_c and c_window is not None:
        raise ParameterError(f"{kind.value} is a probability law; it takes no c_window")
    if has_c:
        weight = c_window_mass(kind, params, c_window)
    horiz = sample_horizontal(kind, params, grid, rng)
    lat = sample_lateral(grid, kind.domain, rng) if lateral \
        else np.zeros((grid.ny, grid.nx))
    if has_c:
        c = _sample_c(kind, params, c_window, rng)
    else:
        c, weight = 0.0, 1.0
    return FieldSample(grid=grid, horizontal=horiz, lateral=lat, c_const=c, kind=kind,
                       params=params, importance_weight=weight,
                       seed=seed if isinstance(seed, int) else None)


# ---------------------------------------------------------------------------
# disintegration by two boundary lengths

def bump_functions(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Fixed pair ``(f1, f2)`` of unit-energy, column-mean-zero bumps.

    ``f1`` lives on ``[0,1] x [0, pi/2)`` and is positive on the lower boundary
    cells over ``(0, 1)``; ``f2`` is its mirror image near the upper boundary.
    The supports are at least two rows apart, so ``f1`` and ``f2`` are
    orthogonal for the Dirichlet form.
    """
    if grid.ny < 8:
        raise ParameterError("two-length disintegration needs ny >= 8")
    x = grid.centers
    cols = (x > 0) & (x < 1)
    if cols.sum() < 2:
        raise ParameterError("grid too coarse: fewer than two cells over [0, 1]")
    dy = grid.dy(Domain.STRIP)
    y = dy * (np.arange(grid.ny) + 0.5)
    rows = np.arange(grid.ny) <= grid.ny // 2 - 2
    prof = np.where(rows, np.cos(2 * y) + np.cos(4 * y), 0.0)
    prof[rows] -= prof[rows].mean()
    f1 = np.zeros((grid.ny, grid.nx))
    f1[:, cols] = prof[:, None] * np.sin(np.pi * x[cols])[None, :] ** 2
    f1 /= math.sqrt(dirichlet_inner(f1, f1, grid, Domain.STRIP))
    return f1, f1[::-1].copy()


def arc_columns(grid: GridSpec) -> np.ndarray:
    """Boolean mask of the boundary cells making up the arc ``[0, 1]``."""
    x = grid.centers
    return (x > 0) & (x < 1)


@dataclass
class TwoLengthResult:
    samples: list  # accepted FieldSample objects
    attempts: int
    accepted: int
    weights: np.ndarray  # weight per attempt, zero when rejected

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0

    @property
    def density(self) -> float:
        """Unbiased estimate of the total mass of the disintegrated measure."""
        return float(self.weights.mean()) if self.attempts else 0.0

    @property
    def density_stderr(self) -> float:
        n = self.attempts
        return float(self.weights.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")


def _solve_alpha(w: np.ndarray, f: np.ndarray, target: float, g2: float) -> tuple[float, float]:
    """Root of ``sum w e^{g2 alpha f} = target`` and the derivative there."""
    logw = np.log(w)

    def resid(al):
        return special.logsumexp(logw + g2 * al * f) - math.log(target)

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if resid(lo) < 0:
            break
        lo *= 2
    for _ in range(200):
        if resid(hi) > 0:
            break
        hi *= 2
    if not (resid(lo) < 0 < resid(hi)):
        raise NumericalError(f"alpha root not bracketed: target={target}, lo={lo}, hi={hi}")
    al = optimize.brentq(resid, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    jac = g2 * float(np.sum(f * w * np.exp(g2 * al * f)))
    return al, jac


def disk_two_lengths(W: float, ell1: float, ell2: float, zeta: float, grid: GridSpec,
                     n: int, seed, *, gamma: float = math.sqrt(2),
                     keep: int = 0) -> TwoLengthResult:
    """``n`` attempts of the two-length construction for ``M_2^disk(W; l1, l2)``.

    Each attempt draws a field from the windowed law with ``sup psi > -zeta``,
    removes its components along ``f1, f2``, and, when the leftover masses
    outside ``[0,1]`` and ``[i pi, i pi + 1]`` are below ``ell1``/``ell2``,
    re-solves those components so the arcs have exactly the requested lengths.
    The attempt weight is ``mass * phi(a1) phi(a2) / (J1 J2)``.
    """
    from . import gmc

    params = derive_params(gamma, W)
    if not params.W > gamma**2 / 2:
        raise ParameterError("two-length construction needs W > gamma^2/2")
    if not (ell1 > 0 and ell2 > 0 and zeta > 0):
        raise ParameterError("ell1, ell2 and zeta must be positive")
    rng = as_rng(seed)
    a = params.strip_drift
    mass = 1 / (2 * W / gamma**2 - 1) * math.exp(a * zeta)
    f1, f2 = bump_functions(grid)
    cols = arc_columns(grid)
    g2 = gamma / 2
    half = grid.nx // 2
    weights = np.zeros(n)
    samples = []
    accepted = 0
    for i in range(n):
        right = _free_paths(a, grid.dt, half, rng, 2.0)
        left = _conditioned_negative_paths(a, grid.dt, half, rng, 1, gamma, 2.0)[0]
        horiz = HorizontalProcess(grid.nodes, np.concatenate((left[::-1], right[1:])))
        lat = sample_lateral(grid, Domain.STRIP, rng)
        DL = dirichlet_apply(lat, grid, Domain.STRIP)
        a1, a2 = float(np.sum(f1 * DL)), float(np.sum(f2 * DL))
        base = lat - a1 * f1 - a2 * f2
        fs = FieldSample(grid, horiz, base, -zeta, Kind.THICK_DISK, params, mass)
        low = gmc.boundary_measure(fs, "lower").cell_masses
        up = gmc.boundary_measure(fs, "upper").cell_masses
        d1 = ell1 - low[~cols].sum()
        d2 = ell2 - up[~cols].sum()
        if d1 <= 0 or d2 <= 0:
            continue
        s1, j1 = _solve_alpha(low[cols], f1[0, cols], d1, g2)
        s2, j2 = _solve_alpha(up[cols], f2[-1, cols], d2, g2)
        w = mass * math.exp(-(s1 * s1 + s2 * s2) / 2) / (2 * math.pi) / (j1 * j2)
        weights[i] = w
        accepted += 1
        if len(samples) < keep:
            samples.append(replace(fs, lateral=base + s1 * f1 + s2 * f2, importance_weight=w,
                                   meta={"alpha": (s1, s2), "d": (d1, d2)}))
    return TwoLengthResult(samples, n, accepted, weights)


def sample_disk_two_lengths(W: float, ell1: float, ell2: float, zeta: float, grid: GridSpec,
                            seed, *, gamma: float = math.sqrt(2), max_tries: int = 10_000
                            ) -> FieldSample:
    """One weighted sample, retrying rejected attempts.

    ``meta['acceptance_rate']`` records the observed rate; the unconditional
    weight is ``importance_weight * acceptance_rate``.
    """
    rng = as_rng(seed)
    for tries in range(1, max_tries + 1):
        res = disk_two_lengths(W, ell1, ell2, zeta, grid, 1, rng, gamma=gamma, keep=1)
        if res.samples:
            s = res.samples[0]
            return replace(s, meta={**s.meta, "acceptance_rate": 1 / tries, "tries": tries})
    raise NumericalError(f"no accepted sample in {max_tries} attempts; lengths too small?")


# ---------------------------------------------------------------------------
# dumps

def dump_field(sample: FieldSample, path=None, fmt: str = "csv"):
    """Write a field sample as CSV (header block + cell matrix) or ``.npz``."""
    header = {
        "format": FORMAT_VERSION, "gamma": sample.params.gamma, "W": sample.params.W,
        "kind": sample.kind.value, "t_cut": sample.grid.t_cut, "nx": sample.grid.nx,
        "ny": sample.grid.ny, "seed": sample.seed, "c_const": sample.c_const,
        "importance_weight": sample.importance_weight,
    }
    if fmt == "npz":
        np.savez(path, horizontal=sample.horizontal.values, lateral=sample.lateral,
                 **{k: np.asarray(str(v)) for k, v in header.items()})
        return path
    buf = io.StringIO()
    for k, v in header.items():
        buf.write(f"# {k}={v}\n")
    buf.write("# rows: horizontal node values, then lateral cell values row by row\n")
    np.savetxt(buf, sample.horizontal.values[None, :], delimiter=",", fmt="%.17g")
    np.savetxt(buf, sample.lateral, delimiter=",", fmt="%.17g")
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w") as fh:
        fh.write(text)
    return path


def load_field(path) -> FieldSample:
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = {}
    for ln in lines:
        if ln.startswith("# ") and "=" in ln:
            k, v = ln[2:].split("=", 1)
            header[k] = v
    if header.get("format") != FORMAT_VERSION:
        raise ParameterError(f"unsupported field format {header.get('format')!r}")
    body = [ln for ln in lines if not ln.startswith("#")]
    grid = GridSpec(float(header["t_cut"]), int(header["nx"]), int(header["ny"]))
    horizontal = np.loadtxt(body[:1], delimiter=",", ndmin=1)
    lateral = np.loadtxt(body[1:], delimiter=",", ndmin=2)
    seed = None if header["seed"] == "None" else int(header["seed"])
    return FieldSample(grid, HorizontalProcess(grid.nodes, horizontal), lateral,
                       float(header["c_const"]), Kind(header["kind"]),
                       derive_params(float(header["gamma"]), float(header["W"])),
                       float(header["importance_weight"]), seed)
