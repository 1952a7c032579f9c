"""Correlated planar Brownian motion in the quadrant.

Coordinates are ``(L, R)`` with ``Var L_t = Var R_t = a2 t`` and
``Cov(L_t, R_t) = -cos(pi gamma^2/4) a2 t``.  The shear ``Lambda`` turns the
pair into standard planar Brownian motion and the quadrant into the wedge
``{0 < arg w < theta}``, ``theta = pi gamma^2 / 4``; ``w -> w^(pi/theta)``
then opens the wedge to the upper half-plane.

Exit *positions* are sampled by walk on spheres in the sheared wedge, which
has no time-discretization error.  Exit *times* and full paths use an Euler
scheme with a Brownian-bridge crossing test at every step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InsufficientSamplesError, ParameterError
from .parallel import pmap
from .rng import child_seed, chunk_sizes

CHUNK = 1_000_000
SHELL = 1e-7


@dataclass(frozen=True)
class CovSpec:
    gamma: float
    a2: float | None = None

    def __post_init__(self):
        if not (0 < self.gamma < 2):
            raise ParameterError("gamma must lie in (0, 2)")
        if self.a2 is None:
            object.__setattr__(self, "a2", 2 / math.sin(math.pi * self.gamma**2 / 4))
        if not self.a2 > 0:
            raise ParameterError("a2 must be positive")

    @property
    def theta(self) -> float:
        return math.pi * self.gamma**2 / 4

    @property
    def correlation(self) -> float:
        return -math.cos(self.theta)

    @property
    def cov_matrix(self) -> np.ndarray:
        rho = self.correlation
        return self.a2 * np.array([[1.0, rho], [rho, 1.0]])

    @property
    def exponent(self) -> float:
        """4/gamma^2 = pi/theta, the opening power of the wedge."""
        return 4 / self.gamma**2


@dataclass(frozen=True)
class ConePath:
    start: tuple
    dt: float
    points: np.ndarray  # (steps+1, 2), last row is the exit point
    exit_point: tuple
    exit_time: float

    @property
    def steps(self) -> int:
        return len(self.points) - 1


@dataclass(frozen=True)
class KernelEstimate:
    value: float
    stderr: float
    n_paths: int
    params: dict = field(default_factory=dict)
    hits: int = 0
    upper_bound: float | None = None  # one-sided 95% bound when there are no hits


def shear(point, gamma: float, a2: float | None = None) -> complex:
    cov = CovSpec(gamma, a2)
    L, R = point
    th = cov.theta
    a = math.sqrt(cov.a2)
    return complex((L / math.sin(th) + R / math.tan(th)) / a, R / a)


def shear_and_power(point, gamma: float, a2: float | None = None) -> complex:
    """Map a point of the closed quadrant to the closed upper half-plane."""
    w = shear(point, gamma, a2)
    if w == 0:
        return 0j
    q = 4 / gamma**2
    r, phi = abs(w), math.atan2(w.imag, w.real)
    return complex(r**q * math.cos(q * phi), r**q * math.sin(q * phi))


def closed_form_kernel(ell: float, r: float, gamma: float) -> float:
    """``(l r)^(q-1) / (l^q + r^q)^2`` with ``q = 4/gamma^2`` (unit constant)."""
    if not (ell > 0 and r > 0):
        raise ParameterError("ell and r must be positive")
    q = 4 / gamma**2
    return (ell * r) ** (q - 1) / (ell**q + r**q) ** 2


# ---------------------------------------------------------------------------
# walk on spheres

@numba.njit(cache=True)
def _wos_exit(L0, R0, theta, a, n, seed, shell, max_steps):
    """Exit data for ``n`` paths from ``(L0, R0)``.

    Returns ``(axis, pos)``: axis 0 = exit on the L axis (R = 0), 1 = exit on the
    R axis (L = 0), -1 = no exit within ``max_steps``; ``pos`` is the coordinate
    along the exit axis.
    """
    np.random.seed(seed)
    axis = np.empty(n, np.int8)
    pos = np.empty(n)
    st, ct = math.sin(theta), math.cos(theta)
    x0 = (L0 + R0 * ct) / st / a
    y0 = R0 / a
    half = 0.5 * math.pi
    for i in range(n):
        x, y = x0, y0
        axis[i] = -1
        pos[i] = np.nan
        for _ in range(max_steps):
            r = math.hypot(x, y)
            phi = math.atan2(y, x)
            d0 = r * math.sin(phi) if phi < half else r
            d1 = r * math.sin(theta - phi) if theta - phi < half else r
            if d0 <= d1:
                if d0 < shell:
                    axis[i] = 0
                    rho = r * math.cos(phi) if phi < half else 0.0
                    pos[i] = rho * a * st
                    break
                d = d0
            else:
                if d1 < shell:
                    axis[i] = 1
                    rho = r * math.cos(theta - phi) if theta - phi < half else 0.0
                    pos[i] = rho * a * st
                    break
                d = d1
            u = 2 * math.pi * np.random.random()
            x += d * math.cos(u)
            y += d * math.sin(u)
    return axis, pos


def _exit_chunk(task):
    L0, R0, theta, a, n, seed, shell, max_steps = task
    return _wos_exit(L0, R0, theta, a, n, seed, shell, max_steps)


def exit_positions(start, cov: CovSpec, n: int, seed: int, *, shell: float = SHELL,
                   max_steps: int = 100_000, workers=None, chunk: int = CHUNK):
    """Exit axis and position for ``n`` paths (walk on spheres)."""
    L0, R0 = map(float, start)
    if not (L0 > 0 and R0 > 0):
        raise ParameterError("start must lie in the open quadrant")
    a = math.sqrt(cov.a2)
    tasks = [(L0, R0, cov.theta, a, m, child_seed(seed, k) % (2**32), shell, max_steps)
             for k, m in enumerate(chunk_sizes(n, chunk))]
    res = pmap(_exit_chunk, tasks, workers)
    return (np.concatenate([r[0] for r in res]), np.concatenate([r[1] for r in res]))


def _count_window(axis, pos, ax, lo, hi):
    return int(np.count_nonzero((axis == ax) & (pos > lo) & (pos < hi)))


def _hits_to_estimate(hits, n, scale, params):
    p = hits / n
    se = math.sqrt(p * (1 - p) / n)
    ub = None if hits else 3.0 / n * scale  # rule of three
    return KernelEstimate(p * scale, se * scale, n, params, hits, ub)


def exit_corner_prob(start, eps: float, cov: CovSpec, dt=None, n: int = 10**6, seed: int = 0,
                     *, workers=None) -> KernelEstimate:
    """P[exit through the segment ``(0, i eps)`` of the vertical axis]."""
    if not eps > 0:
        raise ParameterError("eps must be positive")
    axis, pos = exit_positions(start, cov, n, seed, workers=workers)
    hits = _count_window(axis, pos, 1, 0.0, eps)
    return _hits_to_estimate(hits, n, 1.0, {"start": tuple(start), "eps": eps,
                                            "gamma": cov.gamma})


def corner_probs(start, eps_values, cov: CovSpec, n: int, seed: int, *, workers=None):
    """Corner-exit probabilities for several ``eps`` from one set of paths."""
    axis, pos = exit_positions(start, cov, n, seed, workers=workers)
    return [_hits_to_estimate(_count_window(axis, pos, 1, 0.0, e), n, 1.0,
                              {"start": tuple(start), "eps": e, "gamma": cov.gamma})
            for e in eps_values]


def _raw_kernel(ell, r, h, cov, n, seed, workers):
    axis, pos = exit_positions((ell, h), cov, n, seed, workers=workers)
    return ((axis == 1) & (pos > r) & (pos < r + h)).astype(float) / (h * h)


def kernel_estimate(ell: float, r: float, delta: float, eps: float | None, cov: CovSpec,
                    dt=None, n: int = 10**6, seed: int = 0, *, richardson: bool = True,
                    workers=None) -> KernelEstimate:
    """Finite-difference estimate of the bulk-to-boundary excursion kernel.

    ``(1/(delta eps)) P_(ell, delta)[exit in (r i, (r + eps) i)]``.  With
    ``richardson`` the estimate uses the pair ``delta = eps = h`` and ``2h``
    (common random numbers) and returns ``2 K(h) - K(2h)``.
    """
    if not (ell > 0 and r > 0 and delta > 0):
        raise ParameterError("ell, r, delta must be positive")
    eps = delta if eps is None else eps
    params = {"ell": ell, "r": r, "delta": delta, "eps": eps, "gamma": cov.gamma,
              "richardson": richardson}
    if not richardson:
        axis, pos = exit_positions((ell, delta), cov, n, seed, workers=workers)
        hits = _count_window(axis, pos, 1, r, r + eps)
        return _hits_to_estimate(hits, n, 1 / (delta * eps), params)
    if eps != delta:
        raise ParameterError("the Richardson pair uses delta = eps")
    k1 = _raw_kernel(ell, r, delta, cov, n, seed, workers)
    k2 = _raw_kernel(ell, r, 2 * delta, cov, n, seed, workers)
    x = 2 * k1 - k2
    hits = int(np.count_nonzero(k1))
    return KernelEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)), n, params, hits)


def ratio_estimate(num: KernelEstimate, den: KernelEstimate) -> tuple[float, float]:
    """Ratio of two independent estimates with a delta-method standard error."""
    q = num.value / den.value
    rel = math.hypot(num.stderr / num.value, den.stderr / den.value)
    return q, abs(q) * rel


# ---------------------------------------------------------------------------
# Euler paths with bridge-corrected exit detection

@numba.njit(cache=True)
def _euler_exit(L0, R0, a2, rho, dt, n, seed, max_steps):
    """Exit time, axis and position of ``n`` Euler paths."""
    np.random.seed(seed)
    s = math.sqrt(a2 * dt)
    c2 = math.sqrt(1 - rho * rho)
    tout = np.empty(n)
    axis = np.empty(n, np.int8)
    pos = np.empty(n)
    for i in range(n):
        L, R = L0, R0
        axis[i] = -1
        tout[i] = np.nan
        pos[i] = np.nan
        for k in range(max_steps):
            z1 = np.random.standard_normal()
            z2 = np.random.standard_normal()
            L1 = L + s * z1
            R1 = R + s * (rho * z1 + c2 * z2)
            pL = 1.0 if L1 <= 0 else math.exp(-2 * L * L1 / (a2 * dt))
            pR = 1.0 if R1 <= 0 else math.exp(-2 * R * R1 / (a2 * dt))
            uL = np.random.random()
            uR = np.random.random()
            hitL = uL < pL
            hitR = uR < pR
            if hitL or hitR:
                if hitL and (not hitR or pL >= pR):
                    axis[i] = 1
                    pos[i] = max(0.5 * (R + R1), 0.0)
                else:
                    axis[i] = 0
                    pos[i] = max(0.5 * (L + L1), 0.0)
                tout[i] = (k + 0.5) * dt
                break
            L, R = L1, R1
    return tout, axis, pos


def _euler_chunk(task):
    return _euler_exit(*task)


def euler_exits(start, cov: CovSpec, dt: float, n: int, seed: int, *, max_steps=10**7,
                workers=None, chunk=200_000):
    L0, R0 = map(float, start)
    if not (L0 > 0 and R0 > 0):
        raise ParameterError("start must lie in the open quadrant")
    tasks = [(L0, R0, cov.a2, cov.correlation, dt, m, child_seed(seed, k) % (2**32), max_steps)
             for k, m in enumerate(chunk_sizes(n, chunk))]
    res = pmap(_euler_chunk, tasks, workers)
    return tuple(np.concatenate([r[j] for r in res]) for j in range(3))


def sample_cone_path(start, cov: CovSpec, dt: float, seed, *, max_steps: int = 10**7
                     ) -> ConePath:
    """One Euler path stopped at the (bridge-corrected) exit from the quadrant."""
    L0, R0 = map(float, start)
    if not (L0 > 0 and R0 > 0):
        raise ParameterError("start must lie in the open quadrant")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(cov.cov_matrix * dt)
    pts = [(L0, R0)]
    L, R = L0, R0
    block = 4096
    k = 0
    while k < max_steps:
        inc = rng.standard_normal((block, 2)) @ chol.T
        u = rng.random((block, 2))
        for (dl, dr), (uL, uR) in zip(inc, u):
            L1, R1 = L + dl, R + dr
            pL = 1.0 if L1 <= 0 else math.exp(-2 * L * L1 / (cov.a2 * dt))
            pR = 1.0 if R1 <= 0 else math.exp(-2 * R * R1 / (cov.a2 * dt))
            hitL, hitR = uL < pL, uR < pR
            k += 1
            if hitL or hitR:
                if hitL and (not hitR or pL >= pR):
                    ex = (0.0, max(0.5 * (R + R1), 0.0))
                else:
                    ex = (max(0.5 * (L + L1), 0.0), 0.0)
                pts.append(ex)
                return ConePath((L0, R0), dt, np.asarray(pts), ex, (k - 0.5) * dt)
            L, R = L1, R1
            pts.append((L, R))
    raise ParameterError(f"no exit within {max_steps} steps")


def duration_samples(ell: float, r_window, cov: CovSpec, dt: float, n: int, seed: int, *,
                     delta: float = 0.05, workers=None) -> np.ndarray:
    """Exit times of paths from ``(ell, delta)`` that exit the R axis inside ``r_window``."""
    lo, hi = map(float, r_window)
    t, axis, pos = euler_exits((ell, delta), cov, dt, n, seed, workers=workers)
    keep = (axis == 1) & (pos > lo) & (pos < hi)
    if not keep.any():
        raise InsufficientSamplesError(
            f"no path exited in ({lo}, {hi}) out of {n}; widen the window or raise n")
    return t[keep]


def increments(cov: CovSpec, dt: float, n: int, seed) -> np.ndarray:
    """``n`` correlated increments over time ``dt``, shape ``(n, 2)``."""
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(cov.cov_matrix * dt)
    return rng.standard_normal((n, 2)) @ chol.T


def path_csv(path: ConePath, out=None) -> str:
    lines = [f"# lqglab-cone-path/1 start={path.start} dt={path.dt} exit_time={path.exit_time}",
             "t,L,R"]
    lines += [f"{k * path.dt:.10g},{L:.17g},{R:.17g}" for k, (L, R) in enumerate(path.points)]
    text = "\n".join(lines) + "\n"
    if out is not None:
        with open(out, "w") as fh:
            fh.write(text)
    return text
