"""Chordal SLE_kappa(rho_-; rho_+) by Loewner evolution, and multiple SLE.

The driving function follows the force-point system

    dW = sqrt(kappa) dB + rho_-/(W - V_-) dt + rho_+/(W - V_+) dt,
    dV_(+-) = 2/(V_(+-) - W) dt,

with both force points started at ``0``.  ``(W - V_-)/sqrt(kappa)`` is a
Bessel process of dimension ``1 + 2(rho_- + 2)/kappa``; whenever a gap is
within a few ``sqrt(kappa dt)`` of zero it is advanced by its exact Bessel
transition instead of an Euler step.  Curves are traced by composing the
inverse vertical-slit maps backwards from the tip.
"""
from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ComponentError, NumericalError, ParameterError
from .parallel import pmap
from .report import LawReport
from .rng import child_seed

GAP_FACTOR = 5.0  # exact Bessel steps when a gap is below GAP_FACTOR * sqrt(kappa dt)


@dataclass(frozen=True)
class DrivingPath:
    dt: float
    W: np.ndarray
    V_minus: np.ndarray
    V_plus: np.ndarray
    kappa: float
    rho_minus: float
    rho_plus: float

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.W.size)

    @property
    def n_steps(self) -> int:
        return self.W.size - 1


@dataclass(frozen=True)
class LoewnerCurve:
    points: np.ndarray  # complex, tip positions at ``steps``
    steps: np.ndarray
    driving: DrivingPath | None
    touched_left: bool = False
    touched_right: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def times(self) -> np.ndarray:
        dt = self.driving.dt if self.driving is not None else self.meta.get("dt", 1.0)
        return self.steps * dt


def bessel_dimension(kappa: float, rho: float) -> float:
    return 1 + 2 * (rho + 2) / kappa


def _check(kappa, rho_minus, rho_plus):
    if not (0 < kappa <= 4):
        raise ParameterError("kappa must lie in (0, 4]")
    if not (rho_minus > -2 and rho_plus > -2):
        raise ParameterError("force weights must exceed -2")


@numba.njit(cache=True)
def _bessel_step(x, d, kappa, h):
    """Exact transition of a gap ``x`` with ``x/sqrt(kappa)`` Bessel of dimension ``d > 1``.

    Uses ``X_h^2 = (x + sqrt(kappa h) Z)^2 + kappa h chi^2_(d-1)`` and also
    returns ``Z``, the radial Gaussian, which is used as the driving noise.
    """
    z = np.random.standard_normal()
    r = x + math.sqrt(kappa * h) * z
    return math.sqrt(r * r + kappa * h * np.random.chisquare(d - 1)), z


@numba.njit(cache=True)
def _substep(w, vm, vp, h, kappa, rm, rp, dm, dp, g):
    """Advance ``(W, V_-, V_+)`` by time ``h``; at most one gap may be small.

    A small gap ``X`` is advanced exactly and ``W`` is recovered from the
    identity ``W = (2/(rho+2)) sqrt(kappa) B + (rho/(rho+2)) X`` (plus the
    smooth drift of the far force point).
    """
    xm = w - vm
    xp = vp - w
    lim = g * math.sqrt(kappa * h)
    sk = math.sqrt(kappa * h)
    if xm < lim:
        xm1, z = _bessel_step(xm, dm, kappa, h)
        w1 = w + (2 * sk * z + rm * (xm1 - xm)) / (rm + 2) - rp / xp * h
        vp = vp + 2 * h / xp
        vm = w1 - xm1
        w = min(w1, vp)
    elif xp < lim:
        xp1, z = _bessel_step(xp, dp, kappa, h)
        # mirror image: the gap V_+ - W is driven by -B
        w1 = w - (2 * sk * z + rp * (xp1 - xp)) / (rp + 2) + rm / xm * h
        vm = vm - 2 * h / xm
        vp = w1 + xp1
        w = max(w1, vm)
    else:
        w1 = w + sk * np.random.standard_normal() + (rm / xm - rp / xp) * h
        vm = vm - 2 * h / xm
        vp = vp + 2 * h / xp
        w = min(max(w1, vm), vp)
    return w, vm, vp


@numba.njit(cache=True)
def _drive(kappa, rm, rp, n, dt, seed, gap_factor):
    np.random.seed(seed)
    W = np.zeros(n + 1)
    Vm = np.zeros(n + 1)
    Vp = np.zeros(n + 1)
    dm = 1 + 2 * (rm + 2) / kappa
    dp = 1 + 2 * (rp + 2) / kappa
    big = 2 * gap_factor
    # force points start a negligible distance apart (scale invariance makes
    # this equivalent to starting the clock at time ~eps0^2/kappa)
    eps0 = 1e-6 * math.sqrt(kappa * dt)
    w, vm, vp = 0.0, -eps0, eps0
    for k in range(n):
        left = dt
        while left > 0:
            top = max(w - vm, vp - w)
            # substeps keep the larger gap well above sqrt(kappa h), so at
            # most one gap needs the exact Bessel step
            h = min(left, top * top / (kappa * big * big))
            w, vm, vp = _substep(w, vm, vp, h, kappa, rm, rp, dm, dp, gap_factor)
            left -= h
        W[k + 1] = w
        Vm[k + 1] = vm
        Vp[k + 1] = vp
    return W, Vm, Vp


def sample_driving(kappa: float, rho_minus: float, rho_plus: float, n_steps: int, dt: float,
                   seed: int) -> DrivingPath:
    _check(kappa, rho_minus, rho_plus)
    if not (n_steps >= 1 and dt > 0):
        raise ParameterError("need n_steps >= 1 and dt > 0")
    W, Vm, Vp = _drive(float(kappa), float(rho_minus), float(rho_plus), int(n_steps), float(dt),
                       int(seed) % 2**32, GAP_FACTOR)
    return DrivingPath(float(dt), W, Vm, Vp, float(kappa), float(rho_minus), float(rho_plus))


@numba.njit(cache=True)
def _inverse_slit(z, u, dt):
    """Inverse of ``z -> u + sqrt((z-u)^2 + 4 dt)`` with values in the closed upper half-plane."""
    s = np.sqrt((z - u) * (z - u) - 4 * dt + 0j)
    if s.imag < 0 or (s.imag == 0 and (z - u).real * s.real < 0):
        s = -s
    return u + s


@numba.njit(cache=True)
def _trace_points(W, dt, steps):
    out = np.empty(steps.size, np.complex128)
    for i in range(steps.size):
        k = steps[i]
        if k == 0:
            out[i] = 0j
            continue
        z = W[k] + 0j
        for j in range(k, 0, -1):
            z = _inverse_slit(z, 0.5 * (W[j] + W[j - 1]), dt)
        out[i] = z
    return out


@numba.njit(cache=True)
def _pull_back(points, W, dt, k):
    """Apply ``g_(k dt)^(-1)`` to each point."""
    out = np.empty(points.size, np.complex128)
    for i in range(points.size):
        z = points[i]
        for j in range(k, 0, -1):
            z = _inverse_slit(z, 0.5 * (W[j] + W[j - 1]), dt)
        out[i] = z
    return out


def _touches(driving: DrivingPath, gap_tol: float) -> tuple[bool, bool]:
    t = driving.times[1:]
    s = np.sqrt(driving.kappa * t)
    left = np.min((driving.W[1:] - driving.V_minus[1:]) / s) < gap_tol
    right = np.min((driving.V_plus[1:] - driving.W[1:]) / s) < gap_tol
    return bool(left), bool(right)


def trace_curve(driving: DrivingPath, n_points: int | None = None, *,
                gap_tol: float = 1e-3) -> LoewnerCurve:
    """Tips ``gamma(k dt)`` at ``n_points`` evenly spaced steps (all steps by default).

    Cost is ``O(n_points * n_steps)``.  ``touched_*`` flags compare the scaled
    force-point gaps with ``gap_tol``.
    """
    n = driving.n_steps
    m = n if n_points is None else min(int(n_points), n)
    steps = np.unique(np.round(np.linspace(0, n, m + 1)).astype(np.int64))
    pts = _trace_points(driving.W, driving.dt, steps)
    if not np.all(np.isfinite(pts)):
        bad = int(steps[np.flatnonzero(~np.isfinite(pts))[0]])
        raise NumericalError(f"curve tracing blew up at step {bad}")
    left, right = _touches(driving, gap_tol)
    return LoewnerCurve(pts, steps, driving, left, right)


# ---------------------------------------------------------------------------
# boundary hitting

@numba.njit(cache=True)
def _local_minima(g, k0, count):
    """Indices of the ``count`` smallest strict local minima of ``g`` beyond ``k0``."""
    idx = []
    vals = []
    for k in range(max(k0, 1), g.size - 1):
        if g[k] <= g[k - 1] and g[k] <= g[k + 1]:
            idx.append(k)
            vals.append(g[k])
    if g.size - 1 >= k0:
        idx.append(g.size - 1)
        vals.append(g[g.size - 1])
    order = np.argsort(np.array(vals))
    out = np.empty(min(count, order.size), np.int64)
    for i in range(out.size):
        out[i] = idx[order[i]]
    return out


def gap_scores(driving: DrivingPath, *, min_step: int = 1) -> tuple[float, float]:
    """Smallest scaled force-point gaps ``(W - V_-)/sqrt(kappa t)`` and ``(V_+ - W)/sqrt(kappa t)``.

    The curve touches the left (right) boundary ray exactly when the left
    (right) gap vanishes, so this is the distance between tip and boundary in
    uniformized coordinates, relative to the curve's capacity scale.
    """
    t = driving.times[min_step:]
    s = np.sqrt(driving.kappa * t)
    left = (driving.W[min_step:] - driving.V_minus[min_step:]) / s
    right = (driving.V_plus[min_step:] - driving.W[min_step:]) / s
    return float(np.min(left)), float(np.min(right))


def geometric_scores(driving: DrivingPath, *, candidates: int = 8, min_step: int = 100
                     ) -> tuple[float, float]:
    """Smallest relative distance ``Im(z)/|z|`` of traced tips to each boundary ray.

    Candidate tips are the deepest local minima of the scaled force-point gaps,
    which is where the curve comes closest to the corresponding ray.  The left
    score uses tips with ``Re z < 0``, the right score those with ``Re z > 0``.
    Tips are only resolved to about ``sqrt(dt/t)`` relative distance.
    """
    t = driving.times
    s = np.sqrt(driving.kappa * np.maximum(t, driving.dt))
    out = []
    for gap, sign in ((driving.W - driving.V_minus, -1.0), (driving.V_plus - driving.W, 1.0)):
        ks = _local_minima(gap / s, min_step, candidates)
        if ks.size == 0:
            out.append(1.0)
            continue
        tips = _trace_points(driving.W, driving.dt, np.sort(ks))
        rel = np.where(sign * tips.real > 0, tips.imag / np.abs(tips), 1.0)
        out.append(float(np.min(rel)))
    return out[0], out[1]


PROXIES = {"gap": gap_scores, "geometric": geometric_scores}


def _hit_task(task):
    kappa, rm, rp, n_steps, dt, seed, proxy = task
    d = sample_driving(kappa, rm, rp, n_steps, dt, seed)
    return PROXIES[proxy](d)


def hit_score_samples(kappa: float, rho_minus: float, rho_plus: float, n_curves: int, seed: int,
                      *, n_steps: int = 100_000, dt: float = 1e-5, proxy: str = "gap",
                      workers=None) -> np.ndarray:
    """Per-curve ``(left, right)`` scores, shape ``(n_curves, 2)``."""
    _check(kappa, rho_minus, rho_plus)
    if proxy not in PROXIES:
        raise ParameterError(f"unknown proxy {proxy!r}; choose from {sorted(PROXIES)}")
    tasks = [(kappa, rho_minus, rho_plus, n_steps, dt, child_seed(seed, i) % 2**32, proxy)
             for i in range(n_curves)]
    return np.asarray(pmap(_hit_task, tasks, workers), float).reshape(-1, 2)


def boundary_hit_stats(kappa: float, rho_minus: float, rho_plus: float, n_curves: int,
                       threshold: float, seed: int, *, n_steps: int = 100_000, dt: float = 1e-5,
                       proxy: str = "gap", workers=None, scores: np.ndarray | None = None
                       ) -> LawReport:
    """Fraction of curves whose ``proxy`` score drops below ``threshold`` for each ray.

    The estimate is the left-hit fraction; the right fraction is in ``extra``.
    The target is 1 if ``rho_-`` is below ``kappa/2 - 2`` and 0 otherwise, with
    tolerance 0.05.
    """
    t0 = time.perf_counter()
    if scores is None:
        scores = hit_score_samples(kappa, rho_minus, rho_plus, n_curves, seed, n_steps=n_steps,
                                   dt=dt, proxy=proxy, workers=workers)
    left = float(np.mean(scores[:, 0] < threshold))
    right = float(np.mean(scores[:, 1] < threshold))
    n = scores.shape[0]
    return LawReport(
        name="sle_hitting",
        params={"kappa": kappa, "rho_minus": rho_minus, "rho_plus": rho_plus,
                "threshold": threshold, "n_steps": n_steps, "dt": dt, "proxy": proxy},
        estimate=left, stderr=math.sqrt(max(left * (1 - left), 1e-12) / n),
        target=1.0 if rho_minus < kappa / 2 - 2 else 0.0, tolerance=0.05, n=n, seed=seed,
        runtime_ms=1e3 * (time.perf_counter() - t0),
        extra={"right_fraction": right})


def crossing_point(rhos, fractions, level: float = 0.5) -> float:
    """First ``rho`` at which the piecewise-linear fraction curve falls through ``level``."""
    r = np.asarray(rhos, float)
    f = np.asarray(fractions, float)
    for i in range(r.size - 1):
        if f[i] >= level > f[i + 1]:
            return float(r[i] + (f[i] - level) / (f[i] - f[i + 1]) * (r[i + 1] - r[i]))
    return math.nan


# ---------------------------------------------------------------------------
# multiple SLE

def _left_map(points: np.ndarray, driving: DrivingPath) -> np.ndarray:
    """Map ``H`` onto the unbounded component left of the traced curve.

    ``z -> W_T + i s sqrt(z - 1)`` with ``s = W_T - V_-(T)`` sends ``H`` to the
    quadrant left of ``W_T``, with ``0 -> V_-(T)`` and ``1 -> W_T``; ``g_T^(-1)``
    then carries it into ``H`` minus the curve.  The vertical ray above ``W_T``
    stands in for the part of the curve after time ``T``.
    """
    k = driving.n_steps
    wT, vT = driving.W[k], driving.V_minus[k]
    s = wT - vT
    if not s > 0:
        raise ComponentError(f"left gap W_T - V_-(T) = {s} is not positive")
    q = np.sqrt(points.astype(np.complex128) - 1)
    q = np.where(q.imag < 0, -q, q)
    w = wT + 1j * s * q
    return _pull_back(w, driving.W, driving.dt, k)


def count_left_touches(driving: DrivingPath, gap_tol: float = 1e-3) -> int:
    """Number of separate approaches of the scaled left gap below ``gap_tol``."""
    t = driving.times[1:]
    g = (driving.W[1:] - driving.V_minus[1:]) / np.sqrt(driving.kappa * t)
    below = g < gap_tol
    return int(np.count_nonzero(below[1:] & ~below[:-1]) + (1 if below[0] else 0))


def sample_multiple(weights, gamma: float, n_steps: int, dt: float, seed: int, *,
                    n_points: int = 1000) -> list[LoewnerCurve]:
    """Curves ``eta_1, ..., eta_(n-1)`` of the recursive multiple SLE for ``n`` weights.

    ``eta_(n-1)`` is SLE_kappa(W_1 + ... + W_(n-1) - 2; W_n - 2); the remaining
    curves are sampled with weights ``W_1..W_(n-1)`` in the unbounded left
    component and mapped in.  Bounded components cut off by boundary touches
    are not filled; their number is recorded in ``meta["neglected"]``.
    """
    ws = [float(w) for w in weights]
    if len(ws) < 2:
        raise ParameterError("need at least two weights")
    if any(w <= 0 for w in ws):
        raise ParameterError("weights must be positive")
    kappa = gamma**2
    d = sample_driving(kappa, sum(ws[:-1]) - 2, ws[-1] - 2, n_steps, dt, child_seed(seed, 0))
    top = trace_curve(d, n_points)
    top.meta["weights"] = tuple(ws)
    if len(ws) == 2:
        return [top]
    inner = sample_multiple(ws[:-1], gamma, n_steps, dt, child_seed(seed, 1), n_points=n_points)
    neglected = count_left_touches(d)
    out = []
    for c in inner:
        pts = _left_map(c.points, d)
        out.append(LoewnerCurve(pts, c.steps, None, c.touched_left, c.touched_right,
                                {**c.meta, "dt": dt, "mapped_through": len(ws) - 1,
                                 "neglected": neglected + c.meta.get("neglected", 0)}))
    top.meta["neglected"] = neglected
    return out + [top]


def is_left_of(points: np.ndarray, curve: LoewnerCurve) -> np.ndarray:
    """Whether each point lies left of ``curve`` closed by a vertical ray above its tip.

    Counts crossings of the horizontal ray ``{p + s, s > 0}``: an odd count
    means the point is on the left.
    """
    c = curve.points
    x0, y0 = c.real[:-1], c.imag[:-1]
    x1, y1 = c.real[1:], c.imag[1:]
    out = np.empty(points.size, bool)
    for i, p in enumerate(np.asarray(points)):
        straddle = (y0 > p.imag) != (y1 > p.imag)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x0 + (p.imag - y0) / (y1 - y0) * (x1 - x0)
        n = int(np.count_nonzero(straddle & (xc > p.real)))
        # the closing ray above the tip
        if p.imag > c[-1].imag and c[-1].real > p.real:
            n += 1
        out[i] = n % 2 == 1
    return out


def min_distance(a: LoewnerCurve, b: LoewnerCurve) -> float:
    """Smallest distance between sampled points of two curves away from the root."""
    pa, pb = a.points[1:], b.points[1:]
    return float(np.min(np.abs(pa[:, None] - pb[None, :])))


def curve_csv(curve: LoewnerCurve, path=None) -> str:
    buf = io.StringIO()
    buf.write("# lqglab-curve/1\nt,x,y\n")
    for t, z in zip(curve.times, curve.points):
        buf.write(f"{t:.10g},{z.real:.17g},{z.imag:.17g}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def driving_csv(driving: DrivingPath, path=None) -> str:
    buf = io.StringIO()
    buf.write(f"# lqglab-driving/1 kappa={driving.kappa!r} rho_minus={driving.rho_minus!r} "
              f"rho_plus={driving.rho_plus!r}\nt,W,V_minus,V_plus\n")
    for t, w, a, b in zip(driving.times, driving.W, driving.V_minus, driving.V_plus):
        buf.write(f"{t:.10g},{w:.17g},{a:.17g},{b:.17g}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
