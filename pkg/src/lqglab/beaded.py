"""Bead chains of thin quantum surfaces at the level of boundary lengths.

A thin surface of weight ``W < gamma^2/2`` is a Poissonian chain of beads.
Labelling beads by their cut-point coordinate ``u in [0, T]``, the left
lengths form a Poisson point process with intensity ``du x L^(p-2) dL``,
``p = 2W/gamma^2``, whose partial sums are an ``(1-p)``-stable subordinator.
The Levy measure is truncated below at ``cutoff``; the constant in front of
it is set to 1.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate, special

from .errors import InsufficientSamplesError, ParameterError
from .parallel import pmap
from .rng import as_rng, child_seed, chunk_sizes

CHUNK = 20_000


def thin_exponent(W: float, gamma: float) -> float:
    """``p = 2W/gamma^2``; raises unless the weight is thin."""
    if not (0 < gamma < 2):
        raise ParameterError("gamma must lie in (0, 2)")
    p = 2 * W / gamma**2
    if not (0 < p < 1 - 1e-12):  # W = gamma^2/2 up to rounding is thick
        raise ParameterError(f"W={W} is not in the thin regime (0, gamma^2/2)")
    return p


def levy_mass(p: float, cutoff: float) -> float:
    """``int_cutoff^inf L^(p-2) dL``."""
    return cutoff ** (p - 1) / (1 - p)


@dataclass(frozen=True)
class Bead:
    u: float
    left_len: float
    right_len: float | None = None


@dataclass(frozen=True)
class BeadChain:
    u: np.ndarray
    left: np.ndarray
    T: float
    W: float
    gamma: float
    cutoff: float
    right: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.u.shape != self.left.shape:
            raise ParameterError("u and left must have the same length")
        if self.u.size and (np.any(np.diff(self.u) <= 0) or self.u[0] < 0 or self.u[-1] > self.T):
            raise ParameterError("labels must be strictly increasing inside [0, T]")

    def __len__(self) -> int:
        return int(self.u.size)

    @property
    def beads(self) -> list[Bead]:
        r = self.right if self.right is not None else [None] * len(self)
        return [Bead(float(a), float(b), None if c is None else float(c))
                for a, b, c in zip(self.u, self.left, r)]

    @property
    def left_length(self) -> float:
        return float(np.sum(self.left))

    @property
    def p(self) -> float:
        return 2 * self.W / self.gamma**2

    @property
    def cut_constant(self) -> float:
        """``(1 - p)^-2``, the constant in front of ``Leb`` for the law of ``T``."""
        return (1 - self.p) ** -2


@dataclass(frozen=True)
class SubordinatorPath:
    times: np.ndarray
    values: np.ndarray

    def at(self, t: float) -> float:
        """``L_t`` (right-continuous)."""
        k = np.searchsorted(self.times, t, side="right")
        return float(self.values[k - 1]) if k else 0.0


def sample_levy_marks(W: float, gamma: float, T: float, cutoff: float, seed) -> BeadChain:
    """Poisson chain of beads on ``[0, T]`` with left lengths above ``cutoff``."""
    p = thin_exponent(W, gamma)
    if not cutoff > 0:
        raise ParameterError("cutoff must be positive")
    if T < 0:
        raise ParameterError("T must be nonnegative")
    rng = as_rng(seed)
    n = rng.poisson(T * levy_mass(p, cutoff))
    u = np.sort(rng.uniform(0, T, n))
    left = cutoff * rng.random(n) ** (-1 / (1 - p))
    return BeadChain(u, left, float(T), float(W), float(gamma), float(cutoff))


def concatenate(first: BeadChain, second: BeadChain) -> BeadChain:
    """Chain of mass ``T1 + T2``: the second chain's labels are shifted by ``T1``."""
    if (first.W, first.gamma, first.cutoff) != (second.W, second.gamma, second.cutoff):
        raise ParameterError("chains must share W, gamma and cutoff")
    return BeadChain(np.concatenate((first.u, second.u + first.T)),
                     np.concatenate((first.left, second.left)), first.T + second.T,
                     first.W, first.gamma, first.cutoff)


def subordinator_path(chain: BeadChain) -> SubordinatorPath:
    return SubordinatorPath(chain.u.copy(), np.cumsum(chain.left))


@numba.njit(cache=True)
def _chain_sums(mean_count, inv, cutoff, n, seed):
    np.random.seed(seed)
    out = np.empty(n)
    for i in range(n):
        k = np.random.poisson(mean_count)
        s = 0.0
        for _ in range(k):
            s += cutoff * np.random.random() ** inv
        out[i] = s
    return out


def _sums_task(task):
    return _chain_sums(*task)


def subordinator_values(W: float, gamma: float, t: float, cutoff: float, n: int, seed: int,
                        *, workers=None) -> np.ndarray:
    """``n`` independent draws of ``L_t`` for the truncated subordinator."""
    p = thin_exponent(W, gamma)
    tasks = [(t * levy_mass(p, cutoff), -1 / (1 - p), cutoff, m, child_seed(seed, k) % 2**32)
             for k, m in enumerate(chunk_sizes(n, CHUNK))]
    return np.concatenate(pmap(_sums_task, tasks, workers)) if tasks else np.empty(0)


def laplace_exponent(values: np.ndarray, lam) -> np.ndarray:
    """Empirical ``-log E[exp(-lam L)]`` for each ``lam``."""
    lam = np.atleast_1d(np.asarray(lam, float))
    return -np.log(np.mean(np.exp(-np.outer(lam, values)), axis=1))


def stable_laplace_exponent(alpha: float, lam):
    """``Gamma(1 - alpha)/alpha * lam^alpha`` for the Levy measure ``L^(-1-alpha) dL``."""
    return special.gamma(1 - alpha) / alpha * np.asarray(lam, float) ** alpha


def delta_trim(chain: BeadChain, delta: float) -> tuple[BeadChain, float]:
    """Drop beads from the ``u = T`` end up to and including the one holding length ``delta``.

    Returns the trimmed chain and the dropped left length.
    """
    if not delta > 0:
        raise ParameterError("delta must be positive")
    total = chain.left_length
    if not total > delta:
        raise InsufficientSamplesError(f"chain left length {total} does not exceed delta={delta}")
    tail = np.cumsum(chain.left[::-1])
    k = int(np.searchsorted(tail, delta, side="left"))  # index from the end of the crossing bead
    keep = len(chain) - (k + 1)
    trimmed = BeadChain(chain.u[:keep], chain.left[:keep], chain.T, chain.W, chain.gamma,
                        chain.cutoff, None if chain.right is None else chain.right[:keep])
    return trimmed, float(tail[k])


# ---------------------------------------------------------------------------
# densities of the decomposition at a marked boundary point

def _check_ld(ell, delta):
    if not (ell > 0 and delta > 0):
        raise ParameterError("ell and delta must be positive")
    if not ell > delta:
        raise ParameterError("need ell > delta")


def f_unnormalized(ell, delta, p, x):
    """``delta^(1-p)/(1-p) * x^(-p) / ((ell - x)(ell - delta - x)^(1-p))`` on ``(0, ell-delta)``."""
    x = np.asarray(x, float)
    inside = (x > 0) & (x < ell - delta)
    xs = np.where(inside, x, 0.5 * (ell - delta))
    val = delta ** (1 - p) / (1 - p) * xs ** (-p) / ((ell - xs) * (ell - delta - xs) ** (1 - p))
    return np.where(inside, val, 0.0)


def f_integral_form(ell, delta, p, x) -> float:
    """``int_(ell-delta-x)^(ell-x) x^(-p) y^(p-2) (ell-x-y)^(-p) dy`` by quadrature."""
    if not 0 < x < ell - delta:
        return 0.0
    a = ell - x
    val, _ = integrate.quad(lambda y: y ** (p - 2), a - delta, a, weight="alg",
                            wvar=(0.0, -p), epsabs=0, epsrel=1e-13, limit=200)
    return x ** (-p) * val


def f_normalizer(ell, delta, p) -> float:
    # integrable singularities x^(-p) at 0 and (ell-delta-x)^(p-1) at the right end
    b = ell - delta
    g = lambda x: delta ** (1 - p) / (1 - p) / (ell - x)
    z, _ = integrate.quad(g, 0, b, weight="alg", wvar=(-p, p - 1), epsabs=0, epsrel=1e-13,
                          limit=200)
    return z


def f_density(ell: float, delta: float, W: float, gamma: float, x):
    """Density of the left length of the ``delta``-trimming of a length-``ell`` thin disk."""
    _check_ld(ell, delta)
    p = thin_exponent(W, gamma)
    out = f_unnormalized(ell, delta, p, x) / f_normalizer(ell, delta, p)
    return float(out) if np.ndim(out) == 0 else out


def f_cdf(ell: float, delta: float, W: float, gamma: float, x):
    """Distribution function of ``f_density`` (quadrature)."""
    _check_ld(ell, delta)
    p = thin_exponent(W, gamma)
    b = ell - delta
    z = f_normalizer(ell, delta, p)
    g = lambda s: delta ** (1 - p) / (1 - p) / (ell - s)

    def one(v):
        if v <= 0:
            return 0.0
        if v >= b:
            return 1.0
        # substitutions w = s^(1-p) and w = (b-s)^p remove the endpoint singularities
        if v <= 0.5 * b:
            q = 1 - p
            part, _ = integrate.quad(lambda w: g(w ** (1 / q)) * (b - w ** (1 / q)) ** (p - 1),
                                     0, v**q, epsabs=0, epsrel=1e-12, limit=200)
            return part / q / z
        part, _ = integrate.quad(lambda w: g(b - w ** (1 / p)) * (b - w ** (1 / p)) ** (-p),
                                 0, (b - v) ** p, epsabs=0, epsrel=1e-12, limit=200)
        return max(0.0, 1 - part / p / z)

    xs = np.atleast_1d(np.asarray(x, float))
    out = np.array([one(v) for v in xs])
    return float(out[0]) if np.ndim(x) == 0 else out


def tabulated_cdf(ell, delta, W, gamma, n_grid: int = 4000):
    """Fast interpolated cdf: exact at grid points clustered at both singular ends."""
    p = thin_exponent(W, gamma)
    b = ell - delta
    s = 0.5 * (1 - np.cos(np.linspace(0, math.pi, n_grid)))
    grid = b * s**2 * (3 - 2 * s)  # extra clustering at both ends
    vals = f_cdf(ell, delta, W, gamma, grid)
    vals[0], vals[-1] = 0.0, 1.0
    # in the variable x^(1-p) the cdf is smooth near 0
    t = grid ** (1 - p)

    def cdf(x):
        x = np.clip(np.asarray(x, float), 0, b)
        return np.interp(x ** (1 - p), t, vals)
    return cdf


def marked_decomposition_sample(W: float, gamma: float, ell: float, delta: float, seed,
                                size: int = 1) -> np.ndarray:
    """Draws ``(x, y, z)`` from ``x^(-p) y^(p-2) z^(-p)`` on ``{x < ell-delta < x+y < ell}``, ``z = ell-x-y``.

    ``x`` is drawn by rejection from a ``(ell-delta) Beta(1-p, p)`` proposal; ``y``
    given ``x`` by inverting its closed-form conditional distribution.
    """
    _check_ld(ell, delta)
    p = thin_exponent(W, gamma)
    rng = as_rng(seed)
    b = ell - delta
    xs = np.empty(0)
    while xs.size < size:
        m = 2 * (size - xs.size) + 16
        x = b * rng.beta(1 - p, p, m)
        ok = rng.random(m) < delta / (ell - x)
        xs = np.concatenate((xs, x[ok]))
    x = xs[:size]
    a = ell - x
    k = rng.random(size) ** (1 / (1 - p)) * delta / (a - delta)
    z = a * k / (1 + k)
    y = a - z
    return np.column_stack((x, y, z))


# ---------------------------------------------------------------------------
# chains conditioned on their total left length

@numba.njit(cache=True)
def _trimmed_left(mean_count, inv, cutoff, alpha, ell, delta, n, seed):
    """Trimmed left lengths of chains of cut mass 1 rescaled to total ``ell``.

    The weight ``S^(-alpha)`` turns the cut-mass-1 law into the length-``ell``
    disintegration of the ``Leb(T)``-mixture (scale invariance of the stable
    subordinator).
    """
    np.random.seed(seed)
    x = np.empty(n)
    w = np.empty(n)
    buf = np.empty(64)
    for i in range(n):
        k = np.random.poisson(mean_count)
        if k > buf.size:
            buf = np.empty(2 * k)
        s = 0.0
        for j in range(k):
            buf[j] = cutoff * np.random.random() ** inv
            s += buf[j]
        if k == 0:
            x[i] = np.nan
            w[i] = 0.0
            continue
        scale = ell / s
        acc = 0.0
        j = k - 1
        while j >= 0:
            acc += buf[j] * scale
            if acc >= delta:
                break
            j -= 1
        x[i] = max(ell - acc, 0.0)
        w[i] = s ** (-alpha)
    return x, w


def _trim_task(task):
    return _trimmed_left(*task)


def trimmed_lengths(W: float, gamma: float, ell: float, delta: float, n: int, seed: int, *,
                    cutoff: float = 1e-6, workers=None) -> tuple[np.ndarray, np.ndarray]:
    """Left lengths of ``delta``-trimmed chains with total left length ``ell``, with weights."""
    _check_ld(ell, delta)
    p = thin_exponent(W, gamma)
    tasks = [(levy_mass(p, cutoff), -1 / (1 - p), cutoff, 1 - p, ell, delta, m,
              child_seed(seed, k) % 2**32) for k, m in enumerate(chunk_sizes(n, CHUNK))]
    res = pmap(_trim_task, tasks, workers)
    x = np.concatenate([r[0] for r in res])
    w = np.concatenate([r[1] for r in res])
    keep = w > 0
    return x[keep], w[keep]


# ---------------------------------------------------------------------------
# two equivalent descriptions of a chain with a marked boundary point

@numba.njit(cache=True)
def _marked_direct(mean_count, inv, cutoff, n, seed):
    """Chain of cut mass T; mark a point uniformly by left length; length before its bead."""
    np.random.seed(seed)
    out = np.empty(n)
    buf = np.empty(64)
    i = 0
    while i < n:
        k = np.random.poisson(mean_count)
        if k == 0:
            continue
        if k > buf.size:
            buf = np.empty(2 * k)
        s = 0.0
        for j in range(k):
            buf[j] = cutoff * np.random.random() ** inv
            s += buf[j]
        v = np.random.random() * s
        acc = 0.0
        for j in range(k):
            if acc + buf[j] > v:
                break
            acc += buf[j]
        out[i] = acc
        i += 1
    return out


@numba.njit(cache=True)
def _marked_split(rate, inv, cutoff, T, n, seed):
    """``u ~ U[0, T]``; independent chains of masses ``u`` and ``T - u``; returns their left lengths."""
    np.random.seed(seed)
    a = np.empty(n)
    b = np.empty(n)
    for i in range(n):
        u = np.random.random() * T
        s = 0.0
        for _ in range(np.random.poisson(rate * u)):
            s += cutoff * np.random.random() ** inv
        a[i] = s
        s = 0.0
        for _ in range(np.random.poisson(rate * (T - u))):
            s += cutoff * np.random.random() ** inv
        b[i] = s
    return a, b


def _direct_task(task):
    return _marked_direct(*task)


def _split_task(task):
    return _marked_split(*task)


def biased_bead_weight(S, p: float, cutoff: float):
    """``int_cutoff^inf L * L^(p-2) / (S + L) dL``: normalized size-biased insertion weight."""
    S = np.asarray(S, float)
    t0 = cutoff / (S + cutoff)
    # L = S t/(1-t) turns the integrand into the Beta(p, 1-p) kernel
    return S ** (p - 1) * special.beta(p, 1 - p) * special.betaincc(p, 1 - p, t0)


def unbiased_bead_weight(S, p: float, cutoff: float):
    """``int_cutoff^inf L^(p-2) / (S + L) dL`` (mutation: bead not size-biased)."""
    S = np.atleast_1d(np.asarray(S, float))
    out = np.empty_like(S)
    for i, s in enumerate(S):
        out[i] = integrate.quad(lambda L: L ** (p - 2) / (s + L), cutoff, np.inf,
                                epsrel=1e-10, limit=200)[0]
    return out


def insert_bead(S, p: float, cutoff: float, rng) -> np.ndarray:
    """A bead length from ``L^(p-1)/(S + L) dL`` on ``(cutoff, inf)`` (exact inversion)."""
    S = np.asarray(S, float)
    t0 = cutoff / (S + cutoff)
    lo = special.betainc(p, 1 - p, t0)
    t = special.betaincinv(p, 1 - p, lo + (1 - lo) * rng.random(S.shape))
    return S * t / (1 - t)


@dataclass(frozen=True)
class DecompositionSamples:
    direct: np.ndarray
    split: np.ndarray
    weights: np.ndarray
    mutated_weights: np.ndarray


def decomposition_samples(W: float, gamma: float, T: float, n: int, seed: int, *,
                          cutoff: float = 1e-3, workers=None) -> DecompositionSamples:
    """Left length before the marked bead, by both procedures (same cutoff)."""
    p = thin_exponent(W, gamma)
    if not T > 0:
        raise ParameterError("T must be positive")
    rate, inv = levy_mass(p, cutoff), -1 / (1 - p)
    sizes = chunk_sizes(n, CHUNK)
    d = pmap(_direct_task, [(T * rate, inv, cutoff, m, child_seed(seed, 0, k) % 2**32)
                            for k, m in enumerate(sizes)], workers)
    s = pmap(_split_task, [(rate, inv, cutoff, T, m, child_seed(seed, 1, k) % 2**32)
                           for k, m in enumerate(sizes)], workers)
    before = np.concatenate([r[0] for r in s])
    after = np.concatenate([r[1] for r in s])
    S = before + after
    w = biased_bead_weight(S, p, cutoff)
    # mutation weight only depends on S through a smooth function: tabulate it
    grid = np.geomspace(max(S.min(), 1e-12), S.max() * 1.0001 + 1e-12, 400)
    wm = np.exp(np.interp(np.log(np.maximum(S, grid[0])), np.log(grid),
                          np.log(unbiased_bead_weight(grid, p, cutoff))))
    return DecompositionSamples(np.concatenate(d), before, w, wm)


def decomposition_equivalence_test(W: float, gamma: float, T: float, n: int, seed: int, *,
                                   cutoff: float = 1e-3, mutate: bool = False, workers=None,
                                   samples: DecompositionSamples | None = None):
    """Weighted two-sample KS between the two procedures.

    With ``mutate`` the inserted bead is drawn without size-biasing; that
    version must be rejected (p below 1e-3).
    """
    from . import laws

    d = samples or decomposition_samples(W, gamma, T, n, seed, cutoff=cutoff, workers=workers)
    params = {"W": W, "gamma": gamma, "T": T, "cutoff": cutoff}
    if mutate:
        return laws.ks_two_sample(d.direct, laws.EmpiricalSample(d.split, d.mutated_weights),
                                  name="decomposition_mutation", tolerance=1e-3,
                                  kind="pvalue_max", seed=seed, params=params)
    return laws.ks_two_sample(d.direct, laws.EmpiricalSample(d.split, d.weights),
                              name="decomposition_equivalence", seed=seed, params=params)


def chain_csv(chain: BeadChain, path=None) -> str:
    buf = io.StringIO()
    buf.write(f"# lqglab-chain/1 W={chain.W!r} gamma={chain.gamma!r} T={chain.T!r} "
              f"cutoff={chain.cutoff!r}\nu,left_len,right_len\n")
    right = chain.right if chain.right is not None else [None] * len(chain)
    for u, l, r in zip(chain.u, chain.left, right):
        buf.write(f"{u:.17g},{l:.17g},{'' if r is None else format(r, '.17g')}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
