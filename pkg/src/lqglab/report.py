"""Law reports: an estimate next to its closed-form target and a verdict."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ParameterError


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


@dataclass
class LawReport:
    """``verdict`` is ``"pass"`` or ``"fail"``; ``target`` may be ``None``.

    ``kind`` tells how the tolerance is read: ``"abs"`` (|est - target| <= tol),
    ``"rel"`` (relative error), ``"pvalue_min"`` (estimate is a p-value that
    must exceed tol), ``"pvalue_max"`` (p-value must stay below tol) or
    ``"bool"`` (estimate 1.0 means the property held).  ``data`` holds raw
    arrays for plot files and is left out of the JSON form.
    """

    name: str
    params: dict
    estimate: float
    stderr: float | None
    target: float | None
    tolerance: float
    n: int
    seed: int | None
    kind: str = "abs"
    runtime_ms: float = 0.0
    extra: dict = field(default_factory=dict)
    verdict: str = ""
    data: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("abs", "rel", "pvalue_min", "pvalue_max", "bool"):
            raise ParameterError(f"unknown tolerance kind {self.kind!r}")
        if not self.verdict:
            self.verdict = "pass" if self.judge() else "fail"

    def judge(self) -> bool:
        e, t, tol = self.estimate, self.target, self.tolerance
        if e is None or (isinstance(e, float) and math.isnan(e)):
            return False
        if self.kind == "abs":
            return abs(e - t) <= tol
        if self.kind == "rel":
            return abs(e - t) <= tol * abs(t)
        if self.kind == "pvalue_min":
            return e > tol
        if self.kind == "pvalue_max":
            return e < tol
        return bool(e)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("data")
        return _plain(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def line(self) -> str:
        tgt = "none" if self.target is None else f"{self.target:.6g}"
        se = "" if self.stderr is None else f" +- {self.stderr:.3g}"
        return (f"{self.verdict.upper():4s} {self.name}: estimate {self.estimate:.6g}{se}, "
                f"target {tgt}, tol {self.tolerance:g} ({self.kind}), n={self.n}")


@dataclass(frozen=True)
class EmpiricalSample:
    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, float)
        object.__setattr__(self, "values", v)
        if self.weights is None:
            object.__setattr__(self, "weights", np.ones_like(v))
        else:
            w = np.asarray(self.weights, float)
            if w.shape != v.shape:
                raise ParameterError("weights must match values")
            if not (np.all(np.isfinite(w)) and np.all(w >= 0)):
                raise ParameterError("weights must be finite and nonnegative")
            object.__setattr__(self, "weights", w)

    @property
    def n_eff(self) -> float:
        w = self.weights
        s2 = float(np.sum(w * w))
        return float(np.sum(w)) ** 2 / s2 if s2 > 0 else 0.0

    def __len__(self) -> int:
        return int(self.values.size)
