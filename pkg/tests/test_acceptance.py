"""Acceptance criteria 1-13 at their stated sample sizes and tolerances.

Each test carries ``@pytest.mark.criterion(k)``; the conftest prints one
``CRITERION k PASS|FAIL`` line per criterion at the end of the session.
Run alone with ``pytest tests/test_acceptance.py -v``; expect about 20 minutes
on one core.
"""
import json
import math
import time

import pytest

from lqglab import checks, cli, cone
from lqglab.checks import SQRT2, SQRT3, RunConfig

SEED = 20240601


def _run(name, **kw):
    cfg = RunConfig(seed=SEED, suite=(name,), **kw)
    t0 = time.perf_counter()
    reps = checks.get_check(name).run(cfg)
    return reps, time.perf_counter() - t0


def _note(record_property, reps, elapsed=None):
    for r in reps:
        line = r.line()
        print(line)
        record_property("detail", f"{r.name}={r.estimate:.6g} [{r.verdict}]")
    if elapsed is not None:
        print(f"elapsed {elapsed:.1f} s")


@pytest.mark.criterion(1)
def test_c01_cone_kernel_ratio(tmp_path, record_property):
    # through the full command-line pipeline: 1e7 paths, Richardson pair delta = eps
    cfg = RunConfig(seed=SEED, suite=("cone_kernel_ratio",), output_dir=str(tmp_path))
    t0 = time.perf_counter()
    man = cli.run(cfg)
    elapsed = time.perf_counter() - t0
    rep = man["checks"][0]["reports"][0]
    print(f"{rep['verdict'].upper()} cone_kernel_ratio: {rep['estimate']:.4f} +- "
          f"{rep['stderr']:.4f}, target 0.32 +- 0.03, {elapsed:.0f} s")
    record_property("detail", f"K(2,1)/K(1,1)={rep['estimate']:.4f}")
    assert rep["n"] == 10**7 and rep["params"]["h"] == checks.KERNEL_H
    assert abs(rep["estimate"] - 0.32) <= 0.03
    assert man["passed"]
    assert json.loads((tmp_path / "manifest.json").read_text())["passed"]
    assert elapsed <= 600


@pytest.mark.criterion(2)
def test_c02_corner_exit_exponent(record_property):
    reps, el = _run("corner_exponent")
    _note(record_property, reps, el)
    assert [r.params["gamma"] for r in reps] == [SQRT2, SQRT3]
    assert [r.target for r in reps] == pytest.approx([2.0, 4 / 3])
    for r in reps:
        assert r.n == 10**7 and len(r.params["eps"]) == 3
        assert abs(r.estimate - r.target) <= 0.1


@pytest.mark.criterion(3)
def test_c03_mot_covariance(record_property):
    reps, el = _run("mot_cov")
    _note(record_property, reps, el)
    assert len(reps) == 2
    for r in reps:
        assert r.n == 10**6
        for key in ("var_L", "var_R"):
            assert abs(r.extra[key] / r.target - 1) <= 0.02
        assert abs(r.extra["corr"] - r.extra["corr_target"]) <= 0.02
        assert r.passed


@pytest.mark.criterion(4)
def test_c04_stable_subordinator(record_property):
    reps, el = _run("subordinator_alpha")
    _note(record_property, reps, el)
    assert [r.params["W"] for r in reps] == [0.3, 0.5, 0.7]
    for r in reps:
        assert r.target == pytest.approx(1 - 2 * r.params["W"] / 2)
        assert abs(r.estimate / r.target - 1) <= 0.03


@pytest.mark.criterion(5)
def test_c05_thick_disk_boundary_exponent(record_property):
    reps, el = _run("boundary_exponent")
    _note(record_property, reps, el)
    assert [r.params["gamma"] for r in reps] == [SQRT2, SQRT3]
    for r in reps:
        assert r.n == 10**4
        assert r.params["grid"][1:] == [512, 32]
        assert r.target == pytest.approx(-2 * 2.0 / r.params["gamma"] ** 2)
        assert abs(r.estimate - r.target) <= 0.1
    assert el <= 1800


@pytest.mark.criterion(6)
def test_c06_exact_scaling_invariance(record_property):
    reps, el = _run("scaling_invariance")
    _note(record_property, reps, el)
    assert len(reps) == 2
    for r in reps:
        assert r.estimate < 1e-12


@pytest.mark.criterion(7)
def test_c07_f_density_oracle(record_property):
    reps, el = _run("f_density_oracle")
    _note(record_property, reps, el)
    closed, ks = reps
    assert closed.n == 1000 and closed.estimate < 1e-8
    assert ks.n == 10**5 and ks.estimate > 0.01


@pytest.mark.criterion(8)
def test_c08_decomposition_equivalence(record_property):
    reps, el = _run("decomposition_equivalence")
    _note(record_property, reps, el)
    same, mutated = reps
    # one sample of 1e5 per procedure; the direct procedure is unweighted
    assert same.n == 2 * 10**5 and same.extra["n_eff_a"] == 10**5
    assert same.estimate > 0.01
    assert mutated.estimate < 1e-3


@pytest.mark.criterion(9)
def test_c09_weight2_joint_law(record_property):
    reps, el = _run("weight2_remarking")
    _note(record_property, reps, el)
    (r,) = reps
    assert r.n == 10**5 and r.params["gamma"] == SQRT2
    assert r.estimate > 0.01


@pytest.mark.criterion(10)
def test_c10_gamma2half_grid(record_property):
    reps, el = _run("gamma2half_grid")
    _note(record_property, reps, el)
    pts = [(r.params["ell"], r.params["r"]) for r in reps]
    assert pts == [(l, r) for l in (1.0, 2.0, 3.0) for r in (1.0, 2.0)]
    for r in reps:
        assert r.extra["law_target"] == pytest.approx(r.target, rel=1e-14)
        assert abs(r.estimate / r.target - 1) <= 0.1
    assert el <= 3600


def test_kernel_symmetry(record_property):
    # supplementary: K(1,2) = K(2,1).  At h = 0.1 the finite-difference pair has an exact
    # ratio of 0.984, and 4e7 paths per kernel bring the Monte Carlo error near 1.7%
    seed = RunConfig(seed=SEED).check_seed("kernel_symmetry")
    a = checks._kernel(1.0, 2.0, SQRT2, checks.KERNEL_H, 4 * 10**7, seed, None)
    b = checks._kernel(2.0, 1.0, SQRT2, checks.KERNEL_H, 4 * 10**7, seed, None)
    ratio, se = cone.ratio_estimate(a, b)
    print(f"K(1,2)/K(2,1) = {ratio:.4f} +- {se:.4f}")
    assert abs(ratio - 1) <= 0.05


@pytest.mark.criterion(11)
def test_c11_window_mass(record_property):
    reps, el = _run("window_mass")
    _note(record_property, reps, el)
    assert len(reps) == 16
    for r in reps:
        assert abs(r.estimate / r.target - 1) <= 1e-12
    one = [r for r in reps if r.params == {"W": 2.0, "gamma": SQRT2, "zeta": 1.0}][0]
    assert one.estimate == pytest.approx(math.exp(1 / SQRT2), rel=1e-12)


@pytest.mark.criterion(12)
def test_c12_sle_hitting_phase(record_property):
    reps, el = _run("sle_hitting")
    _note(record_property, reps, el)
    (r,) = reps
    fr = r.extra["fractions"]
    print("fractions", dict(zip(r.params["rhos"], fr)))
    assert r.params["rhos"] == [-1.8, -1.5, -1.0, -0.5, 0.5]
    assert r.params["threshold"] == 1e-2 and r.params["n_steps"] == 10**5 and r.n == 500
    assert all(b <= a for a, b in zip(fr, fr[1:]))
    assert -1.3 < r.estimate < -0.7


@pytest.mark.criterion(13)
def test_c13_determinism(record_property):
    reps, el = _run("determinism")
    _note(record_property, reps, el)
    assert len(reps) == len(checks.DETERMINISM_PROBES)
    assert all(r.estimate == 1.0 for r in reps)
