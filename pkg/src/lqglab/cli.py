"""Command line entry point: ``lqglab run | list-checks | sample | version``.

Config files are plain ``key = value`` lines (``#`` starts a comment)::

    seed = 42                 # required, 64-bit integer
    suite = mot_cov, window_mass
    gamma = 1.4142135623730951
    weights = 2, 3
    grid = 16, 512, 32        # t_cut, nx, ny
    n_samples = 10000
    workers = 1
    output_dir = out

Command line flags override file values.  ``run`` writes ``manifest.json``
plus one CSV per report that carries raw data, and exits with 0 iff every
verdict passes.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import re
import sys

import numpy as np

from . import MANIFEST_FORMAT, __version__, beaded, checks, cone, fields, sle
from .errors import LqgError, ParameterError
from .parallel import WORKERS_ENV

CONFIG_KEYS = ("seed", "gamma", "weights", "grid", "n_samples", "workers", "output_dir",
               "suite")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in re.split(r"[,\s]+", s.strip()) if x)


def _names(s: str) -> tuple[str, ...]:
    return tuple(x for x in re.split(r"[,\s]+", s.strip()) if x)


PARSERS = {"seed": int, "gamma": float, "weights": _floats, "grid": _floats,
           "n_samples": lambda s: int(float(s)), "workers": int, "output_dir": str,
           "suite": _names}


def parse_config_text(text: str) -> dict:
    out = {}
    for k, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {k}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in PARSERS:
            raise ParameterError(f"config line {k}: unknown key {key!r}")
        try:
            out[key] = PARSERS[key](val)
        except ValueError as e:
            raise ParameterError(f"config line {k}: bad value for {key}: {e}") from None
    return out


def build_config(file_values: dict, overrides: dict) -> checks.RunConfig:
    vals = {**file_values, **{k: v for k, v in overrides.items() if v is not None}}
    if "seed" not in vals:
        raise ParameterError("a seed is required (config 'seed = N' or --seed N)")
    return checks.RunConfig(**{k: vals[k] for k in CONFIG_KEYS if k in vals})


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_")


def _write_data(report, path_base: str) -> list[str]:
    """CSV dumps of a report's raw arrays; returns the written file names."""
    files = []
    data = {k: np.asarray(v) for k, v in report.data.items()}
    if not data:
        return files
    sizes = {v.size for v in data.values()}
    if len(data) > 1 and len(sizes) == 1:
        cols = list(data)
        fn = path_base + ".csv"
        np.savetxt(fn, np.column_stack([data[c] for c in cols]), delimiter=",", fmt="%.17g",
                   header=",".join(cols), comments="")
        files.append(fn)
    else:
        for k, v in data.items():
            fn = f"{path_base}_{k}.csv"
            np.savetxt(fn, v.reshape(-1, 1), delimiter=",", fmt="%.17g", header=k, comments="")
            files.append(fn)
    window = report.params.get("window")
    if window and len(data) == 1:
        v = next(iter(data.values()))
        edges = np.geomspace(window[0], window[1], report.params.get("bins", 20) + 1)
        counts, _ = np.histogram(v, bins=edges)
        dens = counts / (v.size * np.diff(edges))
        ok = counts > 0
        fn = path_base + "_loglog.csv"
        np.savetxt(fn, np.column_stack((np.log(np.sqrt(edges[:-1] * edges[1:]))[ok],
                                        np.log(dens[ok]))),
                   delimiter=",", fmt="%.17g", header="x,y", comments="")
        files.append(fn)
    return files


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run(cfg: checks.RunConfig) -> dict:
    """Execute the suite, write the manifest and data files, return the manifest."""
    try:
        os.makedirs(cfg.output_dir, exist_ok=True)
        probe = os.path.join(cfg.output_dir, ".write-test")
        open(probe, "w").close()
        os.remove(probe)
    except OSError as e:
        raise ParameterError(f"output directory {cfg.output_dir!r} is not writable: {e}")
    started = _now()
    results = []
    for name in cfg.suite:
        reps = checks.get_check(name).run(cfg)
        entry = {"check": name, "reports": [r.to_dict() for r in reps], "files": []}
        for i, r in enumerate(reps):
            base = os.path.join(cfg.output_dir, _slug(f"{name}_{i}_{r.name}"))
            entry["files"] += [os.path.basename(f) for f in _write_data(r, base)]
        entry["passed"] = all(r.passed for r in reps)
        results.append(entry)
    manifest = {"format": MANIFEST_FORMAT, "version": __version__, "config": cfg.as_dict(),
                "started": started, "finished": _now(), "checks": results,
                "passed": all(e["passed"] for e in results)}
    with open(os.path.join(cfg.output_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


# ---------------------------------------------------------------------------
# subcommands

def _cmd_run(args) -> int:
    file_vals = {}
    if args.config:
        with open(args.config) as fh:
            file_vals = parse_config_text(fh.read())
    over = {"seed": args.seed, "gamma": args.gamma, "n_samples": args.n_samples,
            "workers": args.workers, "output_dir": args.output_dir,
            "weights": _floats(args.weights) if args.weights else None,
            "grid": _floats(args.grid) if args.grid else None,
            "suite": _names(args.suite) if args.suite is not None else None}
    cfg = build_config(file_vals, over)
    if cfg.workers is not None:
        os.environ[WORKERS_ENV] = str(cfg.workers)
    man = run(cfg)
    for e in man["checks"]:
        for r in e["reports"]:
            print(f"{r['verdict'].upper():4s} {r['name']}: estimate {r['estimate']}, "
                  f"target {r['target']}, tol {r['tolerance']} ({r['kind']})")
    print(f"{len(man['checks'])} checks, manifest in "
          f"{os.path.join(cfg.output_dir, 'manifest.json')}")
    return 0 if man["passed"] else 1


def _cmd_list(args) -> int:
    for c in checks.list_checks():
        print(f"{c.name}\n    citation:  {c.citation}\n    tolerance: {c.tolerance}")
    return 0


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_sample(args) -> int:
    g = args.gamma
    if args.what == "field":
        t, nx, ny = _floats(args.grid) if args.grid else (8.0, 256, 16)
        grid = fields.GridSpec(t, int(nx), int(ny))
        kind = fields.Kind(args.kind)
        cw = (args.c_min, math.inf) if kind in (fields.Kind.THICK_DISK, fields.Kind.SPHERE) \
            else None
        f = fields.sample_surface(kind, g, 2.0 if args.W is None else args.W, grid, cw,
                                  args.seed)
        _emit(fields.dump_field(f), args.out)
    elif args.what == "chain":
        ch = beaded.sample_levy_marks(0.5 if args.W is None else args.W, g, args.T, args.cutoff, args.seed)
        _emit(beaded.chain_csv(ch), args.out)
    elif args.what == "curve":
        d = sle.sample_driving(args.kappa, args.rho_minus, args.rho_plus, args.steps, args.dt,
                               args.seed)
        _emit(sle.curve_csv(sle.trace_curve(d, args.points)), args.out)
    else:
        p = cone.sample_cone_path(tuple(_floats(args.start)), cone.CovSpec(g), args.dt,
                                  args.seed)
        _emit(cone.path_csv(p), args.out)
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lqglab", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a suite of checks")
    r.add_argument("--config", help="key = value config file")
    r.add_argument("--seed", type=int)
    r.add_argument("--suite", help="comma-separated check names (empty string for none)")
    r.add_argument("--gamma", type=float)
    r.add_argument("--weights")
    r.add_argument("--grid", help="t_cut,nx,ny")
    r.add_argument("--n-samples", dest="n_samples", type=lambda s: int(float(s)))
    r.add_argument("--workers", type=int)
    r.add_argument("--output-dir", dest="output_dir")
    r.set_defaults(fn=_cmd_run)

    sub.add_parser("list-checks", help="list registered checks").set_defaults(fn=_cmd_list)
    sub.add_parser("version", help="print the version").set_defaults(
        fn=lambda a: print(__version__) or 0)

    s = sub.add_parser("sample", help="dump one raw sample as CSV")
    s.add_argument("what", choices=("field", "chain", "curve", "cone-path"))
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--gamma", type=float, default=math.sqrt(2))
    s.add_argument("--W", type=float, help="weight (default 2 for fields, 0.5 for chains)")
    s.add_argument("--kind", default="ThickDisk",
                   choices=[k.value for k in fields.Kind])
    s.add_argument("--grid", help="t_cut,nx,ny")
    s.add_argument("--c-min", dest="c_min", type=float, default=0.0)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--cutoff", type=float, default=1e-3)
    s.add_argument("--kappa", type=float, default=2.0)
    s.add_argument("--rho-minus", dest="rho_minus", type=float, default=0.0)
    s.add_argument("--rho-plus", dest="rho_plus", type=float, default=0.0)
    s.add_argument("--steps", type=int, default=10_000)
    s.add_argument("--points", type=int, default=500)
    s.add_argument("--dt", type=float, default=1e-4)
    s.add_argument("--start", default="1,1")
    s.add_argument("--out")
    s.set_defaults(fn=_cmd_sample)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except LqgError as e:
        print(f"lqglab: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"lqglab: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
