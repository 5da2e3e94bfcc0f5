"""Command line entry point: ``sktshadow run <config>``, ``sktshadow verify``, ``sktshadow plots <dir>``."""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import List, Optional

import jsonschema
import numpy as np

from . import acceptance, evolution, reduction, solver, spectra
from .basis import Domain1D, neumann_eigenpair
from .errors import ConfigError, MissingArtifacts, SKTError
from .model import Params
from .solver import fmt

EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 2, 3, 4

_rate = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["params", "mode", "epsilon"],
    "additionalProperties": False,
    "properties": {
        "params": {
            "type": "object",
            "required": ["a1", "a2", "b1", "b2"],
            "additionalProperties": False,
            "properties": {"a1": _rate, "a2": _rate, "b1": _rate, "b2": _rate, "c1": _rate,
                           "c2": _rate, "d1": _rate, "beta": _nonneg},
        },
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"length": _rate, "n": {"type": "integer", "minimum": 64},
                           "dealias": {"type": "boolean"}},
        },
        "mode": {
            "type": "object",
            "required": ["j"],
            "additionalProperties": False,
            "properties": {"j": {"type": "integer", "minimum": 1},
                           "sign": {"enum": ["+", "-", "both"]}},
        },
        "epsilon": {
            "type": "object",
            "required": ["start", "end", "count"],
            "additionalProperties": False,
            "properties": {"start": _rate, "end": _rate, "count": {"type": "integer", "minimum": 1},
                           "spacing": {"enum": ["log", "linear"]}},
        },
        "alpha": {"type": "array", "items": _rate},
        "homotopy_eps": _rate,
        "evolve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"eps": {"type": "array", "items": _rate},
                           "delta0": {"type": "number", "minimum": 1e-9, "maximum": 1e-5}},
        },
        "newton": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"tol": _rate, "max_iter": {"type": "integer", "minimum": 1}},
        },
        "outputs": {"type": "string"},
    },
}


@dataclass
class RunConfig:
    params: Params
    length: float
    n: int
    dealias: bool
    j: int
    signs: List[int]
    eps_grid: List[float]
    alpha: List[float]
    homotopy_eps: Optional[float]
    evolve_eps: List[float]
    delta0: float
    newton: solver.NewtonOptions
    outputs: str


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise ConfigError(str(exc).splitlines()[0]) from exc
    pr = raw["params"]
    params = Params(a1=pr["a1"], a2=pr["a2"], b1=pr["b1"], b2=pr["b2"], c1=pr.get("c1", 1.0),
                    c2=pr.get("c2", 1.0), d1=pr.get("d1", 1.0), beta=pr.get("beta", 0.0))
    dom = raw.get("domain", {})
    n = dom.get("n", 256)
    if n & (n - 1):
        raise ConfigError("domain.n must be a power of two")
    ep = raw["epsilon"]
    start, end, count = ep["start"], ep["end"], ep["count"]
    if count == 1:
        grid = [start]
    else:
        if not start > end:
            raise ConfigError("epsilon.start must exceed epsilon.end")
        if ep.get("spacing", "log") == "log":
            grid = list(np.geomspace(start, end, count))
        else:
            grid = list(np.linspace(start, end, count))
    sign = raw["mode"].get("sign", "both")
    signs = {"+": [1], "-": [-1], "both": [1, -1]}[sign]
    nw = raw.get("newton", {})
    base = os.path.dirname(os.path.abspath(path))
    ev = raw.get("evolve", {})
    return RunConfig(params=params, length=dom.get("length", 1.0), n=n,
                     dealias=dom.get("dealias", False), j=raw["mode"]["j"], signs=signs,
                     eps_grid=grid, alpha=list(raw.get("alpha", [])),
                     homotopy_eps=raw.get("homotopy_eps"), evolve_eps=list(ev.get("eps", [])),
                     delta0=ev.get("delta0", 1e-8),
                     newton=solver.NewtonOptions(tol=nw.get("tol", 1e-11), max_iter=nw.get("max_iter", 30)),
                     outputs=os.path.join(base, raw.get("outputs", "out")))


class StageFailure(Exception):
    def __init__(self, stage, eps, exc):
        super().__init__(f"{stage} failed at eps={eps}: {type(exc).__name__}: {exc}")
        self.stage, self.eps, self.exc = stage, eps, exc


def _nearest(points, eps):
    return min(points, key=lambda pt: abs(np.log(pt.eps / eps)))


def run_sign(cfg: RunConfig, sign: int):
    """All stages for one sign; returns (artifacts, checks) without touching the filesystem."""
    dom = Domain1D(cfg.length, cfg.n, cfg.dealias)
    mode = neumann_eigenpair(dom, cfg.j)
    p = cfg.params
    try:
        root = reduction.reduce(p, mode, sign)
    except SKTError as exc:
        raise StageFailure("reduce", 0.0, exc) from exc
    prob = solver.StationaryProblem.create(p, mode, cfg.eps_grid[0])
    try:
        branch = solver.continue_branch(prob, cfg.eps_grid, sign, root, cfg.newton)
    except SKTError as exc:
        raise StageFailure("branch", getattr(exc, "at_eps", cfg.eps_grid[0]), exc) from exc
    eigs = []
    for pt in branch.points:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                e = spectra.eigen_near_zero(spectra.assemble_pencil(pt, root=root))
        except SKTError as exc:
            raise StageFailure("stability", pt.eps, exc) from exc
        pt.sigma = e.sigma
        eigs.append(e)
    art = {"root": root, "branch": branch, "eigs": eigs, "growth": {}, "homotopy": None}
    checks = {}
    last = branch.points[-1]
    ew = p.b2 / p.a2 * root.s0 * (1 + abs(root.mu0) * mode.amplitude)
    checks["eps_w_max_vs_limit"] = bool(abs(np.max(last.w_scaled) / ew - 1) <= 0.02)
    checks["u_max_vs_limit"] = bool(abs(np.max(last.u) / np.max(p.a2 / (p.b2 * mode.ell(root.mu0))) - 1) <= 0.02)
    checks["sigma_positive"] = bool(all(e.sigma > 0 for e in eigs))
    for eps in cfg.evolve_eps:
        pt = _nearest(branch.points, eps)
        e = eigs[branch.points.index(pt)]
        try:
            g = evolution.growth_rate(pt, e, cfg.delta0)
        except SKTError as exc:
            raise StageFailure("evolve", pt.eps, exc) from exc
        art["growth"][pt.eps] = g
        checks[f"growth_rate_eps_{fmt(pt.eps)}"] = bool(g.relative_error <= 0.1 and g.r_squared >= 0.999)
    if cfg.alpha:
        target = cfg.homotopy_eps if cfg.homotopy_eps is not None else cfg.eps_grid[0]
        pt = _nearest(branch.points, target)
        try:
            hom = solver.eta_homotopy(pt, cfg.alpha, cfg.newton)
        except SKTError as exc:
            raise StageFailure("homotopy", pt.eps, exc) from exc
        for q in hom.points:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                q.sigma = spectra.eigen_near_zero(spectra.assemble_pencil(q, root=root)).sigma
        art["homotopy"] = hom
        order = np.argsort(cfg.alpha)
        devs = np.array(hom.u_deviation)[order]
        checks["homotopy_deviation_decreasing"] = bool(np.all(np.diff(devs) < 0))
        checks["homotopy_sigma_within_10pct"] = bool(all(abs(q.sigma / pt.sigma - 1) <= 0.1 for q in hom.points))
    return art, checks


def write_sign(cfg: RunConfig, sign: int, art):
    out = cfg.outputs
    tag = "plus" if sign > 0 else "minus"
    with open(os.path.join(out, f"reduction_{tag}.json"), "w") as fh:
        fh.write(reduction.report_json(art["root"]) + "\n")
    solver.write_branch_csv(art["branch"], os.path.join(out, f"branch_{tag}.csv"))
    spectra.write_spectrum_csv(art["eigs"], os.path.join(out, f"spectrum_{tag}.csv"))
    for k, pt in enumerate(art["branch"].points):
        solver.write_profiles(pt, os.path.join(out, "profiles"), f"{tag}_{k:03d}")
    for eps, g in sorted(art["growth"].items(), reverse=True):
        evolution.write_timeseries_csv(g, os.path.join(out, f"growth_{tag}_eps_{eps:.3e}.csv"))
    if art["homotopy"] is not None:
        solver.write_branch_csv(art["homotopy"], os.path.join(out, f"homotopy_{tag}.csv"))


def _threads():
    try:
        return max(1, int(os.environ.get("SKTSHADOW_THREADS", "1")))
    except ValueError:
        return 1


def run(config_path: str) -> int:
    try:
        cfg = load_config(config_path)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(cfg.outputs, exist_ok=True)
    summary = {"stages": {}, "checks": {}, "failure": None}
    with ThreadPoolExecutor(max_workers=min(_threads(), len(cfg.signs))) as pool:
        futures = [(s, pool.submit(run_sign, cfg, s)) for s in cfg.signs]
        results = []
        for sign, fut in futures:
            try:
                results.append((sign, fut.result()))
            except StageFailure as exc:
                summary["failure"] = {"sign": "+" if sign > 0 else "-", "stage": exc.stage,
                                      "eps": exc.eps, "error": f"{type(exc.exc).__name__}: {exc.exc}"}
                break
    for sign, (art, checks) in results:
        write_sign(cfg, sign, art)
        tag = "+" if sign > 0 else "-"
        summary["stages"][tag] = "ok"
        summary["checks"].update({f"{k}[{tag}]": v for k, v in checks.items()})
    with open(os.path.join(cfg.outputs, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if summary["failure"] is not None:
        f = summary["failure"]
        print(f"numerical failure in stage {f['stage']} at eps={f['eps']}: {f['error']}", file=sys.stderr)
        return EXIT_NUMERIC
    for k, v in sorted(summary["checks"].items()):
        print(f"{'PASS' if v else 'FAIL'} {k}")
    return 0


def verify(n: int = 256) -> int:
    results = acceptance.run_all(n)
    print(acceptance.format_table(results))
    return 0 if all(r.passed for r in results) else EXIT_ACCEPTANCE


GNUPLOT = """set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 900,600
{body}
"""


def _csv_to_dat(src, dst, cols):
    data = np.genfromtxt(src, delimiter=",", names=True)
    data = np.atleast_1d(data)
    with open(dst, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(fmt(row[c]) for c in cols) + "\n")


def export_plots(run_dir: str) -> List[str]:
    """Gnuplot-ready ``.dat`` files and a driver script for the available stages."""
    if not os.path.isdir(run_dir):
        raise MissingArtifacts(f"{run_dir} is not a directory")
    out = os.path.join(run_dir, "plots")
    made, cmds = [], []
    for src in sorted(glob.glob(os.path.join(run_dir, "branch_*.csv"))):
        tag = os.path.basename(src)[7:-4]
        dst = os.path.join(out, f"branch_{tag}.dat")
        os.makedirs(out, exist_ok=True)
        _csv_to_dat(src, dst, ["d2", "eps_w_max"])
        made.append(dst)
        cmds.append(f"set output 'branch_{tag}.png'\nset xlabel 'd2'\nset ylabel 'eps*max w'\n"
                    f"plot 'branch_{tag}.dat' using 1:2 with linespoints")
    for src in sorted(glob.glob(os.path.join(run_dir, "spectrum_*.csv"))):
        tag = os.path.basename(src)[9:-4]
        dst = os.path.join(out, f"eigen_ratio_{tag}.dat")
        os.makedirs(out, exist_ok=True)
        _csv_to_dat(src, dst, ["eps", "lambda_ratio"])
        made.append(dst)
        cmds.append(f"set output 'eigen_ratio_{tag}.png'\nset logscale x\nset xlabel 'eps'\n"
                    f"set ylabel 'Lambda/lambda_j'\nplot 'eigen_ratio_{tag}.dat' using 1:2 with linespoints\n"
                    f"unset logscale x")
    prof = sorted(glob.glob(os.path.join(run_dir, "profiles", "*_u.csv")))
    if prof:
        os.makedirs(out, exist_ok=True)
        for src in (prof[0], prof[-1]):
            base = os.path.basename(src)[:-6]
            for field in ("u", "w"):
                s = os.path.join(run_dir, "profiles", f"{base}_{field}.csv")
                dst = os.path.join(out, f"profile_{base}_{field}.dat")
                _csv_to_dat(s, dst, ["x", "value"])
                made.append(dst)
                cmds.append(f"set output 'profile_{base}_{field}.png'\nset xlabel 'x'\nset ylabel '{field}'\n"
                            f"plot 'profile_{base}_{field}.dat' using 1:2 with lines")
    for src in sorted(glob.glob(os.path.join(run_dir, "growth_*.csv"))):
        name = os.path.basename(src)[:-4]
        dst = os.path.join(out, f"{name}.dat")
        os.makedirs(out, exist_ok=True)
        _csv_to_dat(src, dst, ["t", "pert_norm"])
        made.append(dst)
        cmds.append(f"set output '{name}.png'\nset logscale y\nset xlabel 't'\nset ylabel 'perturbation'\n"
                    f"plot '{name}.dat' using 1:2 with lines\nunset logscale y")
    if not made:
        raise MissingArtifacts(f"no run artifacts found in {run_dir}")
    script = os.path.join(out, "plots.gp")
    with open(script, "w") as fh:
        fh.write(GNUPLOT.format(body="\n\n".join(cmds)))
    made.append(script)
    return made


def bundled_config() -> str:
    return str(resources.files("sktshadow") / "data" / "worked.json")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="sktshadow", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run the pipeline described by a JSON config")
    r.add_argument("config", nargs="?", default=None, help="config path (default: bundled worked set)")
    v = sub.add_parser("verify", help="run the acceptance suite")
    v.add_argument("--n", type=int, default=256)
    pl = sub.add_parser("plots", help="export gnuplot data for a finished run")
    pl.add_argument("dir")
    args = ap.parse_args(argv)
    if args.cmd == "run":
        return run(args.config or bundled_config())
    if args.cmd == "verify":
        return verify(args.n)
    try:
        for path in export_plots(args.dir):
            print(path)
    except MissingArtifacts as exc:
        print(f"missing artifacts: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
