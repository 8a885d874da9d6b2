"""Command-line front end: ``fracmap <command> [--config PATH] [--set key=value ...]``.

Every command writes ``report.json`` (with the full resolved config), one or
more CSV tables and, unless ``--no-figures`` is given, PNG figures into the
output directory.  Exit status: 0 on success, 2 on invalid input, 3 when the
optimizer stalls.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .config import ConfigError, resolve
from .constructions import capacity_cutoff, luckhaus_glue
from .energy import EnergyParams, QuadraturePolicy, energy, get_num_threads, seminorm, set_num_threads
from .errors import FracmapError, IllConditionedDegree
from .geometry import project_to_target, south_pole, tangential_project
from .homotopy import degree
from .mesh import build_mesh, identity_field, load_field, power_map, save_field
from .minimizer import ContinuationSchedule, MinimizeConfig, continuation, detect_concentration, minimize
from .rescaling import balance_ratio, conformal_rescale, kernel_bound_check, rescale_bound_check
from .verify import _jsonable, bubbling_experiment, check_gradient, check_superdifficult, random_field, unit_pair

log = logging.getLogger("fracmap")

EXIT_OK, EXIT_INVALID, EXIT_STALL = 0, 2, 3

COMMANDS = (
    "minimize", "continue", "rescale-check", "balance-check", "glue-check",
    "grad-check", "superdifficult", "bubble", "cutoff-decay",
)


@contextmanager
def _keyed(key: str):
    """Re-raise library validation errors as :class:`ConfigError` naming ``key``."""
    try:
        yield
    except ConfigError:
        raise
    except (FracmapError, ValueError) as exc:
        raise ConfigError(str(exc), key) from exc


class Run:
    """Resolved config plus the tables and figures a command produces."""

    def __init__(self, command: str, cfg: dict, deterministic: bool):
        self.command = command
        self.cfg = cfg
        self.deterministic = deterministic
        self.tables: dict = {}
        self.figures: list = []
        self.fields: dict = {}
        self.exit_code = EXIT_OK

    def params(self, t=None) -> EnergyParams:
        c = self.cfg
        with _keyed("quadrature.diagonal"):
            quad = QuadraturePolicy(c["quadrature.diagonal"], deterministic=self.deterministic)
        with _keyed("n, s, t"):
            return EnergyParams(c["n"], c["s"], c["t"] if t is None else t, quad=quad)

    def optimizer(self) -> MinimizeConfig:
        opts = {k.split(".", 1)[1]: v for k, v in self.cfg.items() if k.startswith("optimizer.")}
        with _keyed("optimizer.*"):
            return MinimizeConfig(**opts)

    def schedule(self) -> ContinuationSchedule:
        with _keyed("schedule"):
            return ContinuationSchedule(self.cfg["s"], self.cfg["schedule"])

    def mesh(self):
        with _keyed("mesh.resolution"):
            return build_mesh(self.cfg["n"], self.cfg["mesh.resolution"])

    def initial_field(self):
        """The field from ``experiment.field`` or a seeded degree-k map."""
        c = self.cfg
        if c["experiment.field"]:
            with _keyed("experiment.field"):
                return load_field(c["experiment.field"])
        mesh = self.mesh()
        if c["target.dim"] != mesh.n + 1:
            raise ConfigError(f"generated fields map into S^{mesh.n}; need {mesh.n + 1}", "target.dim")
        with _keyed("experiment.k"):
            if mesh.n == 1:
                u = power_map(mesh, c["experiment.k"])
            elif c["experiment.k"] == 1:
                u = identity_field(mesh)
            else:
                raise ConfigError("only k = 1 (the identity) is generated on S^2")
        if c["experiment.noise"] > 0:
            rng = np.random.default_rng(c["experiment.seed"])
            xi = tangential_project(u.values, c["experiment.noise"] * rng.normal(size=u.values.shape))
            with _keyed("experiment.noise"):
                u = u.with_values(project_to_target(u.values + xi, u.target))
        if c["experiment.concentrate"] != 1.0:
            with _keyed("experiment.concentrate"):
                u = conformal_rescale(u, c["experiment.concentrate"])
        return u

    def table(self, name: str, header, rows) -> None:
        self.tables[name] = (list(header), [list(r) for r in rows])

    def figure(self, name: str, fn, *args, **kwargs) -> None:
        self.figures.append((name, fn, args, kwargs))


def _safe_degree(field):
    try:
        if field.dim == field.mesh.n + 1:
            return degree(field)
    except IllConditionedDegree:
        pass
    return None


# commands ----------------------------------------------------------------

def cmd_minimize(run: Run) -> dict:
    u0 = run.initial_field()
    params = run.params()
    res = minimize(u0, params, run.optimizer())
    if res.status == "stalled":
        run.exit_code = EXIT_STALL
    run.fields["field.json"] = res.field
    steps = [None] + list(res.steps)
    run.table("iterations.csv", ["iteration", "energy", "residual", "step"],
              [(k, e, r, "" if st is None else st)
               for k, (e, r, st) in enumerate(zip(res.energies, res.residuals, steps))])
    run.figure("descent.png", plotting.descent_figure, res.energies, res.residuals,
               title=f"t = {params.t:g}")
    if u0.mesh.n == 1:
        run.figure("field.png", plotting.field_figure, u0.mesh.angles, res.field.values,
                   title="minimiser")
    out = res.summary()
    out.update({
        "t": params.t,
        "energy_s": energy(res.field, params.at(params.s)),
        "degree_initial": _safe_degree(u0),
        "degree_final": _safe_degree(res.field),
    })
    return out


def cmd_continue(run: Run) -> dict:
    u0 = run.initial_field()
    c = run.cfg
    with _keyed("experiment.concentration_rho"):
        rep = continuation(u0, run.schedule(), run.params(), run.optimizer(),
                           eps=c["experiment.eps"], rho=c["experiment.concentration_rho"])
    if any(st["status"] == "stalled" for st in rep.stages):
        run.exit_code = EXIT_STALL
    run.fields["field.json"] = rep.final_field
    mesh = u0.mesh
    stages = []
    for st in rep.stages:
        st = dict(st)
        st["centers"] = [mesh.nodes[i].tolist() for i in st["centers"]]
        stages.append(st)
    cols = ["t", "energy_t", "energy_s", "uniform_bound", "residual_initial", "residual",
            "iterations", "status", "degree"]
    run.table("stages.csv", cols, [[st[k] for k in cols] for st in stages])
    run.table("iterations.csv", ["t", "iteration", "energy", "residual"],
              [(st["t"], k, e, r) for st, res in zip(rep.stages, rep.results)
               for k, (e, r) in enumerate(zip(res.energies, res.residuals))])
    ts = [st["t"] for st in stages]
    run.figure("stages.png", plotting.series_figure, ts,
               {"E_t": [st["energy_t"] for st in stages], "E_s": [st["energy_s"] for st in stages]},
               "t", "energy of stage minimiser")
    run.figure("descent.png", plotting.descent_figure,
               [e for r in rep.results for e in r.energies],
               [x for r in rep.results for x in r.residuals], title="all stages")
    return {"initial_degree": _safe_degree(u0), "stages": stages}


def cmd_bubble(run: Run) -> dict:
    c = run.cfg
    field0 = run.initial_field()
    with _keyed("experiment.*"):
        report, cont = bubbling_experiment(
            c["experiment.k"], c["s"], run.schedule(), c["mesh.resolution"],
            eps=c["experiment.eps"], rho=c["experiment.concentration_rho"],
            balance_rhos=c["experiment.rho"], noise=c["experiment.noise"],
            concentrate=c["experiment.concentrate"], seed=c["experiment.seed"],
            cfg=run.optimizer(), params=run.params(), field0=field0,
        )
    if any(st["status"] == "stalled" for st in report["stages"]):
        run.exit_code = EXIT_STALL
    run.fields["field.json"] = cont.final_field
    cols = ["t", "energy_t", "energy_s", "residual_initial", "residual", "iterations", "status",
            "degree"]
    run.table("stages.csv", cols, [[st[k] for k in cols] for st in report["stages"]])
    rows = [(st["t"], b["rho"], " ".join(f"{x:.6g}" for x in b["center"]), b["lhs"],
             b["rhs_core"], b["implied_constant"])
            for st in report["stages"] for b in st["balance"]]
    run.table("balance.csv", ["t", "rho", "center", "lhs", "rhs_core", "implied_constant"], rows)
    ts = [st["t"] for st in report["stages"]]
    series = {}
    for rho in c["experiment.rho"]:
        series[f"rho = {rho:g}"] = [
            max(b["implied_constant"] for b in st["balance"] if b["rho"] == rho)
            for st in report["stages"]
        ]
    run.figure("balance.png", plotting.series_figure, ts, series, "t", "implied constant",
               logy=True)
    return {k: report[k] for k in ("initial", "stages", "provenance")}


def cmd_rescale_check(run: Run) -> dict:
    c = run.cfg
    u = run.initial_field()
    n, s = u.mesh.n, c["s"]
    ps = run.params(s)
    e0 = energy(u, ps)
    inv = []
    for lam in c["experiment.lambda"]:
        with _keyed("experiment.lambda"):
            el = energy(conformal_rescale(u, lam), ps)
        inv.append({"lambda": lam, "energy": e0, "energy_rescaled": el,
                    "rel_deviation": abs(el - e0) / e0 if e0 > 0 else 0.0})
    kern = []
    for lam in c["experiment.lambda"]:
        for ratio in c["experiment.t_over_s"]:
            with _keyed("experiment.t_over_s"):
                pk = EnergyParams(n, s, s * ratio)
            with _keyed("experiment.lambda"):
                chk = kernel_bound_check(lam, pk, samples=c["experiment.samples"],
                                         seed=c["experiment.seed"])
            kern.append({"lambda": lam, "t_over_s": ratio, **chk})
    bounds = []
    for lam in c["experiment.lambda"]:
        for t in c["experiment.t_list"]:
            with _keyed("experiment.t_list"):
                rep = rescale_bound_check(u, lam, run.params(t))
            d = rep.to_dict()
            d["slack_over_lhs"] = rep.slack / rep.lhs if rep.lhs > 0 else math.inf
            bounds.append(d)
    run.table("invariance.csv", ["lambda", "energy", "energy_rescaled", "rel_deviation"],
              [[r[k] for k in ("lambda", "energy", "energy_rescaled", "rel_deviation")] for r in inv])
    kcols = ["lambda", "t_over_s", "both_inside", "mixed", "both_outside", "max", "samples"]
    run.table("kernel.csv", kcols, [["" if r[k] is None else r[k] for k in kcols] for r in kern])
    bcols = ["lam", "t", "r_lambda", "lhs", "ball_energy", "complement_energy", "rhs", "slack",
             "slack_over_lhs"]
    run.table("bound.csv", bcols, [[r[k] for k in bcols] for r in bounds])
    if bounds:
        lams = list(c["experiment.lambda"])
        series = {f"t = {t:g}": [r["slack_over_lhs"] for r in bounds if r["t"] == t]
                  for t in c["experiment.t_list"]}
        run.figure("bound.png", plotting.series_figure, lams, series, "lambda", "slack / lhs")
    return {
        "invariance": inv,
        "kernel": kern,
        "kernel_max_violation": max(r["max"] for r in kern) if kern else None,
        "bound": bounds,
        "bound_min_slack_over_lhs": min(r["slack_over_lhs"] for r in bounds) if bounds else None,
    }


def cmd_balance_check(run: Run) -> dict:
    c = run.cfg
    u = run.initial_field()
    params = run.params()
    with _keyed("experiment.concentration_rho"):
        centers = (detect_concentration(u, params, c["experiment.eps"],
                                        c["experiment.concentration_rho"])
                   if math.isfinite(c["experiment.eps"]) else [])
    anchors = [u.mesh.nodes[i] for i in centers] or [south_pole(u.mesh.n).coords]
    out = []
    for y0 in anchors:
        for rho in c["experiment.rho"]:
            with _keyed("experiment.rho"):
                out.append(balance_ratio(u, y0, rho, params).to_dict())
    run.table("balance.csv", ["rho", "center", "lhs", "rhs_core", "implied_constant"],
              [(b["rho"], " ".join(f"{x:.6g}" for x in b["center"]), b["lhs"], b["rhs_core"],
                b["implied_constant"]) for b in out])
    return {"t": params.t, "centers": [u.mesh.nodes[i].tolist() for i in centers], "balance": out}


def cmd_glue_check(run: Run) -> dict:
    c = run.cfg
    u = run.initial_field()
    if u.mesh.n != 1:
        raise ConfigError("glue-check runs on S^1", "n")
    a = c["experiment.rotation"]
    rot = np.array([[math.cos(a), math.sin(a)], [-math.sin(a), math.cos(a)]])
    with _keyed("experiment.rotation"):
        v = u.with_values(project_to_target(u.values @ rot, u.target))
    ps = run.params(c["s"])
    rows = []
    for delta in c["experiment.delta"]:
        with _keyed("experiment.delta"):
            g = luckhaus_glue(u, v, c["experiment.r"], delta, ps)
        exact_outer = bool(np.array_equal(g.field.values[g.outer], u.values[g.outer]))
        exact_inner = bool(np.array_equal(g.field.values[g.inner], g.dilated_v[g.inner]))
        d = g.report.to_dict()
        d.update({"outer_exact": exact_outer, "inner_exact": exact_inner,
                  "outer_nodes": int(g.outer.size), "inner_nodes": int(g.inner.size),
                  "transition_nodes": int(g.transition.size)})
        rows.append(d)
    ratios = [r["ratio"] for r in rows]
    cols = ["delta", "lhs", "u_annulus", "v_ball", "boundary_term", "mismatch_term", "rhs_total",
            "ratio", "outer_exact", "inner_exact"]
    run.table("glue.csv", cols, [[r[k] for k in cols] for r in rows])
    run.figure("glue.png", plotting.series_figure, list(c["experiment.delta"]), {"ratio": ratios},
               "delta", "lhs / rhs")
    return {
        "glue": rows,
        "boundary_exact": all(r["outer_exact"] and r["inner_exact"] for r in rows),
        "ratio_spread": max(ratios) / min(ratios) if min(ratios) > 0 else math.inf,
    }


def cmd_grad_check(run: Run) -> dict:
    c = run.cfg
    mesh = run.mesh()
    rows = []
    per_t = []
    for t in c["experiment.t_list"]:
        params = run.params(t)
        errs = []
        for i in range(c["experiment.fields"]):
            seed = c["experiment.seed"] + i
            f = random_field(mesh, c["target.dim"], np.random.default_rng(seed))
            with _keyed("mesh.resolution"):
                err = check_gradient(f, params, h=c["experiment.h"])
            errs.append(err)
            rows.append((t, seed, err))
        per_t.append({"t": t, "max_rel_error": max(errs), "median_rel_error": float(np.median(errs))})
    run.table("gradcheck.csv", ["t", "seed", "rel_error"], rows)
    run.figure("gradcheck.png", plotting.series_figure, list(range(c["experiment.fields"])),
               {f"t = {r['t']:g}": [e for (t, _, e) in rows if t == r["t"]] for r in per_t},
               "field", "max relative error", logy=True)
    return {"per_t": per_t, "max_rel_error": max(r["max_rel_error"] for r in per_t)}


def cmd_superdifficult(run: Run) -> dict:
    c = run.cfg
    rows = []
    invariance = 0.0
    for alpha in c["experiment.alpha"]:
        for lam in c["experiment.sd_lambda"]:
            for frac in c["experiment.angles_over_pi"]:
                th, om = unit_pair(math.pi * frac)
                ratios = []
                for R in c["experiment.R"]:
                    with _keyed("experiment.alpha, experiment.sd_lambda, experiment.R"):
                        ratios.append(check_superdifficult(alpha, lam, th, om, R,
                                                           c["experiment.grid"]).ratio)
                invariance = max(invariance, max(abs(r / ratios[0] - 1.0) for r in ratios))
                rows.append({"alpha": alpha, "lambda": lam, "angle_over_pi": frac,
                             "ratio": ratios[0]})
    summary = []
    for alpha in c["experiment.alpha"]:
        sub = [r for r in rows if r["alpha"] == alpha]
        spreads = []
        for frac in c["experiment.angles_over_pi"]:
            rs = [r["ratio"] for r in sub if r["angle_over_pi"] == frac]
            spreads.append(max(rs) / min(rs))
        summary.append({"alpha": alpha, "max_ratio": max(r["ratio"] for r in sub),
                        "finite": all(math.isfinite(r["ratio"]) for r in sub),
                        "lambda_sweep_spread": max(spreads)})
    run.table("superdifficult.csv", ["alpha", "lambda", "angle_over_pi", "ratio"],
              [[r[k] for k in ("alpha", "lambda", "angle_over_pi", "ratio")] for r in rows])
    series = {}
    for alpha in c["experiment.alpha"]:
        for frac in c["experiment.angles_over_pi"]:
            series[f"a={alpha:g}, {frac:.3g}pi"] = [
                r["ratio"] for r in rows if r["alpha"] == alpha and r["angle_over_pi"] == frac
            ]
    run.figure("superdifficult.png", plotting.series_figure, list(c["experiment.sd_lambda"]),
               series, "lambda", "lhs / bound", logy=True)
    return {"rows": rows, "per_alpha": summary, "R_invariance_max_deviation": invariance}


def cmd_cutoff_decay(run: Run) -> dict:
    c = run.cfg
    mesh = run.mesh()
    ps = run.params(c["s"])
    rows = []
    for ell in c["experiment.ell"]:
        with _keyed("experiment.ell"):
            z = capacity_cutoff(mesh, ell)
        rows.append({"ell": ell, "energy": energy(z, ps), "seminorm": seminorm(z, ps)})
    sn = [r["seminorm"] for r in rows]
    run.table("cutoff.csv", ["ell", "energy", "seminorm"],
              [[r["ell"], r["energy"], r["seminorm"]] for r in rows])
    run.figure("cutoff.png", plotting.series_figure, [r["ell"] for r in rows], {"seminorm": sn},
               "ell", "seminorm")
    return {
        "rows": rows,
        "strictly_decreasing": all(b < a for a, b in zip(sn, sn[1:])),
        "first_over_last": sn[0] / sn[-1] if sn[-1] > 0 else math.inf,
    }


HANDLERS = {
    "minimize": cmd_minimize,
    "continue": cmd_continue,
    "bubble": cmd_bubble,
    "rescale-check": cmd_rescale_check,
    "balance-check": cmd_balance_check,
    "glue-check": cmd_glue_check,
    "grad-check": cmd_grad_check,
    "superdifficult": cmd_superdifficult,
    "cutoff-decay": cmd_cutoff_decay,
}


# output ------------------------------------------------------------------

def _cell(x):
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def write_outputs(run: Run, results: dict, out: Path, figures: bool = True,
                  elapsed: float | None = None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "command": run.command,
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in run.cfg.items()},
        "results": results,
        "exit_code": run.exit_code,
        "provenance": {
            "version": __version__,
            "reduction": "deterministic" if run.deterministic else "unordered",
        },
    }
    if elapsed is not None:
        report["provenance"]["wall_seconds"] = elapsed
        report["provenance"]["threads"] = get_num_threads()
    report = _jsonable(report)
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    for name, (header, rows) in run.tables.items():
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows([[_cell(x) for x in r] for r in rows])
    for name, field in run.fields.items():
        save_field(field, out / name)
    if figures:
        for name, fn, args, kwargs in run.figures:
            fn(out / name, *args, **kwargs)
    return report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracmap", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"fracmap {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", metavar="PATH", help="key = value config file")
    ap.add_argument("--set", metavar="K=V", action="append", default=[], dest="overrides",
                    help="override a config key (repeatable)")
    ap.add_argument("--out", metavar="DIR", default="fracmap-out", help="output directory")
    ap.add_argument("--threads", type=int, help="worker threads (default: FRACMAP_THREADS or CPU count)")
    ap.add_argument("--seed", type=int, help="overrides experiment.seed")
    ap.add_argument("--deterministic", action="store_true",
                    help="ordered reductions and no timing data; identical configs give identical bytes")
    ap.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        if args.threads is not None:
            with _keyed("--threads"):
                set_num_threads(args.threads)
        cfg = resolve(args.command, args.config, args.overrides)
        if args.seed is not None:
            cfg["experiment.seed"] = args.seed
        run = Run(args.command, cfg, args.deterministic)
        start = time.perf_counter()
        results = HANDLERS[args.command](run)
        elapsed = None if args.deterministic else time.perf_counter() - start
        write_outputs(run, results, Path(args.out), figures=not args.no_figures, elapsed=elapsed)
    except ConfigError as exc:
        print(f"fracmap: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FracmapError as exc:
        print(f"fracmap: error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if run.exit_code == EXIT_STALL:
        print(f"fracmap: {args.command}: optimizer stalled; see {args.out}/report.json", file=sys.stderr)
    return run.exit_code


if __name__ == "__main__":
    sys.exit(main())
