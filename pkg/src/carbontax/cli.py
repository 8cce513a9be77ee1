"""Command-line front end.

Subcommands: calibrate, stats, solve, verify, emit-plot. Standard output
carries a one-line summary; machine-readable artifacts go to files under
--out. Exit codes: 0 success, 1 verification failure, 2 input or solver
error. Output files are byte-stable across runs (17-significant-digit
floats, no timestamps).
"""

import argparse
import os
import sys

import numpy as np

from . import oracle, pipeline, synthetic
from .agent import SyntheticEconomy
from .errors import CarbonTaxError
from .schedules import DamageCalibration, pigouvian_rate
from .serialize import dump_json, load_json, write_csv
from .solver import (solve_linear, solve_multidim, solve_nonlinear,
                     solve_optimal_levels)
from .statistics import StatsProfile


def build_parser():
    p = argparse.ArgumentParser(
        prog="carbontax",
        description="Optimal externality-correcting tax schedules under "
                    "costly redistribution.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_txt in (
            ("calibrate", "turn an SCC calibration into a damage rate"),
            ("stats", "build a statistics profile from an economy or CSVs"),
            ("solve", "solve a tax formula on a statistics profile"),
            ("verify", "run the oracle suite on a synthetic economy"),
            ("emit-plot", "emit tidy CSVs for the standard figures")):
        q = sub.add_parser(name, help=help_txt)
        q.add_argument("--config", help="calibration or pipeline config JSON")
        q.add_argument("--profile", help="statistics profile JSON")
        q.add_argument("--economy", help="synthetic economy JSON")
        q.add_argument("--out", help="output directory")
        q.add_argument("--method", default="linear",
                       choices=["nonlinear", "linear", "multidim", "levels"])
        q.add_argument("--scenario", default=None,
                       help="benchmark | high-eti | low-demand | high-demand "
                            "| high-eti-low-demand | custom:EPS_Z,EPS_X")
        q.add_argument("--damage", type=float, default=None,
                       help="marginal damage rate, overrides calibration")
        q.add_argument("--seed", type=int, default=20240301,
                       help="seed for synthetic survey generation")
    return p


def _need_out(args):
    if not args.out:
        raise CarbonTaxError("--out directory is required")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _damage(args):
    if args.damage is not None:
        return float(args.damage)
    if args.config:
        return pigouvian_rate(DamageCalibration.load(args.config))
    raise CarbonTaxError("provide --damage or a calibration --config")


def _scenario_pair(name):
    if name.startswith("custom:"):
        ez, ex = name.split(":", 1)[1].split(",")
        ez, ex = float(ez), float(ex)
        if ez <= 0 or ex <= 0:
            raise CarbonTaxError("scenario constants must be positive")
        return ez, ex
    if name not in synthetic.SCENARIOS:
        raise CarbonTaxError("unknown scenario %r" % name)
    return synthetic.SCENARIOS[name]


def _load_profile(args):
    if not args.profile:
        raise CarbonTaxError("--profile is required")
    profile = StatsProfile.load(args.profile)
    if args.scenario:
        profile = profile.replace_elasticities(*_scenario_pair(args.scenario))
    return profile


def cmd_calibrate(args):
    cal = DamageCalibration.load(args.config) if args.config \
        else DamageCalibration(200.0, 2.0)
    rate = pigouvian_rate(cal)
    if args.out:
        out = _need_out(args)
        dump_json({"pigouvian_rate": rate, "calibration": cal.to_json()},
                  os.path.join(out, "damage.json"))
    print("calibrate scc=%g kg_per_dollar=%g -> pigouvian_rate=%.6g"
          % (cal.scc_usd_per_ton, cal.kg_per_dollar, rate))
    return 0


def cmd_stats(args):
    out = _need_out(args)
    if args.economy:
        from .statistics import build_profile_from_economy
        economy = SyntheticEconomy.load(args.economy)
        profile = build_profile_from_economy(economy)
        info = {"source": "economy", "mtr_warnings": []}
    else:
        if not args.config:
            raise CarbonTaxError("stats needs --economy or a pipeline --config")
        cfg_obj = load_json(args.config)
        smoothing = pipeline.SmoothingConfig(
            grid_size=cfg_obj.get("grid_size", 1000),
            spline_penalty=cfg_obj.get("spline_penalty", "gcv"),
            poly_degree_mpc=cfg_obj.get("poly_degree_mpc", 2))
        if cfg_obj.get("synthetic"):
            cs = synthetic.synthetic_cross_section()
            table = synthetic.synthetic_survey(
                n=cfg_obj.get("survey_n", 1448), seed=args.seed)
        else:
            base = os.path.dirname(os.path.abspath(args.config))

            def resolve(path):
                return path if os.path.isabs(path) \
                    else os.path.normpath(os.path.join(base, path))

            cs = pipeline.BinnedCrossSection.from_csv(
                resolve(cfg_obj["cross_section"]))
            table = pipeline.SurveyMpcTable.from_csv(
                resolve(cfg_obj["survey_mpc"]))
        scenario = args.scenario or cfg_obj.get("scenario", "benchmark")
        eps_z, eps_x = _scenario_pair(scenario)
        profile, info = pipeline.run_pipeline(
            cs, table, smoothing, eps_z=eps_z, eps_x=eps_x,
            with_variance=cfg_obj.get("with_variance", True))
        info = {"source": "pipeline", "mtr_warnings": info["mtr_warnings"],
                "mpc_coeffs": list(map(float, info["mpc_coeffs"]))}
    path = os.path.join(out, "profile.json")
    profile.save(path)
    dump_json(info, os.path.join(out, "stats_info.json"))
    print("stats points=%d span=[%.6g, %.6g] eta=[%.4g, %.4g] -> %s"
          % (len(profile.grid.points), profile.grid.points[0],
             profile.grid.points[-1], float(np.min(profile.eta_taste)),
             float(np.max(profile.eta_taste)), path))
    return 0


def cmd_solve(args):
    out = _need_out(args)
    damage = _damage(args)
    profile = _load_profile(args)
    z = profile.grid.points
    payload = {"method": args.method, "damage": damage}
    if args.method == "nonlinear":
        report = solve_nonlinear(profile, damage)
        payload["schedule"] = [[float(a), float(b)]
                               for a, b in zip(z, report.result)]
        result_txt = "schedule[n=%d, min=%.6g, max=%.6g]" % (
            len(z), float(np.min(report.result)), float(np.max(report.result)))
        _write_schedule_csv(os.path.join(out, "nonlinear_rates.csv"),
                            z, report.result)
    elif args.method == "levels":
        tx, tz = solve_optimal_levels(profile, damage)
        payload["schedule"] = [[float(a), float(b)] for a, b in zip(z, tx)]
        payload["schedule_income"] = [[float(a), float(b)]
                                      for a, b in zip(z, tz)]
        result_txt = "levels[tx_max=%.6g, tz_max=%.6g]" % (
            float(np.max(tx)), float(np.max(tz)))
        _write_schedule_csv(os.path.join(out, "levels_commodity.csv"), z, tx)
        _write_schedule_csv(os.path.join(out, "levels_income.csv"), z, tz)
        report = None
    else:
        solve = solve_linear if args.method == "linear" else solve_multidim
        report = solve(profile, damage)
        payload["rate"] = float(report.result)
        result_txt = "%.10g" % report.result
        _write_schedule_csv(os.path.join(out, "%s_rate.csv" % args.method),
                            z, np.full_like(z, float(report.result)))
    if report is not None:
        payload["report"] = {"converged": report.converged,
                             "iterations": report.iterations,
                             "residual": report.residual,
                             "branch_note": report.branch_note}
        summary_tail = "residual=%.3g iterations=%d" % (report.residual,
                                                        report.iterations)
    else:
        summary_tail = "residual=closed-form iterations=0"
    dump_json(payload, os.path.join(out, "%s_result.json" % args.method))
    print("solve method=%s damage=%.6g result=%s %s"
          % (args.method, damage, result_txt, summary_tail))
    return 0


def _write_schedule_csv(path, z, rates):
    write_csv(path, ["z", "rate"], list(zip(z, rates)))


def cmd_verify(args):
    if not args.economy:
        raise CarbonTaxError("verify needs --economy")
    damage = _damage(args)
    economy = SyntheticEconomy.load(args.economy)
    report, passed = oracle.run_verification(economy, damage)
    if args.out:
        out = _need_out(args)
        dump_json(report, os.path.join(out, "verification.json"))
    n_fail = sum(0 if c["pass"] else 1 for c in report["checks"])
    print("verify checks=%d failed=%d -> %s"
          % (len(report["checks"]), n_fail, "pass" if passed else "FAIL"))
    return 0 if passed else 1


def cmd_emit_plot(args):
    out = _need_out(args)
    damage = _damage(args)
    profile = _load_profile(args)
    z = profile.grid.points
    rows = []
    for name, series in (("xhat_slope", profile.xhat_slope),
                         ("x_inc", profile.x_inc),
                         ("x_het", profile.x_het)):
        rows += [[zv, name, sv] for zv, sv in zip(z, series)]
    write_csv(os.path.join(out, "decomposition.csv"),
              ["z", "series", "value"], rows)
    write_csv(os.path.join(out, "taste_elasticity.csv"),
              ["z", "series", "value"],
              [[zv, "eta_taste", ev] for zv, ev in zip(z, profile.eta_taste)])

    rows = []
    for name in ("benchmark", "high-eti", "low-demand", "high-demand"):
        prof_s = profile.replace_elasticities(*synthetic.SCENARIOS[name])
        rates = solve_nonlinear(prof_s, damage).result
        rows += [[zv, name, rv] for zv, rv in zip(z, rates)]
    write_csv(os.path.join(out, "schedules_by_scenario.csv"),
              ["z", "series", "value"], rows)

    files = 3
    if profile.var_x_inc is not None:
        uni = solve_linear(profile, damage).result
        multi = solve_multidim(profile, damage).result
        rows = []
        for zv in z:
            rows += [[zv, "unidimensional", uni],
                     [zv, "multidimensional", multi],
                     [zv, "damage", damage]]
        write_csv(os.path.join(out, "unidim_vs_multidim.csv"),
                  ["z", "series", "value"], rows)
        files += 1
    print("emit-plot files=%d out=%s" % (files, out))
    return 0


_COMMANDS = {"calibrate": cmd_calibrate, "stats": cmd_stats,
             "solve": cmd_solve, "verify": cmd_verify,
             "emit-plot": cmd_emit_plot}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (CarbonTaxError, OSError, KeyError, ValueError) as err:
        print("error: %s" % err, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
