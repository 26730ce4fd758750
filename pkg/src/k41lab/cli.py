"""Command-line driver: reproducible experiment pipelines over the core modules.

Subcommands: simulate, stokes, diagnose, sweep, conditions, scale-verify, eddy.
Exit codes: 0 success, 1 configuration/input error, 2 numerical blowup,
3 verification failure (scale-verify above threshold; balance checks beyond
tolerance under --strict).

All randomness derives from the root seed through keyed streams and all
reductions run in fixed index order, so outputs are byte-identical across
worker counts.
"""

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import MODES, apply_env_overrides, validate_config
from .diagnostics import (build_report, default_r_grid, k41_window_scan,
                          sandwich_constants, theta_eta_trend)
from .eddy import (EddyConfig, canonical_constant, mc_moment, occupation_time_exact,
                   occupation_time_mc, reduced_moment, slope_fit)
from .errors import (CheckpointError, ConfigError, DegenerateStatsError, K41Error,
                     NumericalBlowupError, VerificationError)
from .galerkin import (EnsembleStats, SimulationConfig, default_dt, run_trajectory,
                       stokes_stats, time_average_stats)
from .noise import make_isotropic_spec, shell_profile
from .scaling import pathwise_scaling_verify
from .spectral import build_lattice
from .storage import (experiment_config, provenance_block, read_json,
                      write_checkpoint, write_csv, write_json)

STRICT_BALANCE_SIGMA = 3.0


def _progress(label):
    state = {"t": time.monotonic()}

    def report(i, total):
        now = time.monotonic()
        if now - state["t"] >= 5.0:
            state["t"] = now
            print(f"[k41] {label}: step {i}/{total}", file=sys.stderr)

    return report


def _noise_from_section(lattice, section):
    prof = shell_profile(lattice, k_f=section["forcing"]["k_f"],
                         intensity=section["forcing"]["intensity"])
    return make_isotropic_spec(lattice, prof, amp=section["amp"])


def _sim_config(section, seed, nu=None):
    lat = build_lattice(section["d"], section["L"], section["n"])
    spec = _noise_from_section(lat, section)
    nu = section["nu"] if nu is None else nu
    dt = section["dt"]
    if dt is None:
        dt = default_dt(section["d"], section["L"], section["n"], nu, spec)
    cfg = SimulationConfig(
        d=section["d"], L=section["L"], n=section["n"], nu=nu, noise=spec,
        dt=dt, t_burn=section["t_burn"], t_avg=section["t_avg"], seed=seed,
        stepper=section["stepper"], nonlinearity=section["nonlinearity"],
        n_batches=section["n_batches"], stretch_every=section["stretch_every"])
    return cfg, spec


def _report_payload(report, resolved, prov):
    return {**report.to_dict(), "config": experiment_config(resolved), "seed": resolved["seed"],
            "provenance": prov}


def _write_report_files(outdir, name, report, resolved, prov):
    write_json(os.path.join(outdir, f"{name}.json"),
               _report_payload(report, resolved, prov))
    write_csv(os.path.join(outdir, f"{name}_s2.csv"), ("r", "value", "stderr"),
              report.s2_profile, prov)


def _check_strict_balance(report):
    for row in report.balance:
        if row["kind"] == "reported":
            continue
        tol = max(STRICT_BALANCE_SIGMA * (row["stderr"] or 0.0), 1e-9 * abs(row["rhs"]))
        if row["kind"] == "equality" and not row.get("inequality_holds", True):
            raise VerificationError(f"balance '{row['name']}' inequality violated")
        if abs(row["lhs"] - row["rhs"]) > tol:
            raise VerificationError(
                f"balance '{row['name']}' off by {abs(row['lhs'] - row['rhs']):.3g} "
                f"(tolerance {tol:.3g})")


def run_simulate(resolved, outdir, prov):
    section = resolved["simulate"]
    cfg, spec = _sim_config(section, resolved["seed"])
    traj = run_trajectory(cfg)
    stats = time_average_stats(traj, progress=_progress("simulate"))
    write_json(os.path.join(outdir, "stats.json"),
               {"stats": stats.to_dict(), "config": experiment_config(resolved), "seed": resolved["seed"],
                "provenance": prov})
    report = build_report(stats, spec=spec,
                          r_grid=default_r_grid(cfg.lattice, section["r_points"]))
    _write_report_files(outdir, "report", report, resolved, prov)
    if section["checkpoint"]:
        write_checkpoint(traj.final, os.path.join(outdir, "final.k41f"))
    if resolved["strict"]:
        _check_strict_balance(report)
    return 0


def run_stokes(resolved, outdir, prov):
    section = resolved["stokes"]
    lat = build_lattice(section["d"], section["L"], section["n"])
    spec = _noise_from_section(lat, section)
    stats = stokes_stats(spec, section["nu"])
    write_json(os.path.join(outdir, "stats.json"),
               {"stats": stats.to_dict(), "config": experiment_config(resolved), "seed": resolved["seed"],
                "provenance": prov})
    report = build_report(stats, spec=spec,
                          r_grid=default_r_grid(lat, section["r_points"]))
    _write_report_files(outdir, "report", report, resolved, prov)
    if resolved["strict"]:
        _check_strict_balance(report)
    return 0


class _NoiseSums:
    """Balance-check adapter when only the stats provenance is available."""

    def __init__(self, provenance):
        try:
            self.amp = float(provenance["amp"])
            self.sum_sigma_sq = float(provenance["sum_sigma_sq"])
            self.sum_k2_sigma_sq = float(provenance["sum_k2_sigma_sq"])
        except KeyError as exc:
            raise ConfigError(f"stats provenance lacks noise sums ({exc})") from exc


def _load_stats(path):
    payload = read_json(path)
    if "stats" not in payload:
        raise ConfigError(f"{path} does not contain a 'stats' object")
    return EnsembleStats.from_dict(payload["stats"])


def run_diagnose(resolved, outdir, prov):
    section = resolved["diagnose"]
    stats = _load_stats(section["stats"])
    spec = _NoiseSums(stats.provenance)
    report = build_report(stats, spec=spec,
                          r_grid=default_r_grid(stats.lattice, section["r_points"]))
    _write_report_files(outdir, "report", report, resolved, prov)
    if resolved["strict"]:
        _check_strict_balance(report)
    return 0


def run_conditions(resolved, outdir, prov):
    section = resolved["conditions"]
    stats = _load_stats(section["stats"])
    report = build_report(stats)
    low, high = sandwich_constants(stats.lattice)
    cs = report.conditions
    denom = cs["B_low_enstrophy"] + cs["B_high_energy"]
    payload = {
        "conditions": cs,
        "sandwich": {"c_prime": low, "C_prime": high,
                     "ratio": cs["Aprime_value"] / denom if denom > 0 else None},
        "config": experiment_config(resolved), "seed": resolved["seed"], "provenance": prov,
    }
    write_json(os.path.join(outdir, "conditions.json"), payload)
    return 0


def _sweep_point(section, resolved, nu, index):
    if section["kind"] == "stokes":
        lat = build_lattice(section["d"], section["L"], section["n"])
        spec = _noise_from_section(lat, section)
        stats = stokes_stats(spec, nu)
    else:
        cfg, spec = _sim_config(section, resolved["seed"], nu=nu)
        traj = run_trajectory(cfg, trajectory_index=index)
        stats = time_average_stats(traj, progress=_progress(f"sweep nu={nu:g}"))
    report = build_report(stats, nu=nu, spec=spec,
                          r_grid=default_r_grid(stats.lattice, section["r_points"]))
    return report


def run_sweep(resolved, outdir, prov):
    section = resolved["sweep"]
    nus = section["nus"]
    with ThreadPoolExecutor(max_workers=resolved["threads"]) as pool:
        futures = [pool.submit(_sweep_point, section, resolved, nu, i)
                   for i, nu in enumerate(nus)]
        reports = [f.result() for f in futures]

    def R0(nu):
        return section["R0_coeff"] * nu ** (-section["R0_exp"])

    rows = [{"nu": rep.nu, "eta": rep.eta, "theta_diss": rep.theta_diss,
             "s2_profile": rep.s2_profile} for rep in reports]
    scan = k41_window_scan(rows, section["C0"], R0)
    increasing, trend_vals = theta_eta_trend(scan)
    for i, rep in enumerate(reports):
        _write_report_files(outdir, f"report_{i}", rep, resolved, prov)
    csv_rows = []
    for rep, row in zip(reports, scan):
        win = row["windows"]["nu34"]
        csv_rows.append((rep.nu, rep.epsilon, rep.eta, rep.theta_diss,
                         win["ratio_min"], win["ratio_max"], row["theta_over_eta"]))
    write_csv(os.path.join(outdir, "sweep.csv"),
              ("nu", "epsilon", "eta", "theta", "ratio_min", "ratio_max",
               "theta_over_eta"), csv_rows, prov)
    write_json(os.path.join(outdir, "scan.json"), {
        "scan": scan,
        "theta_over_eta_increasing_as_nu_decreases": increasing,
        "theta_over_eta": trend_vals,
        "hess_sq_by_nu": [{"nu": rep.nu,
                           "hess_sq": rep.epsilon / rep.nu * rep.theta_diss**-2}
                          for rep in reports],
        "config": experiment_config(resolved), "seed": resolved["seed"], "provenance": prov,
    })
    return 0


def run_scale_verify(resolved, outdir, prov):
    section = resolved["scale-verify"]
    cfg, _ = _sim_config(section, resolved["seed"])
    disc = pathwise_scaling_verify(cfg, section["lam"], section["beta"],
                                   n_steps=section["steps"])
    passed = disc <= section["threshold"]
    write_json(os.path.join(outdir, "verify.json"), {
        "lam": section["lam"], "beta": section["beta"], "steps": section["steps"],
        "max_relative_discrepancy": disc, "threshold": section["threshold"],
        "passed": passed,
        "config": experiment_config(resolved), "seed": resolved["seed"], "provenance": prov,
    })
    if not passed:
        raise VerificationError(
            f"pathwise scaling discrepancy {disc:.3e} > {section['threshold']:.1e}")
    return 0


def _eddy_point(section, seed, eta, index):
    cfg = EddyConfig(eta=eta, samples=section["samples"],
                     path_steps=section["path_steps"], r_max=section["r_max"],
                     seed=seed + index, order="both")
    return mc_moment(cfg)


def run_eddy(resolved, outdir, prov):
    section = resolved["eddy"]
    etas = section["etas"]
    orders = ("grad", "hess") if section["order"] == "both" else (section["order"],)
    with ThreadPoolExecutor(max_workers=resolved["threads"]) as pool:
        futures = [pool.submit(_eddy_point, section, resolved["seed"], eta, i)
                   for i, eta in enumerate(etas)]
        moments = [f.result() for f in futures]
    constants = {}
    for order in orders:
        constants[order] = canonical_constant(order, section["j_samples"],
                                              seed=resolved["seed"] + 1000,
                                              r_max=section["r_max"],
                                              path_steps=section["path_steps"])
    csv_rows = []
    slopes = {}
    for order in orders:
        ys = [moments[i][order][0] for i in range(len(etas))]
        es = [moments[i][order][1] for i in range(len(etas))]
        for eta, y, e in zip(etas, ys, es):
            csv_rows.append((eta, order, y, e,
                             reduced_moment(order, eta, constants[order][0])))
        if len(etas) >= 3:
            fit = slope_fit(etas, ys, es)
            slopes[order] = {"slope": fit.slope, "stderr": fit.slope_stderr,
                             "ci95": fit.ci95,
                             "target": -4.0 / 3.0 if order == "grad" else -10.0 / 3.0}
    write_csv(os.path.join(outdir, "eddy.csv"),
              ("eta", "order", "estimate", "stderr", "reduced_value"), csv_rows, prov)
    occupation = []
    for i, ell in enumerate(section["occupation_ells"]):
        est, err = occupation_time_mc(ell, section["occupation_samples"],
                                      seed=resolved["seed"] + 2000 + i,
                                      path_steps=section["path_steps"],
                                      r_max=section["r_max"])
        occupation.append({"ell": ell, "estimate": est, "stderr": err,
                           "exact": occupation_time_exact(ell)})
    write_json(os.path.join(outdir, "eddy.json"), {
        "J": {k: {"value": v[0], "stderr": v[1]} for k, v in constants.items()},
        "slopes": slopes,
        "moments": [{"eta": eta, **{o: {"value": moments[i][o][0],
                                        "stderr": moments[i][o][1]} for o in orders}}
                    for i, eta in enumerate(etas)],
        "occupation": occupation,
        "config": experiment_config(resolved), "seed": resolved["seed"], "provenance": prov,
    })
    return 0


_RUNNERS = {
    "simulate": run_simulate,
    "stokes": run_stokes,
    "diagnose": run_diagnose,
    "sweep": run_sweep,
    "conditions": run_conditions,
    "scale-verify": run_scale_verify,
    "eddy": run_eddy,
}


def run(resolved):
    """Dispatch a resolved config; returns the process exit code."""
    resolved = apply_env_overrides(resolved)
    outdir = resolved["out"]
    os.makedirs(outdir, exist_ok=True)
    prov = provenance_block(resolved)
    return _RUNNERS[resolved["mode"]](resolved, outdir, prov)


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="k41",
        description="K41 scaling-law laboratory for spectral stochastic Navier-Stokes")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run the {mode} pipeline")
        p.add_argument("--config", required=True, help="path to the JSON config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="root seed override")
        p.add_argument("--strict", action="store_true",
                       help="treat balance-check violations as verification failures")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
    return parser.parse_args(argv)


def main(argv=None):
    args = _parse_args(sys.argv[1:] if argv is None else argv)
    try:
        raw = read_json(args.config)
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
        raw.setdefault("mode", args.mode)
        if raw["mode"] != args.mode:
            raise ConfigError(
                f"config mode {raw['mode']!r} does not match subcommand {args.mode!r}")
        for key, val in (("out", args.out), ("seed", args.seed),
                         ("threads", args.threads)):
            if val is not None:
                raw[key] = val
        if args.strict:
            raw["strict"] = True
        resolved = validate_config(raw)
        return run(resolved)
    except (ConfigError, CheckpointError, DegenerateStatsError) as exc:
        print(f"k41: config error: {exc}", file=sys.stderr)
        return 1
    except NumericalBlowupError as exc:
        print(f"k41: numerical blowup: {exc}", file=sys.stderr)
        return 2
    except VerificationError as exc:
        print(f"k41: verification failure: {exc}", file=sys.stderr)
        return 3
    except K41Error as exc:
        print(f"k41: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
