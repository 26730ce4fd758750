"""Experiment configuration: schema validation with defaults and strict keys.

The config file is UTF-8 JSON (nested key-value).  Unknown keys are rejected
and every validation error names the offending key.  load_config returns the
fully resolved config (all defaults filled); emitting and reloading a
resolved config is the identity.
"""

import json
import math
import os

from .errors import ConfigError

MODES = ("simulate", "stokes", "diagnose", "sweep", "conditions", "scale-verify", "eddy")


def _fail(path, msg):
    raise ConfigError(f"config key '{path}': {msg}")


def _get_number(raw, path, key, default=None, positive=False, nonneg=False,
                integer=False, minimum=None):
    val = raw.get(key, default)
    if val is None:
        if default is None:
            _fail(f"{path}{key}", "missing required value")
        val = default
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        _fail(f"{path}{key}", f"expected a number, got {type(val).__name__}")
    if integer and not isinstance(val, int):
        _fail(f"{path}{key}", "expected an integer")
    if positive and not val > 0:
        _fail(f"{path}{key}", f"must be > 0, got {val}")
    if nonneg and val < 0:
        _fail(f"{path}{key}", f"must be >= 0, got {val}")
    if minimum is not None and val < minimum:
        _fail(f"{path}{key}", f"must be >= {minimum}, got {val}")
    if not integer and not math.isfinite(float(val)):
        _fail(f"{path}{key}", "must be finite")
    return int(val) if integer else float(val)


def _get_choice(raw, path, key, choices, default):
    val = raw.get(key, default)
    if val not in choices:
        _fail(f"{path}{key}", f"must be one of {choices}, got {val!r}")
    return val


def _get_str(raw, path, key, default=None, required=False):
    val = raw.get(key, default)
    if required and val is None:
        _fail(f"{path}{key}", "missing required value")
    if val is not None and not isinstance(val, str):
        _fail(f"{path}{key}", "expected a string")
    return val


def _get_bool(raw, path, key, default):
    val = raw.get(key, default)
    if not isinstance(val, bool):
        _fail(f"{path}{key}", "expected true/false")
    return val


def _reject_unknown(raw, path, allowed):
    for key in raw:
        if key not in allowed:
            _fail(f"{path}{key}", "unknown key")


def _get_list(raw, path, key, positive=True):
    val = raw.get(key)
    if not isinstance(val, list) or not val:
        _fail(f"{path}{key}", "expected a non-empty list")
    out = []
    for i, item in enumerate(val):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            _fail(f"{path}{key}[{i}]", "expected a number")
        if positive and not item > 0:
            _fail(f"{path}{key}[{i}]", f"must be > 0, got {item}")
        out.append(float(item))
    return out


def _sim_section(raw, path, need_time=True, need_nu=True):
    allowed = {"d", "L", "n", "amp", "forcing", "r_points"}
    out = {
        "d": _get_number(raw, path, "d", default=None, integer=True),
        "L": _get_number(raw, path, "L", default=1.0, positive=True),
        "n": _get_number(raw, path, "n", default=None, integer=True, minimum=1),
        "amp": _get_number(raw, path, "amp", default=1.0, nonneg=True),
        "r_points": _get_number(raw, path, "r_points", default=64, integer=True, minimum=3),
    }
    if out["d"] not in (2, 3):
        _fail(f"{path}d", f"must be 2 or 3, got {out['d']}")
    forcing_raw = raw.get("forcing", {})
    if not isinstance(forcing_raw, dict):
        _fail(f"{path}forcing", "expected an object")
    _reject_unknown(forcing_raw, f"{path}forcing.", {"k_f", "intensity"})
    out["forcing"] = {
        "k_f": _get_number(forcing_raw, f"{path}forcing.", "k_f", default=1,
                           integer=True, minimum=1),
        "intensity": _get_number(forcing_raw, f"{path}forcing.", "intensity",
                                 default=1.0, positive=True),
    }
    if need_nu:
        allowed.add("nu")
        out["nu"] = _get_number(raw, path, "nu", default=None, positive=True)
    if need_time:
        allowed |= {"dt", "t_burn", "t_avg", "stepper", "nonlinearity",
                    "n_batches", "stretch_every"}
        dt = raw.get("dt")
        if dt is not None:
            dt = _get_number(raw, path, "dt", default=None, positive=True)
        out["dt"] = dt  # null -> stability heuristic at run time
        out["t_burn"] = _get_number(raw, path, "t_burn", default=1.0, nonneg=True)
        out["t_avg"] = _get_number(raw, path, "t_avg", default=10.0, positive=True)
        out["stepper"] = _get_choice(raw, path, "stepper",
                                     ("exponential_euler", "euler_maruyama"),
                                     "exponential_euler")
        out["nonlinearity"] = _get_choice(raw, path, "nonlinearity",
                                          ("pseudospectral", "direct"), "pseudospectral")
        out["n_batches"] = _get_number(raw, path, "n_batches", default=20,
                                       integer=True, minimum=2)
        out["stretch_every"] = _get_number(raw, path, "stretch_every", default=1,
                                           integer=True, minimum=1)
    _reject_unknown(raw, path, allowed)
    return out


def _validate_section(mode, raw):
    path = f"{mode}."
    if not isinstance(raw, dict):
        _fail(mode, "expected an object")
    if mode == "simulate":
        base_raw = {k: v for k, v in raw.items() if k != "checkpoint"}
        out = _sim_section(base_raw, path)
        out["checkpoint"] = _get_bool(raw, path, "checkpoint", True)
        return out
    if mode == "stokes":
        return _sim_section(raw, path, need_time=False)
    if mode == "diagnose":
        _reject_unknown(raw, path, {"stats", "r_points"})
        return {
            "stats": _get_str(raw, path, "stats", required=True),
            "r_points": _get_number(raw, path, "r_points", default=64,
                                    integer=True, minimum=3),
        }
    if mode == "sweep":
        base_raw = {k: v for k, v in raw.items()
                    if k not in ("nus", "kind", "C0", "R0_coeff", "R0_exp")}
        out = _sim_section(base_raw, path, need_nu=False)
        out["nus"] = _get_list(raw, path, "nus")
        out["kind"] = _get_choice(raw, path, "kind", ("galerkin", "stokes"), "stokes")
        out["C0"] = _get_number(raw, path, "C0", default=1.0, positive=True)
        out["R0_coeff"] = _get_number(raw, path, "R0_coeff", default=1.0, positive=True)
        out["R0_exp"] = _get_number(raw, path, "R0_exp", default=0.25, positive=True)
        return out
    if mode == "conditions":
        _reject_unknown(raw, path, {"stats"})
        return {"stats": _get_str(raw, path, "stats", required=True)}
    if mode == "scale-verify":
        base_raw = {k: v for k, v in raw.items()
                    if k not in ("lam", "beta", "steps", "threshold")}
        out = _sim_section(base_raw, path)
        out["stepper"] = "euler_maruyama"
        out["nonlinearity"] = "direct"
        out["lam"] = _get_number(raw, path, "lam", default=2.0, positive=True)
        out["beta"] = _get_number(raw, path, "beta", default=-1.0 / 3.0)
        out["steps"] = _get_number(raw, path, "steps", default=200, integer=True, minimum=1)
        out["threshold"] = _get_number(raw, path, "threshold", default=1e-10, positive=True)
        return out
    if mode == "eddy":
        _reject_unknown(raw, path, {"etas", "samples", "order", "path_steps",
                                    "r_max", "j_samples", "occupation_ells",
                                    "occupation_samples"})
        out = {
            "etas": _get_list(raw, path, "etas"),
            "samples": _get_number(raw, path, "samples", default=100000,
                                   integer=True, minimum=1),
            "order": _get_choice(raw, path, "order", ("grad", "hess", "both"), "both"),
            "path_steps": _get_number(raw, path, "path_steps", default=200,
                                      integer=True, minimum=100),
            "r_max": _get_number(raw, path, "r_max", default=50.0, positive=True),
            "j_samples": _get_number(raw, path, "j_samples", default=100000,
                                     integer=True, minimum=1),
            "occupation_ells": raw.get("occupation_ells", []),
            "occupation_samples": _get_number(raw, path, "occupation_samples",
                                              default=100000, integer=True, minimum=1),
        }
        if out["occupation_ells"]:
            out["occupation_ells"] = _get_list(raw, path, "occupation_ells")
        for eta in out["etas"]:
            if not eta < 1.0:
                _fail(f"{path}etas", f"UV cutoffs must lie in (0, 1), got {eta}")
        return out
    _fail("mode", f"unhandled mode {mode!r}")


def validate_config(raw):
    """Resolve and validate a raw config dict; returns the resolved config."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    mode = raw.get("mode")
    if mode not in MODES:
        _fail("mode", f"must be one of {MODES}, got {mode!r}")
    allowed = {"mode", "seed", "out", "threads", "strict", mode}
    _reject_unknown(raw, "", allowed)
    resolved = {
        "mode": mode,
        "seed": _get_number(raw, "", "seed", default=0, integer=True, nonneg=True),
        "out": _get_str(raw, "", "out", default="out"),
        "threads": _get_number(raw, "", "threads", default=1, integer=True, minimum=1),
        "strict": _get_bool(raw, "", "strict", False),
        mode: _validate_section(mode, raw.get(mode, {})),
    }
    return resolved


def load_config(path):
    """Read, parse, and validate a config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return validate_config(raw)


def apply_env_overrides(resolved, env=None):
    """K41_OUT and K41_THREADS override output path and thread count only."""
    env = os.environ if env is None else env
    if env.get("K41_OUT"):
        resolved = dict(resolved, out=env["K41_OUT"])
    if env.get("K41_THREADS"):
        try:
            threads = int(env["K41_THREADS"])
        except ValueError as exc:
            raise ConfigError(f"K41_THREADS must be an integer: {exc}") from exc
        if threads < 1:
            raise ConfigError("K41_THREADS must be >= 1")
        resolved = dict(resolved, threads=threads)
    return resolved
