"""Command-line front end.

    cutlab <command> [--config FILE] [--env FILE] --out DIR [command flags]

Precedence: built-in defaults < config file < command-line flags.  A config
file is a JSON object ``{"command": ..., "env": ..., "params": {...}}``; a
manifest written by an earlier run is accepted as well and reproduces it.
Exit codes: 0 ok, 2 configuration error, 3 model error, 4 numeric/step cap.
Errors are reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, contfrac, env as envmod, experiments, prob, sim
from .errors import CapError, ModelError

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_CAP = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ schema

def _ints(v):
    if isinstance(v, str):
        v = [x for x in v.replace(",", " ").split()]
    if isinstance(v, (int, float)):
        v = [v]
    return [int(float(x)) for x in v]


def _floats(v):
    if isinstance(v, str):
        v = [x for x in v.replace(",", " ").split()]
    if isinstance(v, (int, float)):
        v = [v]
    return [float(x) for x in v]


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def _bool(v):
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("1", "true", "yes"):
        return True
    if str(v).lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


REQUIRED = object()
QUANTITIES = ("FX", "FY", "G", "DX", "DY", "escapeY", "escapeX", "neverX", "neverY",
              "pcutX", "pcutY", "eta", "h", "tau", "transientX", "transientY")

# name -> (parser, default); REQUIRED marks mandatory values
SCHEMA = {
    "probe": {"quantity": (str, REQUIRED), "m": (_int, None), "k": (_int, None),
              "n": (_int, None), "tol": (float, prob.DEFAULT_TOL)},
    "simulate": {"k": (_ints, REQUIRED), "trials": (_int, 10**5), "seed": (_int, REQUIRED),
                 "step_cap": (_int, sim.DEFAULT_STEP_CAP), "workers": (_int, None)},
    "census": {"kind": (str, REQUIRED), "K": (_int, REQUIRED), "trials": (_int, 1),
               "seed": (_int, REQUIRED), "eps_conf": (float, sim.DEFAULT_EPS_CONF),
               "step_cap": (_int, sim.DEFAULT_STEP_CAP), "mode": (str, "auto"),
               "rows": (str, "all"), "workers": (_int, None)},
    "sn": {"kind": (str, REQUIRED), "n_grid": (_ints, REQUIRED), "trials": (_int, REQUIRED),
           "seed": (_int, REQUIRED), "eps_conf": (float, sim.DEFAULT_EPS_CONF),
           "step_cap": (_int, sim.DEFAULT_STEP_CAP), "workers": (_int, None)},
    "verify": {"suite": (str, REQUIRED), "n": (_int, 1000), "grid": (_ints, None),
               "k_samples": (_ints, [1, 10, 100]), "m_samples": (_ints, [5, 10, 50])},
    "growth": {"kind": (str, REQUIRED), "betas": (_floats, [0.0, 0.5]),
               "n_grid": (_ints, [1000, 3000, 10000, 30000, 100000]), "trials": (_int, 0),
               "seed": (_int, None), "eps": (float, 0.1), "exact": (_bool, True),
               "workers": (_int, None)},
}
NEEDS_ENV = {"probe", "simulate", "census", "sn", "verify"}
TOP_KEYS = {"command", "env", "params"}


@dataclass
class RunConfig:
    command: str
    env: dict | None
    params: dict
    out: Path
    sources: dict = field(default_factory=dict)

    def to_json(self):
        return {"command": self.command, "env": self.env, "params": self.params}


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _resolve_env(spec, base_dir):
    """Env spec (inline dict or path) -> (normalized dict, Environment)."""
    if spec is None:
        return None, None
    if isinstance(spec, str):
        path = Path(spec)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        spec, base_dir = _load_json(path), path.parent
    if not isinstance(spec, dict):
        raise ConfigError("env must be an object or a path to one")
    spec = dict(spec)
    if spec.get("type") == "table" and base_dir is not None:
        p = Path(spec.get("path", ""))
        spec["path"] = str(p if p.is_absolute() else (Path(base_dir) / p).resolve())
    try:
        env = envmod.from_config(spec)
    except (envmod.EnvError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid environment: {exc}") from None
    return spec, env


def build_config(command, file_cfg, flag_params, env_flag, out):
    """Merge defaults, config file and flags, then validate."""
    if command not in SCHEMA:
        raise ConfigError(f"unknown command {command!r}")
    file_cfg = dict(file_cfg or {})
    if "config" in file_cfg and "versions" in file_cfg:      # a manifest
        file_cfg = dict(file_cfg["config"])
    unknown = set(file_cfg) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if file_cfg.get("command", command) != command:
        raise ConfigError(f"config is for {file_cfg['command']!r}, not {command!r}")
    schema = SCHEMA[command]
    raw = dict(file_cfg.get("params") or {})
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"unknown parameters for {command}: {sorted(unknown)}")
    sources = {k: "config" for k in raw}
    for k, v in flag_params.items():
        if v is not None:
            raw[k] = v
            sources[k] = "flag"
    params = {}
    for name, (parse, default) in schema.items():
        if name in raw and raw[name] is not None:
            try:
                params[name] = parse(raw[name])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"parameter {name}: {exc}") from None
        elif default is REQUIRED:
            raise ConfigError(f"parameter {name} is required for {command}")
        else:
            params[name] = default
            sources.setdefault(name, "default")
    if command == "growth" and params["trials"] and params["seed"] is None:
        raise ConfigError("seed is required when trials > 0")
    if "kind" in params:
        params["kind"] = params["kind"].upper()
        if params["kind"] not in ("X", "Y"):
            raise ConfigError("kind must be X or Y")
    if command == "probe" and params["quantity"] not in QUANTITIES:
        raise ConfigError(f"quantity must be one of {QUANTITIES}")
    if command == "verify" and params["suite"] not in ("prop1", "ratio", "bounded"):
        raise ConfigError("suite must be prop1, ratio or bounded")
    if command == "census" and params["rows"] not in ("all", "cutpoints"):
        raise ConfigError("rows must be all or cutpoints")
    env_spec = env_flag if env_flag is not None else file_cfg.get("env")
    if command in NEEDS_ENV and env_spec is None:
        raise ConfigError(f"{command} needs --env")
    return RunConfig(command, env_spec, params, Path(out), sources)


# ------------------------------------------------------------------ output

def fmt(v):
    """Shortest round-trip text for reals (at most 17 significant digits)."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return "" if v is None else str(v)


class Writer:
    """Atomic artifact writer confined to one output directory."""

    def __init__(self, out):
        self.out = Path(out).resolve()
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = {}

    def _target(self, name):
        p = (self.out / name).resolve()
        if p.parent != self.out:
            raise ConfigError(f"artifact {name!r} would leave the output directory")
        return p

    def text(self, name, data):
        p = self._target(name)
        fd, tmp = tempfile.mkstemp(dir=self.out, prefix=".tmp-", suffix=".part")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(data)
            os.replace(tmp, p)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.files[name] = hashlib.sha256(data.encode()).hexdigest()

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
        self.text(name, buf.getvalue())

    def json(self, name, obj):
        self.text(name, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


def versions():
    import numba
    return {"cutlab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "numba": numba.__version__}


# --------------------------------------------------------------- commands

def _series_row(name, m, k, n, res):
    return (name, m, k, n, res.estimate if res.heuristic and not res.diverged else res.value,
            res.tail_bound, res.terms_used, res.diverged)


def cmd_probe(cfg, env, w):
    p = cfg.params
    qn, m, k, n, tol = p["quantity"], p["m"], p["k"], p["n"], p["tol"]
    rows, extra = [], {}

    def need(*names):
        for nm in names:
            if p[nm] is None:
                raise ConfigError(f"quantity {qn} needs --{nm}")

    if qn in ("FX", "FY", "G"):
        need("m")
        res = prob.series(env, {"FX": "F_X", "FY": "F_Y", "G": "G"}[qn], m, n, tol)
        rows.append(_series_row(qn, m, None, n, res))
    elif qn in ("DX", "DY"):
        need("m")
        res = prob.series(env, "D_" + qn[1], m, n, tol)
        rows.append(_series_row(qn, m, None, n, res))
    elif qn == "escapeY":
        need("m", "k", "n")
        s = prob.escape_Y_split(env, m, k, n)
        rows += [("escapeY_low", m, k, n, s.q_low, 0.0, None, False),
                 ("escapeY_high", m, k, n, s.q_high, 0.0, None, False),
                 ("escapeY_plus", m, k, n, s.q_plus, 0.0, None, False)]
    elif qn == "escapeX":
        need("m", "k", "n")
        rows.append(("escapeX_down", m, k, n, prob.escape_X_down(env, m, k, n), 0.0, None, False))
    elif qn in ("neverX", "neverY"):
        need("m")
        fn = prob.escape_X_never_return if qn == "neverX" else prob.escape_Y_to_inf
        rows.append((qn, m, None, None, fn(env, m, tol), None, None, None))
    elif qn == "pcutX":
        need("k")
        rows.append((qn, None, k, None, prob.p_cut_X(env, k, tol), None, None, None))
    elif qn == "pcutY":
        need("k")
        c = prob.p_cut_layer_Y(env, k, tol)
        rows += [(f"pcutY_{nm}", None, k, None, getattr(c, nm), None, None, None)
                 for nm in ("exact", "lower", "upper", "asym")]
    elif qn == "eta":
        need("k")
        rows.append((qn, None, k, None, prob.eta_diag(env, k), None, None, None))
    elif qn == "h":
        need("k")
        h1, h2 = prob.h_layer(env, k)
        rows += [("h1", None, k, None, h1, None, None, None), ("h2", None, k, None, h2, None, None, None)]
    elif qn == "tau":
        lim = env.limits()
        rows.append((qn, None, None, None, lim.tau, None, None, None))
        extra["limits"] = lim.__dict__
    else:
        t = prob.transient(env, qn[-1])
        code = {"transient": 1.0, "recurrent": 0.0}.get(t.verdict, math.nan)
        rows.append((qn, None, None, None, code, None, None, None))
        extra["transience"] = t.__dict__
    w.csv("probe.csv", ["quantity", "m", "k", "n", "value", "tail_bound", "terms_used", "diverged"],
          rows)
    return {"rows": len(rows), **extra}


def cmd_simulate(cfg, env, w):
    p = cfg.params
    rows = []
    for k in p["k"]:
        h1, h2 = sim.layer_hit_estimate(env, k, p["trials"], p["seed"], p["step_cap"], p["workers"])
        rows.append((k, h1, h2, p["trials"]))
    w.csv("hits.csv", ["k", "h1", "h2", "trials"], rows)
    return {"layers": len(rows)}


def cmd_census(cfg, env, w):
    p = cfg.params
    c = sim.cutpoint_census(env, p["kind"], p["K"], p["eps_conf"], p["step_cap"], p["seed"],
                            p["trials"], p["workers"], p["mode"])
    cut = c.cut
    buf = io.StringIO()
    buf.write("trajectory,k,visits,is_cutpoint\n")
    ks = np.arange(c.K + 1)
    for t in range(c.trials):
        sel = slice(2, None) if p["rows"] == "all" else np.nonzero(cut[t])[0]
        kk = ks[sel]
        vv = c.counts[t][sel]
        cc = cut[t][sel].astype(np.int8)
        buf.write("".join(f"{t},{a},{b},{d}\n" for a, b, d in zip(kk.tolist(), vv.tolist(), cc.tolist())))
    w.text("census.csv", buf.getvalue())
    freq = c.site_frequency()
    w.csv("census_sites.csv", ["k", "frequency"], [(k, freq[k]) for k in range(2, c.K + 1)])
    return {"K": c.K, "W": c.W, "mode": c.mode, "eps_cens": c.eps_cens,
            "total_steps": c.meta["total_steps"]}


def cmd_sn(cfg, env, w):
    p = cfg.params
    tab = sim.s_n_statistics(env, p["kind"], p["n_grid"], p["trials"], p["eps_conf"], p["seed"],
                             p["workers"], p["step_cap"])
    w.csv("sn.csv", ["n", "mean_sn", "ci", "trials"], tab.rows())
    return {"rows": len(tab.n)}


def cmd_verify(cfg, env, w):
    p = cfg.params
    n = p["n"]
    grid = p["grid"] or sorted({g for g in (50, 100, 200, 400, 1000, 2000, 5000) if g < n} | {n})
    if p["suite"] == "prop1":
        reps = experiments.verify_prop1_limits(env, grid, p["k_samples"])
    elif p["suite"] == "ratio":
        reps = experiments.verify_ratio_limits(env, grid, p["m_samples"])
    else:
        b = experiments.verify_bounded_ratios(env, grid)
        w.csv("bounded.csv", ["family", "min", "max", "ratio", "applicable"],
              [(k, f["min"], f["max"], f["ratio"], f["applicable"]) for k, f in b.families.items()])
        summary = [{"quantity": "bounded_ratios", "verdict": b.verdict}]
        w.json("summary.json", summary)
        return {"verdicts": summary}
    summary = []
    for name, r in reps.items():
        w.csv(f"{name}.csv", ["n", "value", "target", "abs_error"], r.rows())
        summary.append(r.summary())
    w.json("summary.json", summary)
    return {"verdicts": summary}


def cmd_growth(cfg, env, w):
    p = cfg.params
    res = experiments.growth_curve(p["kind"], p["betas"], p["n_grid"], p["trials"], p["seed"],
                                   p["eps"], p["workers"], exact=p["exact"])
    rows, summary = [], []
    for g in res:
        norm = experiments.normalizer(g.n, g.beta)
        for i, n in enumerate(g.n):
            ex = None if g.exact is None else g.exact[i]
            mean = None if g.mc is None else g.mc.mean[i]
            ci = None if g.mc is None else g.mc.ci[i]
            rows.append((g.beta, n, ex, None if ex is None else ex / norm[i], mean, ci))
        summary.append({"beta": g.beta, "flatness": g.flatness, "exponent": g.exponent,
                        "passed": g.passed, "mc_ratio": g.ratio})
        if g.diagnostic is not None:
            w.csv(f"diagnostic_beta{g.beta:g}.csv", ["trajectory"] + [f"n{n}" for n in g.n],
                  [(t, *row) for t, row in enumerate(g.diagnostic)])
    w.csv("growth.csv", ["beta", "n", "exact_mean_sn", "normalized", "mc_mean_sn", "mc_ci"], rows)
    w.json("summary.json", summary)
    return {"summary": summary}


COMMANDS = {"probe": cmd_probe, "simulate": cmd_simulate, "census": cmd_census,
            "sn": cmd_sn, "verify": cmd_verify, "growth": cmd_growth}


def run(cfg):
    """Execute a validated config; returns the manifest dict."""
    t0 = time.time()
    env_spec, env = _resolve_env(cfg.env, None)
    w = Writer(cfg.out)
    info = COMMANDS[cfg.command](cfg, env, w)
    manifest = {
        "config": {"command": cfg.command, "env": env_spec, "params": cfg.params},
        "sources": cfg.sources,
        "versions": versions(),
        "wall_time_s": time.time() - t0,
        "artifacts": dict(w.files),
        "result": info,
    }
    if env is not None:
        manifest["env_meta"] = env.describe()
    w.json("manifest.json", manifest)
    return manifest


# ------------------------------------------------------------------ parser

def _parser():
    ap = argparse.ArgumentParser(prog="cutlab", description="Cutpoint laboratory for (1,2) and (2,1) walks.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMA.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config or manifest")
        sp.add_argument("--env", help="environment JSON file")
        sp.add_argument("--out", default=".", help="output directory")
        for key, (parse, _) in schema.items():
            flag = "--" + key.replace("_", "-")
            if parse in (_ints, _floats):
                sp.add_argument(flag, dest=key, nargs="+", default=None)
            else:
                sp.add_argument(flag, dest=key, default=None)
    return ap


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}) + "\n")
    return code


def main(argv=None):
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return _fail(EXIT_CONFIG, ConfigError("invalid command line"))
    flags = {k: v for k, v in vars(args).items()
             if k not in ("command", "config", "env", "out")}
    try:
        file_cfg = _load_json(args.config) if args.config else {}
        base = Path(args.config).parent if args.config else None
        cfg = build_config(args.command, file_cfg, flags, args.env, args.out)
        if cfg.env is not None:
            # flag paths are relative to the cwd, config paths to the config file
            cfg.env = _resolve_env(cfg.env, None if args.env else base)[0]
        manifest = run(cfg)
    except (ConfigError, envmod.EnvError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except ModelError as exc:
        return _fail(EXIT_MODEL, exc)
    except (CapError, contfrac.TailNotConverged) as exc:
        return _fail(EXIT_CAP, exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc)
    sys.stdout.write(json.dumps({"artifacts": manifest["artifacts"],
                                 "wall_time_s": manifest["wall_time_s"]}) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
