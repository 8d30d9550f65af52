"""Command-line batch driver.

Subcommands ``simulate``, ``analyze``, ``compare`` and ``verify`` emit one
table each, as CSV or JSON lines. Settings come from built-in defaults,
then an optional JSON config file, then command-line flags.
"""
from __future__ import annotations

import argparse
import csv
import functools
import io
import json
import math
import sys
from typing import Any, Iterable

import numpy as np

from . import analytics, oracle
from .core import ConfigError, EipError, ProductEnsemble
from .montecarlo import run_batch
from .noise import AuxPoolSpec
from .protocols import PROTOCOLS, AbortPolicy, ProtocolParams, blocking_run

DEFAULTS: dict[str, Any] = {
    "seed": None,
    "trials": 1000,
    "out": None,
    "format": "csv",
    "tol": None,
    "workers": 1,
    "protocol": "eip",
    "protocols": ["eip", "aeip3"],
    "ensemble": "rank3",
    "lam": 2,
    "block_size": None,
    "params": {},
    "aux": {"source": "ideal"},
    "curve": "eip",
    "sweep": {"n": [8], "F": [0.9]},
}

ENSEMBLES = {"damped": ProductEnsemble.damped, "rank3": ProductEnsemble.rank3,
             "werner": ProductEnsemble.werner}

SIM_COLUMNS = ["point", "protocol", "n", "F", "trials", "yield", "yield_se",
               "F_local", "F_local_se", "F_global", "F_global_se",
               "abort_rate", "abort_rate_se", "resources", "resources_se"]

CURVES = ("damp", "eip", "alt_two", "log_subensemble", "fidelity_bounds",
          "hashing", "dejmps", "pj")


# ---------------------------------------------------------------------------
# configuration


def _axis(name: str, spec) -> list:
    if isinstance(spec, dict):
        try:
            start, stop = spec["start"], spec["stop"]
        except KeyError as exc:
            raise ConfigError(f"sweep.{name}: range needs start and stop") from exc
        step = spec.get("step", 1)
        if step <= 0:
            raise ConfigError(f"sweep.{name}.step: must be positive")
        k = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [start + i * step for i in range(max(k, 0))]
        return [round(v, 12) if isinstance(v, float) else v for v in vals]
    if isinstance(spec, (int, float)):
        return [spec]
    if isinstance(spec, list):
        return spec
    raise ConfigError(f"sweep.{name}: expected a list, number or range object")


def sweep_points(cfg: dict, required: Iterable[str]) -> list[dict]:
    """Cartesian product of the sweep axes, in order of first appearance."""
    sw = cfg.get("sweep") or {}
    if not isinstance(sw, dict):
        raise ConfigError("sweep: expected an object")
    axes = {k: _axis(k, v) for k, v in sw.items()}
    for k in required:
        if k not in axes:
            raise ConfigError(f"sweep.{k}: required axis is missing")
    for k, v in axes.items():
        if not v:
            raise ConfigError(f"sweep.{k}: axis is empty")
    pts = [{}]
    for k, vals in axes.items():
        pts = [dict(p, **{k: v}) for p in pts for v in vals]
    return pts


def load_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags, in that order."""
    cfg = json.loads(json.dumps(DEFAULTS))
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config: top level must be an object")
        unknown = sorted(set(doc) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"config: unknown field(s) {', '.join(unknown)}")
        cfg.update(doc)
    for key in ("seed", "trials", "out", "format", "tol", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError("format: must be csv or json")
    if not isinstance(cfg["trials"], int) or cfg["trials"] < 0:
        raise ConfigError("trials: must be a non-negative integer")
    if cfg["seed"] is not None and (not isinstance(cfg["seed"], int) or cfg["seed"] < 0
                                    or cfg["seed"] >= 1 << 64):
        raise ConfigError("seed: must be an unsigned 64-bit integer")
    return cfg


def build_params(cfg: dict) -> ProtocolParams:
    raw = dict(cfg.get("params") or {})
    aux = cfg.get("aux") or {"source": "ideal"}
    src = aux.get("source", "ideal")
    makers = {"ideal": lambda v: AuxPoolSpec.ideal(), "amplitude": AuxPoolSpec.amplitude,
              "embedded": AuxPoolSpec.embedded, "isotropic": AuxPoolSpec.isotropic}
    if src not in makers:
        raise ConfigError(f"aux.source: unknown source {src!r}")
    if src != "ideal" and "value" not in aux:
        raise ConfigError("aux.value: required for a noisy auxiliary source")
    if "abort_policy" in raw:
        try:
            raw["abort_policy"] = AbortPolicy[str(raw["abort_policy"]).upper()]
        except KeyError as exc:
            raise ConfigError(f"params.abort_policy: unknown policy {raw['abort_policy']!r}"
                              ) from exc
    raw.setdefault("lam", cfg.get("lam", 2))
    try:
        return ProtocolParams(aux_pool=makers[src](aux.get("value")), **raw)
    except TypeError as exc:
        raise ConfigError(f"params: {exc}") from exc
    except EipError as exc:
        raise ConfigError(f"params: {exc}") from exc


# ---------------------------------------------------------------------------
# runners


def _run_one(c, rng, protocol: str, params: ProtocolParams, block_size: int | None):
    fn = PROTOCOLS[protocol]
    if protocol in ("eip", "full_rank", "general"):
        inner = functools.partial(_call_lam, fn, params)
    else:
        inner = functools.partial(_call_plain, fn, params)
    if block_size:
        return blocking_run(c, block_size, inner, rng)
    return inner(c, rng)


def _call_lam(fn, params, c, rng):
    return fn(c, params.lam, params, rng)


def _call_plain(fn, params, c, rng):
    return fn(c, params, rng)


def _deterministic(protocol: str, params: ProtocolParams) -> bool:
    if not params.noiseless:
        return False
    if protocol in ("full_rank", "general"):
        return False
    return not (protocol == "eip" and params.lam > 2)


def _ensemble(cfg: dict, pt: dict) -> ProductEnsemble:
    kind = cfg.get("ensemble", "rank3")
    if kind not in ENSEMBLES:
        raise ConfigError(f"ensemble: unknown kind {kind!r}")
    try:
        return ENSEMBLES[kind](int(pt["n"]), float(pt["F"]))
    except EipError as exc:
        raise ConfigError(f"sweep: invalid point {pt} ({exc})") from exc


def _simulate_rows(cfg: dict, protocols: list[str]) -> list[dict]:
    if cfg["seed"] is None:
        raise ConfigError("seed: required for Monte-Carlo commands")
    for p in protocols:
        if p not in PROTOCOLS:
            raise ConfigError(f"protocol: unknown protocol {p!r}")
    params = build_params(cfg)
    rows = []
    for i, pt in enumerate(sweep_points(cfg, ("n", "F"))):
        ens = _ensemble(cfg, pt)
        pp = params.replace(**{k: pt[k] for k in ("lam", "k_max") if k in pt})
        for protocol in protocols:
            if cfg["trials"] == 0:
                continue
            run = functools.partial(_run_one, protocol=protocol, params=pp,
                                    block_size=cfg.get("block_size"))
            res = run_batch(run, ens, cfg["trials"], cfg["seed"], point=i,
                            deterministic=_deterministic(protocol, pp),
                            workers=cfg.get("workers"))
            s = res.summary()
            row = {"point": i, "protocol": protocol, "n": ens.n, "F": float(pt["F"])}
            row.update({k: s[k] for k in SIM_COLUMNS[4:]})
            rows.append(row)
    return rows


def cmd_simulate(cfg: dict) -> list[dict]:
    return _simulate_rows(cfg, [cfg.get("protocol", "eip")])


def _analytic_yield(protocol: str, ensemble: str, n: int, F: float,
                    params: ProtocolParams) -> float:
    """Closed-form yield when one exists for this protocol and ensemble, else NaN."""
    if not params.noiseless:
        return math.nan
    if protocol == "eip_damp" and ensemble == "damped":
        return analytics.yield_damp(n, F, params.k_max)
    if protocol == "eip" and ensemble == "rank3" and params.lam <= 2 \
            and n <= analytics.ENUM_CAP:
        return analytics.yield_raw_eip(n, F, params.lam)
    return math.nan


def cmd_compare(cfg: dict) -> list[dict]:
    """Monte-Carlo rows for several protocols next to the closed-form yield."""
    protocols = cfg.get("protocols") or []
    if not protocols:
        raise ConfigError("protocols: at least one protocol is required")
    rows = _simulate_rows(cfg, protocols)
    params = build_params(cfg)
    for r in rows:
        pp = params.replace(**{k: r[k] for k in ("lam", "k_max") if k in r})
        r["yield_analytic"] = _analytic_yield(r["protocol"], cfg.get("ensemble", "rank3"),
                                              r["n"], r["F"], pp)
    return rows


def cmd_analyze(cfg: dict) -> list[dict]:
    curve = cfg.get("curve")
    if curve not in CURVES:
        raise ConfigError(f"curve: expected one of {', '.join(CURVES)}")
    rows = []
    try:
        for pt in sweep_points(cfg, _CURVE_AXES[curve]):
            rows += _CURVE_ROWS[curve](pt)
    except (EipError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"sweep: {exc}") from exc
    return rows


def _rows_damp(pt):
    n, F = int(pt["n"]), float(pt["F"])
    kopt = analytics.kmax_opt(n)
    k = int(pt.get("k_max", kopt))
    return [{"n": n, "F": F, "k_max": k, "k_max_opt": kopt,
             "yield": analytics.yield_damp(n, F, k),
             "resources": analytics.resources_total_damp(n, F, k),
             "yield_opt": analytics.yield_damp(n, F, kopt)}]


def _rows_eip(pt):
    n, F, lam = int(pt["n"]), float(pt["F"]), int(pt.get("lam", 2))
    row = {"n": n, "F": F, "lam": lam,
           "F_global": analytics.global_fidelity_lambda(n, F, lam),
           "yield": analytics.yield_eps(n, F, lam) if lam <= 2 else math.nan,
           "F_local": math.nan}
    if lam <= 2 and n <= analytics.ENUM_CAP:
        row["F_local"] = analytics.local_fidelity_exact(n, F, lam)
    return [row]


def _rows_alt(pt):
    n = int(pt["n"])
    return [{"n": n, "yield_alt": analytics.yield_alt_two(n),
             "yield_bound": analytics.yield_bound_known_k(n, 2)}]


def _rows_logsub(pt):
    n = int(pt["n"])
    return [{"n": n, "exact": analytics.expected_log_subensemble(n),
             "fit": analytics.fit_log_subensemble(n),
             "resource_ratio": analytics.identical_resource_ratio(n)}]


def _rows_bounds(pt):
    m, Fg = int(pt["m"]), float(pt["F_global"])
    lo, hi = analytics.fidelity_bounds(Fg, m)
    return [{"m": m, "F_global": Fg, "F_local_min": lo, "F_local_max": hi}]


def _rows_hashing(pt):
    n, F = int(pt["n"]), float(pt["F"])
    delta = float(pt["delta"]) if "delta" in pt else n ** -0.2
    fg, y = analytics.hashing_bound(n, F, delta)
    return [{"n": n, "F": F, "delta": delta, "p1": analytics.hashing_p1(n, F, delta),
             "F_global_bound": fg, "yield_bound": y}]


def _rows_dejmps(pt):
    F, rounds = float(pt["F"]), int(pt.get("rounds", 3))
    n = int(pt["n"]) if "n" in pt else None
    out = []
    for r in analytics.dejmps_curve(F, rounds, n):
        out.append({"F": F, "round": r["round"], "F_local": r["F_local"], "yield": r["yield"],
                    "F_global": r.get("F_global", math.nan)})
    return out


def _rows_pj(pt):
    n, F, lam = int(pt["n"]), float(pt["F"]), int(pt.get("lam", 2))
    return [{"n": n, "F": F, "lam": lam, "j": j, "prob": analytics.pj_lambda(n, F, lam, j)}
            for j in range(2 * lam + 1)]


_CURVE_ROWS = {"damp": _rows_damp, "eip": _rows_eip, "alt_two": _rows_alt,
               "log_subensemble": _rows_logsub, "fidelity_bounds": _rows_bounds,
               "hashing": _rows_hashing, "dejmps": _rows_dejmps, "pj": _rows_pj}
_CURVE_AXES = {"damp": ("n", "F"), "eip": ("n", "F"), "alt_two": ("n",),
               "log_subensemble": ("n",), "fidelity_bounds": ("m", "F_global"),
               "hashing": ("n", "F"), "dejmps": ("F",), "pj": ("n", "F")}


def cmd_verify(cfg: dict) -> tuple[list[dict], bool]:
    tol = cfg.get("tol")
    if tol is not None and (not isinstance(tol, (int, float)) or tol <= 0):
        raise ConfigError("tol: must be a positive number")
    res = oracle.run_all(tol)
    rows = [{"name": r.name, "max_dev": r.max_dev, "tol": r.tol, "passed": r.passed}
            for r in res]
    return rows, all(r.passed for r in res)


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return None if math.isnan(f) else float(format(f, ".9g"))
    return v


def render(rows: list[dict], fmt: str, columns: list[str] | None = None) -> str:
    """Serialize ``rows``; CSV gets a header even when there are no rows."""
    if fmt == "json":
        return "".join(json.dumps({k: _json_value(v) for k, v in r.items()}) + "\n"
                       for r in rows)
    cols = columns or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if cols:
        w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, math.nan)) for c in cols])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eipsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "analyze", "compare", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config document")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--tol", type=float, help="override every oracle tolerance")
        sp.add_argument("--workers", type=int, help="worker processes (capped by EIPSIM_THREADS)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        ok = True
        columns = None
        if args.command == "simulate":
            rows, columns = cmd_simulate(cfg), SIM_COLUMNS
        elif args.command == "compare":
            rows, columns = cmd_compare(cfg), SIM_COLUMNS + ["yield_analytic"]
        elif args.command == "analyze":
            rows = cmd_analyze(cfg)
        else:
            rows, ok = cmd_verify(cfg)
            columns = ["name", "max_dev", "tol", "passed"]
            for r in rows:
                if not r["passed"]:
                    print(f"FAILED {r['name']}: max deviation {r['max_dev']:.3e} "
                          f"> {r['tol']:.1e}", file=sys.stderr)
        _emit(render(rows, cfg["format"], columns), cfg.get("out"))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
