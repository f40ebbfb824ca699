"""Command-line front end: collect -> check -> synthesize -> estimate, plus the microgrid demo.

Exit codes: 0 success, 2 no UIO exists, 3 invalid input data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import microgrid as mg
from .linalg import NumericalError, Tolerance
from .lti import LtiSystem, random_system, simulate
from .trajectory import (
    build_blocks,
    check_assumption1,
    default_length,
    min_pe_length,
    read_trajectory,
    write_trajectory,
)
from .uio import load_realization, run_estimator, save_realization, synthesize

log = logging.getLogger("datauio")

EXIT_OK, EXIT_NO_UIO, EXIT_BAD_INPUT, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "T": None,
    "Ts": 0.01,
    "tol_rank": 1e-10,
    "tol_abs": 1e-12,
    "tol_schur": 1e-9,
    "out": None,
    "n": 3, "m": 1, "p": None, "md": 1,
    "N": None,  # 10 for the safe demo, 100 for the attack demo
    "xhat0": None,
    "T_a": 50,
    "phi": "0.1,0.1,0.1",
}


class InputError(Exception):
    pass


def load_config(path) -> dict:
    """JSON object or flat ``key = value`` lines (``#`` starts a comment)."""
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise InputError(f"{path}: config must be a JSON object")
        return {k.replace("-", "_"): v for k, v in obj.items()}
    except json.JSONDecodeError:
        pass
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        try:
            out[k.replace("-", "_")] = json.loads(v)
        except json.JSONDecodeError:
            out[k.replace("-", "_")] = v
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(load_config(args.config))
    for k, v in vars(args).items():
        if v is not None and k != "func":
            cfg[k] = v
    log.info("resolved config: %s", json.dumps(cfg, default=str, sort_keys=True))
    return cfg


def _tol(cfg) -> Tolerance:
    return Tolerance(rank_rel=float(cfg["tol_rank"]), abs_floor=float(cfg["tol_abs"]),
                     schur_margin=float(cfg["tol_schur"]))


def _vec(text, n=None) -> np.ndarray:
    v = np.array([float(s) for s in str(text).split(",")]) if not isinstance(text, list) \
        else np.array(text, dtype=float)
    if n is not None and v.size != n:
        raise InputError(f"expected {n} comma-separated values, got {v.size}")
    return v


def _require_out(cfg) -> Path:
    if not cfg.get("out"):
        raise InputError("--out is required")
    return Path(cfg["out"])


def _emit(obj, cfg, key="report_out"):
    text = json.dumps(obj, indent=2, default=float)
    print(text)
    if cfg.get(key):
        Path(cfg[key]).write_text(text)


# --- commands ---------------------------------------------------------------

def cmd_collect(cfg) -> int:
    out = _require_out(cfg)
    seed = int(cfg["seed"])
    tol = _tol(cfg)
    if cfg.get("microgrid"):
        params = mg.DguParams(T_s=float(cfg["Ts"]))
        if cfg.get("online"):
            traj = mg.simulate_dgu(params, int(cfg["online"]), seed, label="online").online()
            write_trajectory(traj, out)
            print(json.dumps({"written": str(out), "T": traj.T, "seed": seed}))
            return EXIT_OK
        T = default_length(3, 0, 2) if cfg["T"] is None else int(cfg["T"])
        if T < min_pe_length(3, 0, 2):
            log.warning("T=%d is below the minimum %d for persistency of excitation",
                        T, min_pe_length(3, 0, 2))
            traj = mg.simulate_dgu(params, T, seed, label="historical")
        else:
            try:
                traj = mg.collect_historical(params, T, seed, tol)
            except RuntimeError as exc:
                log.error("%s", exc)
                return EXIT_BAD_INPUT
    else:
        rng = np.random.default_rng(seed)
        if cfg.get("system"):
            sys_ = LtiSystem.load(cfg["system"])
        else:
            n, m, md = int(cfg["n"]), int(cfg["m"]), int(cfg["md"])
            p = n if cfg["p"] is None else int(cfg["p"])
            sys_ = random_system(rng, n, m, p, md, tol=tol)
            sys_path = out.with_suffix(".system.json")
            out.parent.mkdir(parents=True, exist_ok=True)
            sys_.save(sys_path)
            log.info("system written to %s", sys_path)
        n, m, md = sys_.n, sys_.m, sys_.m_d
        if cfg.get("online"):
            N = int(cfg["online"])
            traj = simulate(sys_, rng.standard_normal(n), rng.uniform(-1, 1, (N, m)),
                            rng.uniform(-1, 1, (N, md)), T=N,
                            meta={"seed": seed, "label": "online"}).online()
            write_trajectory(traj, out)
            print(json.dumps({"written": str(out), "T": traj.T, "seed": seed}))
            return EXIT_OK
        T = default_length(n, m, md) if cfg["T"] is None else int(cfg["T"])
        if T < min_pe_length(n, m, md):
            log.warning("T=%d is below the minimum %d for persistency of excitation",
                        T, min_pe_length(n, m, md))
        traj = simulate(sys_, rng.standard_normal(n), rng.uniform(-1, 1, (T, m)),
                        rng.uniform(-1, 1, (T, md)), T=T,
                        meta={"seed": seed, "label": "historical"})
    pe = check_assumption1(traj, tol)
    write_trajectory(traj, out)
    print(json.dumps({"written": str(out), "T": traj.T, "seed": seed, "assumption1": pe}))
    return EXIT_OK if pe else EXIT_BAD_INPUT


def _synth(cfg):
    hist = read_trajectory(cfg["hist"])
    tol = _tol(cfg)
    return synthesize(build_blocks(hist, tol), tol)


def _verdict(report) -> int:
    # data that fail the excitation test cannot certify anything
    if report.pe_checked is False:
        log.error("historical data are not persistently exciting")
        return EXIT_BAD_INPUT
    if report.pe_checked is None:
        log.warning("unknown input not recorded; excitation condition not checkable")
    return EXIT_OK if report.exists else EXIT_NO_UIO


def cmd_check(cfg) -> int:
    _, report = _synth(cfg)
    _emit(report.to_dict(), {"report_out": cfg.get("out")})
    return _verdict(report)


def cmd_synthesize(cfg) -> int:
    out = _require_out(cfg)
    real, report = _synth(cfg)
    code = _verdict(report)
    if code == EXIT_OK or cfg.get("force"):
        save_realization(out, real, report)
        log.info("realization written to %s", out)
    else:
        log.error("no valid UIO for these data; use --force to write anyway")
    print(json.dumps(report.to_dict(), indent=2, default=float))
    return code


def cmd_estimate(cfg) -> int:
    out = _require_out(cfg)
    real, _ = load_realization(cfg["realization"])
    data = read_trajectory(cfg["data"]).online()
    if data.m + data.p != real.q:
        raise InputError(f"online data carry {data.m + data.p} measured channels, "
                         f"realization expects {real.q}")
    xhat0 = np.zeros(real.n) if cfg["xhat0"] is None else _vec(cfg["xhat0"], real.n)
    xhat = run_estimator(real, xhat0, data.v)
    cols = [f"xhat_{i}" for i in range(real.n)]
    body = [xhat]
    if data.x is not None:
        cols += [f"x_{i}" for i in range(real.n)] + [f"e_{i}" for i in range(real.n)]
        body += [data.x, data.x - xhat]
    table = np.hstack(body)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write(",".join(["t"] + cols) + "\n")
        for t, row in enumerate(table):
            fh.write(",".join([str(t)] + [repr(float(v)) for v in row]) + "\n")
    summary = {"written": str(out), "N": len(xhat)}
    if data.x is not None:
        summary["error_norms"] = np.linalg.norm(data.x - xhat, axis=1).tolist()
    print(json.dumps(summary))
    return EXIT_OK


def cmd_demo(cfg) -> int:
    out = Path(cfg["out"] or "demo_out")
    seed = int(cfg["seed"])
    tol = _tol(cfg)
    params = mg.DguParams(T_s=float(cfg["Ts"]))
    hist = mg.collect_historical(params, None if cfg["T"] is None else int(cfg["T"]), seed, tol)
    if cfg["scenario"] == "safe":
        N = 10 if cfg["N"] is None else int(cfg["N"])
        res = mg.run_safe_scenario(params, hist, N=N, seed=seed + 1, tol=tol)
    else:
        spec = mg.AttackSpec(T_a=int(cfg["T_a"]), phi=_vec(cfg["phi"], 3))
        N = 100 if cfg["N"] is None else int(cfg["N"])
        res = mg.run_attack_scenario(params, hist, N=N, spec=spec, seed=seed + 1, tol=tol)
    write_trajectory(hist, out / "historical.csv")
    csv_path, json_path = res.write(out, cfg["scenario"])
    s = dict(res.summary)
    s.pop("error_norms", None)
    s.pop("residual_max_abs", None)
    s.update(csv=str(csv_path), summary=str(json_path))
    print(json.dumps(s, indent=2))
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--T", type=int, help="historical experiment length")
    common.add_argument("--Ts", type=float, help="sampling period in seconds (microgrid)")
    common.add_argument("--tol-rank", type=float, dest="tol_rank")
    common.add_argument("--tol-abs", type=float, dest="tol_abs")
    common.add_argument("--tol-schur", type=float, dest="tol_schur")
    common.add_argument("--out")
    common.add_argument("--config", help="JSON or key=value file; flags take precedence")
    common.add_argument("-q", "--quiet", action="store_true", default=None,
                        help="only log warnings and errors")

    ap = argparse.ArgumentParser(prog="datauio", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", parents=[common], help="simulate an experiment to CSV")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--microgrid", action="store_true", default=None)
    src.add_argument("--system", help="JSON file with A, B, E, C")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--md", type=int)
    p.add_argument("--online", type=int, metavar="N",
                   help="write N samples of online data (no d) instead of historical data")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("check", parents=[common], help="existence report for historical data")
    p.add_argument("hist")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synthesize", parents=[common], help="write the observer as JSON")
    p.add_argument("hist")
    p.add_argument("--force", action="store_true", default=None)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("estimate", parents=[common], help="run the observer on online data")
    p.add_argument("realization")
    p.add_argument("data")
    p.add_argument("--xhat0", help="comma-separated initial estimate (default zeros)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("demo", parents=[common], help="microgrid safe/attack scenario")
    p.add_argument("scenario", choices=("safe", "attack"))
    p.add_argument("--N", type=int)
    p.add_argument("--T-a", type=int, dest="T_a")
    p.add_argument("--phi", help="comma-separated constant attack vector")
    p.set_defaults(func=cmd_demo)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(args)
        return args.func(cfg)
    except (InputError, ValueError, FileNotFoundError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_BAD_INPUT
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
