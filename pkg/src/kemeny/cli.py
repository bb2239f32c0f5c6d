"""Command-line front end.

Subcommands: ``analyze`` (finite chains), ``bd`` (birth-and-death families),
``simulate`` (Monte-Carlo estimators), ``design`` (rates from a target f) and
``replay`` (re-run a report from its embedded config).

Exit codes: 0 success, 1 replay mismatch, 2 bad input, 3 numerical failure,
4 constancy violation, 5 not positive recurrent, 6 periodic chain.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .birthdeath import (
    SeriesResult,
    Verdict,
    design_from_f,
    kemeny_bd,
    necessary_condition,
    f_rule_from_dict,
    normaliser_series,
    rule_from_dict,
    spec_from_config,
    theta_series,
    theta_terms,
    truncate,
)
from .birthdeath.analysis import e_pi_theta0
from .chain import ChainKind, chain_from_dict, stationary_distribution
from .errors import (
    ConstancyViolation,
    InvalidChainError,
    InvalidDesignError,
    InvalidSpecError,
    NotPositiveRecurrentError,
    PeriodicChainError,
    PreconditionUnmetError,
    SingularSystemError,
)
from .exact import deviation_matrix, hitting_times, kemeny_exact
from .renewal import SimConfig, step_count_identity, visit_deficit

log = logging.getLogger("kemeny")

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_NUMERIC, EXIT_CONSTANCY = 0, 1, 2, 3, 4
EXIT_NOT_RECURRENT, EXIT_PERIODIC = 5, 6
EXACT_COMPARE_MAX_STATES = 2000


class InputError(Exception):
    """Unreadable or malformed input; carries optional diagnostics."""

    def __init__(self, message: str, diagnostics: list | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _dumps(doc) -> str:
    # repr-based float output is the shortest string that round-trips exactly
    return json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_json(path: str):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(raw), hashlib.sha256(raw).hexdigest()
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from None


def _load_chain(path: str):
    doc, digest = _read_json(path)
    return chain_from_dict(doc), digest


def _report(command: str, config: dict, result: dict) -> dict:
    return {"tool": "kemeny", "version": __version__, "command": command,
            "config": config, "result": result}


# ---- analyze -------------------------------------------------------------

def run_analyze(args) -> tuple[dict, int]:
    chain, digest = _load_chain(args.input)
    config = {"input": args.input, "input_sha256": digest, "method": args.method,
              "tol": args.tol, "solver": args.solver}
    log.info("analyze: %s chain with %d states", chain.kind.value, chain.m)
    if args.method == "trace":
        pi = stationary_distribution(chain).pi
        dev = deviation_matrix(chain, pi=pi)
        kprime = math.fsum(np.diag(dev.d))
        result = {"kind": chain.kind.value, "m": chain.m, "kprime": kprime,
                  "deviation_trace": kprime, "residuals": dev.residuals, "pi": pi}
        if chain.is_discrete:
            result["k"] = kprime + 1.0
        matrices = {"deviation": dev.d}
    else:
        rep = kemeny_exact(chain, args.tol, with_trace=args.method == "both",
                           method=args.solver)
        result = rep.to_dict()
        result["pi"] = rep.pi
        matrices = {"hitting": rep.hitting}
        if rep.mfpt is not None:
            matrices["mfpt"] = rep.mfpt
    if args.csv_dir:
        d = Path(args.csv_dir)
        d.mkdir(parents=True, exist_ok=True)
        for name, mat in matrices.items():
            np.savetxt(d / f"{name}.csv", mat, delimiter=",", fmt="%.17g")
    return _report("analyze", config, result), EXIT_OK


# ---- bd --------------------------------------------------------------------

def _ladder_levels(text: str | None) -> list[int]:
    if not text:
        return []
    try:
        levels = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"ladder must be comma-separated integers, got {text!r}") from None
    if any(n < 1 for n in levels):
        raise InputError("ladder levels must be at least 1")
    return levels


def run_bd(args) -> tuple[dict, int]:
    levels = _ladder_levels(args.ladder)
    doc, digest = _read_json(args.config)
    spec = spec_from_config(doc)
    config = {"config": args.config, "config_sha256": digest, "family": spec.to_config(),
              "rtol": args.rtol, "max_terms": args.max_terms, "ladder": levels}
    b = normaliser_series(spec, args.rtol, args.max_terms)
    if b.diverged:
        raise NotPositiveRecurrentError(f"sum of beta_n diverges: {b.detail}")
    theta = theta_series(spec, args.rtol, args.max_terms)
    nec = necessary_condition(spec, args.rtol, args.max_terms)
    e, e_note = None, ""
    if not b.converged:
        e_note = f"positive recurrence undecided: {b.detail}"
        kp = SeriesResult(Verdict.UNDECIDED, math.nan, 0, detail=e_note)
    else:
        try:
            e = e_pi_theta0(spec, args.rtol, args.max_terms)
        except PreconditionUnmetError as exc:
            e_note = str(exc)
        kp = kemeny_bd(spec, args.rtol, args.max_terms)
    result = {
        "theta": theta.value if theta.converged else None,
        "e_pi_theta0": e.value if e is not None and e.converged else None,
        "kprime": kp.value if kp.converged else (math.inf if kp.diverged else None),
        "verdicts": {"kprime": kp.label(), "theta": theta.label(),
                     "e_pi_theta0": e.label() if e is not None else "precondition_unmet",
                     "normaliser": b.label(), "sum_inverse_death": nec.label()},
        "terms_used": {"theta": theta.terms_used, "normaliser": b.terms_used,
                       "e_pi_theta0": e.terms_used if e is not None else 0,
                       "sum_inverse_death": nec.terms_used},
        "series": {"theta": theta.to_dict(), "normaliser": b.to_dict(),
                   "e_pi_theta0": e.to_dict() if e is not None else {"detail": e_note},
                   "sum_inverse_death": nec.to_dict(), "kprime": kp.to_dict()},
        "analytic_verdict": spec.analytic_verdict,
    }
    if kp.diverged:
        result["kprime"] = None
        result["kprime_infinite"] = True
    if levels:
        rows = []
        for n in levels:
            rep = kemeny_exact(truncate(spec, n), with_trace=False)
            delta = abs(rep.kprime - kp.value) if kp.converged else None
            rows.append({"N": n, "kprime_N": rep.kprime, "abs_delta": delta,
                         "spread": rep.spread})
        result["ladder"] = rows
        if args.ladder_csv:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["N", "kprime_N", "abs_delta", "spread"])
            for r in rows:
                w.writerow([r["N"], repr(r["kprime_N"]),
                            "" if r["abs_delta"] is None else repr(r["abs_delta"]),
                            repr(r["spread"])])
            Path(args.ladder_csv).write_text(buf.getvalue(), encoding="utf-8")
    return _report("bd", config, result), EXIT_OK


# ---- simulate -------------------------------------------------------------

def run_simulate(args) -> tuple[dict, int]:
    chain, digest = _load_chain(args.input)
    if args.estimator == "deficit" and (args.start is None or args.target is None):
        raise InputError("the deficit estimator needs --start and --target")
    for s in (args.start, args.target):
        if s is not None and not 0 <= s < chain.m:
            raise InputError(f"state {s} out of range for {chain.m} states")
    horizon = args.horizon
    if chain.is_discrete:
        if horizon != int(horizon):
            raise InputError("discrete horizon must be an integer number of steps")
        horizon = int(horizon)
    try:
        cfg = SimConfig(horizon, args.trajectories, args.seed, args.start, args.target,
                        workers=args.workers)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    config = {"input": args.input, "input_sha256": digest, "estimator": args.estimator,
              **cfg.to_dict()}
    log.info("simulate: %s, R=%d, horizon=%s, seed=%d", args.estimator,
             cfg.trajectories, cfg.horizon, cfg.seed)
    if args.estimator == "deficit":
        est = visit_deficit(chain, args.start, args.target, cfg)
    else:
        est = step_count_identity(chain, cfg)
    result = est.to_dict()
    if chain.m <= EXACT_COMPARE_MAX_STATES:
        pi = stationary_distribution(chain).pi
        if args.estimator == "deficit":
            h = hitting_times(chain, args.target).h[args.start]
            exact = float(pi[args.target] * h)
        else:
            exact = math.fsum(np.diag(deviation_matrix(chain, pi=pi).d))
        result["exact"] = exact
        result["within_3se"] = bool(abs(est.value - exact) <= 3.0 * est.std_error)
    return _report("simulate", config, result), EXIT_OK


# ---- design ---------------------------------------------------------------

def _rule_arg(text: str, parse=rule_from_dict):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"rule is not valid JSON: {exc}") from None
    return doc, parse(doc)


def run_design(args) -> tuple[dict, int]:
    f_doc, f_rule = _rule_arg(args.f_rule, f_rule_from_dict)
    l_doc, l_rule = _rule_arg(args.lambda_rule)
    kind = ChainKind.parse(args.kind)
    spec = design_from_f(f_rule, l_rule, kind)
    family = {"family": "designed_f", "kind": kind.value, "f": f_doc, "lambda": l_doc}
    n = args.show
    mu = np.exp(spec.log_death(1, n + 1))
    f = f_rule.values(1, n + 1)
    roundtrip = float(np.max(np.abs(theta_terms(spec, n) - f) / f))
    config = {"f": f_doc, "lambda": l_doc, "kind": kind.value, "show": n}
    result = {"config": family, "mu": mu, "f": f, "roundtrip_max_rel_error": roundtrip,
              "analytic_verdict": spec.analytic_verdict}
    if args.emit_config:
        Path(args.emit_config).write_text(_dumps(family), encoding="utf-8")
        result["emitted"] = args.emit_config
    return _report("design", config, result), EXIT_OK


# ---- replay ---------------------------------------------------------------

def _argv_from_report(doc: dict) -> list[str]:
    cmd, cfg = doc.get("command"), doc.get("config", {})
    try:
        if cmd == "analyze":
            argv = ["analyze", cfg["input"], "--method", cfg["method"], "--solver", cfg["solver"]]
            if cfg.get("tol") is not None:
                argv += ["--tol", repr(cfg["tol"])]
        elif cmd == "bd":
            argv = ["bd", cfg["config"], "--rtol", repr(cfg["rtol"]),
                    "--max-terms", str(cfg["max_terms"])]
            if cfg.get("ladder"):
                argv += ["--ladder", ",".join(str(n) for n in cfg["ladder"])]
        elif cmd == "simulate":
            argv = ["simulate", cfg["input"], "--estimator", cfg["estimator"],
                    "--horizon", repr(cfg["horizon"]), "--trajectories", str(cfg["trajectories"]),
                    "--seed", str(cfg["seed"])]
            for key in ("start", "target"):
                if key in cfg:
                    argv += [f"--{key}", str(cfg[key])]
        elif cmd == "design":
            argv = ["design", "--f", json.dumps(cfg["f"]), "--lambda", json.dumps(cfg["lambda"]),
                    "--kind", cfg["kind"], "--show", str(cfg["show"])]
        else:
            raise InputError(f"cannot replay command {cmd!r}")
    except KeyError as exc:
        raise InputError(f"report config is missing {exc}") from None
    return argv


def run_replay(args) -> tuple[dict, int]:
    doc, _ = _read_json(args.report)
    argv = _argv_from_report(doc)
    cfg = doc["config"]
    for key in ("input", "config"):
        if f"{key}_sha256" in cfg:
            _, digest = _read_json(cfg[key])
            if digest != cfg[f"{key}_sha256"]:
                raise InputError(f"{cfg[key]} changed since the report was written")
    sub = build_parser().parse_args(argv)
    fresh, code = HANDLERS[sub.command](sub)
    same = _dumps(fresh["result"]) == _dumps(doc.get("result"))
    result = {"replayed": argv, "identical": same,
              "version_match": doc.get("version") == __version__}
    return (_report("replay", {"report": args.report}, result),
            code if code else (EXIT_OK if same else EXIT_MISMATCH))


HANDLERS = {"analyze": run_analyze, "bd": run_bd, "simulate": run_simulate,
            "design": run_design, "replay": run_replay}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kemeny",
                                description="Kemeny's constant of Markov chains and birth-death processes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="exact analysis of a finite chain file")
    a.add_argument("input", help='chain JSON {"kind": "dtmc"|"ctmc", "matrix": [[...]]}')
    a.add_argument("--method", choices=["hitting", "trace", "both"], default="both")
    a.add_argument("--tol", type=float, default=None,
                   help="allowed per-start spread (default 1e-9 (1 + K'))")
    a.add_argument("--solver", choices=["elimination", "lu"], default="elimination",
                   help="solver for the per-target hitting systems")
    a.add_argument("--csv-dir", help="also write hitting/mfpt/deviation matrices as CSV here")
    a.add_argument("--out", help="write the JSON report here instead of stdout")

    b = sub.add_parser("bd", help="series analysis of a birth-death family")
    b.add_argument("config", help="family config JSON")
    b.add_argument("--rtol", type=float, default=1e-12)
    b.add_argument("--max-terms", type=int, default=10**7)
    b.add_argument("--ladder", help="truncation levels, e.g. 10,20,40,80")
    b.add_argument("--ladder-csv", help="write the ladder table as CSV here")
    b.add_argument("--out")

    s = sub.add_parser("simulate", help="Monte-Carlo estimate of a renewal limit")
    s.add_argument("input")
    s.add_argument("--estimator", choices=["deficit", "stepcount"], required=True)
    s.add_argument("--horizon", type=float, required=True, help="steps (dtmc) or time (ctmc)")
    s.add_argument("--trajectories", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--start", type=int)
    s.add_argument("--target", type=int)
    s.add_argument("--workers", type=int, default=1,
                   help="threads; never changes the result")
    s.add_argument("--out")

    d = sub.add_parser("design", help="death rates that realise a target f sequence")
    d.add_argument("--f", dest="f_rule", required=True, help='rule JSON, e.g. {"rule": "inverse_square"}')
    d.add_argument("--lambda", dest="lambda_rule", required=True, help="rule JSON for lambda_n")
    d.add_argument("--kind", default="ctmc", choices=["ctmc", "dtmc"])
    d.add_argument("--show", type=int, default=10, help="number of mu_j to list")
    d.add_argument("--emit-config", help="write a bd family config here")
    d.add_argument("--out")

    r = sub.add_parser("replay", help="re-run a report and compare results bitwise")
    r.add_argument("report")
    r.add_argument("--out")
    return p


def _configure_logging() -> None:
    level = os.environ.get("KEMENY_LOG", "error").upper()
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        level=getattr(logging, level, logging.ERROR))


def _fail(code: int, kind: str, message: str, extra: dict | None = None) -> int:
    doc = {"error": kind, "message": message, **(extra or {})}
    sys.stderr.write(_dumps(doc))
    return code


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        report, code = HANDLERS[args.command](args)
    except InvalidChainError as exc:
        return _fail(EXIT_INPUT, "invalid_chain", str(exc),
                     {"violations": [v.to_dict() for v in exc.violations]})
    except (InputError, InvalidSpecError, InvalidDesignError) as exc:
        return _fail(EXIT_INPUT, "invalid_input", str(exc))
    except ConstancyViolation as exc:
        return _fail(EXIT_CONSTANCY, "constancy_violation", str(exc),
                     {"spread": exc.spread, "tol": exc.tol})
    except NotPositiveRecurrentError as exc:
        return _fail(EXIT_NOT_RECURRENT, "not_positive_recurrent", str(exc))
    except PeriodicChainError as exc:
        return _fail(EXIT_PERIODIC, "periodic_chain", str(exc))
    except (SingularSystemError, PreconditionUnmetError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, "numerical_failure", str(exc))
    _emit(_dumps(report), getattr(args, "out", None))
    return code


if __name__ == "__main__":
    sys.exit(main())
