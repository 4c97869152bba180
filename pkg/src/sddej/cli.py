"""Command-line front end.

    sddej run <config.json> [--threads N] [--out DIR]
    sddej list-models
    sddej check --model section5 --assumption a33 --radius 10 --samples 100000

``run`` reads a flat JSON experiment description, writes ``results.csv`` and
``summary.json`` into the output directory and exits 0 when the experiment's
acceptance predicate holds, 1 when it fails, 2 on a malformed configuration.
Results are deterministic for a given config and seed; the thread count only
schedules work and never changes any written byte.

Experiments:

    converge      strong-error decay across step sizes + log-log slope fit
    moments       max-over-grid moment estimates per step size
    diverge_demo  plain Euler vs truncated scheme on the same noise
    check         Monte Carlo falsification of one structural inequality
    ks5_probe     evaluate the cap-vs-envelope condition across step sizes
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import numpy as np

from . import analysis, assumptions
from .errors import ConfigError, MissingConstantError, SddejError
from .models import MODEL_BUILDERS, build_model
from .scheme import SchemeTag, StepSize
from .truncation import PowerPhi, Regime, TruncationConfig, fit_empirical_phi

_MODEL_PARAM_KEYS = ("tau", "gamma", "kbar", "x0", "a", "b", "c", "lambda")

_COMMON_KEYS = {
    "experiment", "model", "scheme", "phi", "epsilon", "k0", "regime",
    "seed", "output_dir", "threads", "chunk_size", "backend",
    *_MODEL_PARAM_KEYS,
}

_EXPERIMENT_KEYS = {
    "converge": {
        "deltas", "m_values", "ref_refine", "ref_delta", "T", "p", "paths",
        "theory", "min_slope", "slope_range", "use_exact",
    },
    "moments": {"deltas", "m_values", "T", "q", "paths", "ratio_bound"},
    "diverge_demo": {
        "delta", "m", "T", "q", "paths", "min_overflow_fraction",
    },
    "check": {"assumption", "radius", "samples", "use_gap"},
    "ks5_probe": {"deltas", "c2", "p", "gamma_rate"},
}

_SCHEMES = {t.value: t for t in SchemeTag}


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required config key {key!r}")
    return cfg[key]


def _check_keys(cfg: dict):
    experiment = _require(cfg, "experiment")
    if experiment not in _EXPERIMENT_KEYS:
        known = ", ".join(sorted(_EXPERIMENT_KEYS))
        raise ConfigError(f"unknown experiment {experiment!r} (known: {known})")
    allowed = _COMMON_KEYS | _EXPERIMENT_KEYS[experiment]
    for key in cfg:
        if key not in allowed:
            raise ConfigError(
                f"config key {key!r} is not recognised for experiment "
                f"{experiment!r}"
            )
    return experiment


def _build_model_from(cfg: dict):
    model_id = _require(cfg, "model")
    params = {}
    for key in _MODEL_PARAM_KEYS:
        if key in cfg:
            params["lam" if key == "lambda" else key] = cfg[key]
    try:
        return build_model(model_id, params)
    except SddejError as exc:
        raise ConfigError(str(exc)) from exc


def _build_phi(cfg: dict, model=None):
    phi_cfg = _require(cfg, "phi")
    if not isinstance(phi_cfg, dict) or "kind" not in phi_cfg:
        raise ConfigError('"phi" must be an object with a "kind" entry')
    kind = phi_cfg["kind"]
    if kind == "power":
        try:
            return PowerPhi(float(phi_cfg["c"]), float(phi_cfg["k"]))
        except KeyError as exc:
            raise ConfigError(f'power phi needs key {exc}') from exc
    if kind == "auto":
        if model is None:
            raise ConfigError("auto phi needs a model")
        regime = Regime(cfg.get("regime", "fg"))
        return fit_empirical_phi(
            model,
            regime,
            shells=int(phi_cfg.get("shells", 64)),
            r_max=float(phi_cfg.get("r_max", 32.0)),
        )
    raise ConfigError(f"unknown phi kind {kind!r}")


def _build_trunc(cfg: dict, model, scheme: SchemeTag):
    if scheme is SchemeTag.PLAIN_EM and "phi" not in cfg:
        return None
    regime_default = "fgh" if scheme is SchemeTag.TRUNCATED_FGH else "fg"
    regime = Regime(cfg.get("regime", regime_default))
    phi = _build_phi(cfg, model)
    try:
        return TruncationConfig(
            phi=phi,
            epsilon=float(_require(cfg, "epsilon")),
            regime=regime,
            k0=float(cfg["k0"]) if cfg.get("k0") is not None else None,
        )
    except SddejError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_scheme(cfg: dict) -> SchemeTag:
    name = _require(cfg, "scheme")
    if name not in _SCHEMES:
        raise ConfigError(
            f"unknown scheme {name!r} (known: {', '.join(sorted(_SCHEMES))})"
        )
    return _SCHEMES[name]


def _resolve_deltas(cfg: dict, tau: float) -> list:
    if "deltas" in cfg and "m_values" in cfg:
        raise ConfigError('give either "deltas" or "m_values", not both')
    if "m_values" in cfg:
        ms = cfg["m_values"]
        if not ms or any(int(m) < 1 for m in ms):
            raise ConfigError('"m_values" must be positive integers')
        deltas = [tau / int(m) for m in ms]
    else:
        deltas = [float(d) for d in _require(cfg, "deltas")]
    if not deltas:
        raise ConfigError("need at least one step size")
    if any(d2 >= d1 for d1, d2 in zip(deltas, deltas[1:])):
        raise ConfigError("step sizes must be strictly decreasing")
    return deltas


def _step_for(delta: float, tau: float, horizon: float) -> StepSize:
    m_steps = round(tau / delta)
    if m_steps < 1 or abs(tau / m_steps - delta) > 1e-9 * delta:
        raise ConfigError(f"step {delta} is not delay/{max(m_steps, 1)}")
    try:
        return StepSize(m_steps, tau, horizon)
    except SddejError as exc:
        raise ConfigError(str(exc)) from exc


def _common_int(cfg, key, default, minimum=1):
    v = cfg.get(key, default)
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise ConfigError(f"{key!r} must be an integer >= {minimum}")
    return v


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_cell(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)  # "inf"/"nan" as strings: summaries stay strict JSON
    return obj


def _write_summary(path: str, summary: dict):
    with open(path, "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# experiment runners (each returns (passed, summary, header, rows))
# ---------------------------------------------------------------------------


def _run_converge(cfg: dict, threads: int):
    model, constants = _build_model_from(cfg)
    scheme = _resolve_scheme(cfg)
    trunc = _build_trunc(cfg, model, scheme)
    horizon = float(_require(cfg, "T"))
    deltas = _resolve_deltas(cfg, model.delay)
    for d in deltas:
        _step_for(d, model.delay, horizon)
    if "ref_delta" in cfg:
        ref_delta = float(cfg["ref_delta"])
    else:
        ref_delta = min(deltas) / _common_int(cfg, "ref_refine", 128)
    _step_for(ref_delta, model.delay, horizon)
    p = float(_require(cfg, "p"))
    paths = _common_int(cfg, "paths", 1000)
    seed = _common_int(cfg, "seed", 1, minimum=0)

    theory = cfg.get("theory")
    theoretical = None
    if theory is not None:
        kind = theory.get("kind")
        eps = float(cfg.get("epsilon", 0.25))
        gamma = float(theory.get("gamma", model.holder_exponent))
        if kind == "l2":
            beta = theory.get("beta")
            if beta is None and constants is not None:
                beta = constants.beta
            if beta is None:
                raise ConfigError('theory "l2" needs "beta" (or model constants)')
            theoretical = analysis.l2_rate_exponent(
                float(theory["q"]), float(beta), eps, gamma
            )
        elif kind == "sub2":
            theoretical = analysis.sub2_rate_exponent(p, eps, gamma)
        elif kind == "fixed":
            theoretical = float(theory["value"])
        else:
            raise ConfigError(f"unknown theory kind {kind!r}")

    report = analysis.strong_error(
        model, trunc, scheme, deltas, ref_delta, horizon, p, paths, seed,
        threads=threads,
        chunk_size=_common_int(cfg, "chunk_size", analysis.DEFAULT_CHUNK),
        backend=cfg.get("backend"),
        use_exact=cfg.get("use_exact"),
        theoretical_exponent=theoretical,
    )
    rows = [
        (d, e, s, paths)
        for d, e, s in zip(report.deltas, report.errors, report.stderrs)
    ]
    checks = {}
    if "min_slope" in cfg:
        checks["slope >= min_slope"] = (
            report.slope is not None and report.slope >= float(cfg["min_slope"])
        )
    if "slope_range" in cfg:
        lo, hi = (float(v) for v in cfg["slope_range"])
        checks["slope in range"] = (
            report.slope is not None and lo <= report.slope <= hi
        )
    if not checks:
        checks["slope fitted"] = report.slope is not None
    summary = {"report": report.to_dict(), "checks": checks}
    return all(checks.values()), summary, ("delta", "error_p", "stderr", "paths"), rows


def _run_moments(cfg: dict, threads: int):
    model, _ = _build_model_from(cfg)
    scheme = _resolve_scheme(cfg)
    trunc = _build_trunc(cfg, model, scheme)
    horizon = float(_require(cfg, "T"))
    deltas = _resolve_deltas(cfg, model.delay)
    q = float(_require(cfg, "q"))
    paths = _common_int(cfg, "paths", 1000)
    seed = _common_int(cfg, "seed", 1, minimum=0)
    reports = [
        analysis.moment_estimate(
            model, trunc, scheme, _step_for(d, model.delay, horizon), q,
            paths, seed, threads=threads,
            chunk_size=_common_int(cfg, "chunk_size", analysis.DEFAULT_CHUNK),
            backend=cfg.get("backend"),
        )
        for d in deltas
    ]
    rows = [
        (r.delta, r.estimate, r.stderr, r.overflow_fraction, paths)
        for r in reports
    ]
    estimates = [r.estimate for r in reports]
    checks = {"all finite": all(math.isfinite(e) for e in estimates)}
    ratio_bound = cfg.get("ratio_bound")
    if ratio_bound is not None and len(estimates) >= 2:
        if checks["all finite"] and min(estimates) > 0:
            checks["max/min ratio bounded"] = (
                max(estimates) / min(estimates) <= float(ratio_bound)
            )
        else:
            checks["max/min ratio bounded"] = False
    summary = {"reports": [r.to_dict() for r in reports], "checks": checks}
    header = ("delta", "estimate", "stderr", "overflow_fraction", "paths")
    return all(checks.values()), summary, header, rows


def _run_diverge_demo(cfg: dict, threads: int):
    model, _ = _build_model_from(cfg)
    if "delta" in cfg:
        delta = float(cfg["delta"])
    else:
        delta = model.delay / _common_int(cfg, "m", 4)
    horizon = float(_require(cfg, "T"))
    step = _step_for(delta, model.delay, horizon)
    trunc = _build_trunc(cfg, model, SchemeTag.TRUNCATED_FG)
    if trunc is None:
        raise ConfigError("diverge_demo needs truncation parameters (phi, epsilon)")
    scheme_tr = (
        SchemeTag.TRUNCATED_FGH if trunc.regime is Regime.FGH
        else SchemeTag.TRUNCATED_FG
    )
    q = float(cfg.get("q", 2.0))
    paths = _common_int(cfg, "paths", 200)
    seed = _common_int(cfg, "seed", 1, minimum=0)
    kwargs = dict(
        threads=threads,
        chunk_size=_common_int(cfg, "chunk_size", analysis.DEFAULT_CHUNK),
        backend=cfg.get("backend"),
    )
    rep_em = analysis.moment_estimate(
        model, None, SchemeTag.PLAIN_EM, step, q, paths, seed, **kwargs
    )
    rep_tr = analysis.moment_estimate(
        model, trunc, scheme_tr, step, q, paths, seed, **kwargs
    )
    min_frac = float(cfg.get("min_overflow_fraction", 0.5))
    checks = {
        "plain scheme overflows": rep_em.overflow_fraction > min_frac,
        "truncated scheme never overflows": rep_tr.overflow_fraction == 0.0,
        "truncated moment finite": math.isfinite(rep_tr.estimate),
    }
    rows = [
        (SchemeTag.PLAIN_EM.value, rep_em.overflow_fraction, rep_em.estimate,
         rep_em.stderr, paths),
        (scheme_tr.value, rep_tr.overflow_fraction, rep_tr.estimate,
         rep_tr.stderr, paths),
    ]
    summary = {
        "plain": rep_em.to_dict(),
        "truncated": rep_tr.to_dict(),
        "checks": checks,
    }
    header = ("scheme", "overflow_fraction", "moment", "stderr", "paths")
    return all(checks.values()), summary, header, rows


def _run_check(cfg: dict, threads: int):
    model, constants = _build_model_from(cfg)
    token = _require(cfg, "assumption")
    try:
        assumption = assumptions.Assumption(token)
    except ValueError:
        known = ", ".join(a.value for a in assumptions.Assumption)
        raise ConfigError(f"unknown assumption {token!r} (known: {known})")
    if constants is not None and not cfg.get("use_gap", True):
        constants = dataclasses.replace(constants, gap=None, jump_gap=None)
    try:
        report = assumptions.check_assumption(
            assumption,
            model,
            constants,
            radius=float(cfg.get("radius", 10.0)),
            samples=_common_int(cfg, "samples", 100_000),
            seed=_common_int(cfg, "seed", 1, minimum=0),
        )
    except MissingConstantError as exc:
        raise ConfigError(str(exc)) from exc
    rows = [
        (report.assumption, report.samples, report.violations,
         report.worst_margin)
    ]
    summary = {"report": report.to_dict()}
    header = ("assumption", "samples", "violations", "worst_margin")
    return report.clean, summary, header, rows


def _run_ks5_probe(cfg: dict, threads: int):
    model = None
    if "model" in cfg:
        model, _ = _build_model_from(cfg)
    phi = _build_phi(cfg, model)
    c2 = float(_require(cfg, "c2"))
    epsilon = float(_require(cfg, "epsilon"))
    p = float(_require(cfg, "p"))
    gamma = float(cfg.get("gamma_rate", 1.0))
    k0 = float(cfg["k0"]) if cfg.get("k0") is not None else 1.0
    deltas = [float(d) for d in _require(cfg, "deltas")]
    if not deltas:
        raise ConfigError("need at least one step size")
    try:
        holds = [
            analysis.cap_condition_holds(phi, c2, epsilon, p, gamma, d, k0=k0)
            for d in deltas
        ]
    except SddejError as exc:
        raise ConfigError(str(exc)) from exc
    rows = list(zip(deltas, holds))
    checks = {"condition holds on all step sizes": all(holds)}
    summary = {
        "c2": c2, "epsilon": epsilon, "p": p, "gamma": gamma, "k0": k0,
        "holds": dict(zip(map(repr, deltas), holds)),
        "checks": checks,
    }
    return all(holds), summary, ("delta", "holds"), rows


_RUNNERS = {
    "converge": _run_converge,
    "moments": _run_moments,
    "diverge_demo": _run_diverge_demo,
    "check": _run_check,
    "ks5_probe": _run_ks5_probe,
}


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------


def run_experiment(cfg: dict, out_dir: str, threads: int) -> int:
    """Validate, run, write artifacts.  Returns the process exit code."""
    experiment = _check_keys(cfg)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    summary_path = os.path.join(out_dir, "summary.json")
    base = {"experiment": experiment, "config": dict(cfg), "threads": threads}
    try:
        passed, summary, header, rows = _RUNNERS[experiment](cfg, threads)
    except ConfigError:
        raise
    except SddejError as exc:
        # numeric degeneracy after validation: flush what we know, fail
        _write_summary(summary_path, {**base, "passed": False, "error": str(exc)})
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    _write_csv(csv_path, header, rows)
    _write_summary(summary_path, {**base, "passed": passed, **summary})
    print(f"{experiment}: {'PASS' if passed else 'FAIL'} -> {summary_path}")
    return 0 if passed else 1


def _cmd_run(args) -> int:
    try:
        cfg = _load_config(args.config)
        _check_keys(cfg)
        out_dir = args.out or cfg.get("output_dir", "out")
        threads = args.threads or cfg.get("threads") or os.cpu_count() or 1
        return run_experiment(cfg, out_dir, int(threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def _cmd_list_models(args) -> int:
    for model_id in sorted(MODEL_BUILDERS):
        _, defaults, blurb = MODEL_BUILDERS[model_id]
        params = ", ".join(f"{k}={v}" for k, v in defaults.items())
        print(f"{model_id:10s} {blurb}")
        print(f"{'':10s} parameters: {params}")
    return 0


def _cmd_check(args) -> int:
    cfg = {
        "experiment": "check",
        "model": args.model,
        "assumption": args.assumption,
        "radius": args.radius,
        "samples": args.samples,
        "seed": args.seed,
        "use_gap": not args.no_gap,
    }
    try:
        passed, summary, _, _ = _run_check(cfg, 1)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(_jsonable(summary["report"]), indent=2, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_summary(
            os.path.join(args.out, "summary.json"),
            {"experiment": "check", "config": cfg, "passed": passed, **summary},
        )
    return 0 if passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sddej",
        description="truncated Euler schemes for delay equations with jumps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: machine parallelism)")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(fn=_cmd_run)

    p_list = sub.add_parser("list-models", help="list built-in models")
    p_list.set_defaults(fn=_cmd_list_models)

    p_check = sub.add_parser("check", help="falsification check of one inequality")
    p_check.add_argument("--model", required=True)
    p_check.add_argument("--assumption", required=True,
                         choices=[a.value for a in assumptions.Assumption])
    p_check.add_argument("--radius", type=float, default=10.0)
    p_check.add_argument("--samples", type=int, default=100_000)
    p_check.add_argument("--seed", type=int, default=1)
    p_check.add_argument("--no-gap", action="store_true",
                         help="drop the gap functions (U identically zero)")
    p_check.add_argument("--out", default=None)
    p_check.set_defaults(fn=_cmd_check)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
