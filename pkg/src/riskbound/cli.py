"""``riskbound`` command-line front end.

Every subcommand resolves its settings from (in increasing priority)
built-in defaults, a ``--config`` JSON file and explicit flags, then writes a
JSON report ``{command, inputs, outputs, provenance}``.  Feeding a report back
through ``--config`` replays the run.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import decision_select as ds
from . import fixtures
from . import sim_multiagent as sim
from . import verify_synth as vs
from .errors import InvalidInput, SearchError, SimulationError
from .g_entropic import SearchConfig, bound_cvar, bound_evar
from .risk_core import (
    ConfidenceSpec,
    empirical_cvar,
    empirical_evar,
    EssentialBound,
    expectation_bound,
    load_samples,
    min_samples,
    scenario_max,
    var_bound_confidence,
)
from .seeding import derive_rng

EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def _params(value):
    if isinstance(value, str):
        value = [float(v) for v in value.split(",")]
    return sim.ControllerParams.from_any(value).to_dict()


def _bool(value):
    if isinstance(value, bool):
        return value
    if str(value).lower() in ("1", "true", "yes", "on"):
        return True
    if str(value).lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _opt_int(value):
    return None if value is None else int(value)


# key -> (converter, default); a default of ... marks a required key
SCHEMAS = {
    "min-samples": {"gamma": (float, ...), "epsilon": (float, ...)},
    "bound": {
        "kind": (str, ...),
        "samples": (str, ...),
        "ell": (float, ...),
        "epsilon": (float, ...),
        "alpha": (float, None),
        "search": (dict, None),
    },
    "validate": {
        "fixture": (str, "mixture"),
        "trials": (int, 50),
        "n": (_opt_int, None),
        "gamma": (float, 0.95),
        "epsilon": (float, 0.02),
        "alpha": (float, 0.1),
        "oracle_draws": (int, 20000),
        "seed": (int, ...),
    },
    "tsp": {
        "nodes": (_opt_int, 9),
        "instance": (str, None),
        "instance_seed": (_opt_int, None),
        "gamma": (float, 0.95),
        "epsilon": (float, 0.01),
        "audit": (str, "none"),
        "audit_trials": (int, 2000),
        "seed": (int, ...),
    },
    "verify": {
        "params": (_params, sim.DEFAULT_PARAMS.to_dict()),
        "alpha": (float, 0.1),
        "epsilon": (float, 0.02),
        "gamma": (float, 0.95),
        "noise_model": (str, "gaussian"),
        "dt": (float, sim.DT),
        "seed": (int, ...),
    },
    "synthesize": {
        "alpha": (float, 0.1),
        "epsilon_inner": (float, 0.02),
        "gamma1": (float, 0.95),
        "epsilon2": (float, 0.01),
        "gamma2": (float, 0.99),
        "candidates": (_opt_int, None),
        "crn": (_bool, False),
        "surrogate": (_bool, False),
        "noise_model": (str, "gaussian"),
        "dt": (float, sim.DT),
        "seed": (int, ...),
    },
    "simulate": {
        "params": (_params, sim.DEFAULT_PARAMS.to_dict()),
        "draw_index": (int, 0),
        "noise_model": (str, "gaussian"),
        "dt": (float, sim.DT),
        "horizon": (float, sim.HORIZON),
        "seed": (int, ...),
    },
}


def resolve(command: str, config: dict, flags: dict) -> dict:
    """Merge defaults, config-file values and flags; validate keys and types."""
    schema = SCHEMAS[command]
    if "command" in config and "inputs" in config:
        if config["command"] != command:
            raise UsageError(f"config is a {config['command']!r} report, not {command!r}")
        config = config["inputs"]
    unknown = set(config) - set(schema)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
    merged = {}
    for key, (conv, default) in schema.items():
        value = flags.get(key)
        if value is None:
            value = config.get(key, default)
        if value is ...:
            raise UsageError(f"{command}: missing required setting {key!r}")
        if value is not None:
            try:
                value = conv(value)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"{command}: bad value for {key!r}: {exc}") from None
        merged[key] = value
    return merged


def _workers(flag) -> int:
    if flag is not None:
        return max(1, int(flag))
    env = os.environ.get("RISKBOUND_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"RISKBOUND_WORKERS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_histogram(path, values, bins=30):
    centers, counts = vs.histogram(values, bins)
    _write_csv(path, ["value", "count"], zip(centers, counts))


# --- commands ------------------------------------------------------------------

def cmd_min_samples(cfg, args):
    n = min_samples(ConfidenceSpec(cfg["epsilon"], cfg["gamma"]))
    return {"n": n, "confidence": var_bound_confidence(n, cfg["epsilon"])}


def cmd_bound(cfg, args):
    samples = load_samples(cfg["samples"])
    ell = EssentialBound(cfg["ell"])
    x = ell.check(samples)
    eps = cfg["epsilon"]
    kind = cfg["kind"]
    if kind == "var":
        zeta = scenario_max(x)
        return {"bound": zeta, "confidence": var_bound_confidence(x.size, eps), "n": int(x.size)}
    if kind == "expect":
        zeta = scenario_max(x)
        return {
            "bound": expectation_bound(zeta, ell, eps),
            "zeta": zeta,
            "confidence": var_bound_confidence(x.size, eps),
            "n": int(x.size),
        }
    if kind in ("cvar", "evar"):
        if cfg["alpha"] is None:
            raise UsageError(f"{kind} bound needs --alpha")
        search = SearchConfig.from_dict(cfg["search"]) if cfg["search"] else None
        fn = bound_cvar if kind == "cvar" else bound_evar
        return fn(x, ell, cfg["alpha"], eps, search).to_dict()
    raise UsageError(f"unknown bound kind {kind!r}; choose var, expect, cvar or evar")


def _campaign_n(cfg):
    if cfg["n"] is not None:
        return cfg["n"]
    return min_samples(ConfidenceSpec(cfg["epsilon"], cfg["gamma"]))


def cmd_validate(cfg, args):
    dist = fixtures.get_fixture(cfg["fixture"])
    n = _campaign_n(cfg)
    alpha, eps, seed = cfg["alpha"], cfg["epsilon"], cfg["seed"]
    if cfg["trials"] < 1:
        raise InvalidInput("trials must be >= 1")
    oracle = dist.draw(cfg["oracle_draws"], derive_rng(seed, 0))
    truth = {
        "cvar": empirical_cvar(oracle, alpha),
        "evar": empirical_evar(oracle, alpha),
    }
    rows, covered = [], {"cvar": 0, "evar": 0}
    for k in range(cfg["trials"]):
        x = dist.draw(n, derive_rng(seed, 1, k))
        for measure, fn in (("cvar", bound_cvar), ("evar", bound_evar)):
            b = fn(x, dist.ell, alpha, eps).bound
            ok = b >= truth[measure]
            covered[measure] += ok
            rows.append((k, measure, b, truth[measure], int(ok)))
    files = {}
    if args.csv:
        _write_csv(args.csv, ["trial", "measure", "bound", "truth", "covered"], rows)
        files["csv"] = str(args.csv)
    if args.histogram:
        _write_histogram(args.histogram, oracle)
        files["histogram"] = str(args.histogram)
    return {
        "n": n,
        "trials": cfg["trials"],
        "truth": truth,
        "covered": covered,
        "confidence": var_bound_confidence(n, eps),
        "files": files,
    }


def cmd_tsp(cfg, args):
    seed = cfg["seed"]
    if cfg["instance"]:
        instance = ds.TspInstance.load(cfg["instance"])
    else:
        inst_seed = seed if cfg["instance_seed"] is None else cfg["instance_seed"]
        instance = ds.random_instance(cfg["nodes"], derive_rng(inst_seed, 0))
    spec = ConfidenceSpec(cfg["epsilon"], cfg["gamma"])
    report = ds.good_decision(ds.tsp_domain(instance), spec, seed, workers=_workers(args.workers))
    out = {
        "instance": instance.to_dict(),
        "tour": list(report.best_decision),
        "cost": -report.best_reward,
        "samples_used": report.samples_used,
        "best_index": report.best_index,
    }
    audit = cfg["audit"]
    if audit == "exhaustive":
        if instance.count > 10:
            raise UsageError("exhaustive audit is limited to 10 nodes")
        out["violation_fraction"] = ds.exact_violation_fraction(instance, report.best_decision)
        out["percentile"] = 100.0 * (1.0 - out["violation_fraction"])
    elif audit == "mc":
        p, se = ds.violation_volume_estimate(
            ds.tsp_domain(instance), report.best_decision, cfg["audit_trials"], seed + 1, _workers(args.workers)
        )
        out["violation_fraction"] = p
        out["violation_se"] = se
    elif audit != "none":
        raise UsageError(f"unknown audit {audit!r}; choose exhaustive, mc or none")
    return out


def _settings(cfg, horizon=sim.HORIZON):
    if cfg["noise_model"] not in sim.NOISE_MODELS:
        raise UsageError(f"noise_model must be one of {sim.NOISE_MODELS}")
    return vs.SimSettings(cfg["noise_model"], cfg["dt"], horizon)


def cmd_verify(cfg, args):
    rep = vs.verify(
        cfg["params"], cfg["alpha"], cfg["epsilon"], cfg["gamma"], cfg["seed"], _settings(cfg), _workers(args.workers)
    )
    out = rep.to_dict()
    out["mean_robustness"] = float(np.mean(rep.samples))
    out["min_robustness"] = float(np.min(rep.samples))
    if args.histogram:
        _write_histogram(args.histogram, rep.samples)
        out["files"] = {"histogram": str(args.histogram)}
    return out


def cmd_synthesize(cfg, args):
    workers = _workers(args.workers)
    settings = _settings(cfg)
    template = vs.RiskMapQuery(sim.DEFAULT_PARAMS, cfg["gamma1"], cfg["alpha"], None, cfg["epsilon_inner"])
    result = vs.synthesize(
        cfg["gamma2"],
        cfg["epsilon2"],
        template,
        cfg["seed"],
        settings,
        n_candidates=cfg["candidates"],
        crn=cfg["crn"],
        riskmap_fn=fixtures.surrogate_riskmap if cfg["surrogate"] else None,
        workers=workers,
    )
    out = result.to_dict()
    out["n_inner"] = template.n_inner
    files = {}
    if args.candidates_csv:
        rows = [
            (k, c.params.p1, c.params.p2, c.params.p3, c.params.p4, r)
            for k, (c, r) in enumerate(zip(result.selection.decisions, result.riskmap_values))
        ]
        _write_csv(args.candidates_csv, ["index", "p1", "p2", "p3", "p4", "riskmap"], rows)
        files["candidates_csv"] = str(args.candidates_csv)
    if args.histogram and not cfg["surrogate"]:
        # robustness of the winner on its own inner campaign
        values = vs.collect_robustness(result.params, template.n_inner, out["inner_seed"], settings, workers).values
        _write_histogram(args.histogram, values)
        files["histogram"] = str(args.histogram)
        out["winner_mean_robustness"] = float(np.mean(values))
    if files:
        out["files"] = files
    return out


def cmd_simulate(cfg, args):
    params = sim.ControllerParams.from_any(cfg["params"])
    settings = _settings(cfg, cfg["horizon"])
    draw = sim.sample_scenario(derive_rng(cfg["seed"], cfg["draw_index"]))
    traj = sim.rollout(draw, params, settings.dt, settings.horizon, settings.noise_model)
    out = {"draw": draw.to_dict(), "steps": int(traj.states.shape[0] - 1), "final_state": traj.states[-1].tolist()}
    if traj.duration >= sim.HORIZON - 1e-9:
        out["robustness"] = sim.robustness(traj)
    files = {}
    if args.trajectory:
        traj.to_csv(args.trajectory)
        files["trajectory"] = str(args.trajectory)
    if files:
        out["files"] = files
    return out


COMMANDS = {
    "min-samples": cmd_min_samples,
    "bound": cmd_bound,
    "validate": cmd_validate,
    "tsp": cmd_tsp,
    "verify": cmd_verify,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
}


# --- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riskbound", description="Sample-based risk bounds, verification and synthesis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, campaign=True):
        sp.add_argument("--config", help="JSON config or a previous report to replay")
        sp.add_argument("--output", "-o", help="write the JSON report here instead of stdout")
        if campaign:
            sp.add_argument("--seed", type=int, help="master seed (required)")
            sp.add_argument("--workers", type=int, help="worker processes (default: RISKBOUND_WORKERS or all cores)")
        return sp

    sp = common(sub.add_parser("min-samples", help="samples needed for (gamma, epsilon)"), campaign=False)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--json", action="store_true", help="print a full report instead of just N")

    sp = common(sub.add_parser("bound", help="bound a risk measure from a sample file"), campaign=False)
    sp.add_argument("kind", nargs="?", choices=["var", "expect", "cvar", "evar"])
    sp.add_argument("--samples", help="CSV (one value per line) or JSON array")
    sp.add_argument("--ell", type=float, help="essential upper bound of the variable")
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--alpha", type=float)

    sp = common(sub.add_parser("validate", help="coverage campaign on a synthetic distribution"))
    sp.add_argument("--fixture", choices=sorted(fixtures.FIXTURES))
    sp.add_argument("--trials", type=int)
    sp.add_argument("--n", type=int, help="samples per trial (default: from gamma and epsilon)")
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--oracle-draws", dest="oracle_draws", type=int)
    sp.add_argument("--csv", help="per-trial rows (trial, measure, bound, truth, covered)")
    sp.add_argument("--histogram", help="histogram CSV of the oracle draws")

    sp = common(sub.add_parser("tsp", help="percentile-guaranteed travelling salesman tour"))
    sp.add_argument("--nodes", type=int)
    sp.add_argument("--instance", help='JSON {"nodes": [[x, y], ...]}')
    sp.add_argument("--instance-seed", dest="instance_seed", type=int)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--audit", choices=["exhaustive", "mc", "none"])
    sp.add_argument("--audit-trials", dest="audit_trials", type=int)

    sp = common(sub.add_parser("verify", help="certify CVaR/EVaR bounds on negated robustness"))
    sp.add_argument("--params", help="p1,p2,p3,p4")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--noise-model", dest="noise_model", choices=sim.NOISE_MODELS)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--histogram", help="robustness histogram CSV (value, count)")

    sp = common(sub.add_parser("synthesize", help="percentile-optimal controller parameters"))
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--epsilon-inner", dest="epsilon_inner", type=float)
    sp.add_argument("--gamma1", type=float)
    sp.add_argument("--epsilon2", type=float)
    sp.add_argument("--gamma2", type=float)
    sp.add_argument("--candidates", type=int, help="override the number of candidates")
    sp.add_argument("--crn", action="store_const", const=True, help="reuse one scenario batch for all candidates")
    sp.add_argument("--surrogate", action="store_const", const=True, help="use the analytic surrogate riskmap")
    sp.add_argument("--noise-model", dest="noise_model", choices=sim.NOISE_MODELS)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--histogram", help="robustness histogram CSV of the selected controller")
    sp.add_argument("--candidates-csv", dest="candidates_csv", help="every candidate and its riskmap")

    sp = common(sub.add_parser("simulate", help="export one closed-loop rollout"))
    sp.add_argument("--params", help="p1,p2,p3,p4")
    sp.add_argument("--draw-index", dest="draw_index", type=int)
    sp.add_argument("--noise-model", dest="noise_model", choices=sim.NOISE_MODELS)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--trajectory", help="trajectory CSV (t, x1, y1, theta1, ...)")
    return p


def _flags(args) -> dict:
    schema = SCHEMAS[args.command]
    return {k: getattr(args, k) for k in schema if getattr(args, k, None) is not None}


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return data


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    cfg = resolve(args.command, _load_config(args.config), _flags(args))
    start = time.perf_counter()
    outputs = COMMANDS[args.command](cfg, args)
    elapsed = time.perf_counter() - start
    report = {
        "command": args.command,
        "inputs": cfg,
        "outputs": outputs,
        "provenance": {
            "version": __version__,
            "seed": cfg.get("seed"),
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "elapsed_seconds": round(elapsed, 3),
        },
    }
    text = json.dumps(report, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    elif args.command == "min-samples" and not args.json:
        print(outputs["n"])
    else:
        print(text)
    return report


def main(argv=None) -> int:
    try:
        run(argv)
    except SystemExit as exc:  # argparse
        return int(exc.code or 0)
    except (UsageError, ValueError) as exc:
        print(f"riskbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SearchError, SimulationError, FloatingPointError, OverflowError) as exc:
        print(f"riskbound: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
