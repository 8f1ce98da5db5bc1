"""Command-line entry point: ``microgrid-ems <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import Settings, load_settings, settings_to_dict
from .forecast import TraceError, TraceSet, export_csv, generate_traces, ingest_csv
from .formulation import Ablations
from .milp import export_model_text
from .model import ConfigError, ModelInputError
from .sim import InvariantBreach, ScenarioConfig, SimulationError, rho_sweep, run_scenario
from .uc import expected_p0_counts

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_TRACE = 4
EXIT_SOLVER = 5
EXIT_INVARIANT = 6
EXIT_IO = 7

MODE_ALIASES = {"two-stage": "two-stage", "one-stage": "one-stage-only",
                "one-stage-only": "one-stage-only", "benchmark": "benchmark-error-free",
                "benchmark-error-free": "benchmark-error-free"}

log = logging.getLogger("microgrid_ems")


class UsageError(Exception):
    pass


def _settings(args) -> Settings:
    s = load_settings(getattr(args, "config", None))
    qos_kw = {}
    if getattr(args, "alpha_avg", None) is not None:
        qos_kw["alpha_avg"] = args.alpha_avg
    if getattr(args, "alpha_max", None) is not None:
        qos_kw["alpha_max"] = args.alpha_max
    mg = s.microgrid.with_qos(**qos_kw) if qos_kw else s.microgrid
    if getattr(args, "v_scale", None) is not None:
        mg = mg.with_algo(v_scale=args.v_scale)
    if getattr(args, "uc_backend", None):
        mg = mg.with_algo(uc_backend=args.uc_backend)
    return dataclasses.replace(s, microgrid=mg).validate()


def _traces(args, settings: Settings, horizon: int) -> TraceSet:
    if getattr(args, "traces", None):
        ts = ingest_csv(args.traces, settings.microgrid.qos.d_e_min)
    else:
        tp = settings.traces
        ts = generate_traces(horizon, args.seed, tp.wind_peak, tp.load_peak,
                             (tp.inelastic_min, tp.inelastic_max))
    if ts.horizon < horizon:
        raise TraceError(f"traces cover {ts.horizon} slots, {horizon} needed")
    return ts.validate(settings.microgrid.qos.d_e_min)


def _manifest(args, settings: Settings, scenarios: list[ScenarioConfig], out: Path,
              started: str, timings: dict | None = None) -> dict:
    return {
        "tool": "microgrid-ems",
        "version": __version__,
        "command": args.command,
        "argv": {k: v for k, v in vars(args).items() if k not in ("func",)},
        "config": settings_to_dict(settings),
        "scenarios": [{"mode": s.mode, "rho": s.rho, "horizon": s.horizon, "seed": s.seed,
                       "ablations": dataclasses.asdict(s.ablations)} for s in scenarios],
        "seeds": sorted({s.seed for s in scenarios}),
        "output_dir": str(out),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "timings_s": timings or {},
    }


def _write_manifest(out: Path, manifest: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _scenario(args, mode: str | None = None, rho: float | None = None) -> ScenarioConfig:
    return ScenarioConfig(
        mode=MODE_ALIASES[mode or args.mode],
        ablations=Ablations(args.omit_startstop, args.omit_aging),
        rho=args.rho if rho is None else rho, horizon=args.horizon, seed=args.seed).validate()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate_traces(args) -> int:
    settings = _settings(args)
    if args.horizon < 24:
        raise TraceError("horizon must cover at least one day (24 slots)")
    ts = _traces(args, settings, args.horizon)
    model = dataclasses.replace(settings.forecast, seed=args.seed)
    export_csv(ts, args.out, include_forecasts=args.with_forecasts, model=model)
    print(f"wrote {ts.horizon} slots to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    settings = _settings(args)
    scenario = _scenario(args)
    ts = _traces(args, settings, scenario.horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "decisions.tsv", "w") as fh:
        report = run_scenario(settings.microgrid, ts, scenario, settings.forecast,
                              decision_log=fh, strict=False)
    report.write(out)
    print(report.summary_text(), end="")
    timings = {k: v for k, v in report.solver_stats.items() if k.endswith("_time_s")}
    _write_manifest(out, _manifest(args, settings, [scenario], out, started, timings))
    hard = [v for v in report.violations
            if v["kind"] not in ("ess-clip", "alpha-max-exceeded", "inelastic-qos-breach")]
    if hard:
        print(f"hard-constraint violations: {len(hard)}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_sweep_rho(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    settings = _settings(args)
    rhos = [float(x) for x in args.rhos.split(",") if x.strip()]
    base = _scenario(args, mode="two-stage", rho=1.0)
    ts = _traces(args, settings, base.horizon)
    table = rho_sweep(settings.microgrid, ts, rhos, args.seed, base.horizon, base.ablations,
                      error_model=settings.forecast)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(table.to_csv())
    (out / "cumulative_differences.csv").write_text(table.cumulative_csv())
    print(table.to_csv(), end="")
    scenarios = [dataclasses.replace(base, mode=m, rho=r) for m in table.costs for r in rhos]
    _write_manifest(out, _manifest(args, settings, scenarios, out, started))
    return EXIT_OK


def cmd_export_model(args) -> int:
    settings = _settings(args)
    if args.which not in ("p0", "p1"):
        raise UsageError(f"unknown model {args.which!r}; expected p0 or p1")
    scenario = _scenario(args, mode="two-stage")
    index = args.day if args.which == "p0" else args.slot
    limit = scenario.horizon // 24 if args.which == "p0" else scenario.horizon
    if not 0 <= index < limit:
        raise UsageError(f"selector {index} out of range [0, {limit})")
    ts = _traces(args, settings, scenario.horizon)
    rep = run_scenario(settings.microgrid, ts, scenario, settings.forecast, strict=False,
                       capture=(args.which, index))
    model = rep.captured
    Path(args.out).write_text(export_model_text(model))
    msg = f"wrote {model.name}: {model.num_vars} variables, {len(model.binaries)} binaries"
    if args.which == "p0":
        b, c = expected_p0_counts(settings.microgrid, 24, scenario.ablations)
        msg += f" (tally: {b} binaries, {c} continuous)"
    print(msg)
    return EXIT_OK


def cmd_validate_config(args) -> int:
    settings = _settings(args)
    cfg = settings.microgrid
    print(f"ok: {len(cfg.cgs)} CGs, {len(cfg.esss)} ESSs, alpha_avg={cfg.qos.alpha_avg}, "
          f"alpha_max={cfg.qos.alpha_max}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--alpha-avg", type=float, dest="alpha_avg")
    p.add_argument("--alpha-max", type=float, dest="alpha_max")
    p.add_argument("--v-scale", type=float, dest="v_scale", help="V as a multiple of V_max")
    p.add_argument("--uc-backend", choices=("native", "highs"), dest="uc_backend")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=168)
    if scenario:
        p.add_argument("--traces", help="trace CSV; generated from --seed when omitted")
        p.add_argument("--rho", type=float, default=1.0)
        p.add_argument("--omit-startstop", action="store_true")
        p.add_argument("--omit-aging", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="microgrid-ems",
                                 description="Two-stage microgrid energy management")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-traces", help="write a synthetic trace CSV")
    _common(p, scenario=False)
    p.add_argument("--with-forecasts", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_traces)

    p = sub.add_parser("run", help="simulate one scenario")
    _common(p)
    p.add_argument("--mode", choices=sorted(MODE_ALIASES), default="two-stage")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-rho", help="paired two-stage / one-stage runs over rho")
    _common(p)
    p.add_argument("--rhos", default="0.5,1,1.5,2")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_rho)

    p = sub.add_parser("export-model", help="write a P0 or P1 model as text")
    _common(p)
    p.add_argument("--which", required=True)
    p.add_argument("--day", type=int, default=0)
    p.add_argument("--slot", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_model)

    p = sub.add_parser("validate-config", help="check a configuration file")
    _common(p, scenario=False)
    p.set_defaults(func=cmd_validate_config)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TraceError, ModelInputError) as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except SimulationError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InvariantBreach as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
