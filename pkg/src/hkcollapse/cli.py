"""Command-line entry point.

    hkcollapse epr --trials 20000 --seed 42
    hkcollapse capture --out runs/capture --format csv --report
    hkcollapse landscape --svg --out runs/landscape
    hkcollapse verify --quick

The summary JSON goes to stdout (and to ``summary.json`` under ``--out``);
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .io import RunManifest, dumps, load_config, write_json, write_outcomes_csv, write_trace_csv
from .minkowski import Boost, boost
from .scenarios import (
    WINDOW_MODES,
    GeometryError,
    ScenarioConfig,
    build_engine,
    dual_flags,
    run_dual_trigger_probe,
    run_epr,
    run_epr_scenarios,
    run_single_capture,
    run_three_component_conservation,
    run_trials,
)

SCENARIO_OF = {
    "capture": "single_capture",
    "epr": "epr_singlet",
    "conservation": "three_component_conservation",
    "dual": "dual_trigger_probe",
    "landscape": "epr_singlet",
}

SUMMARY_KEYS = ("scenario", "seed", "trials", "p_first_up", "anticorrelation_rate", "dual_rate",
                "conservation_residual", "frame_invariance", "ledger_sample")


class CliError(Exception):
    pass


def _boost_arg(text: str) -> tuple[float, float, float]:
    try:
        return Boost.parse(text).velocity
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hkcollapse", description="Event-anchored collapse simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario configuration or run manifest (JSON)")
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--g", type=float, help="coupling strength")
    common.add_argument("--d-omega", type=float, dest="d_omega", help="event volume element")
    common.add_argument("--boost", type=_boost_arg, help='frame velocity "vx,vy,vz"')
    common.add_argument("--windows", choices=WINDOW_MODES, help="EPR window layout")
    common.add_argument("--method", choices=("exact", "rk4"))
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--format", choices=("json", "csv"), default="json",
                        help="csv adds per-trial outcome and trace tables")
    common.add_argument("--svg", action="store_true", help="write the landscape of the first trial as SVG")
    common.add_argument("--report", action="store_true", help="render PNG figures into --out")
    common.add_argument("--rule", choices=("front_limited", "latest"), default="front_limited",
                        help="peak assignment rule for landscapes")

    for name, help_ in (("capture", "single capture a + b -> c"), ("epr", "EPR singlet with two detectors"),
                        ("conservation", "square-modulus audit of the capture model"),
                        ("dual", "dual-capture scaling probe"),
                        ("landscape", "collapse landscape of one EPR trial")):
        sp = sub.add_parser(name, parents=[common], help=help_)
        if name == "landscape":
            sp.add_argument("--trial", type=int, default=0, help="trial index to draw")
            sp.add_argument("--dual", action="store_true", help="search for a dual-capture trial")
        if name == "epr":
            sp.add_argument("--scenarios", action="store_true", help="also tabulate which detector fires first "
                            "under all three window layouts")
    v = sub.add_parser("verify", help="run the property suite")
    v.add_argument("--quick", action="store_true")
    v.add_argument("--inject-nonhermitian", action="store_true", help=argparse.SUPPRESS)
    return p


def resolve_config(args) -> tuple[ScenarioConfig, dict]:
    name = SCENARIO_OF[args.command]
    if args.command == "landscape" and getattr(args, "dual", False):
        name = "dual_trigger_probe"
    options: dict = {}
    if args.config is not None:
        cfg, options = load_config(args.config)
        if cfg.name != name:
            raise CliError(f"configuration is for {cfg.name!r}, command {args.command!r} runs {name!r}")
    else:
        cfg = ScenarioConfig(name)
    over: dict[str, Any] = {}
    for key in ("trials", "seed", "dt", "g", "d_omega", "boost", "method"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if args.windows is not None:
        over["window_mode"] = args.windows
        over["windows"] = None
    if over:
        cfg = replace(cfg, **over)
    if cfg.name == "epr_singlet" and args.config is None and args.trials is None:
        cfg = replace(cfg, trials=20000)
    if args.command == "landscape" and args.trials is None:
        cfg = replace(cfg, trials=args.trial + 1 if not args.dual else 20000)
    return cfg.resolved(), options


def _ledger_order_check(cfg: ScenarioConfig, boosted_outs, workers: int) -> dict:
    """Compare a boosted run with the same seed in the lab frame, trial by trial."""
    lab = run_trials(replace(cfg, boost=None), workers)
    b = Boost(tuple(cfg.boost))
    same_order = same_vertices = 0
    for o_lab, o_b in zip(lab, boosted_outs):
        if o_lab.ledger.order() == o_b.ledger.order():
            same_order += 1
        mapped = o_lab.ledger.map_vertices(lambda e: boost(e, b))
        ok = len(mapped) == len(o_b.ledger) and all(
            max(abs(p - q) for p, q in zip(v1.coords, v2.coords)) <= 1e-9
            for r1, r2 in zip(mapped, o_b.ledger) for v1, v2 in zip(r1.vertices, r2.vertices)
        )
        same_vertices += ok
    n = len(lab)
    return {"boost": list(cfg.boost), "trials": n, "same_ledger_order": same_order,
            "vertices_match_boosted_lab": same_vertices, "pass": same_order == n and same_vertices == n}


def _summary_base(cfg: ScenarioConfig) -> dict:
    return {k: None for k in SUMMARY_KEYS} | {"scenario": cfg.name, "seed": cfg.seed, "trials": cfg.trials}


def _landscape_outputs(ledger, args, out: Path | None, written: list, stem: str = "landscape") -> dict:
    from .landscape import emit_landscape

    data = emit_landscape(ledger, rule=args.rule)
    if out is not None:
        written.append(write_json(data.to_dict(), out / f"{stem}.json").name)
        if args.svg:
            from .svg import write_svg

            written.append(write_svg(data, out / f"{stem}.svg").name)
        if args.report:
            from .plotting import plot_landscape

            written.append(plot_landscape(data, out / f"{stem}.png").name)
    return data.to_dict()


def cmd_run(args) -> int:
    cfg, options = resolve_config(args)
    out: Path | None = args.out
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if (args.svg or args.report) and out is None:
        raise CliError("--svg and --report need --out")
    written: list[str] = []
    summary = _summary_base(cfg)
    workers = max(1, args.workers)

    if cfg.name == "single_capture":
        rep = run_single_capture(cfg, workers, record=(0,) if args.format == "csv" else ())
        outs = rep.pop("outcomes")
        summary.update({k: rep[k] for k in ("capture_fraction", "captures", "oracle", "histogram",
                                            "captured_single_component")})
        summary["sigma"] = rep["sigma"]
        summary["ledger_sample"] = outs[0].ledger.to_list()
        summary["counts"] = {"trials": rep["trials"], "captures": rep["captures"]}
        if args.report and out is not None:
            from .plotting import plot_histogram, plot_populations

            h = rep["histogram"]
            written.append(plot_histogram(h["edges"], h["counts"], out / "capture_times.png").name)
            traj, _ = build_engine(cfg).deterministic_trajectory()
            written.append(plot_populations(traj, out / "populations.png").name)
    elif cfg.name == "epr_singlet" and args.command == "epr":
        rep = run_epr(cfg, workers, record=(0,) if args.format == "csv" else ())
        outs = rep.pop("outcomes")
        for k in ("p_first_up", "anticorrelation_rate", "dual_rate", "conservation_residual"):
            summary[k] = rep[k]
        checks = rep["frame_checks"]
        if cfg.boost is not None:
            lo = _ledger_order_check(cfg, outs, workers)
            checks = checks + [lo]
            summary["boosted_run"] = lo
        ok = all(c["pass"] for c in checks)
        summary["frame_invariance"] = "pass" if ok else "fail"
        summary["frame_checks"] = rep["frame_checks"]
        summary["ledger_sample"] = outs[0].ledger.to_list()
        summary["counts"] = {k: rep[k] for k in ("trials", "n_first", "n_first_up", "n_d1_first", "n_d1_first_up",
                                                  "n_both", "n_anticorrelated", "n_dual", "which_first",
                                                  "n_two_collapse", "n_spacelike_vertex_pairs")}
        if args.scenarios:
            summary["window_scenarios"] = run_epr_scenarios(replace(cfg, trials=min(cfg.trials, 2000)), workers)
        print(f"invariant: {'PASS' if ok else 'FAIL'}", file=sys.stderr)
        if args.svg or args.report:
            _landscape_outputs(outs[0].ledger, args, out, written)
        if args.report and out is not None:
            from .plotting import plot_populations

            traj, _ = build_engine(cfg).deterministic_trajectory()
            written.append(plot_populations(traj, out / "populations.png").name)
    elif cfg.name == "three_component_conservation":
        rep = run_three_component_conservation(cfg)
        traj = rep.pop("trajectory")
        rep.pop("terms")
        summary["trials"] = None
        summary["conservation_residual"] = rep["conservation_residual"]
        summary["conservation"] = rep
        outs = []
        if out is not None and args.format == "csv":
            traj.write_csv(out / "trajectory.csv")
            written.append("trajectory.csv")
        if args.report and out is not None:
            from .plotting import plot_populations

            written.append(plot_populations(traj, out / "populations.png").name)
    elif cfg.name == "dual_trigger_probe" and args.command == "dual":
        rep = run_dual_trigger_probe(cfg, workers)
        outs = []
        for r in rep["rates"]:
            sample = r.pop("sample")
            r["ledger_sample"] = sample.to_list() if sample is not None else None
        summary["dual_rate"] = rep["rates"][0]["dual_rate"]
        summary["dual_probe"] = rep
        first = next((r["ledger_sample"] for r in rep["rates"] if r["ledger_sample"]), None)
        summary["ledger_sample"] = first
        summary["counts"] = {"n_dual": [r["n_dual"] for r in rep["rates"]],
                             "n_single_first": [r["n_single_first"] for r in rep["rates"]],
                             "trials": [r["trials"] for r in rep["rates"]],
                             "disjoint_dual": rep["disjoint_dual"], "disjoint_trials": rep["disjoint_trials"]}
        if first is not None and (args.svg or args.report):
            from .qrules import CausalLedger

            _landscape_outputs(CausalLedger.from_list(first), args, out, written, "landscape_dual")
    else:
        # landscape
        if args.dual:
            flags = run_trials(cfg, workers, reduce=dual_flags, max_collapses=1)
            hit = next((f for f in flags if f[1]), None)
            if hit is None:
                raise CliError(f"no dual capture in {cfg.trials} trials; raise --trials or --d-omega")
            index = hit[0]
        else:
            index = args.trial
        outs = run_trials(cfg, 1, indices=[index])
        ledger = outs[0].ledger
        summary["trials"] = 1
        summary["trial_index"] = index
        summary["ledger_sample"] = ledger.to_list()
        summary["landscape"] = _landscape_outputs(ledger, args, out, written)
        from .landscape import check_influence_limitation

        summary["influence_limited"] = check_influence_limitation(ledger)

    if out is not None:
        if args.format == "csv" and outs:
            written.append(write_outcomes_csv(outs, out / "outcomes.csv").name)
            recorded = [o for o in outs if o.trace]
            if recorded:
                written.append(write_trace_csv(recorded, out / "trials.csv").name)
        written.append(write_json(summary, out / "summary.json").name)
        manifest = RunManifest(cfg.name, cfg.to_dict(), cfg.seed, outputs=written + ["manifest.json"],
                               command=args.command,
                               options={k: v for k, v in (("rule", args.rule),) if v != "front_limited"} | options)
        manifest.write(out)
    sys.stdout.write(dumps(summary))
    return 0


def cmd_verify(args) -> int:
    from .verify import run_checks

    results = run_checks(quick=args.quick, inject_nonhermitian=args.inject_nonhermitian)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return 0 if ok else 1


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_run(args)
    except (CliError, GeometryError, ValueError) as exc:
        print(f"hkcollapse: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
