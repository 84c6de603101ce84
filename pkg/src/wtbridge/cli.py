"""Command-line entry point: ``wtbridge {validate,run,analyze,oracle}``.

Exit codes: 0 success, 2 configuration error, 3 runtime (simulation or
oracle) failure, 4 analysis failure. Outputs go to ``--out`` or, if omitted,
to ``$WTBRIDGE_OUTPUT`` (default ``./wtbridge_output``).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import analysis
from .config import ConfigError, dump, load_config, set_value, simulation_config, violations
from .coupled_solver import (SimulationError, config_hash, read_history_csv, realisation_seeds, run,
                             write_history_csv)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ANALYSIS = 0, 2, 3, 4
OUTPUT_ENV = "WTBRIDGE_OUTPUT"
MANIFEST = "manifest.json"
TIMINGS = "timings.json"

logger = logging.getLogger("wtbridge")


def output_root(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or "wtbridge_output")


def history_name(scenario: str, case: int, realisation: int) -> str:
    return f"history_{scenario}_case{case}_r{realisation:02d}.csv"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _resolve(args) -> tuple:
    cfg = load_config(args.config)
    over = {}
    if getattr(args, "scenario", None):
        over["simulation.scenarios"] = json.dumps(args.scenario)
    if getattr(args, "case", None):
        over["simulation.cases"] = json.dumps(args.case)
    for key, flag in (("simulation.realisations", "realisations"), ("simulation.master_seed", "master_seed"),
                      ("simulation.duration", "duration"), ("simulation.mean_wind_U", "wind_speed")):
        if getattr(args, flag, None) is not None:
            over[key] = str(getattr(args, flag))
    if getattr(args, "turbulence", None) is not None:
        over["wind.intensity"] = json.dumps([i * args.turbulence for i in cfg.wind.intensity])
    for item in getattr(args, "set", None) or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        over[key] = value
    for key, value in over.items():
        cfg = set_value(cfg, key, value)
    return cfg


def cmd_validate(args) -> int:
    try:
        cfg = _resolve(args)
    except ConfigError as e:
        print(f"1 violation\n  {e}")
        return EXIT_CONFIG
    found = violations(cfg)
    print(f"{len(found)} violation{'s' if len(found) != 1 else ''}")
    for v in found:
        print(f"  {v}")
    print("--- resolved configuration ---")
    print(dump(cfg), end="")
    return EXIT_OK if not found else EXIT_CONFIG


def _run_one(task):
    cfg_json, scenario, case, r, path = task
    from .config import RunConfig

    cfg = RunConfig.model_validate(cfg_json)
    sc = simulation_config(cfg, scenario, case, r)
    t0 = time.perf_counter()
    try:
        hist = run(sc)
    except (SimulationError, OSError, ValueError) as e:
        return {"scenario": scenario, "case": case, "realisation": r, "error": str(e)}
    write_history_csv(hist, path, config_hash(sc))
    stats = {k: v for k, v in hist.stats.items() if k != "wall_time_s"}
    return {"scenario": scenario, "case": case, "realisation": r, "stats": stats,
            "wall_time_s": time.perf_counter() - t0}


def cmd_run(args) -> int:
    try:
        cfg = _resolve(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    found = violations(cfg)
    if found:
        for v in found:
            print(f"configuration error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    out = output_root(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sim = cfg.simulation
    cells = [(s, c, r) for c in sim.cases for s in sim.scenarios for r in range(sim.realisations)]
    tasks = [(cfg.resolved(), s, c, r, str(out / history_name(s, c, r))) for s, c, r in cells]
    jobs = args.jobs or os.cpu_count() or 1
    t0 = time.perf_counter()
    if jobs == 1 or len(tasks) == 1:
        results = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_run_one, tasks))

    failures = [r for r in results if "error" in r]
    for f in failures:
        print(f"realisation failed: {f['scenario']} case {f['case']} r{f['realisation']}: {f['error']}",
              file=sys.stderr)
    hashes = {c: config_hash(simulation_config(cfg, sim.scenarios[0], c)) for c in sim.cases}
    entries = []
    for (s, c, r), res in zip(cells, results):
        if "error" in res:
            continue
        name = history_name(s, c, r)
        entries.append({"scenario": s, "case": c, "realisation": r, "path": name,
                        "sha256": _sha256(out / name), "seeds": realisation_seeds(sim.master_seed, r),
                        "stats": res["stats"]})
    manifest = {
        "config_hash": hashes,
        "master_seed": sim.master_seed,
        "matrix": {"scenarios": sim.scenarios, "cases": sim.cases, "realisations": sim.realisations},
        "config": cfg.resolved(),
        "timings": TIMINGS,
        "outputs": entries,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    timings = {"total_s": time.perf_counter() - t0, "jobs": jobs,
               "per_realisation_s": {history_name(*cell): res.get("wall_time_s") for cell, res in zip(cells, results)}}
    (out / TIMINGS).write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(entries)} histories and {out / MANIFEST}")
    return EXIT_RUNTIME if failures else EXIT_OK


def _station_label(x: float) -> str:
    return f"x{x:.0f}"


def analyze_manifest(manifest_path, out_dir) -> dict:
    """Envelopes, spectra, scenario comparisons and the case study for a run manifest."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise analysis.AnalysisError(f"cannot read manifest {manifest_path}: {e}") from None
    entries = manifest.get("outputs") or []
    if not entries:
        raise analysis.AnalysisError("nothing to analyze: manifest lists no histories")
    base = manifest_path.parent
    missing = [str(base / e["path"]) for e in entries if not (base / e["path"]).is_file()]
    if missing:
        raise analysis.AnalysisError("missing histories:\n  " + "\n  ".join(missing))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    groups: dict = {}
    for e in sorted(entries, key=lambda e: (e["case"], e["scenario"], e["realisation"])):
        h = read_history_csv(base / e["path"])
        groups.setdefault(e["case"], {}).setdefault(e["scenario"], []).append(h)

    summary = {"compare": {}, "case_study": None, "psd": {}}
    wt_envelopes = {}
    for case, scen in sorted(groups.items()):
        if "W" in scen and "T" in scen:
            scen["W+T"] = analysis.pair_superpose(scen["W"], scen["T"])
        envs = {}
        for name, hists in scen.items():
            if not hists:
                continue
            env = analysis.envelope(hists)
            envs[name] = env
            analysis.write_envelope_csv(env, out_dir / f"envelope_{name}_{case}.csv")
            analysis.plot_envelope(env, out_dir / f"envelope_{name}_{case}.svg", f"Scenario {name}, case {case}")
        ref = next(iter(scen.values()))[0]
        x_mid = 0.5 * (ref.station_x[0] + ref.station_x[-1])
        i_mid = ref.station_index(x_mid)
        label = _station_label(ref.station_x[i_mid])
        for name in ("WT", "W", "T"):
            if name not in scen:
                continue
            for dof in ("h", "alpha"):
                est = analysis.ensemble_psd([h.dof(dof)[:, i_mid] for h in scen[name]], ref.dt)
                stem = f"psd_{label}_{dof}_{name}_{case}"
                analysis.write_psd_csv(est, out_dir / f"{stem}.csv", f"{dof} at {label}, scenario {name}, case {case};")
                analysis.plot_psd(est, out_dir / f"{stem}.svg", f"{dof} at {label}, {name}, case {case}")
                summary["psd"][stem] = {"peak_hz": est.peak_frequency(), "parseval_ratio": est.parseval_ratio}
        if all(k in envs for k in ("W", "T", "W+T", "WT")):
            summary["compare"][case] = analysis.compare_scenarios(envs["W"], envs["T"], envs["W+T"], envs["WT"],
                                                                  x_mid, out_dir, case)
        if "WT" in envs:
            wt_envelopes[case] = (envs["WT"], x_mid)
    if len(wt_envelopes) >= 2:
        x_mid = next(iter(wt_envelopes.values()))[1]
        summary["case_study"] = analysis.case_study({c: e for c, (e, _) in wt_envelopes.items()}, x_mid,
                                                    out_dir=out_dir)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    return summary


def cmd_analyze(args) -> int:
    out = Path(args.out) if args.out else Path(args.manifest).parent / "analysis"
    try:
        summary = analyze_manifest(args.manifest, out)
    except (analysis.AnalysisError, ValueError, KeyError) as e:
        print(f"analysis error: {e}", file=sys.stderr)
        return EXIT_ANALYSIS
    for case, s in summary["compare"].items():
        m = s["midspan"]
        print(f"case {case}: midspan h  W {m['W']:+.4f}  T {m['T']:+.4f}  W+T {m['W+T']:+.4f}  WT {m['WT']:+.4f} m")
    for row in summary["case_study"] or ():
        print(f"case {row['case']}: WT midspan extreme {row['midspan_extreme_h']:+.4f} m, "
              f"width metric {row['width_metric']:.3f}")
    print(f"outputs in {out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracles import run_oracle_suite

    results = run_oracle_suite(quick=not args.full)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} oracles passed")
    return EXIT_OK if not failed else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wtbridge", description="Wind-traffic-bridge interaction simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    sub = p.add_subparsers(dest="command", required=True)

    def config_flags(sp):
        sp.add_argument("--config", help="YAML run configuration (default: built-in defaults)")
        sp.add_argument("--scenario", nargs="+", choices=["W", "T", "WT"], help="scenarios to run")
        sp.add_argument("--case", nargs="+", type=int, choices=[1, 2, 3], help="traffic/wind cases")
        sp.add_argument("--realisations", type=int, help="realisations per scenario and case")
        sp.add_argument("--master-seed", type=int, dest="master_seed")
        sp.add_argument("--duration", type=float, help="recorded duration after run-up [s]")
        sp.add_argument("--wind-speed", type=float, dest="wind_speed", help="mean wind speed U [m/s]")
        sp.add_argument("--turbulence", type=float,
                        help="scale factor on all turbulence intensities (0 switches turbulence off)")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override any config field; value parsed as YAML")

    v = sub.add_parser("validate", help="check a configuration and print it with defaults resolved")
    config_flags(v)
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run the scenario/case/realisation matrix")
    config_flags(r)
    r.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./wtbridge_output)")
    r.add_argument("--jobs", type=int, default=None, help="parallel processes (default: CPU count)")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="envelopes, spectra and comparisons from a run manifest")
    a.add_argument("manifest", help="manifest.json written by 'run'")
    a.add_argument("--out", help="output directory (default: <manifest dir>/analysis)")
    a.set_defaults(func=cmd_analyze)

    o = sub.add_parser("oracle", help="run the analytic oracle checks and print pass/fail")
    o.add_argument("--full", action="store_true", help="full-length checks instead of the quick set")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
