"""Command line entry point: ``nematic2d {run,verify,picard,sweep}``.

Exit codes: 0 ok, 1 invalid input, 2 detector halt, 3 numerical abort,
4 Picard divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path


from . import config as cfgmod
from . import diagnostics as diag
from .energy import EnergyMonitor, apriori_report, struwe_check
from .forcing import ForcingSpec
from .integrator import NumericalAbort, picard_solve, run
from .scenarios import build
from .snapshots import SnapshotError, read_directory, snapshot_name, write_snapshot

logger = logging.getLogger("nematic2d")

EXIT_OK, EXIT_INVALID, EXIT_HALT, EXIT_ABORT, EXIT_DIVERGED = 0, 1, 2, 3, 4
CHECKS = ("pressure", "zcheck", "smalldata", "struwe", "apriori")


def _merge(a: ForcingSpec, b: ForcingSpec) -> ForcingSpec:
    return ForcingSpec(a.f_terms + b.f_terms, a.g_terms + b.g_terms)


def _resolve(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfgmod.parse_dict({**cfg.to_dict(), "seed": args.seed})
    if getattr(args, "out", None):
        cfg = cfg.with_override("output.dir", str(args.out))
    return cfg


def _setup(cfg: cfgmod.RunConfig):
    grid = cfg.make_grid()
    scen = build(cfg.scenario["name"], grid, cfg.scenario["params"], cfg.seed)
    return scen.state, _merge(cfg.make_forcing(), scen.forcing), cfg.make_potential()


def _jsonable(x):
    # strict JSON: non-finite floats become null
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item"):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n")


def execute_run(cfg: cfgmod.RunConfig) -> int:
    """Run one configuration into cfg.output.dir; returns the exit code."""
    out = Path(cfg.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.save(cfg, out / "config.toml")
    state, forcing, pot = _setup(cfg)
    grid = state.grid
    monitor = EnergyMonitor(grid, cfg.make_monitors(), pot, forcing, out / "energy.csv", out / "events.jsonl")
    snaps = []

    def writer(s, k):
        write_snapshot(out / snapshot_name(k), s)
        snaps.append(s)

    summary = {"scenario": cfg.scenario["name"], "seed": cfg.seed}
    try:
        traj = run(
            state,
            cfg.stepper["T"],
            cfg.make_stepper(),
            forcing,
            pot,
            monitors=[monitor],
            snapshot_every=cfg.stepper["snapshot_every"],
            snapshot_writer=writer,
        )
        summary.update(status=traj.status, steps=traj.steps, message=traj.message)
        code = EXIT_HALT if traj.status == "halted" else EXIT_OK
    except NumericalAbort as exc:
        summary.update(status="aborted", message=str(exc), diagnostics=exc.diagnostics)
        code = EXIT_ABORT
    det = monitor.detector
    summary.update(detector_fired=det.fired, T_fire=det.T_fire, drop_log=[list(x) for x in det.drop_log])
    _write_json(out / "run.json", summary)
    if cfg.output["plots"] and monitor.rows:
        from .plotting import plot_energy, plot_fields

        plot_energy(monitor.rows, out / "energy.png")
        picks = sorted({0, len(snaps) // 2, len(snaps) - 1}) if snaps else []
        for j in picks:
            plot_fields(snaps[j], out / f"fields_{j:03d}.png")
    return code


def cmd_run(args) -> int:
    cfg = _resolve(args)
    code = execute_run(cfg)
    print(f"run finished with exit code {code}; outputs in {cfg.output['dir']}")
    return code


def cmd_verify(args) -> int:
    run_dir = Path(args.run_dir)
    only = args.only.split(",") if args.only else list(CHECKS)
    for name in only:
        if name not in CHECKS:
            raise cfgmod.ConfigError("--only", f"unknown check {name!r}; expected one of {CHECKS}")
    cfg_path = Path(args.config) if args.config else run_dir / "config.toml"
    cfg = cfgmod.load(cfg_path)
    states = read_directory(run_dir)
    if len(states) < 2:
        raise SnapshotError(f"{run_dir}: need at least two snapshots, found {len(states)}")
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    forcing = _merge(cfg.make_forcing(), build(cfg.scenario["name"], states[0].grid, cfg.scenario["params"], cfg.seed).forcing)
    pot = cfg.make_potential()
    verdict: dict[str, dict] = {}

    if "pressure" in only:
        recs = diag.pressure_series(states, forcing)
        diag.write_pressure_csv(out / "pressure.csv", recs)
        mean = max(abs(float(r.p_tilde.mean())) for r in recs)
        consist = max(diag.pressure_consistency(s, forcing) for s in states)
        verdict["pressure"] = {"max_mean": mean, "max_consistency": consist, "pass": mean <= 1e-12 and consist <= 1e-10}
    if "zcheck" in only:
        z = diag.z_verify(states, cfg.stepper["dt"], pot)
        diag.write_zcheck_csv(out / "zcheck.csv", z)
        verdict["zcheck"] = {"sup_z_L2": z.sup_l2, "c_fit": z.c_fit, "pass": z.passed}
    if "smalldata" in only:
        fired = _detector_fired(run_dir)
        rec = diag.smalldata_monitor(
            states, forcing, pot, cfg.monitors["cap"], cfg.monitors["smallness"], fired
        )
        diag.write_smalldata_csv(out / "smalldata.csv", rec)
        verdict["smalldata"] = {"bold_E0": rec.bold_E0, "notes": rec.notes, "pass": rec.passed}
    if "struwe" in only:
        res = struwe_check(states, cfg.monitors["R"])
        verdict["struwe"] = {
            k: {"ratio": r.ratio, "status": r.status} for k, r in res.items()
        }
        verdict["struwe"]["pass"] = all(r.status != "degenerate" for r in res.values())
    if "apriori" in only:
        rep = apriori_report(states, forcing, pot, cfg.monitors["eps"], cfg.monitors["R"])
        verdict["apriori"] = {**rep, "pass": all(math.isfinite(v) for k, v in rep.items() if not k.startswith("ratio"))}

    ok = all(v["pass"] for v in verdict.values())
    verdict["pass"] = ok
    _write_json(out / "verdict.json", verdict)
    print(f"verify {'passed' if ok else 'FAILED'}: " + ", ".join(f"{k}={'ok' if v['pass'] else 'fail'}" for k, v in verdict.items() if k != "pass"))
    return EXIT_OK if ok else EXIT_INVALID


def _detector_fired(run_dir: Path) -> bool:
    events = run_dir / "events.jsonl"
    if not events.is_file():
        return False
    return any(json.loads(line).get("event") == "fire" for line in events.read_text().splitlines() if line.strip())


def cmd_picard(args) -> int:
    cfg = _resolve(args)
    out = Path(cfg.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.save(cfg, out / "config.toml")
    state, forcing, pot = _setup(cfg)
    res = picard_solve(state, cfg.make_picard(), forcing, pot)
    with open(out / "picard.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iteration", "distance", "factor"))
        for i, dist in enumerate(res.distances, start=1):
            factor = res.contraction_factors[i - 2] if i >= 2 else math.nan
            w.writerow((i, repr(float(dist)), repr(float(factor))))
    _write_json(
        out / "picard.json",
        {
            "converged": res.converged,
            "iterations": res.iterations,
            "message": res.message,
            "max_factor": max(res.contraction_factors) if res.contraction_factors else None,
        },
    )
    print(f"picard {'converged' if res.converged else 'diverged'} after {res.iterations} iterations ({res.message})")
    return EXIT_OK if res.converged else EXIT_DIVERGED


def _sweep_member(cfg_dict: dict) -> int:
    try:
        return execute_run(cfgmod.parse_dict(cfg_dict))
    except (cfgmod.ConfigError, ValueError) as exc:
        logger.error("sweep member failed: %s", exc)
        return EXIT_INVALID


def cmd_sweep(args) -> int:
    cfg = _resolve(args)
    if cfg.sweep is None:
        raise cfgmod.ConfigError("sweep", "config has no [sweep] table")
    base = Path(cfg.output["dir"])
    key, values, workers = cfg.sweep["key"], cfg.sweep["values"], cfg.sweep["workers"]
    members = []
    for i, val in enumerate(values):
        sub = cfg.with_override(key, val).to_dict()
        sub.pop("sweep", None)
        sub["output"]["dir"] = str(base / f"member_{i:03d}")
        members.append(cfgmod.parse_dict(sub).to_dict())
    if workers == 1:
        codes = [_sweep_member(m) for m in members]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_sweep_member, members))
    base.mkdir(parents=True, exist_ok=True)
    _write_json(
        base / "sweep.json",
        {"key": key, "members": [{"value": v, "dir": m["output"]["dir"], "exit": c} for v, m, c in zip(values, members, codes)]},
    )
    print(f"sweep over {key}: exit codes {codes}")
    return max(codes) if codes else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nematic2d", description="2D nematic liquid-crystal flow simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="TOML or JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides seed)")

    common(sub.add_parser("run", help="run a simulation"))
    v = sub.add_parser("verify", help="run post-hoc diagnostics on a run directory")
    v.add_argument("run_dir", help="directory written by 'run'")
    common(v, config_required=False)
    v.add_argument("--only", help=f"comma-separated subset of {','.join(CHECKS)}")
    common(sub.add_parser("picard", help="fixed-point iteration on the configured scenario"))
    common(sub.add_parser("sweep", help="run a parameter sweep from the [sweep] table"))
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    handlers = {"run": cmd_run, "verify": cmd_verify, "picard": cmd_picard, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args)
    except cfgmod.ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SnapshotError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
