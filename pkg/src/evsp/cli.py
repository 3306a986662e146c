"""Command-line entry point: generate, solve, sweep, evaluate.

Exit codes: 0 ok, 2 missing/unreadable files, 3 validation failure,
4 limits hit but a solution was still produced.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import bnp, report
from .degradation import FadingParams, monte_carlo_fade
from .instances import (Instance, ParseError, SoCPolicy, ValidationError,
                        generate_instance, read_instance, worst_case_projection,
                        write_instance)
from .network import build_all_graphs

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_LIMIT = 0, 2, 3, 4

PAPER_EPSILONS = (0.001, 0.005, 0.01, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.40, 0.50)


@dataclass
class RunConfig:
    command: str
    instance: Path | None = None
    solution: Path | None = None
    out: Path = Path(".")
    mode: str = "stochastic"
    epsilons: tuple[float, ...] = ()
    soc_range: str | None = None
    seed: int = 0
    n_trips: int = 60
    time_limit_s: float = 7200.0
    iterations: int = 1000
    jobs: int = 1
    verbose: bool = False


def _parse_range(text: str) -> tuple[int, int]:
    lo, _, up = text.partition("-")
    try:
        bounds = int(lo), int(up)
    except ValueError:
        raise ValidationError(f"bad SoC range '{text}', expected e.g. 20-80")
    if not (0 <= bounds[0] < bounds[1] <= 100):
        raise ValidationError(f"bad SoC range '{text}'")
    return bounds


def _with_range(instance: Instance, soc_range: str | None) -> Instance:
    if soc_range is None:
        return instance
    lo, up = _parse_range(soc_range)
    policy = replace(instance.policy, sigma_low=lo, sigma_up=up, sigma_init=up)
    return replace(instance, policy=policy)


def _load_instance(config: RunConfig) -> Instance:
    if config.instance is None or not config.instance.exists():
        raise FileNotFoundError(f"instance file {config.instance} not found")
    return _with_range(read_instance(config.instance), config.soc_range)


def _solve_one(instance: Instance, epsilon: float | None, mode: str,
               config: RunConfig):
    if mode == "deterministic":
        instance = worst_case_projection(instance)
        epsilon = 0.0
    graphs = build_all_graphs(instance)
    limits = bnp.Limits(time_limit_s=config.time_limit_s)
    log = (lambda m: print(m, file=sys.stderr)) if config.verbose else None
    solution = bnp.solve(instance, epsilon, limits, log)
    return instance, graphs, solution


def cmd_generate(config: RunConfig) -> int:
    policy = SoCPolicy()
    if config.soc_range:
        lo, up = _parse_range(config.soc_range)
        policy = replace(policy, sigma_low=lo, sigma_up=up, sigma_init=up)
    instance = generate_instance(config.n_trips, config.seed, policy)
    config.out.parent.mkdir(parents=True, exist_ok=True)
    write_instance(instance, config.out)
    print(f"wrote {config.out} ({len(instance.trips)} trips, "
          f"hash {instance.content_hash()})")
    return EXIT_OK


def cmd_solve(config: RunConfig) -> int:
    epsilon = config.epsilons[0] if config.epsilons else None
    instance, graphs, solution = _solve_one(_load_instance(config), epsilon,
                                            config.mode, config)
    if not solution.columns:
        print(f"no feasible solution found (status {solution.stats.status})")
        return EXIT_VALIDATION
    config.out.mkdir(parents=True, exist_ok=True)
    out = config.out / "solution.json"
    report.write_solution(out, solution, instance, graphs)
    s = solution.stats
    print(f"objective {solution.objective:.1f} vehicles {solution.n_vehicles} "
          f"gap {s.gap_pct:.2f}% nodes {s.bb_nodes} time {s.total_s:.1f}s -> {out}")
    return EXIT_OK if s.status in ("completed",) else EXIT_LIMIT


def cmd_evaluate(config: RunConfig) -> int:
    instance = _load_instance(config)
    if config.solution is None or not config.solution.exists():
        raise FileNotFoundError(f"solution file {config.solution} not found")
    graphs = build_all_graphs(instance)
    solution = report.read_solution(config.solution, instance, graphs)
    fade = monte_carlo_fade(solution.columns, instance, graphs,
                            iterations=config.iterations, seed=config.seed,
                            params=FadingParams(battery_kwh=instance.battery_kwh))
    config.out.mkdir(parents=True, exist_ok=True)
    rows = [{
        "schedule": s.schedule_idx,
        "daily_fade_kwh": f"{s.daily_fade_kwh:.6f}",
        "yearly_fade_kwh": f"{s.yearly_fade_kwh:.4f}",
        "overuse_frequency": f"{s.overuse_frequency:.6f}",
        "reported_survival": f"{solution.columns[s.schedule_idx].survival:.6f}",
    } for s in fade.per_schedule]
    meta = {"seed": config.seed, "instance": instance.content_hash(),
            "iterations": config.iterations, "epsilon": solution.epsilon}
    report.write_csv(config.out / "fade_report.csv", rows, list(rows[0].keys()), meta)
    report.fade_figure(fade, config.out / "fade_report.png")
    print(f"daily fade/EB {fade.daily_fade_per_vehicle_kwh:.4f} kWh, "
          f"yearly {fade.yearly_fade_per_vehicle_kwh:.2f} kWh "
          f"-> {config.out / 'fade_report.csv'}")
    return EXIT_OK


def _sweep_entry(args) -> dict:
    path, soc_range, epsilon, mode, seed, time_limit, iterations = args
    config = RunConfig("solve", instance=Path(path), soc_range=soc_range,
                       seed=seed, time_limit_s=time_limit, iterations=iterations)
    base = _with_range(read_instance(Path(path)), soc_range)
    row = {"epsilon": epsilon, "range": soc_range, "mode": mode,
           "objective": float("nan"), "improvement_pct": float("nan"),
           "n_vehicles": 0, "gap_pct": float("nan"),
           "daily_fade_kwh": float("nan"), "yearly_fade_kwh": float("nan"),
           "status": "failed"}
    try:
        instance, graphs, solution = _solve_one(base, epsilon, mode, config)
        if not solution.columns:
            row["status"] = solution.stats.status
            return row
        fade = monte_carlo_fade(solution.columns, instance, graphs,
                                iterations=iterations, seed=seed,
                                params=FadingParams(battery_kwh=instance.battery_kwh))
        row.update(objective=round(solution.objective, 4),
                   n_vehicles=solution.n_vehicles,
                   gap_pct=round(solution.stats.gap_pct, 4),
                   daily_fade_kwh=round(fade.daily_fade_per_vehicle_kwh, 6),
                   yearly_fade_kwh=round(fade.yearly_fade_per_vehicle_kwh, 4),
                   status=solution.stats.status)
    except Exception as exc:  # a failed entry must not kill the sweep
        row["status"] = f"error: {exc}"
    return row


def cmd_sweep(config: RunConfig) -> int:
    instance = _load_instance(config)
    epsilons = config.epsilons or PAPER_EPSILONS
    ranges = [config.soc_range] if config.soc_range else ["20-80", "30-80"]
    entries = []
    for rng in ranges:
        entries.append((str(config.instance), rng, 0.0, "deterministic",
                        config.seed, config.time_limit_s, config.iterations))
        for eps in epsilons:
            if eps > 0:
                entries.append((str(config.instance), rng, eps, "stochastic",
                                config.seed, config.time_limit_s, config.iterations))
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_sweep_entry, entries))
    else:
        rows = [_sweep_entry(e) for e in entries]

    for rng in ranges:
        base = next((r for r in rows if r["range"] == rng and r["mode"] ==
                     "deterministic" and r["objective"] == r["objective"]), None)
        for r in rows:
            if r["range"] == rng and base and r["objective"] == r["objective"]:
                r["improvement_pct"] = round(
                    100.0 * (base["objective"] - r["objective"]) / base["objective"], 4)
    config.out.mkdir(parents=True, exist_ok=True)
    meta = {"seed": config.seed, "instance": instance.content_hash(),
            "epsilons": ",".join(str(e) for e in epsilons),
            "ranges": ",".join(ranges), "time_limit_s": config.time_limit_s}
    fields = ["epsilon", "range", "mode", "objective", "improvement_pct",
              "n_vehicles", "gap_pct", "daily_fade_kwh", "yearly_fade_kwh", "status"]
    report.write_csv(config.out / "sweep.csv", rows, fields, meta)
    figures = report.sweep_figures(rows, config.out)
    print(f"wrote {config.out / 'sweep.csv'} and {len(figures)} figures")
    failed = [r for r in rows if r["status"].startswith(("failed", "error"))]
    return EXIT_OK if not failed else EXIT_LIMIT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evsp",
                                description="Chance-constrained electric bus scheduling")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", type=Path, default=Path("."))
        sp.add_argument("--verbose", action="store_true")

    g = sub.add_parser("generate", help="generate a random instance file")
    g.add_argument("--trips", type=int, default=60)
    g.add_argument("--range", dest="soc_range", default=None)
    common(g)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--instance", type=Path, required=True)
    s.add_argument("--epsilon", type=str, default=None)
    s.add_argument("--range", dest="soc_range", default=None)
    s.add_argument("--mode", choices=["stochastic", "deterministic"],
                   default="stochastic")
    s.add_argument("--time-limit", type=float, default=7200.0)
    common(s)

    w = sub.add_parser("sweep", help="solve across epsilon values and SoC ranges")
    w.add_argument("--instance", type=Path, required=True)
    w.add_argument("--epsilon", type=str, default=None,
                   help="comma-separated thresholds (default: the standard 11)")
    w.add_argument("--range", dest="soc_range", default=None,
                   help="restrict to one SoC range (default: 20-80 and 30-80)")
    w.add_argument("--time-limit", type=float, default=7200.0)
    w.add_argument("--iterations", type=int, default=1000)
    w.add_argument("--jobs", type=int, default=1)
    common(w)

    e = sub.add_parser("evaluate", help="Monte Carlo fade of a solved schedule set")
    e.add_argument("--instance", type=Path, required=True)
    e.add_argument("--solution", type=Path, required=True)
    e.add_argument("--range", dest="soc_range", default=None)
    e.add_argument("--iterations", type=int, default=1000)
    common(e)
    return p


def _config_from_args(args) -> RunConfig:
    epsilons: tuple[float, ...] = ()
    if getattr(args, "epsilon", None):
        epsilons = tuple(float(v) for v in args.epsilon.split(","))
        if any(not (0.0 <= e < 1.0) for e in epsilons):
            raise ValidationError("epsilon values must lie in [0, 1)")
    mode = getattr(args, "mode", "stochastic")
    if mode == "deterministic" and any(e > 0 for e in epsilons):
        raise ValidationError("deterministic mode forces epsilon = 0")
    return RunConfig(
        command=args.command,
        instance=getattr(args, "instance", None),
        solution=getattr(args, "solution", None),
        out=args.out,
        mode=mode,
        epsilons=epsilons,
        soc_range=getattr(args, "soc_range", None),
        seed=args.seed,
        n_trips=getattr(args, "trips", 60),
        time_limit_s=getattr(args, "time_limit", 7200.0),
        iterations=getattr(args, "iterations", 1000),
        jobs=getattr(args, "jobs", 1),
        verbose=args.verbose)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"generate": cmd_generate, "solve": cmd_solve,
                "sweep": cmd_sweep, "evaluate": cmd_evaluate}
    try:
        config = _config_from_args(args)
        return handlers[args.command](config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
