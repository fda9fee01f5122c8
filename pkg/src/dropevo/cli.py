"""Command-line driver for the closed loop and the analysis pipeline.

Subcommands: evolve, landscape, analyze, gcode. All outputs are machine
readable (CSV/JSON/PGM); every output directory gets a run manifest with the
config snapshot and seed needed to reproduce the data files byte for byte.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__, arena, evaluators, formats, ga, gcode, landscape, stats
from .formulation import Formulation, normalize

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path}: top level must be an object")
    return cfg


def _section(cfg: dict, name: str) -> dict:
    section = cfg.get(name, {})
    if not isinstance(section, dict):
        raise UsageError(f"config section {name!r} must be an object")
    return section


def _write(out_dir: Path, name: str, data) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data)
    return path


def _manifest(out_dir: Path, command: str, config: dict, seed, outputs: list[str],
              extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "rng": ga.RNG_ALGORITHM,
        "version": __version__,
        "outputs": sorted(outputs),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    _write(out_dir, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# evolve

def cmd_evolve(args) -> int:
    cfg_file = _load_config(args.config)
    try:
        ga_cfg = ga.config_from_dict(_section(cfg_file, "ga"))
    except ga.GAError as exc:
        raise UsageError(f"config {args.config}: ga: {exc}") from exc
    if args.seed is not None:
        ga_cfg = ga.with_seed(ga_cfg, args.seed)
    arena_section = _section(cfg_file, "arena")
    try:
        arena_cfg = arena.ArenaConfig(**{k: tuple(map(tuple, v)) if k == "injection_positions" else v
                                         for k, v in arena_section.items()})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config {args.config}: arena: {exc}") from exc
    eval_section = _section(cfg_file, "evaluation")

    out_dir = Path(args.out_dir)
    outputs = []
    histories = []
    for run in range(ga_cfg.runs):
        setup = evaluators.ExperimentSetup(
            objective=args.objective,
            arena_config=arena_cfg,
            master_seed=ga_cfg.rng_seed,
            run=run,
            replicates=ga_cfg.replicates_per_recipe,
            behavior_map=eval_section.get("behavior_map", "oils"),
            unimodal_optimum=tuple(eval_section.get("unimodal_optimum",
                                                    (0.1, 0.6, 0.2, 0.1))),
            unimodal_width=eval_section.get("unimodal_width", 0.35),
        )
        batch = evaluators.make_batch_evaluator(setup, ga_cfg, jobs=args.jobs)
        history = ga.run_ga(ga_cfg, evaluator=None, run=run, evaluate_batch=batch)
        histories.append(history)
        name = f"history_run{run}.csv"
        _write(out_dir, name, ga.history_to_csv(history))
        outputs.append(name)

    if args.emit_gcode:
        gdir = out_dir / "gcode"
        layout = gcode.default_layout()
        seen = set()
        for history in histories:
            for gen in history.generations:
                for ind in gen:
                    if ind.id in seen:
                        continue
                    seen.add(ind.id)
                    f = normalize(ind.genome)
                    _write(gdir, f"experiment_{ind.id}.gcode",
                           gcode.compile_experiment(f, layout))
        outputs.append("gcode/")

    recipes_per_run = ga_cfg.recipes_per_run
    total_recipes = recipes_per_run * ga_cfg.runs
    experiments = total_recipes * ga_cfg.replicates_per_recipe
    _manifest(out_dir, "evolve", cfg_file, ga_cfg.rng_seed, outputs, extra={
        "objective": args.objective,
        "bookkeeping": {
            "recipes_per_run": recipes_per_run,
            "total_recipes": total_recipes,
            "experiments": experiments,
            "droplets": experiments * arena_cfg.injection_count,
        },
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# landscape

def _load_histories(paths):
    parsed = []
    for path in paths:
        violations = formats.validate_file(path, "history")
        if violations:
            raise FileFormatError(path, violations)
        parsed.append(ga.history_from_csv(Path(path).read_text()))
    return parsed


class FileFormatError(Exception):
    def __init__(self, path, violations):
        super().__init__(f"{path}: " + "; ".join(violations[:5]))
        self.violations = violations


def cmd_landscape(args) -> int:
    parsed = _load_histories(args.history)
    seen = {}
    for hist in parsed:
        for gen in hist["generations"].values():
            for ind_id, loci, fitness in gen:
                seen[(hist["run"], ind_id)] = (loci, fitness)
    X = np.array([normalize(loci).proportions for loci, _ in seen.values()])
    y = np.array([fitness for _, fitness in seen.values()])
    model = landscape.fit(X, y, lam=args.lam, sigma=args.sigma)
    lattices = [landscape.face_grid(model, face, args.resolution)
                for face in range(4)]
    islands = landscape.catchment_map(lattices)
    out_dir = Path(args.out_dir)
    outputs = []
    outputs.append(_write(out_dir, "landscape.csv",
                          landscape.landscape_csv(lattices, islands)).name)
    outputs.append(_write(out_dir, "islands.json",
                          landscape.island_summary_json(islands)).name)
    for lat in lattices:
        outputs.append(_write(out_dir, f"face_{lat.face}.pgm",
                              landscape.lattice_to_pgm(lat)).name)
    _manifest(out_dir, "landscape",
              {"sigma": args.sigma, "lambda": args.lam, "resolution": args.resolution,
               "face_axes": {face: landscape.face_axes(face) for face in range(4)},
               "history_files": [str(p) for p in args.history]},
              args.seed, outputs,
              extra={"training_points": int(len(y))})
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze

def cmd_analyze(args) -> int:
    parsed = _load_histories(args.history)
    shims = []
    for hist in parsed:
        gens = [
            [SimpleNamespace(fitness=fitness) for _, _, fitness in hist["generations"][g]]
            for g in sorted(hist["generations"])
        ]
        shims.append(SimpleNamespace(generations=gens))
    report = stats.trajectory_report(shims)
    out_dir = Path(args.out_dir)
    outputs = [
        _write(out_dir, "report.json", stats.report_json(report)).name,
        _write(out_dir, "bands.csv", stats.bands_csv(report)).name,
    ]
    _manifest(out_dir, "analyze",
              {"history_files": [str(p) for p in args.history]},
              args.seed, outputs)
    return EXIT_OK


# ---------------------------------------------------------------------------
# gcode

def cmd_gcode(args) -> int:
    layout = (gcode.StageLayout.from_json(Path(args.layout).read_text())
              if args.layout else gcode.default_layout())
    if args.gcode_cmd == "compile":
        parts = []
        if args.formulation:
            props = normalize([float(v) for v in args.formulation.split(",")])
            parts.append(gcode.compile_experiment(props, layout))
        if args.cleaning:
            parts.append(gcode.compile_cleaning_cycle(layout))
        if not parts:
            raise UsageError("gcode compile needs --formulation and/or --cleaning")
        program = "".join(parts)
        if args.output:
            Path(args.output).write_text(program)
        else:
            sys.stdout.write(program)
        return EXIT_OK
    if args.gcode_cmd == "parse":
        failures = 0
        for path in args.files:
            errors = gcode.check_program(Path(path).read_text())
            for err in errors:
                print(f"{path}: {err}", file=sys.stderr)
            failures += len(errors)
        print(f"{len(args.files)} file(s), {failures} error(s)")
        return EXIT_OK if failures == 0 else EXIT_DATA
    if args.gcode_cmd == "exec":
        robot = gcode.VirtualRobot(layout=layout)
        for path in args.files:
            robot.execute(Path(path).read_text())
        sys.stdout.write(robot.state.to_json())
        if args.out_dir:
            _write(Path(args.out_dir), "events.csv", robot.events_csv())
        return EXIT_OK
    raise UsageError(f"unknown gcode subcommand {args.gcode_cmd!r}")


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dropevo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run the closed evolution loop")
    p.add_argument("--objective", choices=sorted(("division", "movement",
                                                  "directionality")),
                   default="movement")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--emit-gcode", action="store_true",
                   help="also write one experiment G-code script per recipe")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("landscape", help="fit the kernel model and map islands")
    p.add_argument("history", nargs="+", help="history CSV files")
    p.add_argument("--sigma", type=float, default=landscape.DEFAULT_SIGMA)
    p.add_argument("--lambda", dest="lam", type=float, default=landscape.DEFAULT_LAMBDA)
    p.add_argument("--resolution", type=int, default=landscape.DEFAULT_RESOLUTION)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("analyze", help="trajectory statistics report")
    p.add_argument("history", nargs="+", help="history CSV files")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gcode", help="compile, check or execute robot programs")
    gsub = p.add_subparsers(dest="gcode_cmd", required=True)
    pc = gsub.add_parser("compile")
    pc.add_argument("--formulation", default=None,
                    help="comma-separated raw proportions, e.g. 1,0,0,1")
    pc.add_argument("--cleaning", action="store_true")
    pc.add_argument("--layout", default=None)
    pc.add_argument("--output", "-o", default=None)
    pc.set_defaults(func=cmd_gcode)
    pp = gsub.add_parser("parse")
    pp.add_argument("files", nargs="+")
    pp.add_argument("--layout", default=None)
    pp.set_defaults(func=cmd_gcode)
    pe = gsub.add_parser("exec")
    pe.add_argument("files", nargs="+")
    pe.add_argument("--layout", default=None)
    pe.add_argument("--out-dir", default=None)
    pe.set_defaults(func=cmd_gcode)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (landscape.SolveFailure, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileFormatError, formats.UnknownFormat, gcode.GcodeError,
            ga.GAError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
