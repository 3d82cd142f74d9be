"""Command-line entry point: ``phenopoiesis <subcommand>``.

Exit codes: 0 ok, 1 invalid configuration or arguments, 2 file-system
trouble, 3 a run broke an internal invariant.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import __version__
from .config import OUTPUT_DIR_ENV, PRESETS, ConfigError, ExperimentConfig, load_config, preset
from .grids import SHAPE_IDS, canonical_targets, dump_shapes, load_shapes, to_ascii
from .primitives import compose, Composition, PlacedPrimitive, primitive_slots
from .reporting import TABLES, MissingRunError, load_run_dir, plot_data, report

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INVARIANT = 0, 1, 2, 3


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser):
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "output_dir":
            continue
        default_type = type(getattr(ExperimentConfig(), f.name))
        if default_type is bool:
            p.add_argument(_flag(f.name), dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif default_type is list:
            p.add_argument(_flag(f.name), dest=f.name, nargs="+", default=None,
                           type=int if f.name == "base_seeds" else str)
        elif f.name == "shape_file":
            p.add_argument(_flag(f.name), dest=f.name, default=None)
        else:
            p.add_argument(_flag(f.name), dest=f.name, type=default_type, default=None)
    p.add_argument("-o", "--output-dir", dest="output_dir", default=None)


def _overrides(args) -> dict:
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    return {k: v for k, v in vars(args).items() if k in names and v is not None and k != "output_dir"}


def resolve_configs(args) -> list[ExperimentConfig]:
    """Config file, then preset, then the output-dir variable, then flags; later wins."""
    base = load_config(args.config) if args.config else None
    cfgs = preset(args.preset, base) if args.preset else [base or ExperimentConfig()]
    changes = _overrides(args)
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        changes["output_dir"] = env_dir
    if args.output_dir:
        changes["output_dir"] = args.output_dir
    return [c.replace(**changes).validate() for c in cfgs]


# -- subcommands -------------------------------------------------------------


def cmd_run(args) -> int:
    from .harness import run_experiment

    for cfg in resolve_configs(args):
        res = run_experiment(cfg)
        print(f"{cfg.name}: {len(res.replicates)} replicate runs in {res.duration:.1f}s -> {res.path}")
    return EXIT_OK


def cmd_report(args) -> int:
    if args.table != "all":
        print(report(args.run_dir, args.table))
        return EXIT_OK
    load_run_dir(args.run_dir)  # fails early on a missing or empty directory
    for t in TABLES:
        try:
            text = report(args.run_dir, t)
        except MissingRunError:
            continue
        print(f"## {t}\n\n{text}\n")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    for p in plot_data(args.run_dir, args.out):
        print(p)
    return EXIT_OK


def cmd_shapes(args) -> int:
    shapes = list(load_shapes(args.file).values()) if args.file else canonical_targets(SHAPE_IDS)
    if args.dump:
        sys.stdout.write(dump_shapes(shapes))
        return EXIT_OK
    for s in shapes:
        print(f"{s.id} ({s.cell_count} cells)\n{to_ascii(s.pattern)}\n")
    return EXIT_OK


def cmd_primitives(args) -> int:
    for i, p in enumerate(primitive_slots()):
        grid = compose(Composition((PlacedPrimitive(p, (0, 0)),)))
        box = grid[: p.extent[0], : p.extent[1]]
        art = "\n".join("".join("#" if v else "." for v in row) for row in box)
        print(f"slot {i:2d}  {p}\n" + "\n".join("    " + line for line in art.splitlines()))
    return EXIT_OK


def cmd_dump_epigenome(args) -> int:
    path = Path(args.run_dir)
    files = [path] if path.is_file() else sorted(path.glob("**/epigenomes.json"))
    if not files:
        raise MissingRunError(f"no epigenome snapshots under {path}")
    out = {}
    for f in files:
        data = json.loads(f.read_text())
        for key, epi in data["epigenomes"].items():
            if args.replicate and not key.endswith("/" + args.replicate):
                continue
            out[f"{f.parent.name}/{key}"] = epi
    json.dump(out, sys.stdout, indent=1)
    print()
    return EXIT_OK


def cmd_config(args) -> int:
    if args.defaults:
        sys.stdout.write(ExperimentConfig().to_yaml())
        return EXIT_OK
    cfgs = resolve_configs(args)
    for i, c in enumerate(cfgs):
        # several documents when a preset expands to more than one experiment
        sys.stdout.write(("---\n" if i else "") + c.to_yaml())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phenopoiesis", description="Phenotype-first evolution experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write its artifacts")
    run.add_argument("-c", "--config", help="YAML config file")
    run.add_argument("-p", "--preset", choices=sorted(PRESETS), help="named experiment set")
    _add_config_flags(run)
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="render a paper-style table from a run directory")
    rep.add_argument("run_dir")
    rep.add_argument("-t", "--table", choices=(*TABLES, "all"), default="all")
    rep.set_defaults(func=cmd_report)

    pd = sub.add_parser("plot-data", help="write tidy fitness curves and switch annotations")
    pd.add_argument("run_dir")
    pd.add_argument("--out", help="destination directory (default: the run directory)")
    pd.set_defaults(func=cmd_plot_data)

    sh = sub.add_parser("shapes", help="show target shapes")
    sh.add_argument("-f", "--file", help="shape-definition YAML file")
    sh.add_argument("--dump", action="store_true", help="print as a shape-definition file")
    sh.set_defaults(func=cmd_shapes)

    pr = sub.add_parser("primitives", help="list the primitive catalog")
    pr.set_defaults(func=cmd_primitives)

    de = sub.add_parser("dump-epigenome", help="print stored best-organism pattern libraries")
    de.add_argument("run_dir")
    de.add_argument("-r", "--replicate", help="replicate id, e.g. 42-0")
    de.set_defaults(func=cmd_dump_epigenome)

    cf = sub.add_parser("config", help="print resolved, default or preset configuration")
    cf.add_argument("--defaults", action="store_true")
    cf.add_argument("-c", "--config", help="YAML config file")
    cf.add_argument("-p", "--preset", choices=sorted(PRESETS))
    _add_config_flags(cf)
    cf.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    from .harness import InvariantViolation

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as e:
        print(f"invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (OSError, MissingRunError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
