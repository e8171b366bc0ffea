import os
import sys
import time

import click
from pydantic import ValidationError

from salbhybrid.bench import HEADER, reduce_row, render_tables, run_bench
from salbhybrid.bnc import minimize_stations
from salbhybrid.config import SolverConfig
from salbhybrid.errors import InfeasibleError, InstanceError, SalbError
from salbhybrid.generate import generate_text, parse_time_range
from salbhybrid.instance import read_instance
from salbhybrid.log import setup_logging

# -------------------
# Exit codes
# -------------------
EXIT_SOLVED = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3

HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT_CONFIG = os.path.join(HERE, "config.yaml")
DEFAULT_MANIFEST = os.path.join(HERE, "data", "manifest.yaml")


def _fail(message, code=EXIT_ERROR):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def load_config(path, **overrides):
    """Config file (when present) with the command-line flags on top."""
    try:
        if path is None and os.path.exists(DEFAULT_CONFIG):
            path = DEFAULT_CONFIG
        cfg = SolverConfig.from_yaml(path) if path else SolverConfig()
        return cfg.with_overrides(**overrides)
    except (OSError, ValidationError) as e:
        _fail(f"bad configuration: {e}")


def load_instance(path, fmt, cycle_time, stations):
    try:
        return read_instance(path, fmt, cycle_time=cycle_time, stations=stations)
    except InstanceError as e:
        _fail(f"{path}: {e}")
    except OSError as e:
        _fail(str(e))


def instance_options(command):
    options = [
        click.argument("path", type=click.Path(dir_okay=False)),
        click.option("--format", "fmt", type=click.Choice(["native", "scholl"]), default="native",
                     help="native: eligible sets and capacities; scholl: precedence list."),
        click.option("--cycle-time", type=int, default=None, help="Overrides every station capacity."),
        click.option("--stations", type=int, default=None, help="Overrides the station count."),
        click.option("--mode", type=click.Choice(["hybrid", "ip", "cp"]), default=None),
        click.option("--cuts", type=click.Choice(["none", "standard", "all"]), default=None),
        click.option("--time-limit", type=float, default=None, help="Seconds."),
        click.option("--out", type=click.Path(dir_okay=False), default=None),
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None),
    ]
    for option in reversed(options):
        command = option(command)
    return command


@click.group()
def cli():
    """Exact assembly line balancing with CP propagation, LP bounds and cuts."""
    setup_logging()


@cli.command()
@instance_options
def solve(path, fmt, cycle_time, stations, mode, cuts, time_limit, out, config_path):
    """Minimise the number of stations."""
    cfg = load_config(config_path, mode=mode, cut_mode=cuts, time_limit=time_limit)
    inst = load_instance(path, fmt, cycle_time, stations)
    start = time.monotonic()
    try:
        report = minimize_stations(inst, cfg)
    except InfeasibleError as e:
        click.echo(f"infeasible: {e}")
        sys.exit(EXIT_INFEASIBLE)
    except SalbError as e:
        _fail(str(e))
    elapsed_ms = (time.monotonic() - start) * 1000.0

    lines = []
    if report.assignment is not None:
        lines.extend(f"{j} {i}" for j, i in sorted(report.assignment.station_of.items()))
    summary = (f"stations={report.stations_used} nodes={report.node_count} "
               f"cuts={report.cut_count} time_ms={elapsed_ms:.0f}")
    lines.append(summary)
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
        click.echo(summary)
    else:
        click.echo(text, nl=False)
    if report.status == "limit":
        click.echo("limit reached before optimality was proven", err=True)
        sys.exit(EXIT_LIMIT)
    sys.exit(EXIT_SOLVED)


@cli.command()
@instance_options
def reduce(path, fmt, cycle_time, stations, mode, cuts, time_limit, out, config_path):
    """Report how far propagation and LP bounds shrink the station domains."""
    cfg = load_config(config_path, mode=mode, time_limit=time_limit)
    inst = load_instance(path, fmt, cycle_time, stations)
    try:
        row = reduce_row(inst, cfg, cuts or "all")
    except InfeasibleError as e:
        click.echo(f"infeasible: {e}")
        sys.exit(EXIT_INFEASIBLE)
    text = f"{HEADER}\n{row.to_line()}\n"
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
    click.echo(text, nl=False)


@cli.command()
@click.argument("manifest", type=click.Path(dir_okay=False), default=DEFAULT_MANIFEST)
@click.option("--mode", type=click.Choice(["hybrid", "ip", "cp"]), default=None)
@click.option("--time-limit", type=float, default=None, help="Seconds per instance.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Machine-readable rows.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
def bench(manifest, mode, time_limit, workers, out, config_path):
    """Run every instance of a manifest and print both tables."""
    cfg = load_config(config_path, mode=mode, time_limit=time_limit)
    try:
        rows = run_bench(manifest, cfg, workers=workers)
    except (SalbError, OSError, ValidationError) as e:
        _fail(str(e))
    click.echo(render_tables(rows))
    lines = "\n".join([HEADER] + [row.to_line() for row in rows]) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(lines)
    else:
        click.echo(lines, nl=False)


@cli.command()
@click.option("--tasks", type=int, required=True)
@click.option("--density", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--time-range", default="1..9", show_default=True, help="LO..HI")
@click.option("--cycle-time", type=int, default=None)
@click.option("--stations", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def gen(tasks, density, seed, time_range, cycle_time, stations, out):
    """Write a seeded random instance in native format."""
    try:
        text = generate_text(tasks, density, seed, parse_time_range(time_range), cycle_time, stations)
    except InstanceError as e:
        _fail(str(e))
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    cli()
