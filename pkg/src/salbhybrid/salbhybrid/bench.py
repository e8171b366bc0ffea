"""
Benchmark harness: reduces and solves every instance of a manifest and renders
the problem-size table and the running-time table.
"""
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields, replace
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field
from tabulate import tabulate
from tqdm import tqdm

from salbhybrid.bnc import minimize_stations
from salbhybrid.config import SolverConfig
from salbhybrid.cuts import CutPool
from salbhybrid.errors import InfeasibleError, SalbError
from salbhybrid.hybrid import reduce_problem
from salbhybrid.instance import read_instance

logger = logging.getLogger(__name__)


# -------------------
# Rows
# -------------------

@dataclass
class BenchRow:
    name: str
    n: int
    ct: Optional[int]
    m: int
    initial: int
    after_cp: int
    after_lp_standard: Optional[int] = None
    after_lp_all: Optional[int] = None
    cp_ms: float = 0.0
    cut_ms: float = 0.0
    total_ms: float = 0.0
    stations: Optional[int] = None
    status: str = ""

    def problems(self):
        out = []
        sizes = [self.initial, self.after_cp, self.after_lp_standard, self.after_lp_all]
        present = [s for s in sizes if s is not None]
        if any(a < b for a, b in zip(present, present[1:])):
            out.append(f"{self.name}: size columns increase: {present}")
        if present and present[-1] < self.n:
            out.append(f"{self.name}: a task lost every station")
        for label in ("cp_ms", "cut_ms", "total_ms"):
            if getattr(self, label) < 0:
                out.append(f"{self.name}: negative {label}")
        return out

    def to_line(self):
        """Tab-separated machine line; missing values are empty."""
        out = []
        for value in astuple(self):
            if value is None:
                out.append("")
            elif isinstance(value, float):
                out.append(f"{value:.1f}")
            else:
                out.append(str(value))
        return "\t".join(out)

    @classmethod
    def from_line(cls, line):
        parts = line.rstrip("\n").split("\t")
        columns = fields(cls)
        if len(parts) != len(columns):
            raise SalbError(f"bench line has {len(parts)} fields, expected {len(columns)}")
        values = {}
        for column, raw in zip(columns, parts):
            if column.name in ("name", "status"):
                values[column.name] = raw
            elif raw == "":
                values[column.name] = None
            elif column.name.endswith("_ms"):
                values[column.name] = float(raw)
            else:
                values[column.name] = int(raw)
        return cls(**values)


HEADER = "\t".join(f.name for f in fields(BenchRow))


def format_min_sec(ms):
    """Milliseconds as m:ss.s for display."""
    seconds = max(0.0, ms) / 1000.0
    minutes = int(seconds // 60)
    return f"{minutes}:{seconds - 60 * minutes:04.1f}"


# -------------------
# Manifest
# -------------------

class ManifestEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    file: str
    format: Literal["native", "precedence_list", "scholl"] = "native"
    cycle_time: Optional[int] = Field(None, ge=1)
    stations: Optional[int] = Field(None, ge=1)


def load_manifest(path):
    """Entries of a YAML manifest; file paths are taken relative to it."""
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or []
    if isinstance(data, dict):
        data = data.get("instances", [])
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for raw in data:
        entry = ManifestEntry.model_validate(raw)
        if not os.path.isabs(entry.file):
            entry = entry.model_copy(update={"file": os.path.join(base, entry.file)})
        entries.append(entry)
    return entries


# -------------------
# Runs
# -------------------

def reduce_row(inst, cfg, cut_mode="all"):
    """
    Reduction columns for one instance. cut_mode 'all' runs the standard stage
    and then the all-families stage from where it ended, so the all column
    never exceeds the standard one. 'standard' runs only the first stage,
    'none' stops after propagation.
    """
    ct = inst.capacity[1] if len(set(inst.capacity.values())) == 1 else None
    deadline = time.monotonic() + cfg.time_limit if cfg.time_limit else None
    if cut_mode == "none":
        report = reduce_problem(inst, "none", cfg.with_overrides(reduction_passes=0)).report
        return BenchRow(inst.name, inst.n, ct, inst.m, report.initial_size, report.after_cp,
                        cp_ms=report.cp_ms, total_ms=report.total_ms)

    first = reduce_problem(inst, "standard", cfg, CutPool(), deadline=deadline)
    standard = first.report
    row = BenchRow(inst.name, inst.n, ct, inst.m, standard.initial_size, standard.after_cp,
                   after_lp_standard=standard.after_lp, cp_ms=standard.cp_ms,
                   cut_ms=standard.lp_ms, total_ms=standard.total_ms)
    if cut_mode == "all":
        full = reduce_problem(inst, "all", cfg, first.pool, first.store, deadline).report
        row.after_lp_all = full.after_lp
        row.cut_ms += full.cp_ms + full.lp_ms
        row.total_ms += full.total_ms
    return row


def bench_entry(entry, cfg):
    inst = read_instance(entry.file, entry.format, entry.cycle_time, entry.stations)
    if inst.name != entry.name:
        inst = replace(inst, name=entry.name)
    try:
        row = reduce_row(inst, cfg, "all")
    except InfeasibleError as e:
        logger.warning(f"{entry.name}: reduction proved infeasibility ({e})")
        return None
    start = time.monotonic()
    try:
        report = minimize_stations(inst, cfg)
        row.stations = report.stations_used
        row.status = report.status
    except InfeasibleError:
        row.status = "infeasible"
    row.total_ms = row.cp_ms + row.cut_ms + (time.monotonic() - start) * 1000.0
    return row


def run_bench(manifest_path, cfg=None, workers=1, progress=True):
    """
    Rows in manifest order. Entries whose file is missing are skipped with a
    warning; a manifest with nothing runnable is an error.
    """
    cfg = cfg or SolverConfig()
    entries = load_manifest(manifest_path)
    runnable = []
    for entry in entries:
        if os.path.exists(entry.file):
            runnable.append(entry)
        else:
            logger.warning(f"skipping {entry.name}: {entry.file} not found")
    if not runnable:
        raise SalbError(f"no runnable entries in {manifest_path}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(lambda e: bench_entry(e, cfg), runnable),
                                total=len(runnable), disable=not progress, desc="bench"))
    else:
        results = [bench_entry(e, cfg) for e in tqdm(runnable, disable=not progress, desc="bench")]

    rows = [r for r in results if r is not None]
    for row in rows:
        for problem in row.problems():
            logger.warning(problem)
    return rows


def render_tables(rows: List[BenchRow]):
    sizes = [[r.name, r.n, "" if r.ct is None else r.ct, r.m, r.initial, r.after_cp,
              _blank(r.after_lp_standard), _blank(r.after_lp_all)] for r in rows]
    times = [[r.name, "" if r.ct is None else r.ct, _blank(r.stations), r.status,
              format_min_sec(r.cp_ms), format_min_sec(r.cut_ms), format_min_sec(r.total_ms)] for r in rows]
    size_table = tabulate(sizes, headers=["Instance", "n", "CT", "m", "Initial size", "After CP",
                                          "After LP (standard)", "After LP (all)"])
    time_table = tabulate(times, headers=["Instance", "CT", "Stations", "Status", "CP", "Cuts", "Total"])
    return f"Reducing problem size\n\n{size_table}\n\nRunning time in min:sec\n\n{time_table}\n"


def _blank(value):
    return "" if value is None else value
