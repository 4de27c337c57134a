"""Readers for the donorgame CSV schemas (schema_version 1).

All tables start with '#' comment lines (at minimum the schema version)
followed by a header row; trailing comment lines carry table-level
extras. Readers validate that the columns a figure needs actually exist
and fail loudly on empty tables.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass


class TableError(Exception):
    pass


def _read_rows(path: str):
    comments = []
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = None
        for line in fh:
            stripped = line.rstrip("\n")
            if not stripped:
                continue
            if stripped.startswith("#"):
                comments.append(stripped)
                continue
            fields = next(csv.reader([stripped]))
            if header is None:
                header = fields
            else:
                rows.append(dict(zip(header, fields)))
    if header is None:
        raise TableError(f"{path}: no header row")
    return header, rows, comments


def _require(header, columns, path):
    missing = [c for c in columns if c not in header]
    if missing:
        raise TableError(f"{path}: missing columns {missing}")


def _float(value: str):
    return float(value) if value != "" else None


@dataclass
class SummaryTable:
    generations: list
    mean: list
    sem: list  # per-generation float or None
    n_runs: int


def read_summary(path: str) -> SummaryTable:
    header, rows, _ = _read_rows(path)
    _require(header, ["generation", "mean_final_resources_mean", "mean_final_resources_sem", "n_runs"], path)
    if not rows:
        raise TableError(f"{path}: empty table")
    return SummaryTable(
        generations=[int(r["generation"]) for r in rows],
        mean=[float(r["mean_final_resources_mean"]) for r in rows],
        sem=[_float(r["mean_final_resources_sem"]) for r in rows],
        n_runs=int(rows[0]["n_runs"]),
    )


@dataclass
class StatsTable:
    runs: dict  # label -> {generation: value}
    generations: list


def read_generation_stats(path: str, column: str = "mean_final_resources") -> StatsTable:
    header, rows, _ = _read_rows(path)
    _require(header, ["run", "generation", column], path)
    if not rows:
        raise TableError(f"{path}: empty table")
    runs: dict = {}
    for r in rows:
        runs.setdefault(r["run"], {})[int(r["generation"])] = float(r[column])
    generations = sorted({g for series in runs.values() for g in series})
    return StatsTable(runs=runs, generations=generations)


@dataclass
class MatrixTable:
    agents: list
    slots: dict  # agent -> int
    generations: list
    cells: dict  # agent -> {generation: float}


def read_donation_matrix(path: str) -> MatrixTable:
    header, rows, _ = _read_rows(path)
    _require(header, ["agent", "slot"], path)
    gen_columns = [c for c in header if c.startswith("g") and c[1:].isdigit()]
    if not gen_columns:
        raise TableError(f"{path}: no generation columns (g1, g2, ...)")
    if not rows:
        raise TableError(f"{path}: empty table")
    agents, slots, cells = [], {}, {}
    for r in rows:
        agent = r["agent"]
        agents.append(agent)
        slots[agent] = int(r["slot"])
        cells[agent] = {
            int(c[1:]): float(r[c]) for c in gen_columns if r.get(c, "") != ""
        }
    generations = sorted(int(c[1:]) for c in gen_columns)
    return MatrixTable(agents=agents, slots=slots, generations=generations, cells=cells)
