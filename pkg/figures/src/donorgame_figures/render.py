"""Figure rendering.

Three kinds: `curves` (per-generation mean with a shaded SEM band, one
curve per input summary table), `spaghetti` (one line per run plus a
dotted cross-run average, from a generation-stats table), and `heatmap`
(agent-slot x generation donation fractions with black boundary marks
where a slot changed occupant, from a donation-matrix table).

Every render also writes a sidecar `<output>.data.json` holding exactly
the numbers that were plotted, so tests (and cautious readers) can check
the figure's data against its input tables without parsing pixels.
Rendering is deterministic: repeated renders of one spec produce
byte-identical files with the same toolchain.
"""

from __future__ import annotations

import json
import os
import warnings

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "donorgame-figures"

import matplotlib.pyplot as plt
from matplotlib import colormaps

from .spec import FigureSpec
from .tables import read_donation_matrix, read_generation_stats, read_summary

_CYCLE = ("#4682b4", "#fa8072", "#8fbc8f", "#daa520", "#ba55d2", "#5f9ea0")


def _finish(fig, spec: FigureSpec, sidecar: dict) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(spec.output)), exist_ok=True)
    metadata = {"Date": None} if spec.image_format == "svg" else None
    fig.savefig(spec.output, format=spec.image_format, dpi=120, metadata=metadata)
    plt.close(fig)
    with open(spec.sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return spec.output


def _render_curves(spec: FigureSpec) -> str:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series = []
    for i, (path, label) in enumerate(spec.inputs):
        table = read_summary(path)
        color = _CYCLE[i % len(_CYCLE)]
        ax.plot(table.generations, table.mean, color=color, linewidth=1.6, label=label)
        has_band = all(s is not None for s in table.sem)
        if has_band:
            lower = [m - s for m, s in zip(table.mean, table.sem)]
            upper = [m + s for m, s in zip(table.mean, table.sem)]
            ax.fill_between(table.generations, lower, upper, color=color, alpha=0.2, linewidth=0)
        else:
            warnings.warn(
                f"{path}: SEM column empty (single run); drawing line without band",
                stacklevel=2,
            )
        series.append(
            {
                "label": label,
                "generations": table.generations,
                "mean": table.mean,
                "sem": table.sem if has_band else None,
                "n_runs": table.n_runs,
            }
        )
    ax.set_xlabel(spec.x_label or "Generation")
    ax.set_ylabel(spec.y_label or "Average final resources")
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(loc="upper left", frameon=False)
    ax.spines[["top", "right"]].set_visible(False)
    return _finish(fig, spec, {"kind": "curves", "series": series})


def _render_spaghetti(spec: FigureSpec) -> str:
    path, _label = spec.inputs[0]
    table = read_generation_stats(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    runs_sidecar = {}
    for i, run in enumerate(sorted(table.runs)):
        values = [table.runs[run].get(g) for g in table.generations]
        ax.plot(table.generations, values, color=_CYCLE[i % len(_CYCLE)], linewidth=1.4, label=run)
        runs_sidecar[run] = values
    average = [
        sum(table.runs[r][g] for r in table.runs if g in table.runs[r])
        / sum(1 for r in table.runs if g in table.runs[r])
        for g in table.generations
    ]
    ax.plot(table.generations, average, color="black", linewidth=2.0, linestyle=":", label="Average")
    ax.set_xlabel(spec.x_label or "Generation")
    ax.set_ylabel(spec.y_label or "Average final resources")
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(loc="upper left", frameon=False, fontsize=8)
    ax.spines[["top", "right"]].set_visible(False)
    sidecar = {
        "kind": "spaghetti",
        "generations": table.generations,
        "runs": runs_sidecar,
        "average": average,
    }
    return _finish(fig, spec, sidecar)


def _heatmap_grid(table):
    slots = sorted(set(table.slots.values()))
    occupants = {}
    grid = []
    for slot in slots:
        row = []
        for g in table.generations:
            value = None
            for agent in table.agents:
                if table.slots[agent] == slot and g in table.cells[agent]:
                    value = table.cells[agent][g]
                    occupants[(slot, g)] = agent
                    break
            row.append(value)
        grid.append(row)
    boundaries = []
    for slot in slots:
        for g_prev, g_next in zip(table.generations, table.generations[1:]):
            a, b = occupants.get((slot, g_prev)), occupants.get((slot, g_next))
            if a is not None and b is not None and a != b:
                boundaries.append([slot, g_next])
    return slots, grid, boundaries


def _render_heatmap(spec: FigureSpec) -> str:
    path, _label = spec.inputs[0]
    table = read_donation_matrix(path)
    slots, grid, boundaries = _heatmap_grid(table)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    values = [[float("nan") if v is None else v for v in row] for row in grid]
    cmap = colormaps["viridis"].copy()
    cmap.set_bad("#eeeeee")
    mesh = ax.imshow(
        values,
        aspect="auto",
        interpolation="nearest",
        cmap=cmap,
        vmin=0.0,
        vmax=1.0,
        extent=(
            table.generations[0] - 0.5,
            table.generations[-1] + 0.5,
            slots[-1] + 0.5,
            slots[0] - 0.5,
        ),
    )
    for slot, gen in boundaries:
        ax.plot(
            [gen - 0.5, gen - 0.5],
            [slot - 0.5, slot + 0.5],
            color="black",
            linewidth=2.5,
            solid_capstyle="butt",
        )
    fig.colorbar(mesh, ax=ax, label="Mean donation fraction")
    ax.set_xlabel(spec.x_label or "Generation")
    ax.set_ylabel(spec.y_label or "Population slot")
    ax.set_xticks(table.generations)
    ax.set_yticks(slots)
    if spec.title:
        ax.set_title(spec.title)
    sidecar = {
        "kind": "heatmap",
        "generations": table.generations,
        "slots": slots,
        "cells": grid,
        "boundaries": boundaries,
    }
    return _finish(fig, spec, sidecar)


_RENDERERS = {
    "curves": _render_curves,
    "spaghetti": _render_spaghetti,
    "heatmap": _render_heatmap,
}


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path. The sidecar with the
    plotted values lands next to it as `<output>.data.json`."""

    return _RENDERERS[spec.kind](spec)


def render_default_figures(analysis_dir: str, output_dir: str | None = None) -> list:
    """Standard figures for a `donorgame analyze` output directory:
    a curves figure from summary.csv, a spaghetti figure from
    generation_stats.csv, and one heatmap per donation matrix."""

    output_dir = output_dir or analysis_dir
    produced = []
    summary = os.path.join(analysis_dir, "summary.csv")
    if os.path.exists(summary):
        produced.append(
            render(
                FigureSpec(
                    kind="curves",
                    inputs=[(summary, "mean of runs")],
                    output=os.path.join(output_dir, "resources_curves.png"),
                )
            )
        )
    stats = os.path.join(analysis_dir, "generation_stats.csv")
    if os.path.exists(stats):
        produced.append(
            render(
                FigureSpec(
                    kind="spaghetti",
                    inputs=[(stats, "runs")],
                    output=os.path.join(output_dir, "resources_runs.png"),
                )
            )
        )
    for name in sorted(os.listdir(analysis_dir)):
        if name.startswith("donation_matrix") and name.endswith(".csv"):
            label = name[len("donation_matrix"):].strip("_")[: -len(".csv")] or "run"
            produced.append(
                render(
                    FigureSpec(
                        kind="heatmap",
                        inputs=[(os.path.join(analysis_dir, name), label)],
                        output=os.path.join(output_dir, f"heatmap_{label}.png"),
                    )
                )
            )
    return produced
