"""Figure specifications: what to draw, from which tables, to which file."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

KINDS = ("curves", "spaghetti", "heatmap")
FORMATS = ("png", "svg")


class SpecError(Exception):
    pass


@dataclass
class FigureSpec:
    kind: str
    inputs: list  # (path, label) pairs
    output: str
    image_format: str = ""
    x_label: str = ""
    y_label: str = ""
    title: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise SpecError("figure spec needs at least one input table")
        if self.kind in ("spaghetti", "heatmap") and len(self.inputs) != 1:
            raise SpecError(f"{self.kind} figures take exactly one input table")
        if not self.image_format:
            suffix = os.path.splitext(self.output)[1].lstrip(".").lower()
            self.image_format = suffix or "png"
        if self.image_format not in FORMATS:
            raise SpecError(f"unsupported image format {self.image_format!r}; expected {FORMATS}")

    @property
    def sidecar_path(self) -> str:
        return self.output + ".data.json"


def _normalize_inputs(raw) -> list:
    inputs = []
    for item in raw:
        if isinstance(item, str):
            inputs.append((item, os.path.basename(item)))
        elif isinstance(item, dict) and "path" in item:
            inputs.append((item["path"], item.get("label") or os.path.basename(item["path"])))
        else:
            raise SpecError(f"input entries must be paths or {{path, label}} objects, got {item!r}")
    return inputs


def spec_from_dict(data: dict) -> FigureSpec:
    if not isinstance(data, dict):
        raise SpecError("figure spec must be a JSON object")
    unknown = set(data) - {"kind", "inputs", "output", "format", "x_label", "y_label", "title"}
    if unknown:
        raise SpecError(f"unknown figure spec keys {sorted(unknown)}")
    for key in ("kind", "inputs", "output"):
        if key not in data:
            raise SpecError(f"figure spec is missing {key!r}")
    return FigureSpec(
        kind=data["kind"],
        inputs=_normalize_inputs(data["inputs"]),
        output=data["output"],
        image_format=data.get("format", ""),
        x_label=data.get("x_label", ""),
        y_label=data.get("y_label", ""),
        title=data.get("title", ""),
    )


def load_spec(path: str) -> FigureSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise SpecError(f"figure spec not found: {path}")
    except json.JSONDecodeError as exc:
        raise SpecError(f"figure spec is not valid JSON: {exc}")
    return spec_from_dict(data)
