import hashlib
import json
import warnings

import pytest

from donorgame_figures.render import render
from donorgame_figures.spec import FigureSpec, SpecError, spec_from_dict
from donorgame_figures.tables import TableError, read_donation_matrix, read_summary


def write_summary(path, rows, n_runs=5, with_sem=True):
    lines = ["# schema_version=1", "generation,mean_final_resources_mean,mean_final_resources_sem,n_runs"]
    for g, mean, sem in rows:
        sem_text = repr(sem) if with_sem else ""
        lines.append(f"{g},{mean!r},{sem_text},{n_runs}")
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def write_stats(path, runs):
    lines = [
        "# schema_version=1",
        "run,generation,mean_final_resources,mean_donation_fraction,survivor_differential,punishment_frequency",
    ]
    for run, series in runs.items():
        for g, value in enumerate(series, start=1):
            lines.append(f"{run},{g},{value!r},0.5,0.0,")
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def write_matrix(path, agents):
    """agents: list of (name, slot, {generation: value}) covering g1..g3."""

    generations = [1, 2, 3]
    lines = ["# schema_version=1", "agent,slot," + ",".join(f"g{g}" for g in generations)]
    for name, slot, cells in agents:
        row = [name, str(slot)] + [repr(cells[g]) if g in cells else "" for g in generations]
        lines.append(",".join(row))
    lines.append("# population_mean,0.5,0.5,0.5")
    lines.append("# mean_generation_change,0.0")
    path.write_text("\n".join(lines) + "\n")
    return str(path)


SUMMARY_ROWS = [(1, 367.57, 51.92), (2, 601.21, 197.54), (3, 579.55, 267.27), (4, 853.09, 299.68)]


class TestCurves:
    def test_sidecar_matches_input_to_1e6(self, tmp_path):
        table = write_summary(tmp_path / "summary.csv", SUMMARY_ROWS)
        spec = FigureSpec(kind="curves", inputs=[(table, "baseline")], output=str(tmp_path / "fig.png"))
        render(spec)
        sidecar = json.loads((tmp_path / "fig.png.data.json").read_text())
        series = sidecar["series"][0]
        assert series["generations"] == [g for g, _, _ in SUMMARY_ROWS]
        for got, (_, mean, sem), s in zip(series["mean"], SUMMARY_ROWS, series["sem"]):
            assert abs(got - mean) <= 1e-6
        for got, (_, _, sem) in zip(series["sem"], SUMMARY_ROWS):
            assert abs(got - sem) <= 1e-6

    def test_multiple_labeled_curves(self, tmp_path):
        a = write_summary(tmp_path / "a.csv", SUMMARY_ROWS)
        b = write_summary(tmp_path / "b.csv", [(g, m / 10, s / 10) for g, m, s in SUMMARY_ROWS])
        spec = spec_from_dict(
            {
                "kind": "curves",
                "inputs": [{"path": a, "label": "model A"}, {"path": b, "label": "model B"}],
                "output": str(tmp_path / "fig.png"),
            }
        )
        render(spec)
        sidecar = json.loads((tmp_path / "fig.png.data.json").read_text())
        assert [s["label"] for s in sidecar["series"]] == ["model A", "model B"]

    def test_single_run_renders_without_band_and_warns(self, tmp_path):
        table = write_summary(tmp_path / "summary.csv", SUMMARY_ROWS, n_runs=1, with_sem=False)
        spec = FigureSpec(kind="curves", inputs=[(table, "one")], output=str(tmp_path / "fig.png"))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            render(spec)
        assert any("without band" in str(w.message) for w in caught)
        sidecar = json.loads((tmp_path / "fig.png.data.json").read_text())
        assert sidecar["series"][0]["sem"] is None

    def test_missing_column_is_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# schema_version=1\ngeneration,some_other\n1,2\n")
        spec = FigureSpec(kind="curves", inputs=[(str(path), "x")], output=str(tmp_path / "fig.png"))
        with pytest.raises(TableError, match="missing columns"):
            render(spec)

    def test_empty_table_is_error(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(
            "# schema_version=1\ngeneration,mean_final_resources_mean,mean_final_resources_sem,n_runs\n"
        )
        spec = FigureSpec(kind="curves", inputs=[(str(path), "x")], output=str(tmp_path / "fig.png"))
        with pytest.raises(TableError, match="empty"):
            render(spec)

    def test_rendering_is_deterministic_and_reads_only(self, tmp_path):
        table = write_summary(tmp_path / "summary.csv", SUMMARY_ROWS)
        before = hashlib.sha256((tmp_path / "summary.csv").read_bytes()).hexdigest()
        spec = FigureSpec(kind="curves", inputs=[(table, "x")], output=str(tmp_path / "fig.png"))
        render(spec)
        first = (tmp_path / "fig.png").read_bytes()
        render(spec)
        assert (tmp_path / "fig.png").read_bytes() == first
        assert hashlib.sha256((tmp_path / "summary.csv").read_bytes()).hexdigest() == before

    def test_svg_output_supported(self, tmp_path):
        table = write_summary(tmp_path / "summary.csv", SUMMARY_ROWS)
        spec = FigureSpec(kind="curves", inputs=[(table, "x")], output=str(tmp_path / "fig.svg"))
        render(spec)
        body = (tmp_path / "fig.svg").read_bytes()
        assert body.startswith(b"<?xml")
        render(spec)
        assert (tmp_path / "fig.svg").read_bytes() == body


class TestSpaghetti:
    def test_runs_and_average(self, tmp_path):
        runs = {"run1": [10.0, 20.0, 30.0], "run2": [20.0, 40.0, 60.0]}
        table = write_stats(tmp_path / "stats.csv", runs)
        spec = FigureSpec(kind="spaghetti", inputs=[(table, "x")], output=str(tmp_path / "fig.png"))
        render(spec)
        sidecar = json.loads((tmp_path / "fig.png.data.json").read_text())
        assert sidecar["runs"] == runs
        assert sidecar["average"] == [15.0, 30.0, 45.0]

    def test_exactly_one_input(self, tmp_path):
        with pytest.raises(SpecError, match="exactly one"):
            FigureSpec(kind="spaghetti", inputs=[("a", "a"), ("b", "b")], output="x.png")


MATRIX = [
    ("1_1", 1, {1: 1.0, 2: 1.0, 3: 1.0}),
    ("1_2", 2, {1: 0.4}),
    ("2_1", 2, {2: 0.6, 3: 0.6}),
    ("1_3", 3, {1: 0.8, 2: 0.8}),
    ("3_1", 3, {3: 0.2}),
    ("1_4", 4, {1: 0.5, 2: 0.5, 3: 0.5}),
]


class TestHeatmap:
    def test_cells_match_input(self, tmp_path):
        table = write_matrix(tmp_path / "matrix.csv", MATRIX)
        spec = FigureSpec(kind="heatmap", inputs=[(table, "x")], output=str(tmp_path / "fig.png"))
        render(spec)
        sidecar = json.loads((tmp_path / "fig.png.data.json").read_text())
        assert sidecar["slots"] == [1, 2, 3, 4]
        assert sidecar["generations"] == [1, 2, 3]
        expected = {
            (1, 1): 1.0, (1, 2): 1.0, (1, 3): 1.0,
            (2, 1): 0.4, (2, 2): 0.6, (2, 3): 0.6,
            (3, 1): 0.8, (3, 2): 0.8, (3, 3): 0.2,
            (4, 1): 0.5, (4, 2): 0.5, (4, 3): 0.5,
        }
        for i, slot in enumerate(sidecar["slots"]):
            for j, gen in enumerate(sidecar["generations"]):
                assert abs(sidecar["cells"][i][j] - expected[(slot, gen)]) <= 1e-6

    def test_boundaries_where_lineage_changed(self, tmp_path):
        table = write_matrix(tmp_path / "matrix.csv", MATRIX)
        spec = FigureSpec(kind="heatmap", inputs=[(table, "x")], output=str(tmp_path / "fig.png"))
        render(spec)
        sidecar = json.loads((tmp_path / "fig.png.data.json").read_text())
        # slot 2: 1_2 -> 2_1 at generation 2; slot 3: 1_3 -> 3_1 at generation 3
        assert sorted(map(tuple, sidecar["boundaries"])) == [(2, 2), (3, 3)]

    def test_uniform_matrix_has_uniform_cells_and_no_boundaries(self, tmp_path):
        agents = [(f"1_{i}", i, {1: 1.0, 2: 1.0, 3: 1.0}) for i in range(1, 5)]
        table = write_matrix(tmp_path / "matrix.csv", agents)
        spec = FigureSpec(kind="heatmap", inputs=[(table, "x")], output=str(tmp_path / "fig.png"))
        render(spec)
        sidecar = json.loads((tmp_path / "fig.png.data.json").read_text())
        assert all(v == 1.0 for row in sidecar["cells"] for v in row)
        assert sidecar["boundaries"] == []

    def test_read_matrix_requires_generation_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# schema_version=1\nagent,slot\n1_1,1\n")
        with pytest.raises(TableError, match="generation columns"):
            read_donation_matrix(str(path))


class TestSpecValidation:
    def test_unknown_kind(self):
        with pytest.raises(SpecError, match="unknown figure kind"):
            FigureSpec(kind="pie", inputs=[("a", "a")], output="x.png")

    def test_unknown_format(self):
        with pytest.raises(SpecError, match="image format"):
            FigureSpec(kind="curves", inputs=[("a", "a")], output="x.bmp")

    def test_format_inferred_from_suffix(self):
        spec = FigureSpec(kind="curves", inputs=[("a", "a")], output="x.svg")
        assert spec.image_format == "svg"

    def test_requires_inputs(self):
        with pytest.raises(SpecError, match="at least one input"):
            FigureSpec(kind="curves", inputs=[], output="x.png")

    def test_spec_from_dict_rejects_unknown_keys(self):
        with pytest.raises(SpecError, match="unknown figure spec keys"):
            spec_from_dict({"kind": "curves", "inputs": ["a"], "output": "x.png", "dpi": 300})


class TestSummaryReader:
    def test_reads_empty_sem_as_none(self, tmp_path):
        table = write_summary(tmp_path / "s.csv", SUMMARY_ROWS, with_sem=False)
        parsed = read_summary(table)
        assert parsed.sem == [None] * len(SUMMARY_ROWS)
