"""Run artifacts: append-only event streams, checkpoints, resume, replay.

An artifact directory holds the frozen config, a JSONL event stream that
replays to byte-identical game states, the gateway request log, a usage
snapshot, per-run metrics CSVs, and a per-generation checkpoint with the
byte offsets of both logs. Nothing in an artifact carries wall-clock
state, so mock and scripted runs are byte-identical across repeated
executions and across interrupt/resume.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

from .agents import AgentProfile
from .config import (
    ConfigError,
    config_from_dict,
    config_hash,
    semantic_dict,
)
from .core import (
    AgentId,
    GameState,
    TraceEntry,
    advance_round,
    apply_donation,
    apply_punishment,
    build_trace,
    init_game,
)
from .dsl import parse_strategy
from .evolution import (
    ExperimentConfig,
    ExperimentResult,
    GenerationRecord,
    ScoreTriple,
    select_survivors,
)
from .gateway import UsageLedger
from .metrics import donation_matrix, generation_stats
from .scheduling import Schedule

SCHEMA_VERSION = 1

EVENTS_FILE = "events.jsonl"
REQUESTS_FILE = "requests.jsonl"
MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "config.yaml"
CHECKPOINT_FILE = "checkpoint.json"
USAGE_FILE = "usage.json"
METRICS_DIR = "metrics"


class ArtifactError(Exception):
    pass


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _write_json(path: str, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n")


def _read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


class ArtifactWriter:
    """Single writer for one artifact directory."""

    def __init__(self, directory: str, cfg: ExperimentConfig, *, resume: bool = False):
        self.directory = directory
        self.cfg = cfg
        self.hash = config_hash(cfg)
        if resume:
            self._events = open(os.path.join(directory, EVENTS_FILE), "a", encoding="utf-8")
            self._requests = open(os.path.join(directory, REQUESTS_FILE), "a", encoding="utf-8")
            return
        os.makedirs(directory, exist_ok=True)
        if os.listdir(directory):
            raise ArtifactError(f"output directory {directory!r} is not empty")
        import yaml

        with open(os.path.join(directory, CONFIG_FILE), "w", encoding="utf-8") as fh:
            yaml.safe_dump(semantic_dict(cfg), fh, sort_keys=True)
        self._write_manifest(status="running", completed=0)
        self._events = open(os.path.join(directory, EVENTS_FILE), "w", encoding="utf-8")
        self._requests = open(os.path.join(directory, REQUESTS_FILE), "w", encoding="utf-8")
        self.log_request({"type": "log_header", "schema_version": SCHEMA_VERSION})
        self.emit(
            {
                "type": "run_header",
                "schema_version": SCHEMA_VERSION,
                "config": semantic_dict(cfg),
                "config_hash": self.hash,
            }
        )

    def _write_manifest(self, status: str, completed: int) -> None:
        _write_json(
            os.path.join(self.directory, MANIFEST_FILE),
            {
                "schema_version": SCHEMA_VERSION,
                "config": semantic_dict(self.cfg),
                "config_hash": self.hash,
                "status": status,
                "completed_generations": completed,
            },
        )

    def emit(self, event: dict) -> None:
        self._events.write(_dumps(event) + "\n")
        self._events.flush()
        if event.get("type") == "generation_end":
            self._checkpoint(event)

    def log_request(self, record: dict) -> None:
        self._requests.write(_dumps(record) + "\n")
        self._requests.flush()

    def _checkpoint(self, event: dict) -> None:
        _write_json(
            os.path.join(self.directory, CHECKPOINT_FILE),
            {
                "schema_version": SCHEMA_VERSION,
                "generation": event["generation"],
                "events_bytes": self._events.tell(),
                "requests_bytes": self._requests.tell(),
                "usage": event.get("usage") or {},
            },
        )
        self._write_manifest(status="running", completed=event["generation"])

    def finalize(self, usage: UsageLedger) -> None:
        self.emit({"type": "run_end", "generations": self.cfg.generations})
        self._events.close()
        self._requests.close()
        _write_json(
            os.path.join(self.directory, USAGE_FILE),
            {"schema_version": SCHEMA_VERSION, "providers": usage.snapshot()},
        )
        _cfg, result = load_result(self.directory)
        write_run_metrics(self.directory, result)
        self._write_manifest(status="complete", completed=self.cfg.generations)

    def mark_interrupted(self) -> None:
        completed = 0
        checkpoint_path = os.path.join(self.directory, CHECKPOINT_FILE)
        if os.path.exists(checkpoint_path):
            completed = _read_json(checkpoint_path).get("generation", 0)
        self._events.close()
        self._requests.close()
        self._write_manifest(status="interrupted", completed=completed)


def iter_events(directory: str):
    path = os.path.join(directory, EVENTS_FILE)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield lineno, json.loads(line)


def _schedule_from_event(event: dict) -> Schedule:
    return Schedule(
        group_a=tuple(AgentId.parse(a) for a in event["group_a"]),
        group_b=tuple(AgentId.parse(b) for b in event["group_b"]),
        rounds=tuple(
            tuple((AgentId.parse(d), AgentId.parse(r)) for d, r in matching)
            for matching in event["rounds"]
        ),
    )


@dataclass
class ReplayReport:
    ok: bool
    events_checked: int
    first_divergence: str | None = None


class _Divergence(Exception):
    pass


def _close(a: float, b: float, tol: float = 1e-9) -> bool:
    return abs(a - b) <= tol


class _Walker:
    """Replays an event stream through the engine, optionally verifying
    every recorded quantity against the recomputation."""

    def __init__(self, cfg: ExperimentConfig, verify: bool):
        self.cfg = cfg
        self.verify = verify
        self.profiles: dict = {}
        self.records: list = []
        self.schedules: dict = {}
        self.finals: dict = {}
        self.state: GameState | None = None
        self.game: int | None = None
        self.population_ids: list = []

    def check(self, ok: bool, lineno: int, message: str) -> None:
        if self.verify and not ok:
            raise _Divergence(f"event line {lineno}: {message}")

    def on_strategy(self, lineno: int, ev: dict) -> None:
        agent = AgentId.parse(ev["agent"])
        program = None
        if self.cfg.backend == "scripted":
            program = parse_strategy(ev["strategy_text"])
        self.profiles[agent] = AgentProfile(
            id=agent,
            strategy_text=ev["strategy_text"],
            backend=self.cfg.backend,
            program=program,
        )
        if ev["generation"] >= 2 and self.records:
            parents = tuple(AgentId.parse(p) for p in ev["parents"])
            self.records[-1].offspring.append((agent, parents))

    def on_game_start(self, lineno: int, ev: dict) -> None:
        schedule = _schedule_from_event(ev)
        self.schedules[ev["game"]] = schedule
        self.population_ids = sorted(
            list(schedule.group_a) + list(schedule.group_b), key=str
        )
        self.state = init_game(self.cfg.game, self.population_ids)
        self.game = ev["game"]

    def on_decision(self, lineno: int, ev: dict) -> None:
        donor = AgentId.parse(ev["donor"])
        recipient = AgentId.parse(ev["recipient"])
        if self.verify:
            trace = build_trace(
                self.state.history, recipient, self.state.round, self.cfg.game.trace_depth
            )
            recorded = tuple(
                TraceEntry(
                    round=r, actor=AgentId.parse(a), actor_recipient=AgentId.parse(ar),
                    fraction=f, punished=p,
                )
                for r, a, ar, f, p in ev["trace"]
            )
            self.check(
                len(trace) == len(recorded)
                and all(
                    x.round == y.round
                    and x.actor == y.actor
                    and x.actor_recipient == y.actor_recipient
                    and _close(x.fraction, y.fraction)
                    and x.punished == y.punished
                    for x, y in zip(trace, recorded)
                ),
                lineno,
                f"trace mismatch for {donor}->{recipient} in round {self.state.round}",
            )
            self.check(
                _close(self.state.balances[donor], ev["donor_before"]),
                lineno,
                f"donor balance {self.state.balances[donor]!r} != recorded {ev['donor_before']!r}",
            )
            self.check(
                _close(self.state.balances[recipient], ev["recipient_before"]),
                lineno,
                f"recipient balance {self.state.balances[recipient]!r} != recorded {ev['recipient_before']!r}",
            )
        self.state = apply_donation(self.state, donor, recipient, ev["donation"])
        if ev["punishment_spend"] > 0:
            self.state = apply_punishment(self.state, donor, recipient, ev["punishment_spend"])
        self.check(
            _close(self.state.history[-1].fraction, ev["fraction"]),
            lineno,
            f"fraction {self.state.history[-1].fraction!r} != recorded {ev['fraction']!r}",
        )

    def on_round_end(self, lineno: int, ev: dict) -> None:
        if self.verify:
            for name, recorded in ev["balances"].items():
                actual = self.state.balances[AgentId.parse(name)]
                self.check(
                    _close(actual, recorded),
                    lineno,
                    f"round {ev['round']} balance of {name}: {actual!r} != recorded {recorded!r}",
                )
        self.state = advance_round(self.state)

    def on_game_end(self, lineno: int, ev: dict) -> None:
        if self.verify:
            for name, recorded in ev["finals"].items():
                actual = self.state.balances[AgentId.parse(name)]
                self.check(
                    _close(actual, recorded),
                    lineno,
                    f"final balance of {name}: {actual!r} != recorded {recorded!r}",
                )
        self.finals[self.game] = self.state
        self.state = None

    def on_generation_end(self, lineno: int, ev: dict) -> None:
        first, second = self.finals[1], self.finals[2]
        scores = {
            a: ScoreTriple(
                run1=first.balances[a],
                run2=second.balances[a],
                mean=(first.balances[a] + second.balances[a]) / 2.0,
            )
            for a in self.population_ids
        }
        survivors = select_survivors(scores)
        if self.verify:
            for name, (r1, r2, mean) in ev["scores"].items():
                triple = scores[AgentId.parse(name)]
                self.check(
                    _close(triple.run1, r1) and _close(triple.run2, r2) and _close(triple.mean, mean),
                    lineno,
                    f"score mismatch for {name}",
                )
            self.check(
                [str(a) for a in survivors] == ev["survivors"],
                lineno,
                "survivor set mismatch",
            )
        self.records.append(
            GenerationRecord(
                generation=ev["generation"],
                population=[self.profiles[a] for a in self.population_ids],
                schedule_pair=(self.schedules[1], self.schedules[2]),
                transcripts=(first, second),
                scores=scores,
                survivors=survivors,
            )
        )
        self.schedules = {}
        self.finals = {}

    def walk(self, directory: str) -> int:
        handlers = {
            "strategy": self.on_strategy,
            "game_start": self.on_game_start,
            "decision": self.on_decision,
            "round_end": self.on_round_end,
            "game_end": self.on_game_end,
            "generation_end": self.on_generation_end,
        }
        count = 0
        for lineno, ev in iter_events(directory):
            count = lineno
            handler = handlers.get(ev["type"])
            if handler is not None:
                handler(lineno, ev)
        return count


def _load_header(directory: str) -> dict:
    for _lineno, ev in iter_events(directory):
        if ev["type"] != "run_header":
            raise ArtifactError("artifact does not start with a run header")
        if ev.get("schema_version") != SCHEMA_VERSION:
            raise ArtifactError(
                f"unsupported schema_version {ev.get('schema_version')!r}"
            )
        return ev
    raise ArtifactError("artifact event stream is empty")


def load_config_from_artifact(directory: str) -> ExperimentConfig:
    header = _load_header(directory)
    try:
        return config_from_dict(
            {k: v for k, v in header["config"].items() if k != "output_dir"}
        )
    except ConfigError as exc:
        raise ArtifactError(f"artifact config invalid: {exc}") from exc


def load_result(directory: str) -> tuple:
    """Rebuild the full ExperimentResult from an artifact's event stream."""

    cfg = load_config_from_artifact(directory)
    walker = _Walker(cfg, verify=False)
    walker.walk(directory)
    return cfg, ExperimentResult(config=cfg, generations=walker.records)


def replay_artifact(directory: str) -> ReplayReport:
    """Re-execute the engine against recorded decisions and verify every
    stored balance, fraction, trace, score and survivor set."""

    cfg = load_config_from_artifact(directory)
    walker = _Walker(cfg, verify=True)
    try:
        count = walker.walk(directory)
    except _Divergence as exc:
        return ReplayReport(ok=False, events_checked=0, first_divergence=str(exc))
    return ReplayReport(ok=True, events_checked=count)


@dataclass
class ResumePoint:
    cfg: ExperimentConfig
    next_generation: int
    survivors: list  # AgentProfile, in recorded survivor order
    advice: list  # (strategy_text, mean score), same order
    usage: UsageLedger
    complete: bool = False


def prepare_resume(directory: str) -> ResumePoint:
    """Truncate any partial generation and reconstruct the population for
    the next one. Refuses artifacts whose config hash changed."""

    manifest_path = os.path.join(directory, MANIFEST_FILE)
    checkpoint_path = os.path.join(directory, CHECKPOINT_FILE)
    if not os.path.exists(manifest_path):
        raise ArtifactError(f"{directory!r} is not a run artifact (missing manifest)")
    manifest = _read_json(manifest_path)
    cfg = load_config_from_artifact(directory)
    if config_hash(cfg) != manifest.get("config_hash"):
        raise ArtifactError("config hash mismatch: artifact config was edited")
    if not os.path.exists(checkpoint_path):
        raise ArtifactError("artifact has no completed generation to resume from")
    checkpoint = _read_json(checkpoint_path)
    completed = checkpoint["generation"]
    usage = UsageLedger.from_snapshot(checkpoint.get("usage") or {})
    if completed >= cfg.generations:
        return ResumePoint(
            cfg=cfg, next_generation=completed + 1, survivors=[], advice=[], usage=usage, complete=True
        )

    # Drop any partial tail beyond the checkpointed byte offsets so the
    # resumed stream is identical to an uninterrupted one.
    for name, key in ((EVENTS_FILE, "events_bytes"), (REQUESTS_FILE, "requests_bytes")):
        path = os.path.join(directory, name)
        size = os.path.getsize(path)
        if size > checkpoint[key]:
            with open(path, "r+", encoding="utf-8") as fh:
                fh.truncate(checkpoint[key])
        elif size < checkpoint[key]:
            raise ArtifactError(f"{name} is shorter than its checkpoint; artifact corrupt")

    profiles: dict = {}
    last_scores: dict = {}
    last_survivors: list = []
    for _lineno, ev in iter_events(directory):
        if ev["type"] == "strategy":
            agent = AgentId.parse(ev["agent"])
            program = parse_strategy(ev["strategy_text"]) if cfg.backend == "scripted" else None
            profiles[agent] = AgentProfile(
                id=agent, strategy_text=ev["strategy_text"], backend=cfg.backend, program=program
            )
        elif ev["type"] == "generation_end" and ev["generation"] == completed:
            last_scores = ev["scores"]
            last_survivors = [AgentId.parse(a) for a in ev["survivors"]]
    if not last_survivors:
        raise ArtifactError("checkpointed generation not found in event stream")
    survivors = [profiles[a] for a in last_survivors]
    advice = [
        (profiles[a].strategy_text, last_scores[str(a)][2]) for a in last_survivors
    ]
    return ResumePoint(
        cfg=cfg,
        next_generation=completed + 1,
        survivors=survivors,
        advice=advice,
        usage=usage,
    )


# --- metrics CSV output ---

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_generation_stats_csv(path: str, rows: list) -> None:
    """rows: (run_label, GenerationStats) pairs."""

    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "run",
                "generation",
                "mean_final_resources",
                "mean_donation_fraction",
                "survivor_differential",
                "punishment_frequency",
            ]
        )
        for label, st in rows:
            writer.writerow(
                [
                    label,
                    st.generation,
                    _fmt(st.mean_final_resources),
                    _fmt(st.mean_donation_fraction),
                    _fmt(st.survivor_differential),
                    _fmt(st.punishment_frequency),
                ]
            )


def write_donation_matrix_csv(path: str, matrix) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["agent", "slot"] + [f"g{g}" for g in matrix.generations])
        for agent in matrix.agents:
            row = [str(agent), matrix.slots[agent]]
            for g in matrix.generations:
                value = matrix.cells[agent].get(g)
                row.append(_fmt(value))
            writer.writerow(row)
        fh.write("# population_mean," + ",".join(repr(v) for v in matrix.per_generation_mean) + "\n")
        fh.write(f"# mean_generation_change,{matrix.mean_generation_change!r}\n")


def write_summary_csv(path: str, generations: list, means: list, sems: list | None, n_runs: int) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["generation", "mean_final_resources_mean", "mean_final_resources_sem", "n_runs"])
        for i, g in enumerate(generations):
            sem = "" if sems is None else repr(sems[i])
            writer.writerow([g, repr(means[i]), sem, n_runs])


def write_run_metrics(directory: str, result: ExperimentResult) -> None:
    metrics_dir = os.path.join(directory, METRICS_DIR)
    os.makedirs(metrics_dir, exist_ok=True)
    label = os.path.basename(os.path.normpath(directory))
    stats = generation_stats(result)
    write_generation_stats_csv(
        os.path.join(metrics_dir, "generation_stats.csv"),
        [(label, st) for st in stats],
    )
    write_donation_matrix_csv(
        os.path.join(metrics_dir, "donation_matrix.csv"), donation_matrix(result)
    )
