"""Command-line surface: run, resume, analyze, replay, ablate.

`run` executes an experiment from a YAML config into an artifact
directory; `resume` continues an interrupted artifact; `replay` verifies
one against the engine; `analyze` aggregates one or more artifacts into
CSV tables (and figures, when the optional figures package is
installed); `ablate` is sugar over `run` for single-key sweeps.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .config import (
    ABLATION_ALIASES,
    ConfigError,
    compatibility_key,
    load_config,
    resolve_api_key,
    semantic_dict,
)
from .evolution import EngineServices, ExperimentConfig, run_experiment
from .gateway import (
    Gateway,
    GatewayError,
    HttpChatProvider,
    MockProvider,
    UsageLedger,
)
from .metrics import average_final_resources, generation_stats, donation_matrix, sem_across_runs
from .persistence import (
    ArtifactError,
    ArtifactWriter,
    load_result,
    prepare_resume,
    replay_artifact,
    write_donation_matrix_csv,
    write_generation_stats_csv,
    write_summary_csv,
)
from .seeds import derive_rng

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _build_gateway(cfg: ExperimentConfig, usage: UsageLedger, log_sink) -> Gateway | None:
    if cfg.backend == "scripted":
        return None
    if cfg.backend == "mock":
        provider = MockProvider(seed=cfg.master_seed)
        tag = "mock"
    else:
        provider = HttpChatProvider(
            endpoint=cfg.provider.endpoint,
            model=cfg.provider.model,
            api_key=resolve_api_key(cfg),
        )
        tag = cfg.provider.model or "llm"
    return Gateway(
        provider,
        provider_tag=tag,
        usage=usage,
        log_sink=log_sink,
        retry_rng=derive_rng(cfg.master_seed, "retry"),
        input_price=cfg.provider.input_price,
        output_price=cfg.provider.output_price,
        requests_per_minute=cfg.provider.requests_per_minute,
        temperature=cfg.provider.temperature,
        max_tokens=cfg.provider.max_tokens,
    )


def _progress(record) -> None:
    mean = sum(s.mean for s in record.scores.values()) / len(record.scores)
    print(f"generation {record.generation} complete: mean final resources {mean:.2f}")


def _execute_run(cfg: ExperimentConfig, out_dir: str, stop_after: int | None = None) -> int:
    usage = UsageLedger()
    writer = ArtifactWriter(out_dir, cfg)
    gateway = _build_gateway(cfg, usage, writer.log_request)
    services = EngineServices(gateway=gateway, emit=writer.emit, progress=_progress)
    try:
        run_experiment(
            cfg,
            services,
            usage_snapshot_fn=usage.snapshot,
            stop_after=stop_after,
        )
    except GatewayError as exc:
        writer.mark_interrupted()
        print(
            f"error: provider failed (request {exc.request_id}); artifact is resumable: {out_dir}",
            file=sys.stderr,
        )
        return EXIT_FAILURE
    if stop_after is not None and stop_after < cfg.generations:
        writer.mark_interrupted()
        print(f"stopped after generation {stop_after}; resume with: donorgame resume {out_dir}")
        return EXIT_OK
    writer.finalize(usage)
    print(f"run complete: {out_dir}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg, cfg_out_dir = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    out_dir = args.output_dir or cfg_out_dir
    if not out_dir:
        print("error: no output directory (config key 'output_dir' or --output-dir)", file=sys.stderr)
        return EXIT_CONFIG

    if args.ablate:
        return _run_sweep(cfg, out_dir, args.ablate)
    try:
        return _execute_run(cfg, out_dir, stop_after=args.stop_after_generation)
    except (ArtifactError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def _parse_sweep(spec: str):
    key, sep, values = spec.partition("=")
    if not sep or not values:
        raise ConfigError(f"ablation must look like key=v1,v2,... got {spec!r}")
    key = ABLATION_ALIASES.get(key.strip(), key.strip())
    parsed = []
    for text in values.split(","):
        text = text.strip()
        if key in ("trace_depth", "rounds", "population_size", "generations"):
            parsed.append(int(text))
        elif key in ("punishment_enabled",):
            parsed.append(text.lower() in ("1", "true", "yes"))
        else:
            parsed.append(float(text))
    return key, parsed


def _with_key(cfg: ExperimentConfig, key: str, value) -> ExperimentConfig:
    game_fields = {
        "population_size", "rounds", "endowment", "donation_multiplier",
        "trace_depth", "punishment_enabled", "punishment_multiplier",
    }
    if key in game_fields:
        return replace(cfg, game=replace(cfg.game, **{key: value}))
    if key in ("generations", "seed"):
        attr = "master_seed" if key == "seed" else key
        return replace(cfg, **{attr: value})
    raise ConfigError(f"cannot ablate unknown config key {key!r}")


def _run_sweep(cfg: ExperimentConfig, out_base: str, spec: str) -> int:
    try:
        key, values = _parse_sweep(spec)
        variants = [(value, _with_key(cfg, key, value)) for value in values]
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for value, variant in variants:
        out_dir = f"{out_base.rstrip('/')}_{key}_{value}"
        print(f"=== {key} = {value} -> {out_dir}")
        code = _execute_run(variant, out_dir)
        if code != EXIT_OK:
            return code
    return EXIT_OK


def cmd_ablate(args) -> int:
    args.ablate = args.sweep
    args.stop_after_generation = None
    return cmd_run(args)


def cmd_resume(args) -> int:
    try:
        point = prepare_resume(args.artifact)
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if point.complete:
        print("artifact already complete; nothing to do")
        return EXIT_OK
    cfg = point.cfg
    writer = ArtifactWriter(args.artifact, cfg, resume=True)
    gateway = _build_gateway(cfg, point.usage, writer.log_request)
    services = EngineServices(gateway=gateway, emit=writer.emit, progress=_progress)
    try:
        run_experiment(
            cfg,
            services,
            start_generation=point.next_generation,
            resume_survivors=(point.survivors, point.advice),
            usage_snapshot_fn=point.usage.snapshot,
        )
    except GatewayError as exc:
        writer.mark_interrupted()
        print(
            f"error: provider failed (request {exc.request_id}); artifact is resumable: {args.artifact}",
            file=sys.stderr,
        )
        return EXIT_FAILURE
    writer.finalize(point.usage)
    print(f"resume complete: {args.artifact}")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        report = replay_artifact(args.artifact)
    except (ArtifactError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if report.ok:
        print(f"verified: {report.events_checked} events, zero divergences")
        return EXIT_OK
    print(f"divergence: {report.first_divergence}", file=sys.stderr)
    return EXIT_DIVERGED


def cmd_analyze(args) -> int:
    loaded = []
    for path in args.artifacts:
        try:
            cfg, result = load_result(path)
        except (ArtifactError, FileNotFoundError) as exc:
            print(f"error: cannot load {path}: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        label = os.path.basename(os.path.normpath(path))
        loaded.append((label, cfg, result))

    keys = {compatibility_key(cfg) for _label, cfg, _result in loaded}
    if len(keys) > 1 and not args.force:
        print(
            "error: artifacts have incompatible configs (beyond the seed); pass --force to combine anyway",
            file=sys.stderr,
        )
        return EXIT_FAILURE

    os.makedirs(args.out, exist_ok=True)
    stats_rows = []
    series = []
    for label, _cfg, result in loaded:
        stats = generation_stats(result)
        stats_rows.extend((label, st) for st in stats)
        series.append(average_final_resources(result))
        write_donation_matrix_csv(
            os.path.join(args.out, f"donation_matrix_{label}.csv"),
            donation_matrix(result),
        )
    write_generation_stats_csv(os.path.join(args.out, "generation_stats.csv"), stats_rows)

    generations = [st.generation for _label, st in stats_rows[: len(series[0])]]
    if len(series) >= 2:
        pairs = sem_across_runs(series)
        means = [m for m, _ in pairs]
        sems = [s for _, s in pairs]
    else:
        print("warning: single run; SEM columns left empty", file=sys.stderr)
        means = series[0]
        sems = None
    write_summary_csv(os.path.join(args.out, "summary.csv"), generations, means, sems, len(series))
    print(f"analysis written to {args.out}")

    if args.figures:
        try:
            from donorgame_figures import render_default_figures
        except ImportError:
            print(
                "note: figures package not installed; skipping figure rendering",
                file=sys.stderr,
            )
            return EXIT_OK
        paths = render_default_figures(args.out)
        for p in paths:
            print(f"figure written: {p}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="donorgame", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a YAML config")
    p_run.add_argument("--config", required=True, help="path to YAML config")
    p_run.add_argument("--output-dir", default=None, help="artifact directory (overrides config)")
    p_run.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_run.add_argument("--ablate", default=None, metavar="KEY=V1,V2,...", help="sweep one config key")
    p_run.add_argument(
        "--stop-after-generation",
        type=int,
        default=None,
        help="stop early after this generation (artifact stays resumable)",
    )
    p_run.set_defaults(func=cmd_run)

    p_ablate = sub.add_parser("ablate", help="run a single-key sweep (sugar over run)")
    p_ablate.add_argument("sweep", metavar="KEY=V1,V2,...", help="e.g. multiplier=1.5,2,3")
    p_ablate.add_argument("--config", required=True)
    p_ablate.add_argument("--output-dir", default=None)
    p_ablate.add_argument("--seed", type=int, default=None)
    p_ablate.set_defaults(func=cmd_ablate)

    p_resume = sub.add_parser("resume", help="continue an interrupted artifact")
    p_resume.add_argument("artifact")
    p_resume.set_defaults(func=cmd_resume)

    p_replay = sub.add_parser("replay", help="verify an artifact against the engine")
    p_replay.add_argument("artifact")
    p_replay.set_defaults(func=cmd_replay)

    p_analyze = sub.add_parser("analyze", help="aggregate artifacts into CSV tables")
    p_analyze.add_argument("artifacts", nargs="+")
    p_analyze.add_argument("--out", required=True, help="output directory for CSVs")
    p_analyze.add_argument("--force", action="store_true", help="combine incompatible configs")
    p_analyze.add_argument(
        "--figures",
        action="store_true",
        help="also render figures (requires the donorgame-figures package)",
    )
    p_analyze.set_defaults(func=cmd_analyze)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
