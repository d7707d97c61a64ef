"""Command-line front end: gen, run, eval, record.

Every command is reproducible from its flags, seed, and input files alone.
Flag precedence is CLI > config file > defaults; the config file is a single
JSON object using the same keys as the long flags (underscored). Logs go to
standard error, data to files or standard output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .env_graph import (
    DEFAULT_ROOM_LABELS,
    EnvironmentGraph,
    Episode,
    EpisodeFormatError,
    GenerationError,
    GraphFormatError,
    generate_synthetic,
    load_episodes,
    load_graph,
    write_episodes,
    write_graph,
)
from .eval_metrics import (
    DEFAULT_SUCCESS_RADIUS_M,
    EpisodeResult,
    build_report,
    judge_episode,
    load_results,
    render_report,
    write_results,
)
from .grounding import (
    GroundingScorer,
    OracleScorer,
    RecordingScorer,
    RemoteScorer,
    ReplayScorer,
    ScoreTable,
    ScoringError,
)
from .instruction import DEFAULT_MAX_KEYPHRASE_WORDS, decompose
from .policy import (
    POLICY_CLIP_NAV,
    POLICY_RANDOM,
    POLICY_SEQ_CLIP_NAV,
    PolicyConfig,
    Trajectory,
    run_clip_nav,
    run_random_walk,
    run_seq_clip_nav,
)

SCORER_URL_ENV = "ZSNAV_SCORER_URL"

_RUN_DEFAULTS: dict = {
    "environment": None,
    "episodes": None,
    "policy": POLICY_CLIP_NAV,
    "scorer": "oracle",
    "score_table": None,
    "scorer_url": None,
    "decay": 0.8,
    "noise": 0.0,
    "seed": 0,
    "split_label": "unseen",
    "success_radius": DEFAULT_SUCCESS_RADIUS_M,
    "jobs": 1,
    "max_keyphrase_words": DEFAULT_MAX_KEYPHRASE_WORDS,
    "stop_threshold": 0.8,
    "advance_threshold": 0.8,
    "backtrack_threshold": 0.55,
    "window_n": 3,
    "max_steps": 16,
    "random_walk_steps": 8,
    "count_backtrack_steps": True,
    "out_trajectories": None,
    "out_results": None,
    "out_table": None,
}


class ConfigError(ValueError):
    """Run configuration is incomplete or contradictory."""


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file mirroring the run flags")
    parser.add_argument("--environment", help="environment JSON file")
    parser.add_argument("--episodes", help="episode JSON file")
    parser.add_argument(
        "--policy", choices=[POLICY_RANDOM, POLICY_CLIP_NAV, POLICY_SEQ_CLIP_NAV]
    )
    parser.add_argument("--scorer", choices=["oracle", "replay", "remote"])
    parser.add_argument("--score-table", dest="score_table", help="replay score table file")
    parser.add_argument("--scorer-url", dest="scorer_url", help="remote scorer base URL")
    parser.add_argument("--decay", type=float, help="oracle distance decay")
    parser.add_argument("--noise", type=float, help="oracle additive noise scale")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--split-label", dest="split_label", choices=["seen", "unseen"])
    parser.add_argument("--success-radius", dest="success_radius", type=float)
    parser.add_argument("--jobs", type=int, help="parallel episode workers")
    parser.add_argument("--max-keyphrase-words", dest="max_keyphrase_words", type=int)
    parser.add_argument("--stop-threshold", dest="stop_threshold", type=float)
    parser.add_argument("--advance-threshold", dest="advance_threshold", type=float)
    parser.add_argument("--backtrack-threshold", dest="backtrack_threshold", type=float)
    parser.add_argument("--window-n", dest="window_n", type=int)
    parser.add_argument("--max-steps", dest="max_steps", type=int)
    parser.add_argument("--random-walk-steps", dest="random_walk_steps", type=int)
    parser.add_argument(
        "--count-backtrack-steps",
        dest="count_backtrack_steps",
        choices=["true", "false"],
        help="whether reverse hops consume the step budget",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zsnav",
        description="Zero-shot language-guided navigation on viewpoint graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic world and episodes")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--nodes", type=int, default=50)
    gen.add_argument("--labels", default=",".join(DEFAULT_ROOM_LABELS), help="comma-separated room labels")
    gen.add_argument("--branching", type=float, default=0.3)
    gen.add_argument("--episode-count", dest="episode_count", type=int, default=5)
    gen.add_argument("--out-dir", dest="out_dir", required=True)

    run = sub.add_parser("run", help="run a policy over an episode file")
    _add_run_flags(run)
    run.add_argument("--out-trajectories", dest="out_trajectories", help="trajectory JSONL output")
    run.add_argument("--out-results", dest="out_results", help="episode results JSONL output")

    ev = sub.add_parser("eval", help="compute metrics over result files")
    ev.add_argument("--seen", action="append", required=True, help="seen-split results file (repeatable)")
    ev.add_argument("--unseen", action="append", required=True, help="unseen-split results file (repeatable)")
    ev.add_argument("--format", choices=["json", "csv", "table"], default="json")
    ev.add_argument("--out", help="report output file (default stdout)")

    rec = sub.add_parser("record", help="run episodes and persist every score queried")
    _add_run_flags(rec)
    rec.add_argument("--out-table", dest="out_table", help="score table output file")
    return parser


def _merge_config(args: argparse.Namespace) -> dict:
    merged = dict(_RUN_DEFAULTS)
    if args.config:
        try:
            file_config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        unknown = set(file_config) - set(_RUN_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_config)
    for key in _RUN_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            if key == "count_backtrack_steps" and isinstance(value, str):
                value = value == "true"
            merged[key] = value
    if not merged["environment"]:
        raise ConfigError("an environment file is required (--environment)")
    if not merged["episodes"]:
        raise ConfigError("an episode file is required (--episodes)")
    if merged["score_table"] and merged["scorer"] != "replay":
        raise ConfigError("--score-table is only valid with --scorer replay")
    if merged["scorer_url"] and merged["scorer"] != "remote":
        raise ConfigError("--scorer-url is only valid with --scorer remote")
    return merged


def _build_scorer(merged: dict, graph: EnvironmentGraph) -> GroundingScorer | None:
    if merged["policy"] == POLICY_RANDOM:
        return None
    kind = merged["scorer"]
    if kind == "oracle":
        return OracleScorer(
            graph, decay=merged["decay"], noise_scale=merged["noise"], seed=merged["seed"]
        )
    if kind == "replay":
        if not merged["score_table"]:
            raise ConfigError("replay scorer requires --score-table")
        return ReplayScorer(graph, ScoreTable.from_file(merged["score_table"]))
    if kind == "remote":
        url = os.environ.get(SCORER_URL_ENV) or merged["scorer_url"]
        if not url:
            raise ConfigError(f"remote scorer requires --scorer-url or {SCORER_URL_ENV}")
        return RemoteScorer(url)
    raise ConfigError(f"unknown scorer {kind!r}")


def _execute_episodes(
    graph: EnvironmentGraph,
    episodes: Sequence[Episode],
    scorer: GroundingScorer | None,
    merged: dict,
) -> list[tuple[Trajectory, EpisodeResult]]:
    cfg = PolicyConfig(
        stop_threshold=merged["stop_threshold"],
        advance_threshold=merged["advance_threshold"],
        backtrack_threshold=merged["backtrack_threshold"],
        window_n=merged["window_n"],
        max_steps=merged["max_steps"],
        random_walk_steps=merged["random_walk_steps"],
        seed=merged["seed"],
        count_backtrack_steps=merged["count_backtrack_steps"],
    )
    policy = merged["policy"]

    def run_one(episode: Episode) -> tuple[Trajectory, EpisodeResult]:
        if policy == POLICY_RANDOM:
            trajectory = run_random_walk(graph, episode, cfg)
        else:
            decomposed = decompose(episode.instruction, max_words=merged["max_keyphrase_words"])
            runner = run_clip_nav if policy == POLICY_CLIP_NAV else run_seq_clip_nav
            trajectory = runner(graph, scorer, episode, cfg, decomposed=decomposed)
        result = judge_episode(
            graph,
            episode,
            trajectory,
            success_radius_m=merged["success_radius"],
            split_label=merged["split_label"],
        )
        return trajectory, result

    jobs = max(1, int(merged["jobs"]))
    if jobs == 1 or len(episodes) <= 1:
        outcomes = [run_one(ep) for ep in episodes]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_one, episodes))
    # Output order is by episode id no matter the completion order.
    outcomes.sort(key=lambda pair: pair[0].episode_id)
    return outcomes


def _write_trajectories(trajectories: Sequence[Trajectory], path: str | Path) -> None:
    lines = [
        json.dumps(t.to_dict(), sort_keys=True, separators=(",", ":")) for t in trajectories
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def cmd_gen(args: argparse.Namespace) -> int:
    labels = tuple(label.strip() for label in args.labels.split(",") if label.strip())
    graph, episodes = generate_synthetic(
        seed=args.seed,
        node_count=args.nodes,
        room_labels=labels,
        branching=args.branching,
        episode_count=args.episode_count,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    env_path = out_dir / "environment.json"
    ep_path = out_dir / "episodes.json"
    write_graph(graph, env_path)
    write_episodes(episodes, ep_path)
    _log(f"gen: wrote {env_path} ({len(graph.viewpoints)} nodes) and {ep_path} ({len(episodes)} episodes)")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    merged = _merge_config(args)
    if not merged["out_trajectories"] or not merged["out_results"]:
        raise ConfigError("run requires --out-trajectories and --out-results")
    graph = load_graph(merged["environment"])
    episodes = load_episodes(merged["episodes"], graph)
    scorer = _build_scorer(merged, graph)
    outcomes = _execute_episodes(graph, episodes, scorer, merged)
    _write_trajectories([t for t, _ in outcomes], merged["out_trajectories"])
    write_results([r for _, r in outcomes], merged["out_results"])
    succeeded = sum(1 for _, r in outcomes if r.success)
    _log(f"run: {len(outcomes)} episodes, {succeeded} succeeded")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    def read_group(paths: Sequence[str], label: str) -> list[EpisodeResult]:
        group: list[EpisodeResult] = []
        for path in paths:
            group.extend(replace(r, split_label=label) for r in load_results(path))
        if not group:
            raise ConfigError(f"missing split: no results loaded for {label!r}")
        return group

    seen = read_group(args.seen, "seen")
    unseen = read_group(args.unseen, "unseen")
    report = build_report(seen, unseen)
    document = render_report(report, args.format)
    if args.out:
        Path(args.out).write_text(document)
        _log(f"eval: wrote {args.out}")
    else:
        sys.stdout.write(document)
    return 0


def cmd_record(args: argparse.Namespace) -> int:
    merged = _merge_config(args)
    if not merged["out_table"]:
        raise ConfigError("record requires --out-table")
    if merged["scorer"] not in ("oracle", "remote"):
        raise ConfigError("record requires an oracle or remote scorer")
    if merged["policy"] == POLICY_RANDOM:
        raise ConfigError("record requires a grounding policy (clip-nav or seq-clip-nav)")
    graph = load_graph(merged["environment"])
    episodes = load_episodes(merged["episodes"], graph)
    recorder = RecordingScorer(_build_scorer(merged, graph), graph)
    out_path = Path(merged["out_table"])
    tmp_path = out_path.with_suffix(out_path.suffix + ".tmp")
    try:
        outcomes = _execute_episodes(graph, episodes, recorder, merged)
        recorder.table.to_file(tmp_path)
        os.replace(tmp_path, out_path)
    except BaseException:
        tmp_path.unlink(missing_ok=True)
        raise
    _log(f"record: {len(outcomes)} episodes, {len(recorder.table)} scores -> {out_path}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen": cmd_gen, "run": cmd_run, "eval": cmd_eval, "record": cmd_record}
    try:
        return handlers[args.command](args)
    except (
        ConfigError,
        GenerationError,
        GraphFormatError,
        EpisodeFormatError,
        ScoringError,
        ValueError,
        OSError,
    ) as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
