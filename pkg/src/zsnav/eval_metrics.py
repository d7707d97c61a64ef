"""Episode judging and batch metrics.

An episode succeeds when the agent stopped (not a dead end) with its final
node within the success radius of a goal, measured along the graph, and
oracle-succeeds when any visited node comes that close. Batch metrics are
success rate, oracle success rate, success weighted by inverse path length,
and the relative change in success between the seen and unseen groups:

    rcs = |seen - unseen| / max(seen, unseen) * 100

Reports follow the usual results-table shape: per-split SR / OSR / SPL
columns with an RCS column per metric, plus the best per-scan oracle rate.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .env_graph import EnvironmentGraph, Episode, metric_distances
from .policy import STOP_DEAD_END, Trajectory

DEFAULT_SUCCESS_RADIUS_M = 3.0

SPLIT_SEEN = "seen"
SPLIT_UNSEEN = "unseen"


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: str
    scan_id: str
    split_label: str
    success: bool
    oracle_success: bool
    path_length_m: float
    shortest_length_m: float
    steps: int

    def __post_init__(self):
        if self.split_label not in (SPLIT_SEEN, SPLIT_UNSEEN):
            raise ValueError(f"split_label must be 'seen' or 'unseen', got {self.split_label!r}")
        if self.path_length_m < 0.0:
            raise ValueError(f"path_length_m must be >= 0, got {self.path_length_m}")

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "scan_id": self.scan_id,
            "split_label": self.split_label,
            "success": self.success,
            "oracle_success": self.oracle_success,
            "path_length_m": self.path_length_m,
            "shortest_length_m": self.shortest_length_m,
            "steps": self.steps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EpisodeResult":
        return cls(
            episode_id=str(data["episode_id"]),
            scan_id=str(data["scan_id"]),
            split_label=str(data["split_label"]),
            success=bool(data["success"]),
            oracle_success=bool(data["oracle_success"]),
            path_length_m=float(data["path_length_m"]),
            shortest_length_m=float(data["shortest_length_m"]),
            steps=int(data["steps"]),
        )


def judge_episode(
    g: EnvironmentGraph,
    episode: Episode,
    trajectory: Trajectory,
    success_radius_m: float = DEFAULT_SUCCESS_RADIUS_M,
    split_label: str = SPLIT_UNSEEN,
) -> EpisodeResult:
    """Score one trajectory against its episode.

    Path length sums every traversed edge, reverse backtrack hops included.
    Dead-end stops are never successes, but nodes visited before a dead end
    still count toward oracle success.
    """
    if trajectory.scan_id != episode.scan_id or trajectory.episode_id != episode.episode_id:
        raise ValueError(
            f"trajectory {trajectory.episode_id!r}/{trajectory.scan_id!r} does not match "
            f"episode {episode.episode_id!r}/{episode.scan_id!r}"
        )
    if not trajectory.nodes or trajectory.nodes[0] != episode.start:
        raise ValueError(f"trajectory must start at {episode.start!r}")
    for node in trajectory.nodes:
        if node not in g.viewpoints:
            raise ValueError(f"trajectory visits unknown viewpoint {node!r}")

    goal_distance = metric_distances(g, episode.goals)
    path_length = 0.0
    for a, b in zip(trajectory.nodes, trajectory.nodes[1:]):
        try:
            path_length += g.edge_length(a, b)
        except KeyError:
            raise ValueError(f"trajectory hop {a!r} -> {b!r} is not a graph edge") from None

    stopped = trajectory.stop_reason != STOP_DEAD_END
    final = trajectory.nodes[-1]
    success = stopped and goal_distance[final] <= success_radius_m
    oracle = any(goal_distance[node] <= success_radius_m for node in trajectory.nodes)
    return EpisodeResult(
        episode_id=episode.episode_id,
        scan_id=episode.scan_id,
        split_label=split_label,
        success=success,
        oracle_success=oracle,
        path_length_m=path_length,
        shortest_length_m=episode.shortest_length,
        steps=len(trajectory.nodes) - 1,
    )


def sr(results: Sequence[EpisodeResult]) -> float:
    """Success rate in percent."""
    if not results:
        raise ValueError("sr over an empty result list")
    return 100.0 * sum(1 for r in results if r.success) / len(results)


def osr(results: Sequence[EpisodeResult]) -> float:
    """Oracle success rate in percent."""
    if not results:
        raise ValueError("osr over an empty result list")
    return 100.0 * sum(1 for r in results if r.oracle_success) / len(results)


def spl(results: Sequence[EpisodeResult]) -> float:
    """Success weighted by inverse path length, mean over episodes."""
    if not results:
        raise ValueError("spl over an empty result list")
    total = 0.0
    for r in results:
        if r.shortest_length_m <= 0.0:
            raise ValueError(f"episode {r.episode_id!r} has non-positive shortest length")
        if r.success:
            total += r.shortest_length_m / max(r.path_length_m, r.shortest_length_m)
    return total / len(results)


def rcs(seen: float, unseen: float) -> float:
    """Relative change in success between the two splits, in percent."""
    if seen < 0.0 or unseen < 0.0:
        raise ValueError(f"rcs inputs must be >= 0, got {seen}, {unseen}")
    if max(seen, unseen) == 0.0:
        raise ValueError("rcs is undefined when both values are zero")
    return abs(seen - unseen) / max(seen, unseen) * 100.0


def best_osr_per_scan(results: Sequence[EpisodeResult]) -> dict[str, float]:
    """Oracle success rate grouped by scan id."""
    by_scan: dict[str, list[EpisodeResult]] = {}
    for r in results:
        by_scan.setdefault(r.scan_id, []).append(r)
    return {scan: osr(group) for scan, group in sorted(by_scan.items())}


@dataclass(frozen=True)
class SplitMetrics:
    sr: float
    osr: float
    spl: float
    episodes: int

    def to_dict(self) -> dict:
        return {"sr": self.sr, "osr": self.osr, "spl": self.spl, "episodes": self.episodes}

    @classmethod
    def from_dict(cls, data: dict) -> "SplitMetrics":
        return cls(sr=data["sr"], osr=data["osr"], spl=data["spl"], episodes=data["episodes"])


@dataclass(frozen=True)
class MetricsReport:
    seen: SplitMetrics
    unseen: SplitMetrics
    rcs_sr: float | None
    rcs_osr: float | None
    rcs_spl: float | None
    best_osr_by_scan: dict[str, float]
    best_osr: float

    def to_dict(self) -> dict:
        return {
            "seen": self.seen.to_dict(),
            "unseen": self.unseen.to_dict(),
            "rcs": {"sr": self.rcs_sr, "osr": self.rcs_osr, "spl": self.rcs_spl},
            "best_osr_by_scan": dict(self.best_osr_by_scan),
            "best_osr": self.best_osr,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(
            seen=SplitMetrics.from_dict(data["seen"]),
            unseen=SplitMetrics.from_dict(data["unseen"]),
            rcs_sr=data["rcs"]["sr"],
            rcs_osr=data["rcs"]["osr"],
            rcs_spl=data["rcs"]["spl"],
            best_osr_by_scan=dict(data["best_osr_by_scan"]),
            best_osr=data["best_osr"],
        )


def _split_metrics(results: Sequence[EpisodeResult]) -> SplitMetrics:
    return SplitMetrics(sr=sr(results), osr=osr(results), spl=spl(results), episodes=len(results))


def _rcs_or_none(seen: float, unseen: float) -> float | None:
    try:
        return rcs(seen, unseen)
    except ValueError:
        return None


def build_report(
    seen_results: Sequence[EpisodeResult], unseen_results: Sequence[EpisodeResult]
) -> MetricsReport:
    if not seen_results:
        raise ValueError("missing split: no seen results")
    if not unseen_results:
        raise ValueError("missing split: no unseen results")
    seen = _split_metrics(seen_results)
    unseen = _split_metrics(unseen_results)
    by_scan = best_osr_per_scan(list(seen_results) + list(unseen_results))
    return MetricsReport(
        seen=seen,
        unseen=unseen,
        rcs_sr=_rcs_or_none(seen.sr, unseen.sr),
        rcs_osr=_rcs_or_none(seen.osr, unseen.osr),
        rcs_spl=_rcs_or_none(seen.spl, unseen.spl),
        best_osr_by_scan=by_scan,
        best_osr=max(by_scan.values()),
    )


def _fmt(value: float | None, places: int = 2) -> str:
    return "n/a" if value is None else f"{value:.{places}f}"


def render_report(report: MetricsReport, fmt: str = "json") -> str:
    """Serialize a report; json is lossless, csv and table are for reading."""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        out = io.StringIO()
        out.write("row,sr,osr,spl,episodes\n")
        for label, split in (("seen", report.seen), ("unseen", report.unseen)):
            out.write(f"{label},{split.sr},{split.osr},{split.spl},{split.episodes}\n")
        out.write(
            f"rcs,{_fmt(report.rcs_sr)},{_fmt(report.rcs_osr)},{_fmt(report.rcs_spl)},\n"
        )
        return out.getvalue()
    if fmt == "table":
        header = (
            f"{'':10s} {'SR Seen':>8s} {'SR Uns':>8s} {'RCS':>7s} "
            f"{'OSR Seen':>8s} {'OSR Uns':>8s} {'RCS':>7s} "
            f"{'SPL Seen':>8s} {'SPL Uns':>8s} {'RCS':>7s}"
        )
        row = (
            f"{'run':10s} {report.seen.sr:8.2f} {report.unseen.sr:8.2f} {_fmt(report.rcs_sr):>7s} "
            f"{report.seen.osr:8.2f} {report.unseen.osr:8.2f} {_fmt(report.rcs_osr):>7s} "
            f"{report.seen.spl:8.3f} {report.unseen.spl:8.3f} {_fmt(report.rcs_spl):>7s}"
        )
        lines = [header, row, ""]
        lines.append(f"best OSR per scan (overall best {report.best_osr:.2f}):")
        for scan, value in report.best_osr_by_scan.items():
            lines.append(f"  {scan:20s} {value:8.2f}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def write_results(results: Iterable[EpisodeResult], path: str | Path) -> None:
    """JSON lines, one EpisodeResult per line, compact and key-sorted."""
    lines = [json.dumps(r.to_dict(), sort_keys=True, separators=(",", ":")) for r in results]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_results(path: str | Path) -> list[EpisodeResult]:
    results = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            results.append(EpisodeResult.from_dict(json.loads(line)))
    return results
