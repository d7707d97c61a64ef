"""Discrete panoramic navigation environments.

A world is an undirected graph of viewpoints. Every viewpoint carries four
view splits, one per ~90 degree quarter of the panorama, and each navigable
neighbor is visible from exactly one split (strict partition). Worlds are
immutable once constructed and safe to share across episode workers.

The module also ships a synthetic world generator: viewpoints are grown on
a 2-D unit lattice (scaled by a fixed spacing), so every edge length equals
the spacing exactly and split assignment by heading quadrant puts at most
one neighbor in each split. Labels are assigned to contiguous regions so
that episode goals sit a realistic number of hops away from their starts.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .instruction import Instruction
from .rng import derive_stream

LENGTH_TOLERANCE = 1e-6

DEFAULT_ROOM_LABELS = (
    "kitchen",
    "bedroom",
    "bathroom",
    "hallway",
    "office",
    "lounge",
    "garage",
    "library",
)

# Verbs used in generated activity components; all appear in the
# instruction module's action-verb list so generated text splits cleanly.
_ACTIVITY_VERBS = ("clean", "dust", "wash")

_SPACING = 2.0

# Lattice directions in split order: east, north, west, south.
_LATTICE_STEPS = ((1, 0), (0, 1), (-1, 0), (0, -1))


class GraphFormatError(ValueError):
    """Environment file violates the schema or a graph invariant."""


class EpisodeFormatError(ValueError):
    """Episode file is malformed or inconsistent with its graph."""


class GenerationError(ValueError):
    """Synthetic world parameters cannot produce a valid world."""


@dataclass(frozen=True)
class ViewSplit:
    """One quarter-panorama image and the neighbors navigable through it."""

    split_index: int
    image_ref: str
    visible_neighbors: tuple[str, ...]
    semantic_tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class Viewpoint:
    """A panoramic node: metric position plus exactly four view splits."""

    id: str
    position: tuple[float, float, float]
    splits: tuple[ViewSplit, ...]

    def split(self, index: int) -> ViewSplit:
        return self.splits[index]

    @property
    def tags(self) -> frozenset[str]:
        return frozenset(tag for s in self.splits for tag in s.semantic_tags)


@dataclass(frozen=True)
class Episode:
    """A navigation task: start viewpoint, goal set, and guidance text."""

    episode_id: str
    scan_id: str
    start: str
    goals: frozenset[str]
    instruction: Instruction
    shortest_length: float


@dataclass(frozen=True, eq=True)
class EnvironmentGraph:
    """Immutable world: viewpoints, split-partitioned adjacency, edges.

    Edges are stored normalized (a < b, sorted) with metric lengths.
    All invariants are validated at construction; invalid input raises
    GraphFormatError rather than being repaired.
    """

    scan_id: str
    viewpoints: dict[str, Viewpoint]
    edges: tuple[tuple[str, str, float], ...]
    _adjacency: dict[str, dict[str, float]] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self):
        adjacency: dict[str, dict[str, float]] = {vid: {} for vid in self.viewpoints}
        for a, b, length in self.edges:
            if a not in self.viewpoints or b not in self.viewpoints:
                raise GraphFormatError(f"edge ({a!r}, {b!r}) references unknown viewpoint")
            if a == b:
                raise GraphFormatError(f"self-loop edge on {a!r}")
            if not (isinstance(length, (int, float)) and math.isfinite(length) and length > 0.0):
                raise GraphFormatError(f"edge ({a!r}, {b!r}) has invalid length {length!r}")
            if b in adjacency[a]:
                raise GraphFormatError(f"duplicate edge ({a!r}, {b!r})")
            adjacency[a][b] = length
            adjacency[b][a] = length
        object.__setattr__(self, "_adjacency", adjacency)
        self._validate()

    def _validate(self) -> None:
        for vid, vp in self.viewpoints.items():
            if vp.id != vid:
                raise GraphFormatError(f"viewpoint keyed {vid!r} carries id {vp.id!r}")
            if len(vp.splits) != 4:
                raise GraphFormatError(f"viewpoint {vid!r} has {len(vp.splits)} splits, expected 4")
            if tuple(s.split_index for s in vp.splits) != (0, 1, 2, 3):
                raise GraphFormatError(f"viewpoint {vid!r} split indices must be 0..3 exactly once")
            seen: dict[str, int] = {}
            for s in vp.splits:
                for nb in s.visible_neighbors:
                    if nb not in self.viewpoints:
                        raise GraphFormatError(
                            f"viewpoint {vid!r} split {s.split_index} names unknown neighbor {nb!r}"
                        )
                    if nb == vid:
                        raise GraphFormatError(f"viewpoint {vid!r} lists itself as a neighbor")
                    if nb in seen:
                        raise GraphFormatError(
                            f"neighbor {nb!r} of {vid!r} appears in splits {seen[nb]} and {s.split_index}"
                        )
                    seen[nb] = s.split_index
            if set(seen) != set(self._adjacency[vid]):
                raise GraphFormatError(
                    f"viewpoint {vid!r}: split neighbors {sorted(seen)} do not match "
                    f"edge adjacency {sorted(self._adjacency[vid])}"
                )
        if self.viewpoints and len(self._component(next(iter(self.viewpoints)))) != len(self.viewpoints):
            raise GraphFormatError("graph is not connected")

    def _component(self, start: str) -> set[str]:
        seen = {start}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            for nb in self._adjacency[node]:
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        return seen

    def neighbors(self, node_id: str) -> tuple[str, ...]:
        return tuple(sorted(self._adjacency[node_id]))

    def edge_length(self, a: str, b: str) -> float:
        return self._adjacency[a][b]

    def position(self, node_id: str) -> tuple[float, float, float]:
        return self.viewpoints[node_id].position

    def euclidean(self, a: str, b: str) -> float:
        pa, pb = self.position(a), self.position(b)
        return math.dist(pa, pb)


def shortest_path(g: EnvironmentGraph, a: str, b: str) -> tuple[float, list[str]]:
    """Metric shortest path with a deterministic tie-break.

    Among all minimum-length paths the lexicographically smallest node
    sequence is returned. Heap entries carry the full path so ties resolve
    by tuple comparison; fine at desk scale.
    """
    for node in (a, b):
        if node not in g.viewpoints:
            raise KeyError(f"unknown viewpoint id {node!r}")
    if a == b:
        return 0.0, [a]
    heap: list[tuple[float, tuple[str, ...]]] = [(0.0, (a,))]
    done: set[str] = set()
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in done:
            continue
        done.add(node)
        if node == b:
            return dist, list(path)
        for nb in g.neighbors(node):
            if nb not in done:
                heapq.heappush(heap, (dist + g.edge_length(node, nb), path + (nb,)))
    raise GraphFormatError(f"no path from {a!r} to {b!r}")  # unreachable on connected graphs


def metric_distances(g: EnvironmentGraph, sources: Iterable[str]) -> dict[str, float]:
    """Multi-source Dijkstra: metric distance from the nearest source."""
    dist: dict[str, float] = {}
    heap = []
    for s in sorted(set(sources)):
        if s not in g.viewpoints:
            raise KeyError(f"unknown viewpoint id {s!r}")
        heapq.heappush(heap, (0.0, s))
    while heap:
        d, node = heapq.heappop(heap)
        if node in dist:
            continue
        dist[node] = d
        for nb in g.neighbors(node):
            if nb not in dist:
                heapq.heappush(heap, (d + g.edge_length(node, nb), nb))
    return dist


def hop_distances(g: EnvironmentGraph, sources: Iterable[str]) -> dict[str, int]:
    """Multi-source BFS: hop count to the nearest source."""
    dist: dict[str, int] = {}
    queue: deque[str] = deque()
    for s in sorted(set(sources)):
        if s not in g.viewpoints:
            raise KeyError(f"unknown viewpoint id {s!r}")
        dist[s] = 0
        queue.append(s)
    while queue:
        node = queue.popleft()
        for nb in g.neighbors(node):
            if nb not in dist:
                dist[nb] = dist[node] + 1
                queue.append(nb)
    return dist


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------


def graph_to_dict(g: EnvironmentGraph) -> dict:
    return {
        "scan_id": g.scan_id,
        "nodes": [
            {
                "id": vp.id,
                "position": list(vp.position),
                "splits": [
                    {
                        "split_index": s.split_index,
                        "image_ref": s.image_ref,
                        "visible_neighbors": list(s.visible_neighbors),
                        "semantic_tags": list(s.semantic_tags),
                    }
                    for s in vp.splits
                ],
            }
            for vp in (g.viewpoints[vid] for vid in sorted(g.viewpoints))
        ],
        "edges": [{"a": a, "b": b, "length": length} for a, b, length in g.edges],
    }


def graph_from_dict(data: dict) -> EnvironmentGraph:
    try:
        scan_id = data["scan_id"]
        raw_nodes = data["nodes"]
        raw_edges = data["edges"]
    except (KeyError, TypeError) as exc:
        raise GraphFormatError(f"missing top-level field: {exc}") from exc
    if not isinstance(scan_id, str) or not isinstance(raw_nodes, list) or not isinstance(raw_edges, list):
        raise GraphFormatError("scan_id must be a string, nodes and edges must be lists")

    viewpoints: dict[str, Viewpoint] = {}
    for raw in raw_nodes:
        try:
            vid = raw["id"]
            position = raw["position"]
            raw_splits = raw["splits"]
        except (KeyError, TypeError) as exc:
            raise GraphFormatError(f"node record missing field: {exc}") from exc
        if not isinstance(vid, str):
            raise GraphFormatError(f"node id must be a string, got {vid!r}")
        if vid in viewpoints:
            raise GraphFormatError(f"duplicate viewpoint id {vid!r}")
        if not (isinstance(position, list) and len(position) == 3):
            raise GraphFormatError(f"viewpoint {vid!r} position must be a 3-vector")
        if not isinstance(raw_splits, list) or len(raw_splits) != 4:
            raise GraphFormatError(f"viewpoint {vid!r} must declare exactly 4 splits")
        splits = []
        for raw_split in raw_splits:
            try:
                splits.append(
                    ViewSplit(
                        split_index=int(raw_split["split_index"]),
                        image_ref=str(raw_split["image_ref"]),
                        visible_neighbors=tuple(sorted(raw_split["visible_neighbors"])),
                        semantic_tags=tuple(raw_split["semantic_tags"]),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise GraphFormatError(f"viewpoint {vid!r} has a malformed split: {exc}") from exc
        splits.sort(key=lambda s: s.split_index)
        try:
            coords = tuple(float(c) for c in position)
        except (TypeError, ValueError) as exc:
            raise GraphFormatError(f"viewpoint {vid!r} position is not numeric: {exc}") from exc
        viewpoints[vid] = Viewpoint(id=vid, position=coords, splits=tuple(splits))

    edges = []
    for raw in raw_edges:
        try:
            a, b, length = raw["a"], raw["b"], float(raw["length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphFormatError(f"malformed edge record: {exc}") from exc
        edges.append((min(a, b), max(a, b), length))
    edges.sort()
    return EnvironmentGraph(scan_id=scan_id, viewpoints=viewpoints, edges=tuple(edges))


def load_graph(source: str | Path) -> EnvironmentGraph:
    """Load and fully validate an environment file. Rejects, never repairs."""
    try:
        text = Path(source).read_text()
    except OSError as exc:
        raise GraphFormatError(f"cannot read environment file {source}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"environment file {source} is not valid JSON: {exc}") from exc
    return graph_from_dict(data)


def write_graph(g: EnvironmentGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g), indent=2) + "\n")


def episodes_to_list(episodes: Sequence[Episode]) -> list[dict]:
    return [
        {
            "episode_id": ep.episode_id,
            "scan_id": ep.scan_id,
            "start": ep.start,
            "goals": sorted(ep.goals),
            "instruction": ep.instruction.raw,
            "shortest_length": ep.shortest_length,
        }
        for ep in episodes
    ]


def load_episodes(source: str | Path, graph: EnvironmentGraph) -> list[Episode]:
    """Load episodes and re-verify each declared shortest_length via Dijkstra."""
    try:
        data = json.loads(Path(source).read_text())
    except OSError as exc:
        raise EpisodeFormatError(f"cannot read episode file {source}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise EpisodeFormatError(f"episode file {source} is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise EpisodeFormatError("episode file must contain a JSON list")
    episodes = []
    for raw in data:
        try:
            ep = Episode(
                episode_id=str(raw["episode_id"]),
                scan_id=str(raw["scan_id"]),
                start=str(raw["start"]),
                goals=frozenset(raw["goals"]),
                instruction=Instruction(str(raw["instruction"])),
                shortest_length=float(raw["shortest_length"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EpisodeFormatError(f"malformed episode record: {exc}") from exc
        if ep.scan_id != graph.scan_id:
            raise EpisodeFormatError(
                f"episode {ep.episode_id!r} targets scan {ep.scan_id!r}, graph is {graph.scan_id!r}"
            )
        if ep.start not in graph.viewpoints:
            raise EpisodeFormatError(f"episode {ep.episode_id!r} start {ep.start!r} not in graph")
        if not ep.goals:
            raise EpisodeFormatError(f"episode {ep.episode_id!r} has an empty goal set")
        for goal in ep.goals:
            if goal not in graph.viewpoints:
                raise EpisodeFormatError(f"episode {ep.episode_id!r} goal {goal!r} not in graph")
        actual = metric_distances(graph, ep.goals)[ep.start]
        if abs(actual - ep.shortest_length) > LENGTH_TOLERANCE:
            raise EpisodeFormatError(
                f"episode {ep.episode_id!r} declares shortest_length {ep.shortest_length}, "
                f"Dijkstra gives {actual}"
            )
        episodes.append(ep)
    return episodes


def write_episodes(episodes: Sequence[Episode], path: str | Path) -> None:
    Path(path).write_text(json.dumps(episodes_to_list(episodes), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Synthetic worlds
# ---------------------------------------------------------------------------


def _grow_lattice(rng, node_count: int) -> tuple[list[tuple[int, int]], list[tuple[int, int, int, int]]]:
    """Grow a connected blob of lattice cells plus its spanning tree edges."""
    order = [(0, 0)]
    occupied = {(0, 0)}
    tree = []
    while len(order) < node_count:
        candidates = [
            cell
            for cell in order
            if any((cell[0] + dx, cell[1] + dy) not in occupied for dx, dy in _LATTICE_STEPS)
        ]
        base = rng.choice(candidates)
        free = sorted(
            (base[0] + dx, base[1] + dy)
            for dx, dy in _LATTICE_STEPS
            if (base[0] + dx, base[1] + dy) not in occupied
        )
        new = rng.choice(free)
        occupied.add(new)
        order.append(new)
        tree.append((base[0], base[1], new[0], new[1]))
    return order, tree


def _assign_region_labels(
    rng, cells: list[tuple[int, int]], adjacency: dict[tuple[int, int], list[tuple[int, int]]],
    room_labels: Sequence[str],
) -> dict[tuple[int, int], str]:
    """Partition the blob into contiguous regions, one room label each."""
    region_count = max(2, min(len(cells), max(len(cells) // 8, len(room_labels) // 2)))
    seeds = list(cells)
    rng.shuffle(seeds)
    seeds = seeds[:region_count]
    region_of: dict[tuple[int, int], int] = {}
    queue: deque[tuple[tuple[int, int], int]] = deque()
    for idx, seed_cell in enumerate(seeds):
        region_of[seed_cell] = idx
        queue.append((seed_cell, idx))
    while queue:
        cell, region = queue.popleft()
        for nb in adjacency[cell]:
            if nb not in region_of:
                region_of[nb] = region
                queue.append((nb, region))
    labels = [rng.choice(list(room_labels)) for _ in range(region_count)]
    return {cell: labels[region_of[cell]] for cell in cells}


def generate_synthetic(
    seed: int,
    node_count: int = 50,
    room_labels: Sequence[str] = DEFAULT_ROOM_LABELS,
    branching: float = 0.3,
    episode_count: int = 5,
) -> tuple[EnvironmentGraph, list[Episode]]:
    """Deterministic desk-scale world: lattice blob, region labels, episodes.

    Episode goals are all viewpoints carrying the chosen room label, with
    the nearest goal between 5 and 8 hops from the start. Raises
    GenerationError when the parameters cannot satisfy that hop range.
    """
    if node_count < 2:
        raise GenerationError(f"node_count must be >= 2, got {node_count}")
    if not room_labels:
        raise GenerationError("room_labels must be non-empty")
    if not 0.0 <= branching <= 1.0:
        raise GenerationError(f"branching must be in [0, 1], got {branching}")

    scan_id = f"synth-{seed}"
    rng = derive_stream(seed, "world")
    cells, tree = _grow_lattice(rng, node_count)
    edge_cells = {(min(a, b), max(a, b)) for a, b in (((x1, y1), (x2, y2)) for x1, y1, x2, y2 in tree)}
    occupied = set(cells)
    for cell in cells:
        for dx, dy in ((1, 0), (0, 1)):  # scan east/north once per pair
            nb = (cell[0] + dx, cell[1] + dy)
            if nb in occupied:
                key = (min(cell, nb), max(cell, nb))
                if key not in edge_cells and rng.random() < branching:
                    edge_cells.add(key)

    cell_adjacency: dict[tuple[int, int], list[tuple[int, int]]] = {c: [] for c in cells}
    for a, b in sorted(edge_cells):
        cell_adjacency[a].append(b)
        cell_adjacency[b].append(a)
    for nbs in cell_adjacency.values():
        nbs.sort()

    label_of = _assign_region_labels(rng, cells, cell_adjacency, room_labels)

    node_id = {cell: f"n{idx:03d}" for idx, cell in enumerate(cells)}
    viewpoints: dict[str, Viewpoint] = {}
    for cell in cells:
        vid = node_id[cell]
        by_split: dict[int, list[str]] = {0: [], 1: [], 2: [], 3: []}
        for nb in cell_adjacency[cell]:
            heading = math.degrees(math.atan2(nb[1] - cell[1], nb[0] - cell[0])) % 360.0
            quadrant = int(((heading + 45.0) % 360.0) // 90.0)
            by_split[quadrant].append(node_id[nb])
        splits = tuple(
            ViewSplit(
                split_index=k,
                image_ref=f"{scan_id}/{vid}/split{k}",
                visible_neighbors=tuple(sorted(by_split[k])),
                semantic_tags=(label_of[cell],),
            )
            for k in range(4)
        )
        viewpoints[vid] = Viewpoint(
            id=vid,
            position=(cell[0] * _SPACING, cell[1] * _SPACING, 0.0),
            splits=splits,
        )

    edges = tuple(
        sorted(
            (
                min(node_id[a], node_id[b]),
                max(node_id[a], node_id[b]),
                math.dist(viewpoints[node_id[a]].position, viewpoints[node_id[b]].position),
            )
            for a, b in edge_cells
        )
    )
    graph = EnvironmentGraph(scan_id=scan_id, viewpoints=viewpoints, edges=edges)

    labels_present = sorted({label_of[c] for c in cells})
    goal_sets = {
        label: sorted(node_id[c] for c in cells if label_of[c] == label) for label in labels_present
    }
    hop_maps = {label: hop_distances(graph, goal_sets[label]) for label in labels_present}
    feasible = sorted(
        (vid, label)
        for label in labels_present
        for vid in sorted(viewpoints)
        if 5 <= hop_maps[label].get(vid, 10**9) <= 8
    )
    if not feasible:
        raise GenerationError(
            f"no (start, label) pair is 5-8 hops apart with node_count={node_count}; "
            "increase node_count or lower branching"
        )

    episodes = []
    for e in range(episode_count):
        start, label = rng.choice(feasible)
        verb = rng.choice(_ACTIVITY_VERBS)
        goals = frozenset(goal_sets[label])
        shortest = metric_distances(graph, goals)[start]
        episodes.append(
            Episode(
                episode_id=f"{scan_id}-ep{e:03d}",
                scan_id=scan_id,
                start=start,
                goals=goals,
                instruction=Instruction(f"to the {label} and {verb} the {label}"),
                shortest_length=shortest,
            )
        )
    return graph, episodes
