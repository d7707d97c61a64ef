"""Grounding scores over (view split, text) pairs.

All backends implement the same small interface and return scores in
[0, 1]. The per-node keyphrase grounding result picks the best of the four
splits (ties to the lowest split index) and the activity score is the max
over splits, which is what the stop condition watches.

Backends:
  OracleScorer   deterministic distance-decay scores on labeled synthetic
                 worlds; the hop count through a split is integer-exact so
                 brute-force verification stays trivial
  ReplayScorer   serves previously recorded scores; misses are errors
  RemoteScorer   speaks the scoring service wire protocol over HTTP
  RecordingScorer  wraps another backend and captures every query
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import requests

from .env_graph import EnvironmentGraph, Viewpoint, hop_distances
from .instruction import phrase_tokens
from .rng import derive_stream

DEFAULT_DECAY = 0.8


class ScoringError(RuntimeError):
    """A grounding backend could not produce a score."""


class ReplayMissError(ScoringError):
    """Replay table has no entry for the requested key."""

    def __init__(self, key: tuple[str, int, str]):
        self.key = key
        super().__init__(f"replay table has no score for (node={key[0]!r}, split={key[1]}, text={key[2]!r})")


class RemoteScorerError(ScoringError):
    """Remote scoring service failed or returned an invalid response."""


@dataclass(frozen=True)
class KgsResult:
    """Keyphrase grounding over one node's four splits."""

    per_split_scores: tuple[float, float, float, float]
    chosen_split: int
    kgs: float

    def to_dict(self) -> dict:
        return {
            "per_split_scores": list(self.per_split_scores),
            "chosen_split": self.chosen_split,
            "kgs": self.kgs,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KgsResult":
        return cls(
            per_split_scores=tuple(data["per_split_scores"]),
            chosen_split=int(data["chosen_split"]),
            kgs=float(data["kgs"]),
        )


class GroundingScorer(ABC):
    """Maps (view image reference, text) to scores in [0, 1]."""

    name: str = "abstract"
    deterministic: bool = True

    @abstractmethod
    def score_texts(self, image_ref: str, texts: Sequence[str]) -> list[float]: ...


def score(scorer: GroundingScorer, image_ref: str, texts: Sequence[str]) -> list[float]:
    """Score texts against one image; validates the backend's output."""
    if not texts:
        raise ValueError("texts must be non-empty")
    values = scorer.score_texts(image_ref, texts)
    if len(values) != len(texts):
        raise ScoringError(
            f"backend {scorer.name!r} returned {len(values)} scores for {len(texts)} texts"
        )
    for text, value in zip(texts, values):
        if not (0.0 <= value <= 1.0):
            raise ScoringError(
                f"backend {scorer.name!r} returned out-of-range score {value!r} for {text!r}"
            )
    return [float(v) for v in values]


def kgs(scorer: GroundingScorer, node: Viewpoint, phrase: str) -> KgsResult:
    """Keyphrase grounding score: best split wins, ties to the lowest index."""
    if not phrase.strip():
        raise ValueError("phrase must be non-empty")
    per_split = tuple(score(scorer, s.image_ref, [phrase])[0] for s in node.splits)
    best = max(per_split)
    chosen = per_split.index(best)
    return KgsResult(per_split_scores=per_split, chosen_split=chosen, kgs=best)


def ac_score(scorer: GroundingScorer, node: Viewpoint, ac_phrase: str) -> float:
    """Stop-condition score: max over splits; empty activity never stops."""
    if not ac_phrase.strip():
        return 0.0
    return max(score(scorer, s.image_ref, [ac_phrase])[0] for s in node.splits)


def build_ref_index(graph: EnvironmentGraph) -> dict[str, tuple[str, int]]:
    """Map image_ref -> (node id, split index); refs must be unique."""
    index: dict[str, tuple[str, int]] = {}
    for vid in sorted(graph.viewpoints):
        for s in graph.viewpoints[vid].splits:
            if s.image_ref in index:
                raise ValueError(f"duplicate image_ref {s.image_ref!r}; backend cannot key by it")
            index[s.image_ref] = (vid, s.split_index)
    return index


def oracle_score(
    g: EnvironmentGraph,
    node_id: str,
    split_index: int,
    phrase: str,
    decay: float = DEFAULT_DECAY,
) -> float:
    """Decay-by-hops grounding: decay ** d for the shortest path whose first
    hop goes through this split to the nearest tag-matching node; d = 0 when
    the split's own tags match; 0.0 when no such path exists.
    """
    if not 0.0 < decay < 1.0:
        raise ValueError(f"decay must be in (0, 1), got {decay}")
    tokens = phrase_tokens(phrase)
    matching = [vid for vid in sorted(g.viewpoints) if g.viewpoints[vid].tags & tokens]
    dist = hop_distances(g, matching) if matching else {}
    return _split_decay(g, dist, node_id, split_index, tokens, decay)


def _split_decay(
    g: EnvironmentGraph,
    dist_to_match: dict[str, int],
    node_id: str,
    split_index: int,
    tokens: frozenset[str],
    decay: float,
) -> float:
    split = g.viewpoints[node_id].split(split_index)
    if frozenset(split.semantic_tags) & tokens:
        return 1.0
    reachable = [dist_to_match[nb] for nb in split.visible_neighbors if nb in dist_to_match]
    if not reachable:
        return 0.0
    return decay ** (1 + min(reachable))


class OracleScorer(GroundingScorer):
    """Tag-distance oracle over a synthetic world.

    Optional additive noise is hashed from (seed, node, split, text), so
    identical queries always return identical scores and whole runs stay
    reproducible from the seed alone.
    """

    name = "oracle"
    deterministic = True

    def __init__(
        self,
        graph: EnvironmentGraph,
        decay: float = DEFAULT_DECAY,
        noise_scale: float = 0.0,
        seed: int = 0,
    ):
        if not 0.0 < decay < 1.0:
            raise ValueError(f"decay must be in (0, 1), got {decay}")
        if noise_scale < 0.0:
            raise ValueError(f"noise_scale must be >= 0, got {noise_scale}")
        self._graph = graph
        self._decay = decay
        self._noise_scale = noise_scale
        self._seed = seed
        self._refs = build_ref_index(graph)
        self._dist_cache: dict[frozenset[str], dict[str, int]] = {}

    def _distances(self, tokens: frozenset[str]) -> dict[str, int]:
        cached = self._dist_cache.get(tokens)
        if cached is None:
            matching = [
                vid for vid in sorted(self._graph.viewpoints)
                if self._graph.viewpoints[vid].tags & tokens
            ]
            cached = hop_distances(self._graph, matching) if matching else {}
            self._dist_cache[tokens] = cached
        return cached

    def score_texts(self, image_ref: str, texts: Sequence[str]) -> list[float]:
        try:
            node_id, split_index = self._refs[image_ref]
        except KeyError:
            raise ScoringError(f"oracle has no viewpoint for image_ref {image_ref!r}") from None
        values = []
        for text in texts:
            tokens = phrase_tokens(text)
            value = _split_decay(
                self._graph, self._distances(tokens), node_id, split_index, tokens, self._decay
            )
            if self._noise_scale > 0.0:
                stream = derive_stream(self._seed, f"noise|{node_id}|{split_index}|{text}")
                value += (stream.random() * 2.0 - 1.0) * self._noise_scale
            values.append(min(1.0, max(0.0, value)))
        return values


class ScoreTable:
    """Total score map keyed by (node id, split index, text)."""

    def __init__(self, entries: dict[tuple[str, int, str], float] | None = None):
        self._entries: dict[tuple[str, int, str], float] = dict(entries or {})

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, ScoreTable) and self._entries == other._entries

    def __contains__(self, key: tuple[str, int, str]) -> bool:
        return key in self._entries

    def keys(self) -> set[tuple[str, int, str]]:
        return set(self._entries)

    def lookup(self, node_id: str, split_index: int, text: str) -> float:
        key = (node_id, split_index, text)
        try:
            return self._entries[key]
        except KeyError:
            raise ReplayMissError(key) from None

    def record(self, node_id: str, split_index: int, text: str, value: float) -> None:
        self._entries[(node_id, split_index, text)] = value

    def to_file(self, path: str | Path) -> None:
        rows = [
            {"node": node, "split": split, "text": text, "score": value}
            for (node, split, text), value in sorted(self._entries.items())
        ]
        Path(path).write_text(json.dumps(rows, indent=2) + "\n")

    @classmethod
    def from_file(cls, path: str | Path) -> "ScoreTable":
        try:
            rows = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScoringError(f"cannot load score table {path}: {exc}") from exc
        if not isinstance(rows, list):
            raise ScoringError(f"score table {path} must be a JSON list")
        entries = {}
        for row in rows:
            try:
                entries[(str(row["node"]), int(row["split"]), str(row["text"]))] = float(row["score"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ScoringError(f"malformed score table row {row!r}: {exc}") from exc
        return cls(entries)


class ReplayScorer(GroundingScorer):
    """Serves recorded scores byte-for-byte; any miss is an error."""

    name = "replay"
    deterministic = True

    def __init__(self, graph: EnvironmentGraph, table: ScoreTable):
        self._refs = build_ref_index(graph)
        self._table = table

    def score_texts(self, image_ref: str, texts: Sequence[str]) -> list[float]:
        try:
            node_id, split_index = self._refs[image_ref]
        except KeyError:
            raise ScoringError(f"replay graph has no viewpoint for image_ref {image_ref!r}") from None
        return [self._table.lookup(node_id, split_index, text) for text in texts]


class RemoteScorer(GroundingScorer):
    """HTTP client for the scoring service: POST {image, texts} -> {scores}."""

    deterministic = True

    def __init__(self, base_url: str, timeout: float = 30.0):
        self._url = base_url.rstrip("/") + "/score"
        self._timeout = timeout
        self.name = f"remote:{base_url}"

    def score_texts(self, image_ref: str, texts: Sequence[str]) -> list[float]:
        try:
            response = requests.post(
                self._url,
                json={"image": image_ref, "texts": list(texts)},
                timeout=self._timeout,
            )
        except requests.RequestException as exc:
            raise RemoteScorerError(f"scorer service unreachable at {self._url}: {exc}") from exc
        if response.status_code != 200:
            raise RemoteScorerError(
                f"scorer service returned {response.status_code} for {image_ref!r}: {response.text[:200]}"
            )
        try:
            scores = response.json()["scores"]
        except (ValueError, KeyError) as exc:
            raise RemoteScorerError(f"scorer service response is malformed: {exc}") from exc
        if not isinstance(scores, list) or len(scores) != len(texts):
            raise RemoteScorerError(
                f"scorer service returned {scores!r} for {len(texts)} texts"
            )
        return [float(v) for v in scores]


class RecordingScorer(GroundingScorer):
    """Delegates to another backend and captures every (node, split, text)."""

    def __init__(self, inner: GroundingScorer, graph: EnvironmentGraph):
        self._inner = inner
        self._refs = build_ref_index(graph)
        self.table = ScoreTable()
        self.name = f"recording({inner.name})"
        self.deterministic = inner.deterministic

    def score_texts(self, image_ref: str, texts: Sequence[str]) -> list[float]:
        values = self._inner.score_texts(image_ref, texts)
        node_id, split_index = self._refs[image_ref]
        for text, value in zip(texts, values):
            self.table.record(node_id, split_index, text, value)
        return values
