"""Navigation agents: random walk, grounding-greedy, and the sequential
variant with backtracking.

The grounding-greedy agent grounds the current keyphrase on the four view
splits, walks through the best-scoring split to the nearest visible
neighbor, and advances to the next keyphrase once the grounding score
clears a threshold. The activity phrase is grounded before every step; the
episode stops when that score clears the stop threshold.

The sequential variant additionally averages the last window_n keyphrase
grounding scores. When that running mean falls below the backtracking
threshold the agent retraces the last window_n hops in reverse, and the
(node, split) choices made along the abandoned stretch become forbidden so
the same corridor is never re-entered.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .env_graph import EnvironmentGraph, Episode
from .grounding import GroundingScorer, KgsResult, ac_score, kgs
from .instruction import DecomposedInstruction, decompose
from .rng import derive_stream

STOP_AC_THRESHOLD = "ac_threshold"
STOP_MAX_STEPS = "max_steps"
STOP_DEAD_END = "dead_end"

POLICY_RANDOM = "random"
POLICY_CLIP_NAV = "clip-nav"
POLICY_SEQ_CLIP_NAV = "seq-clip-nav"


@dataclass
class PolicyConfig:
    stop_threshold: float = 0.8
    advance_threshold: float = 0.8
    backtrack_threshold: float = 0.55
    window_n: int = 3
    max_steps: int = 16
    random_walk_steps: int = 8
    seed: int = 0
    # Whether reverse hops consume the step budget.
    count_backtrack_steps: bool = True

    def __post_init__(self):
        for name in ("stop_threshold", "advance_threshold", "backtrack_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.window_n < 1:
            raise ValueError(f"window_n must be >= 1, got {self.window_n}")
        if self.max_steps < 0:
            raise ValueError(f"max_steps must be >= 0, got {self.max_steps}")
        if self.window_n > self.max_steps:
            raise ValueError(
                f"window_n ({self.window_n}) must not exceed max_steps ({self.max_steps})"
            )
        if self.random_walk_steps < 0:
            raise ValueError(f"random_walk_steps must be >= 0, got {self.random_walk_steps}")


@dataclass
class AgentState:
    current_node: str
    keyphrase_index: int = 0
    kgs_history: list[tuple[str, int, float]] = field(default_factory=list)
    visited_forbidden: set[tuple[str, int]] = field(default_factory=set)
    steps_taken: int = 0


@dataclass
class StepRecord:
    node_from: str
    node_to: str | None  # None when no admissible split had a neighbor
    keyphrase: str | None
    kgs_result: KgsResult | None
    ac_score: float | None
    backtracked: bool
    move_split: int | None

    def to_dict(self) -> dict:
        return {
            "node_from": self.node_from,
            "node_to": self.node_to,
            "keyphrase": self.keyphrase,
            "kgs": self.kgs_result.to_dict() if self.kgs_result else None,
            "ac_score": self.ac_score,
            "backtracked": self.backtracked,
            "move_split": self.move_split,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StepRecord":
        return cls(
            node_from=data["node_from"],
            node_to=data["node_to"],
            keyphrase=data["keyphrase"],
            kgs_result=KgsResult.from_dict(data["kgs"]) if data["kgs"] else None,
            ac_score=data["ac_score"],
            backtracked=data["backtracked"],
            move_split=data["move_split"],
        )


@dataclass
class Trajectory:
    episode_id: str
    scan_id: str
    policy: str
    nodes: list[str]
    stop_reason: str
    final_ac_score: float | None
    steps: list[StepRecord]

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "scan_id": self.scan_id,
            "policy": self.policy,
            "nodes": list(self.nodes),
            "stop_reason": self.stop_reason,
            "final_ac_score": self.final_ac_score,
            "steps": [s.to_dict() for s in self.steps],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        return cls(
            episode_id=data["episode_id"],
            scan_id=data["scan_id"],
            policy=data["policy"],
            nodes=list(data["nodes"]),
            stop_reason=data["stop_reason"],
            final_ac_score=data["final_ac_score"],
            steps=[StepRecord.from_dict(s) for s in data["steps"]],
        )


def sgs(kgs_values: Sequence[float], window_n: int) -> float:
    """Mean of the last window_n keyphrase grounding scores."""
    if window_n < 1:
        raise ValueError(f"window_n must be >= 1, got {window_n}")
    if len(kgs_values) < window_n:
        raise ValueError(f"need at least {window_n} grounding scores, have {len(kgs_values)}")
    window = kgs_values[-window_n:]
    return sum(window) / window_n


def current_keyphrase(d: DecomposedInstruction, state: AgentState) -> str:
    return d.nc_keyphrases[min(state.keyphrase_index, len(d.nc_keyphrases) - 1)]


def step_clip_nav(
    g: EnvironmentGraph,
    scorer: GroundingScorer,
    d: DecomposedInstruction,
    state: AgentState,
    cfg: PolicyConfig,
) -> tuple[AgentState, StepRecord]:
    """One grounding-greedy step; mutates and returns the state.

    Splits are tried in descending score order (ties to the lower index).
    A split is admissible unless its (node, split) choice is forbidden or
    it has no visible neighbors; within the split the agent moves to the
    neighbor nearest in Euclidean distance, ties to the smaller id.
    """
    if state.steps_taken >= cfg.max_steps:
        raise ValueError("step budget exhausted; caller must gate on max_steps")
    keyphrase = current_keyphrase(d, state)
    node = g.viewpoints[state.current_node]
    result = kgs(scorer, node, keyphrase)
    state.kgs_history.append((state.current_node, result.chosen_split, result.kgs))

    target = None
    move_split = None
    for k in sorted(range(4), key=lambda k: (-result.per_split_scores[k], k)):
        if (state.current_node, k) in state.visited_forbidden:
            continue
        candidates = node.splits[k].visible_neighbors
        if not candidates:
            continue
        target = min(candidates, key=lambda nb: (g.euclidean(state.current_node, nb), nb))
        move_split = k
        break

    record = StepRecord(
        node_from=state.current_node,
        node_to=target,
        keyphrase=keyphrase,
        kgs_result=result,
        ac_score=None,
        backtracked=False,
        move_split=move_split,
    )
    if target is not None:
        state.current_node = target
        state.steps_taken += 1
    if result.kgs >= cfg.advance_threshold:
        # Index pins at the last keyphrase; exhaustion is not a stop reason.
        state.keyphrase_index = min(state.keyphrase_index + 1, len(d.nc_keyphrases) - 1)
    return state, record


def _decomposed_for(episode: Episode, decomposed: DecomposedInstruction | None) -> DecomposedInstruction:
    return decomposed if decomposed is not None else decompose(episode.instruction)


def run_clip_nav(
    g: EnvironmentGraph,
    scorer: GroundingScorer,
    episode: Episode,
    cfg: PolicyConfig,
    decomposed: DecomposedInstruction | None = None,
) -> Trajectory:
    """Greedy grounding agent without backtracking.

    The activity score is checked at the current node before every move,
    so a start node that already satisfies the activity is an immediate
    zero-step success.
    """
    d = _decomposed_for(episode, decomposed)
    state = AgentState(current_node=episode.start)
    nodes = [episode.start]
    records: list[StepRecord] = []
    while True:
        ac = ac_score(scorer, g.viewpoints[state.current_node], d.ac_phrase)
        if ac >= cfg.stop_threshold:
            stop_reason = STOP_AC_THRESHOLD
            break
        if state.steps_taken >= cfg.max_steps:
            stop_reason = STOP_MAX_STEPS
            break
        state, record = step_clip_nav(g, scorer, d, state, cfg)
        record.ac_score = ac
        records.append(record)
        if record.node_to is None:
            stop_reason = STOP_DEAD_END
            break
        nodes.append(record.node_to)
    return Trajectory(
        episode_id=episode.episode_id,
        scan_id=episode.scan_id,
        policy=POLICY_CLIP_NAV,
        nodes=nodes,
        stop_reason=stop_reason,
        final_ac_score=ac,
        steps=records,
    )


def run_seq_clip_nav(
    g: EnvironmentGraph,
    scorer: GroundingScorer,
    episode: Episode,
    cfg: PolicyConfig,
    decomposed: DecomposedInstruction | None = None,
) -> Trajectory:
    """Greedy grounding agent with sequence-score backtracking.

    Every window_n forward steps the mean of the last window_n grounding
    scores is compared against the backtracking threshold; a low mean sends
    the agent back to the node it occupied window_n steps earlier, retracing
    its own path hop by hop.
    """
    d = _decomposed_for(episode, decomposed)
    state = AgentState(current_node=episode.start)
    nodes = [episode.start]
    records: list[StepRecord] = []
    forward_since_eval = 0
    stop_reason = None
    while stop_reason is None:
        ac = ac_score(scorer, g.viewpoints[state.current_node], d.ac_phrase)
        if ac >= cfg.stop_threshold:
            stop_reason = STOP_AC_THRESHOLD
            break
        if state.steps_taken >= cfg.max_steps:
            stop_reason = STOP_MAX_STEPS
            break
        state, record = step_clip_nav(g, scorer, d, state, cfg)
        record.ac_score = ac
        records.append(record)
        if record.node_to is None:
            stop_reason = STOP_DEAD_END
            break
        nodes.append(record.node_to)
        forward_since_eval += 1
        if forward_since_eval < cfg.window_n:
            continue
        forward_since_eval = 0
        values = [value for _, _, value in state.kgs_history]
        if sgs(values, cfg.window_n) >= cfg.backtrack_threshold:
            continue
        # Abandon the stretch: forbid its (node, split) choices, retrace.
        for abandoned in records[-cfg.window_n:]:
            if abandoned.move_split is not None:
                state.visited_forbidden.add((abandoned.node_from, abandoned.move_split))
        retrace = nodes[-cfg.window_n - 1:-1]
        for back_node in reversed(retrace):
            if cfg.count_backtrack_steps and state.steps_taken >= cfg.max_steps:
                stop_reason = STOP_MAX_STEPS
                break
            records.append(
                StepRecord(
                    node_from=state.current_node,
                    node_to=back_node,
                    keyphrase=None,
                    kgs_result=None,
                    ac_score=None,
                    backtracked=True,
                    move_split=None,
                )
            )
            nodes.append(back_node)
            state.current_node = back_node
            if cfg.count_backtrack_steps:
                state.steps_taken += 1
    return Trajectory(
        episode_id=episode.episode_id,
        scan_id=episode.scan_id,
        policy=POLICY_SEQ_CLIP_NAV,
        nodes=nodes,
        stop_reason=stop_reason,
        final_ac_score=ac,
        steps=records,
    )


def run_random_walk(g: EnvironmentGraph, episode: Episode, cfg: PolicyConfig) -> Trajectory:
    """Uniform neighbor sampling for a fixed number of steps; never stops early.

    The stream is derived from (seed, episode_id) so batches are
    reproducible and episodes are independent of execution order.
    """
    stream = derive_stream(cfg.seed, episode.episode_id)
    current = episode.start
    nodes = [current]
    records: list[StepRecord] = []
    stop_reason = STOP_MAX_STEPS
    for _ in range(cfg.random_walk_steps):
        neighbors = g.neighbors(current)
        if not neighbors:
            stop_reason = STOP_DEAD_END
            break
        target = stream.choice(neighbors)
        records.append(
            StepRecord(
                node_from=current,
                node_to=target,
                keyphrase=None,
                kgs_result=None,
                ac_score=None,
                backtracked=False,
                move_split=None,
            )
        )
        nodes.append(target)
        current = target
    return Trajectory(
        episode_id=episode.episode_id,
        scan_id=episode.scan_id,
        policy=POLICY_RANDOM,
        nodes=nodes,
        stop_reason=stop_reason,
        final_ac_score=None,
        steps=records,
    )
