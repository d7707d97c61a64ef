from __future__ import annotations

from pathlib import Path

import pytest
from util import chain_graph, grid_graph

from zsnav.env_graph import Episode, generate_synthetic, load_episodes, load_graph
from zsnav.grounding import OracleScorer, ReplayScorer, ScoreTable
from zsnav.instruction import DecomposedInstruction, Instruction
from zsnav.policy import (
    STOP_AC_THRESHOLD,
    STOP_DEAD_END,
    STOP_MAX_STEPS,
    AgentState,
    PolicyConfig,
    Trajectory,
    run_clip_nav,
    run_random_walk,
    run_seq_clip_nav,
    sgs,
    step_clip_nav,
)

FIXTURES = Path(__file__).parent / "fixtures" / "decoy12"


def _passthrough(keyphrases: list[str], ac: str = "") -> DecomposedInstruction:
    return DecomposedInstruction(nc_keyphrases=tuple(keyphrases), ac_phrase=ac, source="passthrough")


def _episode(g, start: str, goals: set[str], text: str = "to the target and clean the target") -> Episode:
    from zsnav.env_graph import metric_distances

    return Episode(
        episode_id="t-001",
        scan_id=g.scan_id,
        start=start,
        goals=frozenset(goals),
        instruction=Instruction(text),
        shortest_length=metric_distances(g, goals)[start],
    )


def _fill_table(g, table: ScoreTable, text: str, default: float = 0.0) -> None:
    for vid in g.viewpoints:
        for k in range(4):
            if (vid, k, text) not in table:
                table.record(vid, k, text, default)


def decoy_fixture():
    g = load_graph(FIXTURES / "environment.json")
    episode = load_episodes(FIXTURES / "episodes.json", g)[0]
    scorer = ReplayScorer(g, ScoreTable.from_file(FIXTURES / "scores.json"))
    return g, episode, scorer


# ---------------------------------------------------------------------------
# sgs
# ---------------------------------------------------------------------------


def test_sgs_mean_of_window() -> None:
    assert sgs([0.2, 0.4, 0.6], 3) == pytest.approx(0.4)
    assert sgs([0.5], 1) == 0.5


def test_sgs_uses_only_last_window() -> None:
    assert sgs([0.0, 0.0, 0.9, 0.9], 2) == pytest.approx(0.9)


def test_sgs_matches_independent_summation() -> None:
    values = [0.13, 0.7, 0.05, 0.99, 0.42, 0.8, 0.31, 0.64, 0.27, 0.55]
    expected = 0.0
    for v in values[-4:]:
        expected += v
    expected /= 4
    assert sgs(values, 4) == pytest.approx(expected, rel=1e-12)


def test_sgs_insufficient_history_is_an_error() -> None:
    with pytest.raises(ValueError, match="at least"):
        sgs([0.5, 0.5], 3)


# ---------------------------------------------------------------------------
# step_clip_nav
# ---------------------------------------------------------------------------


def test_step_moves_to_only_neighbor() -> None:
    cells = {"a": (0, 0), "b": (1, 0)}
    g = grid_graph(cells, [("a", "b")], tags={"a": ["hall"], "b": ["kitchen"]})
    scorer = OracleScorer(g)
    state = AgentState(current_node="a")
    state, record = step_clip_nav(g, scorer, _passthrough(["kitchen"]), state, PolicyConfig())
    assert state.current_node == "b"
    assert record.node_to == "b"
    assert record.move_split == 0
    assert state.steps_taken == 1


def test_step_falls_back_to_next_best_split_with_neighbors() -> None:
    # Best-scoring split has no neighbors; agent takes the runner-up.
    cells = {"x": (0, 0), "b": (0, 1)}
    g = grid_graph(cells, [("x", "b")], scan_id="fb")
    table = ScoreTable()
    table.record("x", 0, "p", 0.9)
    table.record("x", 1, "p", 0.7)
    _fill_table(g, table, "p")
    scorer = ReplayScorer(g, table)
    state = AgentState(current_node="x")
    state, record = step_clip_nav(g, scorer, _passthrough(["p"]), state, PolicyConfig())
    assert record.kgs_result.chosen_split == 0
    assert record.move_split == 1
    assert record.node_to == "b"


def test_step_advances_keyphrase_at_threshold_and_pins() -> None:
    cells = {"a": (0, 0), "b": (1, 0)}
    g = grid_graph(cells, [("a", "b")], scan_id="adv")
    table = ScoreTable()
    table.record("a", 0, "first", 0.85)
    table.record("b", 2, "second", 0.85)
    _fill_table(g, table, "first")
    _fill_table(g, table, "second")
    scorer = ReplayScorer(g, table)
    cfg = PolicyConfig(advance_threshold=0.8)
    d = _passthrough(["first", "second"])
    state = AgentState(current_node="a")
    state, _ = step_clip_nav(g, scorer, d, state, cfg)
    assert state.keyphrase_index == 1
    state, _ = step_clip_nav(g, scorer, d, state, cfg)
    assert state.keyphrase_index == 1  # pinned at the last keyphrase


def test_step_requires_budget() -> None:
    g = chain_graph(2)
    state = AgentState(current_node="c00", steps_taken=16)
    with pytest.raises(ValueError, match="budget"):
        step_clip_nav(g, OracleScorer(g), _passthrough(["x"]), state, PolicyConfig())


def test_step_respects_forbidden_choices() -> None:
    cells = {"a": (0, 0), "b": (1, 0)}
    g = grid_graph(cells, [("a", "b")], tags={"a": ["hall"], "b": ["kitchen"]})
    state = AgentState(current_node="a", visited_forbidden={("a", 0)})
    state, record = step_clip_nav(g, OracleScorer(g), _passthrough(["kitchen"]), state, PolicyConfig())
    assert record.node_to is None
    assert record.move_split is None
    assert state.current_node == "a"


def test_step_tie_break_prefers_nearer_then_lexicographic_neighbor() -> None:
    # Two neighbors share the north split: equidistant diagonal offsets.
    from zsnav.env_graph import EnvironmentGraph, ViewSplit, Viewpoint

    def vp(vid, pos, neighbors_by_split):
        return Viewpoint(
            id=vid,
            position=pos,
            splits=tuple(
                ViewSplit(k, f"t/{vid}/{k}", tuple(neighbors_by_split.get(k, ())), ("room",))
                for k in range(4)
            ),
        )

    g = EnvironmentGraph(
        scan_id="tie",
        viewpoints={
            "s": vp("s", (0.0, 0.0, 0.0), {1: ("l", "r")}),
            "l": vp("l", (-1.0, 2.0, 0.0), {3: ("s",)}),
            "r": vp("r", (1.0, 2.0, 0.0), {3: ("s",)}),
        },
        edges=(("l", "s", 5.0 ** 0.5), ("r", "s", 5.0 ** 0.5)),
    )
    state = AgentState(current_node="s")
    state, record = step_clip_nav(g, OracleScorer(g), _passthrough(["room"]), state, PolicyConfig())
    assert record.node_to == "l"  # equal distance, lexicographically smaller id


# ---------------------------------------------------------------------------
# run_clip_nav
# ---------------------------------------------------------------------------


def test_run_stops_immediately_when_start_satisfies_activity() -> None:
    cells = {"a": (0, 0), "b": (1, 0)}
    g = grid_graph(cells, [("a", "b")], tags={"a": ["kitchen"], "b": ["hall"]})
    ep = _episode(g, "a", {"a"})
    traj = run_clip_nav(g, OracleScorer(g), ep, PolicyConfig(), _passthrough(["kitchen"], "clean the kitchen"))
    assert traj.stop_reason == STOP_AC_THRESHOLD
    assert traj.nodes == ["a"]
    assert traj.steps == []
    assert traj.final_ac_score == 1.0


def test_run_all_zero_scores_exhausts_budget() -> None:
    g = chain_graph(6)
    table = ScoreTable()
    _fill_table(g, table, "p")
    _fill_table(g, table, "act")
    ep = _episode(g, "c00", {"c05"})
    cfg = PolicyConfig(max_steps=9)
    traj = run_clip_nav(g, ReplayScorer(g, table), ep, cfg, _passthrough(["p"], "act"))
    assert traj.stop_reason == STOP_MAX_STEPS
    assert len(traj.nodes) - 1 == 9


def test_run_reaches_goal_on_two_node_chain() -> None:
    cells = {"a": (0, 0), "b": (1, 0)}
    g = grid_graph(cells, [("a", "b")], tags={"a": ["hall"], "b": ["kitchen"]})
    ep = _episode(g, "a", {"b"})
    traj = run_clip_nav(
        g, OracleScorer(g), ep, PolicyConfig(stop_threshold=0.9),
        _passthrough(["kitchen"], "clean the kitchen"),
    )
    assert traj.stop_reason == STOP_AC_THRESHOLD
    assert traj.nodes == ["a", "b"]


def test_run_is_deterministic_for_deterministic_scorer() -> None:
    g, episodes = generate_synthetic(seed=8, node_count=45, episode_count=2)
    scorer = OracleScorer(g)
    cfg = PolicyConfig(stop_threshold=0.9, max_steps=32)
    for ep in episodes:
        first = run_clip_nav(g, scorer, ep, cfg)
        second = run_clip_nav(g, scorer, ep, cfg)
        assert first.to_dict() == second.to_dict()
        seq_a = run_seq_clip_nav(g, scorer, ep, cfg)
        seq_b = run_seq_clip_nav(g, scorer, ep, cfg)
        assert seq_a.to_dict() == seq_b.to_dict()


def test_trajectories_respect_graph_adjacency_and_budget() -> None:
    for seed in (2, 5, 12):
        g, episodes = generate_synthetic(seed=seed, node_count=55, episode_count=3)
        scorer = OracleScorer(g)
        cfg = PolicyConfig(max_steps=12)
        for ep in episodes:
            for traj in (
                run_clip_nav(g, scorer, ep, cfg),
                run_seq_clip_nav(g, scorer, ep, cfg),
                run_random_walk(g, ep, cfg),
            ):
                assert traj.stop_reason in (STOP_AC_THRESHOLD, STOP_MAX_STEPS, STOP_DEAD_END)
                for a, b in zip(traj.nodes, traj.nodes[1:]):
                    assert b in g.neighbors(a)
                if traj.policy != "random":
                    assert len(traj.nodes) - 1 <= cfg.max_steps


# ---------------------------------------------------------------------------
# run_seq_clip_nav
# ---------------------------------------------------------------------------


def test_seq_identical_to_clip_nav_when_sgs_stays_high() -> None:
    g, episodes = generate_synthetic(seed=14, node_count=50, episode_count=2)
    scorer = OracleScorer(g)
    # Backtracking can never trigger with a zero threshold.
    cfg = PolicyConfig(stop_threshold=0.9, max_steps=32, backtrack_threshold=0.0)
    for ep in episodes:
        plain = run_clip_nav(g, scorer, ep, cfg)
        seq = run_seq_clip_nav(g, scorer, ep, cfg)
        assert seq.nodes == plain.nodes
        assert seq.stop_reason == plain.stop_reason


def test_seq_backtracks_to_start_after_first_window() -> None:
    g = chain_graph(6, scan_id="line")
    table = ScoreTable()
    _fill_table(g, table, "p", 0.1)  # uniformly weak grounding
    _fill_table(g, table, "act")
    ep = _episode(g, "c00", {"c05"})
    traj = run_seq_clip_nav(
        g, ReplayScorer(g, table), ep, PolicyConfig(window_n=3, max_steps=16),
        _passthrough(["p"], "act"),
    )
    # First three hops head east, then the window mean 0.1 forces a full retrace.
    assert traj.nodes[:7] == ["c00", "c01", "c02", "c03", "c02", "c01", "c00"]
    assert [s.backtracked for s in traj.steps[:6]] == [False] * 3 + [True] * 3


def test_seq_decoy_recovery_and_forbidden_choices() -> None:
    g, episode, scorer = decoy_fixture()
    cfg = PolicyConfig()
    plain = run_clip_nav(g, scorer, episode, cfg)
    assert plain.stop_reason == STOP_MAX_STEPS
    assert plain.nodes[-1] in ("d02", "d03")

    seq = run_seq_clip_nav(g, scorer, episode, cfg)
    assert seq.stop_reason == STOP_AC_THRESHOLD
    assert seq.nodes[-1] == "g08"
    # Exactly one backtrack event of window_n reverse hops.
    back_flags = [s.backtracked for s in seq.steps]
    events = sum(
        1 for i, f in enumerate(back_flags) if f and (i == 0 or not back_flags[i - 1])
    )
    assert events == 1
    assert sum(back_flags) == cfg.window_n
    # Forbidden (node, split) choices are never re-used for movement.
    forbidden = {("s00", 0), ("d01", 0), ("d02", 0)}
    moves_after_backtrack = [
        (s.node_from, s.move_split)
        for i, s in enumerate(seq.steps)
        if not s.backtracked and i > back_flags.index(True)
    ]
    assert not (set(moves_after_backtrack) & forbidden)


def test_seq_backtrack_steps_budget_flag() -> None:
    g, episode, scorer = decoy_fixture()
    counted = run_seq_clip_nav(g, scorer, episode, PolicyConfig(max_steps=12))
    assert counted.stop_reason == STOP_MAX_STEPS

    free = run_seq_clip_nav(
        g, scorer, episode, PolicyConfig(max_steps=12, count_backtrack_steps=False)
    )
    assert free.stop_reason == STOP_AC_THRESHOLD
    assert free.nodes[-1] == "g08"


def test_seq_dead_end_after_exhausting_splits() -> None:
    g = chain_graph(4, scan_id="cul")
    table = ScoreTable()
    _fill_table(g, table, "p", 0.1)
    _fill_table(g, table, "act")
    ep = _episode(g, "c00", {"c03"})
    traj = run_seq_clip_nav(
        g, ReplayScorer(g, table), ep, PolicyConfig(window_n=3, max_steps=16),
        _passthrough(["p"], "act"),
    )
    # After backtracking to the start, its only split is forbidden.
    assert traj.stop_reason == STOP_DEAD_END
    assert traj.nodes[-1] == "c00"


# ---------------------------------------------------------------------------
# run_random_walk
# ---------------------------------------------------------------------------


def test_random_walk_fixed_seed_is_reproducible() -> None:
    g, episodes = generate_synthetic(seed=21, node_count=40, episode_count=2)
    cfg = PolicyConfig(seed=99)
    for ep in episodes:
        assert run_random_walk(g, ep, cfg).to_dict() == run_random_walk(g, ep, cfg).to_dict()


def test_random_walk_single_neighbor_alternates_regardless_of_seed() -> None:
    g = chain_graph(2)
    ep = _episode(g, "c00", {"c01"})
    for seed in (0, 1, 2, 77):
        traj = run_random_walk(g, ep, PolicyConfig(seed=seed, random_walk_steps=6))
        assert traj.nodes == ["c00", "c01", "c00", "c01", "c00", "c01", "c00"]


def test_random_walk_never_self_stops() -> None:
    cells = {"a": (0, 0), "k": (1, 0)}
    g = grid_graph(cells, [("a", "k")], tags={"a": ["hall"], "k": ["kitchen"]})
    ep = _episode(g, "a", {"k"})
    traj = run_random_walk(g, ep, PolicyConfig(seed=5, random_walk_steps=8))
    assert traj.stop_reason == STOP_MAX_STEPS
    assert len(traj.nodes) - 1 == 8  # walks straight past the goal


def test_random_walk_uses_full_adjacency_not_splits() -> None:
    g = chain_graph(3)
    ep = _episode(g, "c01", {"c00"})
    seen_targets = set()
    for seed in range(40):
        traj = run_random_walk(g, ep, PolicyConfig(seed=seed, random_walk_steps=1))
        seen_targets.add(traj.nodes[1])
    assert seen_targets == {"c00", "c02"}


# ---------------------------------------------------------------------------
# config and serialization
# ---------------------------------------------------------------------------


def test_policy_config_validation() -> None:
    with pytest.raises(ValueError):
        PolicyConfig(stop_threshold=1.5)
    with pytest.raises(ValueError):
        PolicyConfig(window_n=0)
    with pytest.raises(ValueError):
        PolicyConfig(window_n=20, max_steps=10)


def test_trajectory_dict_round_trip() -> None:
    g, episode, scorer = decoy_fixture()
    traj = run_seq_clip_nav(g, scorer, episode, PolicyConfig())
    assert Trajectory.from_dict(traj.to_dict()) == traj
