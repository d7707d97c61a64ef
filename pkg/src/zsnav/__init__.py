"""Desk-scale simulator and evaluation harness for zero-shot language-guided
navigation on discrete panoramic-viewpoint graphs."""

from .env_graph import (
    EnvironmentGraph,
    Episode,
    Viewpoint,
    ViewSplit,
    generate_synthetic,
    load_episodes,
    load_graph,
    shortest_path,
)
from .eval_metrics import (
    EpisodeResult,
    MetricsReport,
    best_osr_per_scan,
    build_report,
    judge_episode,
    osr,
    rcs,
    render_report,
    spl,
    sr,
)
from .grounding import (
    GroundingScorer,
    KgsResult,
    OracleScorer,
    RecordingScorer,
    RemoteScorer,
    ReplayScorer,
    ScoreTable,
    ac_score,
    kgs,
    oracle_score,
    score,
)
from .instruction import (
    DecomposedInstruction,
    DecomposerClient,
    Instruction,
    decompose,
    keyphrases_by_preposition,
    split_nc_ac,
)
from .policy import (
    AgentState,
    PolicyConfig,
    Trajectory,
    run_clip_nav,
    run_random_walk,
    run_seq_clip_nav,
    sgs,
    step_clip_nav,
)

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "DecomposedInstruction",
    "DecomposerClient",
    "EnvironmentGraph",
    "Episode",
    "EpisodeResult",
    "GroundingScorer",
    "Instruction",
    "KgsResult",
    "MetricsReport",
    "OracleScorer",
    "PolicyConfig",
    "RecordingScorer",
    "RemoteScorer",
    "ReplayScorer",
    "ScoreTable",
    "Trajectory",
    "Viewpoint",
    "ViewSplit",
    "ac_score",
    "best_osr_per_scan",
    "build_report",
    "decompose",
    "generate_synthetic",
    "judge_episode",
    "keyphrases_by_preposition",
    "kgs",
    "load_episodes",
    "load_graph",
    "oracle_score",
    "osr",
    "rcs",
    "render_report",
    "run_clip_nav",
    "run_random_walk",
    "run_seq_clip_nav",
    "score",
    "sgs",
    "shortest_path",
    "spl",
    "split_nc_ac",
    "sr",
    "step_clip_nav",
]
