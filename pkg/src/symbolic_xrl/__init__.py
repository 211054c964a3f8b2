"""Symbolic explanations and intent-based action steering for RL agents.

Raw per-step KPIs and actions are turned into first-order-logic terms
(``inc(DTU@g0,Q3)``, ``sched(g1,MAX,100)``), analysed as distributions and
knowledge graphs, and used at run time to steer an agent's actions.
"""

from .core import (
    SchemaA1,
    SchemaA2,
    Step,
    SymbolicSet,
    Term,
    TermSyntaxError,
    TraceError,
    Trajectory,
    canonical_key,
    parse_term,
    read_trace,
    render_term,
    validate_trajectory,
)
from .explain import (
    DensityMap,
    FrequencyTable,
    compare_distributions,
    decision_effect_density,
    effect_distribution,
    export_kg,
    state_distribution,
)
from .intent import Intent, IntentError, parse_intent, read_intents, render_intent, satisfies
from .p2 import P2Estimator, QuartileTracker, p2_estimate, p2_observe, quartile_of
from .experiment import run_episode, train_with_store
from .steering import (
    SteeringConfig,
    SteeringDecision,
    direct_force,
    run_steered_episode,
    steer_conditioned,
    steer_reward_max,
)
from .store import ExperienceStore, KnowledgeGraph, StoreError, build_kg
from .symbolizer import SymbolicTrace, SymbolizerState, symbolize_trajectory, vocabulary_size

__version__ = "0.1.0"

__all__ = [
    "SchemaA1",
    "SchemaA2",
    "Step",
    "SymbolicSet",
    "Term",
    "TermSyntaxError",
    "TraceError",
    "Trajectory",
    "canonical_key",
    "parse_term",
    "read_trace",
    "render_term",
    "validate_trajectory",
    "DensityMap",
    "FrequencyTable",
    "compare_distributions",
    "decision_effect_density",
    "effect_distribution",
    "export_kg",
    "state_distribution",
    "Intent",
    "IntentError",
    "parse_intent",
    "read_intents",
    "render_intent",
    "satisfies",
    "P2Estimator",
    "QuartileTracker",
    "p2_estimate",
    "p2_observe",
    "quartile_of",
    "run_episode",
    "train_with_store",
    "SteeringConfig",
    "SteeringDecision",
    "direct_force",
    "run_steered_episode",
    "steer_conditioned",
    "steer_reward_max",
    "ExperienceStore",
    "KnowledgeGraph",
    "StoreError",
    "build_kg",
    "SymbolicTrace",
    "SymbolizerState",
    "symbolize_trajectory",
    "vocabulary_size",
]
