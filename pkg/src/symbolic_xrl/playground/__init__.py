from .agent import AgentConfig, QAgent, agent_act, agent_learn, all_masks, mask_index, moving_average, train
from .env import EnvState, MimoEnv, MimoEnvConfig, env_step, make_step
from .synth import synth_trace_a1

__all__ = [
    "AgentConfig",
    "EnvState",
    "MimoEnv",
    "MimoEnvConfig",
    "QAgent",
    "agent_act",
    "agent_learn",
    "all_masks",
    "env_step",
    "make_step",
    "mask_index",
    "moving_average",
    "synth_trace_a1",
    "train",
]
