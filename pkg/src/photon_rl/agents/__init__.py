"""Learning rules on beamsplitter trees and the reference models they mirror."""
from photon_rl.agents.memory import (
    ClipMemory,
    peakedness,
    ps_apply_damping,
    ps_apply_reward,
    ps_glow_decay,
    ps_glow_traverse,
    qlearning_update,
    sarsa_update,
)
from photon_rl.agents.oracles import (
    TabularQ,
    TwoLayerPS,
    oracle_2L_update,
    oracle_tabular_update,
    softmax_policy,
)
from photon_rl.agents.exact import ExactXiTree, exact_update_softmax, exact_update_standard
from photon_rl.agents.agent import (
    MODELS,
    AgentConfig,
    ConfigError,
    ExactPSAgent,
    PhotonicTDAgent,
    TabularAgent,
    TreePSAgent,
    TwoLayerPSAgent,
    make_agent,
)
