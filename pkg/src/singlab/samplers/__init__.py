from .base import FinalMode, InitMode, ReverseStep, SamplerConfig, SamplerMethod, get_step
from .chain import (
    ChainRunner,
    InitialState,
    Trajectory,
    TrajectoryBatch,
    chain_rng,
    final_step,
    initial_step,
    run_chain,
)
from .forward import forward_chain, forward_sample
from .steps import ode_rhs, reverse_step

__all__ = [
    'FinalMode', 'InitMode', 'ReverseStep', 'SamplerConfig', 'SamplerMethod', 'get_step',
    'ChainRunner', 'InitialState', 'Trajectory', 'TrajectoryBatch', 'chain_rng',
    'final_step', 'initial_step', 'run_chain',
    'forward_chain', 'forward_sample', 'ode_rhs', 'reverse_step',
]
