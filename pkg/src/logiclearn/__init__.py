"""Trainable fuzzy first-order logic programs over predicate tensors."""

from .network import (LogicMachine, NetworkConfig, NoiseSchedule, rl_noise,
                      sample_gumbel, supervised_noise)
from .extraction import Program, evaluate_boolean, extract, render_text, simplify

__all__ = [
    "LogicMachine", "NetworkConfig", "NoiseSchedule", "supervised_noise",
    "rl_noise", "sample_gumbel", "Program", "extract", "simplify",
    "evaluate_boolean", "render_text",
]
