"""ocrlab: instance constructions, exact solvers, and Monte-Carlo estimation
for order-competitive analysis of combinatorial online selection."""

__version__ = "0.1.0"

from .core import (Action, ArrivalOrder, FiniteOrderDistribution, Instance,
                   Trace, ValueDistribution, allowed_actions, dump_instance,
                   load_instance, run_policy, sample_values, trial_rng)
from .errors import OcrlabError

__all__ = [
    "Action", "ArrivalOrder", "FiniteOrderDistribution", "Instance", "Trace",
    "ValueDistribution", "allowed_actions", "dump_instance", "load_instance",
    "run_policy", "sample_values", "trial_rng", "OcrlabError", "__version__",
]
