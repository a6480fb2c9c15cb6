"""Delayed-tomography Monte Carlo estimation of the average entanglement
fidelity: a sampling stage that never sees recovery maps, and a post-processing
stage that filters, optimizes, and averages."""

from .sampling import (ShotRecord, read_shot_log, replay_shot_trajectory,
                       sample_shot, sample_shots, write_shot_log)
from .fidelity import (attach_recoveries, conditioned_states, direct_average_fe,
                       estimate_average_fe, estimator_prefactor,
                       exact_enumeration_fe, per_trajectory_fe, recovery_overlap,
                       shot_term)

__all__ = [
    "ShotRecord", "read_shot_log", "replay_shot_trajectory", "sample_shot",
    "sample_shots", "write_shot_log", "attach_recoveries", "conditioned_states",
    "direct_average_fe", "estimate_average_fe", "estimator_prefactor",
    "exact_enumeration_fe", "per_trajectory_fe", "recovery_overlap", "shot_term",
]
