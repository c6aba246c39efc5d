"""Abelian sandpile on Z^d: exact stabilisation, cluster geometry, experiments."""
from .engine import (DEFAULT_BUDGET, IllegalToppling, Schedule, StabilizationResult, Strategy,
                     replay_schedule, resume, stabilize, stabilize_point_source,
                     staged_square_schedule, topple)
from .geometry import (Cluster, adjacent_zero_pairs, domino_lower_bound, largest_diamond,
                       match_square, outer_boundary, radius, toppled_cluster, visited_cluster)
from .grid import (Odometer, SandpileConfig, config_leq, laplacian, make_point_source,
                   make_square_config)
from .reference import reference_stabilize

__all__ = [
    "DEFAULT_BUDGET", "IllegalToppling", "Schedule", "StabilizationResult", "Strategy",
    "replay_schedule", "resume", "stabilize", "stabilize_point_source",
    "staged_square_schedule", "topple", "Cluster", "adjacent_zero_pairs",
    "domino_lower_bound", "largest_diamond", "match_square", "outer_boundary", "radius",
    "toppled_cluster", "visited_cluster", "Odometer", "SandpileConfig", "config_leq",
    "laplacian", "make_point_source", "make_square_config", "reference_stabilize",
]
