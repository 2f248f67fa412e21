"""IPC and IIC tree samplers, direct invasion and rendering."""

from .invasion import InvasionTrace, invade_direct
from .render import render_svg
from .structural import (
    NODE_CAP,
    ClusterTree,
    contains,
    full_children_ratio,
    missing_vertices,
    replica_seed,
    sample_coupled,
    sample_iic,
    sample_ipc,
    sample_profiles,
    sample_trees,
    slice_counts,
)

__all__ = [
    "NODE_CAP",
    "ClusterTree",
    "InvasionTrace",
    "contains",
    "full_children_ratio",
    "invade_direct",
    "missing_vertices",
    "render_svg",
    "replica_seed",
    "sample_coupled",
    "sample_iic",
    "sample_ipc",
    "sample_profiles",
    "sample_trees",
    "slice_counts",
]
