"""Spatio-temporal graph scattering with trainable complementary nodes."""

from ._stgcsn import (
    HAND_JOINTS,
    DataError,
    Error,
    NumericError,
    full_tree_size,
    gradient_check,
    hand_skeleton_adjacency,
    init_agent_from_markov,
    lazy_random_walk,
    line_graph,
    load_sequence,
    preprocess,
    prune_mask,
    row_softmax,
    run_cli,
    scattering_features,
    scattering_tree,
    synth,
    wavelet_bank,
)

__all__ = [
    "HAND_JOINTS",
    "DataError",
    "Error",
    "NumericError",
    "full_tree_size",
    "gradient_check",
    "hand_skeleton_adjacency",
    "init_agent_from_markov",
    "lazy_random_walk",
    "line_graph",
    "load_sequence",
    "preprocess",
    "prune_mask",
    "row_softmax",
    "run_cli",
    "scattering_features",
    "scattering_tree",
    "synth",
    "wavelet_bank",
]
