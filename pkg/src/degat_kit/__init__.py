"""Dynamic feature-space graph attention for depth reconstruction.

A verifiable numerics library: a single-hop graph-attention layer over a
dynamic K-NN token graph with a hand-derived backward pass, camera-token
conditioning variants, attention bias injection, depth back-projection,
uncertainty-weighted objectives, image metrics, and a toy training
harness exposed through the ``degat-kit`` CLI.
"""

__version__ = "0.1.0"
