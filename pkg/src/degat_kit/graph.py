"""Dynamic K-nearest-neighbor graphs over token features.

The graph is rebuilt from the current features on every forward pass;
brute-force O(L^2 C) search is deliberate (L stays small at desk scale).
Ties are broken by ascending node index so the Top-K operator is
deterministic, which the permutation-equivariance property relies on.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import as_matrix

__all__ = ["TokenGrid", "NeighborGraph", "build_knn_graph", "edge_count", "dump_neighbors"]

METRICS = ("cosine", "euclidean")


@dataclass(frozen=True)
class TokenGrid:
    """Per-frame patch tokens plus their normalized grid coordinates."""

    features: np.ndarray  # (L, C)
    grid_h: int
    grid_w: int

    def __post_init__(self):
        feats = as_matrix(self.features, "features")
        object.__setattr__(self, "features", feats)
        if self.grid_h * self.grid_w != feats.shape[0]:
            raise ValueError(
                f"token count {feats.shape[0]} != grid {self.grid_h}x{self.grid_w}"
            )

    @property
    def n_tokens(self):
        return self.features.shape[0]

    def coord(self, i):
        """Normalized (u, v) center of token i in [0, 1]^2."""
        row, col = divmod(int(i), self.grid_w)
        return ((col + 0.5) / self.grid_w, (row + 0.5) / self.grid_h)


@dataclass(frozen=True)
class NeighborGraph:
    """Directed Top-K neighbor lists with their similarity scores.

    ``similarities`` holds cosine similarities (non-increasing per row)
    for the cosine metric, or Euclidean distances (non-decreasing per
    row) for the euclidean metric.
    """

    neighbors: np.ndarray  # (L, K) int
    similarities: np.ndarray  # (L, K)
    metric: str = "cosine"

    @property
    def n_nodes(self):
        return self.neighbors.shape[0]

    @property
    def k(self):
        return self.neighbors.shape[1]


def _features_of(tokens):
    if isinstance(tokens, TokenGrid):
        return tokens.features
    return as_matrix(tokens, "features")


def build_knn_graph(tokens, k, metric="cosine"):
    """Select the Top-K neighbors of every node, excluding the node itself.

    Ordering is by descending similarity (cosine) or ascending distance
    (euclidean); exact ties are resolved toward the lower node index.
    """
    x = _features_of(tokens)
    n = x.shape[0]
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= n:
        raise ValueError(f"k={k} must be < number of nodes {n} (self is excluded)")

    if metric == "cosine":
        norms = np.linalg.norm(x, axis=1)
        safe = np.where(norms == 0.0, 1.0, norms)
        xn = x / safe[:, None]
        score = xn @ xn.T  # zero rows give similarity 0 with everyone
        # stable sort on the negated score keeps ascending-index tie order
        key = -score
    else:
        sq = np.sum(x * x, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.maximum(d2, 0.0, out=d2)
        key = np.sqrt(d2)
        score = key

    np.fill_diagonal(key, np.inf)  # self always sorts last
    order = np.argsort(key, axis=1, kind="stable")
    nb = order[:, :k]
    sims = np.take_along_axis(score, nb, axis=1)
    return NeighborGraph(neighbors=nb, similarities=sims, metric=metric)


def edge_count(g):
    """Number of directed edges: exactly L*K."""
    return g.n_nodes * g.k


def dump_neighbors(g, tokens, query):
    """JSON-serializable record of one node's neighborhood.

    Coordinates are the normalized patch-grid centers; scores are taken
    verbatim from the graph.
    """
    if not isinstance(tokens, TokenGrid):
        raise TypeError("dump_neighbors requires a TokenGrid")
    if not 0 <= query < g.n_nodes:
        raise ValueError(f"query {query} out of range [0, {g.n_nodes})")
    return {
        "query": int(query),
        "coord": list(tokens.coord(query)),
        "neighbors": [
            {
                "index": int(j),
                "coord": list(tokens.coord(int(j))),
                "score": float(s),
            }
            for j, s in zip(g.neighbors[query], g.similarities[query])
        ],
    }
