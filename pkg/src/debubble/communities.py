"""Community detection on the training bipartite graph and derived quantities.

Louvain runs over the unified node space [0, m+n) with users first, items
after. From the resulting labels we derive the per-edge community
compatibility weights used by the reweighted graph convolution and each
user's initial intra-community interaction rate (the quantity driving the
adaptive score fusion at inference).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .data import InteractionDataset

__all__ = [
    "CommunityAssignment",
    "CompatibilityWeights",
    "UserBubbleProfile",
    "louvain",
    "louvain_partition",
    "best_louvain_partition",
    "modularity",
    "graph_modularity",
    "compatibility",
    "ilfbi_init",
    "LouvainCommunities",
    "write_communities",
    "read_communities",
]

_TIE_TOL = 1e-12


@dataclass
class CommunityAssignment:
    """Node -> community labels over users (first m) and items (last n)."""

    labels: np.ndarray  # (m + n,) int64, contiguous ids 0..num_communities-1
    num_users: int
    num_items: int
    num_communities: int
    modularity: float

    @property
    def user_labels(self) -> np.ndarray:
        return self.labels[: self.num_users]

    @property
    def item_labels(self) -> np.ndarray:
        return self.labels[self.num_users :]


@dataclass
class CompatibilityWeights:
    """Per-train-edge community compatibility and its per-node norms.

    ``h_ui[e]`` is the fraction of user ``u``'s train items sharing the
    community of the edge's item (and symmetrically for ``h_iu``), aligned
    with the dataset's train edge order. Norms are the per-node sums used by
    the reweighted propagation's symmetric normalization.
    """

    edges: np.ndarray  # (n_train, 2), the dataset's train edges
    h_ui: np.ndarray  # (n_train,) float64 in (0, 1]
    h_iu: np.ndarray
    user_norm: np.ndarray  # (m,) sum of h_ui over each user's edges
    item_norm: np.ndarray  # (n,)


@dataclass
class UserBubbleProfile:
    """Per-user intra-community share of the training interactions."""

    ilfbi_init: np.ndarray  # (m,) float64 in [0, 1]
    mean_ilfbi_init: float


# ---------------------------------------------------------------------------
# Louvain core over a generic undirected weighted graph.
#
# Graph representation: adj[v] is a dict neighbour -> weight. A self-loop is
# stored once under adj[v][v]; node strength counts it twice (both ends).
# ---------------------------------------------------------------------------


def _strengths(adj: list[dict[int, float]]) -> np.ndarray:
    k = np.zeros(len(adj))
    for v, nbrs in enumerate(adj):
        for j, w in nbrs.items():
            k[v] += 2.0 * w if j == v else w
    return k


def graph_modularity(
    adj: list[dict[int, float]], labels: np.ndarray, resolution: float = 1.0
) -> float:
    """Newman-Girvan modularity of an undirected weighted graph."""
    labels = np.asarray(labels)
    k = _strengths(adj)
    two_w = float(k.sum())
    if two_w == 0.0:
        return 0.0
    n_comm = int(labels.max()) + 1
    w_in = np.zeros(n_comm)
    tot = np.zeros(n_comm)
    for v, nbrs in enumerate(adj):
        tot[labels[v]] += k[v]
        for j, w in nbrs.items():
            if j < v:
                continue
            if labels[v] == labels[j]:
                w_in[labels[v]] += w
    return float(np.sum(w_in / (two_w / 2.0)) - resolution * np.sum((tot / two_w) ** 2))


def _local_move(
    adj: list[dict[int, float]],
    labels: list[int],
    k: np.ndarray,
    comm_tot: dict[int, float],
    total_w: float,
    resolution: float,
    order: np.ndarray,
) -> bool:
    """One Louvain phase: sweep nodes until no move improves modularity.

    Candidates are the node's neighbour communities plus a fresh singleton.
    Moves only on strictly positive gain; equal-gain candidates resolve to
    the lowest community id (the fresh singleton has the highest id, so it
    never wins a tie). Returns whether any node moved.
    """
    moved_any = False
    next_id = len(adj)
    while True:
        moved = False
        for v in order:
            c_old = labels[v]
            nbr_w: dict[int, float] = {}
            for j, w in adj[v].items():
                if j != v:
                    c = labels[j]
                    nbr_w[c] = nbr_w.get(c, 0.0) + w
            comm_tot[c_old] -= k[v]

            def gain(c: int) -> float:
                return nbr_w.get(c, 0.0) / total_w - resolution * k[v] * comm_tot.get(
                    c, 0.0
                ) / (2.0 * total_w * total_w)

            best_c, best_gain = c_old, gain(c_old)
            for c in sorted(nbr_w):
                g = gain(c)
                if g > best_gain + _TIE_TOL:
                    best_c, best_gain = c, g
                elif g >= best_gain - _TIE_TOL and c < best_c:
                    best_c = c  # tie: lowest community id wins
                    best_gain = max(best_gain, g)
            if 0.0 > best_gain + _TIE_TOL:  # fresh singleton beats every option
                best_c = next_id
                next_id += 1
            comm_tot[best_c] = comm_tot.get(best_c, 0.0) + k[v]
            if best_c != c_old:
                labels[v] = best_c
                moved = True
                moved_any = True
        if not moved:
            return moved_any


def _aggregate(
    adj: list[dict[int, float]], labels: list[int]
) -> tuple[list[dict[int, float]], dict[int, int]]:
    """Collapse communities into single nodes, preserving total weight."""
    ids = sorted(set(labels))
    remap = {c: i for i, c in enumerate(ids)}
    new_adj: list[dict[int, float]] = [{} for _ in ids]
    for v, nbrs in enumerate(adj):
        cv = remap[labels[v]]
        for j, w in nbrs.items():
            if j < v:
                continue
            cj = remap[labels[j]]
            if cv == cj:
                new_adj[cv][cv] = new_adj[cv].get(cv, 0.0) + w
            else:
                new_adj[cv][cj] = new_adj[cv].get(cj, 0.0) + w
                new_adj[cj][cv] = new_adj[cj].get(cv, 0.0) + w
    return new_adj, remap


def louvain_partition(
    adj: list[dict[int, float]], seed: int = 0, resolution: float = 1.0
) -> tuple[np.ndarray, list[float]]:
    """One two-phase Louvain run. Returns (labels, per-pass modularity trace).

    Node visit order is shuffled with ``seed`` once per local-moving phase.
    The modularity trace is asserted non-decreasing across aggregation
    passes.
    """
    n = len(adj)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    node_map = np.arange(n)  # original node -> current aggregated node
    flat = np.arange(n)
    graph = adj
    trace: list[float] = []

    while True:
        k = _strengths(graph)
        total_w = float(k.sum()) / 2.0
        if total_w == 0.0:
            break
        labels = list(range(len(graph)))
        comm_tot = {c: float(k[c]) for c in range(len(graph))}
        order = rng.permutation(len(graph))
        moved = _local_move(graph, labels, k, comm_tot, total_w, resolution, order)
        flat = np.array([labels[node_map[v]] for v in range(n)])
        q = graph_modularity(adj, _contiguous(flat), resolution)
        if trace:
            assert q >= trace[-1] - 1e-9, "modularity decreased across passes"
        trace.append(q)
        if not moved:
            break
        prev_size = len(graph)
        graph, remap = _aggregate(graph, labels)
        node_map = np.array([remap[labels[node_map[v]]] for v in range(n)])
        if len(graph) == prev_size:
            break

    return _contiguous(flat), trace


def best_louvain_partition(
    adj: list[dict[int, float]],
    seed: int = 0,
    resolution: float = 1.0,
    n_restarts: int = 4,
) -> np.ndarray:
    """Best-of-``n_restarts`` Louvain runs with visit orders derived from
    the seed; deterministic, keeps the first partition on modularity ties."""
    best_q = -np.inf
    best = None
    for r in range(max(1, n_restarts)):
        labels, _ = louvain_partition(adj, seed=seed * 7919 + r, resolution=resolution)
        q = graph_modularity(adj, labels, resolution)
        if q > best_q + _TIE_TOL:
            best_q, best = q, labels
    return best


def _contiguous(labels: np.ndarray) -> np.ndarray:
    ids = sorted(set(labels.tolist()))
    remap = {c: i for i, c in enumerate(ids)}
    return np.array([remap[c] for c in labels], dtype=np.int64)


def _relabel_by_size(labels: np.ndarray) -> np.ndarray:
    """Contiguous ids in decreasing community size (ties: lowest member)."""
    ids, first, sizes = np.unique(labels, return_index=True, return_counts=True)
    order = sorted(range(len(ids)), key=lambda t: (-int(sizes[t]), int(first[t])))
    remap = {int(ids[t]): rank for rank, t in enumerate(order)}
    return np.array([remap[int(c)] for c in labels], dtype=np.int64)


def _bipartite_adjacency(dataset: InteractionDataset) -> list[dict[int, float]]:
    m = dataset.num_users
    adj: list[dict[int, float]] = [{} for _ in range(m + dataset.num_items)]
    for u, i in dataset.train:
        adj[int(u)][m + int(i)] = 1.0
        adj[m + int(i)][int(u)] = 1.0
    return adj


def louvain(
    dataset: InteractionDataset,
    seed: int = 0,
    resolution: float = 1.0,
    n_restarts: int = 4,
) -> CommunityAssignment:
    """Louvain over the unweighted bipartite train graph.

    Runs ``n_restarts`` seeded restarts and keeps the best partition. Labels
    are contiguous, ordered by decreasing community size. Nodes with no
    train edges stay out of the optimization (they never gain by moving) and
    are merged into community 0 afterwards so every node carries a valid
    label for evaluation.
    """
    if len(dataset.train) == 0:
        raise ValueError("cannot detect communities on an empty train graph")
    adj = _bipartite_adjacency(dataset)
    labels = best_louvain_partition(adj, seed=seed, resolution=resolution, n_restarts=n_restarts)
    labels = _relabel_by_size(labels)
    isolated = np.array([len(nbrs) == 0 for nbrs in adj])
    if isolated.any():
        labels = labels.copy()
        labels[isolated] = labels[~isolated].min() if (~isolated).any() else 0
        labels = _relabel_by_size(labels)
    q = graph_modularity(adj, labels, resolution=1.0)
    return CommunityAssignment(
        labels=labels,
        num_users=dataset.num_users,
        num_items=dataset.num_items,
        num_communities=int(labels.max()) + 1,
        modularity=q,
    )


def modularity(dataset: InteractionDataset, assignment: CommunityAssignment) -> float:
    """Standard Newman-Girvan modularity of the train graph under labels."""
    return graph_modularity(_bipartite_adjacency(dataset), assignment.labels, resolution=1.0)


class LouvainCommunities(BaseEstimator):
    """Estimator wrapper: fit detects communities on the train graph.

    Attributes after fit: ``labels_`` (m+n node labels), ``n_communities_``,
    ``modularity_``, ``assignment_``.
    """

    def __init__(self, resolution: float = 1.0, seed: int = 0, n_restarts: int = 4):
        self.resolution = resolution
        self.seed = seed
        self.n_restarts = n_restarts

    def fit(self, dataset: InteractionDataset, y=None) -> "LouvainCommunities":
        assignment = louvain(
            dataset, seed=self.seed, resolution=self.resolution, n_restarts=self.n_restarts
        )
        self.assignment_ = assignment
        self.labels_ = assignment.labels
        self.n_communities_ = assignment.num_communities
        self.modularity_ = assignment.modularity
        return self

    def fit_predict(self, dataset: InteractionDataset, y=None) -> np.ndarray:
        return self.fit(dataset).labels_


# ---------------------------------------------------------------------------
# Derived community quantities.
# ---------------------------------------------------------------------------


def compatibility(
    dataset: InteractionDataset, assignment: CommunityAssignment
) -> CompatibilityWeights:
    """Per-edge compatibility: share of the endpoint's neighbourhood in the
    other endpoint's community.

    For a train edge (u, i): ``h_ui = |{k in N_u : C_k = C_i}| / |N_u|``, and
    symmetrically for ``h_iu`` over N_i with user communities. Strictly
    positive because each endpoint counts itself.
    """
    edges = dataset.train
    m, n = dataset.num_users, dataset.num_items
    n_comm = assignment.num_communities
    c_user = assignment.user_labels
    c_item = assignment.item_labels

    user_deg = np.bincount(edges[:, 0], minlength=m).astype(np.float64)
    item_deg = np.bincount(edges[:, 1], minlength=n).astype(np.float64)
    if np.any(user_deg == 0):
        missing = int(np.flatnonzero(user_deg == 0)[0])
        raise ValueError(f"user {missing} has no train edges (split contract violated)")

    user_counts = np.zeros((m, n_comm))
    np.add.at(user_counts, (edges[:, 0], c_item[edges[:, 1]]), 1.0)
    item_counts = np.zeros((n, n_comm))
    np.add.at(item_counts, (edges[:, 1], c_user[edges[:, 0]]), 1.0)

    h_ui = user_counts[edges[:, 0], c_item[edges[:, 1]]] / user_deg[edges[:, 0]]
    h_iu = item_counts[edges[:, 1], c_user[edges[:, 0]]] / item_deg[edges[:, 1]]

    # user_norm[u] = sum_{i in N_u} h_ui = sum_c count_u[c]^2 / |N_u|
    user_norm = (user_counts**2).sum(axis=1) / np.maximum(user_deg, 1.0)
    item_norm = (item_counts**2).sum(axis=1) / np.maximum(item_deg, 1.0)
    return CompatibilityWeights(
        edges=edges, h_ui=h_ui, h_iu=h_iu, user_norm=user_norm, item_norm=item_norm
    )


def ilfbi_init(
    dataset: InteractionDataset, assignment: CommunityAssignment
) -> UserBubbleProfile:
    """Fraction of each user's train items sharing the user's community."""
    edges = dataset.train
    m = dataset.num_users
    deg = np.bincount(edges[:, 0], minlength=m).astype(np.float64)
    intra = np.zeros(m)
    same = (
        assignment.user_labels[edges[:, 0]] == assignment.item_labels[edges[:, 1]]
    ).astype(np.float64)
    np.add.at(intra, edges[:, 0], same)
    values = intra / np.maximum(deg, 1.0)
    return UserBubbleProfile(ilfbi_init=values, mean_ilfbi_init=float(values.mean()))


# ---------------------------------------------------------------------------
# Community file I/O.
# ---------------------------------------------------------------------------


def write_communities(
    dataset: InteractionDataset, assignment: CommunityAssignment, path: str | os.PathLike
) -> None:
    """Write node-type, external id, dense index, community id per node."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"# num_communities={assignment.num_communities}"
            f"\tmodularity={assignment.modularity:.10f}\n"
        )
        for d, ext in enumerate(dataset.user_ids):
            fh.write(f"u\t{ext}\t{d}\t{assignment.user_labels[d]}\n")
        for d, ext in enumerate(dataset.item_ids):
            fh.write(f"i\t{ext}\t{d}\t{assignment.item_labels[d]}\n")


def read_communities(path: str | os.PathLike, num_users: int, num_items: int) -> CommunityAssignment:
    labels = np.zeros(num_users + num_items, dtype=np.int64)
    modularity_value = 0.0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                for part in line[1:].split():
                    key, _, value = part.partition("=")
                    if key == "modularity":
                        modularity_value = float(value)
                continue
            kind, _ext, dense, comm = line.rstrip("\n").split("\t")
            idx = int(dense) if kind == "u" else num_users + int(dense)
            labels[idx] = int(comm)
    return CommunityAssignment(
        labels=labels,
        num_users=num_users,
        num_items=num_items,
        num_communities=int(labels.max()) + 1,
        modularity=modularity_value,
    )
