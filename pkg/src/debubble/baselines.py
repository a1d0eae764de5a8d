"""Comparison methods behind the same evaluation interface: greedy
community-balanced re-ranking, same-community fairness regularization, and
propensity-weighted BPR."""

from __future__ import annotations

import numpy as np

from .communities import CommunityAssignment
from .data import InteractionDataset
from .models import (
    Adam,
    BPRRecommender,
    EmbeddingModel,
    PropagationCache,
    TrainingConfig,
    bpr_step,
    run_bpr_training,
)

__all__ = [
    "mmr_rerank",
    "mmr_rerank_all",
    "fairness_bpr_step",
    "ips_bpr_step",
    "train_fairness",
    "train_ips",
    "FairnessBPR",
    "IPSWeightedBPR",
    "DEFAULT_POOL_SIZE",
]

DEFAULT_POOL_SIZE = 1000
_TIE_TOL = 1e-12


def mmr_rerank(
    candidates: np.ndarray,
    scores: np.ndarray,
    item_labels: np.ndarray,
    lam: float,
    k: int,
) -> np.ndarray:
    """Greedy re-ranking that penalizes overrepresented communities.

    The first pick is the raw argmax; each later pick maximizes
    ``lam * score - (1 - lam) * (share of already-picked items in the
    candidate's community)``. Ties resolve to the higher raw score, then the
    lower item index. ``candidates`` should be the caller's top-scored pool.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    candidates = np.asarray(candidates)
    scores = np.asarray(scores, dtype=np.float64)
    n = len(candidates)
    if k > n:
        import warnings

        warnings.warn(f"k={k} exceeds the candidate pool ({n}); returning the pool")
        k = n
    chosen: list[int] = []  # positions into candidates
    chosen_comms: list[int] = []
    remaining = list(range(n))

    def better(a: tuple[float, float, int], b: tuple[float, float, int]) -> bool:
        # compare (objective, raw score, -index) with tolerance on objective
        if a[0] > b[0] + _TIE_TOL:
            return True
        if a[0] < b[0] - _TIE_TOL:
            return False
        if a[1] > b[1] + _TIE_TOL:
            return True
        if a[1] < b[1] - _TIE_TOL:
            return False
        return a[2] > b[2]

    while len(chosen) < k:
        denom = len(chosen)
        best_pos = None
        best_key = None
        for pos in remaining:
            if denom == 0:
                objective = scores[pos]
            else:
                penalty = chosen_comms.count(int(item_labels[candidates[pos]])) / denom
                objective = lam * scores[pos] - (1.0 - lam) * penalty
            key = (objective, float(scores[pos]), -int(candidates[pos]))
            if best_key is None or better(key, best_key):
                best_key = key
                best_pos = pos
        remaining.remove(best_pos)
        chosen.append(best_pos)
        chosen_comms.append(int(item_labels[candidates[best_pos]]))
    return candidates[np.array(chosen, dtype=np.int64)]


def mmr_rerank_all(
    scores: np.ndarray,
    dataset: InteractionDataset,
    assignment: CommunityAssignment,
    lam: float,
    k: int,
    pool_size: int = DEFAULT_POOL_SIZE,
):
    """Re-rank every user's pool; returns RankedLists compatible with the
    metric functions."""
    from .evaluation import RankedLists, rank_topk

    pool_size = min(pool_size, dataset.num_items)
    pooled = rank_topk(scores, dataset, k=pool_size)
    items = np.full((dataset.num_users, k), -1, dtype=np.int64)
    out_scores = np.full((dataset.num_users, k), -np.inf)
    for u in range(dataset.num_users):
        cand = pooled.items[u][pooled.items[u] >= 0]
        cand_scores = pooled.scores[u][: len(cand)]
        take = mmr_rerank(cand, cand_scores, assignment.item_labels, lam, min(k, len(cand)))
        items[u, : len(take)] = take
        score_of = {int(c): float(s) for c, s in zip(cand, cand_scores)}
        out_scores[u, : len(take)] = [score_of[int(t)] for t in take]
    return RankedLists(items=items, scores=out_scores, k=k)


# ---------------------------------------------------------------------------
# Loss-variant baselines. Both reuse the plain BPR step; with their strength
# neutralized (gamma=0, delta=1) the extra code paths are skipped entirely,
# so updates are bit-identical to plain training.
# ---------------------------------------------------------------------------


def _fairness_extra(item_labels: np.ndarray, gamma: float):
    """Signed embedding-distance regularizer on the positive/negative item
    pair: pushes same-community pairs apart, pulls different-community pairs
    together. Gradient at zero distance is defined as zero."""

    def extra(user_base, item_base, users, pos, neg, g_user_base, g_item_base) -> float:
        diff = item_base[pos] - item_base[neg]
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        chi = np.where(item_labels[pos] == item_labels[neg], 1.0, -1.0)
        loss = float(np.sum(-chi * gamma * dist))
        safe = dist > 0.0
        coeff = np.zeros_like(dist)
        coeff[safe] = -chi[safe] * gamma / dist[safe]
        g_pair = coeff[:, None] * diff
        np.add.at(g_item_base, pos, g_pair)
        np.add.at(g_item_base, neg, -g_pair)
        return loss

    return extra


def fairness_bpr_step(
    model: EmbeddingModel,
    adam: Adam,
    batch,
    assignment: CommunityAssignment,
    gamma: float,
    config: TrainingConfig,
    prop: PropagationCache | None = None,
) -> float:
    """BPR step plus the community fairness regularizer."""
    extra = _fairness_extra(assignment.item_labels, gamma) if gamma != 0.0 else None
    return bpr_step(model, adam, batch, config, prop, extra_grad=extra)


def _ips_weights(assignment: CommunityAssignment, delta: float):
    """Per-triplet weight 1 for same-community positives, 1/delta otherwise."""
    user_labels = assignment.user_labels
    item_labels = assignment.item_labels

    def weights(users, pos, neg) -> np.ndarray:
        return np.where(user_labels[users] == item_labels[pos], 1.0, 1.0 / delta)

    return weights


def ips_bpr_step(
    model: EmbeddingModel,
    adam: Adam,
    batch,
    assignment: CommunityAssignment,
    delta: float,
    config: TrainingConfig,
    prop: PropagationCache | None = None,
) -> float:
    """BPR step with cross-community interactions upweighted by 1/delta."""
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    weights = _ips_weights(assignment, delta)(*batch) if delta != 1.0 else None
    return bpr_step(model, adam, batch, config, prop, triplet_weights=weights)


def train_fairness(
    dataset: InteractionDataset,
    assignment: CommunityAssignment,
    gamma: float,
    kind: str = "mf",
    dim: int = 64,
    n_layers: int = 3,
    config: TrainingConfig | None = None,
    log_rows: list | None = None,
) -> EmbeddingModel:
    extra = _fairness_extra(assignment.item_labels, gamma) if gamma != 0.0 else None
    return run_bpr_training(
        dataset, kind, dim, n_layers, config, extra_grad=extra,
        assignment=assignment, log_rows=log_rows,
    )


def train_ips(
    dataset: InteractionDataset,
    assignment: CommunityAssignment,
    delta: float,
    kind: str = "mf",
    dim: int = 64,
    n_layers: int = 3,
    config: TrainingConfig | None = None,
    log_rows: list | None = None,
) -> EmbeddingModel:
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    weight_fn = _ips_weights(assignment, delta) if delta != 1.0 else None
    return run_bpr_training(
        dataset, kind, dim, n_layers, config, triplet_weight_fn=weight_fn,
        assignment=assignment, log_rows=log_rows,
    )


class FairnessBPR(BPRRecommender):
    """BPR with the signed same-community distance regularizer."""

    def __init__(
        self,
        gamma: float = 0.1,
        kind: str = "mf",
        embedding_dim: int = 64,
        n_layers: int = 3,
        learning_rate: float = 1e-3,
        l2: float = 1e-3,
        batch_size: int = 2048,
        epochs: int = 200,
        eval_every: int = 5,
        patience: int = 20,
        seed: int = 0,
    ):
        super().__init__(
            kind=kind, embedding_dim=embedding_dim, n_layers=n_layers,
            learning_rate=learning_rate, l2=l2, batch_size=batch_size,
            epochs=epochs, eval_every=eval_every, patience=patience, seed=seed,
        )
        self.gamma = gamma

    def fit(self, dataset: InteractionDataset, assignment: CommunityAssignment = None):
        if assignment is None:
            raise ValueError("fairness training needs a community assignment")
        self.model_ = train_fairness(
            dataset, assignment, self.gamma,
            kind=self.kind, dim=self.embedding_dim, n_layers=self.n_layers,
            config=self._config(),
        )
        from .models import build_propagation

        self.prop_ = build_propagation(dataset) if self.kind == "lightgcn" else None
        return self


class IPSWeightedBPR(BPRRecommender):
    """BPR with cross-community interactions upweighted by 1/delta."""

    def __init__(
        self,
        delta: float = 0.5,
        kind: str = "mf",
        embedding_dim: int = 64,
        n_layers: int = 3,
        learning_rate: float = 1e-3,
        l2: float = 1e-3,
        batch_size: int = 2048,
        epochs: int = 200,
        eval_every: int = 5,
        patience: int = 20,
        seed: int = 0,
    ):
        super().__init__(
            kind=kind, embedding_dim=embedding_dim, n_layers=n_layers,
            learning_rate=learning_rate, l2=l2, batch_size=batch_size,
            epochs=epochs, eval_every=eval_every, patience=patience, seed=seed,
        )
        self.delta = delta

    def fit(self, dataset: InteractionDataset, assignment: CommunityAssignment = None):
        if assignment is None:
            raise ValueError("propensity weighting needs a community assignment")
        self.model_ = train_ips(
            dataset, assignment, self.delta,
            kind=self.kind, dim=self.embedding_dim, n_layers=self.n_layers,
            config=self._config(),
        )
        from .models import build_propagation

        self.prop_ = build_propagation(dataset) if self.kind == "lightgcn" else None
        return self
