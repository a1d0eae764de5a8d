"""Negative sampling for BPR triplets, optionally community-targeted.

The sampler draws one uniform in [0, 1) per negative regardless of the mix
probability, so training traces with the community branch disabled are
bit-identical to plain uniform sampling under the same seed.
"""

from __future__ import annotations

import numpy as np

from .communities import CommunityAssignment
from .data import InteractionDataset

__all__ = ["NegativeSampler", "sample_negative"]

_REJECTION_CAP = 100


class NegativeSampler:
    """Draws non-interacted items, preferring the user's own community.

    With probability ``alpha`` the negative comes uniformly from the user's
    community pool (excluding train items), otherwise uniformly from all
    non-interacted items. An empty community pool falls back to the global
    pool. Rejection sampling retries up to a cap, then falls back to an
    exact uniform draw over the eligible pool.
    """

    def __init__(
        self,
        dataset: InteractionDataset,
        assignment: CommunityAssignment | None = None,
        alpha: float = 0.0,
    ):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        if alpha > 0.0 and assignment is None:
            raise ValueError("community assignment required when alpha > 0")
        self.dataset = dataset
        self.alpha = float(alpha)
        self.num_items = dataset.num_items
        if assignment is not None:
            item_labels = assignment.item_labels
            self._user_comm = assignment.user_labels
            self._items_by_comm = [
                np.flatnonzero(item_labels == c) for c in range(assignment.num_communities)
            ]
            # size of {non-interacted items in the user's community}
            intra_deg = np.zeros(dataset.num_users, dtype=np.int64)
            for u in range(dataset.num_users):
                cu = self._user_comm[u]
                intra_deg[u] = int(np.sum(item_labels[dataset.user_adj[u]] == cu))
            comm_sizes = np.array([len(p) for p in self._items_by_comm])
            self._intra_pool_size = comm_sizes[self._user_comm] - intra_deg
        else:
            self._user_comm = None
            self._items_by_comm = None
            self._intra_pool_size = None

    def draw(self, u: int, rng: np.random.Generator) -> int:
        seen = self.dataset.train_items_of(u)
        if len(seen) >= self.num_items:
            raise ValueError(f"user {u} interacted with every item; cannot sample a negative")
        x = rng.random()
        if (
            self.alpha > 0.0
            and x < self.alpha
            and self._intra_pool_size[u] > 0
        ):
            pool = self._items_by_comm[self._user_comm[u]]
            return self._rejection(pool, seen, rng)
        return self._rejection(None, seen, rng)

    def _rejection(self, pool: np.ndarray | None, seen: set[int], rng) -> int:
        size = self.num_items if pool is None else len(pool)
        for _ in range(_REJECTION_CAP):
            idx = int(rng.integers(size))
            j = idx if pool is None else int(pool[idx])
            if j not in seen:
                return j
        eligible = [j for j in (range(self.num_items) if pool is None else pool) if int(j) not in seen]
        return int(eligible[int(rng.integers(len(eligible)))])

    def draw_batch(self, users: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.array([self.draw(int(u), rng) for u in users], dtype=np.int64)


def sample_negative(
    u: int,
    dataset: InteractionDataset,
    assignment: CommunityAssignment | None,
    alpha: float,
    rng: np.random.Generator,
) -> int:
    """One negative draw; see :class:`NegativeSampler` for the contract."""
    return NegativeSampler(dataset, assignment, alpha).draw(u, rng)
