"""Seeded generator of interaction data with planted community structure.

Used by the test suite and the CLI demo path: users and items are assigned
to blocks, and each user interacts mostly inside its own block. Trained
recommenders then reproduce the intra-community over-recommendation that
the debiasing pipeline is meant to counteract.
"""

from __future__ import annotations

import numpy as np

from .data import RawInteractions

__all__ = ["make_community_interactions", "write_interactions"]


def make_community_interactions(
    n_users: int = 120,
    n_items: int = 240,
    n_communities: int = 4,
    mean_degree: int = 30,
    intra_prob: float = 0.85,
    seed: int = 0,
) -> RawInteractions:
    """Planted-block bipartite interactions.

    Every user draws ``mean_degree`` items on average (at least 5), picking
    an item from its own block with probability ``intra_prob`` and from the
    whole catalog otherwise. Popularity within a block is mildly skewed so
    embeddings have signal beyond the block structure.
    """
    if not 0.0 <= intra_prob <= 1.0:
        raise ValueError("intra_prob must lie in [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5F17]))
    user_block = np.arange(n_users) % n_communities
    item_block = np.arange(n_items) % n_communities
    items_by_block = [np.flatnonzero(item_block == b) for b in range(n_communities)]

    # mild popularity skew inside each block
    weights = []
    for pool in items_by_block:
        w = 1.0 / (1.0 + np.arange(len(pool)) / 8.0)
        weights.append(w / w.sum())
    global_w = np.concatenate([w for w in weights])
    global_pool = np.concatenate(items_by_block)
    global_w = global_w / global_w.sum()

    us: list[int] = []
    its: list[int] = []
    seen: set[tuple[int, int]] = set()
    for u in range(n_users):
        degree = max(5, int(rng.poisson(mean_degree)))
        b = user_block[u]
        tries = 0
        while degree > 0 and tries < degree * 20:
            tries += 1
            if rng.random() < intra_prob:
                pool, w = items_by_block[b], weights[b]
                i = int(pool[rng.choice(len(pool), p=w)])
            else:
                i = int(global_pool[rng.choice(len(global_pool), p=global_w)])
            if (u, i) in seen:
                continue
            seen.add((u, i))
            us.append(u)
            its.append(i)
            degree -= 1
    edges = np.stack([np.asarray(us, dtype=np.int64), np.asarray(its, dtype=np.int64)], axis=1)
    return RawInteractions(
        edges=edges,
        user_ids=[f"u{u}" for u in range(n_users)],
        item_ids=[f"i{i}" for i in range(n_items)],
    )


def write_interactions(raw: RawInteractions, path: str) -> None:
    """Write as whitespace-separated external-id pairs, one per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in raw.edges:
            fh.write(f"{raw.user_ids[u]}\t{raw.item_ids[i]}\n")
