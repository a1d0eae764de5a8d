"""Interaction data loading, per-user splitting, and bipartite adjacency.

Interactions are implicit feedback: one (user, item) pair per record, no
rating. External ids are mapped to dense 0-based indexes in first-appearance
order so loading is deterministic regardless of id types.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataError",
    "RawInteractions",
    "InteractionDataset",
    "load_interactions",
    "split_dataset",
    "write_split",
    "read_split",
]

DEFAULT_RATIOS = (0.7, 0.1, 0.2)


class DataError(ValueError):
    """Malformed or inconsistent interaction data."""


@dataclass
class RawInteractions:
    """Deduplicated edge list with external-id <-> dense-index maps."""

    edges: np.ndarray  # (n_edges, 2) int64, dense [user, item]
    user_ids: list[str]  # dense index -> external id
    item_ids: list[str]

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_items(self) -> int:
        return len(self.item_ids)


@dataclass
class InteractionDataset:
    """Split interaction data plus train-graph adjacency.

    ``user_adj[u]`` / ``item_adj[i]`` are sorted arrays of train neighbours;
    they are mutually consistent by construction. The object is immutable
    once built and safe to share across concurrent readers.
    """

    num_users: int
    num_items: int
    train: np.ndarray  # (n, 2) int64
    val: np.ndarray
    test: np.ndarray
    user_ids: list[str]
    item_ids: list[str]
    seed: int
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    user_adj: list[np.ndarray] = field(default_factory=list)
    item_adj: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.user_adj:
            self.user_adj, self.item_adj = adjacency_from_edges(
                self.train, self.num_users, self.num_items
            )
        self._user_index = {e: d for d, e in enumerate(self.user_ids)}
        self._item_index = {e: d for d, e in enumerate(self.item_ids)}
        self._train_sets = [set(a.tolist()) for a in self.user_adj]

    def user_degree(self, u: int) -> int:
        return len(self.user_adj[u])

    def item_degree(self, i: int) -> int:
        return len(self.item_adj[i])

    def train_items_of(self, u: int) -> set[int]:
        """Set view of N_u, for O(1) membership tests."""
        return self._train_sets[u]

    def user_dense(self, external_id: str) -> int:
        return self._user_index[external_id]

    def item_dense(self, external_id: str) -> int:
        return self._item_index[external_id]


def load_interactions(path: str | os.PathLike, fmt: str = "pairs") -> RawInteractions:
    """Parse an interaction file into a deduplicated dense edge list.

    ``fmt="pairs"``: one ``user item [ignored extra columns]`` per line,
    whitespace- or tab-separated. ``fmt="grouped"``: one user per line
    followed by all of its items. Duplicate (user, item) pairs are dropped,
    keeping the first occurrence; dense indexes follow first appearance.
    """
    if fmt not in ("pairs", "grouped"):
        raise DataError(f"unknown interaction format: {fmt!r}")
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read interactions file {path}: {exc}") from exc

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    user_ids: list[str] = []
    item_ids: list[str] = []
    seen: set[tuple[int, int]] = set()
    us: list[int] = []
    its: list[int] = []

    def dense(table: dict[str, int], ids: list[str], key: str) -> int:
        idx = table.get(key)
        if idx is None:
            idx = len(ids)
            table[key] = idx
            ids.append(key)
        return idx

    with fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or line.lstrip().startswith("#"):
                continue
            if len(parts) < 2:
                raise DataError(f"{path}:{lineno}: expected at least user and item fields")
            u = dense(user_index, user_ids, parts[0])
            items = parts[1:] if fmt == "grouped" else parts[1:2]
            for raw_item in items:
                i = dense(item_index, item_ids, raw_item)
                if (u, i) in seen:
                    continue
                seen.add((u, i))
                us.append(u)
                its.append(i)

    if not us:
        raise DataError(f"{path}: no interactions found")
    edges = np.stack([np.asarray(us, dtype=np.int64), np.asarray(its, dtype=np.int64)], axis=1)
    return RawInteractions(edges=edges, user_ids=user_ids, item_ids=item_ids)


def per_user_split_sizes(degree: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Floor-rounded (train, val, test) counts for one user.

    Val and test are floored; the remainder goes to train, which therefore
    always keeps at least one interaction. Users with fewer than 3
    interactions keep everything in train.
    """
    if degree < 3:
        return degree, 0, 0
    n_val = int(np.floor(ratios[1] * degree))
    n_test = int(np.floor(ratios[2] * degree))
    return degree - n_val - n_test, n_val, n_test


def split_dataset(
    raw: RawInteractions,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> InteractionDataset:
    """Per-user stratified random split into train/val/test.

    Each user's edges are shuffled with a generator seeded from
    ``(seed, user)`` and partitioned by :func:`per_user_split_sizes`, so the
    split is deterministic and every user retains at least one train edge.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got {ratios}")
    if seed < 0:
        raise DataError("seed must be non-negative")
    edges = raw.edges
    m, n = raw.num_users, raw.num_items

    order = np.argsort(edges[:, 0], kind="stable")
    sorted_edges = edges[order]
    degrees = np.bincount(edges[:, 0], minlength=m)
    if np.any(degrees == 0):
        missing = int(np.flatnonzero(degrees == 0)[0])
        raise DataError(f"user {missing} has no interactions")
    starts = np.concatenate([[0], np.cumsum(degrees)])

    train_parts: list[np.ndarray] = []
    val_parts: list[np.ndarray] = []
    test_parts: list[np.ndarray] = []
    for u in range(m):
        items_u = sorted_edges[starts[u] : starts[u + 1], 1]
        rng = np.random.default_rng(np.random.SeedSequence([seed, u]))
        shuffled = items_u[rng.permutation(len(items_u))]
        n_train, n_val, n_test = per_user_split_sizes(len(items_u), ratios)
        cols = np.full(len(items_u), u, dtype=np.int64)
        train_parts.append(np.stack([cols[:n_train], shuffled[:n_train]], axis=1))
        if n_val:
            val_parts.append(
                np.stack([cols[:n_val], shuffled[n_train : n_train + n_val]], axis=1)
            )
        if n_test:
            test_parts.append(np.stack([cols[:n_test], shuffled[n_train + n_val :]], axis=1))

    empty = np.empty((0, 2), dtype=np.int64)
    return InteractionDataset(
        num_users=m,
        num_items=n,
        train=np.concatenate(train_parts) if train_parts else empty,
        val=np.concatenate(val_parts) if val_parts else empty,
        test=np.concatenate(test_parts) if test_parts else empty,
        user_ids=list(raw.user_ids),
        item_ids=list(raw.item_ids),
        seed=seed,
        ratios=tuple(ratios),
    )


def adjacency_from_edges(
    edges: np.ndarray, num_users: int, num_items: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Sorted per-user and per-item adjacency over the given edges."""
    user_adj: list[list[int]] = [[] for _ in range(num_users)]
    item_adj: list[list[int]] = [[] for _ in range(num_items)]
    for u, i in edges:
        user_adj[int(u)].append(int(i))
        item_adj[int(i)].append(int(u))
    return (
        [np.array(sorted(a), dtype=np.int64) for a in user_adj],
        [np.array(sorted(a), dtype=np.int64) for a in item_adj],
    )


def write_split(dataset: InteractionDataset, out_dir: str | os.PathLike) -> dict:
    """Write train/val/test edge lists plus a JSON metadata file.

    Edge files use dense indexes, one tab-separated pair per line, in the
    dataset's deterministic edge order; reruns with identical inputs are
    byte-identical.
    """
    os.makedirs(out_dir, exist_ok=True)
    for name, arr in (("train", dataset.train), ("val", dataset.val), ("test", dataset.test)):
        with open(os.path.join(out_dir, f"{name}.tsv"), "w", encoding="utf-8") as fh:
            for u, i in arr:
                fh.write(f"{u}\t{i}\n")
    meta = {
        "num_users": dataset.num_users,
        "num_items": dataset.num_items,
        "seed": dataset.seed,
        "ratios": list(dataset.ratios),
        "counts": {
            "train": int(len(dataset.train)),
            "val": int(len(dataset.val)),
            "test": int(len(dataset.test)),
        },
    }
    with open(os.path.join(out_dir, "split_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    id_map_path = os.path.join(out_dir, "id_maps.tsv")
    with open(id_map_path, "w", encoding="utf-8") as fh:
        for d, e in enumerate(dataset.user_ids):
            fh.write(f"u\t{e}\t{d}\n")
        for d, e in enumerate(dataset.item_ids):
            fh.write(f"i\t{e}\t{d}\n")
    return meta


def _read_edge_file(path: str) -> np.ndarray:
    rows: list[tuple[int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected two columns")
            rows.append((int(parts[0]), int(parts[1])))
    if not rows:
        return np.empty((0, 2), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)


def read_split(out_dir: str | os.PathLike) -> InteractionDataset:
    """Load a dataset previously written by :func:`write_split`."""
    meta_path = os.path.join(out_dir, "split_meta.json")
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise DataError(f"missing split metadata {meta_path}: {exc}") from exc
    user_ids = [""] * meta["num_users"]
    item_ids = [""] * meta["num_items"]
    with open(os.path.join(out_dir, "id_maps.tsv"), "r", encoding="utf-8") as fh:
        for line in fh:
            kind, ext, dense = line.rstrip("\n").split("\t")
            if kind == "u":
                user_ids[int(dense)] = ext
            else:
                item_ids[int(dense)] = ext
    return InteractionDataset(
        num_users=meta["num_users"],
        num_items=meta["num_items"],
        train=_read_edge_file(os.path.join(out_dir, "train.tsv")),
        val=_read_edge_file(os.path.join(out_dir, "val.tsv")),
        test=_read_edge_file(os.path.join(out_dir, "test.tsv")),
        user_ids=user_ids,
        item_ids=item_ids,
        seed=meta["seed"],
        ratios=tuple(meta["ratios"]),
    )
