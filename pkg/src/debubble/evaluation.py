"""Top-k ranking and measurement: accuracy metrics, the two community-based
filter-bubble metrics, debiased test sets, user-group analysis, and exports.

All functions are pure over frozen inputs. Rankings depend only on score
order: ties break toward the lower item index, and items from the user's
train set are always masked out.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .communities import CommunityAssignment, UserBubbleProfile
from .data import InteractionDataset

__all__ = [
    "RankedLists",
    "MetricsReport",
    "rank_topk",
    "precision_recall_ndcg",
    "ilfbi_at_k",
    "cgi_at_k",
    "gini_from_counts",
    "build_debiased_test",
    "user_group_report",
    "export_embeddings",
    "evaluate_scores",
    "render_report",
    "report_to_kv",
]

DEFAULT_KS = (20, 100)
DEFAULT_BINS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass
class RankedLists:
    """Top-k per user. ``items[u]`` is ordered by decreasing score; rows with
    fewer than k candidates are padded with -1."""

    items: np.ndarray  # (m, k) int64
    scores: np.ndarray  # (m, k) float64
    k: int

    @property
    def num_users(self) -> int:
        return self.items.shape[0]


def rank_topk(scores: np.ndarray, dataset: InteractionDataset, k: int) -> RankedLists:
    """Exact argmax-k per user over the full catalog, train items excluded."""
    m, n = dataset.num_users, dataset.num_items
    if scores.shape != (m, n):
        raise ValueError(f"score matrix must be ({m}, {n}), got {scores.shape}")
    masked = scores.astype(np.float64, copy=True)
    for u in range(m):
        masked[u, dataset.user_adj[u]] = -np.inf
    max_candidates = n - min(len(a) for a in dataset.user_adj) if m else 0
    if k > n - max(len(a) for a in dataset.user_adj):
        warnings.warn(f"k={k} exceeds available candidates for some users; returning all")
    items = np.full((m, k), -1, dtype=np.int64)
    out_scores = np.full((m, k), -np.inf)
    for u in range(m):
        row = masked[u]
        order = np.argsort(-row, kind="stable")[:k]  # stable: ties -> lower index
        valid = row[order] > -np.inf
        take = order[valid]
        items[u, : len(take)] = take
        out_scores[u, : len(take)] = row[take]
    return RankedLists(items=items, scores=out_scores, k=k)


def _test_sets(test: np.ndarray, num_users: int) -> list[set[int]]:
    sets: list[set[int]] = [set() for _ in range(num_users)]
    for u, i in test:
        sets[int(u)].add(int(i))
    return sets


def precision_recall_ndcg(
    ranked: RankedLists, test: np.ndarray, k: int | None = None
) -> tuple[float, float, float]:
    """Mean P@k, R@k, and binary-relevance NDCG@k over users with a
    non-empty test set."""
    k = k or ranked.k
    tests = _test_sets(test, ranked.num_users)
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    p_sum = r_sum = n_sum = 0.0
    n_eval = 0
    for u in range(ranked.num_users):
        if not tests[u]:
            continue
        n_eval += 1
        rel = np.array([1.0 if i >= 0 and int(i) in tests[u] else 0.0 for i in ranked.items[u, :k]])
        hits = rel.sum()
        p_sum += hits / k
        r_sum += hits / len(tests[u])
        idcg = discounts[: min(k, len(tests[u]))].sum()
        n_sum += float(rel @ discounts[: len(rel)]) / idcg
    if n_eval == 0:
        return 0.0, 0.0, 0.0
    return p_sum / n_eval, r_sum / n_eval, n_sum / n_eval


def ilfbi_at_k(ranked: RankedLists, assignment: CommunityAssignment, k: int | None = None) -> float:
    """Share of recommended items in the user's own community, averaged over
    all users with k as the denominator."""
    k = k or ranked.k
    items = ranked.items[:, :k]
    user_c = assignment.user_labels[:, None]
    item_c = np.where(items >= 0, assignment.item_labels[np.maximum(items, 0)], -1)
    same = (item_c == user_c) & (items >= 0)
    return float(same.sum() / (ranked.num_users * k))


def gini_from_counts(counts: np.ndarray, n_communities: int) -> float:
    """Gini index of an item-per-community count vector (zeros included)."""
    c = np.sort(np.asarray(counts, dtype=np.float64))
    if len(c) != n_communities:
        raise ValueError("counts must cover every community (zeros included)")
    s = np.cumsum(c)
    if s[-1] == 0:
        return 0.0
    n = n_communities
    return float(1.0 - 2.0 * s[:-1].sum() / (n * s[-1]) - 1.0 / n)


def cgi_at_k(
    ranked: RankedLists,
    assignment: CommunityAssignment,
    k: int | None = None,
    aggregate: str = "per_user",
) -> float:
    """Community Gini of the top-k lists; per-user average by default, one
    pooled histogram with ``aggregate="pooled"``."""
    if aggregate not in ("per_user", "pooled"):
        raise ValueError(f"unknown aggregate mode {aggregate!r}")
    k = k or ranked.k
    n_comm = assignment.num_communities
    pooled = np.zeros(n_comm)
    total = 0.0
    for u in range(ranked.num_users):
        items = ranked.items[u, :k]
        items = items[items >= 0]
        counts = np.bincount(assignment.item_labels[items], minlength=n_comm)
        if aggregate == "pooled":
            pooled += counts
        else:
            total += gini_from_counts(counts, n_comm)
    if aggregate == "pooled":
        return gini_from_counts(pooled, n_comm)
    return total / ranked.num_users


def build_debiased_test(
    dataset: InteractionDataset, assignment: CommunityAssignment, seed: int = 0
) -> np.ndarray:
    """Reduced test split keeping at most one item per (user, community).

    The retained item is drawn uniformly per (user, community) with a
    generator seeded from (seed, user), so the reduction is deterministic.
    """
    item_labels = assignment.item_labels
    by_user: dict[int, dict[int, list[int]]] = {}
    for u, i in dataset.test:
        by_user.setdefault(int(u), {}).setdefault(int(item_labels[i]), []).append(int(i))
    rows: list[tuple[int, int]] = []
    for u in sorted(by_user):
        rng = np.random.default_rng(np.random.SeedSequence([seed, u, 0xDEB]))
        for comm in sorted(by_user[u]):
            pool = sorted(by_user[u][comm])
            rows.append((u, pool[int(rng.integers(len(pool)))]))
    if not rows:
        return np.empty((0, 2), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)


def user_group_report(
    profile: UserBubbleProfile,
    ranked: RankedLists,
    assignment: CommunityAssignment,
    k: int | None = None,
    bins: tuple[float, ...] = DEFAULT_BINS,
) -> list[dict]:
    """Users bucketed by initial intra-community share; per bin reports the
    mean initial share, the mean achieved share at k, and their difference.
    Empty bins are omitted."""
    k = k or ranked.k
    init = profile.ilfbi_init
    # right-closed bins: [b0, b1], (b1, b2], ...
    idx = np.digitize(init, bins[1:-1], right=True)
    per_user = np.zeros(ranked.num_users)
    user_c = assignment.user_labels
    for u in range(ranked.num_users):
        items = ranked.items[u, :k]
        items = items[items >= 0]
        per_user[u] = np.mean(assignment.item_labels[items] == user_c[u]) if len(items) else 0.0
    report = []
    for b in range(len(bins) - 1):
        members = np.flatnonzero(idx == b)
        if len(members) == 0:
            continue
        mean_init = float(init[members].mean())
        mean_at_k = float(per_user[members].mean())
        report.append(
            {
                "bin": (bins[b], bins[b + 1]),
                "users": int(len(members)),
                "mean_ilfbi_init": mean_init,
                "mean_ilfbi_at_k": mean_at_k,
                "increment": mean_at_k - mean_init,
            }
        )
    return report


def export_embeddings(model, assignment: CommunityAssignment, path: str) -> None:
    """TSV of node-type, dense index, community id, and embedding columns."""
    dim = model.dim
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("type\tindex\tcommunity\t" + "\t".join(f"e{j}" for j in range(dim)) + "\n")
        for idx in range(model.num_users):
            vals = "\t".join(f"{v:.8e}" for v in model.user_emb[idx])
            fh.write(f"u\t{idx}\t{assignment.user_labels[idx]}\t{vals}\n")
        for idx in range(model.num_items):
            vals = "\t".join(f"{v:.8e}" for v in model.item_emb[idx])
            fh.write(f"i\t{idx}\t{assignment.item_labels[idx]}\t{vals}\n")


# ---------------------------------------------------------------------------
# Aggregate report.
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    """Per-k accuracy and filter-bubble metrics plus run metadata."""

    metrics: dict[int, dict[str, float]]
    metadata: dict[str, str] = field(default_factory=dict)


def evaluate_scores(
    scores: np.ndarray,
    dataset: InteractionDataset,
    assignment: CommunityAssignment,
    ks: tuple[int, ...] = DEFAULT_KS,
    test: np.ndarray | None = None,
    metadata: dict[str, str] | None = None,
) -> MetricsReport:
    """Full metric sweep of a score matrix at each k."""
    test = dataset.test if test is None else test
    out: dict[int, dict[str, float]] = {}
    for k in ks:
        ranked = rank_topk(scores, dataset, k=k)
        p, r, n = precision_recall_ndcg(ranked, test, k=k)
        out[k] = {
            "precision": p,
            "recall": r,
            "ndcg": n,
            "ilfbi": ilfbi_at_k(ranked, assignment, k=k),
            "cgi": cgi_at_k(ranked, assignment, k=k),
        }
    return MetricsReport(metrics=out, metadata=dict(metadata or {}))


_COLUMNS = ("precision", "recall", "ndcg", "ilfbi", "cgi")


def render_report(report: MetricsReport) -> str:
    """Human-readable aligned table."""
    lines = []
    for key in sorted(report.metadata):
        lines.append(f"# {key} = {report.metadata[key]}")
    header = f"{'k':>6} " + " ".join(f"{c:>10}" for c in _COLUMNS)
    lines.append(header)
    for k in sorted(report.metrics):
        row = report.metrics[k]
        lines.append(f"{k:>6} " + " ".join(f"{row[c]:>10.4f}" for c in _COLUMNS))
    return "\n".join(lines) + "\n"


def report_to_kv(report: MetricsReport) -> str:
    """Machine-readable dotted key-value lines, e.g. ``k20.ilfbi=0.8858``."""
    lines = []
    for key in sorted(report.metadata):
        lines.append(f"meta.{key}={report.metadata[key]}")
    for k in sorted(report.metrics):
        for c in _COLUMNS:
            lines.append(f"k{k}.{c}={report.metrics[k][c]:.6f}")
    return "\n".join(lines) + "\n"
