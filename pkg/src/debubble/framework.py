"""Adversarial community debiasing on top of the BPR base models.

The pipeline per mini-batch: score with the base tables (propagated for
lightgcn), run the parameter-free community-weighted convolution over the
full graph to extract community attributes, classify those attributes with
a two-layer conditional discriminator, and apply one combined update. A
gradient reversal sits between the convolution output and the
discriminator: identity forward, gradient scaled by -beta backward, so the
discriminator learns to recognize communities while the embeddings learn to
hide them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .communities import (
    CommunityAssignment,
    CompatibilityWeights,
    UserBubbleProfile,
    compatibility,
    ilfbi_init,
    louvain,
)
from .data import InteractionDataset
from .models import (
    Adam,
    EmbeddingModel,
    NumericError,
    PropagationCache,
    TrainingConfig,
    base_embeddings,
    bpr_batch_gradients,
    add_l2_rows,
    build_propagation,
    init_model,
    iterate_batches,
    lightgcn_backward,
    data_rng,
    score_matrix,
    CHECKPOINT_MAGIC,
)
from .models import _pack_header, _read_header, _read_table, _table_bytes  # noqa: F401
from .sampling import NegativeSampler, sample_negative  # noqa: F401  (re-export)

__all__ = [
    "Discriminator",
    "CommunityEmbeddings",
    "CgcnCache",
    "init_discriminator",
    "build_cgcn",
    "cgcn_propagate",
    "cgcn_backward",
    "discriminate",
    "ce_loss",
    "adv_loss",
    "grl_backward",
    "compute_eta",
    "fuse_scores",
    "fused_score_matrix",
    "AdversarialTrainer",
    "CommunityAdversarialBPR",
    "write_adversarial_checkpoint",
    "read_adversarial_checkpoint",
    "sample_negative",
]

CE_FLOOR = 1e-12
ADV_SECTION_MAGIC = b"DBAD"


# ---------------------------------------------------------------------------
# Community-reweighted graph convolution (no learnable parameters).
# ---------------------------------------------------------------------------


@dataclass
class CgcnCache:
    """Sparse propagation operators weighted by community compatibility."""

    w_ui: sp.csr_matrix  # (m, n): h_ui / sqrt(user_norm[u] * item_norm[i])
    w_iu: sp.csr_matrix  # (n, m): h_iu / sqrt(item_norm[i] * user_norm[u])
    w_ui_t: sp.csr_matrix
    w_iu_t: sp.csr_matrix


def build_cgcn(weights: CompatibilityWeights) -> CgcnCache:
    edges = weights.edges
    m = len(weights.user_norm)
    n = len(weights.item_norm)
    un = weights.user_norm[edges[:, 0]]
    inorm = weights.item_norm[edges[:, 1]]
    if np.any(un <= 0) or np.any(inorm <= 0):
        raise ValueError("non-positive compatibility norm on a node with neighbours")
    denom = np.sqrt(un) * np.sqrt(inorm)
    w_ui = sp.csr_matrix((weights.h_ui / denom, (edges[:, 0], edges[:, 1])), shape=(m, n))
    w_iu = sp.csr_matrix((weights.h_iu / denom, (edges[:, 1], edges[:, 0])), shape=(n, m))
    return CgcnCache(w_ui=w_ui, w_iu=w_iu, w_ui_t=w_ui.T.tocsr(), w_iu_t=w_iu.T.tocsr())


@dataclass
class CommunityEmbeddings:
    """Per-layer propagated tables and their combination."""

    user_layers: list[np.ndarray]
    item_layers: list[np.ndarray]
    user_comm: np.ndarray
    item_comm: np.ndarray
    n_layers: int
    combine: str  # "sum" | "mean"


def cgcn_propagate(
    user_base: np.ndarray,
    item_base: np.ndarray,
    cache: CgcnCache,
    n_layers: int = 2,
    combine: str = "sum",
) -> CommunityEmbeddings:
    """Reweighted propagation; layer 0 is the base embedding itself.

    The combined community embedding is the plain layer sum by default
    (``combine="mean"`` divides by L+1). Zero-degree nodes propagate
    nothing, so their community embedding reduces to the layer-0 term.
    """
    if combine not in ("sum", "mean"):
        raise ValueError(f"unknown combine mode {combine!r}")
    user_layers = [user_base]
    item_layers = [item_base]
    for _ in range(n_layers):
        user_layers.append(cache.w_ui @ item_layers[-1])
        item_layers.append(cache.w_iu @ user_layers[-2])
    user_comm = np.sum(user_layers, axis=0)
    item_comm = np.sum(item_layers, axis=0)
    if combine == "mean":
        user_comm = user_comm / (n_layers + 1)
        item_comm = item_comm / (n_layers + 1)
    return CommunityEmbeddings(
        user_layers=user_layers,
        item_layers=item_layers,
        user_comm=user_comm,
        item_comm=item_comm,
        n_layers=n_layers,
        combine=combine,
    )


def cgcn_backward(
    g_user_comm: np.ndarray,
    g_item_comm: np.ndarray,
    cache: CgcnCache,
    n_layers: int,
    combine: str = "sum",
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the combined community embedding w.r.t. the base tables."""
    if combine == "mean":
        g_user_comm = g_user_comm / (n_layers + 1)
        g_item_comm = g_item_comm / (n_layers + 1)
    acc_u = g_user_comm.copy()
    acc_i = g_item_comm.copy()
    for _ in range(n_layers):
        low_u = cache.w_iu_t @ acc_i
        low_i = cache.w_ui_t @ acc_u
        acc_u = low_u + g_user_comm
        acc_i = low_i + g_item_comm
    return acc_u, acc_i


# ---------------------------------------------------------------------------
# Conditional discriminator: two fully-connected layers over the community
# embedding concatenated with a shared global user/item embedding.
# ---------------------------------------------------------------------------


@dataclass
class Discriminator:
    w1: np.ndarray  # (d + g, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h, n_comm)
    b2: np.ndarray  # (n_comm,)
    global_user: np.ndarray  # (g,)
    global_item: np.ndarray  # (g,)

    @property
    def n_communities(self) -> int:
        return self.w2.shape[1]

    @property
    def global_dim(self) -> int:
        return self.global_user.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {
            "w1": self.w1,
            "b1": self.b1,
            "w2": self.w2,
            "b2": self.b2,
            "global_user": self.global_user,
            "global_item": self.global_item,
        }

    def copy(self) -> "Discriminator":
        return replace(self, **{k: v.copy() for k, v in self.params().items()})


def init_discriminator(
    dim: int, n_communities: int, hidden: int = 64, global_dim: int = 16, seed: int = 0
) -> Discriminator:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD15C]))
    return Discriminator(
        w1=rng.normal(0.0, 0.1, size=(dim + global_dim, hidden)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, 0.1, size=(hidden, n_communities)),
        b2=np.zeros(n_communities),
        global_user=rng.normal(0.0, 0.1, size=global_dim),
        global_item=rng.normal(0.0, 0.1, size=global_dim),
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(disc: Discriminator, rows: np.ndarray, kind: str):
    if kind not in ("user", "item"):
        raise ValueError(f"node kind must be 'user' or 'item', got {kind!r}")
    g = disc.global_user if kind == "user" else disc.global_item
    x = np.concatenate([rows, np.broadcast_to(g, (rows.shape[0], len(g)))], axis=1)
    z1 = x @ disc.w1 + disc.b1
    a1 = np.maximum(z1, 0.0)
    logits = a1 @ disc.w2 + disc.b2
    return _softmax(logits), (x, z1, a1)


def discriminate(disc: Discriminator, e_comm_node: np.ndarray, node_kind: str) -> np.ndarray:
    """Community probability vector(s) for one node or a batch of nodes."""
    rows = np.atleast_2d(e_comm_node)
    probs, _ = _forward(disc, rows, node_kind)
    return probs[0] if e_comm_node.ndim == 1 else probs


def ce_loss(prob: np.ndarray, label: int) -> float:
    """Cross-entropy against a one-hot label, probability floored."""
    return float(-np.log(max(float(prob[label]), CE_FLOOR)))


def adv_loss(
    disc: Discriminator,
    e_comm_u: np.ndarray,
    e_comm_i: np.ndarray,
    e_comm_j: np.ndarray,
    labels_u: np.ndarray,
    labels_i: np.ndarray,
    labels_j: np.ndarray,
) -> float:
    """Batch-summed cross-entropy over the triplet's three predictions."""
    total = 0.0
    for rows, labels, kind in (
        (np.atleast_2d(e_comm_u), np.atleast_1d(labels_u), "user"),
        (np.atleast_2d(e_comm_i), np.atleast_1d(labels_i), "item"),
        (np.atleast_2d(e_comm_j), np.atleast_1d(labels_j), "item"),
    ):
        probs, _ = _forward(disc, rows, kind)
        picked = np.maximum(probs[np.arange(len(labels)), labels], CE_FLOOR)
        total += float(-np.log(picked).sum())
    return total


def grl_backward(upstream: np.ndarray, beta: float) -> np.ndarray:
    """Gradient reversal: identity forward, -beta times the gradient back."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return -beta * upstream


def _disc_batch_backward(disc, rows, labels, kind, cache):
    """Summed-CE gradients for one kind. Returns (ce_sum, correct_count,
    param grads, gradient w.r.t. the community-embedding rows)."""
    probs, (x, z1, a1) = _forward(disc, rows, kind)
    b = len(labels)
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0  # d(sum CE)/dlogits
    g_w2 = a1.T @ dlogits
    g_b2 = dlogits.sum(axis=0)
    da1 = dlogits @ disc.w2.T
    dz1 = da1 * (z1 > 0.0)
    g_w1 = x.T @ dz1
    g_b1 = dz1.sum(axis=0)
    dx = dz1 @ disc.w1.T
    d_rows = dx[:, : rows.shape[1]]
    d_global = dx[:, rows.shape[1] :].sum(axis=0)
    picked = np.maximum(probs[np.arange(b), labels], CE_FLOOR)
    ce_sum = float(-np.log(picked).sum())
    correct = int((probs.argmax(axis=1) == labels).sum())
    grads = {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2}
    grads["global_user" if kind == "user" else "global_item"] = d_global
    for key, val in grads.items():
        cache[key] = cache.get(key, 0.0) + val
    return ce_sum, correct, d_rows


# ---------------------------------------------------------------------------
# User-adaptive inference fusion.
# ---------------------------------------------------------------------------


def compute_eta(profile: UserBubbleProfile) -> np.ndarray:
    """Per-user fusion weight: initial bubble share over twice its mean,
    clamped into [0, 1]. All zeros when the mean is zero."""
    mean = profile.mean_ilfbi_init
    if mean == 0.0:
        return np.zeros_like(profile.ilfbi_init)
    return np.clip(profile.ilfbi_init / (2.0 * mean), 0.0, 1.0)


def fuse_scores(
    u: int,
    items: np.ndarray,
    cd_model: EmbeddingModel,
    pretrained_bm: EmbeddingModel,
    eta: np.ndarray,
    cd_prop: PropagationCache | None = None,
    bm_prop: PropagationCache | None = None,
) -> np.ndarray:
    """eta-weighted blend of debiased and frozen-pretrained scores for one
    user over the given candidate items."""
    cd_u, cd_i = base_embeddings(cd_model, cd_prop)
    bm_u, bm_i = base_embeddings(pretrained_bm, bm_prop)
    items = np.asarray(items)
    y_cd = cd_i[items] @ cd_u[u]
    y_bm = bm_i[items] @ bm_u[u]
    e = float(eta[u])
    return e * y_cd + (1.0 - e) * y_bm


def fused_score_matrix(
    cd_model: EmbeddingModel,
    pretrained_bm: EmbeddingModel,
    eta: np.ndarray,
    cd_prop: PropagationCache | None = None,
    bm_prop: PropagationCache | None = None,
) -> np.ndarray:
    y_cd = score_matrix(cd_model, cd_prop)
    y_bm = score_matrix(pretrained_bm, bm_prop)
    e = eta[:, None]
    return e * y_cd + (1.0 - e) * y_bm


# ---------------------------------------------------------------------------
# Training.
# ---------------------------------------------------------------------------


class AdversarialTrainer:
    """End-to-end training of base tables against the community
    discriminator, with the gradient-reversal combination rule."""

    def __init__(
        self,
        dataset: InteractionDataset,
        assignment: CommunityAssignment,
        config: TrainingConfig,
        kind: str = "mf",
        dim: int = 64,
        n_layers: int = 3,
        cgcn_layers: int = 2,
        disc_hidden: int = 64,
        global_dim: int = 16,
        comm_combine: str = "sum",
        use_cgcn: bool = True,
        use_discriminator: bool = True,
        use_community_sampling: bool = True,
    ):
        self.dataset = dataset
        self.assignment = assignment
        self.config = config
        self.use_discriminator = use_discriminator
        self.cgcn_layers = cgcn_layers if use_cgcn else 0
        self.comm_combine = comm_combine
        self.model = init_model(kind, dataset.num_users, dataset.num_items, dim, n_layers, config.seed)
        self.disc = init_discriminator(
            dim, assignment.num_communities, disc_hidden, global_dim, config.seed
        )
        self.prop = build_propagation(dataset) if kind == "lightgcn" else None
        weights = compatibility(dataset, assignment)
        self.cgcn = build_cgcn(weights)
        alpha = config.alpha if use_community_sampling else 0.0
        self.sampler = NegativeSampler(dataset, assignment if alpha > 0 else None, alpha)
        self.adam_b = Adam(lr=config.learning_rate)
        self.adam_d = Adam(lr=config.learning_rate)
        self._labels_u = assignment.user_labels
        self._labels_i = assignment.item_labels

    # -- gradient plumbing -------------------------------------------------

    def batch_gradients(self, batch):
        """Losses and raw-table gradients for one batch.

        Returns (stats, g_rec, g_adv_b, g_d): g_rec is the recommendation
        gradient (L2 included) on the raw tables; g_adv_b the un-reversed
        adversarial gradient on the raw tables; g_d the discriminator
        gradient (its own L2 included).
        """
        users, pos, neg = batch
        model, config = self.model, self.config
        user_base, item_base = base_embeddings(model, self.prop)
        loss_rec, g_rec_ub, g_rec_ib = bpr_batch_gradients(user_base, item_base, users, pos, neg)

        stats = {"batch_size": len(users)}
        g_adv_b = None
        g_d = None
        loss_adv = 0.0
        if self.use_discriminator:
            emb = cgcn_propagate(
                user_base, item_base, self.cgcn, self.cgcn_layers, self.comm_combine
            )
            g_d = {}
            correct = 0
            g_comm_u = np.zeros_like(user_base)
            g_comm_i = np.zeros_like(item_base)
            ce_u, ok_u, d_rows_u = _disc_batch_backward(
                self.disc, emb.user_comm[users], self._labels_u[users], "user", g_d
            )
            np.add.at(g_comm_u, users, d_rows_u)
            ce_i, ok_i, d_rows_i = _disc_batch_backward(
                self.disc, emb.item_comm[pos], self._labels_i[pos], "item", g_d
            )
            np.add.at(g_comm_i, pos, d_rows_i)
            ce_j, ok_j, d_rows_j = _disc_batch_backward(
                self.disc, emb.item_comm[neg], self._labels_i[neg], "item", g_d
            )
            np.add.at(g_comm_i, neg, d_rows_j)
            loss_adv = ce_u + ce_i + ce_j
            correct = ok_u + ok_i + ok_j

            g_adv_ub, g_adv_ib = cgcn_backward(
                g_comm_u, g_comm_i, self.cgcn, self.cgcn_layers, self.comm_combine
            )
            if model.kind == "lightgcn":
                g_adv_b = dict(
                    zip(("user", "item"), lightgcn_backward(g_adv_ub, g_adv_ib, self.prop, model.n_layers))
                )
            else:
                g_adv_b = {"user": g_adv_ub, "item": g_adv_ib}
            if config.l2_disc:
                for name, p in self.disc.params().items():
                    g_d[name] = g_d[name] + 2.0 * config.l2_disc * p
                    loss_adv += config.l2_disc * float(np.sum(p * p))
            stats["disc_accuracy"] = correct / (3.0 * len(users))

        if model.kind == "lightgcn":
            g_rec_u, g_rec_i = lightgcn_backward(g_rec_ub, g_rec_ib, self.prop, model.n_layers)
        else:
            g_rec_u, g_rec_i = g_rec_ub, g_rec_ib
        loss_rec += add_l2_rows(model, users, pos, neg, config.l2_base, g_rec_u, g_rec_i)
        stats["loss_rec"] = loss_rec
        stats["loss_adv"] = loss_adv
        return stats, {"user": g_rec_u, "item": g_rec_i}, g_adv_b, g_d

    def train_step(self, batch) -> dict:
        """One combined update: theta_b descends L_rec - beta * L_adv (the
        reversal rule), theta_d descends L_adv."""
        stats, g_rec, g_adv_b, g_d = self.batch_gradients(batch)
        beta = self.config.beta
        if g_adv_b is not None:
            g_b = {k: g_rec[k] + grl_backward(g_adv_b[k], beta) for k in g_rec}
        else:
            g_b = g_rec
        total = stats["loss_rec"] + stats["loss_adv"]
        if not np.isfinite(total):
            raise NumericError(
                "non-finite loss; parameter norms: "
                f"user={np.linalg.norm(self.model.user_emb):.3e} "
                f"item={np.linalg.norm(self.model.item_emb):.3e}"
            )
        self.adam_b.step(
            {"user": self.model.user_emb, "item": self.model.item_emb}, g_b
        )
        if g_d is not None:
            self.adam_d.step(self.disc.params(), g_d)
        return stats

    def train_epoch(self, rng: np.random.Generator) -> dict:
        """All train edges in shuffled order; returns mean losses and mean
        discriminator accuracy for the epoch."""
        totals = {"loss_rec": 0.0, "loss_adv": 0.0, "acc": 0.0, "count": 0}
        for batch in iterate_batches(self.dataset, self.sampler, self.config.batch_size, rng):
            stats = self.train_step(batch)
            b = stats["batch_size"]
            totals["loss_rec"] += stats["loss_rec"]
            totals["loss_adv"] += stats["loss_adv"]
            totals["acc"] += stats.get("disc_accuracy", 0.0) * b
            totals["count"] += b
        c = max(totals["count"], 1)
        return {
            "l_rec": totals["loss_rec"] / c,
            "l_adv": totals["loss_adv"] / c,
            "disc_acc": totals["acc"] / c,
        }

    def fit(self, log_rows: list | None = None) -> EmbeddingModel:
        """Epoch loop with early stopping on validation Recall@20; keeps the
        best-so-far tables."""
        from .evaluation import ilfbi_at_k, precision_recall_ndcg, rank_topk

        config = self.config
        rng = data_rng(config.seed)
        best = self.model.copy()
        best_disc = self.disc.copy()
        best_recall = -1.0
        stale = 0
        stop = False
        for epoch in range(1, config.epochs + 1):
            row = {"epoch": epoch, **self.train_epoch(rng)}
            if epoch % config.eval_every == 0:
                ranked = rank_topk(score_matrix(self.model, self.prop), self.dataset, k=20)
                _, recall, _ = precision_recall_ndcg(ranked, self.dataset.val, k=20)
                row["val_recall20"] = recall
                row["val_ilfbi20"] = ilfbi_at_k(ranked, self.assignment, k=20)
                if recall > best_recall:
                    best_recall = recall
                    best = self.model.copy()
                    best_disc = self.disc.copy()
                    stale = 0
                else:
                    stale += 1
                    if stale >= config.patience:
                        stop = True
            if log_rows is not None:
                log_rows.append(row)
            if stop:
                break
        if best_recall >= 0:
            self.model = best
            self.disc = best_disc
        return self.model


class CommunityAdversarialBPR(BaseEstimator):
    """Estimator facade for the adversarial debiasing pipeline.

    ``fit`` detects communities when none are given, trains fresh tables
    adversarially, and stores the per-user fusion weights. ``predict_scores``
    blends with a frozen pretrained base model when one is supplied.
    """

    def __init__(
        self,
        kind: str = "mf",
        embedding_dim: int = 64,
        n_layers: int = 3,
        cgcn_layers: int = 2,
        disc_hidden: int = 64,
        global_dim: int = 16,
        alpha: float = 0.5,
        beta: float = 0.5,
        learning_rate: float = 1e-3,
        l2_base: float = 1e-3,
        l2_disc: float = 1e-7,
        batch_size: int = 2048,
        epochs: int = 200,
        eval_every: int = 5,
        patience: int = 20,
        seed: int = 0,
        comm_combine: str = "sum",
        use_cgcn: bool = True,
        use_discriminator: bool = True,
        use_community_sampling: bool = True,
        use_adaptive_fusion: bool = True,
    ):
        self.kind = kind
        self.embedding_dim = embedding_dim
        self.n_layers = n_layers
        self.cgcn_layers = cgcn_layers
        self.disc_hidden = disc_hidden
        self.global_dim = global_dim
        self.alpha = alpha
        self.beta = beta
        self.learning_rate = learning_rate
        self.l2_base = l2_base
        self.l2_disc = l2_disc
        self.batch_size = batch_size
        self.epochs = epochs
        self.eval_every = eval_every
        self.patience = patience
        self.seed = seed
        self.comm_combine = comm_combine
        self.use_cgcn = use_cgcn
        self.use_discriminator = use_discriminator
        self.use_community_sampling = use_community_sampling
        self.use_adaptive_fusion = use_adaptive_fusion

    def _config(self) -> TrainingConfig:
        return TrainingConfig(
            learning_rate=self.learning_rate,
            l2_base=self.l2_base,
            l2_disc=self.l2_disc,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            alpha=self.alpha,
            beta=self.beta,
            eval_every=self.eval_every,
            patience=self.patience,
        )

    def fit(
        self,
        dataset: InteractionDataset,
        assignment: CommunityAssignment | None = None,
    ) -> "CommunityAdversarialBPR":
        if assignment is None:
            assignment = louvain(dataset, seed=self.seed)
        trainer = AdversarialTrainer(
            dataset,
            assignment,
            self._config(),
            kind=self.kind,
            dim=self.embedding_dim,
            n_layers=self.n_layers,
            cgcn_layers=self.cgcn_layers,
            disc_hidden=self.disc_hidden,
            global_dim=self.global_dim,
            comm_combine=self.comm_combine,
            use_cgcn=self.use_cgcn,
            use_discriminator=self.use_discriminator,
            use_community_sampling=self.use_community_sampling,
        )
        self.history_ = []
        self.model_ = trainer.fit(log_rows=self.history_)
        self.disc_ = trainer.disc
        self.assignment_ = assignment
        self.prop_ = trainer.prop
        profile = ilfbi_init(dataset, assignment)
        self.eta_ = compute_eta(profile) if self.use_adaptive_fusion else np.ones(dataset.num_users)
        return self

    def predict_scores(
        self,
        pretrained: EmbeddingModel | None = None,
        pretrained_prop: PropagationCache | None = None,
    ) -> np.ndarray:
        """Fused scores when a frozen pretrained model is given, otherwise
        the debiased model's own scores."""
        if pretrained is None or not self.use_adaptive_fusion:
            return score_matrix(self.model_, self.prop_)
        return fused_score_matrix(self.model_, pretrained, self.eta_, self.prop_, pretrained_prop)


# ---------------------------------------------------------------------------
# Update-rule formulations (used to check their equivalence).
# ---------------------------------------------------------------------------


def grl_update(params_b, params_d, g_rec, g_adv_b, g_d, mu: float, beta: float) -> None:
    """Single-objective rule: one SGD step on L_rec + L_adv(reversed(b), d)."""
    for k, p in params_b.items():
        p -= mu * (g_rec[k] + grl_backward(g_adv_b[k], beta))
    for k, p in params_d.items():
        p -= mu * g_d[k]


def alternating_update(params_b, params_d, g_rec, g_adv_b, g_d, mu1: float, mu2: float, beta: float) -> None:
    """Explicit min-max rule: theta_b descends L_rec - beta * L_adv, theta_d
    ascends it (equivalently descends L_adv scaled by beta)."""
    for k, p in params_b.items():
        p -= mu1 * (g_rec[k] - beta * g_adv_b[k])
    for k, p in params_d.items():
        p -= mu2 * beta * g_d[k]


# ---------------------------------------------------------------------------
# Extended checkpoint: base tables + discriminator + fusion weights.
# ---------------------------------------------------------------------------


def write_adversarial_checkpoint(
    path: str, model: EmbeddingModel, disc: Discriminator, eta: np.ndarray
) -> None:
    with open(path, "wb") as fh:
        fh.write(_pack_header(model))
        fh.write(_table_bytes(model.user_emb))
        fh.write(_table_bytes(model.item_emb))
        fh.write(ADV_SECTION_MAGIC)
        fh.write(
            struct.pack(
                "<III", disc.global_dim, disc.b1.shape[0], disc.n_communities
            )
        )
        for arr in (disc.w1, disc.b1, disc.w2, disc.b2, disc.global_user, disc.global_item):
            fh.write(_table_bytes(arr.reshape(arr.shape[0], -1)))
        fh.write(_table_bytes(eta.reshape(-1, 1)))


def read_adversarial_checkpoint(path: str):
    with open(path, "rb") as fh:
        kind, m, n, d, layers, seed = _read_header(fh)
        user = _read_table(fh, m, d)
        item = _read_table(fh, n, d)
        magic = fh.read(4)
        if magic != ADV_SECTION_MAGIC:
            raise ValueError(f"bad discriminator section magic {magic!r}")
        g, h, n_comm = struct.unpack("<III", fh.read(12))
        disc = Discriminator(
            w1=_read_table(fh, d + g, h),
            b1=_read_table(fh, h, 1).ravel(),
            w2=_read_table(fh, h, n_comm),
            b2=_read_table(fh, n_comm, 1).ravel(),
            global_user=_read_table(fh, g, 1).ravel(),
            global_item=_read_table(fh, g, 1).ravel(),
        )
        eta = _read_table(fh, m, 1).ravel()
    model = EmbeddingModel(kind=kind, user_emb=user, item_emb=item, n_layers=layers, seed=seed)
    return model, disc, eta
