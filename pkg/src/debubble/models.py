"""Embedding-table recommenders trained with BPR and a from-scratch Adam.

Two propagation kinds share one parameter layout (a user table and an item
table): plain inner-product scoring ("mf") and linear graph convolution over
the interaction graph with layer averaging ("lightgcn"). All gradients are
analytic; propagation is linear in the layer-0 tables, so its backward pass
is the transposed propagation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.special import expit
from sklearn.base import BaseEstimator

from .data import InteractionDataset
from .sampling import NegativeSampler

__all__ = [
    "EmbeddingModel",
    "TrainingConfig",
    "Adam",
    "PropagationCache",
    "NumericError",
    "init_model",
    "build_propagation",
    "lightgcn_propagate",
    "lightgcn_backward",
    "base_embeddings",
    "score",
    "score_matrix",
    "bpr_batch_gradients",
    "add_l2_rows",
    "bpr_step",
    "pretrain",
    "run_bpr_training",
    "write_checkpoint",
    "read_checkpoint",
    "BPRRecommender",
]

CHECKPOINT_MAGIC = b"DBRC"
CHECKPOINT_VERSION = 1
_KIND_CODES = {"mf": 0, "lightgcn": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


class NumericError(RuntimeError):
    """Raised when training produces non-finite values."""


@dataclass
class EmbeddingModel:
    """User/item embedding tables plus the propagation rule tag."""

    kind: str  # "mf" | "lightgcn"
    user_emb: np.ndarray  # (m, d) float64
    item_emb: np.ndarray  # (n, d)
    n_layers: int = 3  # propagation depth, lightgcn only
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown model kind {self.kind!r}")

    @property
    def num_users(self) -> int:
        return self.user_emb.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_emb.shape[0]

    @property
    def dim(self) -> int:
        return self.user_emb.shape[1]

    def copy(self) -> "EmbeddingModel":
        return replace(self, user_emb=self.user_emb.copy(), item_emb=self.item_emb.copy())


@dataclass
class TrainingConfig:
    """Shared knobs for base and adversarial training."""

    learning_rate: float = 1e-3
    l2_base: float = 1e-3
    l2_disc: float = 1e-7
    batch_size: int = 2048
    epochs: int = 200
    seed: int = 0
    alpha: float = 0.0  # community-targeted negative sampling probability
    beta: float = 0.0  # adversarial gradient scale
    eval_every: int = 5
    patience: int = 20  # early-stop patience, counted in evaluations

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta < 0.0:
            raise ValueError("beta must be non-negative")
        for name in ("learning_rate", "batch_size", "epochs", "eval_every", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class Adam:
    """Adam over a dict of named parameter tensors (one shared step count)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def init_model(
    kind: str, num_users: int, num_items: int, dim: int = 64, n_layers: int = 3, seed: int = 0
) -> EmbeddingModel:
    """Normal(0, 0.1) tables; bit-reproducible for a fixed seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    user = rng.normal(0.0, 0.1, size=(num_users, dim))
    item = rng.normal(0.0, 0.1, size=(num_items, dim))
    return EmbeddingModel(kind=kind, user_emb=user, item_emb=item, n_layers=n_layers, seed=seed)


# ---------------------------------------------------------------------------
# Graph propagation.
# ---------------------------------------------------------------------------


@dataclass
class PropagationCache:
    """Symmetric-normalized bipartite adjacency, prebuilt for training."""

    p_ui: sp.csr_matrix  # (m, n), weight 1/sqrt(|N_u| |N_i|)
    p_iu: sp.csr_matrix  # (n, m), transpose
    iso_users: np.ndarray  # bool, zero train degree
    iso_items: np.ndarray


def build_propagation(dataset: InteractionDataset) -> PropagationCache:
    edges = dataset.train
    m, n = dataset.num_users, dataset.num_items
    du = np.bincount(edges[:, 0], minlength=m).astype(np.float64)
    di = np.bincount(edges[:, 1], minlength=n).astype(np.float64)
    w = 1.0 / np.sqrt(du[edges[:, 0]] * di[edges[:, 1]])
    p_ui = sp.csr_matrix((w, (edges[:, 0], edges[:, 1])), shape=(m, n))
    return PropagationCache(
        p_ui=p_ui,
        p_iu=p_ui.T.tocsr(),
        iso_users=du == 0,
        iso_items=di == 0,
    )


def lightgcn_propagate(
    model: EmbeddingModel, prop: PropagationCache, n_layers: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Layer-mean of L propagation steps; zero-degree nodes pass layer 0
    through unchanged."""
    assert model.kind == "lightgcn", "propagation is only defined for lightgcn models"
    L = model.n_layers if n_layers is None else n_layers
    eu, ei = model.user_emb, model.item_emb
    sum_u, sum_i = eu.copy(), ei.copy()
    cur_u, cur_i = eu, ei
    for _ in range(L):
        nxt_u = prop.p_ui @ cur_i
        nxt_i = prop.p_iu @ cur_u
        if prop.iso_users.any():
            nxt_u[prop.iso_users] = cur_u[prop.iso_users]
        if prop.iso_items.any():
            nxt_i[prop.iso_items] = cur_i[prop.iso_items]
        sum_u += nxt_u
        sum_i += nxt_i
        cur_u, cur_i = nxt_u, nxt_i
    return sum_u / (L + 1), sum_i / (L + 1)


def lightgcn_backward(
    g_user_base: np.ndarray,
    g_item_base: np.ndarray,
    prop: PropagationCache,
    n_layers: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the layer-mean propagation w.r.t. the layer-0 tables."""
    L = n_layers
    gu = g_user_base / (L + 1)
    gi = g_item_base / (L + 1)
    acc_u, acc_i = gu.copy(), gi.copy()  # gradient on layer-k embeddings
    for _ in range(L, 0, -1):
        src_u = acc_u
        src_i = acc_i
        if prop.iso_users.any() or prop.iso_items.any():
            src_u = acc_u.copy()
            src_i = acc_i.copy()
            src_u[prop.iso_users] = 0.0
            src_i[prop.iso_items] = 0.0
        low_u = prop.p_ui @ src_i  # transpose of the item-side step
        low_i = prop.p_iu @ src_u
        if prop.iso_users.any():
            low_u[prop.iso_users] += acc_u[prop.iso_users]
        if prop.iso_items.any():
            low_i[prop.iso_items] += acc_i[prop.iso_items]
        acc_u = low_u + gu
        acc_i = low_i + gi
    return acc_u, acc_i


def base_embeddings(
    model: EmbeddingModel, prop: PropagationCache | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Kind-appropriate scoring embeddings (raw for mf, propagated for
    lightgcn)."""
    if model.kind == "mf":
        return model.user_emb, model.item_emb
    if prop is None:
        raise ValueError("lightgcn models need a propagation cache")
    return lightgcn_propagate(model, prop)


def score(model: EmbeddingModel, u: int, i: int, prop: PropagationCache | None = None) -> float:
    user_base, item_base = base_embeddings(model, prop)
    return float(user_base[u] @ item_base[i])


def score_matrix(
    model: EmbeddingModel,
    prop: PropagationCache | None = None,
    users: np.ndarray | None = None,
) -> np.ndarray:
    """(len(users), n) score matrix; all users when ``users`` is None."""
    user_base, item_base = base_embeddings(model, prop)
    if users is not None:
        user_base = user_base[users]
    return user_base @ item_base.T


# ---------------------------------------------------------------------------
# BPR loss and gradients.
# ---------------------------------------------------------------------------


def bpr_batch_gradients(
    user_base: np.ndarray,
    item_base: np.ndarray,
    users: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    triplet_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Pairwise ranking loss and its gradient w.r.t. the scoring tables.

    Returns (sum of -ln sigmoid(s_ui - s_uj), g_user, g_item) where the
    gradients are full tables with non-zero rows only at batch indexes. L2
    is not included here; it applies to the raw layer-0 tables.
    """
    eu = user_base[users]
    diff = item_base[pos] - item_base[neg]
    x = np.sum(eu * diff, axis=1)
    per = np.logaddexp(0.0, -x)  # -ln sigmoid(x), stable
    dx = -expit(-x)  # d/dx of the above
    if triplet_weights is not None:
        per = per * triplet_weights
        dx = dx * triplet_weights
    g_user = np.zeros_like(user_base)
    g_item = np.zeros_like(item_base)
    np.add.at(g_user, users, dx[:, None] * diff)
    np.add.at(g_item, pos, dx[:, None] * eu)
    np.add.at(g_item, neg, -dx[:, None] * eu)
    return float(per.sum()), g_user, g_item


def add_l2_rows(
    model: EmbeddingModel,
    users: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    l2: float,
    g_user: np.ndarray,
    g_item: np.ndarray,
) -> float:
    """Per-occurrence L2 on the raw rows touched by the batch (in-place)."""
    if l2 == 0.0:
        return 0.0
    U, V = model.user_emb, model.item_emb
    penalty = (
        np.sum(U[users] ** 2) + np.sum(V[pos] ** 2) + np.sum(V[neg] ** 2)
    )
    np.add.at(g_user, users, 2.0 * l2 * U[users])
    np.add.at(g_item, pos, 2.0 * l2 * V[pos])
    np.add.at(g_item, neg, 2.0 * l2 * V[neg])
    return float(l2 * penalty)


def _check_finite(value: float, model: EmbeddingModel) -> None:
    if not np.isfinite(value):
        raise NumericError(
            "non-finite loss; parameter norms: "
            f"user={np.linalg.norm(model.user_emb):.3e} "
            f"item={np.linalg.norm(model.item_emb):.3e}"
        )


def bpr_step(
    model: EmbeddingModel,
    adam: Adam,
    batch: tuple[np.ndarray, np.ndarray, np.ndarray],
    config: TrainingConfig,
    prop: PropagationCache | None = None,
    triplet_weights: np.ndarray | None = None,
    extra_grad=None,
) -> float:
    """One BPR update on a (users, pos, neg) batch. Returns the batch loss.

    ``extra_grad``, when given, is called with the scoring tables and the
    accumulating base-table gradients and may add a differentiable term
    (used by the fairness baseline); it returns its loss contribution.
    """
    users, pos, neg = batch
    user_base, item_base = base_embeddings(model, prop)
    loss, g_user_base, g_item_base = bpr_batch_gradients(
        user_base, item_base, users, pos, neg, triplet_weights
    )
    if extra_grad is not None:
        loss += extra_grad(user_base, item_base, users, pos, neg, g_user_base, g_item_base)
    if model.kind == "lightgcn":
        g_user, g_item = lightgcn_backward(g_user_base, g_item_base, prop, model.n_layers)
    else:
        g_user, g_item = g_user_base, g_item_base
    loss += add_l2_rows(model, users, pos, neg, config.l2_base, g_user, g_item)
    _check_finite(loss, model)
    adam.step(
        {"user": model.user_emb, "item": model.item_emb},
        {"user": g_user, "item": g_item},
    )
    return loss


# ---------------------------------------------------------------------------
# Training loop with early stopping on validation Recall@20.
# ---------------------------------------------------------------------------


def data_rng(seed: int) -> np.random.Generator:
    """Stream used for epoch shuffles and negative draws."""
    return np.random.default_rng(np.random.SeedSequence([seed, 0xDA7A]))


def iterate_batches(
    dataset: InteractionDataset,
    sampler: NegativeSampler,
    batch_size: int,
    rng: np.random.Generator,
):
    """Shuffled positives with sampled negatives, one epoch."""
    edges = dataset.train
    order = rng.permutation(len(edges))
    for start in range(0, len(order), batch_size):
        sel = order[start : start + batch_size]
        users = edges[sel, 0]
        pos = edges[sel, 1]
        yield users, pos, sampler.draw_batch(users, rng)


def _validation_recall(model, dataset, prop, k: int = 20) -> float:
    from .evaluation import precision_recall_ndcg, rank_topk

    ranked = rank_topk(score_matrix(model, prop), dataset, k=k)
    _, recall, _ = precision_recall_ndcg(ranked, dataset.val, k=k)
    return recall


def run_bpr_training(
    dataset: InteractionDataset,
    kind: str = "mf",
    dim: int = 64,
    n_layers: int = 3,
    config: TrainingConfig | None = None,
    sampler: NegativeSampler | None = None,
    triplet_weight_fn=None,
    extra_grad=None,
    assignment=None,
    log_rows: list | None = None,
) -> EmbeddingModel:
    """BPR training shared by the base models and the loss-variant baselines.

    Early-stops on validation Recall@20 with ``config.patience`` evaluation
    rounds without improvement and returns the best-so-far model. When
    ``assignment`` is given, validation ILFBI@20 is logged alongside.
    """
    config = config or TrainingConfig()
    model = init_model(kind, dataset.num_users, dataset.num_items, dim, n_layers, config.seed)
    prop = build_propagation(dataset) if kind == "lightgcn" else None
    sampler = sampler or NegativeSampler(dataset, assignment=None, alpha=0.0)
    rng = data_rng(config.seed)
    adam = Adam(lr=config.learning_rate)

    best = model.copy()
    best_recall = -1.0
    stale = 0
    stop = False
    for epoch in range(1, config.epochs + 1):
        total, count = 0.0, 0
        for batch in iterate_batches(dataset, sampler, config.batch_size, rng):
            weights = triplet_weight_fn(*batch) if triplet_weight_fn is not None else None
            total += bpr_step(model, adam, batch, config, prop, weights, extra_grad)
            count += len(batch[0])
        row = {"epoch": epoch, "l_rec": total / max(count, 1), "l_adv": 0.0, "disc_acc": ""}
        if epoch % config.eval_every == 0:
            recall = _validation_recall(model, dataset, prop)
            row["val_recall20"] = recall
            if assignment is not None:
                from .evaluation import ilfbi_at_k, rank_topk

                ranked = rank_topk(score_matrix(model, prop), dataset, k=20)
                row["val_ilfbi20"] = ilfbi_at_k(ranked, assignment, k=20)
            if recall > best_recall:
                best_recall = recall
                best = model.copy()
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    stop = True
        if log_rows is not None:
            log_rows.append(row)
        if stop:
            break
    if best_recall < 0:  # never evaluated (epochs < eval_every)
        best = model.copy()
    return best


def pretrain(
    dataset: InteractionDataset,
    kind: str = "mf",
    dim: int = 64,
    n_layers: int = 3,
    config: TrainingConfig | None = None,
    assignment=None,
    log_rows: list | None = None,
) -> EmbeddingModel:
    """Train the frozen base scorer with uniform negative sampling."""
    return run_bpr_training(
        dataset,
        kind=kind,
        dim=dim,
        n_layers=n_layers,
        config=config,
        sampler=NegativeSampler(dataset, assignment=None, alpha=0.0),
        assignment=assignment,
        log_rows=log_rows,
    )


# ---------------------------------------------------------------------------
# Checkpoints: versioned header + row-major little-endian float32 tables.
# ---------------------------------------------------------------------------


def _pack_header(model: EmbeddingModel) -> bytes:
    return CHECKPOINT_MAGIC + struct.pack(
        "<IBQQIIq",
        CHECKPOINT_VERSION,
        _KIND_CODES[model.kind],
        model.num_users,
        model.num_items,
        model.dim,
        model.n_layers,
        model.seed,
    )


def _table_bytes(table: np.ndarray) -> bytes:
    return np.ascontiguousarray(table, dtype="<f4").tobytes()


def write_checkpoint(model: EmbeddingModel, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(_pack_header(model))
        fh.write(_table_bytes(model.user_emb))
        fh.write(_table_bytes(model.item_emb))


def _read_header(fh) -> tuple[str, int, int, int, int, int]:
    magic = fh.read(4)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    version, kind_code, m, n, d, layers, seed = struct.unpack("<IBQQIIq", fh.read(33))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    return _KIND_NAMES[kind_code], m, n, d, layers, seed


def _read_table(fh, rows: int, cols: int) -> np.ndarray:
    raw = fh.read(rows * cols * 4)
    return np.frombuffer(raw, dtype="<f4").reshape(rows, cols).astype(np.float64)


def read_checkpoint(path: str) -> EmbeddingModel:
    with open(path, "rb") as fh:
        kind, m, n, d, layers, seed = _read_header(fh)
        user = _read_table(fh, m, d)
        item = _read_table(fh, n, d)
    return EmbeddingModel(kind=kind, user_emb=user, item_emb=item, n_layers=layers, seed=seed)


# ---------------------------------------------------------------------------
# Estimator wrapper.
# ---------------------------------------------------------------------------


class BPRRecommender(BaseEstimator):
    """Sklearn-style wrapper around BPR pretraining.

    After ``fit``: ``model_`` holds the trained tables, ``prop_`` the
    propagation cache (lightgcn only). ``predict_scores`` returns the full
    user-item score matrix used by the ranking metrics.
    """

    def __init__(
        self,
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
        self.kind = kind
        self.embedding_dim = embedding_dim
        self.n_layers = n_layers
        self.learning_rate = learning_rate
        self.l2 = l2
        self.batch_size = batch_size
        self.epochs = epochs
        self.eval_every = eval_every
        self.patience = patience
        self.seed = seed

    def _config(self) -> TrainingConfig:
        return TrainingConfig(
            learning_rate=self.learning_rate,
            l2_base=self.l2,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            eval_every=self.eval_every,
            patience=self.patience,
        )

    def fit(self, dataset: InteractionDataset, y=None) -> "BPRRecommender":
        self.model_ = pretrain(
            dataset,
            kind=self.kind,
            dim=self.embedding_dim,
            n_layers=self.n_layers,
            config=self._config(),
        )
        self.prop_ = build_propagation(dataset) if self.kind == "lightgcn" else None
        return self

    def predict_scores(self, users: np.ndarray | None = None) -> np.ndarray:
        return score_matrix(self.model_, self.prop_, users)
