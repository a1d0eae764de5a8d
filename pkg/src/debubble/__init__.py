"""Community-aware filter bubble mitigation for implicit-feedback
recommenders: community detection over the interaction graph, adversarially
debiased embedding training, community-targeted negative sampling,
user-adaptive score fusion, and a community-aware evaluation suite."""

from .baselines import FairnessBPR, IPSWeightedBPR, mmr_rerank, mmr_rerank_all
from .communities import (
    CommunityAssignment,
    CompatibilityWeights,
    LouvainCommunities,
    UserBubbleProfile,
    compatibility,
    ilfbi_init,
    louvain,
    modularity,
)
from .data import (
    InteractionDataset,
    RawInteractions,
    load_interactions,
    read_split,
    split_dataset,
    write_split,
)
from .evaluation import (
    MetricsReport,
    RankedLists,
    build_debiased_test,
    cgi_at_k,
    evaluate_scores,
    export_embeddings,
    ilfbi_at_k,
    precision_recall_ndcg,
    rank_topk,
    user_group_report,
)
from .framework import (
    CommunityAdversarialBPR,
    Discriminator,
    adv_loss,
    ce_loss,
    cgcn_propagate,
    compute_eta,
    discriminate,
    fuse_scores,
    grl_backward,
    sample_negative,
)
from .models import (
    Adam,
    BPRRecommender,
    EmbeddingModel,
    TrainingConfig,
    lightgcn_propagate,
    pretrain,
    read_checkpoint,
    score,
    write_checkpoint,
)
from .sampling import NegativeSampler
from .synthetic import make_community_interactions

__version__ = "0.1.0"
