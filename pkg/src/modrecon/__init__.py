"""Community detection by reconstructing the modularity matrix with graph encoders."""

__version__ = "0.1.0"

from .apam import NewNode, align_features, infer_apam, infer_plain, peer_attention, prepare_inference
from .cluster import assign_nearest, kmeans_fit, sweep_k
from .estimators import ModularityCommunities, ModularityEmbedding, check_graph
from .gae import gae_forward, gae_train
from .graph import Graph, load_edge_list, load_features, load_labels, modularity_matrix, normalized_adjacency
from .metrics import accuracy, modularity_score, nmi
from .nn import TrainingConfig
from .onestage import train_onestage
from .synthetic import planted_partition
from .twostage import membership_encoding, neighborhood_sharing, sample_neighbors, train_twostage

__all__ = [
    "Graph", "TrainingConfig", "NewNode",
    "ModularityEmbedding", "ModularityCommunities", "check_graph",
    "load_edge_list", "load_features", "load_labels",
    "modularity_matrix", "normalized_adjacency", "modularity_score", "nmi", "accuracy",
    "train_onestage", "train_twostage", "gae_train", "gae_forward",
    "sample_neighbors", "neighborhood_sharing", "membership_encoding",
    "align_features", "peer_attention", "prepare_inference", "infer_apam", "infer_plain",
    "kmeans_fit", "assign_nearest", "sweep_k", "planted_partition",
]
