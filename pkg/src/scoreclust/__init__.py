"""Hierarchical clustering of face similarity-score matrices."""

__version__ = "0.1.0"

from .score_space import (DistanceMatrix, ImageMeta, MetadataTable, ScoreSpaceError,
                          SimilarityMatrix, load_metadata, load_similarity, subset, to_distance)
from .linkage import Dendrogram, LinkageMethod, cluster, cluster_naive
from .dendro import Partition, cophenetic, cut_height, cut_k, export_dot, export_newick
from .evaluate import PurityReport, composition, error_breakdown, per_subject_structure, purity
from .synth import SynthConfig, generate

__all__ = [
    "DistanceMatrix", "ImageMeta", "MetadataTable", "ScoreSpaceError", "SimilarityMatrix",
    "load_metadata", "load_similarity", "subset", "to_distance",
    "Dendrogram", "LinkageMethod", "cluster", "cluster_naive",
    "Partition", "cophenetic", "cut_height", "cut_k", "export_dot", "export_newick",
    "PurityReport", "composition", "error_breakdown", "per_subject_structure", "purity",
    "SynthConfig", "generate",
]
