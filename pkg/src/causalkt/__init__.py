"""Causal knowledge tracing: a GRU masked by a learnable permuted causal structure."""

from .data import PlantedWorld, ResponseEvent, ResponseSequence, chain_dag, load_responses, sample_dag, simulate_students
from .mask import CausalMaskParams, build_L, build_mask, extract_adjacency
from .metrics import is_dag, structural_f1
from .model import CausalKT
from .sinkhorn import SinkhornConfig, hardness, round_to_permutation, sinkhorn
from .trainer import TrainConfig, evaluate_prediction, train

__version__ = "0.1.0"

__all__ = [
    "CausalKT",
    "CausalMaskParams",
    "PlantedWorld",
    "ResponseEvent",
    "ResponseSequence",
    "SinkhornConfig",
    "TrainConfig",
    "build_L",
    "build_mask",
    "chain_dag",
    "evaluate_prediction",
    "extract_adjacency",
    "hardness",
    "is_dag",
    "load_responses",
    "round_to_permutation",
    "sample_dag",
    "simulate_students",
    "sinkhorn",
    "structural_f1",
    "train",
]
