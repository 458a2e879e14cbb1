"""Extractive summarization over a heterogeneous word/sentence(/document) graph, on numpy."""
from .config import ConfigError, TrainConfig, load_config, profile
from .decoding import Selection, decode, select_topk, trigram_blocking
from .graph import HeteroGraph, build_graph, build_hdsg, build_hsg
from .model import HeterSumModel, Instance
from .pipeline import Artifacts, fit_preprocessing, prepare, prepare_all
from .rouge import RougeScore, greedy_oracle, rouge_l, rouge_n
from .text import DataError, Example, Vocabulary, tokenize
from .trainer import Checkpoint, analyze, evaluate, summarize, train

__version__ = "0.1.0"

__all__ = [
    "Artifacts", "Checkpoint", "ConfigError", "DataError", "Example", "HeteroGraph", "HeterSumModel",
    "Instance", "RougeScore", "Selection", "TrainConfig", "Vocabulary", "analyze", "build_graph",
    "build_hdsg", "build_hsg", "decode", "evaluate", "fit_preprocessing", "greedy_oracle", "load_config",
    "prepare", "prepare_all", "profile", "rouge_l", "rouge_n", "select_topk", "summarize", "tokenize",
    "train", "trigram_blocking",
]
