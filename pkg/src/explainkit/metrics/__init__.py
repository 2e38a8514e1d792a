"""Evaluation metrics: accuracy, corpus BLEU, ROUGE-L, METEOR, recover ratio."""

from .kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION
from .scores import (
    EvalPair,
    MetricError,
    MetricReport,
    accuracy,
    corpus_bleu,
    evaluate,
    meteor,
    recover_ratio,
    rouge_l,
)
from .tokenizers import tokenize_13a, whitespace_tokenize

__all__ = [
    "EvalPair",
    "MetricError",
    "MetricReport",
    "KERNEL_IMPLEMENTATION",
    "accuracy",
    "corpus_bleu",
    "evaluate",
    "meteor",
    "recover_ratio",
    "rouge_l",
    "tokenize_13a",
    "whitespace_tokenize",
]
