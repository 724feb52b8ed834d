"""Decoupled question/document encoders for cheap neural reranking.

Documents are encoded once by their own stack and cached; at query time only
the question is encoded and a short interaction stack scores each pair.
"""

from .cache import CacheKey, EncodingCache
from .config import BENCH_PROFILE, RunConfig
from .data import Document, Question, read_corpus, read_questions
from .encoder import (DOCUMENT, QUESTION, EncodingMatrix, TokenSequence, encode_document, encode_pair_concat,
                      encode_question, precompute_corpus, tokenize)
from .errors import (CacheMissError, ConsistencyError, CoverageError, DCRankError, FormatError, InvalidInputError,
                     ProvenanceError, SchemaError, StageError)
from .layers import OpCounters
from .metrics import MetricsReport, evaluate, p_at_n, pbt_at_n, ptb_at_n
from .model import Model
from .rerank import rerank
from .retrieval import RankedList, TfidfIndex, retrieve
from .training import train

__version__ = "0.1.0"

__all__ = [
    "BENCH_PROFILE", "CacheKey", "CacheMissError", "ConsistencyError", "CoverageError", "DCRankError", "DOCUMENT",
    "Document", "EncodingCache", "EncodingMatrix", "FormatError", "InvalidInputError", "MetricsReport", "Model",
    "OpCounters", "ProvenanceError", "QUESTION", "Question", "RankedList", "RunConfig", "SchemaError",
    "StageError", "TfidfIndex", "TokenSequence", "encode_document", "encode_pair_concat", "encode_question",
    "evaluate", "p_at_n", "pbt_at_n", "precompute_corpus", "ptb_at_n", "read_corpus", "read_questions", "rerank",
    "retrieve", "tokenize", "train",
]
