"""Structure-aware document embeddings and retrieval.

Learns fixed-length document representations by jointly enforcing content
similarity and link-graph structure through a quintuplet hinge loss with
relationship-strength-scaled margins, then serves ranked top-K retrieval
for free-text queries.
"""

from structembed.config import Config
from structembed.corpus import (
    AdjacencyMatrix,
    Corpus,
    Document,
    Fragment,
    Vocabulary,
    fragment,
    ingest,
    tokenize,
)
from structembed.encoder import (
    EncoderParams,
    backprop,
    distance,
    encode,
    init_params,
    load_checkpoint,
    save_checkpoint,
    similarity,
)
from structembed.intimacy import (
    IntimacyMatrix,
    RankedNeighbors,
    column_normalize,
    compute_intimacy,
    rank_neighbors,
)
from structembed.mining import (
    CorruptionSpec,
    NoStructureError,
    PartitionLevels,
    Quintuple,
    corrupt,
    partition,
    sample_quintuple,
)
from structembed.retrieval import (
    RetrievalIndex,
    ScoredDoc,
    build_index,
    load_index,
    query,
    save_index,
    score_document,
)
from structembed.training import TrainResult, train
from structembed.evaluation import (
    DiagnosticsReport,
    RelevanceSet,
    recall_at_k,
    self_prediction_eval,
    separation_diagnostics,
)
from structembed.synth import generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AdjacencyMatrix",
    "Config",
    "Corpus",
    "CorruptionSpec",
    "DiagnosticsReport",
    "Document",
    "EncoderParams",
    "Fragment",
    "IntimacyMatrix",
    "NoStructureError",
    "PartitionLevels",
    "Quintuple",
    "RankedNeighbors",
    "RelevanceSet",
    "RetrievalIndex",
    "ScoredDoc",
    "TrainResult",
    "Vocabulary",
    "backprop",
    "build_index",
    "column_normalize",
    "compute_intimacy",
    "corrupt",
    "distance",
    "encode",
    "fragment",
    "generate_synthetic",
    "ingest",
    "init_params",
    "load_checkpoint",
    "load_index",
    "partition",
    "query",
    "rank_neighbors",
    "recall_at_k",
    "sample_quintuple",
    "save_checkpoint",
    "save_index",
    "score_document",
    "self_prediction_eval",
    "separation_diagnostics",
    "similarity",
    "tokenize",
    "train",
]
