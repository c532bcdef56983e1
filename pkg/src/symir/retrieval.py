"""Embedding store, similarity search, retrieval metrics, and linear probing.

Search ranks by cosine similarity (scale-invariant across differently
trained checkpoints) with deterministic ties broken by ascending id; raw
dot-product ranking is also available.  The probe is a plain multinomial
logistic regression trained by full-batch gradient descent on frozen
embeddings, reporting macro-F1 and accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class EmptyIndex(Exception):
    pass


class DimensionMismatch(Exception):
    pass


class SingleClassTrainSet(Exception):
    pass


class IoFailure(Exception):
    pass


@dataclass
class EmbeddingIndex:
    ids: list[str]
    matrix: np.ndarray
    metadata: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or len(self.ids) != self.matrix.shape[0]:
            raise ValueError("matrix must be [len(ids), dim]")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self):
        return len(self.ids)


@dataclass
class RankingResult:
    query_id: str | None
    ids: list[str]
    scores: list[float]


def _similarities(matrix: np.ndarray, query: np.ndarray, metric: str) -> np.ndarray:
    if metric == "dot":
        return matrix @ query
    if metric == "cosine":
        query_norm = np.linalg.norm(query)
        row_norms = np.linalg.norm(matrix, axis=1)
        denominator = row_norms * query_norm
        scores = np.zeros(matrix.shape[0])
        nonzero = denominator > 0
        scores[nonzero] = (matrix[nonzero] @ query) / denominator[nonzero]
        return scores
    raise ValueError(f"unknown metric {metric!r}")


def search(index: EmbeddingIndex, query: np.ndarray, k: int,
           metric: str = "cosine", query_id: str | None = None) -> RankingResult:
    """Top-k most similar items; ties broken by ascending id."""
    if len(index) == 0:
        raise EmptyIndex("cannot search an empty index")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dim,):
        raise DimensionMismatch(
            f"query dim {query.shape} does not match index dim {index.dim}")
    if not 1 <= k <= len(index):
        raise ValueError(f"k must be in 1..{len(index)}")
    scores = _similarities(index.matrix, query, metric)
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.ids[i]))
    top = order[:k]
    return RankingResult(query_id=query_id,
                         ids=[index.ids[i] for i in top],
                         scores=[float(scores[i]) for i in top])


def mrr(ranks) -> float:
    """Mean reciprocal rank of the true pair over queries (ranks are 1-based)."""
    ranks = list(ranks)
    if not ranks:
        raise ValueError("mrr requires at least one rank")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks must be >= 1")
    return float(np.mean([1.0 / r for r in ranks]))


def hit_rate_at_k(ranks, k: int) -> float:
    """Fraction of queries whose true pair ranks within the top k."""
    ranks = list(ranks)
    if not ranks:
        raise ValueError("hit_rate_at_k requires at least one rank")
    if k < 1:
        raise ValueError("k must be >= 1")
    return float(np.mean([1.0 if r <= k else 0.0 for r in ranks]))


def retrieval_ranks(queries: EmbeddingIndex, candidates: EmbeddingIndex,
                    metric: str = "cosine") -> list[int]:
    """Rank of each query's true pair (the candidate sharing its id)."""
    position = {cid: i for i, cid in enumerate(candidates.ids)}
    ranks = []
    for qid, vector in zip(queries.ids, queries.matrix):
        if qid not in position:
            raise ValueError(f"query id {qid!r} has no candidate pair")
        result = search(candidates, vector, k=len(candidates), metric=metric,
                        query_id=qid)
        ranks.append(result.ids.index(qid) + 1)
    return ranks


# -- linear probe ------------------------------------------------------------

@dataclass
class LabeledDataset:
    embeddings: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.embeddings.ndim != 2 or len(self.labels) != self.embeddings.shape[0]:
            raise ValueError("embeddings must be [len(labels), dim]")

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0


@dataclass(frozen=True)
class ProbeConfig:
    iterations: int = 500
    learning_rate: float = 0.1


@dataclass
class ProbeResult:
    macro_f1: float
    accuracy: float


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    """Unweighted mean of per-class F1; a class absent from both sides scores 0."""
    scores = []
    for cls in range(n_classes):
        tp = np.sum((y_pred == cls) & (y_true == cls))
        fp = np.sum((y_pred == cls) & (y_true != cls))
        fn = np.sum((y_pred != cls) & (y_true == cls))
        denominator = 2 * tp + fp + fn
        scores.append(2 * tp / denominator if denominator else 0.0)
    return float(np.mean(scores))


def linear_probe(train: LabeledDataset, test: LabeledDataset,
                 config: ProbeConfig = ProbeConfig()) -> ProbeResult:
    """Multinomial logistic regression on frozen embeddings.

    Full-batch gradient descent from a zero initialization (deterministic,
    no regularization), fixed iteration count.
    """
    classes = max(train.n_classes, test.n_classes)
    if len(np.unique(train.labels)) < 2:
        raise SingleClassTrainSet("probe training set needs at least 2 classes")
    if train.embeddings.shape[1] != test.embeddings.shape[1]:
        raise DimensionMismatch("train/test embedding dims differ")

    features = np.hstack([train.embeddings,
                          np.ones((train.embeddings.shape[0], 1))])
    n, dim = features.shape
    weights = np.zeros((dim, classes))
    one_hot = np.eye(classes)[train.labels]
    for _ in range(config.iterations):
        logits = features @ weights
        logits -= logits.max(axis=1, keepdims=True)
        probabilities = np.exp(logits)
        probabilities /= probabilities.sum(axis=1, keepdims=True)
        gradient = features.T @ (probabilities - one_hot) / n
        weights -= config.learning_rate * gradient

    test_features = np.hstack([test.embeddings,
                               np.ones((test.embeddings.shape[0], 1))])
    predictions = np.argmax(test_features @ weights, axis=1)
    accuracy = float(np.mean(predictions == test.labels))
    return ProbeResult(macro_f1=macro_f1(test.labels, predictions, classes),
                       accuracy=accuracy)


# -- export / import ------------------------------------------------------------

def export_embeddings(index: EmbeddingIndex, path) -> None:
    """Write `id,coord...` rows under a header; floats keep full precision."""
    if len(index) == 0:
        raise EmptyIndex("cannot export an empty index")
    for item_id in index.ids:
        if "," in item_id or "\n" in item_id:
            raise IoFailure(f"id {item_id!r} contains a delimiter")
    try:
        with open(path, "w", encoding="utf-8") as handle:
            header = ["id"] + [f"v{i}" for i in range(index.dim)]
            handle.write(",".join(header) + "\n")
            for item_id, row in zip(index.ids, index.matrix):
                handle.write(item_id + ","
                             + ",".join(repr(float(v)) for v in row) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from None


def import_embeddings(path) -> EmbeddingIndex:
    """Inverse of export_embeddings; reproduces the matrix exactly."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(str(exc)) from None
    if not lines:
        raise IoFailure(f"{path} is empty")
    ids = []
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        ids.append(cells[0])
        rows.append([float(c) for c in cells[1:]])
    return EmbeddingIndex(ids=ids, matrix=np.array(rows, dtype=np.float64))
