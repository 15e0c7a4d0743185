"""
Utterance embeddings, exemplar retrieval, and annotator filtering.

The heavy sentence encoder is an external artifact consumed as a
prebuilt embedding-table file: exact utterance text maps to a fixed
vector. A deterministic bag-of-words hash embedder backs tests and the
batch experiments, where lexical identity is all that matters.

At inference time a novel user utterance is never fed to the models
directly. It is embedded, matched against the store of training
exemplars by cosine similarity, and the nearest exemplar's stored
embedding is what the models consume. Annotator filtering scores each
synthetic annotator by the average cosine distance between their
utterances and the per-task consensus of everyone else, then drops the
noisiest K.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_FNV_MASK = 0xFFFFFFFFFFFFFFFF


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that isn't a letter or digit."""
    return _TOKEN_RE.findall(text.lower())


def _fnv1a(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _FNV_MASK
    return h


def hash_embed(text: str, dim: int = 64) -> np.ndarray:
    """Deterministic bag-of-words embedding: FNV-1a token buckets, L2-normalized.

    An empty token set maps to the zero vector (the one vector with norm 0
    this embedder can produce).
    """
    vec = np.zeros(dim, dtype=np.float64)
    for tok in tokenize(text):
        vec[_fnv1a(tok) % dim] += 1.0
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"cosine_similarity shapes differ: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise NumericError("cosine similarity undefined for zero-norm vector")
    return float(np.dot(u, v) / (nu * nv))


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    return 1.0 - cosine_similarity(u, v)


@dataclass(frozen=True)
class EmbeddingTable:
    """Exact-text lookup of precomputed utterance embeddings.

    provenance is "pretrained_fixture" for tables produced offline by the
    external encoder pipeline, "hash" for tables filled by hash_embed.
    """

    dim: int
    entries: dict[str, np.ndarray]
    provenance: str = "pretrained_fixture"

    def __post_init__(self):
        for text, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise DimensionError(f"entry {text!r} has dim {vec.shape}, table dim {self.dim}")
            if not np.isfinite(vec).all():
                raise NumericError(f"non-finite embedding for {text!r}")

    def __contains__(self, text: str) -> bool:
        return text in self.entries

    def lookup(self, text: str) -> np.ndarray:
        return self.entries[text]

    @classmethod
    def from_hash(cls, texts, dim: int = 64) -> "EmbeddingTable":
        return cls(dim=dim, entries={t: hash_embed(t, dim) for t in texts}, provenance="hash")


def embed_text(text: str, table: EmbeddingTable, allow_hash_fallback: bool = False) -> np.ndarray:
    """Embed text through the table, optionally falling back to hash_embed.

    For a hash-provenance table any text embeds (the table is just a
    cache). For a pretrained table, an unseen text is a lookup error
    unless the fallback is enabled; the fallback vector lives in a
    different geometry than the table, so it is strictly a last resort.
    """
    if text in table.entries:
        return table.entries[text]
    if table.provenance == "hash" or allow_hash_fallback:
        return hash_embed(text, table.dim)
    raise LookupError(f"utterance not in embedding table and hash fallback disabled: {text!r}")


def load_embedding_table(path: str) -> EmbeddingTable:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("schema") != "embedding-table/1":
        raise ValueError(f"not an embedding table file: {path}")
    dim = int(doc["dim"])
    entries: dict[str, np.ndarray] = {}
    for item in doc["entries"]:
        text = item["text"]
        if text in entries:
            raise ValueError(f"duplicate utterance in table: {text!r}")
        vec = np.asarray(item["vector"], dtype=np.float64)
        if vec.ndim == 2:
            # token-level fixture: mean-pool rows into one sentence vector
            vec = vec.mean(axis=0)
        entries[text] = vec
    return EmbeddingTable(dim=dim, entries=entries, provenance=doc.get("provenance", "pretrained_fixture"))


def save_embedding_table(path: str, table: EmbeddingTable) -> None:
    doc = {
        "schema": "embedding-table/1",
        "dim": table.dim,
        "provenance": table.provenance,
        "entries": [
            {"text": text, "vector": [float(x) for x in vec]}
            for text, vec in table.entries.items()
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


@dataclass(frozen=True)
class Exemplar:
    """One training utterance with its task label and embedding."""

    id: int
    task: str
    text: str
    embedding: np.ndarray = field(repr=False)


def build_exemplars(labeled_texts, table: EmbeddingTable) -> list[Exemplar]:
    """labeled_texts: iterable of (task_label, text), ids assigned in order."""
    exemplars = []
    seen = set()
    for i, (task, text) in enumerate(labeled_texts):
        if text in seen:
            raise ValueError(f"duplicate exemplar text: {text!r}")
        seen.add(text)
        exemplars.append(Exemplar(id=i, task=task, text=text, embedding=embed_text(text, table)))
    return exemplars


def load_exemplar_file(path: str) -> list[tuple[str, str]]:
    """Read an exemplar file into (task, text) pairs, id order preserved."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("schema") != "exemplars/1":
        raise ValueError(f"not an exemplar file: {path}")
    entries = sorted(doc["entries"], key=lambda e: e["id"])
    return [(e["task"], e["text"]) for e in entries]


def save_exemplar_file(path: str, labeled_texts) -> None:
    doc = {
        "schema": "exemplars/1",
        "entries": [
            {"id": i, "task": task, "text": text}
            for i, (task, text) in enumerate(labeled_texts)
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def exemplar_ids_by_task(exemplars: list[Exemplar]) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for ex in exemplars:
        out.setdefault(ex.task, []).append(ex.id)
    return out


def embeddings_by_id(exemplars: list[Exemplar]) -> dict[int, np.ndarray]:
    return {ex.id: ex.embedding for ex in exemplars}


def retrieve_nearest(
    query_text: str,
    table: EmbeddingTable,
    exemplars: list[Exemplar],
    allow_hash_fallback: bool = False,
) -> tuple[Exemplar, float]:
    """Nearest training exemplar to the query by cosine similarity.

    Ties break toward the smallest exemplar id. The caller should use the
    returned exemplar's stored embedding (not the query's) downstream.
    """
    if not exemplars:
        raise ValueError("exemplar store is empty")
    q = embed_text(query_text, table, allow_hash_fallback=allow_hash_fallback)
    best: Exemplar | None = None
    best_sim = -np.inf
    for ex in sorted(exemplars, key=lambda e: e.id):
        sim = cosine_similarity(q, ex.embedding)
        if sim > best_sim:
            best, best_sim = ex, sim
    return best, float(best_sim)


@dataclass(frozen=True)
class AnnotatorCorpus:
    """A complete annotator x task grid of utterance texts."""

    annotators: tuple
    tasks: tuple
    utterances: dict  # annotator -> task -> text

    def __post_init__(self):
        for a in self.annotators:
            row = self.utterances.get(a)
            if row is None or set(row) != set(self.tasks):
                raise ValueError(f"annotator {a!r} did not annotate every task")

    def text(self, annotator, task) -> str:
        return self.utterances[annotator][task]


def load_annotator_corpus(path: str) -> AnnotatorCorpus:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("schema") != "annotator-corpus/1":
        raise ValueError(f"not an annotator corpus file: {path}")
    return AnnotatorCorpus(
        annotators=tuple(doc["annotators"]),
        tasks=tuple(doc["tasks"]),
        utterances=doc["utterances"],
    )


def filter_annotators(
    corpus: AnnotatorCorpus,
    table: EmbeddingTable,
    k: int,
    include_self: bool = False,
    allow_hash_fallback: bool = False,
) -> tuple[list, dict]:
    """Drop the K annotators whose text sits furthest from consensus.

    Per task, each annotator's utterance embedding is compared (cosine
    distance) against the average embedding over all *other* annotators
    for that task; an annotator's noise score is the mean distance across
    tasks. ``include_self=True`` switches to the simpler variant that
    averages over everyone including the annotator being scored. The K
    highest scorers are dropped, ties broken by dropping the greater
    annotator id first. Returns (kept annotators in original order,
    score per annotator).
    """
    n = len(corpus.annotators)
    if not 0 <= k < n:
        raise ValueError(f"need 0 <= K < {n} annotators, got K={k}")

    emb = {
        (a, t): embed_text(corpus.text(a, t), table, allow_hash_fallback=allow_hash_fallback)
        for a in corpus.annotators
        for t in corpus.tasks
    }
    task_sums = {t: np.sum([emb[(a, t)] for a in corpus.annotators], axis=0) for t in corpus.tasks}

    scores: dict = {}
    for a in corpus.annotators:
        dists = []
        for t in corpus.tasks:
            if include_self:
                consensus = task_sums[t] / n
            else:
                consensus = (task_sums[t] - emb[(a, t)]) / (n - 1)
            own = emb[(a, t)]
            if np.linalg.norm(consensus) == 0.0 or np.linalg.norm(own) == 0.0:
                # degenerate embedding (e.g. empty spam text): maximally noisy
                dists.append(1.0)
            else:
                dists.append(cosine_distance(own, consensus))
        scores[a] = float(np.mean(dists))

    ranked = sorted(corpus.annotators, key=lambda a: (scores[a], _id_key(a)), reverse=True)
    dropped = set(ranked[:k])
    kept = [a for a in corpus.annotators if a not in dropped]
    return kept, scores


def _id_key(annotator):
    # annotator ids are homogeneous within a corpus (all ints or all strings)
    return annotator
