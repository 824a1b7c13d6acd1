"""Compact trainable text encoder used as the second-stage relevance scorer.

Texts are hashed bags of words (64-bit FNV-1a modulo hash_dim, sublinear
1 + ln tf weights) projected by a dense matrix W and L2-normalized; relevance
is the cosine of the two embeddings. Training minimizes a triplet hinge over
(question, positive answer, in-batch negative) with AdamW, is restricted to a
single answer pool per run, and is bit-reproducible from its seed.

Alternative scorers behind the same interface: a TF-IDF cosine reference and
a client for an external embedding endpoint.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .bm25 import AnalyzerConfig, tokenize

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "synthpqa-encoder"
CHECKPOINT_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def hashed_features(text: str, hash_dim: int, analyzer: AnalyzerConfig = AnalyzerConfig()
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Sparse feature vector as (bucket indices, weights); collisions accumulate."""
    counts = Counter(tokenize(text, analyzer))
    buckets: dict[int, float] = {}
    for term, tf in counts.items():
        idx = fnv1a64(term) % hash_dim
        buckets[idx] = buckets.get(idx, 0.0) + 1.0 + math.log(tf)
    if not buckets:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    idxs = np.array(sorted(buckets), dtype=np.int64)
    vals = np.array([buckets[i] for i in idxs], dtype=np.float64)
    return idxs, vals


@dataclass
class EncoderModel:
    hash_dim: int
    emb_dim: int
    seed: int
    W: np.ndarray  # emb_dim x hash_dim
    analyzer: AnalyzerConfig = field(default_factory=AnalyzerConfig)

    @classmethod
    def initialize(cls, hash_dim: int = 32768, emb_dim: int = 64, seed: int = 42,
                   analyzer: AnalyzerConfig = AnalyzerConfig()) -> "EncoderModel":
        """Seeded uniform init in +-sqrt(6 / (hash_dim + emb_dim))."""
        rng = np.random.default_rng(seed)
        limit = math.sqrt(6.0 / (hash_dim + emb_dim))
        W = rng.uniform(-limit, limit, size=(emb_dim, hash_dim))
        return cls(hash_dim=hash_dim, emb_dim=emb_dim, seed=seed, W=W, analyzer=analyzer)


def _project(model: EncoderModel, idxs: np.ndarray, vals: np.ndarray) -> np.ndarray:
    if idxs.size == 0:
        return np.zeros(model.emb_dim)
    return model.W[:, idxs] @ vals


def embed(model: EncoderModel, text: str) -> np.ndarray:
    """Unit-norm embedding; texts with no features map to the zero vector."""
    idxs, vals = hashed_features(text, model.hash_dim, model.analyzer)
    z = _project(model, idxs, vals)
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        return z
    return z / norm


def cosine_score(model: EncoderModel, query: str, doc: str) -> float:
    """Cosine of the two embeddings, in [-1, 1]; 0 for featureless input."""
    return float(np.dot(embed(model, query), embed(model, doc)))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3  # compact-model default; see lr notes in README
    margin: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 42
    hash_dim: int = 32768
    emb_dim: int = 64
    negatives: str = "sample_one"  # or "all": average hinge over the B-1 in-batch negatives
    distance: str = "cosine"  # or "euclidean"

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError(f"margin must be > 0, got {self.margin}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.negatives not in ("sample_one", "all"):
            raise ValueError(f"negatives must be 'sample_one' or 'all', got {self.negatives!r}")
        if self.distance not in ("cosine", "euclidean"):
            raise ValueError(f"distance must be 'cosine' or 'euclidean', got {self.distance!r}")


def _unit(z: np.ndarray) -> tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(z))
    return (z / norm, norm) if norm > 0.0 else (np.zeros_like(z), 0.0)


def _triplet_parts(
    model: EncoderModel,
    feats: tuple[tuple[np.ndarray, np.ndarray], ...],
    margin: float,
    distance: str,
) -> tuple[float, list[np.ndarray] | None]:
    """Hinge loss and, when active, d(loss)/dz for the three projections."""
    zs = [_project(model, idxs, vals) for idxs, vals in feats]
    units, norms = zip(*(_unit(z) for z in zs))
    uq, up, un = units
    nq, npos, nneg = norms

    if distance == "cosine":
        s_qp = float(np.dot(uq, up))
        s_qn = float(np.dot(uq, un))
        activation = margin - s_qp + s_qn
        if activation <= 0.0:
            return 0.0, None
        # d cos(a, b) / dz_a = (u_b - cos * u_a) / ||z_a||; degenerate norms give no gradient
        g_q = np.zeros_like(uq)
        if nq > 0.0:
            g_q = (-(up - s_qp * uq) + (un - s_qn * uq)) / nq
        g_p = -(uq - s_qp * up) / npos if npos > 0.0 else np.zeros_like(up)
        g_n = (uq - s_qn * un) / nneg if nneg > 0.0 else np.zeros_like(un)
        return activation, [g_q, g_p, g_n]

    d_qp = float(np.linalg.norm(uq - up))
    d_qn = float(np.linalg.norm(uq - un))
    activation = margin + d_qp - d_qn
    if activation <= 0.0:
        return 0.0, None

    def _ddist_du(ua: np.ndarray, ub: np.ndarray, dist: float) -> np.ndarray:
        return (ua - ub) / dist if dist > 0.0 else np.zeros_like(ua)

    def _through_norm(grad_u: np.ndarray, u: np.ndarray, norm: float) -> np.ndarray:
        return (grad_u - float(np.dot(grad_u, u)) * u) / norm if norm > 0.0 else np.zeros_like(u)

    g_q = _through_norm(_ddist_du(uq, up, d_qp) - _ddist_du(uq, un, d_qn), uq, nq)
    g_p = _through_norm(_ddist_du(up, uq, d_qp), up, npos)
    g_n = _through_norm(-_ddist_du(un, uq, d_qn), un, nneg)
    return activation, [g_q, g_p, g_n]


def triplet_loss(
    model: EncoderModel,
    query: str,
    positive: str,
    negative: str,
    margin: float = 0.5,
    distance: str = "cosine",
) -> tuple[float, np.ndarray]:
    """Hinge triplet loss and its analytic gradient with respect to W.

    Cosine form: max(0, margin - s(q, pos) + s(q, neg)). The gradient is zero
    when the hinge is inactive.
    """
    if margin <= 0:
        raise ValueError(f"margin must be > 0, got {margin}")
    feats = tuple(hashed_features(t, model.hash_dim, model.analyzer)
                  for t in (query, positive, negative))
    loss, grads_z = _triplet_parts(model, feats, margin, distance)
    grad = np.zeros_like(model.W)
    if grads_z is not None:
        for (idxs, vals), g_z in zip(feats, grads_z):
            if idxs.size:
                grad[:, idxs] += np.outer(g_z, vals)
    return loss, grad


@dataclass
class TrainResult:
    model: EncoderModel
    epoch_mean_loss: list[float]
    skipped_single_batches: int


def train(
    pairs: list[tuple[str, str]],
    cfg: TrainConfig = TrainConfig(),
    pool_tag: str = "",
) -> TrainResult:
    """Fit the encoder on (question, positive answer) pairs from one answer pool.

    Each epoch shuffles the pairs and walks batches of cfg.batch_size; every
    anchor draws one uniform in-batch negative (the positive of a different
    pair in the batch), or averages over all of them in 'all' mode. AdamW
    updates apply per batch. Size-1 tail batches cannot supply a negative and
    are skipped (counted). Deterministic per seed.
    """
    if len(pairs) < 2:
        raise ValueError(f"need at least 2 training pairs, got {len(pairs)}")
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    model = EncoderModel.initialize(cfg.hash_dim, cfg.emb_dim,
                                    seed=int(seeds[0].generate_state(1)[0]))
    rng = np.random.default_rng(seeds[1])

    feats = [
        (hashed_features(q, cfg.hash_dim, model.analyzer),
         hashed_features(a, cfg.hash_dim, model.analyzer))
        for q, a in pairs
    ]

    m_state = np.zeros_like(model.W)
    v_state = np.zeros_like(model.W)
    step = 0
    skipped = 0
    epoch_mean_loss: list[float] = []

    for _ in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        losses: list[float] = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            if len(batch) < 2:
                skipped += 1
                continue
            grad = np.zeros_like(model.W)
            batch_loss = 0.0
            for pos_in_batch, pair_idx in enumerate(batch):
                q_feat, p_feat = feats[pair_idx]
                if cfg.negatives == "sample_one":
                    offset = int(rng.integers(1, len(batch)))
                    neg_idx = batch[(pos_in_batch + offset) % len(batch)]
                    neg_choices = [neg_idx]
                else:
                    neg_choices = [batch[j] for j in range(len(batch)) if j != pos_in_batch]
                anchor_loss = 0.0
                anchor_grad = np.zeros_like(model.W)
                for neg_pair in neg_choices:
                    n_feat = feats[neg_pair][1]
                    loss, grads_z = _triplet_parts(model, (q_feat, p_feat, n_feat),
                                                   cfg.margin, cfg.distance)
                    anchor_loss += loss
                    if grads_z is not None:
                        for (idxs, vals), g_z in zip((q_feat, p_feat, n_feat), grads_z):
                            if idxs.size:
                                anchor_grad[:, idxs] += np.outer(g_z, vals)
                batch_loss += anchor_loss / len(neg_choices)
                grad += anchor_grad / len(neg_choices)
            grad /= len(batch)
            batch_loss /= len(batch)
            losses.append(batch_loss)

            step += 1
            m_state = cfg.beta1 * m_state + (1.0 - cfg.beta1) * grad
            v_state = cfg.beta2 * v_state + (1.0 - cfg.beta2) * grad * grad
            m_hat = m_state / (1.0 - cfg.beta1 ** step)
            v_hat = v_state / (1.0 - cfg.beta2 ** step)
            model.W -= cfg.learning_rate * (m_hat / (np.sqrt(v_hat) + cfg.eps)
                                            + cfg.weight_decay * model.W)
        if not np.isfinite(model.W).all():
            raise ArithmeticError("training produced non-finite parameters")
        epoch_mean_loss.append(sum(losses) / len(losses) if losses else 0.0)

    if skipped:
        log.info("training skipped %d single-pair tail batches (pool %s)", skipped, pool_tag or "-")
    return TrainResult(model=model, epoch_mean_loss=epoch_mean_loss,
                       skipped_single_batches=skipped)


# --- Scorer interface -----------------------------------------------------

class Scorer(Protocol):
    def score(self, query: str, doc: str) -> float: ...


class EncoderScorer:
    """Cosine relevance from a trained (or freshly initialized) encoder."""

    def __init__(self, model: EncoderModel):
        self.model = model

    def score(self, query: str, doc: str) -> float:
        return cosine_score(self.model, query, doc)


class TfidfScorer:
    """Cosine over tf * idf vectors; the reference lexical scorer.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1 with df taken from the fitted
    collection; unseen terms get df = 0.
    """

    def __init__(self, docs: list[str], analyzer: AnalyzerConfig = AnalyzerConfig()):
        self.analyzer = analyzer
        self.n_docs = len(docs)
        self.df: Counter[str] = Counter()
        for text in docs:
            self.df.update(set(tokenize(text, analyzer)))

    def _vector(self, text: str) -> dict[str, float]:
        counts = Counter(tokenize(text, self.analyzer))
        return {t: tf * self.idf(t) for t, tf in counts.items()}

    def idf(self, term: str) -> float:
        return math.log((1.0 + self.n_docs) / (1.0 + self.df.get(term, 0))) + 1.0

    def score(self, query: str, doc: str) -> float:
        qv = self._vector(query)
        dv = self._vector(doc)
        dot = sum(w * dv[t] for t, w in qv.items() if t in dv)
        qn = math.sqrt(sum(w * w for w in qv.values()))
        dn = math.sqrt(sum(w * w for w in dv.values()))
        if qn == 0.0 or dn == 0.0:
            return 0.0
        return dot / (qn * dn)


class EmbeddingEndpointScorer:
    """Cosine over vectors fetched from an external embeddings endpoint.

    Sends {"model": ..., "input": [text]} and reads data[0].embedding back.
    Responses are memoized per text for determinism and to spare the endpoint.
    """

    def __init__(self, endpoint_url: str, model_name: str, api_key_env: str = "",
                 transport=None, timeout: float = 30.0):
        import httpx
        import os

        headers = {}
        key = os.environ.get(api_key_env, "") if api_key_env else ""
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self.endpoint_url = endpoint_url
        self.model_name = model_name
        self._client = httpx.Client(headers=headers, timeout=timeout, transport=transport)
        self._memo: dict[str, np.ndarray] = {}

    def _embed(self, text: str) -> np.ndarray:
        if text not in self._memo:
            resp = self._client.post(self.endpoint_url,
                                     json={"model": self.model_name, "input": [text]})
            resp.raise_for_status()
            vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float64)
            norm = float(np.linalg.norm(vec))
            self._memo[text] = vec / norm if norm > 0 else vec
        return self._memo[text]

    def score(self, query: str, doc: str) -> float:
        return float(np.dot(self._embed(query), self._embed(doc)))


# --- Checkpoints ----------------------------------------------------------

def save_model(model: EncoderModel, path: str | Path) -> None:
    """Checkpoint: one JSON header line, then the raw little-endian W bytes.

    The layout is deliberately timestamp-free so identical models serialize
    to identical bytes.
    """
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "hash_dim": model.hash_dim,
        "emb_dim": model.emb_dim,
        "seed": model.seed,
        "lowercase": model.analyzer.lowercase,
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(meta, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(model.W, dtype="<f8").tobytes())


def load_model(path: str | Path) -> EncoderModel:
    with open(path, "rb") as fh:
        header = fh.readline()
        try:
            meta = json.loads(header.decode("utf-8"))
        except (UnicodeDecodeError, ValueError):
            raise ValueError(f"{path}: unreadable checkpoint header")
        if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} checkpoint")
        emb_dim, hash_dim = int(meta["emb_dim"]), int(meta["hash_dim"])
        raw = fh.read()
        expected = emb_dim * hash_dim * 8
        if len(raw) != expected:
            raise ValueError(f"{path}: expected {expected} parameter bytes, found {len(raw)}")
        W = np.frombuffer(raw, dtype="<f8").reshape(emb_dim, hash_dim).astype(np.float64)
        return EncoderModel(
            hash_dim=hash_dim, emb_dim=emb_dim, seed=int(meta["seed"]), W=W,
            analyzer=AnalyzerConfig(lowercase=bool(meta["lowercase"])),
        )
