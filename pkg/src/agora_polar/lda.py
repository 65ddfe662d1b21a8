"""Latent Dirichlet allocation trained by online variational Bayes.

The model keeps the topic-word variational Dirichlet parameters ``lam``
(K x V). Each minibatch runs a per-document E-step against the frozen
topics, then blends the batch estimate into ``lam`` with step size
``rho_t = (tau0 + t) ** -kappa``.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, psi

from ._backend import get_kernels
from .preprocess import BowCorpus, BowDoc, Vocabulary


class LdaError(ValueError):
    pass


@dataclass(frozen=True)
class LdaConfig:
    K: int = 70
    alpha: float | None = None
    beta: float | None = None
    kappa: float = 0.7
    tau0: float = 1.0
    batch_size: int = 2048
    passes: int = 1
    seed: int = 0
    e_step_max_iter: int = 100
    e_step_tol: float = 1e-3

    def __post_init__(self):
        if self.K < 1:
            raise LdaError("K must be >= 1")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 1.0 / self.K)
        if self.beta is None:
            object.__setattr__(self, "beta", 1.0 / self.K)
        if not self.alpha > 0 or not self.beta > 0:
            raise LdaError("alpha and beta must be > 0")
        if not 0.5 < self.kappa <= 1:
            raise LdaError("kappa must lie in (0.5, 1]")
        if self.tau0 < 0:
            raise LdaError("tau0 must be >= 0")
        if self.batch_size < 1 or self.passes < 1 or self.e_step_max_iter < 1:
            raise LdaError("batch_size, passes and e_step_max_iter must be >= 1")

    @property
    def alpha_vec(self) -> np.ndarray:
        return np.full(self.K, self.alpha)

    @classmethod
    def from_dict(cls, data: dict) -> "LdaConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise LdaError(f"unknown LDA option(s): {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLogRow:
    update_index: int
    rho: float
    batch_bound: float
    heldout_perplexity: float | None = None


@dataclass
class LdaModel:
    lam: np.ndarray
    config: LdaConfig
    vocab_fingerprint: str = ""
    updates_seen: int = 0
    history: list[TrainLogRow] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.lam = np.ascontiguousarray(self.lam, dtype=np.float64)
        if self.lam.ndim != 2 or self.lam.shape[0] != self.config.K:
            raise LdaError(f"lambda must be K x V with K={self.config.K}")
        self._exp_elog_beta = None

    @property
    def K(self) -> int:
        return self.lam.shape[0]

    @property
    def V(self) -> int:
        return self.lam.shape[1]

    @property
    def phi_hat(self) -> np.ndarray:
        return self.lam / self.lam.sum(axis=1, keepdims=True)

    @property
    def exp_elog_beta(self) -> np.ndarray:
        if self._exp_elog_beta is None:
            self._exp_elog_beta = np.exp(expected_log_dirichlet(self.lam))
        return self._exp_elog_beta


@dataclass
class DocInference:
    """Variational posterior for one document.

    ``theta_hat`` is the count-weighted mean of the per-token topic
    posteriors, i.e. the share of the document's tokens attributed to each
    topic. For an empty document it falls back to normalized ``gamma``.
    """

    doc_id: str
    gamma: np.ndarray
    token_ids: np.ndarray
    token_counts: np.ndarray
    token_topic_posteriors: np.ndarray
    theta_hat: np.ndarray = field(init=False)

    def __post_init__(self):
        total = self.token_counts.sum()
        if total > 0:
            self.theta_hat = self.token_counts @ self.token_topic_posteriors / total
        else:
            self.theta_hat = self.theta_gamma

    @property
    def n_tokens(self) -> int:
        return int(self.token_counts.sum())

    @property
    def theta_gamma(self) -> np.ndarray:
        return self.gamma / self.gamma.sum()


def expected_log_dirichlet(params) -> np.ndarray:
    """E[log x] under Dirichlet(params): psi(a_k) - psi(sum a), row-wise for 2-D input."""
    a = np.asarray(params, dtype=np.float64)
    if not np.all(a > 0):
        raise LdaError("Dirichlet parameters must be strictly positive")
    if a.ndim == 1:
        return psi(a) - psi(a.sum())
    return psi(a) - psi(a.sum(axis=1))[:, np.newaxis]


def learning_rate(t: int, tau0: float, kappa: float) -> float:
    if t < 0:
        raise LdaError("update index must be >= 0")
    return (tau0 + t) ** -kappa


def _as_corpus(docs, V: int) -> BowCorpus:
    if isinstance(docs, BowCorpus):
        if docs.V > V:
            raise LdaError(f"corpus vocabulary size {docs.V} exceeds model V={V}")
        return docs
    return BowCorpus(list(docs), V)


def _raw_e_step(model: LdaModel, corpus: BowCorpus, doc_index, workers=1, backend=None):
    kernels = get_kernels(backend)
    cfg = model.config
    gamma, sstats = kernels.e_step(
        model.exp_elog_beta,
        cfg.alpha_vec,
        corpus.indptr,
        corpus.ids,
        corpus.cts,
        np.ascontiguousarray(doc_index, dtype=np.int64),
        cfg.e_step_max_iter,
        cfg.e_step_tol,
        workers,
    )
    return gamma, sstats * model.exp_elog_beta


def _inference(model: LdaModel, doc: BowDoc, gamma: np.ndarray) -> DocInference:
    ids, cts = doc.ids, doc.cts
    etheta = np.exp(expected_log_dirichlet(gamma))
    resp = etheta[np.newaxis, :] * model.exp_elog_beta[:, ids].T
    resp /= resp.sum(axis=1, keepdims=True)
    return DocInference(doc.doc_id, gamma, ids, cts, resp)


def e_step(
    model: LdaModel, batch: BowCorpus | Sequence[BowDoc], *, workers: int = 1, backend: str | None = None
) -> tuple[list[DocInference], np.ndarray]:
    """Per-document fixed point with topics frozen.

    Returns the inferences and the K x V sufficient statistics
    ``sum_d n_dw * resp_dwk``.
    """
    corpus = _as_corpus(batch, model.V)
    gamma, sstats = _raw_e_step(model, corpus, np.arange(len(corpus)), workers, backend)
    return [_inference(model, doc, g) for doc, g in zip(corpus, gamma)], sstats


def m_step(model: LdaModel, stats: np.ndarray, batch_weight: float, rho: float) -> LdaModel:
    """Blend the batch estimate ``beta + batch_weight * stats`` into lambda."""
    if not 0 <= rho <= 1:
        raise LdaError("rho must lie in [0, 1]")
    lam = (1 - rho) * model.lam + rho * (model.config.beta + batch_weight * stats)
    return LdaModel(lam, model.config, model.vocab_fingerprint, model.updates_seen + 1, model.history)


def init_model(V: int, config: LdaConfig, vocab_fingerprint: str = "", rng=None) -> LdaModel:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    lam = rng.gamma(100.0, 0.01, size=(config.K, V))
    return LdaModel(lam, config, vocab_fingerprint)


def train(
    corpus: BowCorpus,
    config: LdaConfig,
    *,
    vocab: Vocabulary | None = None,
    workers: int = 1,
    backend: str | None = None,
    eval_corpus: BowCorpus | None = None,
) -> LdaModel:
    """Fit by online VB; the result depends only on corpus, config and seed.

    ``eval_corpus`` (optional) gets a perplexity evaluation after every pass,
    recorded in ``model.history``.
    """
    V = vocab.V if vocab is not None else corpus.V
    nonempty = np.flatnonzero(corpus.n_tokens > 0)
    if nonempty.size == 0:
        raise LdaError("corpus has no non-empty documents")
    rng = np.random.default_rng(config.seed)
    model = init_model(V, config, vocab.fingerprint() if vocab is not None else "", rng)
    corpus = _as_corpus(corpus, V)
    D = nonempty.size
    history: list[TrainLogRow] = []
    for _ in range(config.passes):
        order = rng.permutation(nonempty)
        for start in range(0, D, config.batch_size):
            batch = order[start:start + config.batch_size]
            rho = learning_rate(model.updates_seen, config.tau0, config.kappa)
            gamma, sstats = _raw_e_step(model, corpus, batch, workers, backend)
            bound = float(doc_bounds(model, corpus, gamma, batch).sum())
            model = m_step(model, sstats, D / len(batch), rho)
            history.append(TrainLogRow(model.updates_seen - 1, rho, bound))
        if eval_corpus is not None:
            history[-1].heldout_perplexity = held_out_perplexity(
                model, eval_corpus, workers=workers, backend=backend
            )
    model.history = history
    return model


def doc_bounds(model: LdaModel, corpus: BowCorpus, gamma: np.ndarray, doc_index=None) -> np.ndarray:
    """Per-document evidence lower bound with topics fixed at ``phi_hat``."""
    doc_index = np.arange(len(corpus)) if doc_index is None else np.asarray(doc_index)
    alpha = model.config.alpha_vec
    elog_theta = expected_log_dirichlet(gamma)
    if elog_theta.ndim == 1:
        elog_theta = elog_theta[np.newaxis, :]
        gamma = gamma[np.newaxis, :]
    lo, hi = corpus.indptr[doc_index], corpus.indptr[doc_index + 1]
    lengths = hi - lo
    pos = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)]) if lengths.sum() else np.zeros(0, np.int64)
    rows = np.repeat(np.arange(len(doc_index)), lengths)
    log_phi = np.log(model.phi_hat)
    word = np.zeros(len(doc_index))
    chunk = 1 << 16
    for s in range(0, pos.size, chunk):
        p, r = pos[s:s + chunk], rows[s:s + chunk]
        terms = logsumexp(elog_theta[r] + log_phi[:, corpus.ids[p]].T, axis=1)
        word += np.bincount(r, weights=corpus.cts[p] * terms, minlength=len(doc_index))
    prior = (
        ((alpha - gamma) * elog_theta).sum(axis=1)
        + gammaln(gamma).sum(axis=1)
        - gammaln(gamma.sum(axis=1))
        - gammaln(alpha).sum()
        + gammaln(alpha.sum())
    )
    return word + prior


def held_out_perplexity(
    model: LdaModel, docs: BowCorpus | Sequence[BowDoc], *, workers: int = 1, backend: str | None = None
) -> float:
    corpus = _as_corpus(docs, model.V)
    total = corpus.total_tokens
    if total == 0:
        raise LdaError("perplexity needs at least one token")
    index = np.arange(len(corpus))
    gamma, _ = _raw_e_step(model, corpus, index, workers, backend)
    return math.exp(-doc_bounds(model, corpus, gamma, index).sum() / total)


def infer_document(model: LdaModel, doc: BowDoc, *, backend: str | None = None) -> DocInference:
    inferences, _ = e_step(model, [doc], backend=backend)
    return inferences[0]


def infer_corpus(
    model: LdaModel, corpus: BowCorpus, *, workers: int = 1, backend: str | None = None
) -> list[DocInference]:
    corpus = _as_corpus(corpus, model.V)
    gamma, _ = _raw_e_step(model, corpus, np.arange(len(corpus)), workers, backend)
    return [_inference(model, doc, g) for doc, g in zip(corpus, gamma)]


def topic_top_tokens(model: LdaModel, k: int, n: int = 10, vocab: Vocabulary | None = None) -> list[tuple]:
    """The ``n`` most probable tokens of topic ``k`` (ties by token id)."""
    if not 0 <= k < model.K:
        raise LdaError(f"topic {k} out of range for K={model.K}")
    if n < 1:
        raise LdaError("n must be >= 1")
    row = model.lam[k] / model.lam[k].sum()
    order = np.argsort(-row, kind="stable")[:n]
    label = (lambda i: vocab.id_to_token[i]) if vocab is not None else int
    return [(label(i), float(row[i])) for i in order]


_MAGIC = b"AGPLDA1\n"


def save_model(model: LdaModel, path: str | Path) -> None:
    """JSON header line after a magic tag, then lambda as little-endian f64, row-major."""
    header = {
        "K": model.K,
        "V": model.V,
        "vocab_fingerprint": model.vocab_fingerprint,
        "config": model.config.to_dict(),
        "updates_seen": model.updates_seen,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(model.lam.astype("<f8", copy=False).tobytes(order="C"))


def load_model(path: str | Path) -> LdaModel:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise LdaError(f"{path}: not a model file")
        (size,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(size).decode("utf-8"))
        payload = fh.read()
    K, V = header["K"], header["V"]
    if len(payload) != K * V * 8:
        raise LdaError(f"{path}: payload size {len(payload)} does not match K={K}, V={V}")
    lam = np.frombuffer(payload, dtype="<f8").reshape(K, V).astype(np.float64)
    return LdaModel(lam, LdaConfig.from_dict(header["config"]), header["vocab_fingerprint"], header["updates_seen"])


def write_training_log(history: Sequence[TrainLogRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["update_index", "rho", "batch_bound", "heldout_perplexity"])
        for row in history:
            ppl = "" if row.heldout_perplexity is None else repr(row.heldout_perplexity)
            writer.writerow([row.update_index, repr(row.rho), repr(row.batch_bound), ppl])

