"""Tokenization, stopword removal, stemming and vocabulary pruning."""

from __future__ import annotations

import hashlib
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ingest import SpeechDoc
from .porter import porter_stem

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

LANG_MODES = ("english", "pretokenized")


class PreprocessError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercased unigrams.

    Word-character runs form tokens; every other non-space character is a
    token of its own, and tokens made only of punctuation are dropped. So
    ``"H.R. 1586"`` gives ``["h", "r", "1586"]`` while ``"$"`` survives.
    """
    return [t for t in _TOKEN_RE.findall(text.lower()) if not _is_punct(t)]


def _is_punct(token: str) -> bool:
    return all(unicodedata.category(ch).startswith("P") for ch in token)


def load_stoplist(path: str | Path | None = None) -> frozenset[str]:
    """Read a stoplist file; ``None`` loads the bundled English list."""
    if path is None:
        text = resources.files("agora_polar").joinpath("data/stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    words = (line.strip() for line in text.splitlines())
    return frozenset(w for w in words if w and not w.startswith("#"))


def remove_stopwords(tokens: Iterable[str], stoplist: frozenset[str] | set[str]) -> list[str]:
    return [t for t in tokens if t not in stoplist]


def doc_tokens(doc: SpeechDoc, lang: str = "english", stoplist: frozenset[str] = frozenset()) -> list[str]:
    """Run one document through tokenize -> stopwords -> stem."""
    if lang not in LANG_MODES:
        raise PreprocessError(f"unknown language mode {lang!r}; expected one of {LANG_MODES}")
    if doc.tokens is not None:
        tokens = list(doc.tokens)
    elif lang == "english":
        tokens = tokenize(doc.text or "")
    else:
        tokens = (doc.text or "").split()
    tokens = remove_stopwords(tokens, stoplist)
    if lang == "english":
        tokens = [porter_stem(t) for t in tokens]
    return tokens


@dataclass
class Vocabulary:
    id_to_token: list[str]
    corpus_freq: np.ndarray
    doc_freq: np.ndarray
    n_docs: int
    token_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        self.corpus_freq = np.asarray(self.corpus_freq, dtype=np.int64)
        self.doc_freq = np.asarray(self.doc_freq, dtype=np.int64)

    @property
    def V(self) -> int:
        return len(self.id_to_token)

    def __len__(self) -> int:
        return self.V

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def fingerprint(self) -> str:
        h = hashlib.sha256("\n".join(self.id_to_token).encode("utf-8"))
        return f"{h.hexdigest()[:16]}:{self.V}"

    def write_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("id\ttoken\tcorpus_freq\tdoc_freq\n")
            for i, tok in enumerate(self.id_to_token):
                fh.write(f"{i}\t{tok}\t{self.corpus_freq[i]}\t{self.doc_freq[i]}\n")

    @classmethod
    def read_tsv(cls, path: str | Path, n_docs: int = 0) -> "Vocabulary":
        tokens, cf, df = [], [], []
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if header != ["id", "token", "corpus_freq", "doc_freq"]:
                raise PreprocessError(f"{path}: unexpected vocabulary header {header}")
            for lineno, line in enumerate(fh, start=2):
                i, tok, c, d = line.rstrip("\n").split("\t")
                if int(i) != len(tokens):
                    raise PreprocessError(f"{path}:{lineno}: ids must be dense and ordered")
                tokens.append(tok)
                cf.append(int(c))
                df.append(int(d))
        return cls(tokens, np.array(cf, dtype=np.int64), np.array(df, dtype=np.int64), n_docs)


def build_vocabulary(
    token_lists: Sequence[Sequence[str]] | Sequence[SpeechDoc],
    min_count: int = 50,
    max_doc_frac: float = 0.5,
) -> Vocabulary:
    """Keep tokens seen at least ``min_count`` times in total and in no more
    than ``max_doc_frac`` of the documents.

    Ids are assigned by descending corpus frequency, ties lexicographically.
    """
    if min_count < 1:
        raise PreprocessError("min_count must be >= 1")
    if not 0 < max_doc_frac <= 1:
        raise PreprocessError("max_doc_frac must be in (0, 1]")
    corpus_freq: Counter[str] = Counter()
    doc_freq: Counter[str] = Counter()
    n_docs = 0
    for item in token_lists:
        tokens = item.tokens if isinstance(item, SpeechDoc) else item
        corpus_freq.update(tokens)
        doc_freq.update(set(tokens))
        n_docs += 1
    if n_docs == 0:
        raise PreprocessError("vocabulary empty after pruning (no documents)")
    kept = [
        t for t, c in corpus_freq.items()
        if c >= min_count and not doc_freq[t] / n_docs > max_doc_frac
    ]
    if not kept:
        raise PreprocessError("vocabulary empty after pruning")
    kept.sort(key=lambda t: (-corpus_freq[t], t))
    return Vocabulary(
        kept,
        np.array([corpus_freq[t] for t in kept], dtype=np.int64),
        np.array([doc_freq[t] for t in kept], dtype=np.int64),
        n_docs,
    )


@dataclass(frozen=True)
class BowDoc:
    doc_id: str
    counts: tuple[tuple[int, int], ...]
    n_tokens: int

    @property
    def empty(self) -> bool:
        return self.n_tokens == 0

    @property
    def ids(self) -> np.ndarray:
        return np.fromiter((i for i, _ in self.counts), dtype=np.int64, count=len(self.counts))

    @property
    def cts(self) -> np.ndarray:
        return np.fromiter((c for _, c in self.counts), dtype=np.float64, count=len(self.counts))


def to_bow(doc: SpeechDoc | Sequence[str], vocab: Vocabulary, doc_id: str | None = None) -> BowDoc:
    """Count in-vocabulary tokens; out-of-vocabulary tokens are dropped."""
    if isinstance(doc, SpeechDoc):
        tokens, doc_id = doc.tokens or (), doc.id if doc_id is None else doc_id
    else:
        tokens = doc
    lookup = vocab.token_to_id
    counts = Counter(lookup[t] for t in tokens if t in lookup)
    pairs = tuple(sorted(counts.items()))
    return BowDoc(doc_id or "", pairs, sum(counts.values()))


class BowCorpus:
    """Documents plus a CSR view (``indptr``, ``ids``, ``cts``) for the kernels."""

    def __init__(self, docs: Sequence[BowDoc], V: int | None = None):
        self.docs = list(docs)
        lengths = np.array([len(d.counts) for d in self.docs], dtype=np.int64)
        self.indptr = np.zeros(len(self.docs) + 1, dtype=np.int64)
        np.cumsum(lengths, out=self.indptr[1:])
        self.ids = np.empty(self.indptr[-1], dtype=np.int64)
        self.cts = np.empty(self.indptr[-1], dtype=np.float64)
        for d, doc in enumerate(self.docs):
            lo, hi = self.indptr[d], self.indptr[d + 1]
            self.ids[lo:hi] = [i for i, _ in doc.counts]
            self.cts[lo:hi] = [c for _, c in doc.counts]
        self.n_tokens = np.array([d.n_tokens for d in self.docs], dtype=np.int64)
        max_id = int(self.ids.max()) + 1 if self.ids.size else 0
        self.V = max_id if V is None else V
        if max_id > self.V:
            raise PreprocessError(f"token id {max_id - 1} out of range for V={self.V}")

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)

    def __getitem__(self, i):
        return self.docs[i]

    @property
    def total_tokens(self) -> int:
        return int(self.n_tokens.sum())

    def subset(self, index: Sequence[int]) -> "BowCorpus":
        return BowCorpus([self.docs[i] for i in index], self.V)

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for doc in self.docs:
                body = " ".join(f"{i}:{c}" for i, c in doc.counts)
                fh.write(f"{doc.doc_id}\t{body}\n")

    @classmethod
    def read(cls, path: str | Path, V: int | None = None) -> "BowCorpus":
        docs = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                doc_id, _, body = line.rstrip("\n").partition("\t")
                try:
                    pairs = tuple(
                        (int(i), int(c)) for i, c in (item.split(":") for item in body.split())
                    )
                except ValueError as exc:
                    raise PreprocessError(f"{path}:{lineno}: malformed count entry") from exc
                docs.append(BowDoc(doc_id, pairs, sum(c for _, c in pairs)))
        return cls(docs, V)


@dataclass
class PreprocessStats:
    docs: int
    tokens_before: int
    tokens_after: int
    unique_before: int
    unique_after: int
    empty_docs: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PreprocessResult:
    docs: list[SpeechDoc]
    vocab: Vocabulary
    corpus: BowCorpus
    stats: PreprocessStats


def preprocess(
    docs: Sequence[SpeechDoc],
    lang: str = "english",
    stoplist: frozenset[str] = frozenset(),
    min_count: int = 50,
    max_doc_frac: float = 0.5,
) -> PreprocessResult:
    tokenized = [replace(d, tokens=tuple(doc_tokens(d, lang, stoplist)), text=None) for d in docs]
    vocab = build_vocabulary(tokenized, min_count=min_count, max_doc_frac=max_doc_frac)
    corpus = BowCorpus([to_bow(d, vocab) for d in tokenized], vocab.V)
    unique_before = len({t for d in tokenized for t in d.tokens})
    stats = PreprocessStats(
        docs=len(tokenized),
        tokens_before=sum(len(d.tokens) for d in tokenized),
        tokens_after=corpus.total_tokens,
        unique_before=unique_before,
        unique_after=vocab.V,
        empty_docs=sum(1 for d in corpus if d.empty),
    )
    return PreprocessResult(tokenized, vocab, corpus, stats)
