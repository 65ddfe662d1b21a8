"""Group-level topic attention and Jensen-Shannon polarization."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import date
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .ingest import UNKNOWN_PARTY, SpeechDoc
from .lda import DocInference, LdaConfig, infer_corpus, train
from .preprocess import BowCorpus, Vocabulary

LN2 = math.log(2.0)


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class Period:
    start: date
    end: date
    label: str

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"period {self.label}: start after end")

    def __contains__(self, when: date) -> bool:
        return self.start <= when <= self.end


def year_period(year: int) -> Period:
    return Period(date(year, 1, 1), date(year, 12, 31), str(year))


def _period_of(when: date, granularity: str) -> Period:
    if granularity == "year":
        return year_period(when.year)
    if granularity == "quarter":
        q = (when.month - 1) // 3
        end_month = 3 * q + 3
        end = date(when.year + (end_month == 12), end_month % 12 + 1, 1).toordinal() - 1
        return Period(date(when.year, 3 * q + 1, 1), date.fromordinal(end), f"{when.year}-Q{q + 1}")
    if granularity == "month":
        end = date(when.year + (when.month == 12), when.month % 12 + 1, 1).toordinal() - 1
        return Period(date(when.year, when.month, 1), date.fromordinal(end), f"{when.year}-{when.month:02d}")
    raise ValueError(f"unsupported granularity {granularity!r}")


def _periods_between(first: date, last: date, granularity: str) -> list[Period]:
    out = [_period_of(first, granularity)]
    while out[-1].end < last:
        out.append(_period_of(date.fromordinal(out[-1].end.toordinal() + 1), granularity))
    return out


class Selector:
    """A named document predicate, e.g. ``Selector.party("DEM")``."""

    def __init__(self, name: str, predicate: Callable[[SpeechDoc], bool]):
        self.name = name
        self.predicate = predicate

    def __call__(self, doc: SpeechDoc) -> bool:
        return self.predicate(doc)

    def __repr__(self) -> str:
        return f"Selector({self.name!r})"

    @classmethod
    def party(cls, code: str) -> "Selector":
        return cls(code, lambda doc: doc.party == code)


def as_selector(sel: "Selector | str | Callable") -> Selector:
    if isinstance(sel, Selector):
        return sel
    if isinstance(sel, str):
        return Selector.party(sel)
    if callable(sel):
        return Selector(getattr(sel, "__name__", "selector"), sel)
    raise TypeError(f"cannot use {sel!r} as a group selector")


@dataclass(frozen=True)
class GroupKey:
    group: str
    period: Period | None = None

    @property
    def label(self) -> str:
        return self.group if self.period is None else f"{self.group}@{self.period.label}"


@dataclass(frozen=True)
class GroupTopicDistribution:
    key: GroupKey
    theta: np.ndarray
    total_tokens: int
    n_docs: int


@dataclass(frozen=True)
class PolarizationResult:
    pair: tuple[GroupKey, GroupKey]
    js: float
    K: int
    groups: tuple[GroupTopicDistribution, GroupTopicDistribution] | None = None


@dataclass(frozen=True)
class RunEnsemble:
    pair: tuple[GroupKey, GroupKey]
    js_values: tuple[float, ...]
    seeds: tuple[int, ...] = ()

    @property
    def mean(self) -> float:
        return float(np.mean(self.js_values))

    @property
    def sample_std(self) -> float:
        if len(self.js_values) < 2:
            return float("nan")
        return float(np.std(self.js_values, ddof=1))


class WelchResult(NamedTuple):
    t: float
    df: float
    p: float


def _joined(inferences: Iterable[DocInference], docs: Iterable[SpeechDoc]):
    by_id = {d.id: d for d in docs}
    for inf in inferences:
        doc = by_id.get(inf.doc_id)
        if doc is not None:
            yield doc, inf


def _theta_of(inf: DocInference, source: str) -> np.ndarray:
    if source == "responsibility":
        return inf.theta_hat
    if source == "gamma":
        return inf.theta_gamma
    raise ValueError(f"unknown theta source {source!r}")


def _accumulate(key: GroupKey, pairs, source: str) -> GroupTopicDistribution:
    weights, thetas = [], []
    for _, inf in pairs:
        n = inf.n_tokens
        if n > 0:
            weights.append(n)
            thetas.append(_theta_of(inf, source))
    total = sum(weights)
    if total == 0:
        raise AggregationError(f"no tokens for group {key.label!r}")
    theta = np.asarray(weights, dtype=np.float64) @ np.vstack(thetas) / total
    return GroupTopicDistribution(key, theta, total, len(weights))


def _matching(pairs, selector: Selector, include_unknown: bool):
    for doc, inf in pairs:
        if not include_unknown and doc.party == UNKNOWN_PARTY:
            continue
        if selector(doc):
            yield doc, inf


def aggregate(
    inferences: Sequence[DocInference],
    docs: Sequence[SpeechDoc],
    selector,
    period: Period | None = None,
    *,
    source: str = "responsibility",
    include_unknown: bool = False,
) -> GroupTopicDistribution:
    """Token-weighted topic distribution for the docs picked by ``selector``.

    ``source="gamma"`` aggregates normalized gamma instead of the mean token
    responsibilities.
    """
    selector = as_selector(selector)
    picked = [
        (doc, inf)
        for doc, inf in _matching(_joined(inferences, docs), selector, include_unknown)
        if period is None or doc.date in period
    ]
    return _accumulate(GroupKey(selector.name, period), picked, source)


def js_divergence(p, q, base: float | None = None) -> float:
    """Jensen-Shannon divergence (natural log unless ``base`` is given)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("probability vectors must be non-negative")
    for v in (p, q):
        if abs(v.sum() - 1.0) > 1e-6:
            raise ValueError(f"probability vector sums to {v.sum()!r}, not 1")
    # v / m written as 2v / (p + q): halving subnormal entries would round
    s = p + q

    def kl_terms(v):
        out = np.zeros_like(v)
        nz = v > 0
        out[nz] = v[nz] * np.log(2.0 * v[nz] / s[nz])
        return out

    # per-component sums are commutative, which keeps js(p, q) == js(q, p) bitwise
    js = 0.5 * math.fsum(kl_terms(p) + kl_terms(q))
    js = max(js, 0.0)
    if base is not None:
        js /= math.log(base)
    return js


def _compare(d1: GroupTopicDistribution, d2: GroupTopicDistribution) -> PolarizationResult:
    return PolarizationResult((d1.key, d2.key), js_divergence(d1.theta, d2.theta), len(d1.theta), (d1, d2))


def polarization(inferences, docs, g1, g2, period: Period | None = None, **kw) -> PolarizationResult:
    return _compare(aggregate(inferences, docs, g1, period, **kw), aggregate(inferences, docs, g2, period, **kw))


@dataclass(frozen=True)
class TimelinePoint:
    period: Period
    result: PolarizationResult | None
    group1: GroupTopicDistribution | None
    group2: GroupTopicDistribution | None

    @property
    def js(self) -> float | None:
        return None if self.result is None else self.result.js


def _per_period(inferences, docs, g1, g2, granularity, source, include_unknown):
    s1, s2 = as_selector(g1), as_selector(g2)
    pairs = list(_joined(inferences, docs))
    buckets: dict[int, dict[Period, list]] = {0: {}, 1: {}}
    dates = []
    for i, sel in enumerate((s1, s2)):
        for doc, inf in _matching(pairs, sel, include_unknown):
            buckets[i].setdefault(_period_of(doc.date, granularity), []).append((doc, inf))
            dates.append(doc.date)
    if not dates:
        return []
    out = []
    for period in _periods_between(min(dates), max(dates), granularity):
        dists = []
        for i, sel in enumerate((s1, s2)):
            try:
                dists.append(_accumulate(GroupKey(sel.name, period), buckets[i].get(period, ()), source))
            except AggregationError:
                dists.append(None)
        out.append((period, dists[0], dists[1]))
    return out


def timeline(
    inferences: Sequence[DocInference],
    docs: Sequence[SpeechDoc],
    g1,
    g2,
    granularity: str = "year",
    *,
    source: str = "responsibility",
    include_unknown: bool = False,
) -> list[TimelinePoint]:
    """JS divergence per period; periods lacking either group carry ``None``."""
    out = []
    for period, d1, d2 in _per_period(inferences, docs, g1, g2, granularity, source, include_unknown):
        result = _compare(d1, d2) if d1 is not None and d2 is not None else None
        out.append(TimelinePoint(period, result, d1, d2))
    return out


def topic_difference_series(
    inferences: Sequence[DocInference],
    docs: Sequence[SpeechDoc],
    g1,
    g2,
    k: int,
    granularity: str = "year",
    *,
    source: str = "responsibility",
    include_unknown: bool = False,
) -> list[tuple[Period, float | None]]:
    """Per period, ``theta_g1[k] - theta_g2[k]`` (positive: g1 attends more)."""
    K = len(inferences[0].gamma) if inferences else 0
    if not 0 <= k < K:
        raise ValueError(f"topic {k} out of range for K={K}")
    out = []
    for period, d1, d2 in _per_period(inferences, docs, g1, g2, granularity, source, include_unknown):
        value = None if d1 is None or d2 is None else float(d1.theta[k] - d2.theta[k])
        out.append((period, value))
    return out


def ensemble(runs: Sequence[tuple[int, Sequence[DocInference]]], docs, pairs, **kw) -> list[RunEnsemble]:
    """Whole-period JS per pair across runs; ``runs`` is ``[(seed, inferences), ...]``."""
    out = []
    for g1, g2 in pairs:
        s1, s2 = as_selector(g1), as_selector(g2)
        values = tuple(polarization(inf, docs, s1, s2, **kw).js for _, inf in runs)
        out.append(RunEnsemble((GroupKey(s1.name), GroupKey(s2.name)), values, tuple(s for s, _ in runs)))
    return out


class MultirunError(RuntimeError):
    def __init__(self, seed: int, cause: Exception):
        super().__init__(f"run with seed {seed} failed: {cause}")
        self.seed = seed


def multirun(
    corpus: BowCorpus,
    config: LdaConfig,
    seeds: Sequence[int],
    pairs: Sequence[tuple],
    docs: Sequence[SpeechDoc],
    *,
    vocab: Vocabulary | None = None,
    workers: int = 1,
    max_parallel: int = 1,
    backend: str | None = None,
    **kw,
) -> list[RunEnsemble]:
    """Train one model per seed and summarize whole-period JS per pair."""
    if len(seeds) < 2:
        raise ValueError("multirun needs at least two seeds")

    def run(seed):
        try:
            model = train(corpus, replace(config, seed=seed), vocab=vocab, workers=workers, backend=backend)
            return seed, infer_corpus(model, corpus, workers=workers, backend=backend)
        except Exception as exc:
            raise MultirunError(seed, exc) from exc

    if max_parallel > 1:
        with ThreadPoolExecutor(max_workers=max_parallel) as pool:
            runs = list(pool.map(run, seeds))
    else:
        runs = [run(s) for s in seeds]
    return ensemble(runs, docs, pairs, **kw)


def welch_t_test(sample1: Sequence[float], sample2: Sequence[float]) -> WelchResult:
    """Two-sided Welch's t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(sample1, dtype=np.float64)
    b = np.asarray(sample2, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return WelchResult(0.0, float(a.size + b.size - 2), 1.0)
        return WelchResult(math.copysign(math.inf, diff), float(a.size + b.size - 2), 0.0)
    t = diff / math.sqrt(se2)
    # in terms of variance shares so tiny variances do not underflow when squared
    wa, wb = va / se2, vb / se2
    df = 1.0 / (wa**2 / (a.size - 1) + wb**2 / (b.size - 1))
    p = float(2.0 * stats.t.sf(abs(t), df))
    return WelchResult(float(t), float(df), min(p, 1.0))
