"""Synthetic corpora drawn from the LDA generative process, with ground truth.

Each group has its own document-topic Dirichlet; an optional shift swaps one
group's Dirichlet from a given year on, which gives timeline tests a known
change point.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .ingest import SpeechDoc, write_jsonl
from .polarization import js_divergence
from .preprocess import BowCorpus, BowDoc, Vocabulary


class PlanError(ValueError):
    pass


def sample_dirichlet(alpha, rng: np.random.Generator) -> np.ndarray:
    """Normalized independent Gamma(alpha_i, 1) draws.

    Components with alpha < 1 are drawn in log space via
    Gamma(a) = Gamma(a + 1) * U**(1/a), so tiny parameters do not underflow
    to an all-zero vector.
    """
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim != 1 or a.size == 0 or not np.all(a > 0):
        raise PlanError("Dirichlet parameters must be a non-empty vector of positive values")
    if a.size == 1:
        return np.ones(1)
    small = a < 1
    logg = np.log(rng.gamma(np.where(small, a + 1, a)))
    if small.any():
        u = rng.random(a.size)
        logg = np.where(small, logg + np.log(u) / a, logg)
    logg -= logg.max()
    x = np.exp(logg)
    return x / x.sum()


@dataclass
class GroupSpec:
    name: str
    n_docs: int
    alpha: list[float]


@dataclass
class Shift:
    group: str
    year: int
    alpha: list[float]


@dataclass
class SynthPlan:
    K_true: int
    V: int
    groups: list[GroupSpec]
    beta_true: float = 0.1
    doc_length: int | dict = 100
    seed: int = 0
    start_year: int = 2000
    end_year: int = 2000
    shift: Shift | None = None

    def __post_init__(self):
        self.groups = [g if isinstance(g, GroupSpec) else GroupSpec(**g) for g in self.groups]
        if isinstance(self.shift, dict):
            self.shift = Shift(**self.shift)
        self.validate()

    def validate(self) -> None:
        if self.K_true < 1 or self.V < 1:
            raise PlanError("K_true and V must be >= 1")
        if not self.beta_true > 0:
            raise PlanError("beta_true must be > 0")
        if not self.groups:
            raise PlanError("plan needs at least one group")
        names = [g.name for g in self.groups]
        if len(set(names)) != len(names):
            raise PlanError("group names must be unique")
        alphas = [g.alpha for g in self.groups] + ([self.shift.alpha] if self.shift else [])
        for alpha in alphas:
            if len(alpha) != self.K_true or not all(a > 0 for a in alpha):
                raise PlanError(f"group alpha must have {self.K_true} positive entries")
        for g in self.groups:
            if g.n_docs < 0:
                raise PlanError("n_docs must be >= 0")
        if self.start_year > self.end_year:
            raise PlanError("start_year after end_year")
        if self.shift is not None:
            if self.shift.group not in names:
                raise PlanError(f"shift names unknown group {self.shift.group!r}")
            if not self.start_year <= self.shift.year <= self.end_year:
                raise PlanError("shift year outside the plan's year span")
        if isinstance(self.doc_length, dict):
            if set(self.doc_length) != {"poisson"} or not self.doc_length["poisson"] > 0:
                raise PlanError("doc_length must be an integer or {'poisson': mean}")
        elif self.doc_length < 1:
            raise PlanError("doc_length must be >= 1")

    def alpha_for(self, group: GroupSpec, year: int) -> list[float]:
        if self.shift is not None and self.shift.group == group.name and year >= self.shift.year:
            return self.shift.alpha
        return group.alpha

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthPlan":
        try:
            return cls(**data)
        except TypeError as exc:
            raise PlanError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "SynthPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class SynthTruth:
    phi_true: np.ndarray
    theta_true: np.ndarray
    topic_counts: np.ndarray  # planted z tallies, docs x K_true
    doc_ids: list[str]
    doc_groups: list[str]
    doc_years: list[int]
    group_mixture: dict[str, np.ndarray] = field(default_factory=dict)
    empirical_mixture: dict[str, np.ndarray] = field(default_factory=dict)

    def mixture(self, group: str, empirical: bool = False) -> np.ndarray:
        table = self.empirical_mixture if empirical else self.group_mixture
        if group not in table:
            raise KeyError(f"unknown group {group!r}")
        return table[group]

    def period_mixture(self, group: str, years) -> np.ndarray:
        """Token-weighted mean of drawn theta for one group over some years."""
        years = set(years)
        rows = [i for i, (g, y) in enumerate(zip(self.doc_groups, self.doc_years)) if g == group and y in years]
        if not rows:
            raise KeyError(f"no documents for {group!r} in {sorted(years)}")
        w = self.topic_counts[rows].sum(axis=1).astype(np.float64)
        return w @ self.theta_true[rows] / w.sum()

    @property
    def planted_js(self) -> dict[str, float]:
        names = list(self.group_mixture)
        return {
            f"{a}/{b}": js_divergence(self.group_mixture[a], self.group_mixture[b])
            for i, a in enumerate(names)
            for b in names[i + 1:]
        }

    def to_dict(self) -> dict:
        return {
            "phi_true": self.phi_true.tolist(),
            "theta_true": self.theta_true.tolist(),
            "topic_counts": self.topic_counts.tolist(),
            "doc_ids": self.doc_ids,
            "doc_groups": self.doc_groups,
            "doc_years": self.doc_years,
            "group_mixture": {k: v.tolist() for k, v in self.group_mixture.items()},
            "empirical_mixture": {k: v.tolist() for k, v in self.empirical_mixture.items()},
            "planted_js": self.planted_js,
        }


def planted_js_oracle(truth: SynthTruth, g1: str, g2: str, empirical: bool = False) -> float:
    return js_divergence(truth.mixture(g1, empirical), truth.mixture(g2, empirical))


def _random_date(year: int, rng: np.random.Generator) -> date:
    first = date(year, 1, 1)
    days = (date(year + 1, 1, 1) - first).days
    return first + timedelta(days=int(rng.integers(days)))


def generate_corpus(plan: SynthPlan) -> tuple[list[SpeechDoc], BowCorpus, SynthTruth]:
    """Draw topics, then per document a mixture, then per token a topic and a word.

    Document ``i`` of a group lands in year bucket ``i % n_years``. Every
    document has its own RNG stream spawned from the plan seed, so the output
    does not depend on generation order.
    """
    plan.validate()
    K, V = plan.K_true, plan.V
    n_docs = sum(g.n_docs for g in plan.groups)
    root = np.random.SeedSequence(plan.seed)
    topic_seq, *doc_seqs = root.spawn(n_docs + 1)
    topic_rng = np.random.default_rng(topic_seq)
    phi = np.vstack([sample_dirichlet(np.full(V, plan.beta_true), topic_rng) for _ in range(K)])

    years = list(range(plan.start_year, plan.end_year + 1))
    docs, bows = [], []
    thetas = np.empty((n_docs, K))
    z_counts = np.zeros((n_docs, K), dtype=np.int64)
    ids, groups, doc_years = [], [], []
    d = 0
    for group in plan.groups:
        for i in range(group.n_docs):
            rng = np.random.default_rng(doc_seqs[d])
            year = years[i % len(years)]
            theta = sample_dirichlet(plan.alpha_for(group, year), rng)
            if isinstance(plan.doc_length, dict):
                n = max(1, int(rng.poisson(plan.doc_length["poisson"])))
            else:
                n = plan.doc_length
            z = rng.choice(K, size=n, p=theta) if K > 1 else np.zeros(n, dtype=np.int64)
            words = np.empty(n, dtype=np.int64)
            for k in range(K):
                at = np.flatnonzero(z == k)
                if at.size:
                    words[at] = rng.choice(V, size=at.size, p=phi[k])
            z_counts[d] = np.bincount(z, minlength=K)
            thetas[d] = theta
            doc_id = f"{group.name}-{i:06d}"
            docs.append(
                SpeechDoc(
                    id=doc_id,
                    speaker=f"{group.name}-SPEAKER-{i % 50:02d}",
                    date=_random_date(year, rng),
                    chamber="SYN",
                    party=group.name,
                    tokens=tuple(f"w{w}" for w in words),
                )
            )
            uniq, cnt = np.unique(words, return_counts=True)
            bows.append(BowDoc(doc_id, tuple(zip(uniq.tolist(), cnt.tolist())), n))
            ids.append(doc_id)
            groups.append(group.name)
            doc_years.append(year)
            d += 1

    truth = SynthTruth(phi, thetas, z_counts, ids, groups, doc_years)
    for group in plan.groups:
        alpha = np.asarray(group.alpha, dtype=np.float64)
        truth.group_mixture[group.name] = alpha / alpha.sum()
        rows = [j for j, g in enumerate(groups) if g == group.name]
        if rows:
            w = z_counts[rows].sum(axis=1).astype(np.float64)
            truth.empirical_mixture[group.name] = w @ thetas[rows] / w.sum()
    return docs, BowCorpus(bows, V), truth


def synthetic_vocabulary(V: int, corpus: BowCorpus | None = None) -> Vocabulary:
    """Vocabulary whose id ``i`` is token ``w{i}``, matching planted ids."""
    cf = np.zeros(V, dtype=np.int64)
    df = np.zeros(V, dtype=np.int64)
    n_docs = 0
    if corpus is not None:
        n_docs = len(corpus)
        np.add.at(cf, corpus.ids, corpus.cts.astype(np.int64))
        np.add.at(df, corpus.ids, 1)
    return Vocabulary([f"w{i}" for i in range(V)], cf, df, n_docs)


def write_outputs(plan: SynthPlan, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs, corpus, truth = generate_corpus(plan)
    paths = {
        "plan": out / "plan.json",
        "docs": out / "docs.jsonl",
        "corpus": out / "corpus.bow",
        "truth": out / "truth.json",
    }
    paths["plan"].write_text(json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_jsonl(docs, paths["docs"])
    corpus.write(paths["corpus"])
    paths["truth"].write_text(json.dumps(truth.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
    return paths
