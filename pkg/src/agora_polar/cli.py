"""``agora-polar`` command line: ingest, preprocess, train, measure, synth, all.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import re
import sys
import traceback
from collections import Counter
from dataclasses import replace
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from . import _backend
from .config import ConfigError, PipelineConfig, load_config
from .ingest import IngestError, SpeakerTable, join_metadata, load_jsonl, load_speaker_table, split_transcript, write_jsonl
from .lda import LdaError, infer_corpus, load_model, save_model, topic_top_tokens, train, write_training_log
from .polarization import (
    LN2,
    AggregationError,
    Selector,
    aggregate,
    polarization,
    timeline,
    topic_difference_series,
    welch_t_test,
)
from .preprocess import BowCorpus, PreprocessError, Vocabulary, load_stoplist, preprocess
from .report import write_csv, write_figure, write_json
from .synth import PlanError, write_outputs

log = logging.getLogger("agora_polar")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
COMMANDS = ("ingest", "preprocess", "train", "measure", "synth", "all")
HELP = {
    "ingest": "read speeches and transcripts into docs.jsonl",
    "preprocess": "tokenize, stem, prune and write the bag-of-words corpus",
    "train": "fit one topic model per seed",
    "measure": "JS divergence tables, timelines, t-tests and figures",
    "synth": "generate the synthetic corpus from the [synth] section",
    "all": "every step in order",
}


class UsageError(RuntimeError):
    """Steps run out of order, or the output directory is busy."""


class DataError(RuntimeError):
    """Input data cannot be processed."""


class Layout:
    def __init__(self, root: Path):
        self.root = root
        self.docs = root / "docs.jsonl"
        self.vocab = root / "vocab.tsv"
        self.corpus = root / "corpus.bow"
        self.models = root / "models"
        self.results = root / "results"
        self.figures = root / "figures"
        self.synth = root / "synth"
        self.manifest = root / "manifest.json"
        self.lock = root / ".lock"

    def model(self, K: int, seed: int) -> Path:
        return self.models / f"model_K{K}_seed{seed}.bin"

    def train_log(self, K: int, seed: int) -> Path:
        return self.models / f"train_log_K{K}_seed{seed}.csv"


def _rel(path: Path, base: Path) -> str:
    return Path(os.path.relpath(Path(path).resolve(), base.resolve())).as_posix()


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


# ---------------------------------------------------------------- subcommands


def cmd_synth(cfg: PipelineConfig, out: Layout) -> dict:
    if cfg.synth is None:
        raise ConfigError("config has no [synth] section")
    paths = write_outputs(cfg.synth, out.synth)
    log.info("synthetic corpus written to %s", out.synth)
    return {k: _rel(v, out.root) for k, v in paths.items()}


def cmd_ingest(cfg: PipelineConfig, out: Layout) -> dict:
    base = cfg.path.resolve().parent

    def source(path: Path) -> str:
        # generated inputs are named relative to the output root so reruns elsewhere match
        inside = Path(path).resolve().is_relative_to(out.root.resolve())
        return _rel(path, out.root if inside else base)

    jsonl = list(cfg.jsonl)
    if cfg.synth is not None:
        synth_docs = out.synth / "docs.jsonl"
        if not synth_docs.is_file():
            raise UsageError("run synth first")
        jsonl.append(synth_docs)

    docs, sources = [], []
    for path in jsonl:
        batch = load_jsonl(path)
        docs.extend(batch)
        sources.append({"path": source(path), "kind": "jsonl", "n_docs": len(batch)})

    dropped = 0
    seq: Counter = Counter()
    for path in cfg.transcripts:
        try:
            parsed = split_transcript(Path(path).read_text(encoding="utf-8"), cfg.rules)
        except IngestError as exc:
            raise IngestError(f"{path}: {exc}") from exc
        # sequence numbers continue across files sharing a sitting
        for doc in parsed.docs:
            seq[doc.date, doc.chamber] += 1
            docs.append(replace(doc, id=f"{doc.date.isoformat()}-{doc.chamber}-{seq[doc.date, doc.chamber]}"))
        dropped += parsed.dropped_preamble_lines
        sources.append({"path": source(path), "kind": "transcript", "n_docs": len(parsed.docs)})

    if not docs:
        raise DataError("no input documents")
    seen: set[str] = set()
    for doc in docs:
        if doc.id in seen:
            raise DataError(f"duplicate document id {doc.id!r} across inputs")
        seen.add(doc.id)

    table = SpeakerTable(load_speaker_table(cfg.speaker_table) if cfg.speaker_table else [])
    docs, unmatched = join_metadata(docs, table)
    if unmatched:
        log.warning("%d document(s) with unmatched speakers marked UNKNOWN", unmatched)

    out.root.mkdir(parents=True, exist_ok=True)
    write_jsonl(docs, out.docs)
    report = {
        "n_docs": len(docs),
        "sources": sources,
        "unmatched_speakers": unmatched,
        "dropped_preamble_lines": dropped,
        "docs_per_party": dict(sorted(Counter(d.party for d in docs).items())),
    }
    out.results.mkdir(parents=True, exist_ok=True)
    write_json(out.results / "ingest_report.json", report)
    log.info("ingested %d document(s)", len(docs))
    return report


def cmd_preprocess(cfg: PipelineConfig, out: Layout) -> dict:
    if not out.docs.is_file():
        raise UsageError("run ingest first")
    docs = load_jsonl(out.docs)
    if cfg.stoplist == "default":
        stoplist = load_stoplist()
    elif cfg.stoplist is None:
        stoplist = frozenset()
    else:
        stoplist = load_stoplist(cfg.stoplist)
    result = preprocess(docs, cfg.lang, stoplist, cfg.min_count, cfg.max_doc_frac)
    result.vocab.write_tsv(out.vocab)
    result.corpus.write(out.corpus)
    stats = result.stats.to_dict()
    out.results.mkdir(parents=True, exist_ok=True)
    write_json(out.results / "preprocess_stats.json", stats)
    log.info(
        "%d tokens (%d unique) -> %d tokens (%d unique)",
        stats["tokens_before"], stats["unique_before"], stats["tokens_after"], stats["unique_after"],
    )
    return stats


def _load_corpus(out: Layout) -> tuple[Vocabulary, BowCorpus]:
    if not (out.vocab.is_file() and out.corpus.is_file()):
        raise UsageError("run preprocess first")
    vocab = Vocabulary.read_tsv(out.vocab)
    return vocab, BowCorpus.read(out.corpus, vocab.V)


def cmd_train(cfg: PipelineConfig, out: Layout) -> dict:
    vocab, corpus = _load_corpus(out)
    out.models.mkdir(parents=True, exist_ok=True)
    written = []
    for seed in cfg.seeds:
        model = train(corpus, replace(cfg.lda, seed=seed), vocab=vocab, workers=cfg.workers)
        save_model(model, out.model(cfg.lda.K, seed))
        write_training_log(model.history, out.train_log(cfg.lda.K, seed))
        written.append(_rel(out.model(cfg.lda.K, seed), out.root))
        log.info("trained seed %d (%d updates)", seed, model.updates_seen)
    return {"models": written}


def _pair_label(g1: str, g2: str) -> str:
    return f"{g1}/{g2}"


def cmd_measure(cfg: PipelineConfig, out: Layout) -> dict:
    vocab, corpus = _load_corpus(out)
    if not out.docs.is_file():
        raise UsageError("run ingest first")
    docs = load_jsonl(out.docs)
    missing = [s for s in cfg.seeds if not out.model(cfg.lda.K, s).is_file()]
    if missing:
        raise UsageError(f"run train first (no model for seed(s) {missing})")

    scale = 1.0 / LN2 if cfg.log_base == "2" else 1.0
    kw = {"source": cfg.theta_source}
    warnings: list[str] = []

    def warn(msg: str) -> None:
        log.warning("%s", msg)
        warnings.append(msg)

    runs = []
    for seed in cfg.seeds:
        model = load_model(out.model(cfg.lda.K, seed))
        if model.vocab_fingerprint and model.vocab_fingerprint != vocab.fingerprint():
            raise DataError(f"model for seed {seed} was trained on a different vocabulary")
        runs.append((seed, model, infer_corpus(model, corpus, workers=cfg.workers)))
    primary_seed, primary, inferences = runs[0]

    pair_rows, timeline_series, pairs_out, ensembles, diff_figures = [], {}, [], {}, []
    for g1, g2 in cfg.pairs:
        label = _pair_label(g1, g2)
        s1, s2 = Selector.party(g1), Selector.party(g2)
        entry: dict = {"pair": label, "group1": g1, "group2": g2}

        try:
            whole = polarization(inferences, docs, s1, s2, **kw)
            d1, d2 = whole.groups
            entry["whole_period"] = {
                "js": whole.js * scale,
                "total_tokens_g1": d1.total_tokens,
                "total_tokens_g2": d2.total_tokens,
                "n_docs_g1": d1.n_docs,
                "n_docs_g2": d2.n_docs,
            }
            pair_rows.append((label, "all", whole.js * scale, d1.total_tokens, d2.total_tokens, d1.n_docs, d2.n_docs))
        except AggregationError as exc:
            warn(f"{label}: {exc}")
            entry["whole_period"] = None
            pair_rows.append((label, "all", None, None, None, None, None))

        points = []
        for pt in timeline(inferences, docs, s1, s2, cfg.granularity, **kw):
            js = None if pt.js is None else pt.js * scale
            if js is None:
                warn(f"{label}: no data for one group in {pt.period.label}")
            t1, t2 = pt.group1, pt.group2
            pair_rows.append((
                label, pt.period.label, js,
                t1 and t1.total_tokens, t2 and t2.total_tokens, t1 and t1.n_docs, t2 and t2.n_docs,
            ))
            points.append((pt.period.label, js))
        entry["timeline"] = [{"period": p, "js": v} for p, v in points]
        timeline_series[label] = points

        values = []
        for seed, _, inf in runs:
            try:
                values.append(polarization(inf, docs, s1, s2, **kw).js * scale)
            except AggregationError:
                values = None
                break
        if values is None:
            entry["ensemble"] = None
        else:
            ensembles[label] = values
            n = len(values)
            mean = sum(values) / n
            std = (sum((v - mean) ** 2 for v in values) / (n - 1)) ** 0.5 if n > 1 else None
            entry["ensemble"] = {"seeds": list(cfg.seeds), "js_values": values, "mean": mean, "sample_std": std}

        diffs = {}
        for k in cfg.topics:
            diffs[str(k)] = [
                {"period": p.label, "value": v}
                for p, v in topic_difference_series(inferences, docs, s1, s2, k, cfg.granularity, **kw)
            ]
        entry["topic_differences"] = diffs
        if diffs:
            diff_figures.append((
                f"topic_diff_{_slug(g1)}_{_slug(g2)}",
                {f"topic {k}": [(r["period"], r["value"]) for r in rows] for k, rows in diffs.items()},
                f"Topic attention difference {g1} - {g2}",
                f"theta[{g1}] - theta[{g2}]",
            ))
        pairs_out.append(entry)

    ttests = []
    for a, b in cfg.ttests:
        if a not in ensembles or b not in ensembles or len(ensembles[a]) < 2 or len(ensembles[b]) < 2:
            warn(f"t-test {a} vs {b} skipped: needs two ensembles with at least two runs each")
            ttests.append({"a": a, "b": b, "t": None, "df": None, "p": None})
            continue
        res = welch_t_test(ensembles[a], ensembles[b])
        ttests.append({"a": a, "b": b, "t": res.t, "df": res.df, "p": res.p})

    everyone = Selector("all", lambda d: True)
    try:
        freq = aggregate(inferences, docs, everyone, include_unknown=True, **kw).theta
    except AggregationError:
        freq = None
    topics, token_rows = [], []
    for k in range(primary.K):
        top = topic_top_tokens(primary, k, cfg.top_n, vocab)
        f = None if freq is None else float(freq[k])
        topics.append({"topic": k, "freq": f, "top_tokens": [{"token": t, "probability": p} for t, p in top]})
        token_rows.extend((k, f, rank, t, p) for rank, (t, p) in enumerate(top, start=1))

    out.results.mkdir(parents=True, exist_ok=True)
    out.figures.mkdir(parents=True, exist_ok=True)
    write_csv(
        out.results / "polarization.csv",
        ("pair", "period", "js", "total_tokens_g1", "total_tokens_g2", "n_docs_g1", "n_docs_g2"),
        pair_rows,
    )
    write_csv(
        out.results / "ensemble.csv",
        ("pair", "seed", "js"),
        ((label, seed, v) for label, vals in ensembles.items() for seed, v in zip(cfg.seeds, vals)),
    )
    write_csv(out.results / "top_tokens.csv", ("topic", "freq", "rank", "token", "probability"), token_rows)
    if timeline_series:
        write_figure(
            out.figures / "timeline",
            timeline_series,
            title="JS divergence by period",
            xlabel=cfg.granularity,
            ylabel="JS divergence" + (" (bits)" if scale != 1.0 else " (nats)"),
        )
    for stem, series, title, ylabel in diff_figures:
        write_figure(out.figures / stem, series, title=title, xlabel=cfg.granularity, ylabel=ylabel)
    report = {
        "K": primary.K,
        "V": primary.V,
        "seeds": list(cfg.seeds),
        "primary_seed": primary_seed,
        "granularity": cfg.granularity,
        "log_base": cfg.log_base,
        "theta_source": cfg.theta_source,
        "pairs": pairs_out,
        "ttests": ttests,
        "topics": topics,
        "warnings": warnings,
    }
    write_json(out.results / "report.json", report)
    return report


def cmd_all(cfg: PipelineConfig, out: Layout) -> dict:
    steps = {}
    if cfg.synth is not None:
        steps["synth"] = cmd_synth(cfg, out)
    steps["ingest"] = cmd_ingest(cfg, out)
    steps["preprocess"] = cmd_preprocess(cfg, out)
    steps["train"] = cmd_train(cfg, out)
    steps["measure"] = cmd_measure(cfg, out)
    return steps


HANDLERS = {
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "measure": cmd_measure,
    "synth": cmd_synth,
    "all": cmd_all,
}


# ---------------------------------------------------------------- plumbing


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: PipelineConfig, out: Layout, command: str, started: datetime) -> None:
    """The only output carrying timestamps."""
    files = {
        p.relative_to(out.root).as_posix(): _sha256(p)
        for p in sorted(out.root.rglob("*"))
        if p.is_file() and p not in (out.manifest, out.lock)
    }
    try:
        pkg_version = version("agora-polar")
    except PackageNotFoundError:  # pragma: no cover
        pkg_version = "unknown"
    write_json(
        out.manifest,
        {
            "command": command,
            "config": str(cfg.path.resolve()),
            "config_sha256": _sha256(cfg.path),
            "version": pkg_version,
            "kernel_backend": _backend.DEFAULT,
            "started": started.isoformat(),
            "finished": datetime.now(timezone.utc).isoformat(),
            "files": files,
        },
    )


class OutputLock:
    def __init__(self, path: Path):
        self.path = path

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise UsageError(f"output directory is in use ({self.path} exists; remove it if stale)") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()}\n")
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agora-polar", description="Measure topic-attention polarization between groups of speakers."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, type=Path, help="pipeline config (TOML or JSON)")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides the config)")
        p.add_argument(
            "--seed-override", type=int, default=None, metavar="N",
            help="use the single training seed N (and N as the synthetic plan seed)",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config, args.out)
        if args.seed_override is not None:
            cfg.seeds = [args.seed_override]
            if cfg.synth is not None:
                cfg.synth = replace(cfg.synth, seed=args.seed_override)
        out = Layout(cfg.output)
        started = datetime.now(timezone.utc)
        with OutputLock(out.lock):
            HANDLERS[args.command](cfg, out)
            write_manifest(cfg, out, args.command, started)
    except (ConfigError, UsageError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (DataError, IngestError, PreprocessError, LdaError, PlanError, AggregationError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except Exception:  # pragma: no cover
        log.error("internal error:\n%s", traceback.format_exc())
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
