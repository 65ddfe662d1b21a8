"""Pipeline configuration (TOML, or JSON with the same layout).

Relative paths resolve against the config file's directory::

    output = "out"
    workers = 1

    [input]
    jsonl = ["speeches.jsonl"]
    transcripts = ["raw/*.txt"]       # glob patterns allowed
    dir = "incoming"                  # every *.jsonl and *.txt inside
    speaker_table = "speakers.tsv"
    [input.rules]                     # transcript grammar overrides
    allow_preamble = true

    [preprocess]
    lang = "english"                  # or "pretokenized"
    stoplist = "default"              # "default", "none" or a path
    min_count = 50
    max_doc_frac = 0.5

    [lda]                             # any LdaConfig field
    K = 70

    [analysis]
    pairs = [["REP", "DEM"], ["REP", "IND"]]
    seeds = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
    granularity = "year"
    topics = [8, 15]
    ttests = [["REP/DEM", "REP/IND"]]
    top_n = 10
    theta_source = "responsibility"   # or "gamma"
    log_base = "e"                    # or 2

    [synth]                           # optional SynthPlan; `all` generates it first
    K_true = 3
"""

from __future__ import annotations

import glob
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .ingest import TranscriptRules
from .lda import LdaConfig
from .preprocess import LANG_MODES
from .synth import SynthPlan

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

DEFAULT_SEEDS = list(range(1, 11))


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    path: Path
    output: Path
    jsonl: list[Path] = field(default_factory=list)
    transcripts: list[Path] = field(default_factory=list)
    rules: TranscriptRules = field(default_factory=TranscriptRules)
    speaker_table: Path | None = None
    lang: str = "english"
    stoplist: Path | str | None = "default"
    min_count: int = 50
    max_doc_frac: float = 0.5
    lda: LdaConfig = field(default_factory=LdaConfig)
    pairs: list[tuple[str, str]] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    granularity: str = "year"
    topics: list[int] = field(default_factory=list)
    ttests: list[tuple[str, str]] = field(default_factory=list)
    top_n: int = 10
    theta_source: str = "responsibility"
    log_base: str = "e"
    workers: int = 1
    synth: SynthPlan | None = None
    raw: dict = field(default_factory=dict, repr=False)


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def _check_keys(section: dict, allowed: set[str], name: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")


def _paths(base: Path, patterns, what: str) -> list[Path]:
    if isinstance(patterns, str):
        patterns = [patterns]
    out = []
    for pattern in patterns:
        full = base / pattern
        if any(ch in pattern for ch in "*?["):
            out.extend(Path(p) for p in sorted(glob.glob(str(full))))
        elif full.exists():
            out.append(full)
        else:
            raise ConfigError(f"{what} not found: {full}")
    return out


def load_config(path: str | Path, output: str | Path | None = None) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            data = json.loads(path.read_text(encoding="utf-8"))
        else:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _check_keys(data, {"output", "workers", "input", "preprocess", "lda", "analysis", "synth"}, "top level")
    base = path.resolve().parent
    out_dir = Path(output) if output is not None else base / data.get("output", "out")

    inp = _section(data, "input")
    _check_keys(inp, {"jsonl", "transcripts", "dir", "speaker_table", "rules"}, "input")
    jsonl = _paths(base, inp.get("jsonl", []), "jsonl input")
    transcripts = _paths(base, inp.get("transcripts", []), "transcript input")
    if "dir" in inp:
        d = base / inp["dir"]
        if not d.is_dir():
            raise ConfigError(f"input directory not found: {d}")
        jsonl += sorted(d.glob("*.jsonl"))
        transcripts += sorted(d.glob("*.txt"))
    try:
        rules = TranscriptRules.from_dict(_section(inp, "rules"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    table = None
    if inp.get("speaker_table"):
        table = base / inp["speaker_table"]
        if not table.is_file():
            raise ConfigError(f"speaker table not found: {table}")

    pre = _section(data, "preprocess")
    _check_keys(pre, {"lang", "stoplist", "min_count", "max_doc_frac"}, "preprocess")
    lang = pre.get("lang", "english")
    if lang not in LANG_MODES:
        raise ConfigError(f"preprocess.lang must be one of {LANG_MODES}")
    stoplist = pre.get("stoplist", "default" if lang == "english" else "none")
    if stoplist not in ("default", "none"):
        stoplist = base / stoplist
        if not stoplist.is_file():
            raise ConfigError(f"stoplist not found: {stoplist}")

    try:
        lda = LdaConfig.from_dict(_section(data, "lda"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[lda]: {exc}") from exc

    ana = _section(data, "analysis")
    _check_keys(
        ana,
        {"pairs", "seeds", "granularity", "topics", "ttests", "top_n", "theta_source", "log_base"},
        "analysis",
    )
    pairs = [tuple(p) for p in ana.get("pairs", [])]
    if any(len(p) != 2 for p in pairs):
        raise ConfigError("analysis.pairs entries must be [group1, group2]")
    ttests = [tuple(t) for t in ana.get("ttests", [])]
    labels = {f"{a}/{b}" for a, b in pairs}
    for a, b in ttests:
        if a not in labels or b not in labels:
            raise ConfigError(f"ttest refers to an unknown pair: {a!r} vs {b!r}")
    seeds = [int(s) for s in ana.get("seeds", DEFAULT_SEEDS)]
    if not seeds:
        raise ConfigError("analysis.seeds must not be empty")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("analysis.seeds must be unique")
    topics = [int(k) for k in ana.get("topics", [])]
    bad = [k for k in topics if not 0 <= k < lda.K]
    if bad:
        raise ConfigError(f"analysis.topics out of range for K={lda.K}: {bad}")
    theta_source = ana.get("theta_source", "responsibility")
    if theta_source not in ("responsibility", "gamma"):
        raise ConfigError("analysis.theta_source must be 'responsibility' or 'gamma'")
    log_base = str(ana.get("log_base", "e"))
    if log_base not in ("e", "2"):
        raise ConfigError("analysis.log_base must be 'e' or 2")
    granularity = ana.get("granularity", "year")
    if granularity not in ("year", "quarter", "month"):
        raise ConfigError("analysis.granularity must be year, quarter or month")

    plan = None
    if "synth" in data:
        try:
            plan = SynthPlan.from_dict(_section(data, "synth"))
        except ValueError as exc:
            raise ConfigError(f"[synth]: {exc}") from exc

    workers = int(data.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers must be >= 1")

    return PipelineConfig(
        path=path,
        output=out_dir,
        jsonl=jsonl,
        transcripts=transcripts,
        rules=rules,
        speaker_table=table,
        lang=lang,
        stoplist=None if stoplist == "none" else stoplist,
        min_count=int(pre.get("min_count", 50)),
        max_doc_frac=float(pre.get("max_doc_frac", 0.5)),
        lda=lda,
        pairs=pairs,
        seeds=seeds,
        granularity=granularity,
        topics=topics,
        ttests=ttests,
        top_n=int(ana.get("top_n", 10)),
        theta_source=theta_source,
        log_base=log_base,
        workers=workers,
        synth=plan,
        raw=data,
    )
