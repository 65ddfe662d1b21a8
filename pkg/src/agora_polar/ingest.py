"""Speech record ingestion: JSONL loading, transcript splitting, party joins."""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Iterable

log = logging.getLogger(__name__)

UNKNOWN_PARTY = "UNKNOWN"

_HONORIFIC_RE = re.compile(r"^(?:MR|MS|MRS)\.\s*")
_WS_RE = re.compile(r"\s+")


class IngestError(ValueError):
    """Raised for malformed input records."""


@dataclass(frozen=True)
class SpeechDoc:
    id: str
    speaker: str
    date: date
    chamber: str = ""
    party: str | None = None
    text: str | None = None
    tokens: tuple[str, ...] | None = None

    @property
    def year(self) -> int:
        return self.date.year

    def to_json(self) -> dict:
        out = {"id": self.id}
        if self.tokens is not None:
            out["tokens"] = list(self.tokens)
        else:
            out["text"] = self.text
        out.update(
            speaker=self.speaker,
            party=self.party,
            chamber=self.chamber,
            date=self.date.isoformat(),
        )
        return out


@dataclass(frozen=True)
class SpeakerRecord:
    speaker_key: str
    party: str
    valid_from: date | None = None
    valid_to: date | None = None

    def covers(self, when: date) -> bool:
        if self.valid_from is not None and when < self.valid_from:
            return False
        if self.valid_to is not None and when > self.valid_to:
            return False
        return True


@dataclass
class TranscriptRules:
    """Grammar for speaker-prefixed plain-text transcripts.

    A line matching ``speaker_pattern`` at column 0 opens a new speech; the
    pattern must define the groups ``name`` and ``text``. Lines matching
    ``header_pattern`` before the first speech set metadata (``date``,
    ``chamber``), falling back to the defaults given here.
    """

    speaker_pattern: str = r"^(?P<name>[A-Z][A-Z0-9.'\- ]*?)\s*:(?:\s+(?P<text>.*)|\s*)$"
    header_pattern: str = r"^#\s*(?P<key>[A-Za-z_]+)\s*:\s*(?P<value>.*?)\s*$"
    chamber: str | None = None
    date: str | None = None
    allow_preamble: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "TranscriptRules":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise IngestError(f"unknown transcript rule(s): {sorted(unknown)}")
        return cls(**data)


@dataclass
class TranscriptParse:
    docs: list[SpeechDoc] = field(default_factory=list)
    dropped_preamble_lines: int = 0


def normalize_speaker(name: str) -> str:
    key = _WS_RE.sub(" ", name.strip().upper())
    return _HONORIFIC_RE.sub("", key)


def _parse_date(value, where: str) -> date:
    if not isinstance(value, str):
        raise IngestError(f"{where}: date must be an ISO 8601 string")
    try:
        return date.fromisoformat(value)
    except ValueError as exc:
        raise IngestError(f"{where}: invalid date {value!r}") from exc


def doc_from_json(obj: dict, where: str = "record") -> SpeechDoc:
    if not isinstance(obj, dict):
        raise IngestError(f"{where}: expected a JSON object")
    has_text = obj.get("text") is not None
    has_tokens = obj.get("tokens") is not None
    if has_text == has_tokens:
        raise IngestError(f"{where}: exactly one of 'text' or 'tokens' is required")
    for key in ("id", "speaker", "date"):
        if not isinstance(obj.get(key), str) or not obj[key]:
            raise IngestError(f"{where}: missing or invalid {key!r}")
    tokens = None
    if has_tokens:
        if not isinstance(obj["tokens"], list) or not all(isinstance(t, str) for t in obj["tokens"]):
            raise IngestError(f"{where}: 'tokens' must be a list of strings")
        tokens = tuple(obj["tokens"])
    elif not isinstance(obj["text"], str):
        raise IngestError(f"{where}: 'text' must be a string")
    party = obj.get("party")
    return SpeechDoc(
        id=obj["id"],
        speaker=obj["speaker"],
        date=_parse_date(obj["date"], where),
        chamber=obj.get("chamber") or "",
        party=party if party else None,
        text=obj["text"] if has_text else None,
        tokens=tokens,
    )


def load_jsonl(path: str | Path) -> list[SpeechDoc]:
    """Read one SpeechDoc per line, keeping file order."""
    docs: list[SpeechDoc] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{where}: malformed JSON at line {lineno} ({exc.msg})") from exc
            doc = doc_from_json(obj, where)
            if doc.id in seen:
                raise IngestError(
                    f"{where}: duplicate id at line {lineno} ({doc.id!r} first seen at line {seen[doc.id]})"
                )
            seen[doc.id] = lineno
            docs.append(doc)
    return docs


def write_jsonl(docs: Iterable[SpeechDoc], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
            n += 1
    return n


def split_transcript(raw: str, rules: TranscriptRules | None = None, *, start_seq: int = 1) -> TranscriptParse:
    """Split a transcript into speeches, also reporting dropped preamble lines."""
    rules = rules or TranscriptRules()
    speaker_re = re.compile(rules.speaker_pattern)
    header_re = re.compile(rules.header_pattern)
    meta = {"date": rules.date, "chamber": rules.chamber}

    speeches: list[tuple[str, list[str]]] = []
    preamble: list[str] = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not speeches:
            h = header_re.match(line)
            if h and h.group("key").lower() in meta:
                meta[h.group("key").lower()] = h.group("value")
                continue
        m = speaker_re.match(line)
        if m:
            first = (m.group("text") or "").strip()
            speeches.append((m.group("name").strip(), [first] if first else []))
            continue
        if not line.strip():
            continue
        if not speeches:
            if not rules.allow_preamble:
                raise IngestError(f"line {lineno}: text before any speaker header")
            preamble.append(line)
            continue
        speeches[-1][1].append(line.strip())

    result = TranscriptParse(dropped_preamble_lines=len(preamble))
    if preamble:
        log.warning("dropped %d preamble line(s) before first speaker", len(preamble))
    if not speeches:
        return result
    if not meta["date"] or not meta["chamber"]:
        raise IngestError("transcript metadata requires both 'date' and 'chamber'")
    when = _parse_date(meta["date"], "transcript header")
    for seq, (name, lines) in enumerate(speeches, start=start_seq):
        result.docs.append(
            SpeechDoc(
                id=f"{when.isoformat()}-{meta['chamber']}-{seq}",
                speaker=name,
                date=when,
                chamber=meta["chamber"],
                text=" ".join(lines),
            )
        )
    return result


def parse_transcript(raw: str, rules: TranscriptRules | None = None) -> list[SpeechDoc]:
    """Split a speaker-prefixed transcript into one SpeechDoc per speaker turn."""
    return split_transcript(raw, rules).docs


class SpeakerTable:
    """Speaker-to-party lookup with optional validity intervals."""

    def __init__(self, records: Iterable[SpeakerRecord]):
        self._by_key: dict[str, list[SpeakerRecord]] = {}
        for rec in records:
            key = normalize_speaker(rec.speaker_key)
            self._by_key.setdefault(key, []).append(replace(rec, speaker_key=key))
        for key, recs in self._by_key.items():
            recs.sort(key=lambda r: (r.valid_from or date.min))
            for a, b in zip(recs, recs[1:]):
                a_end = a.valid_to or date.max
                b_start = b.valid_from or date.min
                if b_start <= a_end:
                    raise IngestError(f"overlapping validity intervals for speaker {key!r}")

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_key.values())

    def lookup(self, speaker: str, when: date) -> str | None:
        for rec in self._by_key.get(normalize_speaker(speaker), ()):
            if rec.covers(when):
                return rec.party
        return None


def load_speaker_table(path: str | Path) -> list[SpeakerRecord]:
    """Read a TSV with columns speaker_key, party, valid_from, valid_to."""
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        missing = {"speaker_key", "party"} - set(reader.fieldnames or ())
        if missing:
            raise IngestError(f"{path}: missing column(s) {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            bounds = []
            for col in ("valid_from", "valid_to"):
                value = (row.get(col) or "").strip()
                bounds.append(_parse_date(value, where) if value else None)
            records.append(SpeakerRecord(row["speaker_key"], row["party"].strip(), *bounds))
    return records


def join_metadata(
    docs: Iterable[SpeechDoc], table: SpeakerTable | Iterable[SpeakerRecord]
) -> tuple[list[SpeechDoc], int]:
    """Fill missing party codes from the speaker table.

    Returns the updated docs and the number of docs whose speaker could not
    be matched; those are assigned ``UNKNOWN``.
    """
    if not isinstance(table, SpeakerTable):
        table = SpeakerTable(table)
    out, unmatched = [], 0
    for doc in docs:
        if doc.party:
            out.append(doc)
            continue
        party = table.lookup(doc.speaker, doc.date)
        if party is None:
            unmatched += 1
            party = UNKNOWN_PARTY
        out.append(replace(doc, party=party))
    return out, unmatched
