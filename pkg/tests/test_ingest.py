import json
from datetime import date

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agora_polar.ingest import (
    UNKNOWN_PARTY,
    IngestError,
    SpeakerRecord,
    SpeakerTable,
    SpeechDoc,
    TranscriptRules,
    join_metadata,
    load_jsonl,
    load_speaker_table,
    normalize_speaker,
    parse_transcript,
    split_transcript,
    write_jsonl,
)

HEADER = "# date: 2001-05-01\n# chamber: S\n"


def _write_lines(path, objs):
    path.write_text("".join(json.dumps(o, ensure_ascii=False) + "\n" for o in objs), encoding="utf-8")
    return path


class TestLoadJsonl:
    def test_text_record(self, tmp_path):
        rec = {"id": "a1", "text": "I yield back", "speaker": "SMITH", "party": "REP", "chamber": "H", "date": "2008-03-04"}
        (doc,) = load_jsonl(_write_lines(tmp_path / "a.jsonl", [rec]))
        assert doc == SpeechDoc("a1", "SMITH", date(2008, 3, 4), "H", "REP", "I yield back", None)

    def test_pretokenized_record(self, tmp_path):
        rec = {"id": "j1", "tokens": ["予算", "財政"], "speaker": "X", "party": "LDP", "chamber": "HR", "date": "2010-01-20"}
        (doc,) = load_jsonl(_write_lines(tmp_path / "j.jsonl", [rec]))
        assert doc.tokens == ("予算", "財政")
        assert doc.text is None

    def test_duplicate_id_names_line(self, tmp_path):
        rec = {"id": "a1", "text": "x", "speaker": "S", "date": "2008-03-04"}
        with pytest.raises(IngestError, match="duplicate id at line 2"):
            load_jsonl(_write_lines(tmp_path / "d.jsonl", [rec, rec]))

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"id": "a", "text": "x", "speaker": "S", "date": "2008-03-04"}\n{oops\n', encoding="utf-8")
        with pytest.raises(IngestError, match="malformed JSON at line 2"):
            load_jsonl(path)

    @pytest.mark.parametrize(
        "extra", [{}, {"text": "a", "tokens": ["a"]}], ids=["neither", "both"]
    )
    def test_text_xor_tokens(self, tmp_path, extra):
        rec = {"id": "a", "speaker": "S", "date": "2008-03-04", **extra}
        with pytest.raises(IngestError, match="exactly one of"):
            load_jsonl(_write_lines(tmp_path / "x.jsonl", [rec]))

    def test_bad_date(self, tmp_path):
        rec = {"id": "a", "text": "x", "speaker": "S", "date": "2008-02-30"}
        with pytest.raises(IngestError, match="invalid date"):
            load_jsonl(_write_lines(tmp_path / "x.jsonl", [rec]))

    def test_blank_lines_skipped_and_order_kept(self, tmp_path):
        path = tmp_path / "o.jsonl"
        recs = [{"id": i, "text": "t", "speaker": "S", "date": "2001-01-01"} for i in ("z", "a", "m")]
        path.write_text("\n".join(json.dumps(r) for r in recs) + "\n\n", encoding="utf-8")
        assert [d.id for d in load_jsonl(path)] == ["z", "a", "m"]

    def test_roundtrip(self, tmp_path):
        docs = [
            SpeechDoc("a", "S", date(2001, 2, 3), "H", "DEM", "hello there"),
            SpeechDoc("b", "T", date(2002, 4, 5), "S", None, None, ("x", "y")),
        ]
        path = tmp_path / "r.jsonl"
        assert write_jsonl(docs, path) == 2
        assert load_jsonl(path) == docs


class TestTranscripts:
    def test_three_speeches(self):
        docs = parse_transcript(HEADER + "ALICE: good morning\nBOB: I object\nALICE: noted\n")
        assert [d.speaker for d in docs] == ["ALICE", "BOB", "ALICE"]
        assert [d.id for d in docs] == ["2001-05-01-S-1", "2001-05-01-S-2", "2001-05-01-S-3"]
        assert {d.date for d in docs} == {date(2001, 5, 1)}

    def test_continuation_lines_joined(self):
        (doc,) = parse_transcript(HEADER + "ALICE: line one\nline two\n")
        assert doc.text == "line one line two"

    def test_empty_input(self):
        assert parse_transcript("") == []

    def test_rules_supply_metadata(self):
        rules = TranscriptRules(date="1999-12-31", chamber="H")
        (doc,) = parse_transcript("BOB: hi\n", rules)
        assert doc.id == "1999-12-31-H-1"

    def test_missing_metadata(self):
        with pytest.raises(IngestError, match="date"):
            parse_transcript("BOB: hi\n")

    def test_preamble_rejected(self):
        with pytest.raises(IngestError, match="before any speaker"):
            parse_transcript(HEADER + "call to order\nALICE: hi\n")

    def test_preamble_dropped_and_counted(self):
        parsed = split_transcript(
            HEADER + "call to order\nprayer\nALICE: hi\n", TranscriptRules(allow_preamble=True)
        )
        assert parsed.dropped_preamble_lines == 2
        assert [d.text for d in parsed.docs] == ["hi"]

    def test_start_seq(self):
        parsed = split_transcript(HEADER + "A: x\nB: y\n", start_seq=5)
        assert [d.id for d in parsed.docs] == ["2001-05-01-S-5", "2001-05-01-S-6"]


_names = st.sampled_from(["ALICE", "BOB", "CAROL", "MR. DAN"])
_words = st.lists(st.text(alphabet="abcxyz019 ,.", min_size=1, max_size=12).map(str.strip).filter(bool), max_size=3)


@given(st.lists(st.tuples(_names, _words), max_size=8))
def test_split_preserves_text_and_count(speeches):
    raw = HEADER + "".join(f"{name}: " + "\n".join(lines) + "\n" for name, lines in speeches)
    docs = parse_transcript(raw)
    assert len(docs) == len(speeches)
    original = "".join("".join("".join(lines).split()) for _, lines in speeches)
    rebuilt = "".join("".join(d.text.split()) for d in docs)
    assert rebuilt == original


class TestSpeakers:
    def test_normalize(self):
        assert normalize_speaker("  mr.   John   smith ") == "JOHN SMITH"
        assert normalize_speaker("MRS. JONES") == "JONES"

    def test_direct_lookup(self):
        docs = [SpeechDoc("a", "SMITH", date(2008, 3, 4))]
        out, unmatched = join_metadata(docs, [SpeakerRecord("SMITH", "REP")])
        assert out[0].party == "REP"
        assert unmatched == 0

    def test_party_switch(self):
        table = [
            SpeakerRecord("SPECTER", "REP", None, date(2009, 4, 30)),
            SpeakerRecord("SPECTER", "DEM", date(2009, 5, 1), None),
        ]
        docs = [SpeechDoc("a", "SPECTER", date(2009, 6, 1)), SpeechDoc("b", "SPECTER", date(2009, 4, 30))]
        out, _ = join_metadata(docs, table)
        assert [d.party for d in out] == ["DEM", "REP"]

    def test_unmatched(self):
        out, unmatched = join_metadata([SpeechDoc("a", "CLERK", date(2009, 1, 1))], [])
        assert out[0].party == UNKNOWN_PARTY
        assert unmatched == 1

    def test_existing_party_kept(self):
        docs = [SpeechDoc("a", "SMITH", date(2008, 1, 1), party="IND")]
        out, unmatched = join_metadata(docs, [SpeakerRecord("SMITH", "REP")])
        assert out[0].party == "IND"
        assert unmatched == 0

    def test_idempotent(self):
        table = [SpeakerRecord("SMITH", "REP")]
        docs = [SpeechDoc("a", "SMITH", date(2008, 1, 1)), SpeechDoc("b", "CLERK", date(2008, 1, 1))]
        once, _ = join_metadata(docs, table)
        twice, unmatched = join_metadata(once, table)
        assert twice == once
        assert unmatched == 0

    def test_overlap_rejected(self):
        with pytest.raises(IngestError, match="overlapping"):
            SpeakerTable([
                SpeakerRecord("X", "A", None, date(2005, 1, 1)),
                SpeakerRecord("X", "B", date(2005, 1, 1), None),
            ])

    def test_tsv(self, tmp_path):
        path = tmp_path / "speakers.tsv"
        path.write_text(
            "speaker_key\tparty\tvalid_from\tvalid_to\n"
            "SPECTER\tREP\t\t2009-04-30\n"
            "SPECTER\tDEM\t2009-05-01\t\n"
            "Mr. Smith\tREP\t\t\n",
            encoding="utf-8",
        )
        table = SpeakerTable(load_speaker_table(path))
        assert len(table) == 3
        assert table.lookup("SMITH", date(1990, 1, 1)) == "REP"
        assert table.lookup("specter", date(2009, 5, 1)) == "DEM"

    def test_tsv_missing_column(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("name\tparty\nX\tY\n", encoding="utf-8")
        with pytest.raises(IngestError, match="speaker_key"):
            load_speaker_table(path)
