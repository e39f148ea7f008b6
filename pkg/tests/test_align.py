import warnings

import pytest
from hypothesis import given, strategies as st

from tokentiming.align import (
    AlignmentParseError,
    AlignmentSeq,
    OverlapClippedWarning,
    ProjectionError,
    WordSpan,
    format_textgrid,
    normalize_text,
    parse_textgrid,
    parse_word_alignment,
    project_to_axis,
)


def textgrid(intervals, name="words", extra_tier=None):
    """Build a long-format TextGrid with one or two interval tiers."""
    tiers = [(name, intervals)] + ([extra_tier] if extra_tier else [])
    end = max(hi for _, ivs in tiers for _, _, hi in ivs) if any(ivs for _, ivs in tiers) else 0
    out = ['File type = "ooTextFile"', 'Object class = "TextGrid"', "", "xmin = 0", f"xmax = {end}",
           "tiers? <exists>", f"size = {len(tiers)}", "item []:"]
    for i, (nm, ivs) in enumerate(tiers, 1):
        out += [f"    item [{i}]:", '        class = "IntervalTier"', f'        name = "{nm}"',
                "        xmin = 0", f"        xmax = {end}", f"        intervals: size = {len(ivs)}"]
        for k, (label, lo, hi) in enumerate(ivs, 1):
            out += [f"        intervals [{k}]:", f"            xmin = {lo}", f"            xmax = {hi}",
                    f'            text = "{label}"']
    return "\n".join(out) + "\n"


class TestNormalize:
    def test_english(self):
        assert normalize_text("Hello, World!").text == "helloworld"

    def test_empty(self):
        assert normalize_text("") == ("", [])

    def test_chinese_punctuation_dropped(self):
        assert normalize_text("前方路口左转。").text == "前方路口左转"

    def test_index_map(self):
        norm = normalize_text("a, B")
        assert norm.text == "ab"
        assert norm.index_map == [0, 1, 1, 1]

    def test_extension_block_dropped_by_default(self):
        assert normalize_text("\U00020000x").text == "x"

    def test_non_ascii_letters_dropped(self):
        assert normalize_text("café").text == "caf"

    @given(st.text())
    def test_idempotent_and_alphabet(self, raw):
        norm = normalize_text(raw)
        assert normalize_text(norm.text).text == norm.text
        assert all((c.isascii() and c.isalnum() and not c.isupper()) or 0x4E00 <= ord(c) <= 0x9FFF
                   for c in norm.text)

    @given(st.text())
    def test_map_monotone_and_lands_on_copy(self, raw):
        norm = normalize_text(raw)
        assert norm.index_map == sorted(norm.index_map)
        for i, ch in enumerate(raw):
            if normalize_text(ch).text:
                assert norm.text[norm.index_map[i]] == normalize_text(ch).text


class TestWordRecords:
    def test_two_words(self):
        seq = parse_word_alignment("#utterance=u1\nhi\t0.00\t0.30\nthere\t0.35\t0.80\n")
        assert seq.utterance_id == "u1"
        assert seq.words == (WordSpan("hi", 0.0, 0.3), WordSpan("there", 0.35, 0.8))

    def test_headers(self):
        seq = parse_word_alignment("#utterance=u\n#text=Hi there.\n#end=1.5\nhi\t0\t0.3\n")
        assert seq.text == "Hi there."
        assert seq.end_s == 1.5

    def test_end_before_start(self):
        with pytest.raises(AlignmentParseError) as err:
            parse_word_alignment("#utterance=u\nhi\t0.5\t0.3\n")
        assert err.value.line == 2

    def test_small_overlap_clipped(self):
        with pytest.warns(OverlapClippedWarning):
            seq = parse_word_alignment("#utterance=u\na\t0.0\t0.300\nb\t0.295\t0.6\n")
        assert seq.words[1].start_s == 0.3

    def test_large_overlap_rejected(self):
        with pytest.raises(AlignmentParseError):
            parse_word_alignment("#utterance=u\na\t0.0\t0.300\nb\t0.280\t0.6\n")

    def test_negative_time(self):
        with pytest.raises(AlignmentParseError):
            parse_word_alignment("#utterance=u\na\t-0.1\t0.3\n")

    def test_missing_field(self):
        with pytest.raises(AlignmentParseError) as err:
            parse_word_alignment("#utterance=u\na\t0.1\n")
        assert err.value.line == 2

    def test_missing_header(self):
        with pytest.raises(AlignmentParseError):
            parse_word_alignment("a\t0.1\t0.2\n")

    def test_non_numeric(self):
        with pytest.raises(AlignmentParseError):
            parse_word_alignment("#utterance=u\na\tzero\t0.2\n")

    def test_no_clip_warning_when_disjoint(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            parse_word_alignment("#utterance=u\na\t0\t0.3\nb\t0.3\t0.6\n")


class TestTextGrid:
    def test_silence_excluded(self):
        seq = parse_textgrid(textgrid([("", 0, 0.1), ("word", 0.1, 0.5)]))
        assert seq.words == (WordSpan("word", 0.1, 0.5),)
        assert seq.end_s == 0.5

    @pytest.mark.parametrize("label", ["sil", "sp", "spn", "SIL"])
    def test_silence_markers(self, label):
        seq = parse_textgrid(textgrid([(label, 0, 0.2), ("a", 0.2, 0.4), (label, 0.4, 0.9)]))
        assert [w.surface for w in seq.words] == ["a"]

    def test_missing_tier_lists_available(self):
        with pytest.raises(AlignmentParseError, match="phones"):
            parse_textgrid(textgrid([("a", 0, 1)], name="phones"), tier_name="words")

    def test_second_tier(self):
        data = textgrid([("a", 0, 1)], name="phones", extra_tier=("words", [("x", 0, 0.5), ("", 0.5, 1)]))
        assert [w.surface for w in parse_textgrid(data).words] == ["x"]

    def test_short_format_rejected(self):
        short = 'File type = "ooTextFile"\nObject class = "TextGrid"\n\n0\n1\n<exists>\n1\n"IntervalTier"\n"words"\n0\n1\n1\n0\n1\n"a"\n'
        with pytest.raises(AlignmentParseError):
            parse_textgrid(short)

    def test_xmax_below_xmin(self):
        with pytest.raises(AlignmentParseError):
            parse_textgrid(textgrid([("a", 0.5, 0.2)]))

    def test_incomplete_interval(self):
        bad = textgrid([("a", 0, 0.5)]).replace("            text = \"a\"\n", "")
        with pytest.raises(AlignmentParseError):
            parse_textgrid(bad)

    def test_not_a_textgrid(self):
        with pytest.raises(AlignmentParseError):
            parse_textgrid("hello\n")

    def test_quoted_quotes(self):
        seq = parse_textgrid(textgrid([('say ""hi""', 0, 1)]))
        assert seq.words[0].surface == 'say "hi"'

    def test_format_round_trip(self):
        seq = AlignmentSeq("u", (WordSpan("a", 0.1, 0.4), WordSpan("b", 0.55, 0.9)), "B", None, 1.2)
        back = parse_textgrid(format_textgrid(seq), utterance_id="u")
        assert back.words == seq.words
        assert back.end_s == 1.2


class TestProjection:
    def test_english(self):
        seq = AlignmentSeq("u", (WordSpan("Hello,", 0, 0.3), WordSpan("world", 0.3, 0.6)))
        spans = project_to_axis(seq, "helloworld")
        assert [(s.char_begin, s.char_end) for s in spans] == [(0, 5), (5, 10)]

    def test_punctuation_word_dropped(self):
        seq = AlignmentSeq("u", (WordSpan("hi", 0, 0.3), WordSpan("—", 0.3, 0.4), WordSpan("yo", 0.4, 0.6)))
        spans = project_to_axis(seq, "hiyo")
        assert [(s.char_begin, s.char_end) for s in spans] == [(0, 2), (2, 4)]

    def test_unmatched_word(self):
        seq = AlignmentSeq("u", (WordSpan("hello", 0, 0.3), WordSpan("worldz", 0.3, 0.6)))
        with pytest.raises(ProjectionError) as err:
            project_to_axis(seq, "helloworld")
        assert err.value.word_index == 1

    def test_earliest_match_after_cursor(self):
        seq = AlignmentSeq("u", (WordSpan("ab", 0, 0.1), WordSpan("ab", 0.1, 0.2)))
        spans = project_to_axis(seq, "abxab")
        assert [(s.char_begin, s.char_end) for s in spans] == [(0, 2), (3, 5)]

    @given(st.lists(st.text(alphabet="abc前方,. ", min_size=1, max_size=4).filter(str.strip), max_size=8))
    def test_projection_covers_concatenation(self, surfaces):
        words = tuple(WordSpan(s, i * 0.1, i * 0.1 + 0.1) for i, s in enumerate(surfaces))
        axis = normalize_text("".join(surfaces)).text
        spans = project_to_axis(AlignmentSeq("u", words), axis)
        begins = [s.char_begin for s in spans]
        assert begins == sorted(set(begins))
        covered = "".join(axis[s.char_begin:s.char_end] for s in spans)
        assert covered == "".join(normalize_text(s).text for s in surfaces)


def test_overlapping_alignment_rejected():
    with pytest.raises(ValueError):
        AlignmentSeq("u", (WordSpan("a", 0, 0.5), WordSpan("b", 0.4, 0.6)))
