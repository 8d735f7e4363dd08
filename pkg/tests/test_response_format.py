import numpy as np
import pytest

from wmeval.errors import ParameterError
from wmeval.response_format import (CATEGORIES, CATEGORY_LOSSLESS,
                                    CATEGORY_RESIDUAL, CATEGORY_RING,
                                    FailureReason, FormatVerdict,
                                    ParsedResponse, TYPE_BY_CATEGORY, check,
                                    measure_length, parse, serialize)

RESIDUAL_TEXT = (
    "<think>the high-frequency residue forms a faint block grid, PSNR looks "
    "midrange, and the payload survives recompression</think>\n"
    "<type>residual watermark</type>\n"
    "<quality>2.72</quality>\n"
    "<jpeg>1</jpeg>\n"
    "<gaussian>1</gaussian>\n"
    "<filter>1</filter>")

LOSSLESS_TEXT = (
    "<think>latents look indistinguishable from a standard normal draw "
    "across all three tests</think>\n"
    "<type>watermark-free or performance-lossless semantic watermark</type>\n"
    "<quality>3</quality>\n"
    "<security>3</security>")

RING_TEXT = (
    "<think>the latent spectrum shows concentric ring energy, a strong "
    "distributional signature</think>\n"
    "<type>semantic watermark with ring patterns</type>\n"
    "<quality>1</quality>\n"
    "<security>1</security>")


class TestParseValid:
    def test_residual_fields(self):
        r = parse(RESIDUAL_TEXT)
        assert isinstance(r, ParsedResponse)
        assert r.category == CATEGORY_RESIDUAL
        assert r.residual_quality == 2.72
        assert (r.jpeg, r.gaussian, r.filter) == (1, 1, 1)
        assert r.semantic_quality is None and r.semantic_security is None
        assert r.raw_length == len(RESIDUAL_TEXT)

    def test_lossless_fields(self):
        r = parse(LOSSLESS_TEXT)
        assert r.category == CATEGORY_LOSSLESS
        assert (r.semantic_quality, r.semantic_security) == (3, 3)
        assert r.residual_quality is None

    def test_ring_fields(self):
        r = parse(RING_TEXT)
        assert r.category == CATEGORY_RING
        assert (r.semantic_quality, r.semantic_security) == (1, 1)

    def test_whitespace_between_blocks_is_free(self):
        squeezed = RESIDUAL_TEXT.replace("\n", "")
        spaced = RESIDUAL_TEXT.replace("\n", "\n\n   \t")
        assert parse(squeezed) == parse(RESIDUAL_TEXT)
        assert parse(spaced) == parse(RESIDUAL_TEXT)

    def test_value_whitespace_trimmed(self):
        text = RESIDUAL_TEXT.replace("<quality>2.72</quality>",
                                     "<quality>  2.72 </quality>")
        assert parse(text).residual_quality == 2.72

    def test_unknown_angle_text_in_think_is_fine(self):
        text = RESIDUAL_TEXT.replace("block grid", "block <grid> a<b")
        r = parse(text)
        assert isinstance(r, ParsedResponse)
        assert "<grid>" in r.think


def _reason(text) -> FailureReason:
    verdict = check(text)
    assert not verdict.ok
    return verdict.failure_reason


class TestParseFailures:
    def test_empty_and_junk(self):
        assert _reason("") == FailureReason.MISSING_TAG
        assert _reason("   \n ") == FailureReason.MISSING_TAG
        assert _reason("free prose with no tags") == FailureReason.STRAY_TEXT

    def test_missing_tags(self):
        assert _reason("<think>a</think>") == FailureReason.MISSING_TAG
        assert _reason(RESIDUAL_TEXT.replace("<filter>1</filter>", "")) == \
            FailureReason.MISSING_TAG
        assert _reason("<think>a") == FailureReason.MISSING_TAG

    def test_duplicate_tags(self):
        assert _reason(RESIDUAL_TEXT + "\n<filter>1</filter>") == \
            FailureReason.DUPLICATE_TAG
        doubled = RESIDUAL_TEXT.replace("<jpeg>1</jpeg>",
                                        "<jpeg>1</jpeg><jpeg>1</jpeg>")
        assert _reason(doubled) == FailureReason.DUPLICATE_TAG

    def test_wrong_tag_set(self):
        mixed = LOSSLESS_TEXT.replace("<security>3</security>",
                                      "<jpeg>1</jpeg>")
        assert _reason(mixed) == FailureReason.WRONG_TAG_SET
        trailing = RESIDUAL_TEXT + "\n<security>1</security>"
        assert _reason(trailing) == FailureReason.WRONG_TAG_SET

    def test_tag_order(self):
        swapped = ("<type>residual watermark</type>"
                   "<think>a</think><quality>2.00</quality>"
                   "<jpeg>1</jpeg><gaussian>1</gaussian><filter>1</filter>")
        assert _reason(swapped) == FailureReason.TAG_ORDER
        inverted = RESIDUAL_TEXT.replace(
            "<gaussian>1</gaussian>\n<filter>1</filter>",
            "<filter>1</filter>\n<gaussian>1</gaussian>")
        assert _reason(inverted) == FailureReason.TAG_ORDER
        assert _reason("</think>a<think>") == FailureReason.TAG_ORDER

    def test_stray_text(self):
        assert _reason(RESIDUAL_TEXT + "\nso the verdict is clear") == \
            FailureReason.STRAY_TEXT
        between = RESIDUAL_TEXT.replace("</type>\n", "</type>\nnote:\n")
        assert _reason(between) == FailureReason.STRAY_TEXT

    def test_unparseable_values(self):
        assert _reason(RESIDUAL_TEXT.replace("2.72", "fine")) == \
            FailureReason.UNPARSEABLE_VALUE
        assert _reason(RESIDUAL_TEXT.replace("2.72", "2.725")) == \
            FailureReason.UNPARSEABLE_VALUE
        assert _reason(RESIDUAL_TEXT.replace("2.72", "-2.72")) == \
            FailureReason.UNPARSEABLE_VALUE
        assert _reason(LOSSLESS_TEXT.replace(
            "or performance-lossless", "or performance lossless")) == \
            FailureReason.UNPARSEABLE_VALUE
        assert _reason(RESIDUAL_TEXT.replace("<jpeg>1", "<jpeg>yes")) == \
            FailureReason.UNPARSEABLE_VALUE
        empty_think = RESIDUAL_TEXT.replace(
            RESIDUAL_TEXT[len("<think>"):RESIDUAL_TEXT.index("</think>")],
            "   ")
        assert _reason(empty_think) == FailureReason.UNPARSEABLE_VALUE

    def test_out_of_range_values(self):
        assert _reason(RESIDUAL_TEXT.replace("2.72", "5.31")) == \
            FailureReason.OUT_OF_RANGE
        assert _reason(RESIDUAL_TEXT.replace("2.72", "0.99")) == \
            FailureReason.OUT_OF_RANGE
        assert _reason(RESIDUAL_TEXT.replace("<jpeg>1", "<jpeg>2")) == \
            FailureReason.OUT_OF_RANGE
        assert _reason(LOSSLESS_TEXT.replace("<quality>3", "<quality>4")) == \
            FailureReason.OUT_OF_RANGE
        assert _reason(LOSSLESS_TEXT.replace("<security>3", "<security>0")) == \
            FailureReason.OUT_OF_RANGE

    def test_semantic_quality_must_be_integer(self):
        assert _reason(LOSSLESS_TEXT.replace("<quality>3", "<quality>2.5")) == \
            FailureReason.UNPARSEABLE_VALUE

    def test_never_raises_on_junk(self):
        rng = np.random.default_rng(0)
        alphabet = list("<>/thinkypequaljg 0123456789.\né中")
        for _ in range(500):
            n = int(rng.integers(0, 120))
            text = "".join(rng.choice(alphabet, size=n))
            verdict = check(text)
            assert isinstance(verdict, FormatVerdict)
            assert not verdict.ok


class TestSerialize:
    def test_round_trip_examples(self):
        for text in (RESIDUAL_TEXT, LOSSLESS_TEXT, RING_TEXT):
            first = parse(text)
            again = parse(serialize(first))
            assert again == first

    def test_quality_always_two_decimals(self):
        resp = ParsedResponse(think="t", category=CATEGORY_RESIDUAL,
                              residual_quality=3.0, jpeg=0, gaussian=1,
                              filter=0)
        assert "<quality>3.00</quality>" in serialize(resp)

    def test_serialized_semantic_shape(self):
        resp = ParsedResponse(think="why", category=CATEGORY_RING,
                              semantic_quality=2, semantic_security=2)
        text = serialize(resp)
        assert text.splitlines()[1] == \
            f"<type>{TYPE_BY_CATEGORY[CATEGORY_RING]}</type>"
        assert parse(text) == resp

    def test_random_round_trips(self):
        rng = np.random.default_rng(42)
        for i in range(200):
            category = CATEGORIES[int(rng.integers(3))]
            think = "reasoning " * int(rng.integers(1, 30))
            if category == CATEGORY_RESIDUAL:
                resp = ParsedResponse(
                    think=think.strip(), category=category,
                    residual_quality=round(float(rng.uniform(1, 5)), 2),
                    jpeg=int(rng.integers(2)), gaussian=int(rng.integers(2)),
                    filter=int(rng.integers(2)))
            else:
                resp = ParsedResponse(
                    think=think.strip(), category=category,
                    semantic_quality=int(rng.integers(1, 4)),
                    semantic_security=int(rng.integers(1, 4)))
            assert parse(serialize(resp)) == resp


class TestParsedResponseInvariants:
    def test_wrong_field_mix_rejected(self):
        with pytest.raises(ParameterError):
            ParsedResponse(think="e", category=CATEGORY_RESIDUAL,
                           residual_quality=2.0, jpeg=1, gaussian=1, filter=1,
                           semantic_quality=2)
        with pytest.raises(ParameterError):
            ParsedResponse(think="e", category=CATEGORY_RING,
                           semantic_quality=1, semantic_security=1, jpeg=0)
        with pytest.raises(ParameterError):
            ParsedResponse(think="e", category=CATEGORY_RESIDUAL,
                           residual_quality=2.0, jpeg=1, gaussian=1)

    def test_quality_precision_enforced(self):
        with pytest.raises(ParameterError):
            ParsedResponse(think="e", category=CATEGORY_RESIDUAL,
                           residual_quality=2.725, jpeg=1, gaussian=1,
                           filter=1)

    def test_think_restrictions(self):
        with pytest.raises(ParameterError):
            ParsedResponse(think="", category=CATEGORY_RING,
                           semantic_quality=1, semantic_security=1)
        with pytest.raises(ParameterError):
            ParsedResponse(think="a <security> b", category=CATEGORY_RING,
                           semantic_quality=1, semantic_security=1)

    def test_raw_length_ignored_by_equality(self):
        a = parse(RING_TEXT)
        b = parse("  " + RING_TEXT)
        assert a == b and a.raw_length != b.raw_length


class TestMeasureLength:
    def test_fixtures(self):
        assert measure_length("") == 0
        assert measure_length("abc def") == 7
        assert measure_length("abc def", "words") == 2
        assert measure_length(RESIDUAL_TEXT) == len(RESIDUAL_TEXT)

    def test_unknown_mode(self):
        with pytest.raises(ParameterError):
            measure_length("x", "tokens")
