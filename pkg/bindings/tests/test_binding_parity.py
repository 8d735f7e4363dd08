"""Parity and boundary-contract tests for the batch scoring package."""

import concurrent.futures
import json
import math
import random
import time
from pathlib import Path

import pytest

from wmeval import (RewardConfig, ground_truth_from_record, group_advantages,
                    total_reward)
from wmeval.response_format import (CATEGORIES, CATEGORY_RESIDUAL,
                                    ParsedResponse, serialize)
from wmeval_bindings import batch_advantages, batch_reward

FIXTURES = Path(__file__).resolve().parents[2] / "tests" / "data" \
    / "reward_fixtures.jsonl"

BREAKDOWN_KEYS = {"total", "format_ok", "category_ok", "r_len", "r_qual",
                  "r_sec"}


def _rows():
    return [json.loads(line)
            for line in FIXTURES.read_text().splitlines() if line.strip()]


def _close(a, b):
    if a is None or b is None:
        return a is b
    return math.isclose(a, b, rel_tol=0.0, abs_tol=1e-12)


def _random_text(rng: random.Random) -> str:
    category = CATEGORIES[rng.randrange(3)]
    think = "sample reasoning " * rng.randrange(1, 30)
    if category == CATEGORY_RESIDUAL:
        resp = ParsedResponse(think=think.strip(), category=category,
                              residual_quality=round(
                                  1 + rng.randrange(0, 401) / 100.0, 2),
                              jpeg=rng.randrange(2),
                              gaussian=rng.randrange(2),
                              filter=rng.randrange(2))
    else:
        resp = ParsedResponse(think=think.strip(), category=category,
                              semantic_quality=rng.randrange(1, 4),
                              semantic_security=rng.randrange(1, 4))
    text = serialize(resp)
    u = rng.random()
    if u < 0.3:
        cut = rng.randrange(len(text))
        text = text[:cut] + text[cut + 1:]
    elif u < 0.4:
        text = text[:rng.randrange(len(text))]
    return text


def _random_gt(rng: random.Random) -> dict:
    if rng.random() < 0.5:
        return {"category": "residual",
                "quality": round(1 + rng.randrange(0, 401) / 100.0, 2),
                "jpeg": rng.randrange(2), "gaussian": rng.randrange(2),
                "filter": rng.randrange(2)}
    category = ("lossless_semantic", "ring_semantic")[rng.randrange(2)]
    return {"category": category, "quality": rng.randrange(1, 4),
            "security": rng.randrange(1, 4)}


class TestBatchReward:
    def test_fixture_parity(self):
        rows = _rows()
        assert len(rows) >= 12
        got = batch_reward([r["text"] for r in rows],
                           [r["gt"] for r in rows])
        totals = set()
        for row, rec in zip(rows, got):
            bd = total_reward(row["text"],
                              ground_truth_from_record(row["gt"]))
            assert set(rec) == BREAKDOWN_KEYS, row["note"]
            assert rec["format_ok"] == bd.format_ok
            assert rec["category_ok"] == bd.category_ok
            assert _close(rec["total"], bd.total), row["note"]
            assert _close(rec["r_len"], bd.r_len), row["note"]
            assert _close(rec["r_qual"], bd.r_qual), row["note"]
            assert _close(rec["r_sec"], bd.r_sec), row["note"]
            totals.add(rec["total"])
        # the shared file must keep exercising all three outcome branches
        assert -10.0 in totals and 0.0 in totals
        assert any(1.0 <= t <= 4.0 for t in totals)

    def test_large_batch_matches_single_calls(self):
        rng = random.Random(4242)
        texts = [_random_text(rng) for _ in range(10_000)]
        records = [_random_gt(rng) for _ in range(10_000)]
        started = time.monotonic()
        got = batch_reward(texts, records)
        assert time.monotonic() - started < 60.0
        assert len(got) == 10_000
        for text, record, rec in zip(texts, records, got):
            bd = total_reward(text, ground_truth_from_record(record))
            assert rec["total"] == bd.total
            assert rec["format_ok"] == bd.format_ok
            assert rec["category_ok"] == bd.category_ok
            assert rec["r_len"] == bd.r_len
            assert rec["r_qual"] == bd.r_qual
            assert rec["r_sec"] == bd.r_sec

    def test_empty_batch(self):
        assert batch_reward([], []) == []

    def test_order_preserved(self):
        rows = _rows()
        texts = [r["text"] for r in rows]
        records = [r["gt"] for r in rows]
        forward = batch_reward(texts, records)
        backward = batch_reward(texts[::-1], records[::-1])
        assert forward == backward[::-1]

    def test_per_item_error_records(self):
        rows = _rows()
        good = rows[0]
        texts = [good["text"]] * 4
        records = [good["gt"], {"category": "nope"},
                   {"category": "residual", "quality": 3.0}, None]
        got = batch_reward(texts, records)
        assert set(got[0]) == BREAKDOWN_KEYS
        bd = total_reward(good["text"],
                          ground_truth_from_record(good["gt"]))
        assert got[0]["total"] == bd.total
        for rec in got[1:]:
            assert set(rec) == {"error"}
            assert isinstance(rec["error"], str) and rec["error"]

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError, match="ground truths"):
            batch_reward(["x"], [])

    def test_unknown_config_field_raises(self):
        rows = _rows()
        with pytest.raises(ValueError, match="unknown reward config"):
            batch_reward([rows[0]["text"]], [rows[0]["gt"]],
                         {"bogus_knob": 1})

    def test_config_override_flows_through(self):
        got = batch_reward(["not a response"],
                           [{"category": "ring_semantic", "quality": 1,
                             "security": 1}],
                           {"format_penalty": -3.0})
        assert got[0]["total"] == -3.0
        assert got[0]["format_ok"] is False

    def test_reentrant_under_threads(self):
        rng = random.Random(7)
        texts = [_random_text(rng) for _ in range(200)]
        records = [_random_gt(rng) for _ in range(200)]
        serial = batch_reward(texts, records)
        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
            futures = [pool.submit(batch_reward, texts, records)
                       for _ in range(16)]
            for future in futures:
                assert future.result() == serial


class TestBatchAdvantages:
    def test_single_group_fixture(self):
        got = batch_advantages([0.0, 4.0], 2)
        assert got == pytest.approx([-1.0, 1.0], abs=1e-9)

    def test_constant_group_is_zero(self):
        assert batch_advantages([2.5, 2.5, 2.5], 3) == [0.0, 0.0, 0.0]

    def test_groups_are_independent(self):
        first = [0.0, 4.0, 2.0, 1.0]
        second = [9.0, 1.0, 5.0, 5.0]
        combined = batch_advantages(first + second, 4)
        assert combined[:4] == batch_advantages(first, 4)
        assert combined[4:] == batch_advantages(second, 4)

    def test_matches_primary_per_group(self):
        rng = random.Random(11)
        rewards = [rng.uniform(-10, 4) for _ in range(64)]
        got = batch_advantages(rewards, 8)
        for g in range(8):
            chunk = rewards[8 * g:8 * (g + 1)]
            want = [float(a) for a in group_advantages(chunk)]
            assert got[8 * g:8 * (g + 1)] == pytest.approx(want, abs=1e-12)

    def test_empty_list(self):
        assert batch_advantages([], 4) == []

    def test_indivisible_length_raises(self):
        with pytest.raises(ValueError, match="not divisible"):
            batch_advantages([1.0, 2.0, 3.0], 2)

    def test_small_group_size_raises(self):
        with pytest.raises(ValueError, match="group_size"):
            batch_advantages([1.0, 2.0], 1)

    def test_outputs_are_plain_floats(self):
        got = batch_advantages([0.0, 4.0], 2)
        assert all(type(a) is float for a in got)
