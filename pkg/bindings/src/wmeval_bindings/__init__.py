"""Batch scoring boundary for external training loops.

The host runtime hands over plain lists and mappings and gets plain
lists of records back. Per-item problems (an uninterpretable ground
truth label) come back as ``{"error": message}`` records in place, so
one poisoned row cannot abort a whole rollout batch; only batch-level
misuse (mismatched lengths, a bad config mapping) raises.

Both functions are stateless and reentrant: no module-level mutable
state, safe to call from concurrent host threads.
"""

import dataclasses

from wmeval import (RewardConfig, WmevalError, ground_truth_from_record,
                    group_advantages, total_reward)

__all__ = ["batch_reward", "batch_advantages"]
__version__ = "0.1.0"

_CONFIG_FIELDS = frozenset(f.name for f in dataclasses.fields(RewardConfig))


def _reward_config(config: dict | None) -> RewardConfig:
    if config is None:
        return RewardConfig()
    unknown = sorted(set(config) - _CONFIG_FIELDS)
    if unknown:
        raise ValueError(f"unknown reward config fields: {unknown}")
    return RewardConfig(**config)


def batch_reward(responses: list, ground_truths: list,
                 config: dict | None = None) -> list:
    """Score raw response texts against ground-truth label records.

    ``ground_truths`` holds one plain mapping per response (``category``
    plus the label fields for that category); ``config`` optionally
    overrides reward settings by field name. Returns one record per
    response, order preserved: either the breakdown fields (``total``,
    ``format_ok``, ``category_ok``, ``r_len``, ``r_qual``, ``r_sec``)
    or ``{"error": message}`` when the label record is unusable.
    """
    if len(responses) != len(ground_truths):
        raise ValueError(f"got {len(responses)} responses but "
                         f"{len(ground_truths)} ground truths")
    cfg = _reward_config(config)
    out = []
    for text, record in zip(responses, ground_truths):
        try:
            bd = total_reward(text, ground_truth_from_record(record), cfg)
        except WmevalError as exc:
            out.append({"error": str(exc)})
            continue
        out.append({"total": bd.total, "format_ok": bd.format_ok,
                    "category_ok": bd.category_ok, "r_len": bd.r_len,
                    "r_qual": bd.r_qual, "r_sec": bd.r_sec})
    return out


def batch_advantages(rewards: list, group_size: int) -> list:
    """Group-standardize a flat reward list, ``group_size`` items at a
    time, and return the concatenated per-group results."""
    if group_size < 2:
        raise ValueError("group_size must be at least 2")
    if len(rewards) % group_size:
        raise ValueError(f"reward count {len(rewards)} is not divisible "
                         f"by group size {group_size}")
    out = []
    for start in range(0, len(rewards), group_size):
        group = rewards[start:start + group_size]
        out.extend(float(a) for a in group_advantages(group))
    return out
